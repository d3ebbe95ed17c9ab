use rayon::prelude::*;

use super::*;
use crate::polaritons::polariton_modes;
use crate::simulate::{synthesize_spectrum, SnrModel};

fn base() -> ModelParams {
    ModelParams::experiment().with_n_bath(1e4)
}

fn axis() -> Vec<f64> {
    (1..=250).map(|k| k as f64 * 2e3).collect()
}

fn spectrum(p: &ModelParams, averages: Option<u32>, seed: u64) -> SpectrumGrid {
    let floor = 1e-3 * psd_xx_one_sided_hz(p.omega_x / TAU, p, 1.0).unwrap();
    synthesize_spectrum(p, &axis(), &SnrModel { averages, floor, x_zpf: 1.0 }, seed).unwrap()
}

fn scan_data(g: f64, averages: Option<u32>, seed: u64) -> Vec<(SpectrumGrid, f64)> {
    let b = base();
    [0.7, 0.85, 1.0, 1.15, 1.3, 1.5]
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let p = b.with_g(g).with_detuning(r * b.omega_x);
            (spectrum(&p, averages, seed * 100 + i as u64), p.detuning)
        })
        .collect()
}

#[test]
fn lossless_peak_formula_is_exact() {
    let p = base().with_kappa(1e-9).with_gamma(0.0).with_g(0.3 * base().omega_x);
    let m = polariton_modes(&p.with_kappa(0.0)).unwrap();
    let g = coupling_from_peaks(p.omega_x, p.detuning, m.upper.re, m.lower.re).unwrap();
    assert!((g / p.g - 1.0).abs() < 1e-9, "{g}");
    assert!(coupling_from_peaks(p.omega_x, p.detuning, p.omega_x, p.omega_x).is_none());
}

#[test]
fn noiseless_single_round_trip() {
    let b = base();
    let g = 0.35 * b.omega_x;
    let grid = spectrum(&b.with_g(g), None, 0);
    let mut prob = build_problem(vec![(grid, b.detuning)], &b, 0.5 * g, None).unwrap();
    prob.spectra[0].scale.value *= 3.0;
    let r = fit_single(&prob).unwrap();
    assert!(r.converged);
    assert!((r.g().unwrap().value / g - 1.0).abs() < 1e-6, "{:?}", r.g());
    assert!((r.get("scale[0]").unwrap().value - 1.0).abs() < 1e-5);
}

#[test]
fn starting_at_truth_takes_at_most_two_iterations() {
    let b = base();
    let g = 0.35 * b.omega_x;
    let grid = spectrum(&b.with_g(g), None, 0);
    let mut prob = build_problem(vec![(grid.clone(), b.detuning)], &b, g, None).unwrap();
    prob.options.coarse_search = false;
    prob.spectra[0].scale.value = 1.0;
    prob.spectra[0].floor.value = grid.values[0] - psd_xx_one_sided_hz(grid.freqs[0], &b.with_g(g), 1.0).unwrap();
    let r = fit_single(&prob).unwrap();
    assert!(r.n_iter <= 2, "{}", r.n_iter);
}

#[test]
fn scan_recovers_from_doubled_start() {
    let b = base();
    let g = 0.35 * b.omega_x;
    let mut prob = build_problem(scan_data(g, None, 0), &b, 2.0 * g, None).unwrap();
    let r = fit_detuning_scan(&prob).unwrap();
    assert!((r.g().unwrap().value / g - 1.0).abs() < 1e-6, "{:?} {} {}", r.g(), r.n_iter, r.gradient);
    // Local search alone from this start settles on a compensating minimum.
    prob.options.coarse_search = false;
    let r = fit_detuning_scan(&prob).unwrap();
    assert!((r.g().unwrap().value / g - 1.0).abs() > 0.1);
    prob.options.coarse_search = true;
    let r = fit_detuning_scan(&prob).unwrap();
    assert!((r.g().unwrap().value / g - 1.0).abs() < 1e-6, "{:?} {} {}", r.g(), r.n_iter, r.gradient);
    let br = r.branches.unwrap();
    assert_eq!(br.detunings.len(), 6);
    assert!(br.min_gap() > 0.0);
}

#[test]
fn peak_initialisation_lands_near_truth() {
    let b = base();
    let g = 0.45 * b.omega_x;
    let g0 = initial_coupling(&scan_data(g, Some(64), 1), b.omega_x);
    assert!((g0 / g - 1.0).abs() < 0.25, "{}", g0 / g);
    let flat = SpectrumGrid::new(axis(), vec![1.0; 250], None).unwrap();
    assert_eq!(initial_coupling(&[(flat, b.detuning)], b.omega_x), 0.1 * b.omega_x);
}

#[test]
fn scan_needs_three_detunings() {
    let b = base();
    let mut data = scan_data(0.3 * b.omega_x, None, 0);
    data.truncate(2);
    let prob = build_problem(data.clone(), &b, 0.3 * b.omega_x, None).unwrap();
    assert!(matches!(fit_detuning_scan(&prob), Err(Error::Precondition(_))));
    data.push(data[0].clone());
    let prob = build_problem(data, &b, 0.3 * b.omega_x, None).unwrap();
    assert!(matches!(fit_detuning_scan(&prob), Err(Error::Precondition(_))));
}

#[test]
fn single_rejects_multiple_spectra() {
    let b = base();
    let prob = build_problem(scan_data(0.3 * b.omega_x, None, 0), &b, 0.3 * b.omega_x, None).unwrap();
    assert!(matches!(fit_single(&prob), Err(Error::Precondition(_))));
}

#[test]
fn overall_scale_does_not_move_g() {
    let b = base();
    let g = 0.3 * b.omega_x;
    let data = scan_data(g, Some(16), 5);
    let fit = |c: f64| {
        let d: Vec<_> = data.iter().map(|(s, d)| (s.scaled(c), *d)).collect();
        fit_detuning_scan(&scan_problem(d, &b, Some(16)).unwrap()).unwrap()
    };
    let (a, z) = (fit(1.0), fit(1e6));
    let (ga, gz) = (a.g().unwrap(), z.g().unwrap());
    assert!((ga.value / gz.value - 1.0).abs() < 1e-5, "{} {}", ga.value, gz.value);
    assert!((ga.sigma / gz.sigma - 1.0).abs() < 1e-3);
}

#[test]
fn cost_never_increases() {
    let b = base();
    let prob = build_problem(scan_data(0.4 * b.omega_x, Some(8), 2), &b, 0.1 * b.omega_x, Some(8)).unwrap();
    let obj = Objective::new(&prob);
    let x0: Vec<f64> = obj.free.iter().map(|s| prob.slot_spec(*s).value).collect();
    let lo: Vec<f64> = obj.free.iter().map(|s| prob.slot_spec(*s).lower).collect();
    let hi: Vec<f64> = obj.free.iter().map(|s| prob.slot_spec(*s).upper).collect();
    let sol = minimize(&obj, &x0, &lo, &hi, &prob.options);
    assert!(sol.history.len() > 2);
    assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn bad_problems_are_refused() {
    let b = base();
    let mut prob = build_problem(scan_data(0.3 * b.omega_x, None, 0), &b, 0.3 * b.omega_x, None).unwrap();
    prob.shared.g.upper = f64::INFINITY;
    assert!(matches!(fit_detuning_scan(&prob), Err(Error::Precondition(_))));
    prob.shared.g = Bounded::fixed(0.3 * b.omega_x);
    for s in &mut prob.spectra {
        s.scale.free = false;
        s.floor.free = false;
    }
    assert!(matches!(fit_detuning_scan(&prob), Err(Error::Precondition(_))));
    let zero = SpectrumGrid::new(axis(), vec![0.0; 250], None).unwrap();
    assert!(build_problem(vec![(zero, b.detuning)], &b, 0.3 * b.omega_x, None).is_err());
}

#[test]
fn iteration_limit_carries_best_result() {
    let b = base();
    let mut prob = build_problem(scan_data(0.4 * b.omega_x, None, 0), &b, 0.05 * b.omega_x, None).unwrap();
    prob.options.max_iter = 1;
    prob.options.coarse_search = false;
    match fit_detuning_scan(&prob) {
        Err(Error::MaxIterations { best }) => {
            assert!(!best.converged);
            assert_eq!(best.n_iter, 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn freed_detuning_with_prior() {
    let b = base();
    let g = 0.35 * b.omega_x;
    let mut prob = build_problem(scan_data(g, None, 0), &b, g, None).unwrap();
    for s in &mut prob.spectra {
        let d = s.detuning.value;
        s.detuning = Bounded::free(1.02 * d, 0.5 * d, 1.5 * d);
    }
    prob.detuning_prior_width = Some(0.05 * b.omega_x);
    let r = fit_detuning_scan(&prob).unwrap();
    assert!((r.g().unwrap().value / g - 1.0).abs() < 0.01);
    assert!(r.get("detuning[2]").is_some());
}

#[test]
fn result_serialisation() {
    let b = base();
    let g = 0.35 * b.omega_x;
    let prob = build_problem(scan_data(g, Some(32), 3), &b, g, Some(32)).unwrap();
    let r = fit_detuning_scan(&prob).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let back: FitResult = serde_json::from_str(&text).unwrap();
    assert_eq!(back.parameters, r.parameters);
    assert_eq!(back.branches, r.branches);
    assert!(back.residuals.is_empty());

    let mut buf = Vec::new();
    r.write_residuals_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("spectrum,freq_hz,psd,model,residual\n"));
    assert_eq!(text.lines().count(), 1 + 6 * 250);

    let prob_text = serde_json::to_string(&prob).unwrap();
    assert_eq!(serde_json::from_str::<FitProblem>(&prob_text).unwrap(), prob);
}

#[test]
fn reported_uncertainty_matches_scatter() {
    let b = base();
    let g = 0.35 * b.omega_x;
    let k = 16;
    let pulls: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let r = fit_detuning_scan(&scan_problem(scan_data(g, Some(k), 1000 + seed), &b, Some(k)).unwrap()).unwrap();
            let p = r.g().unwrap();
            (p.value - g) / p.sigma
        })
        .collect();
    let n = pulls.len() as f64;
    let mean = pulls.iter().sum::<f64>() / n;
    let sd = (pulls.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 0.35, "mean pull {mean}");
    assert!((0.75..1.3).contains(&sd), "pull sd {sd}");
}

#[test]
fn extracted_peaks_sit_on_polariton_modes() {
    let b = base();
    let p = b.with_g(0.45 * b.omega_x);
    let freqs: Vec<f64> = (1..=4000).map(|k| k as f64 * 150.0).collect();
    let grid = synthesize_spectrum(&p, &freqs, &SnrModel::noiseless(), 0).unwrap();
    let peaks = extract_peak_frequencies(&grid, 2).unwrap();
    let m = polariton_modes(&p).unwrap();
    let (lo, hi) = (peaks[0].center.min(peaks[1].center), peaks[0].center.max(peaks[1].center));
    assert!((TAU * lo - m.lower.re).abs() < m.lower.im, "{lo} vs {}", m.lower.re / TAU);
    assert!((TAU * hi - m.upper.re).abs() < m.upper.im, "{hi} vs {}", m.upper.re / TAU);
}

fn wide_axis() -> Vec<f64> {
    (1..=400).map(|k| k as f64 * 2e3).collect()
}

fn scan_at(g: f64, ratios: &[f64], k: u32, seed: u64) -> Vec<(SpectrumGrid, f64)> {
    let b = base();
    ratios
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let p = b.with_g(g).with_detuning(r * b.omega_x);
            let floor = 1e-3 * psd_xx_one_sided_hz(p.omega_x / TAU, &p, 1.0).unwrap();
            let snr = SnrModel { averages: Some(k), floor, x_zpf: 1.0 };
            (synthesize_spectrum(&p, &wide_axis(), &snr, seed * 1000 + i as u64).unwrap(), p.detuning)
        })
        .collect()
}

#[test]
fn single_spectrum_with_averaging_noise() {
    let b = base();
    let g = 0.35 * b.omega_x;
    let grid = spectrum(&b.with_g(g), Some(64), 7);
    let r = fit_single(&single_problem(grid, b.detuning, &b, Some(64)).unwrap()).unwrap();
    assert!((r.g().unwrap().value / g - 1.0).abs() < 0.02);
}

#[test]
fn strong_scan_above_resonance() {
    let b = base();
    let g = 0.55 * b.omega_x;
    let ratios: Vec<f64> = (0..8).map(|i| 1.2 + 1.8 * i as f64 / 7.0).collect();
    let r = fit_detuning_scan(&scan_problem(scan_at(g, &ratios, 64, 1), &b, Some(64)).unwrap()).unwrap();
    let p = r.g().unwrap();
    assert!((p.value / g - 1.0).abs() < 0.02);
    assert!((p.value - g).abs() < 4.0 * p.sigma);
}

#[test]
fn fitted_branches_show_the_regimes() {
    let b = base();
    let ratios = [0.5, 0.75, 1.0, 1.25, 1.5, 2.0];
    let branches = |g: f64| {
        let r = fit_detuning_scan(&scan_problem(scan_at(g * b.omega_x, &ratios, 64, 2), &b, Some(64)).unwrap()).unwrap();
        assert_eq!(r.branches.as_ref().unwrap().detunings.len(), ratios.len());
        let gf = r.g().unwrap().value;
        let deltas: Vec<f64> = (0..=200).map(|i| (0.5 + 1.5 * i as f64 / 200.0) * b.omega_x).collect();
        detuning_scan(&b.with_g(gf), &deltas).unwrap()
    };
    assert!(branches(0.2).crosses());
    assert!(!branches(0.35).crosses());
}

#[test]
fn two_stage_side_peaks() {
    let b = base();
    let g = 0.35 * b.omega_x;
    let p = b.with_g(g);
    let f0 = b.omega_x / TAU;
    let top = psd_xx_one_sided_hz(0.7 * f0, &p, 1.0).unwrap();
    let y = Lorentzian { center: 0.95 * f0, fwhm: 2e3, amplitude: 0.5 * top };
    let z = Lorentzian { center: 0.2 * f0, fwhm: 2e3, amplitude: 0.3 * top };
    let freqs: Vec<f64> = (1..=1000).map(|k| k as f64 * 500.0).collect();
    let floor = 1e-3 * top;

    // Stage one: the y-detection channel sees only the two side peaks.
    let side_data: Vec<f64> = freqs.iter().map(|f| y.eval(*f) + z.eval(*f) + floor).collect();
    let side_grid = SpectrumGrid::new(freqs.clone(), side_data, None).unwrap();
    let (fitted, _) = fit_side_peaks(&side_grid, &[(y.center, 3e3), (z.center, 3e3)], None).unwrap();
    assert!((fitted[0].center / y.center - 1.0).abs() < 1e-6);

    // Stage two: x channel with the peaks frozen.
    let x = three_peak_model(&freqs, &p, 1.0, 1.0, floor, &[y, z]).unwrap();
    let grid = SpectrumGrid::new(freqs, x, None).unwrap();
    let mut prob = build_problem(vec![(grid, b.detuning)], &b, 0.25 * b.omega_x, None).unwrap();
    prob.spectra[0].freeze_side_peaks(&fitted);
    let r = fit_single(&prob).unwrap();
    assert!((r.g().unwrap().value / g - 1.0).abs() < 1e-5, "{:?}", r.g());
    assert!((r.get("peak_amplitude[0][0]").unwrap().value / y.amplitude - 1.0).abs() < 1e-4);
}

#[test]
fn side_peaks_reduce_to_plain_model() {
    let b = base().with_g(0.2 * base().omega_x);
    let f = axis();
    let zero = [Lorentzian { center: 1e5, fwhm: 1e3, amplitude: 0.0 }];
    let a = three_peak_model(&f, &b, 1.0, 2.0, 3.0, &zero).unwrap();
    for (fi, ai) in f.iter().zip(&a) {
        assert_eq!(*ai, 2.0 * psd_xx_one_sided_hz(*fi, &b, 1.0).unwrap() + 3.0);
    }
}
