use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::SpectrumGrid;

use super::lm::{minimize, FitOptions, Outcome, Residuals};
use super::special::{log_mean, log_variance};

/// `amplitude (fwhm/2)^2 / ((x - center)^2 + (fwhm/2)^2)`.
pub fn lorentzian(x: f64, center: f64, fwhm: f64, amplitude: f64) -> f64 {
    let hw2 = 0.25 * fwhm * fwhm;
    amplitude * hw2 / ((x - center).powi(2) + hw2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lorentzian {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
}

impl Lorentzian {
    pub fn eval(&self, x: f64) -> f64 {
        lorentzian(x, self.center, self.fwhm, self.amplitude)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    pub fwhm: f64,
    pub height: f64,
}

/// Minimum prominence, relative to the tallest bin, for a maximum to count.
pub const MIN_PROMINENCE: f64 = 0.02;

/// Height of each strict local maximum above the higher of the two lowest
/// points separating it from taller terrain.
fn prominences(v: &[f64], maxima: &[usize]) -> Vec<f64> {
    maxima
        .iter()
        .map(|&i| {
            let h = v[i];
            let mut left_min = h;
            let mut j = i;
            while j > 0 {
                j -= 1;
                if v[j] > h {
                    break;
                }
                left_min = left_min.min(v[j]);
            }
            let mut right_min = h;
            let mut j = i;
            while j + 1 < v.len() {
                j += 1;
                if v[j] > h {
                    break;
                }
                right_min = right_min.min(v[j]);
            }
            h - left_min.max(right_min)
        })
        .collect()
}

/// The `expected_count` most prominent maxima, ordered by frequency, with
/// parabolic refinement of the center and half-maximum widths.
pub fn extract_peak_frequencies(s: &SpectrumGrid, expected_count: usize) -> Result<Vec<Peak>> {
    if s.is_empty() {
        return Err(Error::Precondition("spectrum is empty".into()));
    }
    let v = &s.values;
    let n = v.len();
    let top = v.iter().copied().fold(0.0, f64::max);
    let maxima: Vec<usize> = (1..n.saturating_sub(1)).filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1]).collect();
    let prom = prominences(v, &maxima);
    let mut ranked: Vec<(usize, f64)> = maxima
        .into_iter()
        .zip(prom)
        .filter(|(_, p)| *p >= MIN_PROMINENCE * top)
        .collect();
    if ranked.len() < expected_count {
        return Err(Error::PeaksNotFound {
            expected: expected_count,
            found: ranked.len(),
        });
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(expected_count);
    ranked.sort_by_key(|r| r.0);
    let f = &s.freqs;
    Ok(ranked
        .into_iter()
        .map(|(i, _)| {
            let (y0, y1, y2) = (v[i - 1], v[i], v[i + 1]);
            let denom = y0 - 2.0 * y1 + y2;
            let shift = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
            let center = if shift >= 0.0 {
                f[i] + shift * (f[i + 1] - f[i])
            } else {
                f[i] + shift * (f[i] - f[i - 1])
            };
            let half = 0.5 * y1;
            let cross = |range: &mut dyn Iterator<Item = usize>| {
                let mut prev = i;
                for j in range {
                    if v[j] <= half {
                        let t = (v[prev] - half) / (v[prev] - v[j]);
                        return Some(f[prev] + t * (f[j] - f[prev]));
                    }
                    prev = j;
                }
                None
            };
            let lo = cross(&mut (0..i).rev());
            let hi = cross(&mut (i + 1..n));
            let fwhm = match (lo, hi) {
                (Some(a), Some(b)) => b - a,
                (Some(a), None) => 2.0 * (center - a),
                (None, Some(b)) => 2.0 * (b - center),
                (None, None) => f64::NAN,
            };
            Peak { center, fwhm, height: y1 }
        })
        .collect())
}

struct SidePeakProblem<'a> {
    freqs: &'a [f64],
    log_data: Vec<f64>,
    bias: f64,
    weight: f64,
    n_peaks: usize,
}

impl SidePeakProblem<'_> {
    fn model(&self, x: &[f64], f: f64) -> f64 {
        (0..self.n_peaks)
            .map(|k| lorentzian(f, x[3 * k], x[3 * k + 1], x[3 * k + 2]))
            .sum::<f64>()
            + x[3 * self.n_peaks]
    }
}

impl Residuals for SidePeakProblem<'_> {
    fn n_blocks(&self) -> usize {
        1
    }
    fn block(&self, _: usize, x: &[f64]) -> Option<Vec<f64>> {
        self.freqs
            .iter()
            .zip(&self.log_data)
            .map(|(&f, &ly)| {
                let m = self.model(x, f);
                (m > 0.0).then(|| self.weight * (ly - m.ln() - self.bias))
            })
            .collect()
    }
    fn touches(&self, _: usize, _: usize) -> bool {
        true
    }
}

/// Fits Lorentzians plus a white floor to a side-channel spectrum.
///
/// `guesses` seed the centers and widths; amplitudes start from the data.
/// `averages` sets the log-noise model as in the main fits.
pub fn fit_side_peaks(s: &SpectrumGrid, guesses: &[(f64, f64)], averages: Option<u32>) -> Result<(Vec<Lorentzian>, f64)> {
    if guesses.is_empty() {
        return Err(Error::Precondition("at least one peak guess is required".into()));
    }
    if s.values.iter().any(|v| *v <= 0.0) {
        return Err(Error::Precondition("log-space fit needs positive PSD values".into()));
    }
    let (bias, weight) = match averages {
        Some(k) => (log_mean(k as f64), 1.0 / log_variance(k as f64).sqrt()),
        None => (0.0, 1.0),
    };
    let span = s.freqs[s.len() - 1] - s.freqs[0];
    let top = s.values.iter().copied().fold(0.0, f64::max);
    let mut sorted = s.values.clone();
    sorted.sort_by(f64::total_cmp);
    let floor0 = sorted[sorted.len() / 10].max(f64::MIN_POSITIVE);
    let (mut x0, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new());
    for &(c, w) in guesses {
        let i = s.freqs.partition_point(|f| *f < c).min(s.len() - 1);
        x0.extend([c, w, (s.values[i] - floor0).max(floor0)]);
        lo.extend([s.freqs[0], span * 1e-6, 0.0]);
        hi.extend([s.freqs[s.len() - 1], span, 10.0 * top]);
    }
    x0.push(floor0);
    lo.push(0.0);
    hi.push(top);
    let prob = SidePeakProblem {
        freqs: &s.freqs,
        log_data: s.values.iter().map(|v| v.ln()).collect(),
        bias,
        weight,
        n_peaks: guesses.len(),
    };
    let sol = minimize(&prob, &x0, &lo, &hi, &FitOptions::default());
    if matches!(sol.outcome, Outcome::NonFinite) {
        return Err(Error::NonFiniteModel);
    }
    let peaks = (0..guesses.len())
        .map(|k| Lorentzian {
            center: sol.x[3 * k],
            fwhm: sol.x[3 * k + 1],
            amplitude: sol.x[3 * k + 2],
        })
        .collect();
    Ok((peaks, sol.x[3 * guesses.len()]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub g0: f64,
    pub waist: f64,
    pub sigma_g0: f64,
    pub sigma_waist: f64,
}

struct Profile<'a> {
    z: &'a [f64],
    g: &'a [f64],
}

impl Residuals for Profile<'_> {
    fn n_blocks(&self) -> usize {
        1
    }
    fn block(&self, _: usize, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.z.iter().zip(self.g).map(|(z, g)| x[0] * (-(z * z) / (x[1] * x[1])).exp() - g).collect())
    }
    fn touches(&self, _: usize, _: usize) -> bool {
        true
    }
}

/// Least-squares fit of `g0 exp(-z^2 / w^2)` to measured couplings.
pub fn fit_gaussian_profile(z0: &[f64], g: &[f64]) -> Result<ProfileFit> {
    if z0.len() != g.len() || z0.len() < 3 {
        return Err(Error::Precondition("need at least three (z0, g) points".into()));
    }
    let g_max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z_span = z0.iter().map(|z| z.abs()).fold(0.0, f64::max);
    if !(g_max > 0.0 && z_span > 0.0) {
        return Err(Error::Precondition("profile needs positive couplings and nonzero offsets".into()));
    }
    // Second moment of |g| gives the starting width.
    let (m0, m2) = z0.iter().zip(g).fold((0.0, 0.0), |a, (z, v)| (a.0 + v.abs(), a.1 + v.abs() * z * z));
    let w0 = (2.0 * m2 / m0).sqrt().clamp(1e-3 * z_span, 10.0 * z_span);
    let prob = Profile { z: z0, g };
    let sol = minimize(
        &prob,
        &[g_max, w0],
        &[0.0, 1e-6 * z_span],
        &[10.0 * g_max, 100.0 * z_span],
        &FitOptions::default(),
    );
    if !matches!(sol.outcome, Outcome::Converged) {
        return Err(Error::Precondition(format!("profile fit did not converge ({:?})", sol.outcome)));
    }
    let dof = (g.len() - 2).max(1) as f64;
    let s2 = 2.0 * sol.cost / dof;
    let (sg, sw) = sol
        .inv_hessian
        .map(|c| ((c[(0, 0)] * s2).sqrt(), (c[(1, 1)] * s2).sqrt()))
        .unwrap_or((f64::NAN, f64::NAN));
    Ok(ProfileFit {
        g0: sol.x[0],
        waist: sol.x[1],
        sigma_g0: sg,
        sigma_waist: sw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentzian_shape() {
        assert_eq!(lorentzian(3.0, 3.0, 2.0, 5.0), 5.0);
        assert!((lorentzian(4.0, 3.0, 2.0, 5.0) - 2.5).abs() < 1e-15);
        assert!((lorentzian(2.0, 3.0, 2.0, 5.0) - 2.5).abs() < 1e-15);
        // Integral amplitude * pi * fwhm / 2 via the arctan antiderivative on a wide window.
        let (c, w, a): (f64, f64, f64) = (0.0, 0.5, 2.0);
        let big: f64 = 1e6;
        let exact = a * w / 2.0 * 2.0 * (big / (w / 2.0)).atan();
        let n = 2_000_000;
        let h = 2.0 * 200.0 / n as f64;
        let numeric: f64 = (0..n).map(|k| lorentzian(-200.0 + (k as f64 + 0.5) * h, c, w, a) * h).sum();
        let tail = a * w / 2.0 * 2.0 * ((big / (w / 2.0)).atan() - (200.0 / (w / 2.0)).atan());
        assert!((numeric + tail - exact).abs() < 1e-6);
        assert!((exact - a * std::f64::consts::PI * w / 2.0).abs() < 1e-5);
    }

    #[test]
    fn single_peak_center() {
        let f: Vec<f64> = (0..500).map(|k| k as f64).collect();
        let s = SpectrumGrid::from_fn(&f, |x| Ok(lorentzian(x, 217.3, 12.0, 4.0) + 0.01)).unwrap();
        let p = extract_peak_frequencies(&s, 1).unwrap();
        assert!((p[0].center - 217.3).abs() < 1.0);
        assert!((p[0].fwhm - 12.0).abs() < 1.0);
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let s = SpectrumGrid::new((0..50).map(f64::from).collect(), vec![1.0; 50], None).unwrap();
        assert!(matches!(
            extract_peak_frequencies(&s, 1),
            Err(Error::PeaksNotFound { expected: 1, found: 0 })
        ));
    }

    #[test]
    fn keeps_most_prominent() {
        let f: Vec<f64> = (0..1000).map(f64::from).collect();
        let s = SpectrumGrid::from_fn(&f, |x| {
            Ok(lorentzian(x, 300.0, 20.0, 1.0) + lorentzian(x, 700.0, 10.0, 3.0) + 1e-4 * (x * 0.9).sin().abs())
        })
        .unwrap();
        let p = extract_peak_frequencies(&s, 2).unwrap();
        assert!((p[0].center - 300.0).abs() < 1.0 && (p[1].center - 700.0).abs() < 1.0);
        assert!(matches!(extract_peak_frequencies(&s, 3), Err(Error::PeaksNotFound { found: 2, .. })));
    }

    #[test]
    fn side_peaks_recovered() {
        let f: Vec<f64> = (1..800).map(|k| k as f64 * 250.0).collect();
        let truth = [
            Lorentzian { center: 38e3, fwhm: 2e3, amplitude: 5.0 },
            Lorentzian { center: 180.5e3, fwhm: 1.5e3, amplitude: 2.0 },
        ];
        let s = SpectrumGrid::from_fn(&f, |x| Ok(truth.iter().map(|l| l.eval(x)).sum::<f64>() + 1e-3)).unwrap();
        let (fit, floor) = fit_side_peaks(&s, &[(37e3, 3e3), (181e3, 1e3)], None).unwrap();
        for (a, b) in fit.iter().zip(&truth) {
            assert!((a.center / b.center - 1.0).abs() < 1e-6);
            assert!((a.fwhm / b.fwhm - 1.0).abs() < 1e-5);
            assert!((a.amplitude / b.amplitude - 1.0).abs() < 1e-5);
        }
        assert!((floor / 1e-3 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn profile_fit_exact() {
        let w = 41.1e-6;
        let z: Vec<f64> = (-10..=10).map(|k| k as f64 * 6e-6).collect();
        let g: Vec<f64> = z.iter().map(|z| 2.0 * (-(z * z) / (w * w)).exp()).collect();
        let p = fit_gaussian_profile(&z, &g).unwrap();
        assert!((p.waist / w - 1.0).abs() < 1e-8);
        assert!((p.g0 / 2.0 - 1.0).abs() < 1e-8);
    }
}
