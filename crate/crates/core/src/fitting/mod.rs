//! Spectral fits for the coupling rate.
//!
//! Residuals live in log-PSD space. A bin of a `k`-average periodogram is the
//! true PSD times a `chi^2(2k)/2k` variate, so `ln y - ln m` has mean
//! `psi(k) - ln k` and variance `psi_1(k)`. With `averages` set, every
//! residual is shifted by that mean and divided by its standard deviation,
//! and the covariance is `(J^T J)^-1`. Without it, residuals are unweighted
//! and the covariance is scaled by the reduced chi-square.

pub mod lm;
mod peaks;
mod special;

pub use lm::FitOptions;
pub use peaks::{
    extract_peak_frequencies, fit_gaussian_profile, fit_side_peaks, lorentzian, Lorentzian, Peak, ProfileFit,
    MIN_PROMINENCE,
};
pub use special::{log_mean, log_variance, trigamma};

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_writer, fmt_num};
use crate::params::ModelParams;
use crate::polaritons::{detuning_scan, BranchScan};
use crate::response::psd_xx_one_sided_hz;
use crate::spectrum::SpectrumGrid;

use lm::{minimize, Outcome, Residuals};

/// A parameter with its bounds; fixed parameters keep `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub free: bool,
}

impl Bounded {
    pub fn fixed(value: f64) -> Self {
        Bounded {
            value,
            lower: value,
            upper: value,
            free: false,
        }
    }

    pub fn free(value: f64, lower: f64, upper: f64) -> Self {
        Bounded {
            value,
            lower,
            upper,
            free: true,
        }
    }
}

/// A y- or z-motion peak with center and width frozen from a side-channel fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidePeak {
    pub center_hz: f64,
    pub fwhm_hz: f64,
    pub amplitude: Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    /// One-sided PSD on an axis in Hz.
    pub grid: SpectrumGrid,
    /// rad/s; its initial value doubles as the metadata prior center.
    pub detuning: Bounded,
    pub scale: Bounded,
    pub floor: Bounded,
    #[serde(default)]
    pub side_peaks: Vec<SidePeak>,
}

impl SpectrumSpec {
    /// Freezes side peaks fitted on another channel; only their amplitudes
    /// stay free, between 0 and ten times the fitted value.
    pub fn freeze_side_peaks(&mut self, peaks: &[Lorentzian]) {
        self.side_peaks = peaks
            .iter()
            .map(|l| SidePeak {
                center_hz: l.center,
                fwhm_hz: l.fwhm,
                amplitude: Bounded::free(l.amplitude.max(0.0), 0.0, 10.0 * l.amplitude.max(0.0)),
            })
            .collect();
    }
}

/// Parameters common to all spectra, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedParams {
    pub omega_x: Bounded,
    pub kappa: Bounded,
    pub gamma: Bounded,
    pub g: Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub shared: SharedParams,
    pub n_bath: f64,
    pub x_zpf: f64,
    pub spectra: Vec<SpectrumSpec>,
    /// Periodogram averages behind each bin, if known.
    pub averages: Option<u32>,
    /// Width (rad/s) of the quadratic penalty tying a freed detuning to its metadata value.
    pub detuning_prior_width: Option<f64>,
    #[serde(default)]
    pub options: FitOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Shared(usize),
    Detuning(usize),
    Scale(usize),
    Floor(usize),
    Peak(usize, usize),
}

impl Slot {
    fn name(self) -> String {
        match self {
            Slot::Shared(k) => ["omega_x", "kappa", "gamma", "g"][k].to_string(),
            Slot::Detuning(i) => format!("detuning[{i}]"),
            Slot::Scale(i) => format!("scale[{i}]"),
            Slot::Floor(i) => format!("floor[{i}]"),
            Slot::Peak(i, k) => format!("peak_amplitude[{i}][{k}]"),
        }
    }

    fn spectrum(self) -> Option<usize> {
        match self {
            Slot::Shared(_) => None,
            Slot::Detuning(i) | Slot::Scale(i) | Slot::Floor(i) | Slot::Peak(i, _) => Some(i),
        }
    }
}

impl FitProblem {
    fn shared_array(&self) -> [Bounded; 4] {
        let s = &self.shared;
        [s.omega_x, s.kappa, s.gamma, s.g]
    }

    fn slot_spec(&self, slot: Slot) -> Bounded {
        match slot {
            Slot::Shared(k) => self.shared_array()[k],
            Slot::Detuning(i) => self.spectra[i].detuning,
            Slot::Scale(i) => self.spectra[i].scale,
            Slot::Floor(i) => self.spectra[i].floor,
            Slot::Peak(i, k) => self.spectra[i].side_peaks[k].amplitude,
        }
    }

    fn all_slots(&self) -> Vec<Slot> {
        let mut out: Vec<Slot> = (0..4).map(Slot::Shared).collect();
        for (i, s) in self.spectra.iter().enumerate() {
            out.extend([Slot::Detuning(i), Slot::Scale(i), Slot::Floor(i)]);
            out.extend((0..s.side_peaks.len()).map(|k| Slot::Peak(i, k)));
        }
        out
    }

    fn free_slots(&self) -> Vec<Slot> {
        self.all_slots().into_iter().filter(|s| self.slot_spec(*s).free).collect()
    }

    /// Checks the structural invariants.
    pub fn check(&self) -> Result<()> {
        if self.spectra.is_empty() {
            return Err(Error::Precondition("fit needs at least one spectrum".into()));
        }
        let free = self.free_slots();
        if free.is_empty() {
            return Err(Error::Precondition("fit needs at least one free parameter".into()));
        }
        for slot in self.all_slots() {
            let b = self.slot_spec(slot);
            let ok = [b.value, b.lower, b.upper].iter().all(|v| v.is_finite()) && b.lower <= b.value && b.value <= b.upper;
            if !ok {
                return Err(Error::Precondition(format!(
                    "parameter {} must have finite bounds containing its value",
                    slot.name()
                )));
            }
        }
        for (i, s) in self.spectra.iter().enumerate() {
            s.grid.check()?;
            if s.grid.values.iter().any(|v| *v <= 0.0) {
                return Err(Error::Precondition(format!("spectrum {i} has non-positive PSD values")));
            }
        }
        if matches!(self.averages, Some(0)) {
            return Err(Error::Precondition("averages must be >= 1".into()));
        }
        if let Some(w) = self.detuning_prior_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Precondition("detuning prior width must be finite and > 0".into()));
            }
        }
        Ok(())
    }

    /// Noise-model shift and weight for log residuals.
    fn log_noise(&self) -> (f64, f64) {
        match self.averages {
            Some(k) => (log_mean(k as f64), 1.0 / log_variance(k as f64).sqrt()),
            None => (0.0, 1.0),
        }
    }
}

/// Evaluates the x-detection model `scale psd_xx + side peaks + floor` on `freqs_hz`.
pub fn three_peak_model(
    freqs_hz: &[f64],
    p: &ModelParams,
    x_zpf: f64,
    scale: f64,
    floor: f64,
    side: &[Lorentzian],
) -> Result<Vec<f64>> {
    freqs_hz
        .iter()
        .map(|&f| {
            let peaks: f64 = side.iter().map(|l| l.eval(f)).sum();
            Ok(scale * psd_xx_one_sided_hz(f, p, x_zpf)? + peaks + floor)
        })
        .collect()
}

struct Objective<'a> {
    problem: &'a FitProblem,
    free: Vec<Slot>,
    /// Position of every slot in `free`, if free.
    index: Vec<(Slot, Option<usize>)>,
    log_data: Vec<Vec<f64>>,
    bias: f64,
    weight: f64,
}

impl<'a> Objective<'a> {
    fn new(problem: &'a FitProblem) -> Self {
        let free = problem.free_slots();
        let index = problem
            .all_slots()
            .into_iter()
            .map(|s| (s, free.iter().position(|f| *f == s)))
            .collect();
        let (bias, weight) = problem.log_noise();
        Objective {
            problem,
            free,
            index,
            log_data: problem
                .spectra
                .iter()
                .map(|s| s.grid.values.iter().map(|v| v.ln()).collect())
                .collect(),
            bias,
            weight,
        }
    }

    fn value(&self, slot: Slot, x: &[f64]) -> f64 {
        match self.index.iter().find(|(s, _)| *s == slot) {
            Some((_, Some(j))) => x[*j],
            _ => self.problem.slot_spec(slot).value,
        }
    }

    fn params_for(&self, i: usize, x: &[f64]) -> ModelParams {
        ModelParams {
            omega_x: self.value(Slot::Shared(0), x),
            kappa: self.value(Slot::Shared(1), x),
            gamma: self.value(Slot::Shared(2), x),
            g: self.value(Slot::Shared(3), x),
            detuning: self.value(Slot::Detuning(i), x),
            n_bath: self.problem.n_bath,
        }
    }

    fn model(&self, i: usize, x: &[f64]) -> Option<Vec<f64>> {
        let spec = &self.problem.spectra[i];
        let p = self.params_for(i, x);
        let side: Vec<Lorentzian> = spec
            .side_peaks
            .iter()
            .enumerate()
            .map(|(k, sp)| Lorentzian {
                center: sp.center_hz,
                fwhm: sp.fwhm_hz,
                amplitude: self.value(Slot::Peak(i, k), x),
            })
            .collect();
        let m = three_peak_model(
            &spec.grid.freqs,
            &p,
            self.problem.x_zpf,
            self.value(Slot::Scale(i), x),
            self.value(Slot::Floor(i), x),
            &side,
        )
        .ok()?;
        m.iter().all(|v| *v > 0.0 && v.is_finite()).then_some(m)
    }
}

impl Residuals for Objective<'_> {
    fn n_blocks(&self) -> usize {
        self.problem.spectra.len()
    }

    fn block(&self, b: usize, x: &[f64]) -> Option<Vec<f64>> {
        let m = self.model(b, x)?;
        let mut r: Vec<f64> = self.log_data[b]
            .iter()
            .zip(&m)
            .map(|(ly, mv)| self.weight * (ly - mv.ln() - self.bias))
            .collect();
        if let Some(width) = self.problem.detuning_prior_width {
            let spec = self.problem.spectra[b].detuning;
            if spec.free {
                r.push((self.value(Slot::Detuning(b), x) - spec.value) / width);
            }
        }
        Some(r)
    }

    fn touches(&self, j: usize, b: usize) -> bool {
        self.free[j].spectrum().is_none_or(|i| i == b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParam {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
}

/// Data, model and residual of one fitted spectrum.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumResiduals {
    pub freqs_hz: Vec<f64>,
    pub data: Vec<f64>,
    pub model: Vec<f64>,
    pub residual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Free parameters; rates in rad/s.
    pub parameters: Vec<FittedParam>,
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub n_iter: usize,
    pub converged: bool,
    /// Largest |cos| between the residual vector and a Jacobian column.
    pub gradient: f64,
    #[serde(skip)]
    pub residuals: Vec<SpectrumResiduals>,
    /// Polariton branches implied by the fitted coupling (scan fits only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<BranchScan>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FittedParam> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Fitted coupling rate, if it was free.
    pub fn g(&self) -> Option<&FittedParam> {
        self.get("g")
    }

    /// CSV with header `spectrum,freq_hz,psd,model,residual`.
    pub fn write_residuals_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record(["spectrum", "freq_hz", "psd", "model", "residual"])?;
        for (i, s) in self.residuals.iter().enumerate() {
            for k in 0..s.freqs_hz.len() {
                out.write_record([
                    i.to_string(),
                    fmt_num(s.freqs_hz[k]),
                    fmt_num(s.data[k]),
                    fmt_num(s.model[k]),
                    fmt_num(s.residual[k]),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Coarse profile over `g` before the local search: candidates span a factor
/// of four either side of the start, with free scales and floors re-seeded
/// for each. The lowest-cost candidate becomes the starting point.
fn coarse_start(problem: &FitProblem) -> FitProblem {
    let gb = problem.shared.g;
    if !gb.free || !problem.options.coarse_search {
        return problem.clone();
    }
    let g_start = gb.value.max(gb.lower).max(1e-6 * problem.shared.omega_x.value);
    let mut best: Option<(f64, FitProblem)> = None;
    for k in -8..=8 {
        let g = (g_start * 2f64.powf(k as f64 / 4.0)).clamp(gb.lower, gb.upper);
        let mut cand = problem.clone();
        cand.shared.g.value = g;
        for spec in &mut cand.spectra {
            if !(spec.scale.free && spec.floor.free) {
                continue;
            }
            let p = ModelParams {
                omega_x: cand.shared.omega_x.value,
                kappa: cand.shared.kappa.value,
                gamma: cand.shared.gamma.value,
                g,
                detuning: spec.detuning.value,
                n_bath: cand.n_bath,
            };
            let Ok(m) = three_peak_model(&spec.grid.freqs, &p, cand.x_zpf, 1.0, 0.0, &[]) else {
                continue;
            };
            let (s0, f0) = scale_and_floor(&m, &spec.grid.values);
            if s0.is_finite() && f0.is_finite() {
                spec.scale.value = s0.clamp(spec.scale.lower, spec.scale.upper);
                spec.floor.value = f0.clamp(spec.floor.lower, spec.floor.upper);
            }
        }
        let obj = Objective::new(&cand);
        let x: Vec<f64> = obj.free.iter().map(|s| cand.slot_spec(*s).value).collect();
        let blocks: Option<Vec<Vec<f64>>> = (0..obj.n_blocks()).map(|b| obj.block(b, &x)).collect();
        let Some(blocks) = blocks else { continue };
        let cost: f64 = blocks.iter().flatten().map(|v| v * v).sum();
        if cost.is_finite() && best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, cand));
        }
    }
    best.map(|(_, p)| p).unwrap_or_else(|| problem.clone())
}

fn run(problem: &FitProblem) -> Result<FitResult> {
    problem.check()?;
    let start = coarse_start(problem);
    let problem = &start;
    let obj = Objective::new(problem);
    let x0: Vec<f64> = obj.free.iter().map(|s| problem.slot_spec(*s).value).collect();
    let lower: Vec<f64> = obj.free.iter().map(|s| problem.slot_spec(*s).lower).collect();
    let upper: Vec<f64> = obj.free.iter().map(|s| problem.slot_spec(*s).upper).collect();
    let opts = problem.options;
    let sol = minimize(&obj, &x0, &lower, &upper, &opts);
    if sol.outcome == Outcome::NonFinite && sol.history.is_empty() {
        return Err(Error::NonFiniteModel);
    }

    let n_res: usize = sol.residuals.iter().map(Vec::len).sum();
    let dof = n_res.saturating_sub(x0.len()).max(1) as f64;
    let chi2_red = 2.0 * sol.cost / dof;
    let cov_scale = if problem.averages.is_some() { 1.0 } else { chi2_red };
    let sigma: Vec<f64> = match &sol.inv_hessian {
        Some(c) => (0..x0.len()).map(|j| (c[(j, j)] * cov_scale).max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; x0.len()],
    };
    let residuals = (0..problem.spectra.len())
        .map(|i| {
            let spec = &problem.spectra[i];
            let n = spec.grid.len();
            SpectrumResiduals {
                freqs_hz: spec.grid.freqs.clone(),
                data: spec.grid.values.clone(),
                model: obj.model(i, &sol.x).unwrap_or_else(|| vec![f64::NAN; n]),
                residual: sol.residuals.get(i).map(|r| r[..n].to_vec()).unwrap_or_default(),
            }
        })
        .collect();
    let tiny = sol.history.first().is_some_and(|c0| lm::negligible(sol.cost, *c0, n_res));
    let converged = sol.outcome != Outcome::NonFinite && (tiny || sol.gradient <= opts.accept_gradient);
    let result = FitResult {
        parameters: obj
            .free
            .iter()
            .zip(&sol.x)
            .zip(&sigma)
            .map(|((s, v), e)| FittedParam {
                name: s.name(),
                value: *v,
                sigma: *e,
            })
            .collect(),
        residual_norm: (2.0 * sol.cost).sqrt(),
        reduced_chi2: chi2_red,
        n_iter: sol.n_iter,
        converged,
        gradient: sol.gradient,
        residuals,
        branches: None,
    };
    if converged {
        Ok(result)
    } else if sol.outcome == Outcome::MaxIterations {
        Err(Error::MaxIterations { best: Box::new(result) })
    } else {
        Err(Error::FitDiverged { best: Box::new(result) })
    }
}

/// Fits one spectrum.
pub fn fit_single(problem: &FitProblem) -> Result<FitResult> {
    if problem.spectra.len() != 1 {
        return Err(Error::Precondition(format!(
            "single-spectrum fit got {} spectra",
            problem.spectra.len()
        )));
    }
    run(problem)
}

/// Joint fit of a detuning scan with one coupling rate shared by every
/// spectrum. The result carries the polariton branches of the fitted model.
pub fn fit_detuning_scan(problem: &FitProblem) -> Result<FitResult> {
    let distinct: BTreeSet<u64> = problem.spectra.iter().map(|s| s.detuning.value.to_bits()).collect();
    if problem.spectra.len() < 3 || distinct.len() < 3 {
        return Err(Error::Precondition(
            "a detuning scan needs at least three spectra at distinct detunings".into(),
        ));
    }
    let mut result = run(problem)?;
    let obj = Objective::new(problem);
    let x: Vec<f64> = obj
        .free
        .iter()
        .map(|s| result.get(&s.name()).map(|p| p.value).unwrap())
        .collect();
    let mut detunings: Vec<f64> = (0..problem.spectra.len()).map(|i| obj.value(Slot::Detuning(i), &x)).collect();
    detunings.sort_by(f64::total_cmp);
    detunings.dedup();
    let base = obj.params_for(0, &x);
    result.branches = Some(detuning_scan(&base, &detunings)?);
    Ok(result)
}

/// Coupling estimate from two resolved peaks at detuning `delta`, using the
/// lossless normal-mode relation `w1^2 w2^2 = Omega^2 Delta^2 - 4 Omega Delta g^2`.
pub fn coupling_from_peaks(omega_x: f64, delta: f64, w1: f64, w2: f64) -> Option<f64> {
    let g2 = (omega_x * omega_x * delta * delta - w1 * w1 * w2 * w2) / (4.0 * omega_x * delta);
    (g2 > 0.0 && g2.is_finite()).then(|| g2.sqrt())
}

/// Median peak-based coupling estimate over the spectra where two peaks are
/// resolved, else `0.1 Omega_x`.
pub fn initial_coupling(spectra: &[(SpectrumGrid, f64)], omega_x: f64) -> f64 {
    let mut est: Vec<f64> = spectra
        .iter()
        .filter_map(|(grid, delta)| {
            let peaks = extract_peak_frequencies(grid, 2).ok()?;
            coupling_from_peaks(omega_x, *delta, TAU * peaks[0].center, TAU * peaks[1].center)
        })
        .filter(|g| *g < 2.0 * omega_x)
        .collect();
    if est.is_empty() {
        return 0.1 * omega_x;
    }
    est.sort_by(f64::total_cmp);
    est[est.len() / 2]
}

/// Relative-error least squares for `y ~ s m + floor` with `floor >= 0`.
fn scale_and_floor(model: &[f64], data: &[f64]) -> (f64, f64) {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (m, y) in model.iter().zip(data) {
        let w = 1.0 / (y * y);
        a11 += w * m * m;
        a12 += w * m;
        a22 += w;
        b1 += w * m * y;
        b2 += w * y;
    }
    let det = a11 * a22 - a12 * a12;
    let s = (b1 * a22 - b2 * a12) / det;
    let f = (a11 * b2 - a12 * b1) / det;
    if det > 0.0 && s > 0.0 && f >= 0.0 {
        (s, f)
    } else {
        (b1 / a11, 0.0)
    }
}

/// A scan problem with `g` free and `omega_x`, `kappa`, `gamma` fixed from
/// `base`; each spectrum gets a free scale and floor seeded from the data.
pub fn scan_problem(spectra: Vec<(SpectrumGrid, f64)>, base: &ModelParams, averages: Option<u32>) -> Result<FitProblem> {
    let g0 = initial_coupling(&spectra, base.omega_x);
    build_problem(spectra, base, g0, averages)
}

/// One spectrum with `g`, scale and floor free.
pub fn single_problem(grid: SpectrumGrid, detuning: f64, base: &ModelParams, averages: Option<u32>) -> Result<FitProblem> {
    let spectra = vec![(grid, detuning)];
    let g0 = initial_coupling(&spectra, base.omega_x);
    build_problem(spectra, base, g0, averages)
}

/// Like [`scan_problem`] but with an explicit starting coupling.
pub fn build_problem(
    spectra: Vec<(SpectrumGrid, f64)>,
    base: &ModelParams,
    g0: f64,
    averages: Option<u32>,
) -> Result<FitProblem> {
    let w = base.omega_x;
    let mut specs = Vec::with_capacity(spectra.len());
    for (grid, delta) in spectra {
        grid.check()?;
        if grid.values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Precondition("log-space fit needs positive PSD values".into()));
        }
        let p = base.with_g(g0).with_detuning(delta);
        let m = three_peak_model(&grid.freqs, &p, 1.0, 1.0, 0.0, &[])?;
        let (s0, f0) = scale_and_floor(&m, &grid.values);
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(Error::Precondition("could not seed the spectrum scale".into()));
        }
        let top = grid.values.iter().copied().fold(0.0, f64::max);
        specs.push(SpectrumSpec {
            detuning: Bounded::fixed(delta),
            scale: Bounded::free(s0, s0 * 1e-4, s0 * 1e4),
            floor: Bounded::free(f0.min(top), 0.0, top),
            side_peaks: Vec::new(),
            grid,
        });
    }
    Ok(FitProblem {
        shared: SharedParams {
            omega_x: Bounded::fixed(w),
            kappa: Bounded::fixed(base.kappa),
            gamma: Bounded::fixed(base.gamma),
            g: Bounded::free(g0.clamp(1e-4 * w, 2.0 * w), 1e-4 * w, 2.0 * w),
        },
        n_bath: base.n_bath,
        x_zpf: 1.0,
        spectra: specs,
        averages,
        detuning_prior_width: None,
        options: FitOptions::default(),
    })
}

#[cfg(test)]
mod tests;
