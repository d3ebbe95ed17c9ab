//! Static instability of the coupled system and (detuning, coupling) maps.
//!
//! The closed form treats the mechanics as lossless:
//! the system is unstable once `(g/Omega)^2 > (Delta/Omega + kappa^2/(4 Delta Omega)) / 4`.
//! The spectral test instead looks at the signs of all quartic root dampings
//! and includes `gamma`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_writer, fmt_num};
use crate::params::{angular_to_hz, ModelParams, Validate};
use crate::polaritons::quartic_roots;

/// Couplings within this relative distance of `g_crit` count as stable.
pub const BOUNDARY_RTOL: f64 = 1e-6;
/// Root decay rates above `-SPECTRAL_TOL * omega_x` count as stable.
pub const SPECTRAL_TOL: f64 = 1e-9;

pub fn critical_coupling(delta: f64, p: &ModelParams) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::UnsupportedDetuning { detuning: delta });
    }
    let w = p.omega_x;
    Ok(w * ((delta / w + p.kappa * p.kappa / (4.0 * delta * w)) / 4.0).sqrt())
}

pub fn is_stable_closed_form(p: &ModelParams) -> Result<bool> {
    let g_crit = critical_coupling(p.detuning, p)?;
    Ok(p.g.abs() <= g_crit * (1.0 + BOUNDARY_RTOL))
}

pub fn is_stable_spectral(p: &ModelParams) -> Result<bool> {
    let roots = quartic_roots(p)?;
    // Decay rate of a root is -Im(lambda).
    Ok(roots.iter().all(|r| -r.im > -SPECTRAL_TOL * p.omega_x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMethod {
    #[default]
    ClosedForm,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    pub detuning_axis: Vec<f64>,
    pub coupling_axis: Vec<f64>,
    /// `stable[i][j]` for `detuning_axis[i]`, `coupling_axis[j]`.
    pub stable: Vec<Vec<bool>>,
    /// `(delta, g_crit)` for each detuning.
    pub boundary: Vec<(f64, f64)>,
    pub method: StabilityMethod,
}

impl StabilityMap {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.stable[i][j]
    }

    pub fn unstable_fraction(&self) -> f64 {
        let n = self.detuning_axis.len() * self.coupling_axis.len();
        let bad = self.stable.iter().flatten().filter(|s| !**s).count();
        bad as f64 / n as f64
    }

    /// Grid CSV with header `detuning_hz,g_hz,stable`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record(["detuning_hz", "g_hz", "stable"])?;
        for (i, &d) in self.detuning_axis.iter().enumerate() {
            for (j, &g) in self.coupling_axis.iter().enumerate() {
                out.write_record([
                    fmt_num(angular_to_hz(d)),
                    fmt_num(angular_to_hz(g)),
                    u8::from(self.stable[i][j]).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Boundary CSV with header `detuning_hz,g_crit_hz`.
    pub fn write_boundary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record(["detuning_hz", "g_crit_hz"])?;
        for &(d, g) in &self.boundary {
            out.write_record([fmt_num(angular_to_hz(d)), fmt_num(angular_to_hz(g))])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fills the grid with the closed-form test.
pub fn stability_map(detunings: &[f64], couplings: &[f64], p_base: &ModelParams) -> Result<StabilityMap> {
    stability_map_with(detunings, couplings, p_base, StabilityMethod::ClosedForm)
}

pub fn stability_map_with(
    detunings: &[f64],
    couplings: &[f64],
    p_base: &ModelParams,
    method: StabilityMethod,
) -> Result<StabilityMap> {
    if detunings.is_empty() || couplings.is_empty() {
        return Err(Error::Precondition("stability map needs nonempty axes".into()));
    }
    if let Some(&d) = detunings.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::UnsupportedDetuning { detuning: d });
    }
    p_base.validate()?;
    let stable = detunings
        .par_iter()
        .map(|&d| {
            couplings
                .iter()
                .map(|&g| {
                    let p = p_base.with_detuning(d).with_g(g);
                    match method {
                        StabilityMethod::ClosedForm => is_stable_closed_form(&p),
                        StabilityMethod::Spectral => is_stable_spectral(&p),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let boundary = detunings
        .iter()
        .map(|&d| critical_coupling(d, p_base).map(|g| (d, g)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityMap {
        detuning_axis: detunings.to_vec(),
        coupling_axis: couplings.to_vec(),
        stable,
        boundary,
        method,
    })
}

/// `n` evenly spaced points on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lossless(p: ModelParams) -> ModelParams {
        p.with_gamma(0.0)
    }

    #[test]
    fn cavity_free_threshold_is_one_half() {
        let p = ModelParams::experiment().with_kappa(0.0);
        let w = p.omega_x;
        assert_eq!(critical_coupling(w, &p).unwrap() / w, 0.5);
        assert_eq!(critical_coupling(4.0 * w, &p).unwrap() / w, 1.0);
        assert!(is_stable_closed_form(&p.with_g(0.49 * w)).unwrap());
        assert!(!is_stable_closed_form(&p.with_g(0.51 * w)).unwrap());
    }

    #[test]
    fn experimental_linewidth_threshold() {
        let p = ModelParams::experiment();
        let r = critical_coupling(p.omega_x, &p).unwrap() / p.omega_x;
        let oracle = ((1.0 + (193.0f64 / 380.0).powi(2)) / 4.0).sqrt();
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 0.5608).abs() < 1e-4);
    }

    #[test]
    fn minimum_threshold_sits_at_half_linewidth() {
        let p = ModelParams::experiment();
        let ds = linspace(0.05 * p.omega_x, 3.0 * p.omega_x, 20001);
        let (best, _) = ds
            .iter()
            .map(|&d| (d, critical_coupling(d, &p).unwrap()))
            .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        assert!((best / (0.5 * p.kappa) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn non_positive_detuning_is_refused() {
        let p = ModelParams::experiment();
        for d in [0.0, -1.0] {
            assert!(matches!(
                is_stable_closed_form(&p.with_detuning(d)),
                Err(Error::UnsupportedDetuning { .. })
            ));
        }
    }

    #[test]
    fn spectral_test_flags_just_above_threshold() {
        let p = lossless(ModelParams::experiment());
        let g_crit = critical_coupling(p.detuning, &p).unwrap();
        assert!(is_stable_spectral(&p.with_g(0.0)).unwrap());
        assert!(is_stable_spectral(&p.with_g(0.95 * g_crit)).unwrap());
        assert!(!is_stable_spectral(&p.with_g(1.05 * g_crit)).unwrap());
    }

    #[test]
    fn grids_agree_away_from_boundary() {
        let p = lossless(ModelParams::experiment());
        let w = p.omega_x;
        let ds = linspace(0.2 * w, 3.0 * w, 50);
        let gs = linspace(0.0, w, 50);
        let a = stability_map_with(&ds, &gs, &p, StabilityMethod::ClosedForm).unwrap();
        let b = stability_map_with(&ds, &gs, &p, StabilityMethod::Spectral).unwrap();
        let dg = gs[1] - gs[0];
        for i in 0..ds.len() {
            for j in 0..gs.len() {
                if a.get(i, j) != b.get(i, j) {
                    assert!((gs[j] - a.boundary[i].1).abs() < dg, "disagree at {i},{j}");
                }
            }
        }
    }

    #[test]
    fn near_resonance_instability_window() {
        // At g = 0.55 omega the unstable window is delta in (0.276, 0.934) omega.
        let p = ModelParams::experiment();
        let w = p.omega_x;
        let ds = [0.5 * w, 0.9 * w, w];
        let m = stability_map(&ds, &[0.55 * w], &p).unwrap();
        assert!(!m.get(0, 0) && !m.get(1, 0));
        assert!(m.get(2, 0));
        assert!(!is_stable_spectral(&p.with_detuning(0.9 * w).with_g(0.55 * w)).unwrap());
    }

    #[test]
    fn single_cell_and_boundary() {
        let p = ModelParams::experiment();
        let w = p.omega_x;
        let m = stability_map(&[w], &[0.3 * w], &p).unwrap();
        assert_eq!(m.get(0, 0), is_stable_closed_form(&p.with_g(0.3 * w)).unwrap());
        assert_eq!(m.boundary[0], (w, critical_coupling(w, &p).unwrap()));
        assert_eq!(m.method, StabilityMethod::ClosedForm);
    }

    #[test]
    fn map_rejects_bad_axes() {
        let p = ModelParams::experiment();
        assert!(stability_map(&[], &[1.0], &p).is_err());
        assert!(matches!(
            stability_map(&[-1.0, 1.0], &[1.0], &p),
            Err(Error::UnsupportedDetuning { .. })
        ));
    }

    #[test]
    fn csv_headers() {
        let p = ModelParams::experiment();
        let m = stability_map(&[p.omega_x], &[0.0, 0.6 * p.omega_x], &p).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "detuning_hz,g_hz,stable");
        assert!(lines[1].ends_with(",1") && lines[2].ends_with(",0"));
        let mut buf = Vec::new();
        m.write_boundary_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("detuning_hz,g_crit_hz\n1.90000000000e5,"));
    }

    proptest! {
        #[test]
        fn stability_is_monotone_in_g(d in 0.1f64..4.0, g1 in 0.0f64..1.5, g2 in 0.0f64..1.5) {
            let p = ModelParams::experiment();
            let w = p.omega_x;
            let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            let p = p.with_detuning(d * w);
            let s_lo = is_stable_closed_form(&p.with_g(lo * w)).unwrap();
            let s_hi = is_stable_closed_form(&p.with_g(hi * w)).unwrap();
            prop_assert!(s_lo || !s_hi);
        }

        #[test]
        fn damping_does_not_destabilize(d in 0.2f64..3.0, g in 0.0f64..1.0) {
            // With gamma > 0 no point is spectrally unstable while clearly
            // closed-form stable.
            let p = ModelParams::experiment();
            let w = p.omega_x;
            let q = p.with_detuning(d * w).with_g(g * w);
            let g_crit = critical_coupling(q.detuning, &q).unwrap();
            if q.g < g_crit - 0.02 * w {
                prop_assert!(is_stable_spectral(&q).unwrap());
            }
        }

        #[test]
        fn closed_and_spectral_agree_off_boundary(d in 0.2f64..3.0, g in 0.0f64..1.0) {
            let p = lossless(ModelParams::experiment());
            let w = p.omega_x;
            let q = p.with_detuning(d * w).with_g(g * w);
            let g_crit = critical_coupling(q.detuning, &q).unwrap();
            prop_assume!((q.g - g_crit).abs() > 1e-3 * w);
            prop_assert_eq!(is_stable_closed_form(&q).unwrap(), is_stable_spectral(&q).unwrap());
        }
    }
}
