//! Hybridized normal modes: roots of the characteristic quartic, branch
//! labeling, and detuning scans through the avoided crossing.
//!
//! Expanding `det M(lambda) = 0` with the analytically continued
//! susceptibilities gives
//!
//! ```text
//! det M(lambda) = 2 Omega_x P(lambda) / (C(lambda) Q(lambda))
//! P(lambda) = Q(lambda) C(lambda) / (2 Omega_x) - 2 Delta g^2
//! Q(lambda) = (lambda - Omega_x + i gamma/2)(lambda + Omega_x + i gamma/2)
//! C(lambda) = (lambda - Delta + i kappa/2)(lambda + Delta + i kappa/2)
//! ```
//!
//! The sign of the coupling term is fixed by the static instability: at
//! `lambda = 0`, `P = 0` reproduces `g^2 = Omega_x (Delta^2 + kappa^2/4) / (4 Delta)`.
//! `Q` keeps the `-gamma^2/4` term so that the decoupled roots are exactly the
//! susceptibility poles.
//!
//! Roots come in mirror pairs `(lambda, -conj(lambda))`; the representatives
//! with non-negative real part are the physical modes.

use std::io::Write;

use nalgebra::{Matrix4, Schur};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_writer, fmt_num};
use crate::params::{angular_to_hz, ComplexFrequency, ModelParams};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative residual accepted for a polished root.
pub const ROOT_TOL: f64 = 1e-9;
const NEWTON_STEPS: usize = 3;

pub fn characteristic_poly(lambda: Complex64, p: &ModelParams) -> Complex64 {
    let q = mechanical_factor(lambda, p);
    let c = optical_factor(lambda, p);
    q * c / (2.0 * p.omega_x) - 2.0 * p.detuning * p.g * p.g
}

fn mechanical_factor(lambda: Complex64, p: &ModelParams) -> Complex64 {
    let shift = I * (0.5 * p.gamma);
    (lambda - p.omega_x + shift) * (lambda + p.omega_x + shift)
}

fn optical_factor(lambda: Complex64, p: &ModelParams) -> Complex64 {
    let shift = I * (0.5 * p.kappa);
    (lambda - p.detuning + shift) * (lambda + p.detuning + shift)
}

/// Monic coefficients `[a0, a1, a2, a3]` of `2 Omega_x P(lambda)`.
pub fn monic_coefficients(p: &ModelParams) -> [Complex64; 4] {
    let q0 = -(p.omega_x * p.omega_x + 0.25 * p.gamma * p.gamma);
    let c0 = -(p.detuning * p.detuning + 0.25 * p.kappa * p.kappa);
    let a3 = I * (p.gamma + p.kappa);
    let a2 = Complex64::new(q0 + c0 - p.gamma * p.kappa, 0.0);
    let a1 = I * (p.gamma * c0 + p.kappa * q0);
    let a0 = Complex64::new(q0 * c0 - 4.0 * p.omega_x * p.detuning * p.g * p.g, 0.0);
    [a0, a1, a2, a3]
}

fn derivative(lambda: Complex64, p: &ModelParams) -> Complex64 {
    let [_, a1, a2, a3] = monic_coefficients(p);
    let d = ((4.0 * lambda + 3.0 * a3) * lambda + 2.0 * a2) * lambda + a1;
    d / (2.0 * p.omega_x)
}

/// Magnitude against which residuals of `characteristic_poly` are judged.
fn residual_scale(lambda: Complex64, p: &ModelParams) -> f64 {
    let r = p
        .omega_x
        .max(p.detuning.abs())
        .max(p.kappa)
        .max(p.gamma)
        .max(lambda.norm());
    r.powi(4) / (2.0 * p.omega_x) + 2.0 * p.detuning.abs() * p.g * p.g
}

pub fn relative_residual(lambda: Complex64, p: &ModelParams) -> f64 {
    characteristic_poly(lambda, p).norm() / residual_scale(lambda, p)
}

/// All four roots of the quartic, from the eigenvalues of its companion matrix
/// followed by Newton polishing.
pub fn quartic_roots(p: &ModelParams) -> Result<[Complex64; 4]> {
    let a = monic_coefficients(p);
    // Balance by the natural frequency scale so the companion matrix is O(1).
    let s = p.omega_x.max(p.detuning.abs()).max(p.kappa).max(p.gamma);
    let b: [Complex64; 4] = std::array::from_fn(|k| a[k] / s.powi(4 - k as i32));
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let companion = Matrix4::new(
        zero, zero, zero, -b[0], //
        one, zero, zero, -b[1], //
        zero, one, zero, -b[2], //
        zero, zero, one, -b[3],
    );
    let eig = Schur::new(companion)
        .eigenvalues()
        .ok_or(Error::RootFindingFailed {
            residual: f64::NAN,
            tolerance: ROOT_TOL,
            detuning: Some(p.detuning),
        })?;
    let mut roots = [zero; 4];
    for (k, root) in roots.iter_mut().enumerate() {
        let mut z = eig[k] * s;
        for _ in 0..NEWTON_STEPS {
            let d = derivative(z, p);
            if d.norm() == 0.0 {
                break;
            }
            let step = characteristic_poly(z, p) / d;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            let candidate = z - step;
            if relative_residual(candidate, p) <= relative_residual(z, p) {
                z = candidate;
            } else {
                break;
            }
        }
        let res = relative_residual(z, p);
        if !(res < ROOT_TOL) {
            return Err(Error::RootFindingFailed {
                residual: res,
                tolerance: ROOT_TOL,
                detuning: Some(p.detuning),
            });
        }
        *root = z;
    }
    Ok(roots)
}

/// The upper and lower polariton at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolaritonPair {
    pub upper: ComplexFrequency,
    pub lower: ComplexFrequency,
}

impl PolaritonPair {
    pub fn splitting(&self) -> f64 {
        self.upper.re - self.lower.re
    }
}

/// Picks the two physical representatives out of four roots.
///
/// Roots off the imaginary axis come in mirror pairs; the member with positive
/// real part is kept. Roots on the imaginary axis (unstable static mode) are
/// their own mirrors; among those the least damped is kept.
fn select_pair(roots: &[Complex64; 4], p: &ModelParams) -> PolaritonPair {
    let tol = 1e-9 * p.omega_x.max(p.detuning.abs());
    let mut freqs: Vec<ComplexFrequency> = roots.iter().map(|&z| ComplexFrequency::from_root(z)).collect();
    freqs.sort_by(|a, b| b.re.total_cmp(&a.re));
    let upper = freqs[0];
    let rest = &freqs[1..];
    let lower = if rest[0].re > tol {
        rest[0]
    } else {
        let on_axis = rest
            .iter()
            .filter(|f| f.re.abs() <= tol)
            .min_by(|a, b| a.im.total_cmp(&b.im))
            .unwrap_or(&rest[0]);
        ComplexFrequency::new(0.0, on_axis.im)
    };
    PolaritonPair { upper, lower }
}

pub fn polariton_modes(p: &ModelParams) -> Result<PolaritonPair> {
    let roots = quartic_roots(p)?;
    Ok(select_pair(&roots, p))
}

/// Polariton branches along a detuning sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchScan {
    pub detunings: Vec<f64>,
    pub upper_branch: Vec<ComplexFrequency>,
    pub lower_branch: Vec<ComplexFrequency>,
    pub continuous: bool,
}

impl BranchScan {
    /// Smallest `upper.re - lower.re` along the scan. Non-positive when the
    /// tracked branches cross.
    pub fn min_gap(&self) -> f64 {
        self.upper_branch
            .iter()
            .zip(&self.lower_branch)
            .map(|(u, l)| u.re - l.re)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn crosses(&self) -> bool {
        self.min_gap() <= 0.0
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record([
            "detuning_hz",
            "upper_re_hz",
            "upper_im_hz",
            "lower_re_hz",
            "lower_im_hz",
            "continuous",
        ])?;
        for i in 0..self.detunings.len() {
            let (u, l) = (self.upper_branch[i], self.lower_branch[i]);
            out.write_record([
                fmt_num(angular_to_hz(self.detunings[i])),
                fmt_num(angular_to_hz(u.re)),
                fmt_num(angular_to_hz(u.im)),
                fmt_num(angular_to_hz(l.re)),
                fmt_num(angular_to_hz(l.im)),
                self.continuous.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Evaluates the polaritons at every detuning and tracks the two branches by
/// nearest-neighbor continuation, starting from the largest detuning where the
/// modes are close to the bare cavity (upper) and mechanics (lower).
pub fn detuning_scan(p_base: &ModelParams, detunings: &[f64]) -> Result<BranchScan> {
    if detunings.is_empty() {
        return Err(Error::Precondition("detuning list is empty".into()));
    }
    let pairs = detunings
        .par_iter()
        .map(|&d| {
            polariton_modes(&p_base.with_detuning(d)).map_err(|e| match e {
                Error::RootFindingFailed {
                    residual, tolerance, ..
                } => Error::RootFindingFailed {
                    residual,
                    tolerance,
                    detuning: Some(d),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..detunings.len()).collect();
    order.sort_by(|&a, &b| detunings[b].total_cmp(&detunings[a]));

    let n = detunings.len();
    let mut upper = vec![ComplexFrequency::new(0.0, 0.0); n];
    let mut lower = upper.clone();
    let first = order[0];
    upper[first] = pairs[first].upper;
    lower[first] = pairs[first].lower;
    for w in order.windows(2) {
        let (prev, cur) = (w[0], w[1]);
        let (a, b) = (pairs[cur].upper, pairs[cur].lower);
        let straight = a.dist(upper[prev]) + b.dist(lower[prev]);
        let swapped = b.dist(upper[prev]) + a.dist(lower[prev]);
        if swapped < straight {
            upper[cur] = b;
            lower[cur] = a;
        } else {
            upper[cur] = a;
            lower[cur] = b;
        }
    }

    let scale = p_base.omega_x;
    let continuous = [&upper, &lower].iter().all(|branch| {
        order.windows(3).all(|w| {
            let (z0, z1, z2) = (branch[w[0]], branch[w[1]], branch[w[2]]);
            let ratio = (detunings[w[2]] - detunings[w[1]]) / (detunings[w[1]] - detunings[w[0]]);
            if !ratio.is_finite() {
                return true;
            }
            let pred_re = z1.re + (z1.re - z0.re) * ratio;
            let pred_im = z1.im + (z1.im - z0.im) * ratio;
            let deviation = (z2.re - pred_re).hypot(z2.im - pred_im);
            deviation <= 3.0 * z1.dist(z0) * ratio.abs() + 1e-6 * scale
        })
    });

    Ok(BranchScan {
        detunings: detunings.to_vec(),
        upper_branch: upper,
        lower_branch: lower,
        continuous,
    })
}
