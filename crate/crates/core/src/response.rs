//! Frequency-domain linear response of the coupled cavity and oscillator.
//!
//! Conventions: Fourier components carry `exp(-i omega t)`, so the bare
//! susceptibilities
//!
//! ```text
//! chi_l(w) = 1 / (kappa/2 - i (w - Delta))
//! chi_m(w) = 1 / (gamma/2 - i (w - Omega_x))
//! ```
//!
//! have poles at `Delta - i kappa/2` and `Omega_x - i gamma/2`. The operator
//! vector is ordered `(a, a^dag, b, b^dag)` and the inputs are a vacuum optical
//! bath and a thermal mechanical bath of occupation `n_bath`.
//!
//! Spectra are two-sided in angular frequency, normalized so that
//! `<x^2> = (1/2 pi) * integral S(w) dw`. The `*_one_sided_hz` variants return
//! `S(2 pi f) + S(-2 pi f)`, which integrates over `f > 0` to the same variance.

use std::f64::consts::TAU;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::ModelParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative determinant threshold below which a probe frequency counts as singular.
pub const SINGULAR_DET_TOL: f64 = 1e-12;
/// Absolute threshold on the `1/nu` denominator.
pub const SINGULAR_NU_TOL: f64 = 1e-14;

pub fn chi_l(omega: f64, p: &ModelParams) -> Complex64 {
    1.0 / Complex64::new(0.5 * p.kappa, -(omega - p.detuning))
}

pub fn chi_m(omega: f64, p: &ModelParams) -> Result<Complex64> {
    let d = Complex64::new(0.5 * p.gamma, -(omega - p.omega_x));
    if d.norm() == 0.0 {
        return Err(Error::SingularSusceptibility { omega });
    }
    Ok(1.0 / d)
}

/// `chi_l(w) - chi_l^*(-w)`, continued analytically to complex `w`.
pub(crate) fn optical_difference(lambda: Complex64, p: &ModelParams) -> Complex64 {
    let k2 = 0.5 * p.kappa;
    1.0 / (k2 - I * (lambda - p.detuning)) - 1.0 / (k2 - I * (lambda + p.detuning))
}

/// `chi_m(w) - chi_m^*(-w)`, continued analytically to complex `w`.
pub(crate) fn mechanical_difference(lambda: Complex64, p: &ModelParams) -> Complex64 {
    let g2 = 0.5 * p.gamma;
    1.0 / (g2 - I * (lambda - p.omega_x)) - 1.0 / (g2 - I * (lambda + p.omega_x))
}

/// The 4x4 matrix `M(w)` acting on `(a, a^dag, b, b^dag)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingMatrix {
    pub omega: f64,
    pub entries: [[Complex64; 4]; 4],
}

impl CouplingMatrix {
    pub fn to_matrix(&self) -> Matrix4<Complex64> {
        Matrix4::from_fn(|i, j| self.entries[i][j])
    }

    pub fn determinant(&self) -> Complex64 {
        self.to_matrix().determinant()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.entries
            .iter()
            .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[Complex64; 4]) -> [Complex64; 4] {
        std::array::from_fn(|i| (0..4).map(|j| self.entries[i][j] * x[j]).sum())
    }
}

pub fn coupling_matrix(omega: f64, p: &ModelParams) -> Result<CouplingMatrix> {
    let ig = I * p.g;
    let cl = chi_l(omega, p);
    let cl_mirror = chi_l(-omega, p).conj();
    let cm = chi_m(omega, p)?;
    let cm_mirror = chi_m(-omega, p)?.conj();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let entries = [
        [one, zero, ig * cl, ig * cl],
        [zero, one, -ig * cl_mirror, -ig * cl_mirror],
        [ig * cm, ig * cm, one, zero],
        [-ig * cm_mirror, -ig * cm_mirror, zero, one],
    ];
    Ok(CouplingMatrix { omega, entries })
}

/// Solves `M(w) x = drive`.
pub fn solve_response(omega: f64, p: &ModelParams, drive: &[Complex64; 4]) -> Result<[Complex64; 4]> {
    let m = coupling_matrix(omega, p)?;
    solve_with(&m, drive)
}

fn solve_with(m: &CouplingMatrix, drive: &[Complex64; 4]) -> Result<[Complex64; 4]> {
    let mat = m.to_matrix();
    let lu = mat.lu();
    let det = lu.determinant();
    if !(det.norm() >= SINGULAR_DET_TOL * m.norm_inf().powi(4)) {
        return Err(Error::SingularAtFrequency { omega: m.omega });
    }
    let x = lu
        .solve(&Vector4::from_column_slice(drive))
        .ok_or(Error::SingularAtFrequency { omega: m.omega })?;
    Ok([x[0], x[1], x[2], x[3]])
}

pub fn nu(omega: f64, p: &ModelParams) -> Result<Complex64> {
    let z = Complex64::new(omega, 0.0);
    let denom = 1.0 + p.g * p.g * optical_difference(z, p) * mechanical_difference(z, p);
    if denom.norm() < SINGULAR_NU_TOL {
        return Err(Error::SingularAtFrequency { omega });
    }
    Ok(1.0 / denom)
}

/// Two-sided mechanical position PSD at angular frequency `omega`, normalized
/// so that its integral over `d omega / 2 pi` is the position variance.
pub fn psd_xx(omega: f64, p: &ModelParams, x_zpf: f64) -> Result<f64> {
    let cm = chi_m(omega, p)?;
    let cm_neg = chi_m(-omega, p)?;
    let cl = chi_l(omega, p);
    let v = nu(omega, p)?;
    let thermal = p.gamma * (cm.norm_sqr() * (p.n_bath + 1.0) + cm_neg.norm_sqr() * p.n_bath);
    let backaction = p.g * p.g * p.kappa * cl.norm_sqr() * (cm - cm_neg.conj()).norm_sqr();
    Ok(x_zpf * x_zpf * v.norm_sqr() * (thermal + backaction))
}

/// One-sided position PSD per Hz at ordinary frequency `f_hz` (m^2/Hz when `x_zpf` is in m).
pub fn psd_xx_one_sided_hz(f_hz: f64, p: &ModelParams, x_zpf: f64) -> Result<f64> {
    let w = TAU * f_hz;
    Ok(psd_xx(w, p, x_zpf)? + psd_xx(-w, p, x_zpf)?)
}

/// Unsymmetrized spectrum of the intracavity amplitude quadrature `a + a^dag`,
/// obtained by solving the linear system once per independent input.
fn cavity_spectrum_unsymmetrized(omega: f64, p: &ModelParams) -> Result<f64> {
    let m = coupling_matrix(omega, p)?;
    let zero = Complex64::new(0.0, 0.0);
    let sk = p.kappa.sqrt();
    let sg = p.gamma.sqrt();
    // (drive, weight): a_in carries vacuum (n + 1 = 1), a_in^dag contributes n = 0.
    let mut inputs = vec![([sk * chi_l(omega, p), zero, zero, zero], 1.0)];
    if p.gamma > 0.0 {
        inputs.push(([zero, zero, sg * chi_m(omega, p)?, zero], p.n_bath + 1.0));
        inputs.push(([zero, zero, zero, sg * chi_m(-omega, p)?.conj()], p.n_bath));
    }
    let mut total = 0.0;
    for (drive, weight) in inputs {
        if weight == 0.0 {
            continue;
        }
        let x = solve_with(&m, &drive)?;
        total += weight * (x[0] + x[1]).norm_sqr();
    }
    Ok(total)
}

/// Symmetrized two-sided PSD of the intracavity amplitude quadrature `a + a^dag`
/// (arbitrary units: photon-number-normalized).
pub fn psd_cavity(omega: f64, p: &ModelParams) -> Result<f64> {
    Ok(0.5 * (cavity_spectrum_unsymmetrized(omega, p)? + cavity_spectrum_unsymmetrized(-omega, p)?))
}

pub fn psd_cavity_one_sided_hz(f_hz: f64, p: &ModelParams) -> Result<f64> {
    Ok(2.0 * psd_cavity(TAU * f_hz, p)?)
}
