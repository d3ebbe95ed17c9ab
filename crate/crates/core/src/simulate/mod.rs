//! Stochastic time-domain integration of the linear Langevin equations.
//!
//! With `X_c = (a + a^dag)/sqrt(2)`, `Y_c = (a - a^dag)/(i sqrt(2))` and the
//! same for the mechanics, the Hamiltonian
//! `Delta a^dag a + Omega b^dag b + g (a + a^dag)(b + b^dag)` gives
//!
//! ```text
//! dX_c = (-kappa/2 X_c + Delta Y_c) dt          + sqrt(kappa) dW_1
//! dY_c = (-kappa/2 Y_c - Delta X_c - 2g X_m) dt + sqrt(kappa) dW_2
//! dX_m = (-gamma/2 X_m + Omega Y_m) dt          + sqrt(gamma) dW_3
//! dY_m = (-gamma/2 Y_m - Omega X_m - 2g X_c) dt + sqrt(gamma) dW_4
//! ```
//!
//! where the optical increments have variance `dt/2` (vacuum) and the
//! mechanical ones `(N + 1/2) dt`, so that at `g = 0` every mechanical
//! quadrature relaxes to variance `N + 1/2`. Quadratures are in zero-point
//! units: `x = sqrt(2) x_zpf X_m`.
//!
//! Samples are drawn from `ChaCha8Rng` (rand_chacha 0.9) seeded with
//! `seed_from_u64`, with normals from `rand_distr::StandardNormal`
//! (ziggurat). The name is written into every trace.

mod synth;
mod trace;
mod welch;

pub use synth::{synthesize_spectrum, SnrModel};
pub use trace::TimeTrace;
pub use welch::{welch_psd, Window};

use std::f64::consts::TAU;

use nalgebra::{Matrix4, SMatrix, SymmetricEigen, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, Validate};
use crate::polaritons::quartic_roots;

pub const GENERATOR: &str = "ChaCha8Rng(rand_chacha 0.9, seed_from_u64)+StandardNormal(rand_distr 0.5, ziggurat)";

/// Largest allowed `dt` as a fraction of the fastest period.
pub const STIFFNESS_FRACTION: f64 = 0.05;
/// Samples beyond this multiple of the initial scale abort the run.
pub const DIVERGENCE_FACTOR: f64 = 1e12;
/// Unstable runs must satisfy `duration * growth_rate` below this.
pub const MAX_GROWTH_EXPONENT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "xc")]
    Xc,
    #[serde(rename = "yc")]
    Yc,
    #[serde(rename = "xm")]
    Xm,
    #[serde(rename = "ym")]
    Ym,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Xc, Channel::Yc, Channel::Xm, Channel::Ym];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Xc => "xc",
            Channel::Yc => "yc",
            Channel::Xm => "xm",
            Channel::Ym => "ym",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    EulerMaruyama,
    /// Exact Gaussian update `x <- exp(A dt) x + L xi` with the matching
    /// discrete noise covariance `L L^T`.
    ExactGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Zero,
    /// Drawn from the stationary distribution of the stable system.
    Stationary,
    Fixed([f64; 4]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step (s).
    pub dt: f64,
    /// Total simulated time (s).
    pub duration: f64,
    pub seed: u64,
    /// Mechanical bath occupation; overrides `ModelParams::n_bath`.
    pub n_bath: f64,
    #[serde(default = "default_record")]
    pub record: Vec<Channel>,
    /// Keep every `decimate`-th step.
    #[serde(default = "one")]
    pub decimate: usize,
    /// Multiplies every noise amplitude; 0 gives the deterministic flow.
    #[serde(default = "unit")]
    pub noise_scale: f64,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub integrator: Integrator,
}

fn default_record() -> Vec<Channel> {
    vec![Channel::Xm]
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl SimConfig {
    pub fn new(dt: f64, duration: f64, seed: u64, n_bath: f64) -> Self {
        SimConfig {
            dt,
            duration,
            seed,
            n_bath,
            record: default_record(),
            decimate: 1,
            noise_scale: 1.0,
            initial: InitialState::Zero,
            integrator: Integrator::EulerMaruyama,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// `dt` must stay below this for the given parameters.
pub fn stiffness_limit(p: &ModelParams) -> f64 {
    STIFFNESS_FRACTION * TAU / p.omega_x.max(p.detuning.abs() + p.kappa)
}

/// Drift matrix on `(X_c, Y_c, X_m, Y_m)`. Its eigenvalues `mu` map to the
/// characteristic roots through `lambda = i mu`.
pub fn drift_matrix(p: &ModelParams) -> Matrix4<f64> {
    let (k, d, w, gm, g) = (p.kappa / 2.0, p.detuning, p.omega_x, p.gamma / 2.0, p.g);
    Matrix4::new(
        -k, d, 0.0, 0.0, //
        -d, -k, -2.0 * g, 0.0, //
        0.0, 0.0, -gm, w, //
        -2.0 * g, 0.0, -w, -gm,
    )
}

/// Diagonal of the diffusion matrix: `E[dW dW^T] = diag(..) dt`.
pub fn diffusion_diagonal(p: &ModelParams, n_bath: f64) -> Vector4<f64> {
    let opt = 0.5 * p.kappa;
    let mech = (n_bath + 0.5) * p.gamma;
    Vector4::new(opt, opt, mech, mech)
}

/// Solves `A S + S A^T + D = 0` for a stable drift matrix.
pub fn stationary_covariance(p: &ModelParams, n_bath: f64) -> Result<Matrix4<f64>> {
    let a = drift_matrix(p);
    let d = Matrix4::from_diagonal(&diffusion_diagonal(p, n_bath));
    // Column-major vec(A S + S A^T) = (I kron A + A kron I) vec(S).
    let eye = Matrix4::<f64>::identity();
    let op: SMatrix<f64, 16, 16> = eye.kronecker(&a) + a.kronecker(&eye);
    let rhs = SMatrix::<f64, 16, 1>::from_iterator(d.iter().map(|x| -x));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Precondition("stationary covariance needs a stable, damped system".into()))?;
    let s = Matrix4::from_iterator(sol.iter().copied());
    Ok(0.5 * (s + s.transpose()))
}

/// Symmetric square root factor `L` with `L L^T = m`, clamping tiny negative
/// eigenvalues from round-off.
fn psd_sqrt(m: &Matrix4<f64>) -> Matrix4<f64> {
    let eig = SymmetricEigen::new(0.5 * (m + m.transpose()));
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * Matrix4::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Discrete propagator and noise factor for one exact step.
fn exact_step(a: &Matrix4<f64>, d: &Vector4<f64>, dt: f64) -> (Matrix4<f64>, Matrix4<f64>) {
    // Van Loan: exp([[-A, D], [0, A^T]] dt) = [[., F12], [0, F22]],
    // Q = F22^T F12.
    let mut big = SMatrix::<f64, 8, 8>::zeros();
    big.fixed_view_mut::<4, 4>(0, 0).copy_from(&(-a * dt));
    big.fixed_view_mut::<4, 4>(0, 4).copy_from(&(Matrix4::from_diagonal(d) * dt));
    big.fixed_view_mut::<4, 4>(4, 4).copy_from(&(a.transpose() * dt));
    let e = big.exp();
    let f12: Matrix4<f64> = e.fixed_view::<4, 4>(0, 4).into();
    let f22: Matrix4<f64> = e.fixed_view::<4, 4>(4, 4).into();
    let phi = f22.transpose();
    (phi, psd_sqrt(&(phi * f12)))
}

fn check_config(p: &ModelParams, cfg: &SimConfig) -> Result<()> {
    let mut problems = Vec::new();
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        problems.push("dt must be finite and > 0".to_string());
    }
    let min_duration = 100.0 * TAU / p.omega_x;
    if !(cfg.duration.is_finite() && cfg.duration >= min_duration) {
        problems.push(format!("duration must be at least 100 mechanical periods ({min_duration:e} s)"));
    }
    if !(cfg.n_bath.is_finite() && cfg.n_bath >= 0.0) {
        problems.push("n_bath must be finite and >= 0".to_string());
    }
    if cfg.record.is_empty() {
        problems.push("record at least one channel".to_string());
    }
    if cfg.decimate == 0 {
        problems.push("decimate must be >= 1".to_string());
    }
    if !(cfg.noise_scale.is_finite() && cfg.noise_scale >= 0.0) {
        problems.push("noise_scale must be finite and >= 0".to_string());
    }
    if !problems.is_empty() {
        return Err(Error::Precondition(problems.join("; ")));
    }
    let limit = stiffness_limit(p);
    if cfg.dt >= limit {
        return Err(Error::StiffnessGuard { dt: cfg.dt, limit });
    }
    Ok(())
}

/// Largest growth rate among the characteristic roots (negative when stable).
pub fn max_growth_rate(p: &ModelParams) -> Result<f64> {
    let roots = quartic_roots(p)?;
    Ok(roots.iter().map(|r| r.im).fold(f64::NEG_INFINITY, f64::max))
}

pub fn simulate_langevin(p: &ModelParams, cfg: &SimConfig) -> Result<TimeTrace> {
    p.validate()?;
    check_config(p, cfg)?;
    let growth = max_growth_rate(p)?;
    if growth > 0.0 && growth * cfg.duration >= MAX_GROWTH_EXPONENT {
        return Err(Error::Precondition(format!(
            "unstable system: duration * growth rate = {:.3} exceeds {MAX_GROWTH_EXPONENT}",
            growth * cfg.duration
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal4 = || Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));

    let a = drift_matrix(p);
    let diff = diffusion_diagonal(p, cfg.n_bath) * cfg.noise_scale.powi(2);
    let mut x = match cfg.initial {
        InitialState::Zero => Vector4::zeros(),
        InitialState::Fixed(v) => Vector4::from(v),
        InitialState::Stationary => {
            let s = stationary_covariance(p, cfg.n_bath)? * cfg.noise_scale.powi(2);
            psd_sqrt(&s) * normal4()
        }
    };
    let scale = x.norm().max(cfg.noise_scale * (cfg.n_bath + 0.5).sqrt()).max(f64::MIN_POSITIVE);
    let bound = DIVERGENCE_FACTOR * scale;

    let (phi, noise) = match cfg.integrator {
        Integrator::EulerMaruyama => (
            Matrix4::identity() + a * cfg.dt,
            Matrix4::from_diagonal(&diff.map(|v| (v * cfg.dt).sqrt())),
        ),
        Integrator::ExactGaussian => exact_step(&a, &diff, cfg.dt),
    };
    let noisy = cfg.noise_scale > 0.0;

    let steps = cfg.steps();
    let n_out = steps / cfg.decimate + 1;
    let idx: Vec<usize> = cfg.record.iter().map(|c| c.index()).collect();
    let mut data: Vec<Vec<f64>> = vec![Vec::with_capacity(n_out); idx.len()];
    let push = |data: &mut Vec<Vec<f64>>, x: &Vector4<f64>| {
        for (col, &i) in data.iter_mut().zip(&idx) {
            col.push(x[i]);
        }
    };
    push(&mut data, &x);
    for step in 1..=steps {
        x = if noisy { phi * x + noise * normal4() } else { phi * x };
        if step % cfg.decimate == 0 {
            let m = x.amax();
            if !(m <= bound) {
                return Err(Error::DivergenceGuard { step, magnitude: m });
            }
            push(&mut data, &x);
        }
    }
    TimeTrace::new(
        cfg.dt * cfg.decimate as f64,
        cfg.record.iter().map(|c| c.name().to_string()).zip(data).collect(),
        cfg.seed,
    )
}
