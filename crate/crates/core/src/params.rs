//! Parameter types shared by every module.
//!
//! Internally every frequency is angular (rad/s). Files and the command line
//! use ordinary frequency (Hz); the conversion happens once, in the serde
//! representation of [`ModelParams`] and in the CSV writers.
//!
//! `kappa` and `gamma` are *full* linewidths: the susceptibilities use
//! `kappa / 2` and `gamma / 2`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, InvalidParameter, Result};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Fused-silica defaults used when a setup omits them.
pub const DEFAULT_DENSITY: f64 = 1850.0;
pub const DEFAULT_REL_PERMITTIVITY: f64 = 2.1;

/// Radius above which the point-dipole treatment is flagged as questionable.
pub const DIPOLE_VALIDITY_FRACTION: f64 = 0.15;

pub fn hz_to_angular(f: f64) -> f64 {
    TAU * f
}

pub fn angular_to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// Thermal occupation `k_B T / (hbar Omega)` in the high-temperature limit.
pub fn thermal_occupation(temperature: f64, omega: f64) -> f64 {
    BOLTZMANN * temperature / (HBAR * omega)
}

/// Anything with checkable invariants.
pub trait Validate: Sized {
    fn violations(&self) -> Vec<InvalidParameter>;

    /// Returns `self` unchanged when every invariant holds.
    fn validate(self) -> Result<Self> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::Invalid(v))
        }
    }
}

fn check(out: &mut Vec<InvalidParameter>, ok: bool, field: &'static str, reason: impl Into<String>) {
    if !ok {
        out.push(InvalidParameter {
            field,
            reason: reason.into(),
        });
    }
}

/// Phenomenological parameters of the linear model. All rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ModelParamsHz", into = "ModelParamsHz")]
pub struct ModelParams {
    /// Bare mechanical frequency.
    pub omega_x: f64,
    /// Cavity detuning (cavity minus drive). Positive values are the cooling side.
    pub detuning: f64,
    /// Full cavity linewidth.
    pub kappa: f64,
    /// Full mechanical damping.
    pub gamma: f64,
    /// Linear coupling rate.
    pub g: f64,
    /// Mean bath phonon occupation.
    pub n_bath: f64,
}

/// On-disk representation of [`ModelParams`]: the same field names, in Hz.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParamsHz {
    pub omega_x: f64,
    pub detuning: f64,
    pub kappa: f64,
    pub gamma: f64,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub n_bath: f64,
}

impl From<ModelParamsHz> for ModelParams {
    fn from(p: ModelParamsHz) -> Self {
        ModelParams {
            omega_x: hz_to_angular(p.omega_x),
            detuning: hz_to_angular(p.detuning),
            kappa: hz_to_angular(p.kappa),
            gamma: hz_to_angular(p.gamma),
            g: hz_to_angular(p.g),
            n_bath: p.n_bath,
        }
    }
}

impl From<ModelParams> for ModelParamsHz {
    fn from(p: ModelParams) -> Self {
        ModelParamsHz {
            omega_x: angular_to_hz(p.omega_x),
            detuning: angular_to_hz(p.detuning),
            kappa: angular_to_hz(p.kappa),
            gamma: angular_to_hz(p.gamma),
            g: angular_to_hz(p.g),
            n_bath: p.n_bath,
        }
    }
}

impl ModelParams {
    /// Parameters of the experiment: `Omega_x = 2 pi 190 kHz`, `kappa = 2 pi 193 kHz`,
    /// `gamma = 2 pi 4 kHz`, resonant detuning, no coupling.
    pub fn experiment() -> Self {
        ModelParams {
            omega_x: hz_to_angular(190e3),
            detuning: hz_to_angular(190e3),
            kappa: hz_to_angular(193e3),
            gamma: hz_to_angular(4e3),
            g: 0.0,
            n_bath: 0.0,
        }
    }

    pub fn with_g(self, g: f64) -> Self {
        ModelParams { g, ..self }
    }

    pub fn with_detuning(self, detuning: f64) -> Self {
        ModelParams { detuning, ..self }
    }

    pub fn with_kappa(self, kappa: f64) -> Self {
        ModelParams { kappa, ..self }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        ModelParams { gamma, ..self }
    }

    pub fn with_n_bath(self, n_bath: f64) -> Self {
        ModelParams { n_bath, ..self }
    }
}

impl Validate for ModelParams {
    fn violations(&self) -> Vec<InvalidParameter> {
        let mut v = Vec::new();
        check(&mut v, self.omega_x.is_finite() && self.omega_x > 0.0, "omega_x", "must be finite and > 0");
        check(&mut v, self.detuning.is_finite(), "detuning", "must be finite");
        check(&mut v, self.kappa.is_finite() && self.kappa > 0.0, "kappa", "must be finite and > 0");
        check(&mut v, self.gamma.is_finite() && self.gamma >= 0.0, "gamma", "must be finite and >= 0");
        check(&mut v, self.g.is_finite() && self.g >= 0.0, "g", "must be finite and >= 0");
        check(&mut v, self.n_bath.is_finite() && self.n_bath >= 0.0, "n_bath", "must be finite and >= 0");
        v
    }
}

/// Complex eigenfrequency. `im` holds the decay rate: positive means damped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexFrequency {
    pub re: f64,
    pub im: f64,
}

impl ComplexFrequency {
    pub fn new(re: f64, im: f64) -> Self {
        ComplexFrequency { re, im }
    }

    /// From a root `lambda` of the characteristic polynomial, whose poles sit at
    /// `Omega - i gamma/2` (time dependence `exp(-i lambda t)`).
    pub fn from_root(lambda: Complex64) -> Self {
        ComplexFrequency {
            re: lambda.re,
            im: -lambda.im,
        }
    }

    pub fn to_root(self) -> Complex64 {
        Complex64::new(self.re, -self.im)
    }

    pub fn dist(self, other: ComplexFrequency) -> f64 {
        (self.re - other.re).hypot(self.im - other.im)
    }
}

/// Laboratory parameters from which coupling rates are derived. SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSetup {
    pub wavelength: f64,
    pub tweezer_power: f64,
    pub waist_x: f64,
    pub waist_y: f64,
    pub cavity_waist: f64,
    pub cavity_length: f64,
    pub radius: f64,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_permittivity")]
    pub rel_permittivity: f64,
    /// Polarization angle; `pi/2` puts the tweezer polarization orthogonal to the cavity axis.
    pub pol_angle: f64,
    /// Mean particle position relative to the central cavity node and the
    /// tweezer focus: `(x0, y0, z0)` with x along the cavity axis and z along the tweezer.
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default = "one")]
    pub trap_waist_scale_x: f64,
    #[serde(default = "one")]
    pub trap_waist_scale_y: f64,
}

fn default_density() -> f64 {
    DEFAULT_DENSITY
}

fn default_permittivity() -> f64 {
    DEFAULT_REL_PERMITTIVITY
}

fn one() -> f64 {
    1.0
}

impl PhysicalSetup {
    /// The apparatus as described: 1064 nm tweezer at 0.4 W with waists
    /// 0.67/0.77 um, a 1.07 cm cavity with 41.1 um waist, a 105 nm silica
    /// particle at the cavity node with polarization orthogonal to the cavity axis.
    pub fn experiment() -> Self {
        PhysicalSetup {
            wavelength: 1064e-9,
            tweezer_power: 0.4,
            waist_x: 0.67e-6,
            waist_y: 0.77e-6,
            cavity_waist: 41.1e-6,
            cavity_length: 1.07e-2,
            radius: 105e-9,
            density: DEFAULT_DENSITY,
            rel_permittivity: DEFAULT_REL_PERMITTIVITY,
            pol_angle: PI / 2.0,
            position: [0.0; 3],
            trap_waist_scale_x: 1.0,
            trap_waist_scale_y: 1.0,
        }
    }

    /// Set when the radius exceeds `0.15 * wavelength`.
    pub fn dipole_warning(&self) -> bool {
        self.radius > DIPOLE_VALIDITY_FRACTION * self.wavelength
    }
}

impl Validate for PhysicalSetup {
    fn violations(&self) -> Vec<InvalidParameter> {
        let mut v = Vec::new();
        let positive = |x: f64| x.is_finite() && x > 0.0;
        check(&mut v, positive(self.wavelength), "wavelength", "must be finite and > 0");
        check(&mut v, positive(self.tweezer_power), "tweezer_power", "must be finite and > 0");
        check(&mut v, positive(self.waist_x), "waist_x", "must be finite and > 0");
        check(&mut v, positive(self.waist_y), "waist_y", "must be finite and > 0");
        check(&mut v, positive(self.cavity_waist), "cavity_waist", "must be finite and > 0");
        check(&mut v, positive(self.cavity_length), "cavity_length", "must be finite and > 0");
        check(&mut v, positive(self.radius), "radius", "must be finite and > 0");
        check(&mut v, positive(self.density), "density", "must be finite and > 0");
        check(&mut v, positive(self.rel_permittivity), "rel_permittivity", "must be finite and > 0");
        check(
            &mut v,
            (0.0..=PI / 2.0).contains(&self.pol_angle),
            "pol_angle",
            "must lie in [0, pi/2]",
        );
        check(&mut v, self.position.iter().all(|x| x.is_finite()), "position", "must be finite");
        check(&mut v, positive(self.trap_waist_scale_x), "trap_waist_scale_x", "must be finite and > 0");
        check(&mut v, positive(self.trap_waist_scale_y), "trap_waist_scale_y", "must be finite and > 0");
        v
    }
}
