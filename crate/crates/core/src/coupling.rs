//! Coherent-scattering coupling rates of a physical setup.
//!
//! The drive amplitude is `E_d = alpha eps_tw eps_cav / (2 hbar)`. The
//! polarization angle enters once per term: `g_x ~ sin(theta)`,
//! `g_y ~ cos(theta)`. `position[0]` is measured from the cavity node, so the
//! standing-wave phase is `phi = pi/2 + k x0` and `g_x ~ sin(phi)`,
//! `dispersive_drive ~ cos(phi)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_writer, fmt_num};
use crate::params::{angular_to_hz, hz_to_angular, PhysicalSetup, Validate, EPSILON_0, HBAR, SPEED_OF_LIGHT};

/// Mechanical trap frequencies (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapFrequencies {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl TrapFrequencies {
    /// 190 kHz along the cavity axis, with y at 0.95 and z at 0.2 of it.
    pub fn experiment() -> Self {
        let x = hz_to_angular(190e3);
        TrapFrequencies { x, y: 0.95 * x, z: 0.2 * x }
    }

    fn check(&self) -> Result<()> {
        if [self.x, self.y, self.z].iter().all(|w| w.is_finite() && *w > 0.0) {
            Ok(())
        } else {
            Err(Error::Precondition("trap frequencies must be finite and > 0".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingBreakdown {
    pub g_x: f64,
    pub g_y: f64,
    pub g_z: f64,
    pub dispersive_drive: f64,
    pub f_geom: f64,
    pub x_zpf: f64,
    pub y_zpf: f64,
    pub z_zpf: f64,
    #[serde(rename = "E_d")]
    pub e_d: f64,
    pub eps_cav: f64,
    pub eps_tw: f64,
    pub alpha: f64,
    pub k: f64,
    pub z_r: f64,
    pub v_cav: f64,
    pub mass: f64,
    pub dipole_warning: bool,
}

/// Setup-derived scalars, before any angle or position dependence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedFields {
    pub mass: f64,
    pub x_zpf: f64,
    pub y_zpf: f64,
    pub z_zpf: f64,
    pub k: f64,
    pub z_r: f64,
    pub eps_tw: f64,
    pub eps_cav: f64,
    pub v_cav: f64,
    pub alpha: f64,
}

pub fn cavity_frequency(s: &PhysicalSetup) -> f64 {
    TAU * SPEED_OF_LIGHT / s.wavelength
}

pub fn derived_fields(s: &PhysicalSetup, omega: &TrapFrequencies, omega_cav: f64) -> Result<DerivedFields> {
    s.clone().validate()?;
    omega.check()?;
    let mass = s.density * 4.0 / 3.0 * PI * s.radius.powi(3);
    let zpf = |w: f64| (HBAR / (2.0 * mass * w)).sqrt();
    let v_cav = PI * s.cavity_waist.powi(2) * s.cavity_length / 4.0;
    let er = s.rel_permittivity;
    Ok(DerivedFields {
        mass,
        x_zpf: zpf(omega.x),
        y_zpf: zpf(omega.y),
        z_zpf: zpf(omega.z),
        k: TAU / s.wavelength,
        z_r: s.waist_x * s.waist_y * PI / s.wavelength,
        eps_tw: (4.0 * s.tweezer_power / (s.waist_x * s.waist_y * PI * EPSILON_0 * SPEED_OF_LIGHT)).sqrt(),
        eps_cav: (HBAR * omega_cav / (2.0 * EPSILON_0 * v_cav)).sqrt(),
        v_cav,
        alpha: 4.0 * PI * EPSILON_0 * s.radius.powi(3) * (er - 1.0) / (er + 2.0),
    })
}

/// Off-axis and off-waist reduction of the coupling.
pub fn geometric_factor(s: &PhysicalSetup) -> f64 {
    let [_, y0, z0] = s.position;
    (-(y0 * y0 + z0 * z0) / s.cavity_waist.powi(2)).exp() / (s.trap_waist_scale_x * s.trap_waist_scale_y).sqrt()
}

pub fn coupling_rates(s: &PhysicalSetup, omega: &TrapFrequencies, omega_cav: f64) -> Result<CouplingBreakdown> {
    let d = derived_fields(s, omega, omega_cav)?;
    let f = geometric_factor(s);
    let e_d = d.alpha * d.eps_tw * d.eps_cav / (2.0 * HBAR);
    let phase = FRAC_PI_2 + d.k * s.position[0];
    let (sin_p, cos_p) = phase.sin_cos();
    let (sin_t, cos_t) = s.pol_angle.sin_cos();
    Ok(CouplingBreakdown {
        g_x: (e_d * d.k * d.x_zpf * sin_t * sin_p * f).abs(),
        g_y: (e_d * d.k * d.y_zpf * cos_t * sin_p * f).abs(),
        g_z: (e_d * (d.k - 1.0 / d.z_r) * d.z_zpf * cos_p * f).abs(),
        dispersive_drive: (e_d * cos_p).abs(),
        f_geom: f,
        x_zpf: d.x_zpf,
        y_zpf: d.y_zpf,
        z_zpf: d.z_zpf,
        e_d,
        eps_cav: d.eps_cav,
        eps_tw: d.eps_tw,
        alpha: d.alpha,
        k: d.k,
        z_r: d.z_r,
        v_cav: d.v_cav,
        mass: d.mass,
        dipole_warning: s.dipole_warning(),
    })
}

/// Single-expression x coupling at the node with orthogonal polarization.
///
/// Evaluates to exactly twice the composed `g_x`: its radicand is four times
/// `(E_d k x_zpf f)^2` for the field definitions above.
pub fn g_x_single_expression(s: &PhysicalSetup, omega_x: f64) -> Result<f64> {
    s.clone().validate()?;
    let mass = s.density * 4.0 / 3.0 * PI * s.radius.powi(3);
    let x_zpf = (HBAR / (2.0 * mass * omega_x)).sqrt();
    let k = TAU / s.wavelength;
    let er = s.rel_permittivity;
    let alpha_over_eps0 = 4.0 * PI * s.radius.powi(3) * (er - 1.0) / (er + 2.0);
    let radicand = 2.0 / PI * s.tweezer_power / HBAR * k / (s.waist_x * s.waist_y) * alpha_over_eps0 * 4.0
        / (s.cavity_waist.powi(2) * PI * s.cavity_length)
        * alpha_over_eps0;
    Ok(k * x_zpf * radicand.sqrt() * geometric_factor(s))
}

/// Coupling along `z0`, normalized to a reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementCurve {
    pub z0: Vec<f64>,
    pub g: Vec<f64>,
    pub omega_x: f64,
}

impl DisplacementCurve {
    /// CSV with header `z0_m,g_hz,g_over_omega`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record(["z0_m", "g_hz", "g_over_omega"])?;
        for (z, g) in self.z0.iter().zip(&self.g) {
            out.write_record([fmt_num(*z), fmt_num(angular_to_hz(*g)), fmt_num(g / self.omega_x)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `g(z0) = g_ref exp(-(z0^2 - z0_ref^2) / w_cav^2)`.
pub fn coupling_vs_displacement(
    s: &PhysicalSetup,
    z0_grid: &[f64],
    g_ref: f64,
    z0_ref: f64,
    omega_x: f64,
) -> Result<DisplacementCurve> {
    if z0_grid.iter().any(|z| !z.is_finite()) || !z0_ref.is_finite() || !g_ref.is_finite() {
        return Err(Error::Precondition("displacement grid must be finite".into()));
    }
    let w2 = s.cavity_waist.powi(2);
    Ok(DisplacementCurve {
        z0: z0_grid.to_vec(),
        g: z0_grid
            .iter()
            .map(|z| g_ref * (-(z * z - z0_ref * z0_ref) / w2).exp())
            .collect(),
        omega_x,
    })
}

/// `ratio_cal (r / r_cal)^(3/2)` for each radius, with the dipole-regime flag.
pub fn scaling_with_radius(
    s_base: &PhysicalSetup,
    radii: &[f64],
    calibration: (f64, f64),
) -> Result<Vec<(f64, bool)>> {
    let (r_cal, ratio_cal) = calibration;
    if radii.iter().chain([&r_cal]).any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Precondition("radii must be finite and > 0".into()));
    }
    Ok(radii
        .iter()
        .map(|&r| {
            let flagged = PhysicalSetup { radius: r, ..s_base.clone() }.dipole_warning();
            (ratio_cal * (r / r_cal).powf(1.5), flagged)
        })
        .collect())
}

/// `ratio_ref (P / P_ref)^(-1/4)`.
pub fn scaling_with_power(ratio_ref: f64, p_ref: f64, powers: &[f64]) -> Result<Vec<f64>> {
    if powers.iter().chain([&p_ref]).any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Precondition("powers must be finite and > 0".into()));
    }
    Ok(powers.iter().map(|p| ratio_ref * (p / p_ref).powf(-0.25)).collect())
}
