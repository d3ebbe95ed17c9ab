//! wasm-bindgen bindings for the static demo in `www/`.
//!
//! Rates cross the boundary in kHz (ordinary frequency). Every function
//! returns a flat `Float64Array`; the layouts are documented per function.

use wasm_bindgen::prelude::*;

use optomech::params::hz_to_angular;
use optomech::polaritons::detuning_scan;
use optomech::response::psd_xx_one_sided_hz;
use optomech::stability::{linspace, stability_map};
use optomech::{ModelParams, Validate};

/// Model parameters from kHz inputs, validated.
pub fn params(omega_x: f64, detuning: f64, kappa: f64, gamma: f64, g: f64, n_bath: f64) -> Result<ModelParams, String> {
    let w = |khz: f64| hz_to_angular(khz * 1e3);
    ModelParams {
        omega_x: w(omega_x),
        detuning: w(detuning),
        kappa: w(kappa),
        gamma: w(gamma),
        g: w(g),
        n_bath,
    }
    .validate()
    .map_err(|e| e.to_string())
}

/// `[f_khz, psd]` pairs; the PSD is one-sided in units of x_zpf^2 / Hz.
pub fn psd_curve(p: &ModelParams, f_start_khz: f64, f_stop_khz: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 || !(f_stop_khz > f_start_khz) || f_start_khz < 0.0 {
        return Err("frequency range needs 0 <= start < stop and at least 2 points".into());
    }
    let mut out = Vec::with_capacity(2 * points);
    for f in linspace(f_start_khz, f_stop_khz, points) {
        out.push(f);
        out.push(psd_xx_one_sided_hz(f * 1e3, p, 1.0).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

/// `[detuning_khz, upper_khz, lower_khz, upper_width_khz, lower_width_khz]` rows.
/// Widths are full linewidths, twice the decay rate.
pub fn branches(p: &ModelParams, d_start_khz: f64, d_stop_khz: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 || !(d_stop_khz > d_start_khz) || !(d_start_khz > 0.0) {
        return Err("detuning range needs 0 < start < stop and at least 2 points".into());
    }
    let ds: Vec<f64> = linspace(d_start_khz, d_stop_khz, points)
        .into_iter()
        .map(|d| hz_to_angular(d * 1e3))
        .collect();
    let scan = detuning_scan(p, &ds).map_err(|e| e.to_string())?;
    let khz = |w: f64| w / (2.0 * std::f64::consts::PI * 1e3);
    let mut out = Vec::with_capacity(5 * points);
    for ((d, u), l) in scan.detunings.iter().zip(&scan.upper_branch).zip(&scan.lower_branch) {
        out.extend([khz(*d), khz(u.re), khz(l.re), khz(2.0 * u.im), khz(2.0 * l.im)]);
    }
    Ok(out)
}

/// Row-major `nd x ng` grid of 1 (stable) and 0, followed by `nd` values
/// of the critical coupling in units of `omega_x`. Axes are in units of `omega_x`.
pub fn stability(p: &ModelParams, d_max: f64, g_max: f64, nd: usize, ng: usize) -> Result<Vec<f64>, String> {
    if nd < 2 || ng < 2 || !(d_max > 0.0) || !(g_max > 0.0) {
        return Err("stability grid needs positive extents and at least 2 points per axis".into());
    }
    let w = p.omega_x;
    let ds: Vec<f64> = linspace(d_max / nd as f64, d_max, nd).into_iter().map(|d| d * w).collect();
    let gs: Vec<f64> = linspace(0.0, g_max, ng).into_iter().map(|g| g * w).collect();
    let map = stability_map(&ds, &gs, p).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = map.stable.iter().flatten().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    out.extend(map.boundary.iter().map(|(_, g)| g / w));
    Ok(out)
}

#[wasm_bindgen(js_name = psdCurve)]
#[allow(clippy::too_many_arguments)]
pub fn psd_curve_js(
    omega_x: f64,
    detuning: f64,
    kappa: f64,
    gamma: f64,
    g: f64,
    n_bath: f64,
    f_start: f64,
    f_stop: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    let p = params(omega_x, detuning, kappa, gamma, g, n_bath).map_err(|e| JsError::new(&e))?;
    psd_curve(&p, f_start, f_stop, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = branchScan)]
#[allow(clippy::too_many_arguments)]
pub fn branches_js(
    omega_x: f64,
    kappa: f64,
    gamma: f64,
    g: f64,
    d_start: f64,
    d_stop: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    let p = params(omega_x, omega_x, kappa, gamma, g, 0.0).map_err(|e| JsError::new(&e))?;
    branches(&p, d_start, d_stop, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = stabilityGrid)]
pub fn stability_js(
    omega_x: f64,
    kappa: f64,
    gamma: f64,
    d_max: f64,
    g_max: f64,
    nd: usize,
    ng: usize,
) -> Result<Vec<f64>, JsError> {
    let p = params(omega_x, omega_x, kappa, gamma, 0.0, 0.0).map_err(|e| JsError::new(&e))?;
    stability(&p, d_max, g_max, nd, ng).map_err(|e| JsError::new(&e))
}
