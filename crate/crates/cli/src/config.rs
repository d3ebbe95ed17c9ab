//! JSON config schemas, one per subcommand. Model rates are in Hz, setups in SI.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use optomech::fitting::FitOptions;
use optomech::simulate::{Channel, SimConfig, Window};
use optomech::stability::{linspace, StabilityMethod};
use optomech::{ModelParams, PhysicalSetup};

use crate::error::CliError;

/// Evenly spaced samples on `[start, stop]`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Axis {
    pub fn values(&self, field: &str) -> Result<Vec<f64>, CliError> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(CliError::Config(format!("{field}: need finite bounds and at least one point")));
        }
        Ok(linspace(self.start, self.stop, self.points))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdConfig {
    pub params: ModelParams,
    pub freq_hz: Axis,
    #[serde(default = "unit")]
    pub x_zpf: f64,
    /// Also write the cavity spectrum.
    #[serde(default)]
    pub cavity: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolaritonsConfig {
    pub params: ModelParams,
    pub detunings_hz: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub params: ModelParams,
    pub detuning_hz: Axis,
    pub g_hz: Axis,
    #[serde(default)]
    pub method: StabilityMethod,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapHz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Displacement {
    pub z0_m: Axis,
    /// Measured `g/Omega_x` at `z0_ref_m`.
    pub g_ref_over_omega: f64,
    #[serde(default)]
    pub z0_ref_m: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub setup: PhysicalSetup,
    #[serde(default)]
    pub trap_hz: Option<TrapHz>,
    #[serde(default)]
    pub displacement: Option<Displacement>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelchConfig {
    pub segment_len: usize,
    #[serde(default = "half")]
    pub overlap: f64,
    #[serde(default)]
    pub window: Window,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub params: ModelParams,
    pub sim: SimConfig,
    #[serde(default)]
    pub welch: Option<WelchConfig>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    #[default]
    Scan,
    Single,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumFile {
    /// CSV `freq_hz,psd[,weight]`, relative to the config file.
    pub path: PathBuf,
    pub detuning_hz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidePeakConfig {
    /// y-detection spectrum, relative to the config file.
    pub path: PathBuf,
    /// `(center_hz, fwhm_hz)` per peak.
    pub guesses_hz: Vec<(f64, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// `omega_x`, `kappa`, `gamma` and `n_bath` are held fixed; `g` and `detuning` are ignored.
    pub params: ModelParams,
    pub spectra: Vec<SpectrumFile>,
    #[serde(default)]
    pub mode: FitMode,
    #[serde(default)]
    pub averages: Option<u32>,
    #[serde(default)]
    pub initial_g_hz: Option<f64>,
    #[serde(default)]
    pub detuning_prior_width_hz: Option<f64>,
    #[serde(default)]
    pub side_peaks: Option<SidePeakConfig>,
    #[serde(default)]
    pub options: FitOptions,
}

fn unit() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

/// Parses `text`, reporting the path of the offending field on failure.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text)
}

/// Channel names accepted in `sim.record`, for messages.
pub fn channel_names() -> String {
    Channel::ALL.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ")
}
