use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::response::psd_xx_one_sided_hz;
use crate::spectrum::SpectrumGrid;

/// Noise model for synthetic spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrModel {
    /// Number of averaged periodograms; `None` gives the noiseless curve.
    pub averages: Option<u32>,
    /// White detection floor added to the PSD before the noise is applied.
    pub floor: f64,
    /// Position scale passed to the analytic PSD.
    pub x_zpf: f64,
}

impl SnrModel {
    pub fn noiseless() -> Self {
        SnrModel {
            averages: None,
            floor: 0.0,
            x_zpf: 1.0,
        }
    }
}

/// Analytic one-sided `psd_xx` plus floor on `freqs_hz`, each bin multiplied
/// by an independent `chi^2(2k) / 2k` variate.
pub fn synthesize_spectrum(p: &ModelParams, freqs_hz: &[f64], snr: &SnrModel, seed: u64) -> Result<SpectrumGrid> {
    if !(snr.floor.is_finite() && snr.floor >= 0.0) {
        return Err(Error::Precondition("floor must be finite and >= 0".into()));
    }
    let noise = match snr.averages {
        None => None,
        Some(0) => return Err(Error::Precondition("averages must be >= 1".into())),
        // chi^2(2k)/2k = Gamma(shape k, scale 1/k).
        Some(k) => Some(Gamma::new(k as f64, 1.0 / k as f64).expect("positive shape")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(freqs_hz.len());
    for &f in freqs_hz {
        let mean = psd_xx_one_sided_hz(f, p, snr.x_zpf)? + snr.floor;
        values.push(match &noise {
            Some(d) => mean * d.sample(&mut rng),
            None => mean,
        });
    }
    SpectrumGrid::new(freqs_hz.to_vec(), values, None)
}
