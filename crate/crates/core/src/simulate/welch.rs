use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::SpectrumGrid;

use super::TimeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rect,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            // Periodic Hann.
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
        }
    }
}

/// Averaged modified periodogram of one channel.
///
/// One-sided, in units of `channel^2 / Hz`, normalized so that summing over
/// bins times the bin width gives the variance of the (mean-removed) signal.
/// Bins run from 0 to the Nyquist frequency.
pub fn welch_psd(trace: &TimeTrace, channel: &str, segment_len: usize, overlap: f64, window: Window) -> Result<SpectrumGrid> {
    let data = trace
        .channel(channel)
        .ok_or_else(|| Error::Precondition(format!("trace has no channel {channel:?}")))?;
    if !(0.0..=0.9).contains(&overlap) {
        return Err(Error::Precondition("overlap must lie in [0, 0.9]".into()));
    }
    if segment_len < 2 || segment_len > data.len() {
        return Err(Error::TooShort {
            segments: 0,
            segment_len,
        });
    }
    let step = (((1.0 - overlap) * segment_len as f64).round() as usize).max(1);
    let segments = (data.len() - segment_len) / step + 1;
    if segments < 4 {
        return Err(Error::TooShort { segments, segment_len });
    }

    let w = window.coefficients(segment_len);
    let w_power: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_len);
    let n_bins = segment_len / 2 + 1;

    let total = (0..segments)
        .into_par_iter()
        .map(|s| {
            let seg = &data[s * step..s * step + segment_len];
            let mean = seg.iter().sum::<f64>() / segment_len as f64;
            let mut buf: Vec<Complex<f64>> = seg
                .iter()
                .zip(&w)
                .map(|(x, wi)| Complex::new((x - mean) * wi, 0.0))
                .collect();
            fft.process(&mut buf);
            buf[..n_bins].iter().map(|c| c.norm_sqr()).collect::<Vec<_>>()
        })
        .reduce(
            || vec![0.0; n_bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let dt = trace.dt;
    let norm = dt / (w_power * segments as f64);
    let values = total
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let edge = k == 0 || (segment_len % 2 == 0 && k == n_bins - 1);
            p * norm * if edge { 1.0 } else { 2.0 }
        })
        .collect();
    let freqs = (0..n_bins).map(|k| k as f64 / (segment_len as f64 * dt)).collect();
    SpectrumGrid::new(freqs, values, None)
}
