//! Sampled one-sided spectra and their CSV/JSON forms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_writer, fmt_num};

pub const CSV_HEADER: [&str; 3] = ["freq_hz", "psd", "weight"];

/// PSD values on an increasing frequency axis (Hz), with optional
/// inverse-variance weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    #[serde(rename = "freq_hz")]
    pub freqs: Vec<f64>,
    #[serde(rename = "psd")]
    pub values: Vec<f64>,
    #[serde(rename = "weight", default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl SpectrumGrid {
    pub fn new(freqs: Vec<f64>, values: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        let grid = SpectrumGrid {
            freqs,
            values,
            weights,
        };
        grid.check()?;
        Ok(grid)
    }

    pub fn check(&self) -> Result<()> {
        if self.freqs.len() != self.values.len() {
            return Err(Error::Precondition(format!(
                "spectrum has {} frequencies but {} values",
                self.freqs.len(),
                self.values.len()
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.freqs.len() {
                return Err(Error::Precondition("weights length differs from frequencies".into()));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Precondition("weights must be finite and >= 0".into()));
            }
        }
        if self.freqs.iter().any(|f| !f.is_finite()) || self.freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("frequencies must be finite and strictly increasing".into()));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Precondition("PSD values must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Evaluates `f(freq_hz)` on an axis.
    pub fn from_fn<F>(freqs: &[f64], mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let values = freqs.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
        SpectrumGrid::new(freqs.to_vec(), values, None)
    }

    /// Multiplies every value by `c`.
    pub fn scaled(&self, c: f64) -> SpectrumGrid {
        SpectrumGrid {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Trapezoidal integral over frequency.
    pub fn integral(&self) -> f64 {
        self.freqs
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(f, v)| 0.5 * (f[1] - f[0]) * (v[0] + v[1]))
            .sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record(CSV_HEADER)?;
        for i in 0..self.len() {
            let weight = self.weights.as_ref().map(|w| fmt_num(w[i])).unwrap_or_default();
            out.write_record([fmt_num(self.freqs[i]), fmt_num(self.values[i]), weight])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "freq_hz" || &headers[1] != "psd" {
            return Err(Error::Format(format!(
                "expected header freq_hz,psd[,weight], got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let parse = |s: &str, line: u64| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("line {line}: {e}")))
        };
        let (mut freqs, mut values, mut weights) = (Vec::new(), Vec::new(), Vec::new());
        let mut any_weight = false;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            freqs.push(parse(&rec[0], line)?);
            values.push(parse(&rec[1], line)?);
            match rec.get(2).map(str::trim) {
                Some(s) if !s.is_empty() => {
                    any_weight = true;
                    weights.push(parse(s, line)?);
                }
                _ => weights.push(f64::NAN),
            }
        }
        if any_weight && weights.iter().any(|w| w.is_nan()) {
            return Err(Error::Format("weight column is only partially filled".into()));
        }
        SpectrumGrid::new(freqs, values, any_weight.then_some(weights))
    }
}
