use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_writer, fmt_num};

use super::GENERATOR;

const MAGIC: &[u8; 4] = b"OMTR";
const VERSION: u32 = 1;

/// Uniformly sampled real channels from one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    /// Sample spacing (s).
    pub dt: f64,
    pub channels: Vec<(String, Vec<f64>)>,
    pub seed: u64,
    pub generator: String,
}

impl TimeTrace {
    pub fn new(dt: f64, channels: Vec<(String, Vec<f64>)>, seed: u64) -> Result<Self> {
        let t = TimeTrace {
            dt,
            channels,
            seed,
            generator: GENERATOR.to_string(),
        };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Format("trace dt must be finite and > 0".into()));
        }
        let n = self.len();
        for (name, data) in &self.channels {
            if data.len() != n {
                return Err(Error::Format(format!("channel {name} has {} samples, expected {n}", data.len())));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("channel {name} has non-finite samples")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.1.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.iter().find(|c| c.0 == name).map(|c| c.1.as_slice())
    }

    /// Binary layout, all little-endian:
    /// `"OMTR"`, u32 version, f64 dt, u64 seed, u32 + bytes generator,
    /// u32 channel count, u64 sample count, then per channel u32 + bytes name,
    /// then the samples as f64, channel after channel.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let put_str = |w: &mut W, s: &str| -> std::io::Result<()> {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())
        };
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        put_str(&mut w, &self.generator)?;
        w.write_all(&(self.channels.len() as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for (name, _) in &self.channels {
            put_str(&mut w, name)?;
        }
        for (_, data) in &self.channels {
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
            let mut b = [0u8; N];
            r.read_exact(&mut b)
                .map_err(|e| Error::Format(format!("truncated trace: {e}")))?;
            Ok(b)
        }
        fn take_str<R: Read>(r: &mut R) -> Result<String> {
            let n = u32::from_le_bytes(take(r)?) as usize;
            if n > 1 << 16 {
                return Err(Error::Format("string field too long".into()));
            }
            let mut b = vec![0u8; n];
            r.read_exact(&mut b)
                .map_err(|e| Error::Format(format!("truncated trace: {e}")))?;
            String::from_utf8(b).map_err(|_| Error::Format("string field is not UTF-8".into()))
        }
        if &take::<4, _>(&mut r)? != MAGIC {
            return Err(Error::Format("not a time trace (bad magic)".into()));
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported trace version {version}")));
        }
        let dt = f64::from_le_bytes(take(&mut r)?);
        let seed = u64::from_le_bytes(take(&mut r)?);
        let generator = take_str(&mut r)?;
        let n_ch = u32::from_le_bytes(take(&mut r)?) as usize;
        let n = u64::from_le_bytes(take(&mut r)?) as usize;
        let names = (0..n_ch).map(|_| take_str(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut channels = Vec::with_capacity(n_ch);
        for name in names {
            let data = (0..n)
                .map(|_| take(&mut r).map(f64::from_le_bytes))
                .collect::<Result<Vec<_>>>()?;
            channels.push((name, data));
        }
        let t = TimeTrace {
            dt,
            channels,
            seed,
            generator,
        };
        t.check()?;
        Ok(t)
    }

    /// CSV with a `t_s` column followed by one column per channel.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        let mut header = vec!["t_s".to_string()];
        header.extend(self.channels.iter().map(|c| c.0.clone()));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![fmt_num(i as f64 * self.dt)];
            row.extend(self.channels.iter().map(|c| fmt_num(c.1[i])));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}
