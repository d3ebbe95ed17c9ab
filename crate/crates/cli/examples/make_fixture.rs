//! Regenerates `tests/fixtures/scan`: a synthetic detuning scan at g = 0.35 Omega_x.
//!
//! cargo run -p optomech-cli --example make_fixture

use std::f64::consts::TAU;
use std::fs::File;
use std::path::Path;

use optomech::params::hz_to_angular;
use optomech::response::psd_xx_one_sided_hz;
use optomech::simulate::{synthesize_spectrum, SnrModel};
use optomech::ModelParams;

fn main() -> optomech::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scan");
    std::fs::create_dir_all(&dir)?;
    let b = ModelParams::experiment().with_n_bath(1e4);
    let g = 0.35 * b.omega_x;
    let freqs: Vec<f64> = (1..=300).map(|k| k as f64 * 2.5e3).collect();
    let mut entries = Vec::new();
    for (i, r) in [0.8, 1.0, 1.2, 1.5, 2.0].iter().enumerate() {
        let detuning_hz = r * 190e3;
        let p = b.with_g(g).with_detuning(hz_to_angular(detuning_hz));
        let floor = 1e-3 * psd_xx_one_sided_hz(b.omega_x / TAU, &p, 1.0)?;
        let snr = SnrModel { averages: Some(64), floor, x_zpf: 1.0 };
        let s = synthesize_spectrum(&p, &freqs, &snr, 100 + i as u64)?;
        let name = format!("spectrum_{i}.csv");
        s.write_csv(File::create(dir.join(&name))?)?;
        entries.push(serde_json::json!({ "path": name, "detuning_hz": detuning_hz }));
    }
    let config = serde_json::json!({
        "params": { "omega_x": 190e3, "detuning": 190e3, "kappa": 193e3, "gamma": 4e3, "n_bath": 1e4 },
        "spectra": entries,
        "averages": 64,
    });
    optomech::io::write_json(&dir.join("fit.json"), &config)?;
    Ok(())
}
