use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const EXPERIMENT: &str = r#"{"omega_x": 190e3, "detuning": 190e3, "kappa": 193e3, "gamma": 4e3, "g": 66.5e3, "n_bath": 1e4}"#;

fn params() -> Value {
    serde_json::from_str(EXPERIMENT).unwrap()
}

fn run(dir: &Path, cmd: &str, config: &Value, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{cmd}.json"));
    std::fs::write(&cfg, config.to_string()).unwrap();
    run_path(dir, cmd, &cfg, extra)
}

fn run_path(dir: &Path, cmd: &str, cfg: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optomech"))
        .arg(cmd)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env("OPTOMECH_THREADS", "2")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').filter_map(|s| s.parse().ok()).collect())
        .collect()
}

#[test]
fn psd_thermal_and_split() {
    let dir = TempDir::new().unwrap();
    let mut p = params();
    p["g"] = json!(0.0);
    let cfg = json!({"params": p, "freq_hz": {"start": 1e3, "stop": 5e5, "points": 500}, "cavity": true});
    let o = run(dir.path(), "psd", &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = read(dir.path(), "psd_xx.csv");
    assert!(text.starts_with("freq_hz,psd,weight\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 500);
    let peak = r.iter().max_by(|a, b| a[1].total_cmp(&b[1])).unwrap()[0];
    assert!((peak - 190e3).abs() < 2e3, "{peak}");
    assert!(dir.path().join("out/psd_cavity.csv").exists());
    // 12 significant digits in fixed scientific notation
    assert!(text.lines().nth(1).unwrap().starts_with("1.00000000000e3,"));

    let cfg = json!({"params": params(), "freq_hz": {"start": 1e3, "stop": 5e5, "points": 500}});
    let o = run(dir.path(), "psd", &cfg, &["--format", "json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&read(dir.path(), "psd_xx.json")).unwrap();
    assert_eq!(v["freq_hz"].as_array().unwrap().len(), 500);
}

#[test]
fn missing_field_is_named() {
    let dir = TempDir::new().unwrap();
    let mut p = params();
    p.as_object_mut().unwrap().remove("omega_x");
    let cfg = json!({"params": p, "freq_hz": {"start": 1e3, "stop": 5e5, "points": 10}});
    let o = run(dir.path(), "psd", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("params") && e.contains("omega_x"), "{e}");

    let cfg = json!({"params": params(), "freq_hz": {"start": 1e3, "stop": 5e5, "points": "ten"}});
    let o = run(dir.path(), "psd", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("freq_hz.points"), "{}", stderr(&o));
}

#[test]
fn invalid_values_exit_two() {
    let dir = TempDir::new().unwrap();
    let mut p = params();
    p["kappa"] = json!(-1.0);
    let cfg = json!({"params": p, "freq_hz": {"start": 1e3, "stop": 5e5, "points": 10}});
    let o = run(dir.path(), "psd", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kappa"));
}

#[test]
fn missing_config_file_is_io() {
    let dir = TempDir::new().unwrap();
    let o = run_path(dir.path(), "psd", &dir.path().join("nope.json"), &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn polariton_regimes_and_errors() {
    let dir = TempDir::new().unwrap();
    let ds: Vec<f64> = (0..=100).map(|k| 95e3 + 4.75e3 * k as f64).collect();
    let gap = |g: f64| {
        let mut p = params();
        p["g"] = json!(g * 190e3);
        let o = run(dir.path(), "polaritons", &json!({"params": p, "detunings_hz": ds}), &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        rows(&read(dir.path(), "branches.csv")).iter().map(|r| r[1] - r[3]).fold(f64::INFINITY, f64::min)
    };
    assert!(gap(0.2) <= 0.0);
    assert!(gap(0.35) > 0.0);

    let mut p = params();
    p["g"] = json!(0.0);
    let o = run(dir.path(), "polaritons", &json!({"params": p, "detunings_hz": [300e3]}), &[]);
    assert!(o.status.success());
    let r = rows(&read(dir.path(), "branches.csv"));
    assert!((r[0][1] - 300e3).abs() < 1e-6 && (r[0][3] - 190e3).abs() < 1e-6);

    let o = run(dir.path(), "polaritons", &json!({"params": params(), "detunings_hz": []}), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stability_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "params": params(),
        "detuning_hz": {"start": 40e3, "stop": 570e3, "points": 30},
        "g_hz": {"start": 0.0, "stop": 190e3, "points": 20},
        "method": "spectral"
    });
    let o = run(dir.path(), "stability", &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(rows(&read(dir.path(), "stability.csv")).len(), 600);
    assert!(read(dir.path(), "stability_boundary.csv").starts_with("detuning_hz,g_crit_hz\n"));

    let mut bad = cfg.clone();
    bad["detuning_hz"]["start"] = json!(-10e3);
    let o = run(dir.path(), "stability", &bad, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn coupling_profile() {
    let dir = TempDir::new().unwrap();
    let setup = json!({
        "wavelength": 1064e-9, "tweezer_power": 0.4, "waist_x": 0.67e-6, "waist_y": 0.77e-6,
        "cavity_waist": 41.1e-6, "cavity_length": 1.07e-2, "radius": 105e-9, "pol_angle": std::f64::consts::FRAC_PI_2
    });
    let cfg = json!({
        "setup": setup,
        "displacement": {"z0_m": {"start": -60e-6, "stop": 60e-6, "points": 13}, "g_ref_over_omega": 0.55}
    });
    let o = run(dir.path(), "coupling", &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&read(dir.path(), "coupling.json")).unwrap();
    assert!(v["g_x"].as_f64().unwrap() > 0.0);
    assert!(v["E_d"].is_number());
    let text = read(dir.path(), "displacement.csv");
    assert!(text.starts_with("z0_m,g_hz,g_over_omega\n"));
    let r = rows(&text);
    assert!((r[6][2] - 0.55).abs() < 1e-11);
    assert!((r[0][2] - r[12][2]).abs() < 1e-15);
    let w: f64 = 41.1e-6;
    assert!((r[0][2] - 0.55 * (-(60e-6f64).powi(2) / (w * w)).exp()).abs() < 1e-11);
}

fn sim_config() -> Value {
    json!({
        "params": params(),
        "sim": {"dt": 2e-9, "duration": 6e-4, "seed": 1, "n_bath": 1e4, "record": ["xm", "xc"], "decimate": 10},
        "welch": {"segment_len": 1024}
    })
}

fn digest(dir: &Path, names: &[&str]) -> Vec<u8> {
    let mut h = Sha256::new();
    for n in names {
        h.update(std::fs::read(dir.join("out").join(n)).unwrap());
    }
    h.finalize().to_vec()
}

#[test]
fn simulate_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let files = ["trace.bin", "trace.csv", "psd_xm.csv", "psd_xc.csv"];
    for d in [&a, &b] {
        let o = run(d.path(), "simulate", &sim_config(), &[]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(digest(a.path(), &files), digest(b.path(), &files));

    let o = run(b.path(), "simulate", &sim_config(), &["--seed", "2"]);
    assert!(o.status.success());
    assert_ne!(digest(a.path(), &files), digest(b.path(), &files));
}

#[test]
fn simulate_guards_exit_two() {
    let dir = TempDir::new().unwrap();
    let mut cfg = sim_config();
    cfg["sim"]["dt"] = json!(1e-6);
    let o = run(dir.path(), "simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stiffness"));

    let mut cfg = sim_config();
    cfg["sim"]["bogus"] = json!(1);
    let o = run(dir.path(), "simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sim"));
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scan/fit.json")
}

#[test]
fn fit_recovers_fixture_coupling() {
    let dir = TempDir::new().unwrap();
    let o = run_path(dir.path(), "fit", &fixture(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&read(dir.path(), "fit.json")).unwrap();
    let g = v["g_over_omega"].as_f64().unwrap();
    let sigma = v["sigma_g_over_omega"].as_f64().unwrap();
    assert!((g - 0.35).abs() < 0.01 && (g - 0.35).abs() < 4.0 * sigma, "{g} +- {sigma}");
    assert_eq!(v["result"]["converged"], json!(true));
    assert!(read(dir.path(), "residuals.csv").starts_with("spectrum,freq_hz,psd,model,residual\n"));
    assert!(dir.path().join("out/branches.csv").exists());
}

#[test]
fn fit_with_two_spectra_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(fixture()).unwrap()).unwrap();
    cfg["spectra"].as_array_mut().unwrap().truncate(2);
    let base = fixture().parent().unwrap().to_path_buf();
    for s in cfg["spectra"].as_array_mut().unwrap() {
        s["path"] = json!(base.join(s["path"].as_str().unwrap()));
    }
    let o = run(dir.path(), "fit", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    cfg["spectra"][0]["path"] = json!("/nonexistent/spectrum.csv");
    let o = run(dir.path(), "fit", &cfg, &[]);
    assert_eq!(o.status.code(), Some(4));
}
