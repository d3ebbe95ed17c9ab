use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use optomech::coupling::{cavity_frequency, coupling_rates, coupling_vs_displacement, TrapFrequencies};
use optomech::fitting::{build_problem, fit_detuning_scan, fit_side_peaks, fit_single, initial_coupling, FitResult};
use optomech::params::{angular_to_hz, hz_to_angular};
use optomech::polaritons::detuning_scan;
use optomech::response::{psd_cavity_one_sided_hz, psd_xx_one_sided_hz};
use optomech::simulate::{simulate_langevin, welch_psd};
use optomech::stability::stability_map_with;
use optomech::{BranchScan, SpectrumGrid, StabilityMap, Validate};

use crate::config::{self, CouplingConfig, FitConfig, FitMode, PolaritonsConfig, PsdConfig, SimulateConfig, StabilityConfig};
use crate::error::CliError;
use crate::Format;

/// Where and how artifacts are written; records every file for the summary.
pub struct Out {
    dir: PathBuf,
    pub format: Format,
    pub written: Vec<PathBuf>,
}

impl Out {
    pub fn new(dir: PathBuf, format: Format) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Out {
            dir,
            format,
            written: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    fn csv<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> optomech::Result<()>,
    {
        let mut w = self.create(name)?;
        write(&mut w)?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.dir.join(name);
        optomech::io::write_json(&path, value)?;
        self.written.push(path);
        Ok(())
    }
}

fn validated(p: optomech::ModelParams) -> Result<optomech::ModelParams, CliError> {
    Ok(p.validate()?)
}

pub fn psd(cfg: PsdConfig, out: &mut Out) -> Result<(), CliError> {
    let p = validated(cfg.params)?;
    let freqs = cfg.freq_hz.values("freq_hz")?;
    let xx = SpectrumGrid::from_fn(&freqs, |f| psd_xx_one_sided_hz(f, &p, cfg.x_zpf))?;
    let cav = if cfg.cavity {
        Some(SpectrumGrid::from_fn(&freqs, |f| psd_cavity_one_sided_hz(f, &p))?)
    } else {
        None
    };
    match out.format {
        Format::Csv => {
            out.csv("psd_xx.csv", |w| xx.write_csv(w))?;
            if let Some(c) = &cav {
                out.csv("psd_cavity.csv", |w| c.write_csv(w))?;
            }
        }
        Format::Json => {
            out.json("psd_xx.json", &xx)?;
            if let Some(c) = &cav {
                out.json("psd_cavity.json", c)?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BranchesHz {
    detuning_hz: Vec<f64>,
    upper_re_hz: Vec<f64>,
    upper_im_hz: Vec<f64>,
    lower_re_hz: Vec<f64>,
    lower_im_hz: Vec<f64>,
    continuous: bool,
}

impl From<&BranchScan> for BranchesHz {
    fn from(s: &BranchScan) -> Self {
        let hz = |v: Vec<f64>| v.into_iter().map(angular_to_hz).collect();
        BranchesHz {
            detuning_hz: hz(s.detunings.clone()),
            upper_re_hz: hz(s.upper_branch.iter().map(|c| c.re).collect()),
            upper_im_hz: hz(s.upper_branch.iter().map(|c| c.im).collect()),
            lower_re_hz: hz(s.lower_branch.iter().map(|c| c.re).collect()),
            lower_im_hz: hz(s.lower_branch.iter().map(|c| c.im).collect()),
            continuous: s.continuous,
        }
    }
}

pub fn polaritons(cfg: PolaritonsConfig, out: &mut Out) -> Result<(), CliError> {
    let p = validated(cfg.params)?;
    if cfg.detunings_hz.is_empty() {
        return Err(CliError::Config("detunings_hz: list is empty".into()));
    }
    let ds: Vec<f64> = cfg.detunings_hz.iter().copied().map(hz_to_angular).collect();
    let scan = detuning_scan(&p, &ds)?;
    match out.format {
        Format::Csv => out.csv("branches.csv", |w| scan.write_csv(w)),
        Format::Json => out.json("branches.json", &BranchesHz::from(&scan)),
    }
}

#[derive(Serialize)]
struct StabilityHz<'a> {
    detuning_hz: Vec<f64>,
    g_hz: Vec<f64>,
    stable: &'a [Vec<bool>],
    g_crit_hz: Vec<f64>,
    method: optomech::stability::StabilityMethod,
}

impl<'a> From<&'a StabilityMap> for StabilityHz<'a> {
    fn from(m: &'a StabilityMap) -> Self {
        StabilityHz {
            detuning_hz: m.detuning_axis.iter().copied().map(angular_to_hz).collect(),
            g_hz: m.coupling_axis.iter().copied().map(angular_to_hz).collect(),
            stable: &m.stable,
            g_crit_hz: m.boundary.iter().map(|(_, g)| angular_to_hz(*g)).collect(),
            method: m.method,
        }
    }
}

pub fn stability(cfg: StabilityConfig, out: &mut Out) -> Result<(), CliError> {
    let p = validated(cfg.params)?;
    let ds: Vec<f64> = cfg.detuning_hz.values("detuning_hz")?.into_iter().map(hz_to_angular).collect();
    let gs: Vec<f64> = cfg.g_hz.values("g_hz")?.into_iter().map(hz_to_angular).collect();
    let map = stability_map_with(&ds, &gs, &p, cfg.method)?;
    match out.format {
        Format::Csv => {
            out.csv("stability.csv", |w| map.write_csv(w))?;
            out.csv("stability_boundary.csv", |w| map.write_boundary_csv(w))
        }
        Format::Json => out.json("stability.json", &StabilityHz::from(&map)),
    }
}

pub fn coupling(cfg: CouplingConfig, out: &mut Out) -> Result<(), CliError> {
    let s = cfg.setup.validate()?;
    let trap = match cfg.trap_hz {
        Some(t) => TrapFrequencies {
            x: hz_to_angular(t.x),
            y: hz_to_angular(t.y),
            z: hz_to_angular(t.z),
        },
        None => TrapFrequencies::experiment(),
    };
    let rates = coupling_rates(&s, &trap, cavity_frequency(&s))?;
    if rates.dipole_warning {
        eprintln!("warning: radius exceeds the dipole-regime limit; rates are indicative only");
    }
    out.json("coupling.json", &rates)?;
    if let Some(d) = cfg.displacement {
        let z = d.z0_m.values("displacement.z0_m")?;
        let curve = coupling_vs_displacement(&s, &z, d.g_ref_over_omega * trap.x, d.z0_ref_m, trap.x)?;
        match out.format {
            Format::Csv => out.csv("displacement.csv", |w| curve.write_csv(w))?,
            Format::Json => out.json("displacement.json", &curve)?,
        }
    }
    Ok(())
}

pub fn simulate(mut cfg: SimulateConfig, seed: Option<u64>, out: &mut Out) -> Result<(), CliError> {
    let p = validated(cfg.params)?;
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    if cfg.sim.record.is_empty() {
        return Err(CliError::Config(format!(
            "sim.record: choose at least one of {}",
            config::channel_names()
        )));
    }
    let trace = simulate_langevin(&p, &cfg.sim)?;
    let mut w = out.create("trace.bin")?;
    trace.write_binary(&mut w)?;
    drop(w);
    match out.format {
        Format::Csv => out.csv("trace.csv", |w| trace.write_csv(w))?,
        Format::Json => out.json("trace.json", &trace)?,
    }
    if let Some(wc) = cfg.welch {
        for ch in &cfg.sim.record {
            let s = welch_psd(&trace, ch.name(), wc.segment_len, wc.overlap, wc.window)?;
            let name = format!("psd_{}", ch.name());
            match out.format {
                Format::Csv => out.csv(&format!("{name}.csv"), |w| s.write_csv(w))?,
                Format::Json => out.json(&format!("{name}.json"), &s)?,
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FitSummary<'a> {
    mode: &'static str,
    g_hz: Option<f64>,
    sigma_g_hz: Option<f64>,
    g_over_omega: Option<f64>,
    sigma_g_over_omega: Option<f64>,
    /// Rates in rad/s.
    result: &'a FitResult,
}

fn read_spectrum(path: &Path) -> Result<SpectrumGrid, CliError> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    SpectrumGrid::read_csv(f).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn fit(cfg: FitConfig, base_dir: &Path, out: &mut Out) -> Result<(), CliError> {
    let p = validated(cfg.params)?;
    if cfg.mode == FitMode::Single && cfg.spectra.len() != 1 {
        return Err(CliError::Config(format!("spectra: single mode needs one spectrum, got {}", cfg.spectra.len())));
    }
    let mut data = Vec::with_capacity(cfg.spectra.len());
    for s in &cfg.spectra {
        data.push((read_spectrum(&base_dir.join(&s.path))?, hz_to_angular(s.detuning_hz)));
    }
    let g0 = match cfg.initial_g_hz {
        Some(g) => hz_to_angular(g),
        None => initial_coupling(&data, p.omega_x),
    };
    let mut problem = build_problem(data, &p, g0, cfg.averages)?;
    problem.options = cfg.options;
    problem.detuning_prior_width = cfg.detuning_prior_width_hz.map(hz_to_angular);
    if let Some(sp) = &cfg.side_peaks {
        let side = read_spectrum(&base_dir.join(&sp.path))?;
        let (peaks, _) = fit_side_peaks(&side, &sp.guesses_hz, cfg.averages)?;
        for spec in &mut problem.spectra {
            spec.freeze_side_peaks(&peaks);
        }
    }
    let result = match cfg.mode {
        FitMode::Scan => fit_detuning_scan(&problem),
        FitMode::Single => fit_single(&problem),
    };
    let (result, failure) = match result {
        Ok(r) => (r, None),
        Err(optomech::Error::FitDiverged { best }) => (*best, Some("fit diverged")),
        Err(optomech::Error::MaxIterations { best }) => (*best, Some("fit reached the iteration limit")),
        Err(e) => return Err(e.into()),
    };
    let g = result.g();
    let summary = FitSummary {
        mode: match cfg.mode {
            FitMode::Scan => "scan",
            FitMode::Single => "single",
        },
        g_hz: g.map(|g| angular_to_hz(g.value)),
        sigma_g_hz: g.map(|g| angular_to_hz(g.sigma)),
        g_over_omega: g.map(|g| g.value / p.omega_x),
        sigma_g_over_omega: g.map(|g| g.sigma / p.omega_x),
        result: &result,
    };
    out.json("fit.json", &summary)?;
    out.csv("residuals.csv", |w| result.write_residuals_csv(w))?;
    if let Some(scan) = &result.branches {
        match out.format {
            Format::Csv => out.csv("branches.csv", |w| scan.write_csv(w))?,
            Format::Json => out.json("branches.json", &BranchesHz::from(scan))?,
        }
    }
    // Best-effort results are still written before reporting the failure.
    match failure {
        Some(m) => Err(CliError::Numerical(format!("{m} after {} iterations", result.n_iter))),
        None => Ok(()),
    }
}
