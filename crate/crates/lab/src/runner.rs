//! Command dispatch: config in, CSV (and optional SVG) files out.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{parse, to_pretty_json, to_value, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::experiments::{
    alpha_sweep, data_dependent_init, gf_frames, hessian, init_density, lonely, roughness, segreg, spiky,
};
use crate::manifest::RunManifest;
use crate::output::{write_atomic, Plot, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    InitDensity,
    AlphaSweep,
    Spiky,
    RoughnessSweep,
    LonelySweep,
    SegregBench,
    HessianReport,
    GfFrames,
    DataDependentInit,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::InitDensity,
        Command::AlphaSweep,
        Command::Spiky,
        Command::RoughnessSweep,
        Command::LonelySweep,
        Command::SegregBench,
        Command::HessianReport,
        Command::GfFrames,
        Command::DataDependentInit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::InitDensity => "init-density",
            Command::AlphaSweep => "alpha-sweep",
            Command::Spiky => "spiky",
            Command::RoughnessSweep => "roughness-sweep",
            Command::LonelySweep => "lonely-sweep",
            Command::SegregBench => "segreg-bench",
            Command::HessianReport => "hessian-report",
            Command::GfFrames => "gf-frames",
            Command::DataDependentInit => "data-dependent-init",
        }
    }

    pub fn from_name(name: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == name)
    }

    /// The default config as pretty JSON.
    pub fn default_config(self) -> String {
        match self {
            Command::InitDensity => to_pretty_json(&init_density::InitDensityConfig::default()),
            Command::AlphaSweep => to_pretty_json(&alpha_sweep::AlphaSweepConfig::default()),
            Command::Spiky => to_pretty_json(&spiky::SpikyConfig::default()),
            Command::RoughnessSweep => to_pretty_json(&roughness::RoughnessConfig::default()),
            Command::LonelySweep => to_pretty_json(&lonely::LonelyConfig::default()),
            Command::SegregBench => to_pretty_json(&segreg::SegregConfig::default()),
            Command::HessianReport => to_pretty_json(&hessian::HessianConfig::default()),
            Command::GfFrames => to_pretty_json(&gf_frames::GfFramesConfig::default()),
            Command::DataDependentInit => to_pretty_json(&data_dependent_init::DataDependentConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Config JSON; `None` runs the defaults.
    pub config: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub out: PathBuf,
    pub plot: bool,
}

/// What a run produced. `failure` is set when outputs were written but the
/// run still counts as failed.
#[derive(Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub manifest: RunManifest,
    pub failure: Option<LabError>,
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    #[serde(flatten)]
    manifest: &'a RunManifest,
    status: String,
    files: Vec<String>,
}

struct Outputs {
    tables: Vec<Table>,
    plots: Vec<Plot>,
    failure: Option<LabError>,
}

impl Outputs {
    fn new(tables: Vec<Table>, plots: Vec<Plot>) -> Self {
        Outputs { tables, plots, failure: None }
    }
}

fn load<C: ExperimentConfig>(opts: &RunOptions) -> LabResult<C> {
    let mut cfg = match &opts.config {
        Some(text) => parse::<C>(text)?,
        None => C::default(),
    };
    if let Some(seeds) = &opts.seeds {
        cfg.set_seeds(seeds.clone());
    }
    cfg.validate().map_err(LabError::Config)?;
    Ok(cfg)
}

fn execute<C: ExperimentConfig>(
    command: Command,
    opts: &RunOptions,
    body: impl FnOnce(&C) -> LabResult<Outputs>,
) -> LabResult<RunReport> {
    let cfg: C = load(opts)?;
    let start = Instant::now();
    let outputs = body(&cfg)?;
    let mut manifest = RunManifest::new(command.name(), to_value(&cfg), cfg.seeds());
    let header = manifest.header_line();
    let mut files = Vec::new();
    for t in &outputs.tables {
        let path = opts.out.join(format!("{}.csv", t.name));
        write_atomic(&path, &t.to_csv(&header)?)?;
        files.push(path);
    }
    if opts.plot {
        for p in &outputs.plots {
            let path = opts.out.join(format!("{}.svg", p.name));
            write_atomic(&path, &p.to_svg())?;
            files.push(path);
        }
    }
    manifest.wall_clock_s = Some(start.elapsed().as_secs_f64());
    let status = match &outputs.failure {
        None => "ok".to_string(),
        Some(e) => format!("failed: {e}"),
    };
    let record = ManifestFile {
        manifest: &manifest,
        status,
        files: files.iter().map(|p| file_name(p)).collect(),
    };
    let path = opts.out.join(format!("{}.manifest.json", command.name()));
    let text = serde_json::to_string_pretty(&record).map_err(|e| LabError::Runtime(e.to_string()))?;
    write_atomic(&path, &(text + "\n"))?;
    files.push(path);
    Ok(RunReport { files, manifest, failure: outputs.failure })
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Runs `command`, writes its outputs under `opts.out`, and returns the
/// report. A run that wrote outputs but failed a convergence requirement
/// comes back as `Ok` with `failure` set.
pub fn run_command(command: Command, opts: &RunOptions) -> LabResult<RunReport> {
    match command {
        Command::InitDensity => execute(command, opts, |c: &init_density::InitDensityConfig| {
            let r = init_density::run(c)?;
            Ok(Outputs::new(r.tables(), r.plots()))
        }),
        Command::AlphaSweep => execute(command, opts, |c: &alpha_sweep::AlphaSweepConfig| {
            let r = alpha_sweep::run(c)?;
            let mut out = Outputs::new(r.tables(), r.plots(c));
            out.failure = alpha_sweep::check_convergence(c, &r).err();
            Ok(out)
        }),
        Command::Spiky => execute(command, opts, |c: &spiky::SpikyConfig| {
            let r = spiky::run(c)?;
            Ok(Outputs::new(r.tables(c), r.plots(c)))
        }),
        Command::RoughnessSweep => execute(command, opts, |c: &roughness::RoughnessConfig| {
            let r = roughness::run(c)?;
            Ok(Outputs::new(r.tables(), r.plots(c)))
        }),
        Command::LonelySweep => execute(command, opts, |c: &lonely::LonelyConfig| {
            let r = lonely::run(c)?;
            Ok(Outputs::new(r.tables(), r.plots()))
        }),
        Command::SegregBench => execute(command, opts, |c: &segreg::SegregConfig| {
            let r = segreg::run(c)?;
            Ok(Outputs::new(r.tables(), r.plots()))
        }),
        Command::HessianReport => execute(command, opts, |c: &hessian::HessianConfig| {
            let r = hessian::run(c)?;
            Ok(Outputs::new(r.tables(), r.plots()))
        }),
        Command::GfFrames => execute(command, opts, |c: &gf_frames::GfFramesConfig| {
            let r = gf_frames::run(c)?;
            Ok(Outputs::new(r.tables(), r.plots()))
        }),
        Command::DataDependentInit => execute(command, opts, |c: &data_dependent_init::DataDependentConfig| {
            let r = data_dependent_init::run(c)?;
            Ok(Outputs::new(r.tables(c), r.plots(c)))
        }),
    }
}
