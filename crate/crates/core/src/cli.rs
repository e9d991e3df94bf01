//! Command-line front end.
//!
//! Each command resolves the config, computes everything in memory and only
//! then writes its files, so a failing run leaves the output directory
//! untouched. Exit codes: 0 success, 1 numerical failure, 2 config error.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Mode, RunConfig, ScanKind};
use crate::dynamics::{self, Integration};
use crate::error::{Error, Result};
use crate::model::BasisIndex;
use crate::optimize;
use crate::pulse_design::{self, ProtocolSpec, ScheduleUnits};
use crate::scans::{self, PhysicalSweep, ScanSettings, SweepMode};
use crate::transmon::{self, PhysicalModel, PhysicalOptions};

#[derive(Debug, Parser)]
#[command(name = "darkpath", version, about = "Dark-pathway pulse design and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Coupling schedule and pathway check.
    Design,
    /// Minimal-time curves and optimal amplitudes.
    Optimize,
    /// Master-equation run of one protocol.
    Simulate,
    /// Robustness heatmap over amplitude and one error axis.
    Scan,
    /// State-transfer fidelity against register size.
    SweepN,
    /// Transmon waveform design and simulation.
    Transmon,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::Scan => "scan",
            Command::SweepN => "sweep-n",
            Command::Transmon => "transmon",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Effective,
    Full,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

impl Overrides {
    pub fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::from_toml("")?,
        };
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if self.steps.is_some() {
            cfg.integration.steps = self.steps;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if let Some(model) = self.model {
            cfg.transmon.model = match model {
                ModelArg::Effective => PhysicalModel::Effective,
                ModelArg::Full => PhysicalModel::Full,
            };
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        Ok(cfg)
    }
}

/// Files produced by a command, written together at the end.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    /// False when a run finished but broke a numerical contract.
    pub contract_ok: bool,
}

impl Outputs {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            contract_ok: true,
        }
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    pub fn write_to(&self, dir: &std::path::Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn metadata(command: Command, cfg: &RunConfig) -> Result<serde_json::Map<String, Value>> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), Value::from(command.name()));
    m.insert("config".into(), to_value(cfg)?);
    Ok(m)
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidSpec(_)
        | Error::InvalidGrid(_)
        | Error::Dimension { .. }
        | Error::Domain { .. }
        | Error::NoInteriorMinimum { .. } => 2,
        _ => 1,
    }
}

/// Parses, resolves and runs one command without touching the filesystem.
pub fn execute(command: Command, overrides: &Overrides) -> Result<(RunConfig, Outputs)> {
    let mut raw = overrides.load()?;
    if command == Command::Transmon {
        raw.mode = Mode::Transmon;
    }
    let explicit_steps = raw.integration.steps;
    let cfg = raw.resolve()?;
    let outputs = match command {
        Command::Design => design(&cfg)?,
        Command::Optimize => run_optimize(&cfg)?,
        Command::Simulate => simulate(&cfg)?,
        Command::Scan => scan(&cfg)?,
        Command::SweepN => sweep(&cfg, explicit_steps)?,
        Command::Transmon => physical(&cfg)?,
    };
    Ok((cfg, outputs))
}

fn design(cfg: &RunConfig) -> Result<Outputs> {
    let spec = cfg.spec();
    let schedule = pulse_design::synthesize(&spec, cfg.protocol.samples)?;
    let pathway = pulse_design::verify_pathway(&spec, &schedule.times)?;
    let mut out = Outputs::new();
    let mut meta = metadata(Command::Design, cfg)?;
    meta.insert("spec".into(), to_value(&spec)?);
    meta.insert("duration".into(), Value::from(spec.duration));
    meta.insert("duration_times_g_max".into(), Value::from(spec.duration * spec.g_max));
    meta.insert("peak_coupling".into(), Value::from(schedule.peak_coupling));
    meta.insert("peak_over_g_max".into(), Value::from(schedule.peak_coupling / spec.g_max));
    meta.insert("pathway".into(), to_value(&pathway)?);
    meta.insert("warnings".into(), to_value(&spec.warnings())?);
    match cfg.mode {
        Mode::Dimensionless => {
            out.csv("schedule.csv", |w| schedule.write_csv(w, ScheduleUnits::Dimensionless))?;
        }
        Mode::Transmon => {
            out.csv("schedule.csv", |w| schedule.write_csv(w, ScheduleUnits::Transmon))?;
            let params = cfg.transmon.params(spec.n_qubits);
            let wf = transmon::design_physical(&spec, &params, cfg.protocol.samples, cfg.transmon.policy)?;
            let max_eta = wf.eta.iter().flatten().copied().fold(0.0, f64::max);
            meta.insert("saturated_samples".into(), Value::from(wf.saturated_samples));
            meta.insert("max_eta".into(), Value::from(max_eta));
            out.csv("eta.csv", |w| wf.write_csv(w))?;
        }
    }
    out.json("design.json", &Value::Object(meta))?;
    Ok(out)
}

fn run_optimize(cfg: &RunConfig) -> Result<Outputs> {
    let o = &cfg.optimize;
    let grid = optimize::amplitude_grid(o.a_min, o.a_max, o.a_step);
    let templates: Vec<ProtocolSpec> = o
        .protocols
        .iter()
        .map(|&kind| ProtocolSpec { kind, ..cfg.spec() })
        .collect();
    scans::with_jobs(cfg.jobs, || -> Result<Outputs> {
        let mut curves = Vec::new();
        let mut optima = serde_json::Map::new();
        for t in &templates {
            t.with_duration(1.0).validate()?;
            curves.push(optimize::time_curve(t, &grid)?);
            let best = optimize::optimal_amplitude(t, (o.a_min, o.a_max))?;
            optima.insert(t.kind.name().into(), to_value(&best)?);
        }
        let mut out = Outputs::new();
        out.csv("optimize.csv", |w| {
            use std::io::Write;
            write!(w, "A")?;
            for t in &templates {
                write!(w, ",T_{}", t.kind.name())?;
            }
            writeln!(w)?;
            for (k, a) in grid.iter().enumerate() {
                write!(w, "{}", crate::fmt_f64(*a))?;
                for c in &curves {
                    write!(w, ",{}", crate::fmt_f64(c.durations[k]))?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
        let mut meta = metadata(Command::Optimize, cfg)?;
        meta.insert("g_max".into(), Value::from(cfg.g_max()));
        meta.insert("optima".into(), Value::Object(optima));
        out.json("optimize.json", &Value::Object(meta))?;
        Ok(out)
    })?
}

fn summary(meta: &mut serde_json::Map<String, Value>, result: &dynamics::SimulationResult) -> Result<()> {
    meta.insert("final_fidelity".into(), Value::from(result.final_fidelity));
    meta.insert("diagnostics".into(), to_value(&result.diagnostics)?);
    meta.insert("within_contract".into(), Value::from(result.diagnostics.within_contract()));
    Ok(())
}

fn simulate(cfg: &RunConfig) -> Result<Outputs> {
    let spec = cfg.spec();
    let basis = BasisIndex::new(spec.n_qubits);
    let mut meta = metadata(Command::Simulate, cfg)?;
    let (result, time_scale) = match cfg.mode {
        Mode::Dimensionless => {
            let rho0 = dynamics::initial_state(&spec).to_density();
            let integration = Integration {
                steps: cfg.steps(),
                record_every: cfg.integration.record_every,
            };
            let r = dynamics::propagate_lindblad(&spec, &cfg.error, &cfg.noise_model(), &rho0, integration)?;
            (r, spec.g_max)
        }
        Mode::Transmon => {
            let run = physical_run(cfg, &spec)?;
            meta.insert("saturated_samples".into(), Value::from(run.waveform.saturated_samples));
            (run.result, 1.0)
        }
    };
    summary(&mut meta, &result)?;
    let mut out = Outputs::new();
    out.contract_ok = result.diagnostics.within_contract();
    out.csv("trajectory.csv", |w| result.write_csv(w, &basis, time_scale))?;
    out.json("simulate.json", &Value::Object(meta))?;
    Ok(out)
}

fn physical_run(cfg: &RunConfig, spec: &ProtocolSpec) -> Result<transmon::PhysicalRun> {
    let params = cfg.transmon.params(spec.n_qubits);
    let options = PhysicalOptions {
        steps: Some(cfg.steps()),
        policy: cfg.transmon.policy,
        record_every: cfg.integration.record_every,
    };
    transmon::simulate_physical(spec, &params, cfg.transmon.model, options)
}

fn scan(cfg: &RunConfig) -> Result<Outputs> {
    if cfg.mode != Mode::Dimensionless {
        return Err(Error::Config("scan runs in dimensionless mode only".into()));
    }
    let template = cfg.spec();
    let (amps, ys) = cfg.scan_axes()?;
    let settings = ScanSettings {
        steps: cfg.steps(),
        jobs: cfg.jobs,
    };
    let grid = match cfg.scan.kind {
        ScanKind::XError => scans::scan_x_error(&template, &amps, &ys, settings)?,
        ScanKind::ZError => scans::scan_z_error(&template, &amps, &ys, settings)?,
        ScanKind::Decoherence => {
            scans::scan_decoherence(&template, &amps, &ys, cfg.scan.decoherence_mode, settings)?
        }
    };
    let mut out = Outputs::new();
    out.csv("scan.csv", |w| grid.write_csv(w))?;
    let mut meta = metadata(Command::Scan, cfg)?;
    meta.insert("protocol".into(), Value::from(template.kind.name()));
    meta.insert("steps".into(), Value::from(settings.steps));
    meta.insert(
        "x".into(),
        json!({ "name": grid.x_name, "values": grid.x }),
    );
    meta.insert(
        "y".into(),
        json!({ "name": grid.y_name, "values": grid.y }),
    );
    out.json("scan.json", &Value::Object(meta))?;
    Ok(out)
}

fn sweep(cfg: &RunConfig, explicit_steps: Option<usize>) -> Result<Outputs> {
    let mode = match cfg.mode {
        Mode::Dimensionless => SweepMode::Dimensionless {
            gamma: cfg.noise.gamma * cfg.protocol.g_max,
            steps: cfg.steps(),
        },
        Mode::Transmon => {
            let (omega, detuning, modulation, gamma) = cfg.transmon.angular_values();
            SweepMode::Physical(PhysicalSweep {
                omega,
                detuning,
                modulation,
                gamma,
                model: cfg.transmon.model,
                policy: cfg.transmon.policy,
                steps: explicit_steps,
            })
        }
    };
    let rows = scans::sweep_qubit_count(&cfg.sweep_range(), mode, cfg.jobs)?;
    let mut out = Outputs::new();
    out.csv("sweep.csv", |w| scans::write_sweep_csv(&rows, w))?;
    let mut meta = metadata(Command::SweepN, cfg)?;
    meta.insert("rows".into(), to_value(&rows)?);
    out.json("sweep.json", &Value::Object(meta))?;
    Ok(out)
}

fn physical(cfg: &RunConfig) -> Result<Outputs> {
    let spec = cfg.spec();
    let basis = BasisIndex::new(spec.n_qubits);
    let run = physical_run(cfg, &spec)?;
    let schedule = pulse_design::synthesize(&spec, cfg.protocol.samples)?;
    let mut meta = metadata(Command::Transmon, cfg)?;
    meta.insert("coupling_cap".into(), Value::from(spec.g_max));
    meta.insert("steps".into(), Value::from(run.steps));
    meta.insert("saturated_samples".into(), Value::from(run.waveform.saturated_samples));
    summary(&mut meta, &run.result)?;
    let mut out = Outputs::new();
    out.contract_ok = run.result.diagnostics.within_contract();
    out.csv("schedule.csv", |w| schedule.write_csv(w, ScheduleUnits::Transmon))?;
    out.csv("eta.csv", |w| run.waveform.write_csv(w))?;
    out.csv("trajectory.csv", |w| run.result.write_csv(w, &basis, 1.0))?;
    out.json("transmon.json", &Value::Object(meta))?;
    Ok(out)
}

/// Entry point shared by the binary: returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (cfg, outputs) = match execute(cli.command, &cli.overrides) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("darkpath {}: {e}", cli.command.name());
            return exit_code(&e);
        }
    };
    match outputs.write_to(&cfg.out) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("darkpath {}: {e}", cli.command.name());
            return 1;
        }
    }
    if outputs.contract_ok {
        0
    } else {
        eprintln!("darkpath {}: density-matrix diagnostics outside contract", cli.command.name());
        1
    }
}
