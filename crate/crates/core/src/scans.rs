//! Robustness heatmaps over amplitude and error strength, and the
//! fidelity-versus-register-size sweep.
//!
//! Every cell re-derives its duration from the minimal-time rule
//! `T = C(A) / g_max`, so a column of a heatmap is one amplitude run at its
//! own shortest duration.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Integration};
use crate::error::{Error, Result};
use crate::model::{ErrorModel, NoiseModel};
use crate::optimize;
use crate::pulse_design::{ProtocolKind, ProtocolSpec};
use crate::transmon::{self, FeasibilityPolicy, PhysicalModel, PhysicalOptions, TransmonParams};

/// Heatmap resolution used when a grid is not given explicitly.
pub const DEFAULT_RESOLUTION: usize = 41;
/// Bus rate of the bus-fixed decoherence scan, in units of `g_max`.
pub const BUS_FIXED_RATE: f64 = 1e-3;

const FIDELITY_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoherenceMode {
    /// All four channel types share the swept rate.
    Uniform,
    /// Bus channels pinned at `BUS_FIXED_RATE * g_max`, qubit channels swept.
    BusFixed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanGrid {
    pub x_name: String,
    pub x: Vec<f64>,
    pub y_name: String,
    pub y: Vec<f64>,
    /// `fidelity[iy][ix]`.
    pub fidelity: Vec<Vec<f64>>,
}

impl ScanGrid {
    pub fn validate(&self) -> Result<()> {
        if self.fidelity.len() != self.y.len() || self.fidelity.iter().any(|row| row.len() != self.x.len()) {
            return Err(Error::InvalidGrid("fidelity matrix does not match the axes".into()));
        }
        if self.fidelity.iter().flatten().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Numerical("scan fidelity outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.fidelity[iy][ix]
    }

    pub fn column(&self, ix: usize) -> Vec<f64> {
        self.fidelity.iter().map(|row| row[ix]).collect()
    }

    pub fn row(&self, iy: usize) -> &[f64] {
        &self.fidelity[iy]
    }

    /// First row holds the x values, first column the y values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "{}\\{}", self.y_name, self.x_name)?;
        for x in &self.x {
            write!(w, ",{}", crate::fmt_f64(*x))?;
        }
        writeln!(w)?;
        for (y, row) in self.y.iter().zip(&self.fidelity) {
            write!(w, "{}", crate::fmt_f64(*y))?;
            for f in row {
                write!(w, ",{}", crate::fmt_f64(*f))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanSettings {
    pub steps: usize,
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            steps: dynamics::DEFAULT_STEPS,
            jobs: None,
        }
    }
}

/// Runs `f` on a pool with `jobs` threads, or on the global pool.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Config(format!("thread pool: {e}"))),
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidGrid(format!("cannot build {n} points on [{lo}, {hi}]")));
    }
    Ok((0..n)
        .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect())
}

fn check_axis(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} grid is empty")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid(format!("{name} grid has non-finite values")));
    }
    Ok(())
}

fn check_fidelity(f: f64) -> Result<f64> {
    if !(-FIDELITY_SLACK..=1.0 + FIDELITY_SLACK).contains(&f) {
        return Err(Error::Numerical(format!("fidelity {f} outside [0, 1]")));
    }
    Ok(f.clamp(0.0, 1.0))
}

/// Minimal-time specs for every amplitude, in grid order.
fn minimal_time_specs(template: &ProtocolSpec, amplitudes: &[f64]) -> Result<Vec<ProtocolSpec>> {
    check_axis("amplitude", amplitudes)?;
    amplitudes
        .par_iter()
        .map(|&a| optimize::minimal_time_spec(template, a))
        .collect()
}

fn scan<F>(
    template: &ProtocolSpec,
    amplitudes: &[f64],
    y_name: &str,
    ys: &[f64],
    settings: ScanSettings,
    cell: F,
) -> Result<ScanGrid>
where
    F: Fn(&ProtocolSpec, f64) -> Result<f64> + Sync,
{
    template.validate()?;
    check_axis(y_name, ys)?;
    let nx = amplitudes.len();
    let body = || -> Result<Vec<f64>> {
        let specs = minimal_time_specs(template, amplitudes)?;
        (0..ys.len() * nx)
            .into_par_iter()
            .map(|k| cell(&specs[k % nx], ys[k / nx]).and_then(check_fidelity))
            .collect()
    };
    let flat = with_jobs(settings.jobs, body)??;
    let grid = ScanGrid {
        x_name: "A".into(),
        x: amplitudes.to_vec(),
        y_name: y_name.into(),
        y: ys.to_vec(),
        fidelity: flat.chunks(nx).map(<[f64]>::to_vec).collect(),
    };
    grid.validate()?;
    Ok(grid)
}

fn coherent_fidelity(spec: &ProtocolSpec, error: ErrorModel, steps: usize) -> Result<f64> {
    let psi0 = dynamics::initial_state(spec);
    let run = dynamics::propagate_schrodinger(spec, &error, &psi0, Integration::final_only(steps))?;
    Ok(run.final_fidelity)
}

fn open_fidelity(spec: &ProtocolSpec, noise: &NoiseModel, steps: usize) -> Result<f64> {
    let rho0 = dynamics::initial_state(spec).to_density();
    let run = dynamics::propagate_lindblad(spec, &ErrorModel::default(), noise, &rho0, Integration::final_only(steps))?;
    Ok(run.final_fidelity)
}

/// Noiseless fidelity under `H -> (1 + eps) H`.
pub fn scan_x_error(
    template: &ProtocolSpec,
    amplitudes: &[f64],
    epsilons: &[f64],
    settings: ScanSettings,
) -> Result<ScanGrid> {
    scan(template, amplitudes, "epsilon", epsilons, settings, |spec, eps| {
        coherent_fidelity(spec, ErrorModel { epsilon: eps, delta: 0.0 }, settings.steps)
    })
}

/// Noiseless fidelity under a static qubit detuning `delta` (angular
/// frequency, same units as `g_max`).
pub fn scan_z_error(
    template: &ProtocolSpec,
    amplitudes: &[f64],
    deltas: &[f64],
    settings: ScanSettings,
) -> Result<ScanGrid> {
    scan(template, amplitudes, "delta", deltas, settings, |spec, delta| {
        coherent_fidelity(spec, ErrorModel { epsilon: 0.0, delta }, settings.steps)
    })
}

pub fn scan_decoherence(
    template: &ProtocolSpec,
    amplitudes: &[f64],
    gammas: &[f64],
    mode: DecoherenceMode,
    settings: ScanSettings,
) -> Result<ScanGrid> {
    if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0)) {
        return Err(Error::InvalidGrid(format!("decoherence rate {g} must be >= 0")));
    }
    let n = template.n_qubits;
    let bus_rate = BUS_FIXED_RATE * template.g_max;
    scan(template, amplitudes, "gamma", gammas, settings, |spec, gamma| {
        let noise = match mode {
            DecoherenceMode::Uniform => NoiseModel::uniform(n, gamma),
            DecoherenceMode::BusFixed => NoiseModel::split(n, gamma, bus_rate),
        };
        open_fidelity(spec, &noise, settings.steps)
    })
}

/// Transmon settings shared by every register size of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalSweep {
    pub omega: f64,
    pub detuning: f64,
    pub modulation: f64,
    pub gamma: f64,
    pub model: PhysicalModel,
    pub policy: FeasibilityPolicy,
    pub steps: Option<usize>,
}

impl PhysicalSweep {
    pub fn reference() -> Self {
        let p = TransmonParams::reference(1);
        Self {
            omega: p.omega[0],
            detuning: p.detuning[0],
            modulation: p.modulation[0],
            gamma: p.noise.decay_bus,
            model: PhysicalModel::Full,
            policy: FeasibilityPolicy::Strict,
            steps: None,
        }
    }

    pub fn params(&self, n_qubits: usize) -> TransmonParams {
        TransmonParams::uniform(n_qubits, self.omega, self.detuning, self.modulation, self.gamma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepMode {
    /// Dimensionless Lindblad run with a uniform rate in units of `g_max`.
    Dimensionless { gamma: f64, steps: usize },
    Physical(PhysicalSweep),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_qubits: usize,
    pub amplitude: f64,
    /// `1/g_max` units, or ns in physical mode.
    pub duration: f64,
    pub fidelity: f64,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "n,amplitude,duration,fidelity")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.n_qubits,
            crate::fmt_f64(r.amplitude),
            crate::fmt_f64(r.duration),
            crate::fmt_f64(r.fidelity)
        )?;
    }
    Ok(())
}

/// QST from qubit 1 to qubit 3 with every other qubit idle, at the
/// minimal-time amplitude re-optimized for each register size.
pub fn sweep_qubit_count(ns: &[usize], mode: SweepMode, jobs: Option<usize>) -> Result<Vec<SweepRow>> {
    if ns.is_empty() {
        return Err(Error::InvalidGrid("empty qubit-count range".into()));
    }
    if let Some(n) = ns.iter().find(|&&n| n < 3) {
        return Err(Error::InvalidGrid(format!("qubit count {n} < 3")));
    }
    with_jobs(jobs, || ns.par_iter().map(|&n| sweep_row(n, mode)).collect())?
}

fn sweep_row(n: usize, mode: SweepMode) -> Result<SweepRow> {
    let g_max = match mode {
        SweepMode::Dimensionless { .. } => 1.0,
        SweepMode::Physical(p) => p.params(n).coupling_cap(),
    };
    let template = ProtocolSpec {
        n_qubits: n,
        g_max,
        ..ProtocolSpec::three_qubit(ProtocolKind::Qst)
    };
    let opt = optimize::optimal_amplitude(&template, optimize::DEFAULT_BRACKET)?;
    let spec = template.with_amplitude(opt.amplitude).with_duration(opt.duration);
    let fidelity = match mode {
        SweepMode::Dimensionless { gamma, steps } => open_fidelity(&spec, &NoiseModel::uniform(n, gamma), steps)?,
        SweepMode::Physical(p) => {
            let options = PhysicalOptions {
                steps: p.steps,
                policy: p.policy,
                record_every: 0,
            };
            transmon::simulate_physical(&spec, &p.params(n), p.model, options)?
                .result
                .final_fidelity
        }
    };
    Ok(SweepRow {
        n_qubits: n,
        amplitude: opt.amplitude,
        duration: opt.duration,
        fidelity: check_fidelity(fidelity)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> ScanSettings {
        ScanSettings { steps: 1001, jobs: None }
    }

    #[test]
    fn zero_error_row_matches_baseline() {
        let t = ProtocolSpec::three_qubit(ProtocolKind::Qst);
        let amps = [0.4, 0.8];
        let grid = scan_x_error(&t, &amps, &[-0.05, 0.0, 0.05], settings()).unwrap();
        for (ix, &a) in amps.iter().enumerate() {
            let spec = optimize::minimal_time_spec(&t, a).unwrap();
            let base = coherent_fidelity(&spec, ErrorModel::default(), 1001).unwrap();
            assert!((grid.at(ix, 1) - base).abs() < 1e-12);
        }
    }

    #[test]
    fn x_error_equals_rescaled_schedule() {
        // (1 + eps) H is the schedule of a spec with g scaled by (1 + eps)
        let t = ProtocolSpec::three_qubit(ProtocolKind::PairEsg);
        let spec = optimize::minimal_time_spec(&t, 0.7).unwrap();
        let eps = 0.08;
        let a = coherent_fidelity(&spec, ErrorModel { epsilon: eps, delta: 0.0 }, 2001).unwrap();
        let grid = scan_x_error(&t, &[0.7], &[eps], ScanSettings { steps: 2001, jobs: Some(1) }).unwrap();
        assert_eq!(grid.at(0, 0), check_fidelity(a).unwrap());
    }

    #[test]
    fn grid_shape_and_csv() {
        let t = ProtocolSpec::three_qubit(ProtocolKind::AllEsg);
        let grid = scan_z_error(&t, &[0.5, 0.6, 0.7], &[-0.1, 0.1], settings()).unwrap();
        assert_eq!(grid.fidelity.len(), 2);
        assert_eq!(grid.row(0).len(), 3);
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("delta\\A,"));
        assert_eq!(lines[1].split(',').count(), 4);
    }

    #[test]
    fn zero_rate_row_matches_noiseless() {
        let t = ProtocolSpec::three_qubit(ProtocolKind::Qst);
        let grid = scan_decoherence(&t, &[0.76], &[0.0, 1e-3], DecoherenceMode::Uniform, settings()).unwrap();
        let coherent = scan_x_error(&t, &[0.76], &[0.0], settings()).unwrap();
        assert!((grid.at(0, 0) - coherent.at(0, 0)).abs() < 1e-9);
        assert!(grid.at(0, 1) < grid.at(0, 0));
    }

    #[test]
    fn invalid_grids_rejected() {
        let t = ProtocolSpec::three_qubit(ProtocolKind::Qst);
        assert!(scan_x_error(&t, &[], &[0.0], settings()).is_err());
        assert!(scan_x_error(&t, &[0.5], &[], settings()).is_err());
        assert!(scan_decoherence(&t, &[0.5], &[-1e-4], DecoherenceMode::Uniform, settings()).is_err());
        assert!(sweep_qubit_count(&[2, 3], SweepMode::Dimensionless { gamma: 0.0, steps: 1001 }, None).is_err());
        assert!(linspace(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn linspace_hits_endpoints() {
        let v = linspace(-0.1, 0.1, 41).unwrap();
        assert_eq!(v.len(), 41);
        assert_eq!(v[0], -0.1);
        assert_eq!(v[40], 0.1);
        assert!(v[20].abs() < 1e-17);
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let t = ProtocolSpec::three_qubit(ProtocolKind::Qst);
        let amps = [0.3, 0.6, 0.9];
        let ys = [-0.1, 0.0, 0.1];
        let a = scan_x_error(&t, &amps, &ys, ScanSettings { steps: 1001, jobs: Some(1) }).unwrap();
        let b = scan_x_error(&t, &amps, &ys, ScanSettings { steps: 1001, jobs: Some(3) }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimensionless_sweep_decreases_with_n() {
        let rows = sweep_qubit_count(&[3, 4, 5], SweepMode::Dimensionless { gamma: 1e-3, steps: 1001 }, None).unwrap();
        assert_eq!(rows.iter().map(|r| r.n_qubits).collect::<Vec<_>>(), [3, 4, 5]);
        assert!(rows.windows(2).all(|w| w[1].fidelity < w[0].fidelity));
    }
}
