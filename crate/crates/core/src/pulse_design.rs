//! Auxiliary-angle schedules, analytic dark-pathway states and the coupling
//! waveforms that drive them.
//!
//! Every coupling term has the form `d(gamma)/dt * (bounded trig)` and the
//! angles depend on `t` only through `s = t / T`, so all couplings scale as
//! `1 / T`. The `cot(gamma1)` factors are 0/0 at both endpoints; they are
//! rewritten so that no division by `sin(gamma1)` ever happens near zero.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ErrorModel};
use crate::state::QuantumState;

/// Below this value of `gamma1`, `gamma1 * cot(gamma1)` is taken from its
/// Taylor series.
pub const COT_SERIES_THRESHOLD: f64 = 1e-6;

pub const DEFAULT_SAMPLES: usize = 2001;

/// Largest admissible pulse amplitude.
pub const MAX_AMPLITUDE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// State transfer `|m> -> |n>`.
    Qst,
    /// Bell pair between qubits `m` and `n`.
    PairEsg,
    /// Equal superposition over all qubits, starting from `|m>`.
    AllEsg,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Qst, ProtocolKind::PairEsg, ProtocolKind::AllEsg];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Qst => "qst",
            ProtocolKind::PairEsg => "pair-esg",
            ProtocolKind::AllEsg => "all-esg",
        }
    }

    /// Amplitude reported as time-optimal in the original study.
    pub fn reference_amplitude(self) -> f64 {
        match self {
            ProtocolKind::Qst => 0.7365,
            ProtocolKind::PairEsg => 0.7138,
            ProtocolKind::AllEsg => 0.6143,
        }
    }

    pub fn is_pairwise(self) -> bool {
        !matches!(self, ProtocolKind::AllEsg)
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qst" => Ok(ProtocolKind::Qst),
            "pair-esg" => Ok(ProtocolKind::PairEsg),
            "all-esg" => Ok(ProtocolKind::AllEsg),
            other => Err(Error::InvalidSpec(format!("unknown protocol '{other}'"))),
        }
    }
}

/// Everything needed to evaluate one pulse. Qubit labels are 1-based and
/// coincide with basis indices (index 0 is `|G>`, index `N + 1` the bus).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub n_qubits: usize,
    pub source: usize,
    pub target: usize,
    pub amplitude: f64,
    pub duration: f64,
    pub g_max: f64,
}

impl ProtocolSpec {
    pub fn new(
        kind: ProtocolKind,
        n_qubits: usize,
        source: usize,
        target: usize,
        amplitude: f64,
        duration: f64,
        g_max: f64,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            n_qubits,
            source,
            target,
            amplitude,
            duration,
            g_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Three-qubit setup with `m = 1`, `n = 3`, the reference amplitude for
    /// `kind`, unit coupling cap and unit duration.
    pub fn three_qubit(kind: ProtocolKind) -> Self {
        Self {
            kind,
            n_qubits: 3,
            source: 1,
            target: 3,
            amplitude: kind.reference_amplitude(),
            duration: 1.0,
            g_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n_qubits < 2 {
            return bad(format!("need at least 2 qubits, got {}", self.n_qubits));
        }
        if self.source < 1 || self.source > self.n_qubits {
            return bad(format!("source {} outside 1..={}", self.source, self.n_qubits));
        }
        if self.kind.is_pairwise() {
            if self.target < 1 || self.target > self.n_qubits {
                return bad(format!("target {} outside 1..={}", self.target, self.n_qubits));
            }
            if self.source == self.target {
                return bad("source and target must differ".into());
            }
        }
        if !(self.amplitude > 0.0 && self.amplitude <= MAX_AMPLITUDE) {
            return bad(format!("amplitude {} outside (0, {MAX_AMPLITUDE}]", self.amplitude));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.g_max > 0.0 && self.g_max.is_finite()) {
            return bad(format!("g_max must be positive, got {}", self.g_max));
        }
        Ok(())
    }

    /// Soft problems that do not invalidate the spec.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.amplitude > FRAC_PI_2 {
            out.push(format!(
                "amplitude {} > pi/2: gamma1 passes pi/2 and cot(gamma1) changes sign mid-pulse",
                self.amplitude
            ));
        }
        out
    }

    /// Final mixing angle of the protocol.
    pub fn theta(&self) -> f64 {
        match self.kind {
            ProtocolKind::Qst => FRAC_PI_2,
            ProtocolKind::PairEsg => FRAC_PI_4,
            ProtocolKind::AllEsg => (1.0 / self.n_qubits as f64).sqrt().acos(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_qubits + 2
    }

    pub fn bus_index(&self) -> usize {
        self.n_qubits + 1
    }

    pub fn with_duration(&self, duration: f64) -> Self {
        Self {
            duration,
            ..self.clone()
        }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        Self {
            amplitude,
            ..self.clone()
        }
    }

    pub fn with_n_qubits(&self, n_qubits: usize) -> Self {
        Self {
            n_qubits,
            ..self.clone()
        }
    }

    /// Qubits other than source and target (pairwise protocols) or other
    /// than the source (all-qubit protocol).
    pub fn is_idle(&self, qubit: usize) -> bool {
        match self.kind {
            ProtocolKind::AllEsg => qubit != self.source,
            _ => qubit != self.source && qubit != self.target,
        }
    }

    fn normalized_time(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.duration;
        if !(t >= -slack && t <= self.duration + slack) {
            return Err(Error::Domain {
                t,
                duration: self.duration,
            });
        }
        Ok((t / self.duration).clamp(0.0, 1.0))
    }
}

/// Auxiliary angles and their time derivatives. For the all-qubit protocol
/// `gamma1`/`gamma2` hold the primed angles and `gamma3` is unused (zero).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GammaPoint {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub dgamma1: f64,
    pub dgamma2: f64,
    pub dgamma3: f64,
}

/// `16 A s^2 (1-s)^2` and its derivative with respect to `s`.
fn quartic_bump(amplitude: f64, s: f64) -> (f64, f64) {
    let u = s * (1.0 - s);
    (16.0 * amplitude * u * u, 32.0 * amplitude * u * (1.0 - 2.0 * s))
}

/// `-20 s^7 + 70 s^6 - 84 s^5 + 35 s^4` and its derivative `140 s^3 (1-s)^3`.
fn smoothstep7(s: f64) -> (f64, f64) {
    let s4 = s * s * s * s;
    let p = s4 * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s)));
    let u = s * (1.0 - s);
    (p, 140.0 * u * u * u)
}

/// `x cot x`, regular at zero.
fn x_cot_x(x: f64) -> f64 {
    if x.abs() < COT_SERIES_THRESHOLD {
        let x2 = x * x;
        1.0 - x2 / 3.0 - x2 * x2 / 45.0
    } else {
        x * x.cos() / x.sin()
    }
}

/// `(d(smoothstep7)/ds) / (16 s^2 (1-s)^2) = (35/4) s (1-s)`, the polynomial
/// ratio left after cancelling the common `s^2 (1-s)^2` factor.
fn smoothstep_over_bump(s: f64) -> f64 {
    8.75 * s * (1.0 - s)
}

pub fn gamma_two_qubit(spec: &ProtocolSpec, t: f64) -> Result<GammaPoint> {
    if !spec.kind.is_pairwise() {
        return Err(Error::InvalidSpec("two-qubit schedule requested for all-qubit protocol".into()));
    }
    let s = spec.normalized_time(t)?;
    Ok(two_qubit_angles(spec.amplitude, spec.theta(), spec.n_qubits, spec.duration, s))
}

pub fn gamma_all_qubit(spec: &ProtocolSpec, t: f64) -> Result<GammaPoint> {
    if spec.kind != ProtocolKind::AllEsg {
        return Err(Error::InvalidSpec("all-qubit schedule requested for pairwise protocol".into()));
    }
    let s = spec.normalized_time(t)?;
    Ok(all_qubit_angles(spec.amplitude, spec.theta(), spec.duration, s))
}

pub fn gamma(spec: &ProtocolSpec, t: f64) -> Result<GammaPoint> {
    match spec.kind {
        ProtocolKind::AllEsg => gamma_all_qubit(spec, t),
        _ => gamma_two_qubit(spec, t),
    }
}

/// With two qubits there is no idle subspace to rotate into, so `gamma2`
/// stays at zero.
fn two_qubit_angles(amplitude: f64, theta: f64, n_qubits: usize, duration: f64, s: f64) -> GammaPoint {
    let (g1, dg1) = quartic_bump(amplitude, s);
    let (p, dp) = smoothstep7(s);
    let dgamma1 = dg1 / duration;
    let idle = if n_qubits > 2 { 1.0 } else { 0.0 };
    GammaPoint {
        gamma1: g1,
        gamma2: idle * (1.0 - g1.cos()),
        gamma3: theta * p,
        dgamma1,
        dgamma2: idle * dgamma1 * g1.sin(),
        dgamma3: theta * dp / duration,
    }
}

fn all_qubit_angles(amplitude: f64, theta: f64, duration: f64, s: f64) -> GammaPoint {
    let (g1, dg1) = quartic_bump(amplitude, s);
    let (p, dp) = smoothstep7(s);
    GammaPoint {
        gamma1: g1,
        gamma2: theta * p,
        gamma3: 0.0,
        dgamma1: dg1 / duration,
        dgamma2: theta * dp / duration,
        dgamma3: 0.0,
    }
}

/// Coupling branches of the pairwise protocols: `(g_m, g_n, g_idle)`.
/// `g_idle` is zero when there are no idle qubits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitCouplings {
    pub source: f64,
    pub target: f64,
    pub idle: f64,
}

/// Coupling branches of the all-qubit protocol: `(g_m, g_other)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AllQubitCouplings {
    pub source: f64,
    pub other: f64,
}

pub fn couplings_two_qubit(spec: &ProtocolSpec, t: f64) -> Result<TwoQubitCouplings> {
    if !spec.kind.is_pairwise() {
        return Err(Error::InvalidSpec("two-qubit couplings requested for all-qubit protocol".into()));
    }
    let s = spec.normalized_time(t)?;
    let c = two_qubit_branches(spec.amplitude, spec.theta(), spec.n_qubits, spec.duration, s);
    check_finite(&[c.source, c.target, c.idle])?;
    Ok(c)
}

pub fn couplings_all_qubit(spec: &ProtocolSpec, t: f64) -> Result<AllQubitCouplings> {
    if spec.kind != ProtocolKind::AllEsg {
        return Err(Error::InvalidSpec("all-qubit couplings requested for pairwise protocol".into()));
    }
    let s = spec.normalized_time(t)?;
    let c = all_qubit_branches(spec.amplitude, spec.theta(), spec.n_qubits, spec.duration, s);
    check_finite(&[c.source, c.other])?;
    Ok(c)
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("coupling"))
    }
}

fn two_qubit_branches(amplitude: f64, theta: f64, n_qubits: usize, duration: f64, s: f64) -> TwoQubitCouplings {
    let a = two_qubit_angles(amplitude, theta, n_qubits, duration, s);
    let (s2, c2) = a.gamma2.sin_cos();
    let (s3, c3) = a.gamma3.sin_cos();
    // gamma2 = 1 - cos(gamma1) makes dgamma2 * cot(gamma1) = dgamma1 * cos(gamma1).
    let u = a.dgamma1 * a.gamma1.cos();
    // dgamma3 * cot(gamma1) = (dgamma3 / gamma1) * (gamma1 cot gamma1).
    let w = theta * smoothstep_over_bump(s) / (amplitude * duration) * x_cot_x(a.gamma1);
    let idle = if n_qubits > 2 {
        (u * c2 - a.dgamma1 * s2) / ((n_qubits - 2) as f64).sqrt()
    } else {
        0.0
    };
    TwoQubitCouplings {
        source: a.dgamma1 * c2 * c3 + u * s2 * c3 + w * c2 * s3,
        target: w * c2 * c3 - a.dgamma1 * c2 * s3 - u * s2 * s3,
        idle,
    }
}

fn all_qubit_branches(amplitude: f64, theta: f64, n_qubits: usize, duration: f64, s: f64) -> AllQubitCouplings {
    let a = all_qubit_angles(amplitude, theta, duration, s);
    let (s2, c2) = a.gamma2.sin_cos();
    let w = theta * smoothstep_over_bump(s) / (amplitude * duration) * x_cot_x(a.gamma1);
    AllQubitCouplings {
        source: w * s2 + a.dgamma1 * c2,
        other: (w * c2 - a.dgamma1 * s2) / ((n_qubits - 1) as f64).sqrt(),
    }
}

/// Distinct coupling branches at normalized time `s` for a pulse of unit
/// duration. Multiplying by `1/T` gives the physical couplings.
pub(crate) fn unit_branches(kind: ProtocolKind, amplitude: f64, theta: f64, n_qubits: usize, s: f64) -> ([f64; 3], usize) {
    match kind {
        ProtocolKind::AllEsg => {
            let c = all_qubit_branches(amplitude, theta, n_qubits, 1.0, s);
            ([c.source, c.other, 0.0], 2)
        }
        _ => {
            let c = two_qubit_branches(amplitude, theta, n_qubits, 1.0, s);
            let used = if n_qubits > 2 { 3 } else { 2 };
            ([c.source, c.target, c.idle], used)
        }
    }
}

/// Per-qubit couplings `g_1 .. g_N` at time `t`, written into `out`.
pub fn fill_couplings(spec: &ProtocolSpec, t: f64, out: &mut [f64]) -> Result<()> {
    if out.len() != spec.n_qubits {
        return Err(Error::Dimension {
            expected: spec.n_qubits,
            got: out.len(),
        });
    }
    match spec.kind {
        ProtocolKind::AllEsg => {
            let c = couplings_all_qubit(spec, t)?;
            for (j, g) in out.iter_mut().enumerate() {
                *g = if j + 1 == spec.source { c.source } else { c.other };
            }
        }
        _ => {
            let c = couplings_two_qubit(spec, t)?;
            for (j, g) in out.iter_mut().enumerate() {
                let q = j + 1;
                *g = if q == spec.source {
                    c.source
                } else if q == spec.target {
                    c.target
                } else {
                    c.idle
                };
            }
        }
    }
    Ok(())
}

pub fn couplings(spec: &ProtocolSpec, t: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; spec.n_qubits];
    fill_couplings(spec, t, &mut out)?;
    Ok(out)
}

/// Analytic dark-pathway state at time `t`.
pub fn dark_state(spec: &ProtocolSpec, t: f64) -> Result<QuantumState> {
    spec.validate()?;
    let a = gamma(spec, t)?;
    Ok(dark_state_from_angles(spec, &a))
}

fn dark_state_from_angles(spec: &ProtocolSpec, a: &GammaPoint) -> QuantumState {
    let n = spec.n_qubits;
    let mut amps = vec![C64::new(0.0, 0.0); spec.dim()];
    let (s1, c1) = a.gamma1.sin_cos();
    let (s2, c2) = a.gamma2.sin_cos();
    match spec.kind {
        ProtocolKind::AllEsg => {
            let norm = ((n - 1) as f64).sqrt();
            for q in 1..=n {
                amps[q] = if q == spec.source {
                    C64::new(c1 * c2, 0.0)
                } else {
                    C64::new(-c1 * s2 / norm, 0.0)
                };
            }
        }
        _ => {
            let (s3, c3) = a.gamma3.sin_cos();
            for q in 1..=n {
                amps[q] = if q == spec.source {
                    C64::new(c1 * c2 * c3, 0.0)
                } else if q == spec.target {
                    C64::new(-c1 * c2 * s3, 0.0)
                } else {
                    C64::new(-c1 * s2 / ((n - 2) as f64).sqrt(), 0.0)
                };
            }
        }
    }
    amps[spec.bus_index()] = C64::new(0.0, -s1);
    QuantumState::from_amplitudes(amps)
}

/// Analytic `d|psi>/dt` by the chain rule through the angle derivatives.
pub fn dark_state_derivative(spec: &ProtocolSpec, t: f64) -> Result<QuantumState> {
    spec.validate()?;
    let a = gamma(spec, t)?;
    let n = spec.n_qubits;
    let mut d = vec![C64::new(0.0, 0.0); spec.dim()];
    let (s1, c1) = a.gamma1.sin_cos();
    let (s2, c2) = a.gamma2.sin_cos();
    match spec.kind {
        ProtocolKind::AllEsg => {
            let norm = ((n - 1) as f64).sqrt();
            for q in 1..=n {
                d[q] = if q == spec.source {
                    C64::new(-s1 * c2 * a.dgamma1 - c1 * s2 * a.dgamma2, 0.0)
                } else {
                    C64::new((s1 * s2 * a.dgamma1 - c1 * c2 * a.dgamma2) / norm, 0.0)
                };
            }
        }
        _ => {
            let (s3, c3) = a.gamma3.sin_cos();
            for q in 1..=n {
                d[q] = if q == spec.source {
                    C64::new(
                        -s1 * c2 * c3 * a.dgamma1 - c1 * s2 * c3 * a.dgamma2 - c1 * c2 * s3 * a.dgamma3,
                        0.0,
                    )
                } else if q == spec.target {
                    C64::new(
                        s1 * c2 * s3 * a.dgamma1 + c1 * s2 * s3 * a.dgamma2 - c1 * c2 * c3 * a.dgamma3,
                        0.0,
                    )
                } else {
                    C64::new((s1 * s2 * a.dgamma1 - c1 * c2 * a.dgamma2) / ((n - 2) as f64).sqrt(), 0.0)
                };
            }
        }
    }
    d[spec.bus_index()] = C64::new(0.0, -c1 * a.dgamma1);
    Ok(QuantumState::from_amplitudes(d))
}

/// The state the protocol ends in; fidelities are measured against it.
pub fn target_state(spec: &ProtocolSpec) -> Result<QuantumState> {
    dark_state(spec, spec.duration)
}

/// Sampled coupling waveforms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PulseSchedule {
    pub spec: ProtocolSpec,
    pub times: Vec<f64>,
    /// `couplings[j][k]` is `g_{j+1}(times[k])`.
    pub couplings: Vec<Vec<f64>>,
    pub peak_coupling: f64,
}

/// Unit conventions for schedule export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleUnits {
    /// Time in `1/g_max`, couplings in units of `g_max`.
    Dimensionless,
    /// Time in ns, couplings as `g / 2pi` in MHz (internal unit rad/ns).
    Transmon,
}

pub fn synthesize(spec: &ProtocolSpec, n_samples: usize) -> Result<PulseSchedule> {
    spec.validate()?;
    if n_samples < 2 {
        return Err(Error::InvalidGrid(format!("need at least 2 samples, got {n_samples}")));
    }
    let times = uniform_grid(spec.duration, n_samples);
    let mut couplings = vec![Vec::with_capacity(n_samples); spec.n_qubits];
    let mut row = vec![0.0; spec.n_qubits];
    let mut peak = 0.0f64;
    for &t in &times {
        fill_couplings(spec, t, &mut row)?;
        for (j, &g) in row.iter().enumerate() {
            couplings[j].push(g);
            peak = peak.max(g.abs());
        }
    }
    Ok(PulseSchedule {
        spec: spec.clone(),
        times,
        couplings,
        peak_coupling: peak,
    })
}

/// `n` points from 0 to `duration` inclusive, with exact endpoints.
pub fn uniform_grid(duration: f64, n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { duration } else { duration * k as f64 / last })
        .collect()
}

impl PulseSchedule {
    pub fn write_csv<W: Write>(&self, mut w: W, units: ScheduleUnits) -> Result<()> {
        let n = self.spec.n_qubits;
        write!(w, "t")?;
        for j in 1..=n {
            write!(w, ",g_{j}")?;
        }
        writeln!(w)?;
        let (tscale, gscale) = match units {
            ScheduleUnits::Dimensionless => (self.spec.g_max, 1.0 / self.spec.g_max),
            ScheduleUnits::Transmon => (1.0, 1000.0 / std::f64::consts::TAU),
        };
        for (k, &t) in self.times.iter().enumerate() {
            write!(w, "{}", crate::fmt_f64(t * tscale))?;
            for j in 0..n {
                write!(w, ",{}", crate::fmt_f64(self.couplings[j][k] * gscale))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Worst-case residuals of the dark-pathway conditions over a grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathwayReport {
    pub samples: usize,
    pub max_norm_error: f64,
    pub max_energy: f64,
    pub max_schrodinger_residual: f64,
}

impl PathwayReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_norm_error < tol && self.max_energy < tol && self.max_schrodinger_residual < tol
    }
}

pub fn verify_pathway(spec: &ProtocolSpec, grid: &[f64]) -> Result<PathwayReport> {
    spec.validate()?;
    let mut g = vec![0.0; spec.n_qubits];
    let mut report = PathwayReport {
        samples: grid.len(),
        max_norm_error: 0.0,
        max_energy: 0.0,
        max_schrodinger_residual: 0.0,
    };
    for &t in grid {
        let psi = dark_state(spec, t)?;
        let dpsi = dark_state_derivative(spec, t)?;
        fill_couplings(spec, t, &mut g)?;
        let h = model::hamiltonian(&g, &ErrorModel::default())?;
        let hpsi = &h * psi.amplitudes();
        let energy = psi.amplitudes().dotc(&hpsi);
        let residual = (dpsi.amplitudes() * C64::new(0.0, 1.0) - &hpsi).norm();
        report.max_norm_error = report.max_norm_error.max((psi.norm_sqr() - 1.0).abs());
        report.max_energy = report.max_energy.max(energy.norm());
        report.max_schrodinger_residual = report.max_schrodinger_residual.max(residual);
    }
    Ok(report)
}
