//! Fixed-step RK4 propagation of the Schrödinger and Lindblad equations.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, BasisIndex, CollapseOperator, ErrorModel, NoiseModel};
use crate::pulse_design::{self, ProtocolSpec};
use crate::state::{CMatrix, CVector, DensityMatrix, QuantumState};

pub const DEFAULT_STEPS: usize = 4001;
pub const MIN_STEPS: usize = 100;
/// Trace drift that aborts a Lindblad run.
pub const TRACE_FAILURE: f64 = 1e-6;

/// A time-dependent Hamiltonian on a fixed-dimension space.
pub trait Drive {
    fn dim(&self) -> usize;
    fn fill(&self, t: f64, h: &mut CMatrix) -> Result<()>;
}

/// The bus Hamiltonian driven by the analytic couplings of a protocol.
pub struct ProtocolDrive<'a> {
    spec: &'a ProtocolSpec,
    error: ErrorModel,
    couplings: std::cell::RefCell<Vec<f64>>,
}

impl<'a> ProtocolDrive<'a> {
    pub fn new(spec: &'a ProtocolSpec, error: ErrorModel) -> Self {
        Self {
            spec,
            error,
            couplings: std::cell::RefCell::new(vec![0.0; spec.n_qubits]),
        }
    }
}

impl Drive for ProtocolDrive<'_> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn fill(&self, t: f64, h: &mut CMatrix) -> Result<()> {
        let mut g = self.couplings.borrow_mut();
        pulse_design::fill_couplings(self.spec, t, &mut g)?;
        model::fill_hamiltonian(h, &g, &self.error)
    }
}

/// Identically zero Hamiltonian.
pub struct ZeroDrive(pub usize);

impl Drive for ZeroDrive {
    fn dim(&self) -> usize {
        self.0
    }

    fn fill(&self, _t: f64, h: &mut CMatrix) -> Result<()> {
        h.fill(C64::new(0.0, 0.0));
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub max_trace_deviation: f64,
    pub max_hermiticity_deviation: f64,
    /// Smallest eigenvalue of the final state.
    pub min_eigenvalue: f64,
}

impl Diagnostics {
    /// Whether the run stayed inside the density-matrix contract.
    pub fn within_contract(&self) -> bool {
        self.max_trace_deviation < 1e-8 && self.max_hermiticity_deviation < 1e-10 && self.min_eigenvalue >= -1e-8
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    /// `populations[k][i]`: population of basis state `i` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    /// Overlap with the target state at each recorded time.
    pub fidelities: Vec<f64>,
    pub final_fidelity: f64,
    pub diagnostics: Diagnostics,
    pub final_state: DensityMatrix,
}

impl SimulationResult {
    pub fn write_csv<W: Write>(&self, mut w: W, basis: &BasisIndex, time_scale: f64) -> Result<()> {
        write!(w, "t")?;
        for name in basis.column_names() {
            write!(w, ",{name}")?;
        }
        writeln!(w, ",fidelity")?;
        for (k, &t) in self.times.iter().enumerate() {
            write!(w, "{}", crate::fmt_f64(t * time_scale))?;
            for p in &self.populations[k] {
                write!(w, ",{}", crate::fmt_f64(*p))?;
            }
            writeln!(w, ",{}", crate::fmt_f64(self.fidelities[k]))?;
        }
        Ok(())
    }
}

/// Integration settings shared by both propagators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integration {
    pub steps: usize,
    /// Record a trajectory sample every this many steps (0 = endpoints only).
    pub record_every: usize,
}

impl Integration {
    pub fn new(steps: usize) -> Self {
        Self { steps, record_every: 1 }
    }

    pub fn final_only(steps: usize) -> Self {
        Self { steps, record_every: 0 }
    }

    fn check(&self) -> Result<()> {
        if self.steps < MIN_STEPS {
            return Err(Error::TooFewSteps {
                steps: self.steps,
                min: MIN_STEPS,
            });
        }
        Ok(())
    }

    fn records(&self, k: usize) -> bool {
        k == 0 || k == self.steps || (self.record_every > 0 && k % self.record_every == 0)
    }
}

fn time_at(duration: f64, steps: usize, k: usize) -> f64 {
    if k == steps {
        duration
    } else {
        duration * k as f64 / steps as f64
    }
}

/// `-i H psi`.
fn schrodinger_rhs(h: &CMatrix, psi: &CVector, out: &mut CVector) {
    h.mul_to(psi, out);
    out.apply(|z| *z = C64::new(z.im, -z.re));
}

/// Integrates `i d psi/dt = H(t) psi` over `[0, duration]`.
pub fn evolve_state<D: Drive + ?Sized>(
    drive: &D,
    psi0: &QuantumState,
    duration: f64,
    integration: Integration,
    target: &QuantumState,
) -> Result<SimulationResult> {
    integration.check()?;
    let dim = drive.dim();
    for n in [psi0.dim(), target.dim()] {
        if n != dim {
            return Err(Error::Dimension { expected: dim, got: n });
        }
    }
    let steps = integration.steps;
    let dt = duration / steps as f64;
    let mut psi = psi0.0.clone();
    let mut h = CMatrix::zeros(dim, dim);
    let (mut k1, mut k2, mut k3, mut k4) = (
        CVector::zeros(dim),
        CVector::zeros(dim),
        CVector::zeros(dim),
        CVector::zeros(dim),
    );
    let mut tmp = CVector::zeros(dim);
    let mut out = Recorder::default();
    let mut max_norm_dev = 0.0f64;
    out.push_state(0.0, &psi, target);

    for k in 0..steps {
        let t = time_at(duration, steps, k);
        let t_next = time_at(duration, steps, k + 1);
        let t_mid = 0.5 * (t + t_next);

        drive.fill(t, &mut h)?;
        schrodinger_rhs(&h, &psi, &mut k1);
        tmp.copy_from(&psi);
        tmp.axpy(C64::new(0.5 * dt, 0.0), &k1, C64::new(1.0, 0.0));
        drive.fill(t_mid, &mut h)?;
        schrodinger_rhs(&h, &tmp, &mut k2);
        tmp.copy_from(&psi);
        tmp.axpy(C64::new(0.5 * dt, 0.0), &k2, C64::new(1.0, 0.0));
        schrodinger_rhs(&h, &tmp, &mut k3);
        tmp.copy_from(&psi);
        tmp.axpy(C64::new(dt, 0.0), &k3, C64::new(1.0, 0.0));
        drive.fill(t_next, &mut h)?;
        schrodinger_rhs(&h, &tmp, &mut k4);
        for i in 0..dim {
            psi[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }

        let norm_dev = (psi.norm_squared() - 1.0).abs();
        if !norm_dev.is_finite() {
            return Err(Error::NonFinite("state vector"));
        }
        max_norm_dev = max_norm_dev.max(norm_dev);
        if integration.records(k + 1) {
            out.push_state(t_next, &psi, target);
        }
    }

    let final_state = QuantumState(psi).to_density();
    let diagnostics = Diagnostics {
        max_trace_deviation: max_norm_dev,
        max_hermiticity_deviation: final_state.hermiticity_error(),
        min_eigenvalue: final_state.min_eigenvalue(),
    };
    Ok(out.finish(diagnostics, final_state))
}

/// Right-hand side of the master equation: `-i[H, rho] + sum_k D_k(rho)`.
fn lindblad_rhs(h: &CMatrix, ops: &[CollapseOperator], rho: &CMatrix, hr: &mut CMatrix, out: &mut CMatrix) {
    h.mul_to(rho, hr);
    let dim = rho.nrows();
    // -i(H rho - rho H); (rho H) = (H rho)^dag because both are Hermitian.
    for i in 0..dim {
        for j in 0..dim {
            let comm = hr[(i, j)] - hr[(j, i)].conj();
            out[(i, j)] = C64::new(comm.im, -comm.re);
        }
    }
    for op in ops {
        op.accumulate(rho, out);
    }
}

/// Integrates the Lindblad master equation over `[0, duration]`.
pub fn evolve_density<D: Drive + ?Sized>(
    drive: &D,
    noise: &NoiseModel,
    rho0: &DensityMatrix,
    duration: f64,
    integration: Integration,
    target: &QuantumState,
) -> Result<SimulationResult> {
    integration.check()?;
    rho0.check_valid()?;
    let dim = drive.dim();
    if rho0.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: rho0.dim(),
        });
    }
    if target.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: target.dim(),
        });
    }
    let basis = BasisIndex::new(dim - 2);
    let ops: Vec<CollapseOperator> = model::collapse_operators(noise, &basis)?
        .into_iter()
        .filter(|o| o.rate != 0.0)
        .collect();

    let steps = integration.steps;
    let dt = duration / steps as f64;
    let mut rho = rho0.0.clone();
    let mut h = CMatrix::zeros(dim, dim);
    let mut hr = CMatrix::zeros(dim, dim);
    let (mut k1, mut k2, mut k3, mut k4) = (
        CMatrix::zeros(dim, dim),
        CMatrix::zeros(dim, dim),
        CMatrix::zeros(dim, dim),
        CMatrix::zeros(dim, dim),
    );
    let mut tmp = CMatrix::zeros(dim, dim);
    let mut out = Recorder::default();
    let mut max_trace = (rho.trace().re - 1.0).abs();
    let mut max_herm = 0.0f64;
    out.push_density(0.0, &rho, target);

    for k in 0..steps {
        let t = time_at(duration, steps, k);
        let t_next = time_at(duration, steps, k + 1);
        let t_mid = 0.5 * (t + t_next);

        drive.fill(t, &mut h)?;
        lindblad_rhs(&h, &ops, &rho, &mut hr, &mut k1);
        tmp.copy_from(&rho);
        tmp.zip_apply(&k1, |a, b| *a += b * (0.5 * dt));
        drive.fill(t_mid, &mut h)?;
        lindblad_rhs(&h, &ops, &tmp, &mut hr, &mut k2);
        tmp.copy_from(&rho);
        tmp.zip_apply(&k2, |a, b| *a += b * (0.5 * dt));
        lindblad_rhs(&h, &ops, &tmp, &mut hr, &mut k3);
        tmp.copy_from(&rho);
        tmp.zip_apply(&k3, |a, b| *a += b * dt);
        drive.fill(t_next, &mut h)?;
        lindblad_rhs(&h, &ops, &tmp, &mut hr, &mut k4);
        for i in 0..dim * dim {
            rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }

        let trace_dev = (rho.trace() - C64::new(1.0, 0.0)).norm();
        if !trace_dev.is_finite() {
            return Err(Error::NonFinite("density matrix"));
        }
        if trace_dev > TRACE_FAILURE {
            return Err(Error::Numerical(format!(
                "trace drifted by {trace_dev:.3e} at t = {t_next}; increase the step count (currently {steps})"
            )));
        }
        max_trace = max_trace.max(trace_dev);
        if integration.records(k + 1) {
            let dm = DensityMatrix(rho.clone());
            max_herm = max_herm.max(dm.hermiticity_error());
            out.push_density(t_next, &rho, target);
        }
    }

    let final_state = DensityMatrix(rho);
    let diagnostics = Diagnostics {
        max_trace_deviation: max_trace,
        max_hermiticity_deviation: max_herm.max(final_state.hermiticity_error()),
        min_eigenvalue: final_state.min_eigenvalue(),
    };
    Ok(out.finish(diagnostics, final_state))
}

#[derive(Default)]
struct Recorder {
    times: Vec<f64>,
    populations: Vec<Vec<f64>>,
    fidelities: Vec<f64>,
}

impl Recorder {
    fn push_state(&mut self, t: f64, psi: &CVector, target: &QuantumState) {
        self.times.push(t);
        self.populations.push(psi.iter().map(|a| a.norm_sqr()).collect());
        self.fidelities.push(target.0.dotc(psi).norm_sqr());
    }

    fn push_density(&mut self, t: f64, rho: &CMatrix, target: &QuantumState) {
        self.times.push(t);
        self.populations.push((0..rho.nrows()).map(|i| rho[(i, i)].re).collect());
        self.fidelities.push(expectation(rho, &target.0).re);
    }

    fn finish(self, diagnostics: Diagnostics, final_state: DensityMatrix) -> SimulationResult {
        let final_fidelity = *self.fidelities.last().expect("at least one sample");
        SimulationResult {
            times: self.times,
            populations: self.populations,
            fidelities: self.fidelities,
            final_fidelity,
            diagnostics,
            final_state,
        }
    }
}

fn expectation(rho: &CMatrix, v: &CVector) -> C64 {
    v.dotc(&(rho * v))
}

/// `<target| rho |target>`.
pub fn fidelity(rho: &DensityMatrix, target: &QuantumState) -> Result<f64> {
    if rho.dim() != target.dim() {
        return Err(Error::Dimension {
            expected: rho.dim(),
            got: target.dim(),
        });
    }
    let f = expectation(&rho.0, &target.0);
    if f.im.abs() >= 1e-10 {
        return Err(Error::Numerical(format!("fidelity has imaginary part {:.3e}", f.im)));
    }
    Ok(f.re)
}

/// Schrödinger evolution under a protocol's own couplings, scored against
/// the protocol's final dark state.
pub fn propagate_schrodinger(
    spec: &ProtocolSpec,
    error: &ErrorModel,
    psi0: &QuantumState,
    integration: Integration,
) -> Result<SimulationResult> {
    spec.validate()?;
    let target = pulse_design::target_state(spec)?;
    let drive = ProtocolDrive::new(spec, *error);
    evolve_state(&drive, psi0, spec.duration, integration, &target)
}

pub fn propagate_lindblad(
    spec: &ProtocolSpec,
    error: &ErrorModel,
    noise: &NoiseModel,
    rho0: &DensityMatrix,
    integration: Integration,
) -> Result<SimulationResult> {
    spec.validate()?;
    let target = pulse_design::target_state(spec)?;
    let drive = ProtocolDrive::new(spec, *error);
    evolve_density(&drive, noise, rho0, spec.duration, integration, &target)
}

/// Excitation on the source qubit, as a pure state.
pub fn initial_state(spec: &ProtocolSpec) -> QuantumState {
    QuantumState::basis(spec.dim(), spec.source)
}
