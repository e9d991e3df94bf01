//! Parametrically modulated transmons on a shared resonator.
//!
//! Units: time in ns, frequencies in rad/ns. A qubit whose frequency is
//! modulated as `F_j(t) = eta_j(t) sin(nu_j t)` couples to the bus through
//! `Omega_j exp(i Delta_j t - i F_j(t))`; on resonance (`nu_j = Delta_j`) the
//! slow part of that coupling is `Omega_j J1(eta_j)`.
//!
//! `J1` is non-negative on `[0, 1.8412]`, so negative design couplings are
//! realized by shifting the modulation phase: `F_j -> F_j + pi`, which flips
//! the sign of the whole coupling term.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Drive, Integration, SimulationResult};
use crate::error::{Error, Result};
use crate::model::NoiseModel;
use crate::pulse_design::{self, uniform_grid, ProtocolSpec};
use crate::state::CMatrix;

/// First maximum of `J1`.
pub const J1_ARGMAX: f64 = 1.8411837813406593;
/// `J1(J1_ARGMAX)`: the largest coupling ratio `g / Omega` a drive can reach.
pub const J1_MAX: f64 = 0.5818652242815964;

pub const INVERSION_TOL: f64 = 1e-10;
/// Integration steps per modulation period in the full model.
pub const STEPS_PER_PERIOD: usize = 200;

/// `2 pi f` for `f` in MHz, in rad/ns.
pub fn angular_mhz(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e-3
}

/// `2 pi f` for `f` in kHz, in rad/ns.
pub fn angular_khz(f_khz: f64) -> f64 {
    TAU * f_khz * 1e-6
}

fn bessel_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = -half * half;
    let mut term = (1..=n).fold(1.0, |acc, k| acc * half / k as f64);
    let mut sum = term;
    for k in 1..200 {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Miller's downward recurrence, normalized with `J0 + 2 sum J_2k = 1`.
fn bessel_miller(n: u32, x: f64) -> f64 {
    let order = (n as f64).max(x);
    let mut start = (order + 20.0 + (40.0 * order).sqrt()) as u32;
    start += start % 2;
    let two_over_x = 2.0 / x;
    let (mut above, mut current) = (0.0f64, 1e-30f64);
    let mut result = 0.0;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let below = k as f64 * two_over_x * current - above;
        above = current;
        current = below;
        // `current` now holds the unnormalized J_{k-1}
        if current.abs() > 1e250 {
            current *= 1e-250;
            above *= 1e-250;
            result *= 1e-250;
            norm *= 1e-250;
        }
        if k - 1 == n {
            result = current;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * current;
        }
    }
    norm += current;
    result / norm
}

/// Bessel function of the first kind of integer order.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let ax = x.abs();
    let v = if ax == 0.0 {
        if n == 0 {
            1.0
        } else {
            0.0
        }
    } else if ax <= 4.0 {
        bessel_series(n, ax)
    } else {
        bessel_miller(n, ax)
    };
    if x < 0.0 && n % 2 == 1 {
        -v
    } else {
        v
    }
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_j(0, x)
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_j(1, x)
}

/// Smallest non-negative `eta` with `Omega J1(eta) = g`.
pub fn invert_bessel(g: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::InvalidSpec(format!("Omega must be positive, got {omega}")));
    }
    if g < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "coupling {g} is negative; pass |g| and realize the sign with the phase flag"
        )));
    }
    let ratio = g / omega;
    if ratio > J1_MAX * (1.0 + 1e-12) {
        return Err(Error::InfeasibleDrive {
            qubit: 0,
            t: f64::NAN,
            ratio,
            limit: J1_MAX,
        });
    }
    Ok(invert_ratio(ratio.min(J1_MAX)))
}

/// Safeguarded Newton on `[0, J1_ARGMAX]`, where `J1` is increasing.
fn invert_ratio(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        return 0.0;
    }
    if ratio >= J1_MAX {
        return J1_ARGMAX;
    }
    let (mut lo, mut hi) = (0.0f64, J1_ARGMAX);
    let mut x = (2.0 * ratio).min(0.5 * J1_ARGMAX);
    for _ in 0..100 {
        let f = bessel_j1(x) - ratio;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = bessel_j0(x) - bessel_j1(x) / x;
        let mut next = x - f / slope;
        if !(next > lo && next < hi) || slope <= 0.0 {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step < 1e-14 || hi - lo < INVERSION_TOL * 1e-3 {
            break;
        }
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhysicalModel {
    /// Time-averaged couplings `Omega_j J1(eta_j)`.
    Effective,
    /// Oscillating phases kept exactly.
    Full,
}

/// What to do when a design coupling exceeds `J1_MAX * Omega`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilityPolicy {
    Strict,
    /// Clip `eta` at the `J1` maximum and count the clipped samples.
    Saturate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmonParams {
    pub omega: Vec<f64>,
    pub detuning: Vec<f64>,
    pub modulation: Vec<f64>,
    pub noise: NoiseModel,
}

impl TransmonParams {
    pub fn uniform(n_qubits: usize, omega: f64, detuning: f64, modulation: f64, gamma: f64) -> Self {
        Self {
            omega: vec![omega; n_qubits],
            detuning: vec![detuning; n_qubits],
            modulation: vec![modulation; n_qubits],
            noise: NoiseModel::uniform(n_qubits, gamma),
        }
    }

    /// Omega = 2pi x 17 MHz, Delta = nu = 2pi x 800 MHz, Gamma = 2pi x 5 kHz.
    pub fn reference(n_qubits: usize) -> Self {
        Self::uniform(
            n_qubits,
            angular_mhz(17.0),
            angular_mhz(800.0),
            angular_mhz(800.0),
            angular_khz(5.0),
        )
    }

    pub fn n_qubits(&self) -> usize {
        self.omega.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.omega.len();
        for len in [self.detuning.len(), self.modulation.len(), self.noise.n_qubits()] {
            if len != n {
                return Err(Error::Dimension { expected: n, got: len });
            }
        }
        if self.omega.iter().any(|&o| !(o > 0.0)) {
            return Err(Error::InvalidSpec("every Omega_j must be positive".into()));
        }
        if self.modulation.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidSpec("every modulation frequency must be positive".into()));
        }
        self.noise.validate()
    }

    pub fn is_resonant(&self) -> bool {
        self.detuning.iter().zip(&self.modulation).all(|(d, v)| d == v)
    }

    /// Largest coupling every qubit can reach.
    pub fn coupling_cap(&self) -> f64 {
        J1_MAX * self.omega.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Step count giving at least `STEPS_PER_PERIOD` steps per modulation period.
    pub fn full_model_steps(&self, duration: f64) -> usize {
        let fastest = self.modulation.iter().copied().fold(0.0f64, f64::max);
        let dt = TAU / fastest / STEPS_PER_PERIOD as f64;
        ((duration / dt).ceil() as usize).max(dynamics::MIN_STEPS)
    }
}

/// Sampled modulation amplitudes with per-sample sign flags.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriveWaveform {
    pub times: Vec<f64>,
    /// `eta[j][k]` for qubit `j + 1`, always in `[0, J1_ARGMAX]`.
    pub eta: Vec<Vec<f64>>,
    /// `flip[j][k]`: modulation phase shifted by pi (negative coupling).
    pub flip: Vec<Vec<bool>>,
    pub saturated_samples: usize,
}

impl DriveWaveform {
    pub fn n_qubits(&self) -> usize {
        self.eta.len()
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().expect("non-empty waveform")
    }

    /// Linearly interpolated signed amplitude (negative when flipped).
    pub fn signed_eta(&self, qubit: usize, t: f64) -> f64 {
        let n = self.times.len();
        let duration = self.duration();
        let pos = (t / duration).clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (pos.floor() as usize).min(n - 2);
        let frac = pos - k as f64;
        let signed = |i: usize| {
            let e = self.eta[qubit][i];
            if self.flip[qubit][i] {
                -e
            } else {
                e
            }
        };
        signed(k) * (1.0 - frac) + signed(k + 1) * frac
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.n_qubits();
        write!(w, "t_ns")?;
        for j in 1..=n {
            write!(w, ",eta_{j}")?;
        }
        for j in 1..=n {
            write!(w, ",phase_flag_{j}")?;
        }
        writeln!(w)?;
        for (k, &t) in self.times.iter().enumerate() {
            write!(w, "{}", crate::fmt_f64(t))?;
            for j in 0..n {
                write!(w, ",{}", crate::fmt_f64(self.eta[j][k]))?;
            }
            for j in 0..n {
                write!(w, ",{}", u8::from(self.flip[j][k]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Converts the protocol's coupling schedule into modulation amplitudes.
pub fn design_physical(
    spec: &ProtocolSpec,
    params: &TransmonParams,
    n_samples: usize,
    policy: FeasibilityPolicy,
) -> Result<DriveWaveform> {
    spec.validate()?;
    params.validate()?;
    if params.n_qubits() != spec.n_qubits {
        return Err(Error::Dimension {
            expected: spec.n_qubits,
            got: params.n_qubits(),
        });
    }
    let schedule = pulse_design::synthesize(spec, n_samples)?;
    let n = spec.n_qubits;
    let mut eta = vec![Vec::with_capacity(n_samples); n];
    let mut flip = vec![Vec::with_capacity(n_samples); n];
    let mut saturated = 0usize;
    let mut worst: Option<(usize, f64, f64)> = None;
    for (k, &t) in schedule.times.iter().enumerate() {
        for j in 0..n {
            let g = schedule.couplings[j][k];
            let ratio = g.abs() / params.omega[j];
            if ratio > J1_MAX * (1.0 + 1e-12) {
                saturated += 1;
                if worst.map_or(true, |(_, _, r)| ratio > r) {
                    worst = Some((j + 1, t, ratio));
                }
            }
            eta[j].push(invert_ratio(ratio.min(J1_MAX)));
            flip[j].push(g < 0.0);
        }
    }
    if let (FeasibilityPolicy::Strict, Some((qubit, t, ratio))) = (policy, worst) {
        return Err(Error::InfeasibleDrive {
            qubit,
            t,
            ratio,
            limit: J1_MAX,
        });
    }
    Ok(DriveWaveform {
        times: schedule.times,
        eta,
        flip,
        saturated_samples: saturated,
    })
}

/// Interaction-picture Hamiltonian with the oscillating phases kept.
pub fn full_hamiltonian(t: f64, params: &TransmonParams, waveform: &DriveWaveform, h: &mut CMatrix) {
    let n = params.n_qubits();
    let bus = n + 1;
    h.fill(C64::new(0.0, 0.0));
    for j in 0..n {
        let s = waveform.signed_eta(j, t);
        let phase = params.detuning[j] * t - s.abs() * (params.modulation[j] * t).sin();
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        let v = C64::from_polar(sign * params.omega[j], phase);
        h[(j + 1, bus)] = v;
        h[(bus, j + 1)] = v.conj();
    }
}

/// Time-averaged Hamiltonian with couplings `Omega_j J1(eta_j(t))`.
pub fn effective_hamiltonian(t: f64, params: &TransmonParams, waveform: &DriveWaveform, h: &mut CMatrix) {
    let n = params.n_qubits();
    let bus = n + 1;
    h.fill(C64::new(0.0, 0.0));
    for j in 0..n {
        let g = params.omega[j] * bessel_j1(waveform.signed_eta(j, t));
        h[(j + 1, bus)] = C64::new(g, 0.0);
        h[(bus, j + 1)] = C64::new(g, 0.0);
    }
}

pub struct TransmonDrive<'a> {
    pub params: &'a TransmonParams,
    pub waveform: &'a DriveWaveform,
    pub model: PhysicalModel,
}

impl Drive for TransmonDrive<'_> {
    fn dim(&self) -> usize {
        self.params.n_qubits() + 2
    }

    fn fill(&self, t: f64, h: &mut CMatrix) -> Result<()> {
        match self.model {
            PhysicalModel::Full => full_hamiltonian(t, self.params, self.waveform, h),
            PhysicalModel::Effective => effective_hamiltonian(t, self.params, self.waveform, h),
        }
        Ok(())
    }
}

/// One-period average of `exp(i Delta t - i eta sin(nu t))` by the
/// rectangle rule (exact up to aliasing for periodic integrands).
pub fn jacobi_anger_average(eta: f64, nu: f64, detuning: f64, points: usize) -> C64 {
    let period = TAU / nu;
    let dt = period / points as f64;
    let sum: C64 = (0..points)
        .map(|k| {
            let t = k as f64 * dt;
            C64::from_polar(1.0, detuning * t - eta * (nu * t).sin())
        })
        .sum();
    sum / points as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalOptions {
    /// `None` picks `STEPS_PER_PERIOD` per modulation period for the full
    /// model and `DEFAULT_STEPS` for the effective one.
    pub steps: Option<usize>,
    pub policy: FeasibilityPolicy,
    pub record_every: usize,
}

impl Default for PhysicalOptions {
    fn default() -> Self {
        Self {
            steps: None,
            policy: FeasibilityPolicy::Strict,
            record_every: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhysicalRun {
    pub result: SimulationResult,
    pub waveform: DriveWaveform,
    pub steps: usize,
}

/// Lindblad evolution of the transmon register, scored against the
/// protocol's final dark state. `spec.duration` is in ns.
pub fn simulate_physical(
    spec: &ProtocolSpec,
    params: &TransmonParams,
    model: PhysicalModel,
    options: PhysicalOptions,
) -> Result<PhysicalRun> {
    spec.validate()?;
    params.validate()?;
    if model == PhysicalModel::Full && !params.is_resonant() {
        return Err(Error::InvalidSpec("full model requires nu_j = Delta_j".into()));
    }
    let steps = options.steps.unwrap_or(match model {
        PhysicalModel::Full => params.full_model_steps(spec.duration),
        PhysicalModel::Effective => dynamics::DEFAULT_STEPS,
    });
    if model == PhysicalModel::Full {
        let required = params.full_model_steps(spec.duration);
        if steps < required {
            return Err(Error::TooFewSteps { steps, min: required });
        }
    }
    let waveform = design_physical(spec, params, steps + 1, options.policy)?;
    let drive = TransmonDrive {
        params,
        waveform: &waveform,
        model,
    };
    let target = pulse_design::target_state(spec)?;
    let rho0 = dynamics::initial_state(spec).to_density();
    let integration = Integration {
        steps,
        record_every: options.record_every,
    };
    let result = dynamics::evolve_density(&drive, &params.noise, &rho0, spec.duration, integration, &target)?;
    Ok(PhysicalRun { result, waveform, steps })
}

/// Time grid shared by waveform export and simulation.
pub fn waveform_grid(duration: f64, steps: usize) -> Vec<f64> {
    uniform_grid(duration, steps + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse_design::ProtocolKind;

    // mpmath reference values: (x, J0(x), J1(x))
    const REFERENCE: [(f64, f64, f64); 10] = [
        (0.1, 0.99750156206604, 0.049937526036242),
        (0.5, 0.9384698072408129, 0.2422684576748739),
        (1.0, 0.7651976865579666, 0.4400505857449335),
        (1.8, 0.33998641104255833, 0.5815169517311651),
        (2.0, 0.22389077914123567, 0.5767248077568734),
        (3.7, -0.39923020337119114, 0.05383398774546179),
        (5.0, -0.1775967713143383, -0.32757913759146523),
        (10.0, -0.24593576445134835, 0.04347274616886144),
        (25.0, 0.09626678327595811, -0.1253502495802899),
        (50.0, 0.055812327669251816, -0.09751182812517514),
    ];

    #[test]
    fn bessel_reference_values() {
        for (x, j0, j1) in REFERENCE {
            assert!((bessel_j0(x) - j0).abs() < 1e-13, "J0({x})");
            assert!((bessel_j1(x) - j1).abs() < 1e-13, "J1({x})");
            assert!((bessel_j1(-x) + j1).abs() < 1e-13);
        }
        assert!((bessel_j(2, 1.0) - 0.11490348493190047).abs() < 1e-14);
        assert!((bessel_j(3, 7.5) + 0.2580609131934603).abs() < 1e-13);
        assert_eq!(bessel_j1(0.0), 0.0);
        assert_eq!(bessel_j0(0.0), 1.0);
        assert!((bessel_j1(J1_ARGMAX) - J1_MAX).abs() < 1e-15);
    }

    #[test]
    fn inversion_examples() {
        let om = angular_mhz(17.0);
        assert_eq!(invert_bessel(0.0, om).unwrap(), 0.0);
        let eta = invert_bessel(0.4400505857449335 * om, om).unwrap();
        assert!((eta - 1.0).abs() < 1e-10, "{eta}");
        assert!((invert_bessel(J1_MAX * om, om).unwrap() - J1_ARGMAX).abs() < 1e-9);
        assert!(matches!(invert_bessel(0.59 * om, om), Err(Error::InfeasibleDrive { .. })));
        assert!(invert_bessel(-0.1, om).is_err());
    }

    #[test]
    fn inversion_round_trip_on_a_sweep() {
        let om = 2.0;
        for k in 0..=1000 {
            let g = J1_MAX * om * k as f64 / 1000.0;
            let eta = invert_bessel(g, om).unwrap();
            assert!((0.0..=J1_ARGMAX).contains(&eta));
            assert!((om * bessel_j1(eta) - g).abs() <= 1e-9 * om);
        }
    }

    #[test]
    fn zero_eta_gives_detuned_static_coupling() {
        let params = TransmonParams::reference(2);
        let wf = DriveWaveform {
            times: vec![0.0, 10.0],
            eta: vec![vec![0.0; 2]; 2],
            flip: vec![vec![false; 2]; 2],
            saturated_samples: 0,
        };
        let mut h = CMatrix::zeros(4, 4);
        let t = 0.37;
        full_hamiltonian(t, &params, &wf, &mut h);
        let expected = C64::from_polar(params.omega[0], params.detuning[0] * t);
        assert!((h[(1, 3)] - expected).norm() < 1e-15);
        assert_eq!(h, h.adjoint());
    }

    #[test]
    fn jacobi_anger_average_is_j1() {
        let nu = angular_mhz(800.0);
        for eta in [0.2, 1.0, 1.8] {
            let avg = jacobi_anger_average(eta, nu, nu, 256);
            assert!((avg.re - bessel_j1(eta)).abs() < 1e-12);
            assert!(avg.im.abs() < 1e-12);
        }
    }

    #[test]
    fn waveform_endpoints_and_bounds() {
        let params = TransmonParams::reference(3);
        for kind in ProtocolKind::ALL {
            let spec = ProtocolSpec {
                duration: 60.0,
                g_max: params.coupling_cap(),
                ..ProtocolSpec::three_qubit(kind)
            };
            let wf = design_physical(&spec, &params, 501, FeasibilityPolicy::Strict).unwrap();
            for j in 0..3 {
                assert_eq!(wf.eta[j][0], 0.0);
                assert_eq!(*wf.eta[j].last().unwrap(), 0.0);
                assert!(wf.eta[j].iter().all(|&e| (0.0..=J1_ARGMAX).contains(&e)));
            }
            assert_eq!(wf.saturated_samples, 0);
        }
    }

    #[test]
    fn infeasible_schedule_reports_worst_sample() {
        let params = TransmonParams::reference(3);
        let spec = ProtocolSpec {
            duration: 20.0,
            ..ProtocolSpec::three_qubit(ProtocolKind::Qst)
        };
        let err = design_physical(&spec, &params, 401, FeasibilityPolicy::Strict).unwrap_err();
        match err {
            Error::InfeasibleDrive { qubit, ratio, .. } => {
                assert!(qubit == 1 || qubit == 3);
                assert!(ratio > J1_MAX);
            }
            other => panic!("unexpected {other}"),
        }
        let wf = design_physical(&spec, &params, 401, FeasibilityPolicy::Saturate).unwrap();
        assert!(wf.saturated_samples > 0);
        assert!(wf.eta.iter().flatten().all(|&e| e <= J1_ARGMAX));
    }

    #[test]
    fn interpolation_is_continuous_through_sign_changes() {
        let wf = DriveWaveform {
            times: vec![0.0, 1.0, 2.0],
            eta: vec![vec![0.0, 0.4, 0.2]],
            flip: vec![vec![false, false, true]],
            saturated_samples: 0,
        };
        assert!((wf.signed_eta(0, 0.5) - 0.2).abs() < 1e-15);
        assert!((wf.signed_eta(0, 1.5) - 0.1).abs() < 1e-15);
        assert!((wf.signed_eta(0, 2.0) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_schedule_gives_zero_waveform() {
        // a schedule is identically zero only at its endpoints; check those
        let params = TransmonParams::reference(3);
        let spec = ProtocolSpec {
            duration: 60.0,
            ..ProtocolSpec::three_qubit(ProtocolKind::AllEsg)
        };
        let wf = design_physical(&spec, &params, 2, FeasibilityPolicy::Strict).unwrap();
        assert!(wf.eta.iter().flatten().all(|&e| e == 0.0));
    }

    #[test]
    fn full_model_step_contract() {
        let params = TransmonParams::reference(3);
        assert_eq!(params.full_model_steps(1.25), 200.max(dynamics::MIN_STEPS));
        let spec = ProtocolSpec {
            duration: 60.0,
            ..ProtocolSpec::three_qubit(ProtocolKind::Qst)
        };
        let opts = PhysicalOptions {
            steps: Some(1000),
            ..Default::default()
        };
        assert!(matches!(
            simulate_physical(&spec, &params, PhysicalModel::Full, opts),
            Err(Error::TooFewSteps { .. })
        ));
    }

    #[test]
    fn waveform_csv_header() {
        let wf = DriveWaveform {
            times: vec![0.0, 1.0],
            eta: vec![vec![0.0, 0.1], vec![0.0, 0.2]],
            flip: vec![vec![false, true], vec![false, false]],
            saturated_samples: 0,
        };
        let mut buf = Vec::new();
        wf.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_ns,eta_1,eta_2,phase_flag_1,phase_flag_2\n"));
        assert!(text.lines().nth(2).unwrap().ends_with(",1,0"));
    }
}
