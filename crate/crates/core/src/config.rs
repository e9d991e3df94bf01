//! TOML run configuration.
//!
//! Every key has a default and unknown keys are rejected. After
//! [`RunConfig::resolve`] the config records every value actually used, so
//! it can be written next to the outputs and fed back in to reproduce them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::error::{Error, Result};
use crate::model::{ErrorModel, NoiseModel};
use crate::optimize;
use crate::pulse_design::{self, ProtocolKind, ProtocolSpec};
use crate::scans::{self, DecoherenceMode};
use crate::transmon::{FeasibilityPolicy, PhysicalModel, TransmonParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Times in `1/g_max`, rates in units of `g_max`.
    #[default]
    Dimensionless,
    /// Times in ns, drive through modulated transmons.
    Transmon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub n_qubits: usize,
    pub source: usize,
    pub target: usize,
    /// Defaults to the reference amplitude of `kind`.
    pub amplitude: Option<f64>,
    /// Defaults to the minimal time for the amplitude. In transmon mode, ns.
    pub duration: Option<f64>,
    /// Coupling cap in dimensionless mode. Transmon mode uses `J1_MAX * Omega`.
    pub g_max: f64,
    pub samples: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::Qst,
            n_qubits: 3,
            source: 1,
            target: 3,
            amplitude: None,
            duration: None,
            g_max: 1.0,
            samples: pulse_design::DEFAULT_SAMPLES,
        }
    }
}

/// Dimensionless decoherence rates in units of `g_max`. `gamma` sets all
/// channels; the other keys override one channel type.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub gamma: f64,
    pub decay_qubit: Option<f64>,
    pub dephase_qubit: Option<f64>,
    pub decay_bus: Option<f64>,
    pub dephase_bus: Option<f64>,
}

impl NoiseConfig {
    pub fn model(&self, n_qubits: usize, g_max: f64) -> NoiseModel {
        let pick = |o: Option<f64>| o.unwrap_or(self.gamma) * g_max;
        NoiseModel {
            decay_qubit: vec![pick(self.decay_qubit); n_qubits],
            dephase_qubit: vec![pick(self.dephase_qubit); n_qubits],
            decay_bus: pick(self.decay_bus),
            dephase_bus: pick(self.dephase_bus),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    /// `None` picks a default per mode (fixed count, or the per-period
    /// contract for the full transmon model).
    pub steps: Option<usize>,
    pub record_every: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            steps: None,
            record_every: 10,
        }
    }
}

/// Transmon parameters as frequencies in MHz (`gamma_khz` in kHz). With
/// `two_pi = true` each value `f` is an ordinary frequency and the angular
/// value is `2 pi f`; with `false` the values are already angular.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransmonConfig {
    pub omega_mhz: f64,
    pub detuning_mhz: f64,
    pub modulation_mhz: f64,
    pub gamma_khz: f64,
    pub two_pi: bool,
    pub model: PhysicalModel,
    pub policy: FeasibilityPolicy,
}

impl Default for TransmonConfig {
    fn default() -> Self {
        Self {
            omega_mhz: 17.0,
            detuning_mhz: 800.0,
            modulation_mhz: 800.0,
            gamma_khz: 5.0,
            two_pi: true,
            model: PhysicalModel::Full,
            policy: FeasibilityPolicy::Strict,
        }
    }
}

impl TransmonConfig {
    fn angular(&self, mhz: f64) -> f64 {
        let f = if self.two_pi { std::f64::consts::TAU * mhz } else { mhz };
        f * 1e-3
    }

    /// `(Omega, Delta, nu, Gamma)` in rad/ns.
    pub fn angular_values(&self) -> (f64, f64, f64, f64) {
        (
            self.angular(self.omega_mhz),
            self.angular(self.detuning_mhz),
            self.angular(self.modulation_mhz),
            self.angular(self.gamma_khz * 1e-3),
        )
    }

    pub fn params(&self, n_qubits: usize) -> TransmonParams {
        let (omega, detuning, modulation, gamma) = self.angular_values();
        TransmonParams::uniform(n_qubits, omega, detuning, modulation, gamma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub protocols: Vec<ProtocolKind>,
    pub a_min: f64,
    pub a_max: f64,
    pub a_step: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            protocols: ProtocolKind::ALL.to_vec(),
            a_min: optimize::DEFAULT_BRACKET.0,
            a_max: optimize::DEFAULT_BRACKET.1,
            a_step: optimize::COARSE_STEP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanKind {
    XError,
    ZError,
    Decoherence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub kind: ScanKind,
    pub decoherence_mode: DecoherenceMode,
    pub a_min: f64,
    pub a_max: f64,
    pub a_points: usize,
    /// Error axis bounds; defaults depend on `kind` (in units of `g_max`).
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
    pub y_points: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            kind: ScanKind::XError,
            decoherence_mode: DecoherenceMode::Uniform,
            a_min: 0.3,
            a_max: 1.2,
            a_points: scans::DEFAULT_RESOLUTION,
            y_min: None,
            y_max: None,
            y_points: scans::DEFAULT_RESOLUTION,
        }
    }
}

impl ScanConfig {
    fn default_bounds(&self) -> (f64, f64) {
        match self.kind {
            ScanKind::XError | ScanKind::ZError => (-0.1, 0.1),
            ScanKind::Decoherence => (0.0, 1e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { n_min: 3, n_max: 10 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub protocol: ProtocolConfig,
    pub noise: NoiseConfig,
    pub error: ErrorModel,
    pub integration: IntegrationConfig,
    pub transmon: TransmonConfig,
    pub optimize: OptimizeConfig,
    pub scan: ScanConfig,
    pub sweep: SweepConfig,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        if cfg.out.as_os_str().is_empty() {
            cfg.out = PathBuf::from("out");
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Coupling cap in the active unit system.
    pub fn g_max(&self) -> f64 {
        match self.mode {
            Mode::Dimensionless => self.protocol.g_max,
            Mode::Transmon => self.transmon.params(self.protocol.n_qubits).coupling_cap(),
        }
    }

    /// Protocol spec without the default-duration fill-in.
    fn spec_template(&self) -> ProtocolSpec {
        let p = &self.protocol;
        ProtocolSpec {
            kind: p.kind,
            n_qubits: p.n_qubits,
            source: p.source,
            target: p.target,
            amplitude: p.amplitude.unwrap_or_else(|| p.kind.reference_amplitude()),
            duration: p.duration.unwrap_or(1.0),
            g_max: self.g_max(),
        }
    }

    /// Checks every field and fills the protocol amplitude, duration and
    /// step count where they can be fixed up front.
    pub fn resolve(mut self) -> Result<Self> {
        let p = self.protocol.clone();
        let p = &p;
        if self.jobs == Some(0) {
            return Err(bad("jobs must be at least 1"));
        }
        if p.samples < 2 {
            return Err(bad("protocol.samples must be at least 2"));
        }
        if !p.kind.is_pairwise() && p.target == 0 {
            return Err(bad("protocol.target must be a qubit label"));
        }
        let (omega, _, modulation, gamma) = self.transmon.angular_values();
        if !(omega > 0.0 && modulation > 0.0 && gamma >= 0.0) {
            return Err(bad("transmon frequencies must be positive and gamma_khz >= 0"));
        }
        if self.integration.steps.is_some_and(|s| s < dynamics::MIN_STEPS) {
            return Err(bad(format!("integration.steps must be at least {}", dynamics::MIN_STEPS)));
        }
        let spec = self.spec_template();
        spec.with_duration(1.0).validate().map_err(|e| bad(e.to_string()))?;
        self.noise
            .model(p.n_qubits, 1.0)
            .validate()
            .map_err(|e| bad(format!("noise: {e}")))?;
        if !(self.error.epsilon.is_finite() && self.error.delta.is_finite()) {
            return Err(bad("error model values must be finite"));
        }
        let o = &self.optimize;
        if o.protocols.is_empty() || !(o.a_min > 0.0 && o.a_max > o.a_min && o.a_step > 0.0) {
            return Err(bad("optimize needs protocols and 0 < a_min < a_max, a_step > 0"));
        }
        let s = &self.scan;
        if s.a_points < 2 || s.y_points < 2 || !(s.a_min > 0.0 && s.a_max > s.a_min) {
            return Err(bad("scan grids need at least 2 points and 0 < a_min < a_max"));
        }
        if self.sweep.n_min < 3 || self.sweep.n_max < self.sweep.n_min {
            return Err(bad("sweep needs 3 <= n_min <= n_max"));
        }

        let amplitude = spec.amplitude;
        self.protocol.amplitude = Some(amplitude);
        if self.protocol.duration.is_none() {
            let c = optimize::dimensionless_peak(&spec, amplitude)?;
            self.protocol.duration = Some(c / spec.g_max);
        }
        if self.integration.steps.is_none() {
            self.integration.steps = Some(match (self.mode, self.transmon.model) {
                (Mode::Transmon, PhysicalModel::Full) => self
                    .transmon
                    .params(p.n_qubits)
                    .full_model_steps(self.protocol.duration.expect("filled above")),
                _ => dynamics::DEFAULT_STEPS,
            });
        }
        let (lo, hi) = self.scan.default_bounds();
        self.scan.y_min.get_or_insert(lo);
        self.scan.y_max.get_or_insert(hi);
        Ok(self)
    }

    /// The protocol spec in the active unit system.
    pub fn spec(&self) -> ProtocolSpec {
        self.spec_template()
    }

    pub fn noise_model(&self) -> NoiseModel {
        match self.mode {
            Mode::Dimensionless => self.noise.model(self.protocol.n_qubits, self.protocol.g_max),
            Mode::Transmon => self.transmon.params(self.protocol.n_qubits).noise,
        }
    }

    pub fn steps(&self) -> usize {
        self.integration.steps.unwrap_or(dynamics::DEFAULT_STEPS)
    }

    pub fn scan_axes(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = &self.scan;
        let (lo, hi) = s.default_bounds();
        let g = self.protocol.g_max;
        let a = scans::linspace(s.a_min, s.a_max, s.a_points)?;
        let y = scans::linspace(s.y_min.unwrap_or(lo), s.y_max.unwrap_or(hi), s.y_points)?;
        let scale = if s.kind == ScanKind::XError { 1.0 } else { g };
        Ok((a, y.into_iter().map(|v| v * scale).collect()))
    }

    pub fn sweep_range(&self) -> Vec<usize> {
        (self.sweep.n_min..=self.sweep.n_max).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transmon;

    #[test]
    fn empty_config_takes_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.mode, Mode::Dimensionless);
        assert_eq!(cfg.out, PathBuf::from("out"));
        assert_eq!(cfg.protocol.kind, ProtocolKind::Qst);
        let r = cfg.resolve().unwrap();
        assert_eq!(r.protocol.amplitude, Some(0.7365));
        assert!(r.protocol.duration.unwrap() > 2.5);
        assert_eq!(r.integration.steps, Some(dynamics::DEFAULT_STEPS));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("colour = 1"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[protocol]\nampltude = 0.7").is_err());
        assert!(RunConfig::from_toml("[error]\nzeta = 0.1").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = "mode = \"transmon\"\n[protocol]\nkind = \"all-esg\"\nduration = 34.0\n";
        let r = RunConfig::from_toml(text).unwrap().resolve().unwrap();
        let back = RunConfig::from_toml(&r.to_toml()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.clone().resolve().unwrap(), r);
    }

    #[test]
    fn transmon_units() {
        let t = TransmonConfig::default();
        let (omega, _, nu, gamma) = t.angular_values();
        assert!((omega - transmon::angular_mhz(17.0)).abs() < 1e-15);
        assert!((nu - transmon::angular_mhz(800.0)).abs() < 1e-15);
        assert!((gamma - transmon::angular_khz(5.0)).abs() < 1e-18);
        let raw = TransmonConfig { two_pi: false, ..t };
        assert!((raw.angular_values().0 - 0.017).abs() < 1e-15);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "jobs = 0",
            "[protocol]\nsource = 9",
            "[protocol]\namplitude = -1.0",
            "[noise]\ngamma = -0.1",
            "[integration]\nsteps = 3",
            "[sweep]\nn_min = 2",
        ] {
            let err = RunConfig::from_toml(text).unwrap().resolve().unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        }
    }

    #[test]
    fn noise_overrides() {
        let cfg = RunConfig::from_toml("[noise]\ngamma = 0.001\ndecay_bus = 0.0").unwrap();
        let m = cfg.noise_model();
        assert_eq!(m.decay_qubit, vec![0.001; 3]);
        assert_eq!(m.decay_bus, 0.0);
        assert_eq!(m.dephase_bus, 0.001);
    }

    #[test]
    fn scan_axes_follow_kind() {
        let cfg = RunConfig::from_toml("[scan]\nkind = \"decoherence\"\ny_points = 3\na_points = 2").unwrap();
        let (a, y) = cfg.scan_axes().unwrap();
        assert_eq!(a, vec![0.3, 1.2]);
        assert_eq!(y, vec![0.0, 5e-4, 1e-3]);
    }
}
