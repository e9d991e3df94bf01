//! Dark-state pathway protocols for qubits coupled through a shared bus.
//!
//! Quantum state transfer and entangled-state generation are driven by
//! time-dependent couplings that keep the register in an instantaneous dark
//! state of the star Hamiltonian. The crate designs those couplings, finds
//! minimal-time amplitudes, simulates the Lindblad dynamics, and maps the
//! schedules onto parametrically modulated transmons.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod optimize;
pub mod pulse_design;
pub mod scans;
pub mod state;
pub mod transmon;

pub use error::{Error, Result};
pub use pulse_design::{ProtocolKind, ProtocolSpec};
pub use state::{DensityMatrix, QuantumState};

/// Round-trip float formatting used by every CSV writer.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
