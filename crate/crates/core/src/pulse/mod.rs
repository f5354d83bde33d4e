//! Pulsed resonance on the S→T lines: two-level and four-level dynamics, ensemble noise,
//! Rabi/Ramsey/Hahn protocols and maximum-magnitude detection.

mod ensemble;
mod four_level;
pub mod ou;
pub mod two_level;

use thiserror::Error;

pub use ensemble::{
    calibrate_pi_pulse, echo_experiment, hahn_experiment, max_magnitude_estimate, rabi_experiment,
    ramsey_experiment, Detection, EnsembleSpec, NoiseModel, RabiCurve, RamseyCurve,
    DEFAULT_MAX_MAGNITUDE_SHOTS,
};
pub use four_level::{simulate_4level, FourLevelDrive, FourLevelPopulations, MAX_STEP_ERROR};
pub use ou::{sample_ou_path, OuPath, OuProcess};
pub use two_level::{
    propagate_pulse, run_sequence, MemberEnvironment, PhaseTrack, PulseMode, Spinor,
    TwoLevelParams, TwoLevelPopulations,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PulseError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unbound symbol '{0}': bind it before running the sequence")]
    UnboundSymbol(String),
    #[error("integration error: {0}")]
    Integration(String),
}

impl From<crate::spin::SpinError> for PulseError {
    fn from(e: crate::spin::SpinError) -> Self {
        PulseError::InvalidInput(e.to_string())
    }
}
