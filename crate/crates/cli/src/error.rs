use std::path::PathBuf;

use donorsim::fit::FitError;
use donorsim::pulse::PulseError;
use donorsim::pump::PumpError;
use donorsim::spin::SpinError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or input data. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// A simulation or fit failed. Exit code 2.
    #[error("{0}")]
    Runtime(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! classify {
    ($t:ty, $($validation:pat),+) => {
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                #[allow(unreachable_patterns)]
                match e {
                    $($validation)|+ => CliError::Validation(e.to_string()),
                    _ => CliError::Runtime(e.to_string()),
                }
            }
        }
    };
}

classify!(SpinError, SpinError::InvalidInput(_));
classify!(PumpError, PumpError::InvalidInput(_));
classify!(
    PulseError,
    PulseError::InvalidInput(_),
    PulseError::UnboundSymbol(_)
);
classify!(FitError, FitError::InvalidInput(_));
