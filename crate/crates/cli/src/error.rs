use serde::Serialize;

use packing_core::env::EnvError;
use packing_core::instances::InstanceError;
use packing_core::oracle::OracleError;
use packing_core::policy::CheckpointError;
use packing_core::training::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("cancelled")]
    Cancelled,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) | CliError::Cancelled => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Runtime(_) => "runtime",
            CliError::Cancelled => "cancelled",
        }
    }

    /// One-line JSON error record for stderr.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: Inner<'a>,
        }
        #[derive(Serialize)]
        struct Inner<'a> {
            kind: &'a str,
            message: String,
        }
        let r = Record { error: Inner { kind: self.kind(), message: self.to_string() } };
        serde_json::to_string(&r).expect("error record serializes")
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(std::io::Error, EnvError, InstanceError, OracleError, CheckpointError, TrainError, serde_json::Error);
