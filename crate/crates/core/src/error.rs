use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input that violates an operation's precondition.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("simulation diverged at substep {substep}")]
    SimulationDiverged { substep: u64 },

    #[error("morphology mutation failed after {attempts} attempts")]
    MutationFailed { attempts: usize },

    #[error("random morphology generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    /// Broken lineage chains, corrupt checkpoints, incomplete logs.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
