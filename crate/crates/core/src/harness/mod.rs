//! Evaluation plumbing behind the `crop` command line: dataset files,
//! run reports, checkpoints, overlays, timing and sweeps.

pub mod bench;
pub mod checkpoint;
pub mod dataset;
pub mod relacc;
pub mod render;
pub mod report;
pub mod sweep;
pub mod trace;

use thiserror::Error;

use crate::grid::GridError;
use crate::ilp::IlpError;
use crate::localizer::LocalizerError;
use crate::plc::PlcError;

/// Harness failures, split by whether the caller's configuration or the
/// input data is at fault.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Plc(#[from] PlcError),
    #[error(transparent)]
    Ilp(#[from] IlpError),
    #[error(transparent)]
    Localizer(#[from] LocalizerError),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Ilp(_) => 2,
            HarnessError::Localizer(LocalizerError::Rate(_)) => 2,
            HarnessError::Plc(PlcError::AnchorNotSquare(_) | PlcError::EmptyQueryBank(_)) => 2,
            _ => 3,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<GridError> for HarnessError {
    fn from(e: GridError) -> Self {
        HarnessError::Data(e.to_string())
    }
}
