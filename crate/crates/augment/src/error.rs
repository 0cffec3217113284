use memeguard_core::DatasetError;
use memeguard_gateway::GatewayError;
use thiserror::Error;

use crate::render::RenderError;

/// Failure of one stage for one record.
#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("describer returned an empty description")]
    EmptyDescription,
    #[error("image is not decodable: {0}")]
    InvalidImage(String),
    #[error("{stage}: unparseable verdict {text:?} after {attempts} attempts")]
    Unparseable {
        stage: &'static str,
        text: String,
        attempts: u32,
    },
    #[error("rewritten caption rejected: {0}")]
    VerificationFailed(String),
    #[error("render failed: {0}")]
    RenderFailed(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Run-level failure. Per-record stage errors never surface here.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt progress file {path} line {line}: {reason}")]
    Progress {
        path: std::path::PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
}
