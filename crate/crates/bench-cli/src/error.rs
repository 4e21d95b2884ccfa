use conv_core::ConvError;
use mg3m_engine::EngineError;
use sw_sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown scene set `{0}` (expected channels-small, channels-medium, channels-big, batch, filter, padstride or custom)")]
    UnknownSet(String),

    #[error("{0}")]
    Usage(String),

    #[error("bad scene file: {0}")]
    SceneFile(String),

    #[error("bad machine config: {0}")]
    Config(#[from] SimError),

    #[error(transparent)]
    Shape(#[from] ConvError),

    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// Process exit code for errors that abort a command.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
