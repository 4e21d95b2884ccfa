use conv_core::ConvError;
use sw_sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no feasible plan: {0}")]
    PlanInfeasible(String),

    #[error("LDM plan needs {needed} bytes but only {available} are available ({} over)", needed - available)]
    LdmOverflow { needed: usize, available: usize },

    #[error(transparent)]
    Conv(#[from] ConvError),

    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),

    #[error("bad plan file: {0}")]
    PlanFile(String),
}
