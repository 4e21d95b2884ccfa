//! Behavioral model of one core group: an 8×8 grid of compute elements with
//! private scratchpads, a shared DMA engine and row/column register
//! messaging.

mod config;
mod dma;
mod error;
mod grid;
mod ledger;
mod memory;
mod sim;
mod trace;

pub use config::MachineConfig;
pub use error::{BlockReason, SimError};
pub use grid::{partition_tbs, CpeId, TbPartition, TbShape};
pub use ledger::{CostLedger, ElementStats, PerOperand, TbRollup};
pub use memory::MainMemory;
pub use sim::run_programs;
pub use trace::{
    format_trace, parse_trace, CommAxis, ConvertDir, ConvertOrder, MainRegion, Operand, Program, TraceOp,
    TraceParseError,
};
