use thiserror::Error;

use crate::grid::CpeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockReason {
    DmaWait { tag: u32 },
    Send { occupancy: usize },
    Recv { axis: &'static str },
    Barrier { tb_id: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid machine config: {0}")]
    Config(String),

    #[error("TB shape {rows}x{cols} is not supported on this grid")]
    UnsupportedGrain { rows: usize, cols: usize },

    #[error("{cpe}: LDM window [{offset}, {offset}+{len}) exceeds {ldm_bytes} bytes")]
    LdmOverflow {
        cpe: CpeId,
        offset: usize,
        len: usize,
        ldm_bytes: usize,
    },

    #[error("{cpe}: main-memory region at {base} ({len} bytes) is out of bounds")]
    MainMemoryOutOfBounds { cpe: CpeId, base: usize, len: usize },

    #[error("{cpe}: wait on tag {tag} without an outstanding transfer")]
    DanglingWait { cpe: CpeId, tag: u32 },

    #[error("deadlock: {} element(s) blocked forever: {:?}", blocked.len(), blocked)]
    DeadlockDetected { blocked: Vec<(CpeId, BlockReason)> },

    #[error("{cpe}: protocol violation at op {op_index}: {reason}")]
    ProtocolViolation {
        cpe: CpeId,
        op_index: usize,
        reason: String,
    },

    #[error("program set has {got} programs, grid has {expected} elements")]
    ProgramCount { expected: usize, got: usize },
}
