//! Multi-grained implicit-GEMM convolution on the simulated core group.
//!
//! A convolution is a sum of small matrix products, one per output position
//! and filter tap. The planner picks which block shape owns each product,
//! how many outputs stay resident, which operand streams are double
//! buffered and how the scratchpad is laid out; the lowering turns that
//! plan into element programs for the simulator.

mod cost;
mod error;
mod estimate;
mod exec;
mod ldm;
mod lower;
mod plan;

pub use cost::Estimate;
pub use error::EngineError;
pub use estimate::{estimate_cycles, estimate_plan, plan_conv, select_grain};
pub use exec::{efficiency, execute, execute_plan, ExecResult};
pub use ldm::{plan_ldm, BufferRole, BufferSpec, LayoutStyle, LdmBuffer, LdmPlan, LdmStrategy};
pub use lower::{lower, lower_with, MemoryMap};
pub use plan::{
    choose_db_variant, choose_out_len, tile_mm_unit, ConvPlan, DbVariant, ElemDims, Overrides, PaddedDims, Task,
    TbAssignment, Tiling, OUT_SLACK_RATIO,
};
pub use sw_sim::TbShape;
