//! The register-tiled microkernel family that computes
//! `out[k, n] += Σ_c flt[c, k] · in[c, n]` without transposing `flt`.
//!
//! One tile keeps a `Kr × Nr/4` block of output vectors in registers and,
//! per reduction step, loads `Kr` scalar-expanded filter values and `Nr/4`
//! input vectors. [`select_tile`] picks the tile under the register budget,
//! [`partition_kernel`] covers arbitrary `K × N` with the 16 tile variants
//! and [`kernel_cycles`] is the two-pipeline issue model.

mod cycles;
mod exec;
mod partition;
mod tile;

pub use cycles::{kernel_cycles, kernel_cost, per_iteration_cycles, variant_table_csv, KernelCost, KernelCosts};
pub use exec::{microkernel_exec, microkernel_exec_partitioned};
pub use partition::{partition_kernel, KernelPart, KernelPartition, PaddingCost, MAIN_KR, MAIN_NR};
pub use tile::{compute_ratio, select_tile, GrainFlavor, MicrokernelVariant, RegisterFile};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("tile {kr}x{nr} does not fit the register budget")]
    OverBudget { kr: usize, nr: usize },
    #[error("tile {kr}x{nr} is not a supported variant")]
    BadTile { kr: usize, nr: usize },
    #[error("kernel extent K={k}, N={n} is not supported (need K >= 1, N a positive multiple of 4)")]
    BadExtent { k: usize, n: usize },
    #[error("operand {name} holds {got} values, kernel needs {need}")]
    OperandSize { name: &'static str, got: usize, need: usize },
}
