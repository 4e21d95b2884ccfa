//! Dual-pipeline issue model.
//!
//! Per reduction step a `Kr × Nr` tile issues `Kr·Nr/4` vector FMAs on P0 and
//! `Kr + Nr/4` loads on P1. Unscheduled code issues them back to back;
//! the reordered sequence overlaps the two pipelines completely. Both pay one
//! loop-control cycle per step, which is not attributed to either pipeline.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::partition::KernelPartition;
use crate::tile::{GrainFlavor, MicrokernelVariant, RegisterFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelCosts {
    /// Extra address arithmetic per step for broadcast-fed operands.
    pub addr_overhead_cycles: u64,
}

impl Default for KernelCosts {
    fn default() -> Self {
        Self {
            addr_overhead_cycles: 1,
        }
    }
}

fn issue_counts(v: &MicrokernelVariant) -> (u64, u64) {
    let lanes = 4;
    let p0 = (v.kr * v.nr / lanes) as u64;
    let p1 = (v.kr + v.nr / lanes) as u64;
    (p0, p1)
}

/// Cycles of one reduction step.
pub fn per_iteration_cycles(v: &MicrokernelVariant, costs: &KernelCosts) -> u64 {
    let (p0, p1) = issue_counts(v);
    let issue = if v.reordered { p0.max(p1) } else { p0 + p1 };
    let addr = if v.flavor.is_broadcast() {
        costs.addr_overhead_cycles
    } else {
        0
    };
    issue + 1 + addr
}

/// One tile call over `c` reduction steps: the steps, a prefetch prologue
/// (reordered only) and the final accumulator stores.
pub fn kernel_cycles(v: &MicrokernelVariant, c: usize, costs: &KernelCosts) -> u64 {
    let (p0, p1) = issue_counts(v);
    let prologue = if v.reordered { p1 } else { 0 };
    per_iteration_cycles(v, costs) * c as u64 + prologue + p0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelCost {
    pub cycles: u64,
    pub p0_slots: u64,
    pub p1_slots: u64,
}

impl std::ops::AddAssign for KernelCost {
    fn add_assign(&mut self, o: Self) {
        self.cycles += o.cycles;
        self.p0_slots += o.p0_slots;
        self.p1_slots += o.p1_slots;
    }
}

/// Cost of running a whole partition with reduction depth `c`.
pub fn kernel_cost(
    partition: &KernelPartition,
    c: usize,
    reordered: bool,
    flavor: GrainFlavor,
    costs: &KernelCosts,
) -> KernelCost {
    let mut total = KernelCost::default();
    for part in &partition.parts {
        let v = MicrokernelVariant {
            kr: part.kr,
            nr: part.nr,
            reordered,
            flavor,
        };
        let (p0, p1) = issue_counts(&v);
        let addr = if flavor.is_broadcast() { costs.addr_overhead_cycles } else { 0 };
        let prologue = if reordered { p1 } else { 0 };
        let tiles = part.tiles() as u64;
        total += KernelCost {
            cycles: tiles * kernel_cycles(&v, c, costs),
            p0_slots: tiles * p0 * c as u64,
            p1_slots: tiles * ((p1 + addr) * c as u64 + prologue + p0),
        };
    }
    total
}

/// CSV of per-step issue counts and cycles for every tile and flavor.
pub fn variant_table_csv(costs: &KernelCosts) -> String {
    let mut out = String::from("variant,n_p0,n_p1,naive,reordered\n");
    let rf = RegisterFile::default();
    for flavor in GrainFlavor::ALL {
        for (kr, nr) in rf.candidates() {
            let naive = MicrokernelVariant {
                kr,
                nr,
                reordered: false,
                flavor,
            };
            let reordered = MicrokernelVariant { reordered: true, ..naive };
            let (p0, p1) = issue_counts(&naive);
            writeln!(
                out,
                "{kr}x{nr}/{},{p0},{p1},{},{}",
                flavor.name(),
                per_iteration_cycles(&naive, costs),
                per_iteration_cycles(&reordered, costs)
            )
            .expect("write to String");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition_kernel;

    fn v(kr: usize, nr: usize, reordered: bool) -> MicrokernelVariant {
        MicrokernelVariant::new(kr, nr, reordered, GrainFlavor::Local).unwrap()
    }

    #[test]
    fn anchors() {
        let c = KernelCosts::default();
        assert_eq!(per_iteration_cycles(&v(4, 16, false), &c), 25);
        assert_eq!(per_iteration_cycles(&v(4, 16, true), &c), 17);
        assert_eq!(per_iteration_cycles(&v(2, 12, true), &c), 7);
    }

    #[test]
    fn call_cost_includes_prologue_and_stores() {
        let c = KernelCosts::default();
        assert_eq!(kernel_cycles(&v(4, 16, true), 16, &c), 17 * 16 + 8 + 16);
        assert_eq!(kernel_cycles(&v(4, 16, false), 16, &c), 25 * 16 + 16);
        let bcast = MicrokernelVariant::new(4, 16, true, GrainFlavor::RowBcast).unwrap();
        assert_eq!(per_iteration_cycles(&bcast, &c), 18);
    }

    #[test]
    fn partition_cost_sums_tiles() {
        let c = KernelCosts::default();
        let p = partition_kernel(8, 32).unwrap();
        let cost = kernel_cost(&p, 3, true, GrainFlavor::Local, &c);
        assert_eq!(cost.cycles, 4 * kernel_cycles(&v(4, 16, true), 3, &c));
        assert_eq!(cost.p0_slots, 4 * 16 * 3);
    }
}
