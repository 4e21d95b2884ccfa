use serde::{Deserialize, Serialize};

use crate::grid::CpeId;
use crate::trace::Operand;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerOperand<T> {
    pub flt: T,
    #[serde(rename = "in")]
    pub inp: T,
    pub out: T,
}

impl<T> PerOperand<T> {
    pub fn get(&self, o: Operand) -> &T {
        match o {
            Operand::Flt => &self.flt,
            Operand::In => &self.inp,
            Operand::Out => &self.out,
        }
    }

    pub fn get_mut(&mut self, o: Operand) -> &mut T {
        match o {
            Operand::Flt => &mut self.flt,
            Operand::In => &mut self.inp,
            Operand::Out => &mut self.out,
        }
    }
}

impl PerOperand<u64> {
    pub fn total(&self) -> u64 {
        self.flt + self.inp + self.out
    }

    fn add(&mut self, o: &Self) {
        self.flt += o.flt;
        self.inp += o.inp;
        self.out += o.out;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElementStats {
    pub cpe: CpeId,
    pub tb_id: usize,
    pub finish_cycle: u64,
    /// Cycles spent issuing instructions.
    pub busy_cycles: u64,
    pub p0_slots: u64,
    pub p1_slots: u64,
    /// Sum of issue-to-completion durations of this element's transfers.
    pub dma_busy_cycles: u64,
    pub dma_stall: PerOperand<u64>,
    /// Stall of each operand's first wait, the part no pipelining can hide.
    pub first_wait_stall: PerOperand<u64>,
    pub comm_stall_cycles: u64,
    pub barrier_stall_cycles: u64,
    pub dma_bytes: PerOperand<u64>,
    pub dma_transfers: PerOperand<u64>,
    pub reg_messages_sent: u64,
    pub reg_messages_received: u64,
    pub flops: u64,
    #[serde(skip)]
    pub(crate) waited_once: PerOperand<bool>,
}

impl ElementStats {
    pub fn stall_cycles(&self) -> u64 {
        self.dma_stall.total() + self.comm_stall_cycles + self.barrier_stall_cycles
    }

    /// DMA stall excluding each operand's unavoidable first wait.
    pub fn steady_dma_stall(&self, operands: &[Operand]) -> u64 {
        operands
            .iter()
            .map(|&o| self.dma_stall.get(o) - self.first_wait_stall.get(o))
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TbRollup {
    pub tb_id: usize,
    pub finish_cycle: u64,
    pub busy_cycles: u64,
    pub stall_cycles: u64,
    pub dma_bytes: PerOperand<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub total_cycles: u64,
    pub busy_cycles: u64,
    pub stall_cycles: u64,
    pub p0_slots: u64,
    pub p1_slots: u64,
    pub dma_bytes: PerOperand<u64>,
    pub dma_transfers: PerOperand<u64>,
    pub dma_stall: PerOperand<u64>,
    pub reg_messages: u64,
    pub reg_deliveries: u64,
    pub max_send_occupancy: usize,
    pub max_recv_occupancy: usize,
    pub flops: u64,
    pub tbs: Vec<TbRollup>,
    pub elements: Vec<ElementStats>,
}

impl CostLedger {
    pub(crate) fn from_elements(elements: Vec<ElementStats>, num_tbs: usize) -> Self {
        let mut l = CostLedger {
            tbs: (0..num_tbs)
                .map(|tb_id| TbRollup {
                    tb_id,
                    ..Default::default()
                })
                .collect(),
            ..Default::default()
        };
        for e in &elements {
            l.total_cycles = l.total_cycles.max(e.finish_cycle);
            l.busy_cycles += e.busy_cycles;
            l.stall_cycles += e.stall_cycles();
            l.p0_slots += e.p0_slots;
            l.p1_slots += e.p1_slots;
            l.dma_bytes.add(&e.dma_bytes);
            l.dma_transfers.add(&e.dma_transfers);
            l.dma_stall.add(&e.dma_stall);
            l.reg_messages += e.reg_messages_sent;
            l.reg_deliveries += e.reg_messages_received;
            l.flops += e.flops;
            if let Some(tb) = l.tbs.get_mut(e.tb_id) {
                tb.finish_cycle = tb.finish_cycle.max(e.finish_cycle);
                tb.busy_cycles = tb.busy_cycles.max(e.busy_cycles);
                tb.stall_cycles += e.stall_cycles();
                tb.dma_bytes.add(&e.dma_bytes);
            }
        }
        l.elements = elements;
        l
    }

    /// Achieved fraction of core-group peak over the whole makespan.
    pub fn efficiency(&self, peak_flops_per_cycle: f64) -> f64 {
        if self.total_cycles == 0 {
            return 0.0;
        }
        self.flops as f64 / (self.total_cycles as f64 * peak_flops_per_cycle)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serializes")
    }
}
