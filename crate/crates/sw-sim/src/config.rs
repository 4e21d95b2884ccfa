use kernel_model::{KernelCosts, RegisterFile};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::trace::MainRegion;

/// Hardware parameters of one core group plus the cost constants of the
/// behavioral model.
///
/// The first block of fields describes the machine; the second block holds
/// model constants (latencies and per-op costs) that have no published
/// value and are tunable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub ldm_bytes: usize,
    pub freq_hz: f64,
    /// Batched (DMA) bandwidth of the whole core group.
    pub dma_bw_bytes_per_s: f64,
    /// Discrete gld/gst bandwidth. Reported only; the engine never uses it.
    pub gld_bw_bytes_per_s: f64,
    pub dma_startup_cycles: u64,
    /// Main-memory transaction size; every strided row occupies the bus for
    /// a whole number of transactions.
    pub dma_burst_bytes: usize,
    pub vec_len: usize,
    pub usable_vregs: usize,
    pub send_buf_cap: usize,
    pub row_recv_cap: usize,
    pub col_recv_cap: usize,
    pub msg_bits: usize,
    pub peak_flops_per_cpe_cycle: f64,

    pub addr_overhead_cycles: u64,
    pub dma_issue_cycles: u64,
    pub convert_cycles_per_vec: u64,
    pub reg_msg_cycles: u64,
    pub reg_latency_cycles: u64,
    pub barrier_cycles: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            grid_rows: 8,
            grid_cols: 8,
            ldm_bytes: 65536,
            freq_hz: 1.45e9,
            dma_bw_bytes_per_s: 22.6e9,
            gld_bw_bytes_per_s: 1.48e9,
            dma_startup_cycles: 25,
            dma_burst_bytes: 128,
            vec_len: 4,
            usable_vregs: 30,
            send_buf_cap: 6,
            row_recv_cap: 4,
            col_recv_cap: 4,
            msg_bits: 256,
            peak_flops_per_cpe_cycle: 8.0,
            addr_overhead_cycles: 1,
            dma_issue_cycles: 1,
            convert_cycles_per_vec: 2,
            reg_msg_cycles: 1,
            reg_latency_cycles: 10,
            barrier_cycles: 20,
        }
    }
}

impl MachineConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::Config(what.to_string()));
        if self.grid_rows == 0 || self.grid_cols == 0 || self.grid_rows > 64 || self.grid_cols > 64 {
            return bad("grid dimensions must be in 1..=64");
        }
        if self.ldm_bytes == 0 || self.ldm_bytes > 1 << 24 {
            return bad("ldm_bytes must be in 1..=16M");
        }
        if self.send_buf_cap == 0 || self.row_recv_cap == 0 || self.col_recv_cap == 0 {
            return bad("register buffer capacities must be positive");
        }
        if self.msg_bits != 256 {
            return bad("msg_bits is fixed at 256");
        }
        if self.vec_len != 4 {
            return bad("the microkernel family is defined for 4 vector lanes");
        }
        if self.dma_burst_bytes == 0 || self.dma_burst_bytes > 4096 {
            return bad("dma_burst_bytes must be in 1..=4096");
        }
        if self.usable_vregs == 0 {
            return bad("usable_vregs must be positive");
        }
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.freq_hz) || !finite_pos(self.dma_bw_bytes_per_s) || !finite_pos(self.gld_bw_bytes_per_s) {
            return bad("frequency and bandwidths must be positive");
        }
        if !finite_pos(self.peak_flops_per_cpe_cycle) {
            return bad("peak_flops_per_cpe_cycle must be positive");
        }
        if self.dma_bw_bytes_per_s / self.freq_hz < 1e-6 {
            return bad("DMA bandwidth below 1e-6 bytes/cycle");
        }
        let limit = 1 << 20;
        if [
            self.dma_startup_cycles,
            self.addr_overhead_cycles,
            self.dma_issue_cycles,
            self.convert_cycles_per_vec,
            self.reg_msg_cycles,
            self.reg_latency_cycles,
            self.barrier_cycles,
        ]
        .iter()
        .any(|&c| c > limit)
        {
            return bad("cost constants must be at most 2^20 cycles");
        }
        Ok(())
    }

    pub fn msg_bytes(&self) -> usize {
        self.msg_bits / 8
    }

    pub fn num_cpes(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Core-group DMA bandwidth in bytes per cycle.
    pub fn dma_bytes_per_cycle(&self) -> f64 {
        self.dma_bw_bytes_per_s / self.freq_hz
    }

    /// Uncontended duration of one transfer: `startup + ceil(bytes / bw)`.
    pub fn dma_duration_cycles(&self, bytes: usize) -> u64 {
        self.dma_startup_cycles + ceil_cycles(bytes as f64 / self.dma_bytes_per_cycle())
    }

    /// Bus bytes a region costs once each row is rounded up to whole
    /// transactions.
    pub fn dma_bus_bytes(&self, region: &MainRegion) -> usize {
        region.rows * region.row_bytes.next_multiple_of(self.dma_burst_bytes)
    }

    /// Uncontended duration of moving `region`.
    pub fn dma_region_cycles(&self, region: &MainRegion) -> u64 {
        self.dma_duration_cycles(self.dma_bus_bytes(region))
    }

    pub fn convert_cycles(&self, count: usize) -> u64 {
        count.div_ceil(self.vec_len) as u64 * self.convert_cycles_per_vec
    }

    pub fn zero_fill_cycles(&self, bytes: usize) -> u64 {
        bytes.div_ceil(32) as u64
    }

    pub fn peak_flops_per_cycle(&self) -> f64 {
        self.num_cpes() as f64 * self.peak_flops_per_cpe_cycle
    }

    pub fn register_file(&self) -> RegisterFile {
        RegisterFile {
            usable_vregs: self.usable_vregs,
            vec_len: self.vec_len,
        }
    }

    pub fn kernel_costs(&self) -> KernelCosts {
        KernelCosts {
            addr_overhead_cycles: self.addr_overhead_cycles,
        }
    }
}

/// Rounds a fractional cycle count up, absorbing floating-point noise just
/// above an integer.
pub(crate) fn ceil_cycles(x: f64) -> u64 {
    (x - 1e-6).ceil().max(0.0) as u64
}
