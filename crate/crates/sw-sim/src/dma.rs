//! Fluid bandwidth model: every active transfer gets an equal share of the
//! core-group DMA bandwidth. A transfer becomes active after its startup
//! latency and leaves when its last byte is moved.

use std::collections::BTreeSet;

use crate::config::ceil_cycles;

#[derive(Debug, Clone)]
struct Transfer {
    remaining: f64,
    done_cycle: Option<u64>,
}

#[derive(Debug, Clone)]
pub(crate) struct DmaEngine {
    rate: f64,
    now: f64,
    transfers: Vec<Transfer>,
    active: Vec<usize>,
    /// (activation cycle, id)
    pending: BTreeSet<(u64, usize)>,
    pub(crate) peak_active: usize,
}

const EPS: f64 = 1e-9;

impl DmaEngine {
    pub(crate) fn new(bytes_per_cycle: f64) -> Self {
        Self {
            rate: bytes_per_cycle,
            now: 0.0,
            transfers: Vec::new(),
            active: Vec::new(),
            pending: BTreeSet::new(),
            peak_active: 0,
        }
    }

    pub(crate) fn submit(&mut self, activate_at: u64, bytes: usize) -> usize {
        let id = self.transfers.len();
        self.transfers.push(Transfer {
            remaining: bytes as f64,
            done_cycle: None,
        });
        self.pending.insert((activate_at, id));
        id
    }

    pub(crate) fn done_cycle(&self, id: usize) -> Option<u64> {
        self.transfers[id].done_cycle
    }

    pub(crate) fn next_event(&self) -> Option<f64> {
        let act = self.pending.first().map(|&(t, _)| (t as f64).max(self.now));
        let fin = self
            .active
            .iter()
            .map(|&i| self.transfers[i].remaining)
            .min_by(f64::total_cmp)
            .map(|r| self.now + r * self.active.len() as f64 / self.rate);
        match (act, fin) {
            (Some(a), Some(f)) => Some(a.min(f)),
            (a, f) => a.or(f),
        }
    }

    /// Processes the next event; returns the ids of transfers that finished.
    pub(crate) fn step(&mut self) -> Vec<usize> {
        let Some(t) = self.next_event() else {
            return Vec::new();
        };
        let n = self.active.len();
        if n > 0 {
            let moved = (t - self.now) * self.rate / n as f64;
            for &i in &self.active {
                self.transfers[i].remaining -= moved;
            }
        }
        self.now = t;
        while let Some(&(at, id)) = self.pending.first() {
            if at as f64 > t + EPS {
                break;
            }
            self.pending.pop_first();
            self.active.push(id);
        }
        self.peak_active = self.peak_active.max(self.active.len());
        let mut finished = Vec::new();
        let transfers = &mut self.transfers;
        self.active.retain(|&i| {
            if transfers[i].remaining <= EPS * (1.0 + t) {
                transfers[i].remaining = 0.0;
                transfers[i].done_cycle = Some(ceil_cycles(t));
                finished.push(i);
                false
            } else {
                true
            }
        });
        finished
    }
}
