//! Discrete-event execution of per-element programs.
//!
//! Each element owns a local clock. The scheduler always advances the
//! runnable element with the smallest clock (ties by grid index) unless a
//! DMA event is due first, so every run is deterministic. Blocked elements
//! keep the clock at which they blocked and retry the same step once woken;
//! the retry charges the gap as stall.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::ops::Range;

use kernel_model::{kernel_cost, microkernel_exec_partitioned, partition_kernel};

use crate::config::MachineConfig;
use crate::dma::DmaEngine;
use crate::error::{BlockReason, SimError};
use crate::grid::{partition_tbs, tb_of_each, CpeId, TbPartition, TbShape};
use crate::ledger::{CostLedger, ElementStats};
use crate::memory::{read_f32, read_f64, write_f32, write_f64, MainMemory};
use crate::trace::{CommAxis, ConvertDir, ConvertOrder, MainRegion, Operand, Program, TraceOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Ready,
    Blocked,
    Done,
}

#[derive(Debug, Clone)]
struct PendingDma {
    tag: u32,
    id: usize,
    operand: Operand,
    window: Range<usize>,
    is_get: bool,
    issue_end: u64,
}

#[derive(Debug, Clone)]
struct Msg {
    payload: [u8; 32],
    axis: CommAxis,
    /// Cycle the message became visible in the send queue.
    ready: u64,
    /// Cycle it lands in the target buffer.
    arrival: u64,
}

/// Bounded FIFO that remembers when each of its last `cap` entries left,
/// which gates when the next entry may be admitted.
#[derive(Debug, Clone)]
struct Queue {
    cap: usize,
    items: VecDeque<Msg>,
    entered: u64,
    left: u64,
    exit_times: Vec<u64>,
}

impl Queue {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            items: VecDeque::new(),
            entered: 0,
            left: 0,
            exit_times: vec![0; cap],
        }
    }

    fn has_room(&self) -> bool {
        self.items.len() < self.cap
    }

    /// Earliest cycle the next entry can occupy a slot.
    fn admit_after(&self) -> u64 {
        if self.entered >= self.cap as u64 {
            self.exit_times[((self.entered - self.cap as u64) % self.cap as u64) as usize]
        } else {
            0
        }
    }

    fn push(&mut self, m: Msg) {
        self.items.push_back(m);
        self.entered += 1;
    }

    fn pop(&mut self, at: u64) -> Msg {
        let m = self.items.pop_front().expect("non-empty queue");
        self.exit_times[(self.left % self.cap as u64) as usize] = at;
        self.left += 1;
        m
    }
}

#[derive(Debug, Clone, Default)]
struct OpProgress {
    /// Messages already handled by the current send/recv op.
    msgs_done: usize,
    /// Barrier generation this element is waiting on.
    barrier_gen: Option<usize>,
}

struct Element {
    id: CpeId,
    tb: usize,
    pc: usize,
    time: u64,
    state: State,
    block: Option<BlockReason>,
    ldm: Vec<u8>,
    pending: Vec<PendingDma>,
    progress: OpProgress,
    send: Queue,
    row_in: Queue,
    col_in: Queue,
    stats: ElementStats,
}

impl Element {
    fn inbox(&self, axis: CommAxis) -> &Queue {
        match axis {
            CommAxis::Row => &self.row_in,
            CommAxis::Col => &self.col_in,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Barrier {
    arrived: usize,
    latest: u64,
    releases: Vec<u64>,
}

/// Runs one program per element (row-major, `grid_rows × grid_cols`
/// entries, empty programs allowed) over `mem` with the blocks of `shape`.
pub fn run_programs(
    cfg: &MachineConfig,
    shape: TbShape,
    programs: &[Program],
    mem: &mut MainMemory,
) -> Result<CostLedger, SimError> {
    cfg.validate()?;
    if programs.len() != cfg.num_cpes() {
        return Err(SimError::ProgramCount {
            expected: cfg.num_cpes(),
            got: programs.len(),
        });
    }
    let tbs = partition_tbs(cfg, shape)?;
    let mut sim = Sim::new(cfg, tbs, programs, mem);
    sim.run()?;
    Ok(sim.finish())
}

struct Sim<'a> {
    cfg: &'a MachineConfig,
    tbs: Vec<TbPartition>,
    programs: &'a [Program],
    mem: &'a mut MainMemory,
    els: Vec<Element>,
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    dma: DmaEngine,
    /// Transfer id -> owning element.
    owner: Vec<usize>,
    barriers: Vec<Barrier>,
    max_send: usize,
    max_recv: usize,
}

type StepResult = Result<(), SimError>;

impl<'a> Sim<'a> {
    fn new(cfg: &'a MachineConfig, tbs: Vec<TbPartition>, programs: &'a [Program], mem: &'a mut MainMemory) -> Self {
        let tb_map = tb_of_each(cfg, &tbs);
        let els: Vec<Element> = (0..cfg.num_cpes())
            .map(|i| {
                let id = CpeId::from_index(i, cfg);
                Element {
                    id,
                    tb: tb_map[i],
                    pc: 0,
                    time: 0,
                    state: State::Ready,
                    block: None,
                    ldm: vec![0; cfg.ldm_bytes],
                    pending: Vec::new(),
                    progress: OpProgress::default(),
                    send: Queue::new(cfg.send_buf_cap),
                    row_in: Queue::new(cfg.row_recv_cap),
                    col_in: Queue::new(cfg.col_recv_cap),
                    stats: ElementStats {
                        cpe: id,
                        tb_id: tb_map[i],
                        ..Default::default()
                    },
                }
            })
            .collect();
        let heap = (0..els.len()).map(|i| Reverse((0, i))).collect();
        Self {
            cfg,
            barriers: vec![Barrier::default(); tbs.len()],
            tbs,
            programs,
            mem,
            els,
            heap,
            dma: DmaEngine::new(cfg.dma_bytes_per_cycle()),
            owner: Vec::new(),
            max_send: 0,
            max_recv: 0,
        }
    }

    fn violation(&self, e: usize, reason: impl Into<String>) -> SimError {
        SimError::ProtocolViolation {
            cpe: self.els[e].id,
            op_index: self.els[e].pc,
            reason: reason.into(),
        }
    }

    fn wake(&mut self, e: usize) {
        if self.els[e].state == State::Blocked {
            self.els[e].state = State::Ready;
            self.els[e].block = None;
            self.heap.push(Reverse((self.els[e].time, e)));
        }
    }

    fn block(&mut self, e: usize, why: BlockReason) {
        self.els[e].state = State::Blocked;
        self.els[e].block = Some(why);
    }

    fn run(&mut self) -> StepResult {
        loop {
            let next_el = self.heap.peek().map(|r| r.0);
            let next_dma = self.dma.next_event();
            match (next_el, next_dma) {
                (_, Some(t)) if next_el.is_none_or(|(te, _)| t <= te as f64) => {
                    for id in self.dma.step() {
                        let e = self.owner[id];
                        if matches!(self.els[e].block, Some(BlockReason::DmaWait { .. })) {
                            self.wake(e);
                        }
                    }
                }
                (Some((_, e)), _) => {
                    self.heap.pop();
                    if self.els[e].state != State::Ready {
                        continue;
                    }
                    self.step(e)?;
                    if self.els[e].state == State::Ready {
                        let t = self.els[e].time;
                        self.heap.push(Reverse((t, e)));
                    }
                }
                (None, _) => break,
            }
        }
        let blocked: Vec<(CpeId, BlockReason)> = self
            .els
            .iter()
            .filter(|el| el.state == State::Blocked)
            .map(|el| (el.id, el.block.clone().expect("blocked has reason")))
            .collect();
        if !blocked.is_empty() {
            return Err(SimError::DeadlockDetected { blocked });
        }
        for e in 0..self.els.len() {
            let el = &self.els[e];
            if !el.send.items.is_empty() || !el.row_in.items.is_empty() || !el.col_in.items.is_empty() {
                return Err(self.violation(e, "register messages left undelivered or unreceived"));
            }
        }
        Ok(())
    }

    fn finish(self) -> CostLedger {
        let n = self.tbs.len();
        let mut ledger = CostLedger::from_elements(self.els.into_iter().map(|e| e.stats).collect(), n);
        ledger.max_send_occupancy = self.max_send;
        ledger.max_recv_occupancy = self.max_recv;
        ledger
    }

    fn charge(&mut self, e: usize, cycles: u64, p0: u64, p1: u64) {
        let el = &mut self.els[e];
        el.time += cycles;
        el.stats.busy_cycles += cycles;
        el.stats.p0_slots += p0;
        el.stats.p1_slots += p1;
    }

    fn advance(&mut self, e: usize) {
        let el = &mut self.els[e];
        el.pc += 1;
        el.progress = OpProgress::default();
    }

    fn ldm_window(&self, e: usize, offset: usize, len: usize) -> Result<Range<usize>, SimError> {
        match offset.checked_add(len) {
            Some(end) if end <= self.cfg.ldm_bytes => Ok(offset..end),
            _ => Err(SimError::LdmOverflow {
                cpe: self.els[e].id,
                offset,
                len,
                ldm_bytes: self.cfg.ldm_bytes,
            }),
        }
    }

    /// Rejects LDM accesses that race with outstanding transfers.
    fn check_hazards(&self, e: usize, reads: &[&Range<usize>], writes: &[&Range<usize>]) -> StepResult {
        let overlap = |a: &Range<usize>, b: &Range<usize>| a.start < b.end && b.start < a.end;
        for p in &self.els[e].pending {
            let hit_w = writes.iter().any(|w| overlap(w, &p.window));
            let hit_r = p.is_get && reads.iter().any(|r| overlap(r, &p.window));
            if hit_w || hit_r {
                return Err(self.violation(
                    e,
                    format!(
                        "LDM [{}, {}) is in flight for tag {} and was accessed before its wait",
                        p.window.start, p.window.end, p.tag
                    ),
                ));
            }
        }
        Ok(())
    }

    fn step(&mut self, e: usize) -> StepResult {
        let pc = self.els[e].pc;
        let Some(op) = self.programs[e].get(pc).copied() else {
            if !self.els[e].pending.is_empty() {
                let tag = self.els[e].pending[0].tag;
                return Err(self.violation(e, format!("program ended with transfer tag {tag} never waited")));
            }
            let el = &mut self.els[e];
            el.state = State::Done;
            el.stats.finish_cycle = el.time;
            return Ok(());
        };
        match op {
            TraceOp::DmaGet { operand, main, ldm, tag } => self.dma_issue(e, operand, main, ldm, tag, true),
            TraceOp::DmaPut { operand, main, ldm, tag } => self.dma_issue(e, operand, main, ldm, tag, false),
            TraceOp::DmaWait { tag } => self.dma_wait(e, tag),
            TraceOp::Convert { src, dst, count, dir, order } => self.convert(e, src, dst, count, dir, order),
            TraceOp::ZeroFill { ldm, bytes } => {
                let w = self.ldm_window(e, ldm, bytes)?;
                self.check_hazards(e, &[], &[&w])?;
                self.els[e].ldm[w].fill(0);
                let c = self.cfg.zero_fill_cycles(bytes);
                self.charge(e, c, 0, c);
                self.advance(e);
                Ok(())
            }
            TraceOp::Microkernel { .. } => self.microkernel(e, op),
            TraceOp::BcastRow { ldm, bytes } => self.bcast(e, CommAxis::Row, ldm, bytes),
            TraceOp::BcastCol { ldm, bytes } => self.bcast(e, CommAxis::Col, ldm, bytes),
            TraceOp::Recv { axis, ldm, bytes } => self.recv(e, axis, ldm, bytes),
            TraceOp::LocalBarrier { tb_id } => self.barrier(e, tb_id),
        }
    }

    fn dma_issue(&mut self, e: usize, operand: Operand, main: MainRegion, ldm: usize, tag: u32, is_get: bool) -> StepResult {
        let bytes = main.bytes().ok_or_else(|| self.violation(e, "region size overflows"))?;
        if main.rows > 1 && main.stride < main.row_bytes {
            return Err(self.violation(e, "region rows overlap (stride < row_bytes)"));
        }
        let w = self.ldm_window(e, ldm, bytes)?;
        let end = main.end().filter(|&end| end <= self.mem.len());
        if end.is_none() {
            return Err(SimError::MainMemoryOutOfBounds {
                cpe: self.els[e].id,
                base: main.base,
                len: bytes,
            });
        }
        if is_get {
            // The engine writes the window, so any outstanding transfer on it races.
            let clash = self.els[e]
                .pending
                .iter()
                .any(|p| p.window.start < w.end && w.start < p.window.end);
            if clash {
                return Err(self.violation(e, "DMA get targets a window with a transfer in flight"));
            }
        } else {
            self.check_hazards(e, &[&w], &[])?;
        }
        // Data moves at issue; the hazard rules make this indistinguishable
        // from moving it at completion.
        let el = &mut self.els[e];
        for r in 0..main.rows {
            let m = main.base + r * main.stride;
            let l = ldm + r * main.row_bytes;
            if is_get {
                el.ldm[l..l + main.row_bytes].copy_from_slice(&self.mem.bytes()[m..m + main.row_bytes]);
            } else {
                self.mem.bytes_mut()[m..m + main.row_bytes].copy_from_slice(&el.ldm[l..l + main.row_bytes]);
            }
        }
        let issue = self.cfg.dma_issue_cycles;
        self.charge(e, issue, 0, issue);
        let issue_end = self.els[e].time;
        let id = self.dma.submit(issue_end + self.cfg.dma_startup_cycles, self.cfg.dma_bus_bytes(&main));
        self.owner.push(e);
        debug_assert_eq!(self.owner.len(), id + 1);
        let el = &mut self.els[e];
        *el.stats.dma_bytes.get_mut(operand) += bytes as u64;
        *el.stats.dma_transfers.get_mut(operand) += 1;
        el.pending.push(PendingDma {
            tag,
            id,
            operand,
            window: w,
            is_get,
            issue_end,
        });
        self.advance(e);
        Ok(())
    }

    fn dma_wait(&mut self, e: usize, tag: u32) -> StepResult {
        let el = &self.els[e];
        let matching: Vec<(usize, Operand, u64)> = el
            .pending
            .iter()
            .filter(|p| p.tag == tag)
            .map(|p| (p.id, p.operand, p.issue_end))
            .collect();
        if matching.is_empty() {
            return Err(SimError::DanglingWait { cpe: el.id, tag });
        }
        let mut latest: Option<(u64, Operand)> = None;
        for &(id, op, _) in &matching {
            match self.dma.done_cycle(id) {
                None => {
                    self.block(e, BlockReason::DmaWait { tag });
                    return Ok(());
                }
                Some(d) => {
                    if latest.is_none_or(|(t, _)| d > t) {
                        latest = Some((d, op));
                    }
                }
            }
        }
        let (done, operand) = latest.expect("non-empty");
        let busy: u64 = matching
            .iter()
            .map(|&(id, _, issue_end)| self.dma.done_cycle(id).expect("done") - issue_end)
            .sum();
        let el = &mut self.els[e];
        el.pending.retain(|p| p.tag != tag);
        el.stats.dma_busy_cycles += busy;
        let stall = done.saturating_sub(el.time);
        el.time += stall;
        *el.stats.dma_stall.get_mut(operand) += stall;
        if !*el.stats.waited_once.get(operand) {
            *el.stats.waited_once.get_mut(operand) = true;
            *el.stats.first_wait_stall.get_mut(operand) = stall;
        }
        self.advance(e);
        Ok(())
    }

    fn convert(&mut self, e: usize, src: usize, dst: usize, count: usize, dir: ConvertDir, order: ConvertOrder) -> StepResult {
        let (sw, dw) = match dir {
            ConvertDir::F32ToF64 => (4, 8),
            ConvertDir::F64ToF32 => (8, 4),
        };
        let big = || self.violation(e, "convert count overflows");
        let rs = self.ldm_window(e, src, count.checked_mul(sw).ok_or_else(big)?)?;
        let rd = self.ldm_window(e, dst, count.checked_mul(dw).ok_or_else(big)?)?;
        self.check_hazards(e, &[&rs], &[&rd])?;
        let ldm = &mut self.els[e].ldm;
        let mut one = |i: usize| match dir {
            ConvertDir::F32ToF64 => {
                let v = read_f32(&ldm[src + 4 * i..src + 4 * i + 4])[0] as f64;
                write_f64(&mut ldm[dst + 8 * i..dst + 8 * i + 8], &[v]);
            }
            ConvertDir::F64ToF32 => {
                let v = read_f64(&ldm[src + 8 * i..src + 8 * i + 8])[0] as f32;
                write_f32(&mut ldm[dst + 4 * i..dst + 4 * i + 4], &[v]);
            }
        };
        match order {
            ConvertOrder::Forward => (0..count).for_each(&mut one),
            ConvertOrder::Reverse => (0..count).rev().for_each(&mut one),
        }
        let c = self.cfg.convert_cycles(count);
        self.charge(e, c, 0, c);
        self.advance(e);
        Ok(())
    }

    fn microkernel(&mut self, e: usize, op: TraceOp) -> StepResult {
        let TraceOp::Microkernel { flavor, reordered, flt, inp, out, k, n, c } = op else {
            unreachable!()
        };
        let part = partition_kernel(k, n).map_err(|err| self.violation(e, err.to_string()))?;
        let size = |a: usize, b: usize| a.checked_mul(b).and_then(|x| x.checked_mul(8));
        let too_big = || self.violation(e, "kernel operand size overflows");
        let wf = self.ldm_window(e, flt, size(c, k).ok_or_else(too_big)?)?;
        let wi = self.ldm_window(e, inp, size(c, n).ok_or_else(too_big)?)?;
        let wo = self.ldm_window(e, out, size(k, n).ok_or_else(too_big)?)?;
        let overlap = |a: &Range<usize>, b: &Range<usize>| a.start < b.end && b.start < a.end;
        if overlap(&wo, &wf) || overlap(&wo, &wi) {
            return Err(self.violation(e, "kernel output aliases an input operand"));
        }
        self.check_hazards(e, &[&wf, &wi, &wo], &[&wo])?;
        let ldm = &mut self.els[e].ldm;
        let f = read_f64(&ldm[wf]);
        let i = read_f64(&ldm[wi]);
        let mut o = read_f64(&ldm[wo.clone()]);
        microkernel_exec_partitioned(&part, &f, &i, &mut o, c).expect("sizes checked");
        write_f64(&mut ldm[wo], &o);
        let cost = kernel_cost(&part, c, reordered, flavor, &self.cfg.kernel_costs());
        self.charge(e, cost.cycles, cost.p0_slots, cost.p1_slots);
        self.els[e].stats.flops += 2 * (k * n * c) as u64;
        self.advance(e);
        Ok(())
    }

    fn peers(&self, e: usize, axis: CommAxis) -> Vec<usize> {
        let el = &self.els[e];
        let tb = &self.tbs[el.tb];
        let (li, lj) = tb.local(el.id);
        let ids: Vec<CpeId> = match axis {
            CommAxis::Row => (0..tb.shape.cols()).filter(|&j| j != lj).map(|j| tb.member(li, j)).collect(),
            CommAxis::Col => (0..tb.shape.rows()).filter(|&i| i != li).map(|i| tb.member(i, lj)).collect(),
        };
        ids.into_iter().map(|c| c.index(self.cfg)).collect()
    }

    fn check_msg_op(&self, e: usize, axis: CommAxis, bytes: usize) -> StepResult {
        let mb = self.cfg.msg_bytes();
        if bytes == 0 || !bytes.is_multiple_of(mb) {
            return Err(self.violation(e, format!("message payload {bytes} is not a positive multiple of {mb}")));
        }
        if self.peers(e, axis).is_empty() {
            return Err(self.violation(
                e,
                format!("no {} peers inside TB {} ({})", axis.name(), self.els[e].tb, self.tbs[self.els[e].tb].shape),
            ));
        }
        Ok(())
    }

    fn bcast(&mut self, e: usize, axis: CommAxis, ldm: usize, bytes: usize) -> StepResult {
        self.check_msg_op(e, axis, bytes)?;
        let w = self.ldm_window(e, ldm, bytes)?;
        self.check_hazards(e, &[&w], &[])?;
        let mb = self.cfg.msg_bytes();
        let el = &mut self.els[e];
        let k = el.progress.msgs_done;
        if !el.send.has_room() {
            let occupancy = el.send.items.len();
            self.block(e, BlockReason::Send { occupancy });
            return Ok(());
        }
        let start = el.send.admit_after().max(el.time);
        el.stats.comm_stall_cycles += start - el.time;
        el.time = start;
        let mut payload = [0u8; 32];
        payload.copy_from_slice(&el.ldm[ldm + k * mb..ldm + (k + 1) * mb]);
        let cost = self.cfg.reg_msg_cycles;
        el.send.push(Msg {
            payload,
            axis,
            ready: start + cost,
            arrival: 0,
        });
        el.stats.reg_messages_sent += 1;
        el.progress.msgs_done += 1;
        self.max_send = self.max_send.max(el.send.items.len());
        self.charge(e, cost, 0, cost);
        if self.els[e].progress.msgs_done * mb == bytes {
            self.advance(e);
        }
        self.pump();
        Ok(())
    }

    fn recv(&mut self, e: usize, axis: CommAxis, ldm: usize, bytes: usize) -> StepResult {
        self.check_msg_op(e, axis, bytes)?;
        let w = self.ldm_window(e, ldm, bytes)?;
        self.check_hazards(e, &[], &[&w])?;
        let mb = self.cfg.msg_bytes();
        let el = &mut self.els[e];
        let q = match axis {
            CommAxis::Row => &mut el.row_in,
            CommAxis::Col => &mut el.col_in,
        };
        let Some(front) = q.items.front() else {
            self.block(e, BlockReason::Recv { axis: axis.name() });
            return Ok(());
        };
        let at = front.arrival.max(el.time);
        let m = q.pop(at);
        debug_assert_eq!(m.axis, axis);
        el.stats.comm_stall_cycles += at - el.time;
        el.time = at;
        let k = el.progress.msgs_done;
        el.ldm[ldm + k * mb..ldm + (k + 1) * mb].copy_from_slice(&m.payload);
        el.progress.msgs_done += 1;
        el.stats.reg_messages_received += 1;
        let cost = self.cfg.reg_msg_cycles;
        self.charge(e, cost, 0, cost);
        if self.els[e].progress.msgs_done * mb == bytes {
            self.advance(e);
        }
        self.pump();
        Ok(())
    }

    /// Moves queued messages into receive buffers, oldest sender index
    /// first, until nothing more can move.
    fn pump(&mut self) {
        loop {
            let mut moved = false;
            for s in 0..self.els.len() {
                while let Some(front) = self.els[s].send.items.front() {
                    let axis = front.axis;
                    let ready = front.ready;
                    let targets = self.peers(s, axis);
                    if !targets.iter().all(|&t| self.els[t].inbox(axis).has_room()) {
                        break;
                    }
                    let depart = targets
                        .iter()
                        .map(|&t| self.els[t].inbox(axis).admit_after())
                        .fold(ready, u64::max);
                    let mut m = self.els[s].send.pop(depart);
                    m.arrival = depart + self.cfg.reg_latency_cycles;
                    for &t in &targets {
                        let el = &mut self.els[t];
                        let q = match axis {
                            CommAxis::Row => &mut el.row_in,
                            CommAxis::Col => &mut el.col_in,
                        };
                        q.push(m.clone());
                        self.max_recv = self.max_recv.max(q.items.len());
                        if matches!(el.block, Some(BlockReason::Recv { .. })) {
                            self.wake(t);
                        }
                    }
                    if matches!(self.els[s].block, Some(BlockReason::Send { .. })) {
                        self.wake(s);
                    }
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }

    fn barrier(&mut self, e: usize, tb_id: usize) -> StepResult {
        if tb_id != self.els[e].tb {
            return Err(self.violation(e, format!("barrier on TB {tb_id} from a member of TB {}", self.els[e].tb)));
        }
        let size = self.tbs[tb_id].shape.size();
        let cost = self.cfg.barrier_cycles;
        let gen = match self.els[e].progress.barrier_gen {
            Some(g) => g,
            None => {
                let t = self.els[e].time;
                let b = &mut self.barriers[tb_id];
                let g = b.releases.len();
                b.arrived += 1;
                b.latest = b.latest.max(t);
                self.els[e].progress.barrier_gen = Some(g);
                if b.arrived == size {
                    let release = b.latest + cost;
                    b.releases.push(release);
                    b.arrived = 0;
                    b.latest = 0;
                    let members: Vec<usize> = self.tbs[tb_id].members.iter().map(|m| m.index(self.cfg)).collect();
                    for m in members {
                        if matches!(self.els[m].block, Some(BlockReason::Barrier { .. })) {
                            self.wake(m);
                        }
                    }
                }
                g
            }
        };
        let Some(&release) = self.barriers[tb_id].releases.get(gen) else {
            self.block(e, BlockReason::Barrier { tb_id });
            return Ok(());
        };
        let el = &mut self.els[e];
        let stall = (release - cost).saturating_sub(el.time);
        el.stats.barrier_stall_cycles += stall;
        el.time += stall;
        self.charge(e, cost, 0, cost);
        self.advance(e);
        Ok(())
    }
}
