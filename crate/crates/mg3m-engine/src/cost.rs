//! Analytical cycle estimate of a plan, walked over the busiest block's
//! tasks from the point of view of one of its elements.

use std::collections::HashMap;
use std::ops::Range;

use conv_core::ConvShape;
use kernel_model::{kernel_cost, partition_kernel, GrainFlavor};
use sw_sim::{MachineConfig, TbShape};

use crate::plan::{build_tasks, distribute, DbVariant, ElemDims, PaddedDims, Task, Tiling};

pub(crate) fn flavor(grain: TbShape) -> GrainFlavor {
    match grain {
        TbShape::Tb1x1 => GrainFlavor::Local,
        TbShape::Tb1x8 => GrainFlavor::RowBcast,
        TbShape::Tb8x8 => GrainFlavor::ColRowBcast,
    }
}

/// Output slots of `positions` that read input for filter tap `(fh, fw)`,
/// with the input coordinate each reads.
pub(crate) fn valid_taps(shape: &ConvShape, positions: &Range<usize>, fh: usize, fw: usize) -> Vec<(usize, usize, usize)> {
    positions
        .clone()
        .enumerate()
        .filter_map(|(ol, p)| {
            let (oh, ow) = (p / shape.out_w, p % shape.out_w);
            shape.input_coord(oh, ow, fh, fw).map(|(ih, iw)| (ol, ih, iw))
        })
        .collect()
}

pub(crate) struct CostContext<'a> {
    pub shape: &'a ConvShape,
    pub grain: TbShape,
    pub share: bool,
    pub padded: PaddedDims,
    pub tiling: Tiling,
    pub out_len: usize,
    pub db: DbVariant,
    pub tasks: Vec<Task>,
    pub tb0: Range<usize>,
    /// Elements still busy when block 0 runs its `r`-th task.
    pub active_in_round: Vec<usize>,
    pub active_elements: usize,
}

impl<'a> CostContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        shape: &'a ConvShape,
        grain: TbShape,
        share: bool,
        cfg: &MachineConfig,
        padded: &PaddedDims,
        tiling: &Tiling,
        out_len: usize,
        db: DbVariant,
    ) -> Self {
        let tasks = build_tasks(shape.out_positions(), out_len, tiling, padded);
        let tbs = cfg.num_cpes() / grain.size();
        let blocks = distribute(tasks.len(), tbs);
        let tb0 = blocks[0].clone();
        let active_in_round = (0..tb0.len())
            .map(|r| blocks.iter().filter(|b| b.len() > r).count() * grain.size())
            .collect();
        let active_elements = tasks.len().min(tbs) * grain.size();
        Self {
            shape,
            grain,
            share,
            padded: *padded,
            tiling: *tiling,
            out_len,
            db,
            tasks,
            tb0,
            active_in_round,
            active_elements,
        }
    }

    fn dims(&self, t: &Task, ic_len: usize) -> ElemDims {
        ElemDims::with_sharing(self.grain, self.share, t.oc.len(), t.b.len(), ic_len)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct UsePoint {
    busy: u64,
    comm_wait: u64,
    dma: u64,
    bytes: u64,
}

struct Costs<'c> {
    cfg: &'c MachineConfig,
    contenders: usize,
}

impl Costs<'_> {
    /// One transfer of `rows` strided rows while every active element
    /// streams alongside it.
    fn dma(&self, rows: usize, row_bytes: usize) -> u64 {
        let rate = self.cfg.dma_bytes_per_cycle();
        let bus = rows * row_bytes.next_multiple_of(self.cfg.dma_burst_bytes);
        self.cfg.dma_startup_cycles + (bus as f64 * self.contenders as f64 / rate).ceil() as u64
    }

    fn fluid(&self, bus_bytes: u64) -> u64 {
        self.cfg.dma_startup_cycles + (bus_bytes as f64 * self.contenders as f64 / self.cfg.dma_bytes_per_cycle()).ceil() as u64
    }

    fn bus_bytes(&self, rows: usize, row_bytes: usize) -> u64 {
        (rows * row_bytes.next_multiple_of(self.cfg.dma_burst_bytes)) as u64
    }

    fn use_point(&self, slots: usize, slot_rows: usize, width: usize) -> UsePoint {
        let count = slot_rows * width;
        let mut u = UsePoint {
            busy: self.cfg.dma_issue_cycles + self.cfg.convert_cycles(count),
            comm_wait: 0,
            dma: self.dma(slot_rows, width * 4),
            bytes: self.bus_bytes(slot_rows, width * 4),
        };
        if slots > 1 {
            let msgs = (count * 8 / self.cfg.msg_bytes()) as u64;
            u.busy += slots as u64 * msgs * self.cfg.reg_msg_cycles;
            u.comm_wait += (slots as u64 - 1) * self.cfg.reg_latency_cycles;
        }
        u
    }

    fn kernel(&self, grain: TbShape, d: &ElemDims) -> u64 {
        let part = partition_kernel(d.k, d.n).expect("planned extents are lane aligned");
        kernel_cost(&part, d.c, true, flavor(grain), &self.cfg.kernel_costs()).cycles
    }
}

/// Representative per-item costs of the first task, used to decide which
/// streams are worth double buffering.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ItemCosts {
    pub flt_dma: u64,
    pub flt_compute_between: u64,
    pub in_dma: u64,
    pub in_compute_between: u64,
    pub out_dma: u64,
    pub task_compute: u64,
}

pub(crate) fn item_costs(ctx: &CostContext<'_>, cfg: &MachineConfig) -> ItemCosts {
    let costs = Costs {
        cfg,
        contenders: ctx.active_elements,
    };
    let Some(t) = ctx.tasks.first() else {
        return ItemCosts::default();
    };
    let d = ctx.dims(t, ctx.tiling.ic_chunk.min(ctx.padded.ic));
    let f = costs.use_point(d.flt_slots, d.flt_slot_rows(), d.k);
    let i = costs.use_point(d.in_slots, d.in_slot_rows(), d.n);
    let kern = costs.kernel(ctx.grain, &d);
    let taps = ctx.shape.flt_h * ctx.shape.flt_w;
    let mut uses = 0u64;
    for fh in 0..ctx.shape.flt_h {
        for fw in 0..ctx.shape.flt_w {
            uses += valid_taps(ctx.shape, &t.positions, fh, fw).len() as u64;
        }
    }
    let per_in = i.busy + i.comm_wait + kern;
    let n_ic = ctx.padded.ic.div_ceil(ctx.tiling.ic_chunk) as u64;
    let task_compute = n_ic * (taps as u64 * (f.busy + f.comm_wait) + uses * per_in);
    ItemCosts {
        flt_dma: f.dma,
        flt_compute_between: f.busy + f.comm_wait + uses * per_in / taps as u64,
        in_dma: i.dma,
        in_compute_between: per_in,
        out_dma: costs.dma(t.positions.len() * d.k, d.n * 4),
        task_compute,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Estimate {
    pub busy_cycles: u64,
    pub stall_cycles: u64,
    /// Bus bytes moved by all elements together.
    pub total_dma_bytes: u64,
    pub bandwidth_cycles: u64,
    pub cycles: u64,
}

/// Distinct reduction chunk lengths and how often each occurs.
fn ic_groups(total: usize, chunk: usize) -> Vec<(usize, u64)> {
    let mut g = vec![(chunk.min(total), (total / chunk) as u64)];
    if !total.is_multiple_of(chunk) && total > chunk {
        g.push((total % chunk, 1));
    }
    g.retain(|&(_, n)| n > 0);
    g
}

pub(crate) fn estimate(ctx: &CostContext<'_>, cfg: &MachineConfig) -> Estimate {
    let db = ctx.db;
    let taps = ctx.shape.flt_h * ctx.shape.flt_w;
    let mut tap_counts: HashMap<(usize, usize), Vec<u64>> = HashMap::new();
    for t in &ctx.tasks {
        let r = &t.positions;
        tap_counts.entry((r.start, r.end)).or_insert_with(|| {
            (0..taps)
                .map(|t| valid_taps(ctx.shape, r, t / ctx.shape.flt_w, t % ctx.shape.flt_w).len() as u64)
                .collect()
        });
    }
    let counts = |r: &Range<usize>| -> &Vec<u64> { &tap_counts[&(r.start, r.end)] };
    let groups = ic_groups(ctx.padded.ic, ctx.tiling.ic_chunk);
    let blocks = distribute(ctx.tasks.len(), cfg.num_cpes() / ctx.grain.size());
    let total_costs = Costs {
        cfg,
        contenders: ctx.active_elements,
    };
    let task_bytes = |t: &Task| -> u64 {
        let valid: u64 = counts(&t.positions).iter().sum();
        let d_out = ctx.dims(t, 1);
        let mut bytes = total_costs.bus_bytes(t.positions.len() * d_out.k, d_out.n * 4);
        for &(ic_len, reps) in &groups {
            let d = ctx.dims(t, ic_len);
            let f = total_costs.use_point(d.flt_slots, d.flt_slot_rows(), d.k);
            let i = total_costs.use_point(d.in_slots, d.in_slot_rows(), d.n);
            bytes += reps * (taps as u64 * f.bytes + valid * i.bytes);
        }
        bytes * ctx.grain.size() as u64
    };
    let mut round_bytes = vec![0u64; ctx.tb0.len()];
    let mut total_bytes = 0u64;
    for b in &blocks {
        for (r, ti) in b.clone().enumerate() {
            let bytes = task_bytes(&ctx.tasks[ti]);
            round_bytes[r] += bytes;
            total_bytes += bytes;
        }
    }
    let rate = cfg.dma_bytes_per_cycle();
    let mut busy = 0u64;
    let mut stall = 0u64;
    let mut cycles = 0u64;
    let (mut first_flt, mut first_in) = (true, true);
    for (round, t) in ctx.tasks[ctx.tb0.clone()].iter().enumerate() {
        let (busy0, stall0) = (busy, stall);
        let costs = Costs {
            cfg,
            contenders: ctx.active_in_round[round],
        };
        let valid = counts(&t.positions);
        let d_out = ctx.dims(t, 1);
        let out_count = t.positions.len() * d_out.k * d_out.n;
        busy += cfg.zero_fill_cycles(ctx.out_len * d_out.k * d_out.n * 8);
        let mut task_compute = 0u64;
        for &(ic_len, reps) in &groups {
            let d = ctx.dims(t, ic_len);
            let f = costs.use_point(d.flt_slots, d.flt_slot_rows(), d.k);
            let i = costs.use_point(d.in_slots, d.in_slot_rows(), d.n);
            let kern = costs.kernel(ctx.grain, &d);
            let in_hidden = i.dma.saturating_sub(kern + i.busy + i.comm_wait);
            let flt_use_wait = f.busy + f.comm_wait;
            for _ in 0..reps {
                for &v in valid {
                    let in_stall = if v == 0 {
                        0
                    } else if !db.inp() {
                        v * i.dma
                    } else if first_in {
                        first_in = false;
                        i.dma + (v - 1) * in_hidden
                    } else {
                        v * in_hidden
                    };
                    let between = flt_use_wait + v * (i.busy + i.comm_wait + kern) + in_stall;
                    let flt_stall = if !db.flt() {
                        f.dma
                    } else if first_flt {
                        first_flt = false;
                        f.dma
                    } else {
                        f.dma.saturating_sub(between)
                    };
                    // Everything the segment moves shares the bus with the
                    // other elements' segments.
                    let work = f.busy + v * (i.busy + kern);
                    let bus = costs.fluid(f.bytes + v * i.bytes);
                    let exposed = (in_stall + flt_stall).max(bus.saturating_sub(work));
                    busy += work;
                    stall += exposed + f.comm_wait + v * i.comm_wait;
                    task_compute += between + exposed - in_stall;
                }
            }
        }
        busy += cfg.convert_cycles(out_count) + t.positions.len() as u64 * cfg.dma_issue_cycles;
        let out_dma = costs.dma(t.positions.len() * d_out.k, d_out.n * 4);
        stall += if db.out() { out_dma.saturating_sub(task_compute) } else { out_dma };
        // A round ends when the slower of its element work and its share of
        // the bus does.
        let bus = (round_bytes[round] as f64 / rate).ceil() as u64;
        cycles += (busy - busy0 + stall - stall0).max(bus);
    }
    let bandwidth_cycles = cfg.dma_startup_cycles + (total_bytes as f64 / rate).ceil() as u64;
    Estimate {
        busy_cycles: busy,
        stall_cycles: stall,
        total_dma_bytes: total_bytes,
        bandwidth_cycles,
        cycles: cycles.max(bandwidth_cycles),
    }
}
