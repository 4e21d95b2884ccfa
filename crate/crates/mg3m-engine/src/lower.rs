//! Turns a plan into one trace program per element.
//!
//! Every element walks its block's tasks through the same loop nest:
//! zero the resident outputs, then for each input-channel chunk and filter
//! tap load the filter tile and, for each output slot that reads input
//! under that tap, load the input tile and run the kernel. Outputs are
//! narrowed and written back once per task. Gathered operands are
//! assembled by broadcast waves in slot order, so every member of a row or
//! column posts the same sequence of sends and receives.

use conv_core::ConvShape;
use sw_sim::{
    partition_tbs, CommAxis, ConvertDir, ConvertOrder, MachineConfig, MainRegion, Operand, Program, TbShape, TraceOp,
};

use crate::cost::{flavor, valid_taps};
use crate::error::EngineError;
use crate::ldm::LdmBuffer;
use crate::plan::{chunks, ConvPlan, ElemDims, PaddedDims, Task};

const TAG_FLT: u32 = 1;
const TAG_IN: u32 = 2;
const TAG_OUT: u32 = 3;
const TAG_SYNC: u32 = 4;

/// Byte offsets of the padded tensors in main memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryMap {
    pub flt: usize,
    pub inp: usize,
    pub out: usize,
    pub len: usize,
}

impl MemoryMap {
    pub fn packed(shape: &ConvShape, p: &PaddedDims) -> Self {
        let a = |x: usize| x.next_multiple_of(32);
        let flt_bytes = shape.flt_h * shape.flt_w * p.ic * p.oc * 4;
        let in_bytes = shape.in_h * shape.in_w * p.ic * p.b * 4;
        let out_bytes = shape.out_h * shape.out_w * p.oc * p.b * 4;
        let inp = a(flt_bytes);
        let out = inp + a(in_bytes);
        Self {
            flt: 0,
            inp,
            out,
            len: out + a(out_bytes),
        }
    }
}

/// Where an element sits inside its block.
#[derive(Debug, Clone, Copy)]
struct Seat {
    i: usize,
    j: usize,
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Zero { bytes: usize },
    Flt { main: MainRegion, d: ElemDims },
    In { main: MainRegion, d: ElemDims },
    Kernel { d: ElemDims, ol: usize },
    Flush { task: usize, d: ElemDims },
}

struct Lowerer<'a> {
    plan: &'a ConvPlan,
    shape: &'a ConvShape,
    map: MemoryMap,
    seat: Seat,
    out: &'a LdmBuffer,
    flt: &'a LdmBuffer,
    inp: &'a LdmBuffer,
}

impl Lowerer<'_> {
    fn dims(&self, t: &Task, ic_len: usize) -> ElemDims {
        ElemDims::with_sharing(self.plan.grain, self.plan.share, t.oc.len(), t.b.len(), ic_len)
    }

    fn k_offset(&self, t: &Task, d: &ElemDims) -> usize {
        match self.plan.grain {
            TbShape::Tb1x1 => t.oc.start,
            TbShape::Tb1x8 => t.oc.start + self.seat.j * d.k,
            TbShape::Tb8x8 => t.oc.start + self.seat.i * d.k,
        }
    }

    fn n_offset(&self, t: &Task, d: &ElemDims) -> usize {
        match self.plan.grain {
            TbShape::Tb1x1 | TbShape::Tb1x8 => t.b.start,
            TbShape::Tb8x8 => t.b.start + self.seat.j * d.n,
        }
    }

    fn flt_own(&self) -> usize {
        if self.plan.grain == TbShape::Tb8x8 && self.plan.share {
            self.seat.j
        } else {
            0
        }
    }

    fn in_own(&self) -> usize {
        match (self.plan.grain, self.plan.share) {
            (TbShape::Tb1x8, true) => self.seat.j,
            (TbShape::Tb8x8, true) => self.seat.i,
            _ => 0,
        }
    }

    fn in_axis(&self) -> CommAxis {
        if self.plan.grain == TbShape::Tb8x8 {
            CommAxis::Col
        } else {
            CommAxis::Row
        }
    }

    fn steps(&self, tasks: std::ops::Range<usize>) -> Vec<Step> {
        let p = &self.plan.padded;
        let s = self.shape;
        let mut steps = Vec::new();
        for ti in tasks {
            let t = &self.plan.tasks[ti];
            let d_out = self.dims(t, 1);
            steps.push(Step::Zero {
                bytes: t.positions.len() * d_out.k * d_out.n * 8,
            });
            for ic in chunks(p.ic, self.plan.tiling.ic_chunk) {
                let d = self.dims(t, ic.len());
                let koff = self.k_offset(t, &d);
                let noff = self.n_offset(t, &d);
                let flt_rows = d.flt_slot_rows();
                let flt_row0 = ic.start + self.flt_own() * flt_rows;
                let in_rows = d.in_slot_rows();
                let in_row0 = ic.start + self.in_own() * in_rows;
                for fh in 0..s.flt_h {
                    for fw in 0..s.flt_w {
                        let base = self.map.flt + (((fh * s.flt_w + fw) * p.ic + flt_row0) * p.oc + koff) * 4;
                        steps.push(Step::Flt {
                            main: MainRegion {
                                base,
                                rows: flt_rows,
                                row_bytes: d.k * 4,
                                stride: p.oc * 4,
                            },
                            d,
                        });
                        for (ol, ih, iw) in valid_taps(s, &t.positions, fh, fw) {
                            let base = self.map.inp + (((ih * s.in_w + iw) * p.ic + in_row0) * p.b + noff) * 4;
                            steps.push(Step::In {
                                main: MainRegion {
                                    base,
                                    rows: in_rows,
                                    row_bytes: d.n * 4,
                                    stride: p.b * 4,
                                },
                                d,
                            });
                            steps.push(Step::Kernel { d, ol });
                        }
                    }
                }
            }
            steps.push(Step::Flush { task: ti, d: d_out });
        }
        steps
    }

    fn program(&self, tasks: std::ops::Range<usize>) -> Program {
        let steps = self.steps(tasks);
        let flt_stream: Vec<MainRegion> = steps
            .iter()
            .filter_map(|s| match s {
                Step::Flt { main, .. } => Some(*main),
                _ => None,
            })
            .collect();
        let in_stream: Vec<MainRegion> = steps
            .iter()
            .filter_map(|s| match s {
                Step::In { main, .. } => Some(*main),
                _ => None,
            })
            .collect();
        let db = self.plan.db_variant;
        let mut ops = Vec::new();
        let prefetch = |ops: &mut Program, buf: &LdmBuffer, operand: Operand, main: MainRegion, tag: u32| {
            ops.push(TraceOp::DmaGet {
                operand,
                main,
                ldm: buf.spd_offset.expect("double-buffered buffer has a load slot"),
                tag,
            });
        };
        if db.flt() {
            if let Some(&m) = flt_stream.first() {
                prefetch(&mut ops, self.flt, Operand::Flt, m, TAG_FLT);
            }
        }
        if db.inp() {
            if let Some(&m) = in_stream.first() {
                prefetch(&mut ops, self.inp, Operand::In, m, TAG_IN);
            }
        }
        let (mut fi, mut ii) = (0usize, 0usize);
        let mut out_pending = false;
        for step in steps {
            match step {
                Step::Zero { bytes } => ops.push(TraceOp::ZeroFill {
                    ldm: self.out.dpd_offset,
                    bytes,
                }),
                Step::Flt { main, d } => {
                    fi += 1;
                    let slots = d.flt_slots;
                    self.use_point(&mut ops, Use {
                        buf: self.flt,
                        operand: Operand::Flt,
                        tag: TAG_FLT,
                        buffered: db.flt(),
                        main,
                        next: flt_stream.get(fi).copied(),
                        slots,
                        own: self.flt_own(),
                        slot_elems: d.flt_slot_rows() * d.k,
                        axis: CommAxis::Row,
                    });
                }
                Step::In { main, d } => {
                    ii += 1;
                    self.use_point(&mut ops, Use {
                        buf: self.inp,
                        operand: Operand::In,
                        tag: TAG_IN,
                        buffered: db.inp(),
                        main,
                        next: in_stream.get(ii).copied(),
                        slots: d.in_slots,
                        own: self.in_own(),
                        slot_elems: d.in_slot_rows() * d.n,
                        axis: self.in_axis(),
                    });
                }
                Step::Kernel { d, ol } => ops.push(TraceOp::Microkernel {
                    flavor: flavor(self.plan.grain),
                    reordered: true,
                    flt: self.flt.dpd_offset,
                    inp: self.inp.dpd_offset,
                    out: self.out.dpd_offset + ol * d.k * d.n * 8,
                    k: d.k,
                    n: d.n,
                    c: d.c,
                }),
                Step::Flush { task, d } => {
                    let t = &self.plan.tasks[task];
                    let count = t.positions.len() * d.k * d.n;
                    let src = if db.out() {
                        if out_pending {
                            ops.push(TraceOp::DmaWait { tag: TAG_OUT });
                        }
                        self.out.spd_offset.expect("double-buffered buffer has a load slot")
                    } else {
                        self.out.dpd_offset
                    };
                    ops.push(TraceOp::Convert {
                        src: self.out.dpd_offset,
                        dst: src,
                        count,
                        dir: ConvertDir::F64ToF32,
                        order: ConvertOrder::Forward,
                    });
                    let p = &self.plan.padded;
                    let koff = self.k_offset(t, &d);
                    let noff = self.n_offset(t, &d);
                    for (ol, pos) in t.positions.clone().enumerate() {
                        ops.push(TraceOp::DmaPut {
                            operand: Operand::Out,
                            main: MainRegion {
                                base: self.map.out + ((pos * p.oc + koff) * p.b + noff) * 4,
                                rows: d.k,
                                row_bytes: d.n * 4,
                                stride: p.b * 4,
                            },
                            ldm: src + ol * d.k * d.n * 4,
                            tag: TAG_OUT,
                        });
                    }
                    if db.out() {
                        out_pending = true;
                    } else {
                        ops.push(TraceOp::DmaWait { tag: TAG_OUT });
                    }
                }
            }
        }
        if out_pending {
            ops.push(TraceOp::DmaWait { tag: TAG_OUT });
        }
        ops
    }

    fn use_point(&self, ops: &mut Program, u: Use<'_>) {
        let slot_dpd = |s: usize| u.buf.dpd_offset + s * u.slot_elems * 8;
        let own = slot_dpd(u.own);
        if u.buffered {
            let spd = u.buf.spd_offset.expect("double-buffered buffer has a load slot");
            ops.push(TraceOp::DmaWait { tag: u.tag });
            ops.push(TraceOp::Convert {
                src: spd,
                dst: own,
                count: u.slot_elems,
                dir: ConvertDir::F32ToF64,
                order: ConvertOrder::Forward,
            });
            if let Some(main) = u.next {
                ops.push(TraceOp::DmaGet {
                    operand: u.operand,
                    main,
                    ldm: spd,
                    tag: u.tag,
                });
            }
        } else {
            ops.push(TraceOp::DmaGet {
                operand: u.operand,
                main: u.main,
                ldm: own,
                tag: TAG_SYNC,
            });
            ops.push(TraceOp::DmaWait { tag: TAG_SYNC });
            ops.push(TraceOp::Convert {
                src: own,
                dst: own,
                count: u.slot_elems,
                dir: ConvertDir::F32ToF64,
                order: ConvertOrder::Reverse,
            });
        }
        if u.slots > 1 {
            let bytes = u.slot_elems * 8;
            for s in 0..u.slots {
                if s == u.own {
                    ops.push(match u.axis {
                        CommAxis::Row => TraceOp::BcastRow { ldm: own, bytes },
                        CommAxis::Col => TraceOp::BcastCol { ldm: own, bytes },
                    });
                } else {
                    ops.push(TraceOp::Recv {
                        axis: u.axis,
                        ldm: slot_dpd(s),
                        bytes,
                    });
                }
            }
        }
    }
}

struct Use<'a> {
    buf: &'a LdmBuffer,
    operand: Operand,
    tag: u32,
    buffered: bool,
    main: MainRegion,
    next: Option<MainRegion>,
    slots: usize,
    own: usize,
    slot_elems: usize,
    axis: CommAxis,
}

/// Programs for every element, row-major, against the packed memory map.
pub fn lower(plan: &ConvPlan, shape: &ConvShape) -> Result<Vec<Program>, EngineError> {
    lower_with(plan, shape, &MemoryMap::packed(shape, &plan.padded), &MachineConfig::default())
}

pub fn lower_with(plan: &ConvPlan, shape: &ConvShape, map: &MemoryMap, cfg: &MachineConfig) -> Result<Vec<Program>, EngineError> {
    let tbs = partition_tbs(cfg, plan.grain)?;
    if tbs.len() != plan.task_assignment.len() {
        return Err(EngineError::PlanInfeasible(format!(
            "plan assigns {} blocks but the grid holds {}",
            plan.task_assignment.len(),
            tbs.len()
        )));
    }
    let buf = |name: &str| {
        plan.ldm
            .buffer(name)
            .ok_or_else(|| EngineError::PlanInfeasible(format!("LDM plan lacks buffer `{name}`")))
    };
    let (out, flt, inp) = (buf("out")?, buf("flt")?, buf("in")?);
    let mut programs = vec![Program::new(); cfg.num_cpes()];
    for (tb, assign) in tbs.iter().zip(&plan.task_assignment) {
        for &m in &tb.members {
            let (i, j) = tb.local(m);
            let l = Lowerer {
                plan,
                shape,
                map: *map,
                seat: Seat { i, j },
                out,
                flt,
                inp,
            };
            programs[m.index(cfg)] = l.program(assign.tasks.clone());
        }
    }
    Ok(programs)
}
