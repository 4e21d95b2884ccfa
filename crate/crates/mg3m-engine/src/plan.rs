use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use conv_core::ConvShape;
use kernel_model::{partition_kernel, KernelPartition};
use serde::{Deserialize, Serialize};
use sw_sim::{MachineConfig, TbShape};

use crate::cost::{estimate, item_costs, CostContext};
use crate::error::EngineError;
use crate::ldm::{plan_ldm, BufferRole, BufferSpec, LayoutStyle, LdmPlan};

/// Which operand streams use ping-pong buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbVariant {
    None,
    OneMatrixIn,
    OneMatrixFlt,
    TwoMatrix,
    ThreeMatrix,
}

impl DbVariant {
    pub const ALL: [DbVariant; 5] = [
        DbVariant::None,
        DbVariant::OneMatrixIn,
        DbVariant::OneMatrixFlt,
        DbVariant::TwoMatrix,
        DbVariant::ThreeMatrix,
    ];

    pub fn from_streams(flt: bool, inp: bool, out: bool) -> Self {
        match (flt, inp, out) {
            (true, true, true) => DbVariant::ThreeMatrix,
            (true, true, false) => DbVariant::TwoMatrix,
            (true, false, _) => DbVariant::OneMatrixFlt,
            (false, true, _) => DbVariant::OneMatrixIn,
            (false, false, _) => DbVariant::None,
        }
    }

    pub fn flt(self) -> bool {
        matches!(self, DbVariant::OneMatrixFlt | DbVariant::TwoMatrix | DbVariant::ThreeMatrix)
    }

    pub fn inp(self) -> bool {
        matches!(self, DbVariant::OneMatrixIn | DbVariant::TwoMatrix | DbVariant::ThreeMatrix)
    }

    pub fn out(self) -> bool {
        self == DbVariant::ThreeMatrix
    }

    pub fn name(self) -> &'static str {
        match self {
            DbVariant::None => "none",
            DbVariant::OneMatrixIn => "one_matrix_in",
            DbVariant::OneMatrixFlt => "one_matrix_flt",
            DbVariant::TwoMatrix => "two_matrix",
            DbVariant::ThreeMatrix => "three_matrix",
        }
    }
}

impl fmt::Display for DbVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DbVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown double-buffer variant `{s}`"))
    }
}

/// Extents of the zero-padded tensors placed in main memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddedDims {
    pub b: usize,
    pub ic: usize,
    pub oc: usize,
}

/// Granularity each extent must have so every element of a block gets an
/// equal, lane-aligned share.
pub(crate) fn units(grain: TbShape) -> PaddedDims {
    match grain {
        TbShape::Tb1x1 => PaddedDims { b: 4, ic: 1, oc: 1 },
        TbShape::Tb1x8 => PaddedDims { b: 4, ic: 8, oc: 8 },
        TbShape::Tb8x8 => PaddedDims { b: 32, ic: 8, oc: 32 },
    }
}

impl PaddedDims {
    pub fn for_grain(shape: &ConvShape, grain: TbShape) -> Self {
        let u = units(grain);
        Self {
            b: shape.b.next_multiple_of(u.b),
            ic: shape.ic.next_multiple_of(u.ic),
            oc: shape.oc.next_multiple_of(u.oc),
        }
    }

    /// Fraction of multiply-adds spent on padding.
    pub fn padding_overhead(&self, shape: &ConvShape) -> f64 {
        (self.b * self.ic * self.oc) as f64 / (shape.b * shape.ic * shape.oc) as f64 - 1.0
    }
}

/// Chunk sizes of the batch, output-channel and input-channel extents; the
/// last chunk of each may be shorter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tiling {
    pub b_tile: usize,
    pub oc_tile: usize,
    pub ic_chunk: usize,
}

impl Tiling {
    pub fn identity(p: &PaddedDims) -> Self {
        Self {
            b_tile: p.b,
            oc_tile: p.oc,
            ic_chunk: p.ic,
        }
    }

    pub fn is_identity(&self, p: &PaddedDims) -> bool {
        *self == Self::identity(p)
    }

    pub fn splits(&self, p: &PaddedDims) -> (usize, usize, usize) {
        (p.b.div_ceil(self.b_tile), p.oc.div_ceil(self.oc_tile), p.ic.div_ceil(self.ic_chunk))
    }

    fn validate(&self, p: &PaddedDims, grain: TbShape) -> Result<(), EngineError> {
        let u = units(grain);
        let ok = |t: usize, total: usize, unit: usize| t > 0 && t <= total && t.is_multiple_of(unit);
        if !ok(self.b_tile, p.b, u.b) || !ok(self.oc_tile, p.oc, u.oc) || !ok(self.ic_chunk, p.ic, u.ic) {
            return Err(EngineError::PlanInfeasible(format!(
                "tiling {self:?} does not divide padded extents {p:?} in units {u:?}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn chunks(total: usize, size: usize) -> Vec<Range<usize>> {
    (0..total).step_by(size).map(|s| s..(s + size).min(total)).collect()
}

/// One unit of TB work: a run of output positions for one `(oc, b)` tile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub positions: Range<usize>,
    pub oc: Range<usize>,
    pub b: Range<usize>,
}

/// Per-element operand extents of one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElemDims {
    pub k: usize,
    pub n: usize,
    pub c: usize,
    pub flt_slots: usize,
    pub in_slots: usize,
}

impl ElemDims {
    pub fn new(grain: TbShape, oc_len: usize, b_len: usize, ic_len: usize) -> Self {
        Self::with_sharing(grain, true, oc_len, b_len, ic_len)
    }

    /// Without sharing every element loads whole operands itself.
    pub fn with_sharing(grain: TbShape, share: bool, oc_len: usize, b_len: usize, ic_len: usize) -> Self {
        let d = match grain {
            TbShape::Tb1x1 => Self {
                k: oc_len,
                n: b_len,
                c: ic_len,
                flt_slots: 1,
                in_slots: 1,
            },
            TbShape::Tb1x8 => Self {
                k: oc_len / 8,
                n: b_len,
                c: ic_len,
                flt_slots: 1,
                in_slots: 8,
            },
            TbShape::Tb8x8 => Self {
                k: oc_len / 8,
                n: b_len / 8,
                c: ic_len,
                flt_slots: 8,
                in_slots: 8,
            },
        };
        if share {
            d
        } else {
            Self {
                flt_slots: 1,
                in_slots: 1,
                ..d
            }
        }
    }

    pub fn flt_slot_rows(&self) -> usize {
        self.c / self.flt_slots
    }

    pub fn in_slot_rows(&self) -> usize {
        self.c / self.in_slots
    }
}

pub(crate) fn buffer_specs(grain: TbShape, share: bool, tiling: &Tiling, out_len: usize, db: DbVariant) -> Vec<BufferSpec> {
    let d = ElemDims::with_sharing(grain, share, tiling.oc_tile, tiling.b_tile, tiling.ic_chunk);
    let role = |b: bool| if b { BufferRole::DoubleBuffered } else { BufferRole::Ordinary };
    vec![
        BufferSpec::new("out", role(db.out()), out_len * d.k * d.n * 4, 1),
        BufferSpec::new("flt", role(db.flt()), d.c * d.k * 4, d.flt_slots),
        BufferSpec::new("in", role(db.inp()), d.c * d.n * 4, d.in_slots),
    ]
}

pub(crate) fn ldm_for(
    cfg: &MachineConfig,
    grain: TbShape,
    share: bool,
    tiling: &Tiling,
    out_len: usize,
    db: DbVariant,
) -> Result<LdmPlan, EngineError> {
    plan_ldm(&buffer_specs(grain, share, tiling, out_len, db), LayoutStyle::Enhanced, cfg.ldm_bytes)
}

/// Settings a caller may pin; everything left `None` is chosen by the planner.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Overrides {
    pub grain: Option<TbShape>,
    pub out_len: Option<usize>,
    pub db_variant: Option<DbVariant>,
    pub tiling: Option<Tiling>,
    /// `false` replaces broadcasts by per-element loads.
    pub share: Option<bool>,
}

impl Overrides {
    pub fn grain(grain: TbShape) -> Self {
        Self {
            grain: Some(grain),
            ..Default::default()
        }
    }

    /// Reads pinned settings from a plan dump or a partial override file.
    /// Unrelated keys (LDM tables, tasks) are ignored.
    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let v: Self = serde_json::from_str(text).map_err(|e| EngineError::PlanFile(e.to_string()))?;
        if v.out_len == Some(0) {
            return Err(EngineError::PlanFile("out_len must be positive".into()));
        }
        if let Some(t) = v.tiling {
            if t.b_tile == 0 || t.oc_tile == 0 || t.ic_chunk == 0 {
                return Err(EngineError::PlanFile("tile sizes must be positive".into()));
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbAssignment {
    pub tb_id: usize,
    pub tasks: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvPlan {
    pub grain: TbShape,
    pub out_len: usize,
    pub db_variant: DbVariant,
    pub share: bool,
    pub padded: PaddedDims,
    pub tiling: Tiling,
    pub ldm: LdmPlan,
    /// Distinct per-element kernel shapes and their remainder partitions.
    pub kernel_parts: Vec<KernelPartition>,
    pub tasks: Vec<Task>,
    pub task_assignment: Vec<TbAssignment>,
}

impl ConvPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn num_tbs(&self) -> usize {
        64 / self.grain.size()
    }

    /// Tiles each task multiplies, as `(oc tiles, b tiles)`.
    pub fn tile_count(&self) -> usize {
        let (nb, noc, _) = self.tiling.splits(&self.padded);
        nb * noc
    }
}

pub(crate) fn build_tasks(positions: usize, out_len: usize, tiling: &Tiling, p: &PaddedDims) -> Vec<Task> {
    let mut tasks = Vec::new();
    for pos in chunks(positions, out_len) {
        for oc in chunks(p.oc, tiling.oc_tile) {
            for b in chunks(p.b, tiling.b_tile) {
                tasks.push(Task {
                    positions: pos.clone(),
                    oc: oc.clone(),
                    b,
                });
            }
        }
    }
    tasks
}

/// Contiguous blocks; the first `n % tbs` blocks get one extra task.
pub(crate) fn distribute(n: usize, tbs: usize) -> Vec<Range<usize>> {
    let (q, r) = (n / tbs, n % tbs);
    let mut start = 0;
    (0..tbs)
        .map(|t| {
            let len = q + usize::from(t < r);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}

fn split_sizes(total: usize, unit: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut s = 1;
    loop {
        let size = total.div_ceil(s).next_multiple_of(unit).min(total);
        if out.last() != Some(&size) {
            out.push(size);
        }
        if size <= unit {
            break;
        }
        s *= 2;
    }
    out
}

/// Smallest split of the `(B, OC, IC)` extents whose buffers fit at the
/// given `out_len` and buffering.
pub(crate) fn search_tiling(
    cfg: &MachineConfig,
    grain: TbShape,
    share: bool,
    p: &PaddedDims,
    out_len: usize,
    db: DbVariant,
) -> Result<Tiling, EngineError> {
    let u = units(grain);
    let mut best: Option<(usize, Tiling)> = None;
    for &b_tile in &split_sizes(p.b, u.b) {
        for &oc_tile in &split_sizes(p.oc, u.oc) {
            for &ic_chunk in &split_sizes(p.ic, u.ic) {
                let t = Tiling {
                    b_tile,
                    oc_tile,
                    ic_chunk,
                };
                let (nb, noc, nic) = t.splits(p);
                let cost = nb * noc * nic;
                if best.as_ref().is_some_and(|(c, _)| *c <= cost) {
                    continue;
                }
                if ldm_for(cfg, grain, share, &t, out_len, db).is_ok() {
                    best = Some((cost, t));
                }
            }
        }
    }
    best.map(|(_, t)| t).ok_or_else(|| {
        EngineError::PlanInfeasible(format!(
            "no {grain} tiling fits {} LDM bytes with out_len {out_len} and {db} buffering",
            cfg.ldm_bytes
        ))
    })
}

/// Tiling chosen with one resident output matrix and no double buffering.
pub fn tile_mm_unit(shape: &ConvShape, grain: TbShape, cfg: &MachineConfig) -> Result<Tiling, EngineError> {
    search_tiling(cfg, grain, true, &PaddedDims::for_grain(shape, grain), 1, DbVariant::None)
}

fn best_out_len(
    shape: &ConvShape,
    grain: TbShape,
    cfg: &MachineConfig,
    share: bool,
    p: &PaddedDims,
    tiling: &Tiling,
    db: DbVariant,
) -> Result<usize, EngineError> {
    let positions = shape.out_positions();
    let (nb, noc, _) = tiling.splits(p);
    let tiles = nb * noc;
    let tbs = cfg.num_cpes() / grain.size();
    let mut best: Option<(usize, usize)> = None;
    for len in 1..=positions {
        if ldm_for(cfg, grain, share, tiling, len, db).is_err() {
            // Footprint grows with out_len, so nothing larger fits either.
            break;
        }
        let tasks = tiles * positions.div_ceil(len);
        let load = tasks.div_ceil(tbs) * len;
        if best.is_none_or(|(l, _)| load <= l) {
            best = Some((load, len));
        }
    }
    best.map(|(_, l)| l)
        .ok_or_else(|| EngineError::PlanInfeasible(format!("{grain}: even out_len 1 overflows LDM")))
}

/// Resident output count minimizing the busiest block's position load;
/// ties go to the largest count, which minimizes filter reloads.
pub fn choose_out_len(shape: &ConvShape, grain: TbShape, cfg: &MachineConfig) -> Result<usize, EngineError> {
    let p = PaddedDims::for_grain(shape, grain);
    let tiling = tile_mm_unit(shape, grain, cfg)?;
    best_out_len(shape, grain, cfg, true, &p, &tiling, DbVariant::None)
}

/// Default ratio of output writeback to task compute below which the
/// output stream is not worth double buffering.
pub const OUT_SLACK_RATIO: f64 = 0.05;

pub(crate) fn pick_db_variant(ctx: &CostContext, cfg: &MachineConfig) -> DbVariant {
    let c = item_costs(ctx, cfg);
    let hide_flt = c.flt_dma <= c.flt_compute_between;
    let hide_in = c.in_dma <= c.in_compute_between;
    let hide_out = hide_flt && hide_in && c.out_dma <= c.task_compute && c.out_dma as f64 > OUT_SLACK_RATIO * c.task_compute as f64;
    let fits = |v: DbVariant| ldm_for(cfg, ctx.grain, ctx.share, &ctx.tiling, ctx.out_len, v).is_ok();
    let mut streams = (hide_flt, hide_in, hide_out);
    // Give up OUT first, then FLT, then IN until the buffers fit.
    for drop in 0..4 {
        let v = DbVariant::from_streams(streams.0, streams.1, streams.2);
        if fits(v) {
            return v;
        }
        match drop {
            0 => streams.2 = false,
            1 => streams.0 = false,
            _ => streams.1 = false,
        }
    }
    DbVariant::None
}

/// Buffers exactly the streams whose transfers fit under the compute they
/// would overlap.
pub fn choose_db_variant(shape: &ConvShape, grain: TbShape, cfg: &MachineConfig) -> DbVariant {
    match plan_for_grain(shape, grain, cfg, &Overrides::default()) {
        Ok(p) => p.db_variant,
        Err(_) => DbVariant::None,
    }
}

pub(crate) fn plan_for_grain(
    shape: &ConvShape,
    grain: TbShape,
    cfg: &MachineConfig,
    ov: &Overrides,
) -> Result<ConvPlan, EngineError> {
    if cfg.grid_rows != 8 || cfg.grid_cols != 8 {
        return Err(EngineError::PlanInfeasible("the engine maps onto an 8x8 grid".into()));
    }
    let p = PaddedDims::for_grain(shape, grain);
    let positions = shape.out_positions();
    if let Some(l) = ov.out_len {
        if l == 0 || l > positions {
            return Err(EngineError::PlanInfeasible(format!("out_len {l} outside 1..={positions}")));
        }
    }
    let share = ov.share.unwrap_or(true);
    if let Some(t) = &ov.tiling {
        t.validate(&p, grain)?;
    }
    // One candidate per buffering seed: the minimal tiling that fits the
    // seed, the balanced out_len for it, then the buffering heuristic.
    // The candidate with the smallest estimate wins; earlier seeds win ties.
    let seeds: Vec<DbVariant> = match ov.db_variant {
        Some(v) => vec![v],
        None => DbVariant::ALL.to_vec(),
    };
    let mut best: Option<(u64, ConvPlan)> = None;
    let mut last_err = None;
    let mut tried: Vec<(Tiling, usize, DbVariant)> = Vec::new();
    for seed in seeds {
        let base = match ov.tiling {
            Some(t) => t,
            None => match search_tiling(cfg, grain, share, &p, ov.out_len.unwrap_or(1), seed) {
                Ok(t) => t,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            },
        };
        // Neighbours of the minimal tiling: finer reduction chunks free room
        // for buffering, narrower output tiles free room for longer out_len.
        let mut tilings = vec![base];
        if ov.tiling.is_none() {
            let u = units(grain);
            let shrink = |size: usize, div: usize, unit: usize| size.div_ceil(div).next_multiple_of(unit).min(size);
            for b_div in [1, 2] {
                for oc_div in [1, 2, 4] {
                    for ic_div in [1, 2, 4] {
                        let t = Tiling {
                            b_tile: shrink(base.b_tile, b_div, u.b),
                            oc_tile: shrink(base.oc_tile, oc_div, u.oc),
                            ic_chunk: shrink(base.ic_chunk, ic_div, u.ic),
                        };
                        if !tilings.contains(&t) {
                            tilings.push(t);
                        }
                    }
                }
            }
        }
        for tiling in tilings {
            let out_len = match ov.out_len {
                Some(l) => l,
                None => match best_out_len(shape, grain, cfg, share, &p, &tiling, seed) {
                    Ok(l) => l,
                    Err(e) => {
                        last_err = Some(e);
                        continue;
                    }
                },
            };
            let variants = match ov.db_variant {
                Some(v) => vec![v],
                None => {
                    let ctx = CostContext::new(shape, grain, share, cfg, &p, &tiling, out_len, DbVariant::None);
                    let picked = pick_db_variant(&ctx, cfg);
                    if picked == seed { vec![picked] } else { vec![picked, seed] }
                }
            };
            for db_variant in variants {
                if tried.contains(&(tiling, out_len, db_variant)) {
                    continue;
                }
                tried.push((tiling, out_len, db_variant));
                match assemble(shape, grain, cfg, share, p, tiling, out_len, db_variant) {
                    Ok(plan) => {
                        let ctx = CostContext::new(shape, grain, share, cfg, &p, &plan.tiling, plan.out_len, plan.db_variant);
                        let cycles = estimate(&ctx, cfg).cycles;
                        if best.as_ref().is_none_or(|(c, _)| cycles < *c) {
                            best = Some((cycles, plan));
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
        }
    }
    match (best, last_err) {
        (Some((_, plan)), _) => Ok(plan),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one seed is tried"),
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    shape: &ConvShape,
    grain: TbShape,
    cfg: &MachineConfig,
    share: bool,
    p: PaddedDims,
    tiling: Tiling,
    out_len: usize,
    db_variant: DbVariant,
) -> Result<ConvPlan, EngineError> {
    let positions = shape.out_positions();
    let ldm = ldm_for(cfg, grain, share, &tiling, out_len, db_variant)?;
    let tasks = build_tasks(positions, out_len, &tiling, &p);
    let tbs = cfg.num_cpes() / grain.size();
    let task_assignment = distribute(tasks.len(), tbs)
        .into_iter()
        .enumerate()
        .map(|(tb_id, tasks)| TbAssignment { tb_id, tasks })
        .collect();
    let mut kernel_parts: Vec<KernelPartition> = Vec::new();
    for oc in chunks(p.oc, tiling.oc_tile) {
        for b in chunks(p.b, tiling.b_tile) {
            let d = ElemDims::new(grain, oc.len(), b.len(), tiling.ic_chunk);
            let part = partition_kernel(d.k, d.n).map_err(|e| EngineError::PlanInfeasible(e.to_string()))?;
            if !kernel_parts.contains(&part) {
                kernel_parts.push(part);
            }
        }
    }
    Ok(ConvPlan {
        grain,
        out_len,
        db_variant,
        share,
        padded: p,
        tiling,
        ldm,
        kernel_parts,
        tasks,
        task_assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use conv_core::ConvParams;

    fn shape(b: i64, ic: i64, oc: i64, size: i64, flt: i64) -> ConvShape {
        ConvShape::new(ConvParams::square(b, ic, oc, size, flt, 0, 1)).unwrap()
    }

    #[test]
    fn distribution_is_balanced_and_covering() {
        let d = distribute(10, 4);
        assert_eq!(d, vec![0..3, 3..6, 6..8, 8..10]);
        assert_eq!(distribute(2, 4)[3], 2..2);
    }

    #[test]
    fn split_sizes_respect_units() {
        assert_eq!(split_sizes(64, 4), vec![64, 32, 16, 8, 4]);
        assert_eq!(split_sizes(24, 8), vec![24, 16, 8]);
        assert_eq!(split_sizes(1, 1), vec![1]);
    }

    #[test]
    fn small_scene_keeps_identity_tiling() {
        let s = shape(8, 16, 16, 8, 3);
        for g in TbShape::ALL {
            let p = PaddedDims::for_grain(&s, g);
            assert!(tile_mm_unit(&s, g, &MachineConfig::default()).unwrap().is_identity(&p));
        }
    }

    #[test]
    fn big_scene_needs_splitting() {
        let s = shape(256, 1024, 1024, 4, 3);
        let cfg = MachineConfig::default();
        let p = PaddedDims::for_grain(&s, TbShape::Tb8x8);
        let t = tile_mm_unit(&s, TbShape::Tb8x8, &cfg).unwrap();
        assert!(!t.is_identity(&p));
        assert!(ldm_for(&cfg, TbShape::Tb8x8, true, &t, 1, DbVariant::None).is_ok());
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in DbVariant::ALL {
            assert_eq!(v.name().parse::<DbVariant>().unwrap(), v);
            assert_eq!(DbVariant::from_streams(v.flt(), v.inp(), v.out()), v);
        }
    }

    #[test]
    fn overrides_accept_plan_dumps() {
        let s = shape(8, 16, 16, 8, 3);
        let plan = plan_for_grain(&s, TbShape::Tb1x8, &MachineConfig::default(), &Overrides::default()).unwrap();
        let ov = Overrides::from_json(&plan.to_json()).unwrap();
        assert_eq!(ov.grain, Some(TbShape::Tb1x8));
        assert_eq!(ov.out_len, Some(plan.out_len));
        assert!(Overrides::from_json(r#"{"out_len": 0}"#).is_err());
    }
}
