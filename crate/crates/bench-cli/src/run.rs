use std::io::Write;

use conv_core::{conv_flops, direct_conv, max_rel_err, ConvShape, Layout, Tensor4};
use mg3m_engine::{efficiency, estimate_plan, execute, plan_conv, Overrides, TbShape};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sw_sim::MachineConfig;

use crate::error::BenchError;
use crate::scenes::Scene;

/// Largest relative error a verified run may show.
pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Lower and simulate every scene.
    Sim,
    /// Analytic estimate only.
    Model,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub cfg: MachineConfig,
    pub overrides: Overrides,
    pub mode: Mode,
    pub seed: u64,
    pub verify: bool,
    pub jobs: Option<usize>,
}

impl RunOptions {
    pub fn new(cfg: MachineConfig) -> Self {
        Self {
            cfg,
            overrides: Overrides::default(),
            mode: Mode::Sim,
            seed: 1,
            verify: false,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub set: String,
    pub index: usize,
    pub b: usize,
    pub ic: usize,
    pub oc: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub flt_h: usize,
    pub flt_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub std_h: usize,
    pub std_w: usize,
    pub mode: Mode,
    pub grain: String,
    pub db_variant: String,
    pub out_len: usize,
    pub total_cycles: u64,
    pub flops: u64,
    pub peak_flops_per_cycle: f64,
    pub efficiency: f64,
    pub dma_bytes_flt: Option<u64>,
    pub dma_bytes_in: Option<u64>,
    pub dma_bytes_out: Option<u64>,
    pub verified: bool,
    pub max_rel_err: Option<f64>,
}

impl BenchRecord {
    /// Efficiency recomputed from the record's own fields.
    pub fn recomputed_efficiency(&self) -> f64 {
        self.flops as f64 / (self.total_cycles as f64 * self.peak_flops_per_cycle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneFailure {
    pub set: String,
    pub index: usize,
    pub message: String,
}

/// Seeded input and filter for a scene.
pub fn fixtures(shape: &ConvShape, seed: u64, index: usize) -> (Tensor4, Tensor4) {
    let base = seed.wrapping_add(2 * index as u64);
    (
        Tensor4::random(Layout::In, shape.in_dims(), base),
        Tensor4::random(Layout::Flt, shape.flt_dims(), base.wrapping_add(1)),
    )
}

pub fn run_scene(scene: &Scene, opts: &RunOptions) -> Result<BenchRecord, BenchError> {
    let s = &scene.shape;
    let cfg = &opts.cfg;
    let mut rec = BenchRecord {
        set: scene.set.to_string(),
        index: scene.index,
        b: s.b,
        ic: s.ic,
        oc: s.oc,
        in_h: s.in_h,
        in_w: s.in_w,
        flt_h: s.flt_h,
        flt_w: s.flt_w,
        pad_h: s.pad_h,
        pad_w: s.pad_w,
        std_h: s.std_h,
        std_w: s.std_w,
        mode: opts.mode,
        grain: String::new(),
        db_variant: String::new(),
        out_len: 0,
        total_cycles: 0,
        flops: conv_flops(s),
        peak_flops_per_cycle: cfg.peak_flops_per_cycle(),
        efficiency: 0.0,
        dma_bytes_flt: None,
        dma_bytes_in: None,
        dma_bytes_out: None,
        verified: false,
        max_rel_err: None,
    };
    let plan = match opts.mode {
        Mode::Model => {
            let plan = plan_conv(s, cfg, &opts.overrides)?;
            rec.total_cycles = estimate_plan(&plan, s, cfg).cycles;
            plan
        }
        Mode::Sim => {
            let (input, filter) = fixtures(s, opts.seed, scene.index);
            let r = execute(&input, &filter, s, cfg, &opts.overrides)?;
            rec.total_cycles = r.ledger.total_cycles;
            rec.dma_bytes_flt = Some(r.ledger.dma_bytes.flt);
            rec.dma_bytes_in = Some(r.ledger.dma_bytes.inp);
            rec.dma_bytes_out = Some(r.ledger.dma_bytes.out);
            if opts.verify {
                let reference = direct_conv(&input, &filter, s)?;
                let err = max_rel_err(r.out.data(), reference.data());
                rec.max_rel_err = Some(err);
                rec.verified = err <= TOLERANCE;
            }
            r.plan
        }
    };
    rec.grain = plan.grain.to_string();
    rec.db_variant = plan.db_variant.to_string();
    rec.out_len = plan.out_len;
    rec.efficiency = efficiency(s, rec.total_cycles, cfg);
    Ok(rec)
}

/// Maps `f` over `items` on `jobs` workers; results keep input order.
pub fn par_map<T, R, F>(items: &[T], jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(|| items.par_iter().map(&f).collect()),
        None => items.par_iter().map(&f).collect(),
    }
}

pub fn run_scenes(scenes: &[Scene], opts: &RunOptions) -> Vec<Result<BenchRecord, SceneFailure>> {
    par_map(scenes, opts.jobs, |scene| {
        run_scene(scene, opts).map_err(|e| SceneFailure {
            set: scene.set.to_string(),
            index: scene.index,
            message: e.to_string(),
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrainRecord {
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "IC")]
    pub ic: usize,
    #[serde(rename = "OC")]
    pub oc: usize,
    pub grain: TbShape,
}

/// Modeled cycles of every grain's default plan, in [`TbShape::ALL`] order.
pub fn grain_cycles(shape: &ConvShape, cfg: &MachineConfig) -> Result<[u64; 3], BenchError> {
    let mut out = [0; 3];
    for (slot, g) in out.iter_mut().zip(TbShape::ALL) {
        let plan = plan_conv(shape, cfg, &Overrides::grain(g))?;
        *slot = estimate_plan(&plan, shape, cfg).cycles;
    }
    Ok(out)
}

/// Grain with the fewest modeled cycles; ties go to the finer grain.
pub fn best_grain(cycles: &[u64; 3]) -> (TbShape, u64) {
    let mut best = (TbShape::ALL[0], cycles[0]);
    for (g, &c) in TbShape::ALL.into_iter().zip(cycles).skip(1) {
        if c < best.1 {
            best = (g, c);
        }
    }
    best
}

pub fn grainmap(scenes: &[Scene], cfg: &MachineConfig, jobs: Option<usize>) -> Result<Vec<GrainRecord>, BenchError> {
    par_map(scenes, jobs, |scene| {
        let s = &scene.shape;
        let cycles = grain_cycles(s, cfg)?;
        Ok(GrainRecord {
            b: s.b,
            ic: s.ic,
            oc: s.oc,
            grain: best_grain(&cycles).0,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePair {
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "IC")]
    pub ic: usize,
    #[serde(rename = "OC")]
    pub oc: usize,
    pub auto_grain: TbShape,
    pub pinned_cycles: u64,
    pub auto_cycles: u64,
    pub pinned_efficiency: f64,
    pub auto_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    #[serde(rename = "B")]
    pub b: usize,
    pub scenes: usize,
    pub pinned_mean: f64,
    pub auto_mean: f64,
    /// `auto_mean / pinned_mean - 1`.
    pub relative_gap: f64,
}

/// Every scene with its grain chosen, and again pinned to the full grid.
pub fn compare_simple(scenes: &[Scene], opts: &RunOptions) -> Result<Vec<ComparePair>, BenchError> {
    let cfg = &opts.cfg;
    par_map(scenes, opts.jobs, |scene| {
        let s = &scene.shape;
        let (auto_grain, auto_cycles, pinned_cycles) = match opts.mode {
            Mode::Model => {
                let cycles = grain_cycles(s, cfg)?;
                let (g, c) = best_grain(&cycles);
                (g, c, cycles[2])
            }
            Mode::Sim => {
                let (input, filter) = fixtures(s, opts.seed, scene.index);
                let auto = execute(&input, &filter, s, cfg, &Overrides::default())?;
                let pinned = execute(&input, &filter, s, cfg, &Overrides::grain(TbShape::Tb8x8))?;
                (auto.plan.grain, auto.ledger.total_cycles, pinned.ledger.total_cycles)
            }
        };
        Ok(ComparePair {
            b: s.b,
            ic: s.ic,
            oc: s.oc,
            auto_grain,
            pinned_cycles,
            auto_cycles,
            pinned_efficiency: efficiency(s, pinned_cycles, cfg),
            auto_efficiency: efficiency(s, auto_cycles, cfg),
        })
    })
    .into_iter()
    .collect()
}

/// Mean efficiencies per batch size, ascending B.
pub fn summarize(pairs: &[ComparePair]) -> Vec<CompareSummary> {
    let mut batches: Vec<usize> = pairs.iter().map(|p| p.b).collect();
    batches.sort_unstable();
    batches.dedup();
    batches
        .into_iter()
        .map(|b| {
            let group: Vec<&ComparePair> = pairs.iter().filter(|p| p.b == b).collect();
            let n = group.len() as f64;
            let pinned_mean = group.iter().map(|p| p.pinned_efficiency).sum::<f64>() / n;
            let auto_mean = group.iter().map(|p| p.auto_efficiency).sum::<f64>() / n;
            CompareSummary {
                b,
                scenes: group.len(),
                pinned_mean,
                auto_mean,
                relative_gap: auto_mean / pinned_mean - 1.0,
            }
        })
        .collect()
}

/// CSV with an optional `#` comment line on top.
pub fn write_csv<T: Serialize, W: Write>(mut w: W, comment: Option<&str>, rows: &[T]) -> Result<(), BenchError> {
    if let Some(c) = comment {
        writeln!(w, "{c}").map_err(|source| BenchError::Io {
            path: "<output>".into(),
            source,
        })?;
    }
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush().map_err(|source| BenchError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}

/// Rows of a CSV written by [`write_csv`].
pub fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, BenchError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}
