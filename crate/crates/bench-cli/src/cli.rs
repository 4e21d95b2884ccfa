use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kernel_model::{variant_table_csv, KernelCosts};
use mg3m_engine::{plan_conv, Overrides, TbShape};
use sw_sim::MachineConfig;

use crate::error::BenchError;
use crate::run::{
    compare_simple, grainmap, run_scenes, summarize, write_csv, BenchRecord, Mode, RunOptions, TOLERANCE,
};
use crate::scenes::{custom_scene, gen_scenes, grid_scenes, parse_scene_file, Scene, SceneDefaults, SceneSet, BATCHES};

#[derive(Debug, Parser)]
#[command(name = "mg3m", version, about = "Multi-grained convolution on a simulated SW26010 core group")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate scenes and compare against the direct convolution.
    Verify(SceneArgs),
    /// Per-scene cycles, efficiency and traffic as CSV.
    Bench(BenchArgs),
    /// Best grain per (B, IC, OC) as CSV.
    Grainmap(GridArgs),
    /// Automatic grain against a full-grid-only baseline.
    CompareSimple(CompareArgs),
    /// Print the plan of one scene as JSON.
    Plan(SceneArgs),
    /// Per-step issue counts of every microkernel tile as CSV.
    KernelTable(OutArgs),
    /// Print the default machine config as JSON, a starting point for --machine.
    Machine(OutArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Machine config JSON; the SW26010 defaults when absent.
    #[arg(long)]
    pub machine: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the random tensor fixtures.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Spatial {
    /// Input height and width.
    #[arg(long, default_value_t = 16)]
    pub in_size: usize,
    /// Filter height and width.
    #[arg(long, default_value_t = 3)]
    pub filter: usize,
    #[arg(long, default_value_t = 0)]
    pub pad: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    #[arg(long, default_value = "channels-small")]
    pub set: String,
    /// Batch size of the sets that do not sweep it.
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[command(flatten)]
    pub spatial: Spatial,
    /// Custom scene channels; both are required together.
    #[arg(long, requires = "oc")]
    pub ic: Option<usize>,
    #[arg(long, requires = "ic")]
    pub oc: Option<usize>,
    /// JSON file with custom scenes.
    #[arg(long, conflicts_with_all = ["ic", "oc"])]
    pub scenes: Option<PathBuf>,
    /// Only run the scene with this index.
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long)]
    pub pin_grain: Option<TbShape>,
    /// Plan JSON (or a subset of its fields) pinning planner choices.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum, default_value_t = Mode::Sim)]
    pub mode: Mode,
    /// Also compare each simulated output against the direct convolution.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Only this batch size; 64, 128 and 256 when absent.
    #[arg(long)]
    pub batch: Option<usize>,
    #[command(flatten)]
    pub spatial: Spatial,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Scene set to compare on instead of the grain-map grid.
    #[arg(long)]
    pub set: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Model)]
    pub mode: Mode,
    /// Where to write the per-batch means as CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, BenchError> {
    fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, BenchError> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).map_err(|source| BenchError::Io {
            path: p.display().to_string(),
            source,
        })?),
        None => Box::new(io::stdout().lock()),
    })
}

fn machine(common: &Common) -> Result<MachineConfig, BenchError> {
    match &common.machine {
        Some(p) => Ok(MachineConfig::from_json(&read(p)?)?),
        None => Ok(MachineConfig::default()),
    }
}

fn spatial_defaults(batch: usize, s: &Spatial) -> SceneDefaults {
    SceneDefaults {
        batch,
        in_size: s.in_size,
        filter: s.filter,
        pad: s.pad,
        stride: s.stride,
    }
}

fn scenes(a: &SceneArgs) -> Result<(Vec<Scene>, SceneDefaults), BenchError> {
    let d = spatial_defaults(a.batch, &a.spatial);
    let set: SceneSet = a.set.parse()?;
    let mut all = match (&a.scenes, a.ic.zip(a.oc)) {
        (Some(path), _) => parse_scene_file(&read(path)?)?,
        (None, Some((ic, oc))) => vec![custom_scene(ic, oc, &d)?],
        (None, None) => gen_scenes(set, &d)?,
    };
    if let Some(i) = a.index {
        all.retain(|s| s.index == i);
        if all.is_empty() {
            return Err(BenchError::Usage(format!("no scene with index {i}")));
        }
    }
    Ok((all, d))
}

fn options(a: &SceneArgs, cfg: MachineConfig) -> Result<RunOptions, BenchError> {
    let mut overrides = match &a.overrides {
        Some(p) => Overrides::from_json(&read(p)?)?,
        None => Overrides::default(),
    };
    if a.pin_grain.is_some() {
        overrides.grain = a.pin_grain;
    }
    Ok(RunOptions {
        overrides,
        seed: a.common.seed,
        jobs: a.common.jobs,
        ..RunOptions::new(cfg)
    })
}

fn report_failures(records: Vec<Result<BenchRecord, crate::run::SceneFailure>>) -> (Vec<BenchRecord>, usize) {
    let mut ok = Vec::new();
    let mut failed = 0;
    for r in records {
        match r {
            Ok(rec) => ok.push(rec),
            Err(f) => {
                failed += 1;
                eprintln!("{} #{}: {}", f.set, f.index, f.message);
            }
        }
    }
    (ok, failed)
}

pub fn cmd_verify(a: &SceneArgs) -> Result<i32, BenchError> {
    let cfg = machine(&a.common)?;
    let (scenes, d) = scenes(a)?;
    let opts = RunOptions {
        verify: true,
        ..options(a, cfg)?
    };
    let (records, failed) = report_failures(run_scenes(&scenes, &opts));
    let mut breaches = 0;
    for r in records.iter().filter(|r| !r.verified) {
        breaches += 1;
        eprintln!(
            "{} #{}: max relative error {:e} exceeds {TOLERANCE:e}",
            r.set,
            r.index,
            r.max_rel_err.unwrap_or(f64::NAN)
        );
    }
    let comment = format!("{} seed={} mode=sim", d.header_comment(), opts.seed);
    write_csv(output(a.common.out.as_deref())?, Some(&comment), &records)?;
    eprintln!("verified {}/{} scenes", records.len() - breaches, scenes.len());
    Ok(if failed + breaches > 0 { 1 } else { 0 })
}

pub fn cmd_bench(a: &BenchArgs) -> Result<i32, BenchError> {
    let cfg = machine(&a.scene.common)?;
    let (scenes, d) = scenes(&a.scene)?;
    if a.verify && a.mode == Mode::Model {
        return Err(BenchError::Usage("--verify needs --mode sim".into()));
    }
    let opts = RunOptions {
        mode: a.mode,
        verify: a.verify,
        ..options(&a.scene, cfg)?
    };
    let (records, failed) = report_failures(run_scenes(&scenes, &opts));
    let comment = format!(
        "{} seed={} mode={}",
        d.header_comment(),
        opts.seed,
        if a.mode == Mode::Sim { "sim" } else { "model" }
    );
    write_csv(output(a.scene.common.out.as_deref())?, Some(&comment), &records)?;
    let breaches = records.iter().filter(|r| a.verify && !r.verified).count();
    Ok(if failed + breaches > 0 { 1 } else { 0 })
}

fn grid(g: &GridArgs) -> Result<(Vec<Scene>, SceneDefaults), BenchError> {
    let batches = match g.batch {
        Some(b) => vec![b],
        None => BATCHES.to_vec(),
    };
    let d = spatial_defaults(batches[0], &g.spatial);
    let mut all = Vec::new();
    for b in batches {
        all.extend(grid_scenes(b, &d)?);
    }
    for (i, s) in all.iter_mut().enumerate() {
        s.index = i;
    }
    Ok((all, d))
}

fn grid_comment(g: &GridArgs, d: &SceneDefaults) -> String {
    format!(
        "# in_size={} filter={} pad={} stride={} model=estimate",
        d.in_size, d.filter, d.pad, d.stride
    ) + &g.batch.map(|b| format!(" batch={b}")).unwrap_or_default()
}

pub fn cmd_grainmap(g: &GridArgs) -> Result<i32, BenchError> {
    let cfg = machine(&g.common)?;
    let (scenes, d) = grid(g)?;
    let rows = grainmap(&scenes, &cfg, g.common.jobs)?;
    write_csv(output(g.common.out.as_deref())?, Some(&grid_comment(g, &d)), &rows)?;
    Ok(0)
}

pub fn cmd_compare_simple(a: &CompareArgs) -> Result<i32, BenchError> {
    let cfg = machine(&a.grid.common)?;
    let (scenes, d) = match &a.set {
        Some(set) => {
            let d = spatial_defaults(a.grid.batch.unwrap_or(SceneDefaults::default().batch), &a.grid.spatial);
            (gen_scenes(set.parse()?, &d)?, d)
        }
        None => grid(&a.grid)?,
    };
    let opts = RunOptions {
        mode: a.mode,
        seed: a.grid.common.seed,
        jobs: a.grid.common.jobs,
        ..RunOptions::new(cfg)
    };
    let pairs = compare_simple(&scenes, &opts)?;
    let comment = grid_comment(&a.grid, &d);
    write_csv(output(a.grid.common.out.as_deref())?, Some(&comment), &pairs)?;
    let summary = summarize(&pairs);
    for s in &summary {
        eprintln!(
            "B={}: auto {:.4} pinned 8x8 {:.4} gap {:+.2}% over {} scenes",
            s.b,
            s.auto_mean,
            s.pinned_mean,
            100.0 * s.relative_gap,
            s.scenes
        );
    }
    if let Some(p) = &a.summary {
        write_csv(output(Some(p))?, Some(&comment), &summary)?;
    }
    Ok(0)
}

pub fn cmd_plan(a: &SceneArgs) -> Result<i32, BenchError> {
    let cfg = machine(&a.common)?;
    let (scenes, _) = scenes(a)?;
    let opts = options(a, cfg)?;
    let mut w = output(a.common.out.as_deref())?;
    for scene in &scenes {
        let plan = plan_conv(&scene.shape, &opts.cfg, &opts.overrides)?;
        writeln!(w, "{}", plan.to_json()).map_err(|source| BenchError::Io {
            path: "<output>".into(),
            source,
        })?;
    }
    Ok(0)
}

pub fn cmd_kernel_table(a: &OutArgs) -> Result<i32, BenchError> {
    let mut w = output(a.out.as_deref())?;
    w.write_all(variant_table_csv(&KernelCosts::default()).as_bytes())
        .map_err(|source| BenchError::Io {
            path: "<output>".into(),
            source,
        })?;
    Ok(0)
}

pub fn cmd_machine(a: &OutArgs) -> Result<i32, BenchError> {
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "{}", MachineConfig::default().to_json()).map_err(|source| BenchError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(0)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let r = match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Grainmap(a) => cmd_grainmap(a),
        Command::CompareSimple(a) => cmd_compare_simple(a),
        Command::Plan(a) => cmd_plan(a),
        Command::KernelTable(a) => cmd_kernel_table(a),
        Command::Machine(a) => cmd_machine(a),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
