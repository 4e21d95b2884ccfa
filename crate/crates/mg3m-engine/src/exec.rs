use conv_core::{conv_flops, ConvShape, Layout, Tensor4};
use sw_sim::{run_programs, CostLedger, MachineConfig, MainMemory};

use crate::error::EngineError;
use crate::estimate::plan_conv;
use crate::lower::{lower_with, MemoryMap};
use crate::plan::{ConvPlan, Overrides, PaddedDims};

#[derive(Debug, Clone)]
pub struct ExecResult {
    pub out: Tensor4,
    pub plan: ConvPlan,
    pub ledger: CostLedger,
    pub efficiency: f64,
}

/// Useful flop rate over core-group peak; padding work does not count.
pub fn efficiency(shape: &ConvShape, total_cycles: u64, cfg: &MachineConfig) -> f64 {
    if total_cycles == 0 {
        return 0.0;
    }
    conv_flops(shape) as f64 / (total_cycles as f64 * cfg.peak_flops_per_cycle())
}

fn stage(input: &Tensor4, filter: &Tensor4, shape: &ConvShape, p: &PaddedDims, map: &MemoryMap) -> MainMemory {
    let mut mem = MainMemory::new(map.len);
    let mut flt = vec![0f32; shape.flt_h * shape.flt_w * p.ic * p.oc];
    for fh in 0..shape.flt_h {
        for fw in 0..shape.flt_w {
            for ic in 0..shape.ic {
                let row = ((fh * shape.flt_w + fw) * p.ic + ic) * p.oc;
                for oc in 0..shape.oc {
                    flt[row + oc] = filter.get(fh, fw, ic, oc);
                }
            }
        }
    }
    mem.write_f32(map.flt, &flt);
    let mut inp = vec![0f32; shape.in_h * shape.in_w * p.ic * p.b];
    for ih in 0..shape.in_h {
        for iw in 0..shape.in_w {
            for ic in 0..shape.ic {
                let row = ((ih * shape.in_w + iw) * p.ic + ic) * p.b;
                for b in 0..shape.b {
                    inp[row + b] = input.get(ih, iw, ic, b);
                }
            }
        }
    }
    mem.write_f32(map.inp, &inp);
    mem
}

fn unstage(mem: &MainMemory, shape: &ConvShape, p: &PaddedDims, map: &MemoryMap) -> Tensor4 {
    let padded = mem.read_f32(map.out, shape.out_h * shape.out_w * p.oc * p.b);
    let mut out = Tensor4::zeros_for(Layout::Out, shape);
    for oh in 0..shape.out_h {
        for ow in 0..shape.out_w {
            for oc in 0..shape.oc {
                let row = ((oh * shape.out_w + ow) * p.oc + oc) * p.b;
                for b in 0..shape.b {
                    out.set(oh, ow, oc, b, padded[row + b]);
                }
            }
        }
    }
    out
}

/// Runs a planned convolution on the simulator.
pub fn execute_plan(
    input: &Tensor4,
    filter: &Tensor4,
    shape: &ConvShape,
    cfg: &MachineConfig,
    plan: ConvPlan,
) -> Result<ExecResult, EngineError> {
    input.check_shape(Layout::In, shape)?;
    filter.check_shape(Layout::Flt, shape)?;
    let map = MemoryMap::packed(shape, &plan.padded);
    let mut mem = stage(input, filter, shape, &plan.padded, &map);
    let programs = lower_with(&plan, shape, &map, cfg)?;
    let ledger = run_programs(cfg, plan.grain, &programs, &mut mem)?;
    let out = unstage(&mem, shape, &plan.padded, &map);
    let efficiency = efficiency(shape, ledger.total_cycles, cfg);
    Ok(ExecResult {
        out,
        plan,
        ledger,
        efficiency,
    })
}

/// Plans (honouring `overrides`), lowers, simulates and unpads the output.
pub fn execute(
    input: &Tensor4,
    filter: &Tensor4,
    shape: &ConvShape,
    cfg: &MachineConfig,
    overrides: &Overrides,
) -> Result<ExecResult, EngineError> {
    let plan = plan_conv(shape, cfg, overrides)?;
    execute_plan(input, filter, shape, cfg, plan)
}
