use conv_core::ConvShape;
use sw_sim::{MachineConfig, TbShape};

use crate::cost::{estimate, CostContext, Estimate};
use crate::error::EngineError;
use crate::plan::{plan_for_grain, ConvPlan, Overrides};

/// Modeled cost of an already planned convolution.
pub fn estimate_plan(plan: &ConvPlan, shape: &ConvShape, cfg: &MachineConfig) -> Estimate {
    let ctx = CostContext::new(
        shape,
        plan.grain,
        plan.share,
        cfg,
        &plan.padded,
        &plan.tiling,
        plan.out_len,
        plan.db_variant,
    );
    estimate(&ctx, cfg)
}

/// Modeled makespan of the default plan on `grain`.
pub fn estimate_cycles(shape: &ConvShape, grain: TbShape, cfg: &MachineConfig) -> Result<u64, EngineError> {
    let plan = plan_for_grain(shape, grain, cfg, &Overrides::default())?;
    Ok(estimate_plan(&plan, shape, cfg).cycles)
}

/// Grain with the smallest estimate; ties go to the finer grain.
pub fn select_grain(shape: &ConvShape, cfg: &MachineConfig) -> Result<TbShape, EngineError> {
    let mut best: Option<(u64, TbShape)> = None;
    let mut last_err = None;
    for g in TbShape::ALL {
        match estimate_cycles(shape, g, cfg) {
            Ok(c) if best.is_none_or(|(b, _)| c < b) => best = Some((c, g)),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, g)), _) => Ok(g),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("three grains were tried"),
    }
}

/// Full plan: the pinned grain or the selected one, with every other
/// setting chosen unless pinned.
pub fn plan_conv(shape: &ConvShape, cfg: &MachineConfig, ov: &Overrides) -> Result<ConvPlan, EngineError> {
    let grain = match ov.grain {
        Some(g) => g,
        None => select_grain(shape, cfg)?,
    };
    plan_for_grain(shape, grain, cfg, ov)
}
