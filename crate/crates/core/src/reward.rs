//! Hold/push supervision targets for the four reward variants.
//!
//! `None` means "no backpropagation". Dense maps are derived from the flow
//! norm and are not serialized; they can always be recomputed from the flow.

use serde::{Deserialize, Serialize};

use crate::geom::Pixel;
use crate::grid::{Mask, ScalarMap};
use crate::memory::UpdateCase;
use crate::sim::TouchReading;
use crate::{Error, Result, FLOW_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    #[default]
    FullTouch,
    NoTouch,
    NoHold,
    NoPart,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 4] = [
        RewardVariant::FullTouch,
        RewardVariant::NoTouch,
        RewardVariant::NoHold,
        RewardVariant::NoPart,
    ];
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTarget {
    pub hold_value: Option<f64>,
    pub push_value: Option<f64>,
    #[serde(skip)]
    pub dense_push: Option<ScalarMap>,
    #[serde(skip)]
    pub dense_zero_mask: Option<Mask>,
    pub hold_pixel_zero_on_push: bool,
}

#[derive(Debug, Clone)]
pub struct StepContext {
    pub flow_present: bool,
    pub touch: TouchReading,
    pub case: UpdateCase,
    pub flow_norm_map: ScalarMap,
    pub hold_pixel: Option<Pixel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PartOutcome {
    New,
    Existing,
    Entangled,
}

fn part_outcome(case: UpdateCase) -> Option<PartOutcome> {
    match case {
        UpdateCase::NoMovement => None,
        UpdateCase::NewPart | UpdateCase::SplitNewPart => Some(PartOutcome::New),
        UpdateCase::ExistingPart => Some(PartOutcome::Existing),
        UpdateCase::EntangledParts | UpdateCase::FullMemoryFallback => Some(PartOutcome::Entangled),
    }
}

/// Dense push map: flow norm scaled so its peak equals `scale`, zero at the hold pixel.
fn dense_push(flow_norm: &ScalarMap, scale: f64, hold: Option<Pixel>) -> Option<ScalarMap> {
    let mut norm = flow_norm.clone();
    if let Some(h) = hold {
        norm.set(h, 0.0);
    }
    let max = norm.max();
    if max <= FLOW_EPSILON {
        return None;
    }
    Some(ScalarMap::from_fn(|p| scale * norm.get(p) / max))
}

fn still_pixels(flow_norm: &ScalarMap) -> Mask {
    Mask::from_fn(|p| flow_norm.get(p) <= FLOW_EPSILON)
}

pub fn compute_reward(ctx: &StepContext, variant: RewardVariant) -> Result<RewardTarget> {
    let part = part_outcome(ctx.case);
    if ctx.flow_present != part.is_some() {
        return Err(Error::InconsistentContext(format!(
            "flow_present={} with case {:?}",
            ctx.flow_present, ctx.case
        )));
    }
    let touch = ctx.touch.shear;
    let mut target = RewardTarget::default();
    let dense = |scale| dense_push(&ctx.flow_norm_map, scale, ctx.hold_pixel);

    match (part, variant) {
        (None, _) => target.push_value = Some(0.0),
        (Some(_), RewardVariant::FullTouch | RewardVariant::NoPart) if !touch => {
            target.hold_value = Some(0.0);
            target.dense_zero_mask = Some(still_pixels(&ctx.flow_norm_map));
        }
        (Some(p), RewardVariant::NoHold) => {
            let v = match p {
                PartOutcome::New => 1.0,
                PartOutcome::Existing => 0.5,
                PartOutcome::Entangled => 0.0,
            };
            target.push_value = Some(v);
            if v > 0.0 {
                target.dense_push = dense(v);
            }
        }
        (Some(p), _) => {
            let p = if variant == RewardVariant::NoPart { PartOutcome::New } else { p };
            match p {
                PartOutcome::Entangled => target.hold_value = Some(0.0),
                PartOutcome::New | PartOutcome::Existing => {
                    let v = if p == PartOutcome::New { 1.0 } else { 0.5 };
                    target.hold_value = Some(v);
                    target.push_value = Some(v);
                    target.dense_push = dense(v);
                }
            }
        }
    }
    if variant == RewardVariant::NoHold {
        target.hold_value = None;
    }
    target.hold_pixel_zero_on_push = target.push_value.is_some() && ctx.hold_pixel.is_some();
    Ok(target)
}
