//! Action sources: uniform random, push-only random and a scripted oracle
//! that reads simulator ground truth.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{Direction, Pixel, Vec2};
use crate::memory::PartMemory;
use crate::rng::{derive, rng};
use crate::sim::{self, Action, Observation, PartLabelImage, TouchReading, WorldState};
use crate::{Error, Result, IMAGE_SIZE};

#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    pub observation: &'a Observation,
    pub memory: &'a PartMemory,
    pub step_index: usize,
    pub steps_total: usize,
    pub touch_prev: Option<TouchReading>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Random,
    NoHold,
    /// Oracle actions with corrupted motion masks.
    Oracle,
    /// Oracle actions with perfect motion masks.
    OracleMot,
    Remote,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::NoHold => "nohold",
            PolicyKind::Oracle => "oracle",
            PolicyKind::OracleMot => "oracle-mot",
            PolicyKind::Remote => "remote",
        }
    }
}

fn uniform_pixel(r: &mut impl Rng) -> Pixel {
    Pixel::new(r.gen_range(0..IMAGE_SIZE), r.gen_range(0..IMAGE_SIZE))
}

fn uniform_direction(r: &mut impl Rng) -> Direction {
    Direction::new(r.gen_range(0..Direction::COUNT)).expect("in range")
}

pub fn random_policy(input: &PolicyInput) -> Action {
    let mut r = rng(derive(input.rng_seed, input.step_index as u64));
    let hold = uniform_pixel(&mut r);
    let push = uniform_pixel(&mut r);
    Action {
        hold: Some(hold),
        push,
        direction: uniform_direction(&mut r),
    }
}

pub fn no_hold_random_policy(input: &PolicyInput) -> Action {
    let mut r = rng(derive(input.rng_seed, input.step_index as u64));
    let push = uniform_pixel(&mut r);
    Action {
        hold: None,
        push,
        direction: uniform_direction(&mut r),
    }
}

#[derive(Debug, Clone)]
pub struct OracleContext<'a> {
    pub world: &'a WorldState,
    pub labels: &'a PartLabelImage,
    /// Links moved by each previous step, oldest first.
    pub history: &'a [Vec<usize>],
}

impl OracleContext<'_> {
    /// Links that moved at least once and are separated from every other link
    /// by the motion history, in order of discovery.
    pub fn discovered(&self) -> Vec<usize> {
        let n = self.world.link_count();
        let signature = |l: usize| -> Vec<bool> { self.history.iter().map(|g| g.contains(&l)).collect() };
        let mut found: Vec<(usize, usize)> = Vec::new();
        for l in 0..n {
            let sig = signature(l);
            let Some(first) = (0..self.history.len()).find(|&t| {
                sig[..=t].iter().any(|&b| b) && (0..n).all(|o| o == l || signature(o)[..=t] != sig[..=t])
            }) else {
                continue;
            };
            found.push((first, l));
        }
        found.sort();
        found.into_iter().map(|(_, l)| l).collect()
    }
}

/// Links that move when holding `hold` and pushing `push` on a chain.
pub fn expected_moved(n: usize, hold: usize, push: usize) -> Vec<usize> {
    if push > hold {
        (push..n).collect()
    } else {
        (0..=push).collect()
    }
}

/// Joint between `push` and its neighbour toward `hold`.
fn cut_joint(hold: usize, push: usize) -> usize {
    if push > hold {
        push - 1
    } else {
        push
    }
}

/// Pick (hold link, push link) from ground truth and the motion history.
fn plan(ctx: &OracleContext) -> (usize, usize) {
    let n = ctx.world.link_count();
    let discovered = ctx.discovered();
    let is_found = |l: usize| discovered.contains(&l);
    if n == 2 {
        return match (0..n).find(|&l| !is_found(l)) {
            Some(p) => (1 - p, p),
            None => {
                let p = *discovered.last().expect("two links found");
                (1 - p, p)
            }
        };
    }

    let middle = 1;
    let visible = |l: usize| ctx.labels.count(l as u8 + 1);
    // Endpoint dragged along with the middle link on the first step.
    let paired = ctx
        .history
        .iter()
        .find(|g| g.len() == 2 && g.contains(&middle))
        .map(|g| g[0] + g[1] - middle);
    let small_end = paired.unwrap_or(if visible(n - 1) < visible(0) { n - 1 } else { 0 });
    let far_end = n - 1 - small_end;

    if discovered.len() == n {
        let p = *discovered.last().expect("non-empty");
        return if p == middle { (far_end, middle) } else { (middle, p) };
    }
    if !is_found(middle) && paired.is_none() {
        return (far_end, middle);
    }
    if !is_found(small_end) {
        return (middle, small_end);
    }
    if !is_found(far_end) {
        return (middle, far_end);
    }
    (far_end, middle)
}

/// Labeled pixel of `link` farthest from `anchor`; row-major order breaks ties.
fn farthest_pixel(labels: &PartLabelImage, link: usize, anchor: Vec2) -> Option<Pixel> {
    let mut best: Option<(f64, Pixel)> = None;
    for p in labels.mask_of(link as u8 + 1).pixels() {
        let d = (p.center() - anchor).norm();
        if best.map_or(true, |(bd, _)| d > bd) {
            best = Some((d, p));
        }
    }
    best.map(|b| b.1)
}

/// Scripted ground-truth action: hold one side of a joint, push the other
/// side far from the joint, in the direction with the most useful torque.
pub fn oracle_policy(ctx: &OracleContext) -> Result<Action> {
    let world = ctx.world;
    let n = world.link_count();
    if n < 2 {
        return Err(Error::DegenerateObject(n));
    }
    let (hold_link, push_link) = plan(ctx);
    let joint = cut_joint(hold_link, push_link);
    let anchor = world.joint_anchor(joint);
    let hold = farthest_pixel(ctx.labels, hold_link, anchor);
    let push = farthest_pixel(ctx.labels, push_link, anchor);
    let (Some(hold), Some(push)) = (hold, push) else {
        return Err(Error::DegenerateObject(n));
    };

    let q = world.joint_angles[joint];
    let (lo, hi) = world.spec.joints[joint].limits;
    // +1 when more range remains above the current angle.
    let roomy = if hi - q >= q - lo { 1.0 } else { -1.0 };
    let want = expected_moved(n, hold_link, push_link);
    let lever = push.center() - anchor;

    let mut best: Option<((u8, u8, f64), Action)> = None;
    for direction in Direction::all() {
        let action = Action {
            hold: Some(hold),
            push,
            direction,
        };
        let (next, _, outcome) = sim::step(world, &action);
        let moved = outcome.moved_links();
        let dq = next.joint_angles[joint] - q;
        let clean = (moved == want && dq != 0.0) as u8;
        let toward_room = (dq * roomy > 0.0) as u8;
        let torque = lever.cross(direction.unit()).abs();
        let key = (clean, toward_room, torque);
        let better = match &best {
            None => true,
            Some((k, _)) => key.0 > k.0 || (key.0 == k.0 && (key.1 > k.1 || (key.1 == k.1 && key.2 > k.2))),
        };
        if better {
            best = Some((key, action));
        }
    }
    Ok(best.expect("eight directions").1)
}
