//! Deterministic quasi-static planar environment.
//!
//! A step resolves one hold + push action as an equilibrium displacement:
//! no velocities survive between steps. Holding one link and pushing another
//! rotates the pushed side of the chain about the joint between them; pushing
//! without a hold slides the whole object with only a little articulation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::assets::{generate_background, inside_frame, ObjectSpec};
use crate::error::{Error, Result};
use crate::geom::{Direction, Pixel, Pose2, Vec2};
use crate::grid::{LabelImage, RgbImage, ScalarMap};
use crate::{FLOW_EPSILON, PIXELS};

/// A pixel contacts a link when its center is within this distance of the footprint.
pub const CONTACT_RADIUS: f64 = 1.5;
/// Push force magnitude.
pub const PUSH_FORCE: f64 = 1.0;
/// Articulation gain, rad per unit torque per pixel of `sqrt(moved area)`.
pub const JOINT_GAIN: f64 = 0.35;
/// Torques below this leave a held object still and an unheld chain rigid.
pub const STATIC_TORQUE: f64 = 0.5;
/// Largest rotation a single step can apply to a joint or a held body.
pub const MAX_STEP_ROTATION: f64 = PI / 6.0;
/// Translation of an unheld object per unit force, in pixels.
pub const TRANSLATION_GAIN: f64 = 6.0;
/// Rotation of an unheld object per unit torque about its centroid, in rad.
pub const ROTATION_GAIN: f64 = 0.01;
/// Motion is scaled back so no link comes closer than this to the frame edge.
pub const HARD_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub spec: ObjectSpec,
    pub base_pose: Pose2,
    pub joint_angles: Vec<f64>,
}

impl WorldState {
    pub fn link_poses(&self) -> Vec<Pose2> {
        self.spec.link_poses(&self.base_pose, &self.joint_angles)
    }

    pub fn link_count(&self) -> usize {
        self.spec.links.len()
    }

    /// World position of joint `j`'s anchor.
    pub fn joint_anchor(&self, j: usize) -> Vec2 {
        let poses = self.link_poses();
        let joint = &self.spec.joints[j];
        poses[joint.parent_index].apply(joint.parent_anchor)
    }

    /// Area-weighted centroid of the link centers.
    pub fn centroid(&self) -> Vec2 {
        let poses = self.link_poses();
        let mut acc = Vec2::ZERO;
        let mut total = 0.0;
        for (link, pose) in self.spec.links.iter().zip(&poses) {
            acc = acc + pose.translation() * link.area();
            total += link.area();
        }
        acc * (1.0 / total)
    }

    /// Link whose footprint the pixel touches. Links containing the pixel
    /// center win over links merely within the contact radius; among equals
    /// the topmost (highest index) link wins, matching the render order.
    pub fn contact_link(&self, pixel: Pixel) -> Option<usize> {
        let p = pixel.center();
        let poses = self.link_poses();
        let local = |i: usize| poses[i].inverse().apply(p);
        let n = self.link_count();
        (0..n)
            .rev()
            .find(|&i| self.spec.links[i].contains_local(local(i)))
            .or_else(|| {
                (0..n)
                    .rev()
                    .find(|&i| self.spec.links[i].within_local(local(i), CONTACT_RADIUS))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub hold: Option<Pixel>,
    pub push: Pixel,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TouchReading {
    pub hold_contact: bool,
    pub push_contact: bool,
    pub shear: bool,
}

impl TouchReading {
    pub fn bits(&self) -> [u8; 3] {
        [self.hold_contact, self.push_contact, self.shear].map(u8::from)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    pub rgb: RgbImage,
}

/// Ground-truth part labels: 0 background, `i + 1` for link `i`.
pub type PartLabelImage = LabelImage;

/// Dense flow between two frames, `(dx, dy)` per pixel in world axes.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub forward: Vec<[f32; 2]>,
    pub backward: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn zeros() -> Self {
        FlowField {
            forward: vec![[0.0; 2]; PIXELS],
            backward: vec![[0.0; 2]; PIXELS],
        }
    }

    pub fn forward_at(&self, p: Pixel) -> [f32; 2] {
        self.forward[p.index()]
    }

    pub fn backward_at(&self, p: Pixel) -> [f32; 2] {
        self.backward[p.index()]
    }

    pub fn forward_norm(&self) -> ScalarMap {
        ScalarMap::from_fn(|p| flow_norm(self.forward_at(p)))
    }

    pub fn backward_norm(&self) -> ScalarMap {
        ScalarMap::from_fn(|p| flow_norm(self.backward_at(p)))
    }

    /// `‖F_bwd(q) + F_fwd(p)‖` with `q` the pixel nearest `p + F_fwd(p)`.
    /// `None` when `p` is background or its target is occluded or off frame.
    pub fn round_trip_error(
        &self,
        p: Pixel,
        labels_t: &PartLabelImage,
        labels_t1: &PartLabelImage,
    ) -> Option<f64> {
        let label = labels_t.get(p);
        if label == 0 {
            return None;
        }
        let f = self.forward_at(p);
        let target = p.center() + Vec2::new(f64::from(f[0]), f64::from(f[1]));
        let q = Pixel::nearest(target)?;
        if labels_t1.get(q) != label {
            return None;
        }
        let b = self.backward_at(q);
        Some((f64::from(b[0]) + f64::from(f[0])).hypot(f64::from(b[1]) + f64::from(f[1])))
    }
}

pub fn flow_norm(v: [f32; 2]) -> f64 {
    f64::from(v[0]).hypot(f64::from(v[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub moved_pixel_count: usize,
    /// World-frame transform of each link across the step.
    pub per_link_transform: Vec<Pose2>,
    pub clamped: bool,
}

impl StepOutcome {
    pub fn moved_links(&self) -> Vec<usize> {
        self.per_link_transform
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.is_identity())
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn render_labels(state: &WorldState) -> PartLabelImage {
    let poses = state.link_poses();
    let inverses: Vec<Pose2> = poses.iter().map(Pose2::inverse).collect();
    let mut labels = LabelImage::default();
    for (i, (link, pose)) in state.spec.links.iter().zip(&poses).enumerate() {
        let (hx, hy) = link.bbox_half_widths(pose.theta);
        let r0 = (pose.y - hy).floor().max(0.0) as usize;
        let r1 = ((pose.y + hy).ceil().max(-1.0) as i64).min(crate::IMAGE_SIZE as i64 - 1);
        let c0 = (pose.x - hx).floor().max(0.0) as usize;
        let c1 = ((pose.x + hx).ceil().max(-1.0) as i64).min(crate::IMAGE_SIZE as i64 - 1);
        if r1 < 0 || c1 < 0 {
            continue;
        }
        for r in r0..=r1 as usize {
            for c in c0..=c1 as usize {
                let px = Pixel::new(r, c);
                if link.contains_local(inverses[i].apply(px.center())) {
                    labels.set(px, i as u8 + 1);
                }
            }
        }
    }
    labels
}

/// Hard-edged rendering over the background texture; later links are drawn
/// over earlier ones, and the label image records the same layering.
pub fn render(state: &WorldState, background_id: u64) -> (Observation, PartLabelImage) {
    let labels = render_labels(state);
    let mut rgb = generate_background(background_id);
    let colors: Vec<[u8; 3]> = state.spec.links.iter().map(|l| l.rgb8()).collect();
    for i in 0..PIXELS {
        let p = Pixel::from_index(i);
        let l = labels.get(p);
        if l > 0 {
            rgb.set(p, colors[usize::from(l) - 1]);
        }
    }
    (Observation { rgb }, labels)
}

/// Which side of a joint moves when it articulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// Links `joint + 1 ..`; the joint angle grows with the rotation.
    Child,
    /// Links `..= joint`; the base rotates and the joint angle shrinks.
    Parent,
}

#[derive(Debug, Clone, Copy)]
struct Articulation {
    joint: usize,
    side: Side,
    pivot: Vec2,
    angle: f64,
}

#[derive(Debug, Clone, Copy)]
struct RigidMotion {
    pivot: Vec2,
    angle: f64,
    translation: Vec2,
}

#[derive(Debug, Clone, Copy, Default)]
struct Motion {
    articulation: Option<Articulation>,
    rigid: Option<RigidMotion>,
}

impl Motion {
    fn is_none(&self) -> bool {
        self.articulation.is_none() && self.rigid.is_none()
    }

    /// State after applying a fraction `s ∈ [0, 1]` of the motion.
    fn apply(&self, state: &WorldState, s: f64) -> WorldState {
        let mut next = state.clone();
        if let Some(a) = self.articulation {
            match a.side {
                Side::Child => next.joint_angles[a.joint] += s * a.angle,
                Side::Parent => {
                    next.base_pose = Pose2::rotation_about(a.pivot, s * a.angle).compose(&next.base_pose);
                    next.joint_angles[a.joint] -= s * a.angle;
                }
            }
            let joint = &next.spec.joints[a.joint];
            next.joint_angles[a.joint] = joint.clamp(next.joint_angles[a.joint]);
        }
        if let Some(r) = self.rigid {
            let rot = Pose2::rotation_about(r.pivot, s * r.angle);
            let moved = rot.compose(&next.base_pose);
            let t = r.translation * s;
            next.base_pose = Pose2::new(moved.x + t.x, moved.y + t.y, moved.theta);
        }
        next
    }
}

fn clamp_rotation(angle: f64) -> f64 {
    angle.clamp(-MAX_STEP_ROTATION, MAX_STEP_ROTATION)
}

/// Rotation of `side` about `joint` by `angle`, limited by the joint range.
fn articulation(state: &WorldState, joint: usize, side: Side, angle: f64) -> Articulation {
    let q = state.joint_angles[joint];
    let (lo, hi) = state.spec.joints[joint].limits;
    let angle = match side {
        Side::Child => angle.clamp(lo - q, hi - q),
        Side::Parent => angle.clamp(q - hi, q - lo),
    };
    Articulation {
        joint,
        side,
        pivot: state.joint_anchor(joint),
        angle,
    }
}

fn side_area(state: &WorldState, joint: usize, side: Side) -> f64 {
    let links = &state.spec.links;
    match side {
        Side::Child => links[joint + 1..].iter().map(|l| l.area()).sum(),
        Side::Parent => links[..=joint].iter().map(|l| l.area()).sum(),
    }
}

fn resolve_motion(state: &WorldState, action: &Action, hold: Option<usize>, push: Option<usize>) -> Motion {
    let Some(pushed) = push else {
        return Motion::default();
    };
    let force = action.direction.unit() * PUSH_FORCE;
    let push_point = action.push.center();
    match (hold, action.hold) {
        (Some(held), Some(hold_px)) if held == pushed => {
            let torque = (push_point - hold_px.center()).cross(force);
            let angle = clamp_rotation(JOINT_GAIN * torque / state.spec.total_area().sqrt());
            Motion {
                articulation: None,
                rigid: Some(RigidMotion {
                    pivot: hold_px.center(),
                    angle,
                    translation: Vec2::ZERO,
                }),
            }
        }
        (Some(held), _) => {
            // Cut at the joint next to the pushed link on the path to the held one.
            let (joint, side) = if pushed > held {
                (pushed - 1, Side::Child)
            } else {
                (pushed, Side::Parent)
            };
            let torque = (push_point - state.joint_anchor(joint)).cross(force);
            if torque.abs() < STATIC_TORQUE {
                return Motion::default();
            }
            let angle = clamp_rotation(JOINT_GAIN * torque / side_area(state, joint, side).sqrt());
            Motion {
                articulation: Some(articulation(state, joint, side, angle)),
                rigid: None,
            }
        }
        (None, _) => {
            let centroid = state.centroid();
            let com_torque = (push_point - centroid).cross(force);
            let (joint, side) = if pushed > 0 {
                (pushed - 1, Side::Child)
            } else {
                (0, Side::Parent)
            };
            let joint_torque = (push_point - state.joint_anchor(joint)).cross(force);
            let (articulated, body_share) = if joint_torque.abs() < STATIC_TORQUE {
                (None, 1.0)
            } else {
                let angle = clamp_rotation(0.5 * ROTATION_GAIN * joint_torque);
                (Some(articulation(state, joint, side, angle)), 0.5)
            };
            Motion {
                articulation: articulated,
                rigid: Some(RigidMotion {
                    pivot: centroid,
                    angle: clamp_rotation(body_share * ROTATION_GAIN * com_torque),
                    translation: force * TRANSLATION_GAIN,
                }),
            }
        }
    }
}

/// Largest fraction of `motion` that keeps the object inside the hard margin.
fn containment_fraction(state: &WorldState, motion: &Motion) -> f64 {
    let fits = |s: f64| {
        let next = motion.apply(state, s);
        inside_frame(&next.spec, &next.link_poses(), HARD_MARGIN)
    };
    if fits(1.0) {
        return 1.0;
    }
    if !fits(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Per-link world transforms `P_i(t+1) ∘ P_i(t)⁻¹`; numerically negligible
/// deltas are snapped to the identity.
pub fn link_deltas(before: &WorldState, after: &WorldState) -> Vec<Pose2> {
    before
        .link_poses()
        .iter()
        .zip(after.link_poses())
        .map(|(p0, p1)| {
            let d = p1.compose(&p0.inverse());
            if d.x.abs() < 1e-9 && d.y.abs() < 1e-9 && d.theta.abs() < 1e-12 {
                Pose2::IDENTITY
            } else {
                d
            }
        })
        .collect()
}

fn displacement(delta: &Pose2, p: Pixel) -> [f32; 2] {
    if delta.is_identity() {
        return [0.0; 2];
    }
    let c = p.center();
    let d = delta.apply(c) - c;
    [d.x as f32, d.y as f32]
}

fn forward_flow(deltas: &[Pose2], labels_t: &PartLabelImage) -> Vec<[f32; 2]> {
    (0..PIXELS)
        .map(|i| {
            let p = Pixel::from_index(i);
            match labels_t.get(p) {
                0 => [0.0; 2],
                l => displacement(&deltas[usize::from(l) - 1], p),
            }
        })
        .collect()
}

/// Resolve one action. Pure in `(state, action)`.
pub fn step(state: &WorldState, action: &Action) -> (WorldState, TouchReading, StepOutcome) {
    let hold = action.hold.and_then(|p| state.contact_link(p));
    let push = state.contact_link(action.push);
    let touch = TouchReading {
        hold_contact: hold.is_some(),
        push_contact: push.is_some(),
        shear: hold.is_some() && push.is_some(),
    };
    let motion = resolve_motion(state, action, hold, push);
    let (next, clamped) = if motion.is_none() {
        (state.clone(), false)
    } else {
        let s = containment_fraction(state, &motion);
        (motion.apply(state, s), s < 1.0)
    };
    let deltas = link_deltas(state, &next);
    let labels_t = render_labels(state);
    let moved_pixel_count = forward_flow(&deltas, &labels_t)
        .iter()
        .filter(|&&v| flow_norm(v) > FLOW_EPSILON)
        .count();
    let outcome = StepOutcome {
        moved_pixel_count,
        per_link_transform: deltas,
        clamped,
    };
    (next, touch, outcome)
}

/// Analytic forward and backward flow between two states of one object.
pub fn compute_flow(
    state_t: &WorldState,
    state_t1: &WorldState,
    labels_t: &PartLabelImage,
    labels_t1: &PartLabelImage,
) -> Result<FlowField> {
    if state_t.spec != state_t1.spec || state_t.joint_angles.len() != state_t1.joint_angles.len() {
        return Err(Error::IncompatibleStates);
    }
    let deltas = link_deltas(state_t, state_t1);
    let inverses: Vec<Pose2> = deltas
        .iter()
        .map(|d| if d.is_identity() { *d } else { d.inverse() })
        .collect();
    Ok(FlowField {
        forward: forward_flow(&deltas, labels_t),
        backward: forward_flow(&inverses, labels_t1),
    })
}



#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{generate_multilink, sample_instance_init, JOINT_LIMIT};

    use super::tests_support::two_bar as two_bar_state;

    fn dir(d: u8) -> Direction {
        Direction::new(d).unwrap()
    }

    #[test]
    fn render_is_deterministic_and_covers_links() {
        let s = two_bar_state();
        let (o1, l1) = render(&s, 4);
        let (o2, l2) = render(&s, 4);
        assert_eq!(o1, o2);
        assert_eq!(l1, l2);
        assert!(l1.count(1) > 0 && l1.count(2) > 0);
    }

    #[test]
    fn overlap_goes_to_the_higher_link() {
        let s = two_bar_state();
        let labels = render_labels(&s);
        // The hinge at x = 40 lies inside both bars.
        let hinge = Pixel::new(45, 40);
        let poses = s.link_poses();
        for (i, pose) in poses.iter().enumerate() {
            assert!(s.spec.links[i].contains_local(pose.inverse().apply(hinge.center())));
        }
        assert_eq!(labels.get(hinge), 2);
    }

    #[test]
    fn background_push_changes_nothing() {
        let s = two_bar_state();
        let action = Action {
            hold: Some(Pixel::new(45, 25)),
            push: Pixel::new(5, 5),
            direction: dir(0),
        };
        let (next, touch, outcome) = step(&s, &action);
        assert_eq!(next, s);
        assert_eq!(outcome.moved_pixel_count, 0);
        assert_eq!(touch.bits(), [1, 0, 0]);
    }

    #[test]
    fn held_articulation_moves_only_the_pushed_side() {
        let s = two_bar_state();
        // Hold link 0, push the far end of link 1 downwards (direction 6):
        // r = (+x), F = (+y) gives a positive torque.
        let action = Action {
            hold: Some(Pixel::new(45, 22)),
            push: Pixel::new(45, 60),
            direction: dir(6),
        };
        let (next, touch, outcome) = step(&s, &action);
        assert_eq!(touch.bits(), [1, 1, 1]);
        assert!(next.joint_angles[0] > 0.0);
        assert_eq!(next.base_pose, s.base_pose);
        assert!(outcome.per_link_transform[0].is_identity());
        assert!(!outcome.per_link_transform[1].is_identity());
        // Independent recomputation: link 1 rotates about the anchor at (40, 45).
        let anchor = Vec2::new(40.0, 45.0);
        let dq = next.joint_angles[0];
        let expected = Pose2::rotation_about(anchor, dq).compose(&s.link_poses()[1]);
        let got = next.link_poses()[1];
        assert!((expected.x - got.x).abs() < 1e-9 && (expected.y - got.y).abs() < 1e-9);
        let labels = render_labels(&s);
        // The pixel centered on the hinge does not move.
        assert_eq!(outcome.moved_pixel_count, labels.count(2) - 1);
        // Opposite push flips the sign.
        let (back, _, _) = step(&s, &Action { direction: dir(2), ..action });
        assert!(back.joint_angles[0] < 0.0);
    }

    #[test]
    fn pushing_the_parent_side_keeps_the_held_child_fixed() {
        let s = two_bar_state();
        let action = Action {
            hold: Some(Pixel::new(45, 50)),
            push: Pixel::new(45, 20),
            direction: dir(2),
        };
        let (next, _, outcome) = step(&s, &action);
        assert!(outcome.per_link_transform[1].is_identity());
        assert!(!outcome.per_link_transform[0].is_identity());
        let hold = action.hold.unwrap().center();
        let before = s.link_poses()[1].inverse().apply(hold);
        let after = next.link_poses()[1].apply(before);
        assert!((after - hold).norm() <= 0.5);
    }

    #[test]
    fn free_push_moves_the_object_rigidly_when_torque_is_small() {
        let s = two_bar_state();
        // Push link 1 exactly through its joint anchor row: zero joint torque.
        let action = Action {
            hold: Some(Pixel::new(80, 80)),
            push: Pixel::new(45, 50),
            direction: dir(0),
        };
        let (_, touch, outcome) = step(&s, &action);
        assert_eq!(touch.bits(), [0, 1, 0]);
        let d = outcome.per_link_transform;
        assert!((d[0].x - d[1].x).abs() < 1e-9 && (d[0].y - d[1].y).abs() < 1e-9);
        assert!((d[0].theta - d[1].theta).abs() < 1e-12);
        assert!(d[0].x > 0.0);
    }

    #[test]
    fn free_push_is_dominated_by_translation() {
        let s = two_bar_state();
        let action = Action {
            hold: None,
            push: Pixel::new(45, 58),
            direction: dir(6),
        };
        let (next, touch, outcome) = step(&s, &action);
        assert!(!touch.shear);
        assert!(outcome.per_link_transform.iter().all(|d| !d.is_identity()));
        // articulation is small relative to a held push
        assert!(next.joint_angles[0].abs() < 0.1);
    }

    #[test]
    fn containment_scales_motion_back() {
        let mut s = two_bar_state();
        s.base_pose = Pose2::new(14.0, 45.0, 0.0);
        let action = Action {
            hold: None,
            push: Pixel::new(45, 14),
            direction: dir(4),
        };
        let (next, _, outcome) = step(&s, &action);
        assert!(outcome.clamped);
        assert!(inside_frame(&next.spec, &next.link_poses(), HARD_MARGIN));
    }

    #[test]
    fn joint_limits_hold_at_the_boundary() {
        let mut s = two_bar_state();
        s.joint_angles[0] = JOINT_LIMIT;
        let action = Action {
            hold: Some(Pixel::new(45, 22)),
            push: Pixel::new(45, 60),
            direction: dir(6),
        };
        let (next, _, outcome) = step(&s, &action);
        assert_eq!(next.joint_angles[0], JOINT_LIMIT);
        assert_eq!(outcome.moved_pixel_count, 0);
    }

    #[test]
    fn flow_of_identical_states_is_zero() {
        let s = two_bar_state();
        let l = render_labels(&s);
        let f = compute_flow(&s, &s, &l, &l).unwrap();
        assert!(f.forward.iter().chain(&f.backward).all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn translation_flow_is_exact() {
        let s = two_bar_state();
        let mut t = s.clone();
        t.base_pose.x += 2.0;
        let (l0, l1) = (render_labels(&s), render_labels(&t));
        let f = compute_flow(&s, &t, &l0, &l1).unwrap();
        for i in 0..PIXELS {
            let p = Pixel::from_index(i);
            let expected = if l0.get(p) > 0 { [2.0, 0.0] } else { [0.0, 0.0] };
            assert_eq!(f.forward_at(p), expected);
        }
    }

    #[test]
    fn rotation_flow_grows_linearly_with_radius() {
        let s = two_bar_state();
        let mut t = s.clone();
        let dq = 0.2;
        t.joint_angles[0] = dq;
        let (l0, l1) = (render_labels(&s), render_labels(&t));
        let f = compute_flow(&s, &t, &l0, &l1).unwrap();
        let anchor = Vec2::new(40.0, 45.0);
        // least-squares slope through the origin of |flow| against radius
        let (mut num, mut den) = (0.0, 0.0);
        for p in l0.mask_of(2).pixels() {
            let r = (p.center() - anchor).norm();
            num += r * flow_norm(f.forward_at(p));
            den += r * r;
        }
        let slope = num / den;
        assert!((slope - 2.0 * (dq / 2.0).sin()).abs() < 1e-5, "slope {slope}");
        assert!(l0.mask_of(1).pixels().all(|p| f.forward_at(p) == [0.0, 0.0]));
    }

    #[test]
    fn mismatched_specs_are_rejected() {
        let s = two_bar_state();
        let other = WorldState {
            spec: generate_multilink(1, 2).unwrap(),
            ..s.clone()
        };
        let l = render_labels(&s);
        assert!(matches!(compute_flow(&s, &other, &l, &l), Err(Error::IncompatibleStates)));
    }

    #[test]
    fn generated_instances_show_every_link() {
        for seed in 0..20 {
            let spec = generate_multilink(seed, 3).unwrap();
            let init = sample_instance_init(&spec, seed).unwrap();
            let labels = render_labels(&init.world_state());
            for l in 1..=3 {
                assert!(labels.count(l) >= 20);
            }
        }
    }
}
