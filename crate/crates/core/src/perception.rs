//! Motion masks from flow, spatial action encodings and a mask corruption
//! model standing in for an imperfect learned mask predictor.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{Direction, Pixel};
use crate::grid::{Mask, ScalarMap};
use crate::rng::{derive, rng};
use crate::sim::{flow_norm, FlowField};
use crate::FLOW_EPSILON;

/// Moved pixels aligned to frame `t` and to frame `t + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MotionMaskPair {
    pub m_t: Mask,
    pub m_t1: Mask,
}

/// Number of Gaussians in the push trail, including the one at the push pixel.
pub const TRAIL_LENGTH: usize = 5;
/// Spacing between trail Gaussians, in pixels.
pub const TRAIL_STEP: f64 = 3.0;
/// Peak ratio between consecutive trail Gaussians.
pub const TRAIL_DECAY: f64 = 0.8;
/// Fragments removed by corruption are at most this fraction of the mask.
pub const MAX_FRAGMENT_FRACTION: f64 = 0.15;

/// Threshold flow at (numerically) zero.
pub fn motion_masks_from_flow(flow: &FlowField) -> MotionMaskPair {
    MotionMaskPair {
        m_t: Mask::from_fn(|p| flow_norm(flow.forward_at(p)) > FLOW_EPSILON),
        m_t1: Mask::from_fn(|p| flow_norm(flow.backward_at(p)) > FLOW_EPSILON),
    }
}

fn gaussian_at(center: (f64, f64), peak: f64, p: Pixel) -> f64 {
    let dr = p.row as f64 - center.0;
    let dc = p.col as f64 - center.1;
    peak * (-(dr * dr + dc * dc) / 2.0).exp()
}

/// Peak-valued isotropic Gaussian (σ = 1 px) centered at the hold pixel.
pub fn encode_hold(pixel: Pixel) -> ScalarMap {
    let c = (pixel.row as f64, pixel.col as f64);
    ScalarMap::from_fn(|p| gaussian_at(c, 1.0, p))
}

/// Push pixel Gaussian followed by a trail of weaker Gaussians along the
/// push direction, combined by pointwise max.
pub fn encode_push(pixel: Pixel, direction: Direction) -> ScalarMap {
    let u = direction.unit();
    let size = crate::IMAGE_SIZE as f64;
    let centers: Vec<((f64, f64), f64)> = (0..TRAIL_LENGTH)
        .map(|k| {
            let off = u * (k as f64 * TRAIL_STEP);
            ((pixel.row as f64 + off.y, pixel.col as f64 + off.x), TRAIL_DECAY.powi(k as i32))
        })
        .filter(|((r, c), _)| (-0.5..size - 0.5).contains(r) && (-0.5..size - 0.5).contains(c))
        .collect();
    ScalarMap::from_fn(|p| {
        centers
            .iter()
            .map(|&(c, peak)| gaussian_at(c, peak, p))
            .fold(0.0, f64::max)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionModel {
    /// Chance of a 1-px erosion or dilation of the whole mask.
    pub boundary_erode_dilate_prob: f64,
    /// Given a boundary change, chance it is a dilation rather than an erosion.
    pub dilate_share: f64,
    /// Chance of cutting out one connected fragment.
    pub drop_fragment_prob: f64,
    /// Chance of bleeding into the 1-px ring around the mask.
    pub bleed_prob: f64,
    pub seed: u64,
}

impl Default for CorruptionModel {
    fn default() -> Self {
        CorruptionModel {
            boundary_erode_dilate_prob: 0.5,
            dilate_share: 0.5,
            drop_fragment_prob: 0.35,
            bleed_prob: 0.35,
            seed: 0,
        }
    }
}

impl CorruptionModel {
    pub fn identity() -> Self {
        CorruptionModel {
            boundary_erode_dilate_prob: 0.0,
            dilate_share: 0.0,
            drop_fragment_prob: 0.0,
            bleed_prob: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        CorruptionModel { seed, ..self }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.boundary_erode_dilate_prob,
            self.dilate_share,
            self.drop_fragment_prob,
            self.bleed_prob,
        ]
        .iter()
        .all(|p| (0.0..=1.0).contains(p))
    }
}

/// Cut a 4-connected blob of at most 15% of the area, grown from a random seed pixel.
fn drop_fragment(mask: &Mask, rng: &mut impl Rng) -> Mask {
    let pixels: Vec<Pixel> = mask.pixels().collect();
    let budget = (pixels.len() as f64 * MAX_FRAGMENT_FRACTION).floor() as usize;
    if budget == 0 {
        return mask.clone();
    }
    let start = pixels[rng.gen_range(0..pixels.len())];
    let mut out = mask.clone();
    let mut queue = VecDeque::from([start]);
    out.set(start, false);
    let mut removed = 1;
    while let Some(p) = queue.pop_front() {
        for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            if removed >= budget {
                return out;
            }
            let (r, c) = (p.row as i64 + dr, p.col as i64 + dc);
            if out.get_signed(r, c) {
                let q = Pixel::new(r as usize, c as usize);
                out.set(q, false);
                removed += 1;
                queue.push_back(q);
            }
        }
    }
    out
}

fn corrupt_one(mask: &Mask, model: &CorruptionModel, seed: u64) -> Mask {
    let mut rng = rng(seed);
    // Draw every decision up front so the stream layout is fixed.
    let boundary = rng.gen_bool(model.boundary_erode_dilate_prob);
    let dilate = rng.gen_bool(model.dilate_share);
    let drop = rng.gen_bool(model.drop_fragment_prob);
    let bleed = rng.gen_bool(model.bleed_prob);
    let mut out = mask.clone();
    if out.is_empty() {
        return out;
    }
    if boundary {
        out = if dilate { out.dilate() } else { out.erode() };
    }
    if drop && !out.is_empty() {
        out = drop_fragment(&out, &mut rng);
    }
    if bleed && !out.is_empty() {
        let ring: Vec<Pixel> = out.outer_border().pixels().collect();
        for p in ring {
            if rng.gen_bool(0.5) {
                out.set(p, true);
            }
        }
    }
    out
}

/// Apply the corruption model independently to both masks.
pub fn corrupt_masks(pair: &MotionMaskPair, model: &CorruptionModel) -> MotionMaskPair {
    MotionMaskPair {
        m_t: corrupt_one(&pair.m_t, model, derive(model.seed, 0)),
        m_t1: corrupt_one(&pair.m_t1, model, derive(model.seed, 1)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim;
    use crate::PIXELS;
    use proptest::prelude::*;

    #[test]
    fn zero_flow_gives_empty_masks() {
        let m = motion_masks_from_flow(&FlowField::zeros());
        assert!(m.m_t.is_empty() && m.m_t1.is_empty());
    }

    #[test]
    fn hold_encoding_values() {
        let h = encode_hold(Pixel::new(45, 45));
        assert_eq!(h.get(Pixel::new(45, 45)), 1.0);
        for p in [(44, 45), (46, 45), (45, 44), (45, 46)] {
            assert!((h.get(Pixel::new(p.0, p.1)) - (-0.5f64).exp()).abs() < 1e-12);
        }
        assert!((h.get(Pixel::new(45, 46)) - 0.6065).abs() < 1e-4);
        let corner = encode_hold(Pixel::new(0, 0));
        assert_eq!(corner.get(Pixel::new(0, 0)), 1.0);
        assert_eq!(corner.argmax(), Pixel::new(0, 0));
        assert_eq!(encode_hold(Pixel::new(3, 7)), encode_hold(Pixel::new(3, 7)));
    }

    #[test]
    fn push_trail_to_the_right() {
        let m = encode_push(Pixel::new(45, 45), Direction::new(0).unwrap());
        let row: Vec<f64> = (0..90).map(|c| m.get(Pixel::new(45, c))).collect();
        let mut prev = f64::INFINITY;
        for (k, col) in [45, 48, 51, 54, 57].into_iter().enumerate() {
            let v = row[col];
            assert!((v - 0.8f64.powi(k as i32)).abs() < 1e-9, "col {col}: {v}");
            assert!(v > row[col - 1] && v > row[col + 1], "local peak at {col}");
            assert!(v < prev);
            prev = v;
        }
        assert!(row[60] < row[57]);
    }

    #[test]
    fn trail_leaving_the_frame_is_truncated() {
        let m = encode_push(Pixel::new(45, 86), Direction::new(0).unwrap());
        assert_eq!(m.get(Pixel::new(45, 86)), 1.0);
        assert!((m.get(Pixel::new(45, 89)) - 0.8).abs() < 1e-9);
    }

    #[test]
    fn opposite_directions_mirror() {
        let right = encode_push(Pixel::new(45, 45), Direction::new(0).unwrap());
        let left = encode_push(Pixel::new(45, 45), Direction::new(4).unwrap());
        for i in 0..PIXELS {
            let p = Pixel::from_index(i);
            if p.col >= 1 {
                let mirrored = Pixel::new(p.row, 90 - p.col);
                assert!((right.get(p) - left.get(mirrored)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corruption_identity_and_determinism() {
        let pair = MotionMaskPair {
            m_t: Mask::rect(10, 10, 30, 30),
            m_t1: Mask::rect(12, 10, 32, 30),
        };
        assert_eq!(corrupt_masks(&pair, &CorruptionModel::identity()), pair);
        let model = CorruptionModel {
            boundary_erode_dilate_prob: 1.0,
            drop_fragment_prob: 1.0,
            bleed_prob: 1.0,
            ..CorruptionModel::default()
        }
        .with_seed(9);
        assert_eq!(corrupt_masks(&pair, &model), corrupt_masks(&pair, &model));
        assert_ne!(corrupt_masks(&pair, &model), pair);
    }

    #[test]
    fn forced_erosion_of_three_by_three() {
        let sq = Mask::rect(40, 40, 43, 43);
        let pair = MotionMaskPair {
            m_t: sq.clone(),
            m_t1: sq,
        };
        let model = CorruptionModel {
            boundary_erode_dilate_prob: 1.0,
            dilate_share: 0.0,
            ..CorruptionModel::identity()
        };
        let out = corrupt_masks(&pair, &model);
        assert_eq!(out.m_t, Mask::from_pixels([Pixel::new(41, 41)]));
        assert_eq!(out.m_t1, out.m_t);
    }

    #[test]
    fn fragment_drop_is_bounded() {
        let m = Mask::rect(10, 10, 40, 40);
        let model = CorruptionModel {
            drop_fragment_prob: 1.0,
            ..CorruptionModel::identity()
        };
        let out = corrupt_masks(&MotionMaskPair { m_t: m.clone(), m_t1: m.clone() }, &model);
        let removed = m.area() - out.m_t.area();
        assert!(removed > 0 && removed as f64 <= 0.15 * m.area() as f64);
        assert!(out.m_t.minus(&m).is_empty());
    }

    #[test]
    fn oracle_masks_match_moved_link_footprints() {
        let s = crate::sim::tests_support::two_bar();
        let mut t = s.clone();
        t.joint_angles[0] = 0.3;
        let (l0, l1) = (sim::render_labels(&s), sim::render_labels(&t));
        let flow = sim::compute_flow(&s, &t, &l0, &l1).unwrap();
        let masks = motion_masks_from_flow(&flow);
        // The hinge pixel sits exactly on the pivot and does not move.
        let pivot = Mask::from_pixels([Pixel::new(45, 40)]);
        assert_eq!(masks.m_t, l0.mask_of(2).minus(&pivot));
        assert_eq!(masks.m_t1, l1.mask_of(2).minus(&pivot));
        let mut shifted = s.clone();
        shifted.base_pose.x += 3.0;
        let l2 = sim::render_labels(&shifted);
        let flow = sim::compute_flow(&s, &shifted, &l0, &l2).unwrap();
        let masks = motion_masks_from_flow(&flow);
        assert_eq!(masks.m_t, l0.foreground());
        assert_eq!(masks.m_t1, l2.foreground());
    }

    proptest! {
        #[test]
        fn corruption_never_creates_mass_from_nothing(seed in any::<u64>(), a in 0.0..=1.0f64, b in 0.0..=1.0f64, c in 0.0..=1.0f64) {
            let model = CorruptionModel { boundary_erode_dilate_prob: a, dilate_share: 0.5, drop_fragment_prob: b, bleed_prob: c, seed };
            let out = corrupt_masks(&MotionMaskPair::default(), &model);
            prop_assert!(out.m_t.is_empty() && out.m_t1.is_empty());
        }

        #[test]
        fn encodings_are_translation_equivariant(r in 14usize..68, c in 14usize..68, dr in 0usize..8, dc in 0usize..8, d in 0u8..8) {
            let dir = Direction::new(d).unwrap();
            let a = encode_hold(Pixel::new(r, c));
            let b = encode_hold(Pixel::new(r + dr, c + dc));
            let pa = encode_push(Pixel::new(r, c), dir);
            let pb = encode_push(Pixel::new(r + dr, c + dc), dir);
            for rr in 2..80 {
                for cc in 2..80 {
                    let p = Pixel::new(rr, cc);
                    let q = Pixel::new(rr + dr, cc + dc);
                    prop_assert!((a.get(p) - b.get(q)).abs() < 1e-12);
                    prop_assert!((pa.get(p) - pb.get(q)).abs() < 1e-12);
                }
            }
        }
    }
}
