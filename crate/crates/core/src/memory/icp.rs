//! Point-to-point ICP over pixel masks, SE(2) only.

use crate::error::{Error, Result};
use crate::geom::{Pose2, Vec2};
use crate::grid::Mask;
use crate::IMAGE_SIZE;

pub const MAX_ITERATIONS: usize = 60;
/// Stop once an iteration moves points by less than this (px).
pub const CONVERGENCE_TOL: f64 = 1e-4;

/// Exact nearest set pixel of a mask, by ring search around the query.
struct NearestPixel<'a> {
    mask: &'a Mask,
}

impl NearestPixel<'_> {
    fn query(&self, q: Vec2) -> Vec2 {
        let (r0, c0) = (q.y.round() as i64, q.x.round() as i64);
        let size = IMAGE_SIZE as i64;
        // Rings beyond this radius lie entirely outside the frame.
        let max_ring = [r0, c0, size - 1 - r0, size - 1 - c0]
            .iter()
            .map(|d| d.unsigned_abs() as i64)
            .max()
            .unwrap_or(0)
            + size;
        let mut best: Option<(f64, Vec2)> = None;
        for k in 0..=max_ring {
            for r in r0 - k..=r0 + k {
                let on_edge_row = r == r0 - k || r == r0 + k;
                let step = if on_edge_row { 1 } else { (2 * k).max(1) };
                let mut c = c0 - k;
                while c <= c0 + k {
                    if self.mask.get_signed(r, c) {
                        let p = Vec2::new(c as f64, r as f64);
                        let d = (p - q).norm();
                        if best.map_or(true, |(bd, _)| d < bd) {
                            best = Some((d, p));
                        }
                    }
                    c += step;
                }
            }
            if let Some((bd, p)) = best {
                // Every pixel in ring k + 1 is at least k + 0.5 away.
                if bd <= k as f64 + 0.5 {
                    return p;
                }
            }
        }
        best.map(|(_, p)| p).unwrap_or(q)
    }
}

fn points(mask: &Mask) -> Vec<Vec2> {
    mask.pixels().map(|p| p.center()).collect()
}

/// Pixels of `mask` with a neighbour outside it.
fn boundary(mask: &Mask) -> Mask {
    mask.minus(&mask.erode())
}

fn mean(points: &[Vec2]) -> Vec2 {
    let sum = points.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
    sum * (1.0 / points.len() as f64)
}

/// Closed-form least-squares rigid transform mapping `from[i]` onto `to[i]`.
pub fn fit_rigid(from: &[Vec2], to: &[Vec2]) -> Pose2 {
    let (ca, cb) = (mean(from), mean(to));
    let (mut sin_acc, mut cos_acc) = (0.0, 0.0);
    for (&a, &b) in from.iter().zip(to) {
        let (a, b) = (a - ca, b - cb);
        sin_acc += a.cross(b);
        cos_acc += a.dot(b);
    }
    let theta = sin_acc.atan2(cos_acc);
    let t = cb - ca.rotated(theta);
    Pose2::new(t.x, t.y, theta)
}

/// Run ICP from `init` until the transform settles. Returns the visited
/// transform with the smallest mean correspondence distance, and that distance.
fn refine(src_pts: &[Vec2], nn: &NearestPixel, init: Pose2) -> (Pose2, f64) {
    let mut transform = init;
    let mut targets = Vec::with_capacity(src_pts.len());
    let mut best = (init, f64::INFINITY);
    for _ in 0..MAX_ITERATIONS {
        targets.clear();
        let mut err = 0.0;
        for &p in src_pts {
            let moved = transform.apply(p);
            let q = nn.query(moved);
            err += (q - moved).norm();
            targets.push(q);
        }
        err /= src_pts.len() as f64;
        if err < best.1 {
            best = (transform, err);
        }
        let next = fit_rigid(src_pts, &targets);
        let step = (next.translation() - transform.translation()).norm() + (next.theta - transform.theta).abs() * 45.0;
        transform = next;
        if step < CONVERGENCE_TOL {
            break;
        }
    }
    best
}

const BLUR_SIGMA: f64 = 1.0;
const BLUR_RADIUS: i64 = 3;
/// Pattern search stops once every step is below this (px, or degrees for rotation).
const REFINE_TOL: f64 = 1e-3;

/// Mask blurred by a separable Gaussian, zero outside the frame.
struct Blurred(Vec<f64>);

impl Blurred {
    fn new(mask: &Mask) -> Self {
        let n = IMAGE_SIZE as i64;
        let kernel: Vec<f64> = (-BLUR_RADIUS..=BLUR_RADIUS)
            .map(|k| (-(k * k) as f64 / (2.0 * BLUR_SIGMA * BLUR_SIGMA)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        let at = |v: &[f64], r: i64, c: i64| if (0..n).contains(&r) && (0..n).contains(&c) { v[(r * n + c) as usize] } else { 0.0 };
        let src: Vec<f64> = mask.as_slice().iter().map(|&b| b as u8 as f64).collect();
        let mut rows = vec![0.0; src.len()];
        let mut out = vec![0.0; src.len()];
        for r in 0..n {
            for c in 0..n {
                rows[(r * n + c) as usize] = (-BLUR_RADIUS..=BLUR_RADIUS)
                    .zip(&kernel)
                    .map(|(k, w)| w * at(&src, r, c + k))
                    .sum::<f64>()
                    / total;
            }
        }
        for r in 0..n {
            for c in 0..n {
                out[(r * n + c) as usize] = (-BLUR_RADIUS..=BLUR_RADIUS)
                    .zip(&kernel)
                    .map(|(k, w)| w * at(&rows, r + k, c))
                    .sum::<f64>()
                    / total;
            }
        }
        Blurred(out)
    }

    fn at(&self, r: i64, c: i64) -> f64 {
        let n = IMAGE_SIZE as i64;
        if (0..n).contains(&r) && (0..n).contains(&c) {
            self.0[(r * n + c) as usize]
        } else {
            0.0
        }
    }

    fn sample(&self, p: Vec2) -> f64 {
        let (c0, r0) = (p.x.floor(), p.y.floor());
        let (fx, fy) = (p.x - c0, p.y - r0);
        let (c0, r0) = (c0 as i64, r0 as i64);
        let top = self.at(r0, c0) * (1.0 - fx) + self.at(r0, c0 + 1) * fx;
        let bottom = self.at(r0 + 1, c0) * (1.0 - fx) + self.at(r0 + 1, c0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Subpixel polish of `init` by pattern search on the squared difference of
/// the blurred masks, sampled around `src`.
fn polish(src: &Mask, dst: &Mask, center: Vec2, init: Pose2) -> Pose2 {
    let (bs, bd) = (Blurred::new(src), Blurred::new(dst));
    let region = src.dilate().dilate().dilate();
    let samples: Vec<(Vec2, f64)> = region
        .pixels()
        .map(|p| (p.center(), bs.at(p.row as i64, p.col as i64)))
        .collect();
    let moved = |d: [f64; 3]| {
        let pivot = init.apply(center);
        Pose2::new(d[0], d[1], 0.0)
            .compose(&Pose2::rotation_about(pivot, d[2].to_radians()))
            .compose(&init)
    };
    let cost = |d: [f64; 3]| {
        let t = moved(d);
        samples.iter().map(|&(p, v)| (bd.sample(t.apply(p)) - v).powi(2)).sum::<f64>()
    };
    let mut d = [0.0; 3];
    let mut best = cost(d);
    let mut step = 0.5;
    while step >= REFINE_TOL {
        let mut improved = false;
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let mut trial = d;
                trial[axis] += sign * step;
                let c = cost(trial);
                if c < best {
                    best = c;
                    d = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    moved(d)
}

/// Start rotations (degrees) about the source centroid.
const START_ANGLES: [f64; 7] = [0.0, -10.0, 10.0, -20.0, 20.0, -30.0, 30.0];

/// Rigid transform taking `src` onto `dst`, which may contain extra pixels.
///
/// Boundary pixels are registered. ICP is started from each rotation in a small fan, both in place and with
/// centroids aligned; the result with the smallest mean distance from the
/// moved `src` to `dst` wins, earlier starts winning ties. The winner is then
/// polished against blurred copies of both masks.
pub fn icp_se2(src: &Mask, dst: &Mask) -> Result<Pose2> {
    let src_pts = points(src);
    let dst_pts = points(dst);
    if src_pts.len() < 3 {
        return Err(Error::DegenerateMask(src_pts.len()));
    }
    if dst_pts.len() < 3 {
        return Err(Error::DegenerateMask(dst_pts.len()));
    }
    let center = mean(&src_pts);
    let shift = mean(&dst_pts) - center;
    // Interior pixels match themselves under small motions and stall ICP,
    // so only boundaries are registered.
    let src_edge = points(&boundary(src));
    let dst_edge = boundary(dst);
    let nn = NearestPixel { mask: &dst_edge };
    let mut best: Option<(Pose2, f64)> = None;
    for offset in [Vec2::ZERO, shift] {
        for deg in START_ANGLES {
            let init = Pose2::new(offset.x, offset.y, 0.0).compose(&Pose2::rotation_about(center, deg.to_radians()));
            let (t, err) = refine(&src_edge, &nn, init);
            if best.map_or(true, |(_, e)| err < e - 1e-12) {
                best = Some((t, err));
            }
        }
    }
    let coarse = best.expect("at least one start").0;
    Ok(polish(src, dst, center, coarse))
}
