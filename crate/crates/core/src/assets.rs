//! Procedural articulated chain objects, instance initializations and
//! frozen benchmark sets.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose2, Vec2};
use crate::grid::{to_byte, RgbImage};
use crate::rng::{derive, derive2, rng};
use crate::{sim, IMAGE_SIZE};

/// Joint range of every generated multilink joint, ±5π/18 rad.
pub const JOINT_LIMIT: f64 = 5.0 * PI / 18.0;
pub const SCALE_RANGE: (f64, f64) = (0.7, 1.3);
/// Clearance between a freshly placed object and the frame edge, in pixels.
pub const PLACEMENT_MARGIN: f64 = 4.0;
pub const MIN_VISIBLE_PIXELS: usize = 20;
pub const PLACEMENT_ATTEMPTS: usize = 100;
pub const BACKGROUND_COUNT: u64 = 140;
pub const BENCHMARK_SCHEMA_VERSION: u32 = 1;

/// Joint anchors sit this fraction of the minor half-extent inside each link
/// end, so neighbouring links overlap slightly at the hinge.
const ANCHOR_INSET: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkShape {
    Prism,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub shape: LinkShape,
    /// `(a, b)`: major half-extent along local x, minor along local y.
    pub half_extents: (f64, f64),
    pub color: [f64; 3],
}

impl LinkSpec {
    pub fn area(&self) -> f64 {
        let (a, b) = self.half_extents;
        match self.shape {
            LinkShape::Prism => 4.0 * a * b,
            LinkShape::Ellipse => PI * a * b,
        }
    }

    /// Whether a point given in the link frame lies inside the footprint.
    pub fn contains_local(&self, p: Vec2) -> bool {
        let (a, b) = self.half_extents;
        match self.shape {
            LinkShape::Prism => p.x.abs() <= a && p.y.abs() <= b,
            LinkShape::Ellipse => (p.x / a).powi(2) + (p.y / b).powi(2) <= 1.0,
        }
    }

    /// Whether a local point is within `radius` of the footprint. Exact for
    /// prisms; for ellipses the offset curve is approximated by the ellipse
    /// with both semi-axes grown by `radius`.
    pub fn within_local(&self, p: Vec2, radius: f64) -> bool {
        let (a, b) = self.half_extents;
        match self.shape {
            LinkShape::Prism => {
                let dx = (p.x.abs() - a).max(0.0);
                let dy = (p.y.abs() - b).max(0.0);
                dx.hypot(dy) <= radius
            }
            LinkShape::Ellipse => {
                ((p.x / (a + radius)).powi(2) + (p.y / (b + radius)).powi(2)) <= 1.0
            }
        }
    }

    /// World-axis half-widths of the footprint's bounding box at orientation `theta`.
    pub fn bbox_half_widths(&self, theta: f64) -> (f64, f64) {
        let (a, b) = self.half_extents;
        let (s, c) = theta.sin_cos();
        match self.shape {
            LinkShape::Prism => (a * c.abs() + b * s.abs(), a * s.abs() + b * c.abs()),
            LinkShape::Ellipse => (
                ((a * c).powi(2) + (b * s).powi(2)).sqrt(),
                ((a * s).powi(2) + (b * c).powi(2)).sqrt(),
            ),
        }
    }

    pub fn rgb8(&self) -> [u8; 3] {
        self.color.map(to_byte)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub parent_index: usize,
    pub child_index: usize,
    pub parent_anchor: Vec2,
    pub child_anchor: Vec2,
    pub limits: (f64, f64),
    pub rest_angle: f64,
}

impl JointSpec {
    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.limits.0, self.limits.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub links: Vec<LinkSpec>,
    /// Joint `j` connects link `j` (parent) to link `j + 1` (child).
    pub joints: Vec<JointSpec>,
}

impl ObjectSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.links.len();
        if !(2..=3).contains(&n) {
            return Err(Error::InvalidLinkCount(n));
        }
        if self.joints.len() != n - 1 {
            return Err(Error::InvalidConfig(format!(
                "{n} links need {} joints, found {}",
                n - 1,
                self.joints.len()
            )));
        }
        for (j, joint) in self.joints.iter().enumerate() {
            if joint.parent_index != j || joint.child_index != j + 1 {
                return Err(Error::InvalidConfig(format!("joint {j} does not chain link {j} to {}", j + 1)));
            }
            let (lo, hi) = joint.limits;
            if !(lo <= joint.rest_angle && joint.rest_angle <= hi) {
                return Err(Error::InvalidConfig(format!("joint {j} rest angle outside limits")));
            }
        }
        for link in &self.links {
            let (a, b) = link.half_extents;
            if !(b > 0.0 && a >= b) {
                return Err(Error::InvalidConfig(format!("bad half extents ({a}, {b})")));
            }
        }
        Ok(())
    }

    pub fn category(&self) -> String {
        format!("{}-link", self.links.len())
    }

    /// Uniformly scaled copy: extents and anchors multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> ObjectSpec {
        ObjectSpec {
            links: self
                .links
                .iter()
                .map(|l| LinkSpec {
                    half_extents: (l.half_extents.0 * scale, l.half_extents.1 * scale),
                    ..l.clone()
                })
                .collect(),
            joints: self
                .joints
                .iter()
                .map(|j| JointSpec {
                    parent_anchor: j.parent_anchor * scale,
                    child_anchor: j.child_anchor * scale,
                    ..j.clone()
                })
                .collect(),
        }
    }

    /// World pose of each link given the pose of link 0 and the joint angles.
    pub fn link_poses(&self, base: &Pose2, joint_angles: &[f64]) -> Vec<Pose2> {
        let mut poses = Vec::with_capacity(self.links.len());
        poses.push(*base);
        for (joint, &q) in self.joints.iter().zip(joint_angles) {
            let parent = poses[joint.parent_index];
            let at_anchor = parent.compose(&Pose2::new(
                joint.parent_anchor.x,
                joint.parent_anchor.y,
                joint.rest_angle + q,
            ));
            let child = at_anchor.compose(&Pose2::new(-joint.child_anchor.x, -joint.child_anchor.y, 0.0));
            poses.push(child);
        }
        poses
    }

    pub fn total_area(&self) -> f64 {
        self.links.iter().map(LinkSpec::area).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceInit {
    /// Unscaled object.
    pub spec: ObjectSpec,
    /// Pose of link 0.
    pub base_pose: Pose2,
    pub joint_angles: Vec<f64>,
    pub scale: f64,
    pub background_id: u64,
}

impl InstanceInit {
    pub fn world_state(&self) -> sim::WorldState {
        sim::WorldState {
            spec: self.spec.scaled(self.scale),
            base_pose: self.base_pose,
            joint_angles: self.joint_angles.clone(),
        }
    }

    pub fn category(&self) -> String {
        self.spec.category()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSet {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub entries: Vec<InstanceInit>,
}

impl BenchmarkSet {
    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("benchmark set serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let set: BenchmarkSet =
            serde_json::from_slice(&bytes).map_err(|e| Error::corrupt(path, e))?;
        if set.schema_version != BENCHMARK_SCHEMA_VERSION {
            return Err(Error::UnsupportedSchema {
                found: set.schema_version,
                expected: BENCHMARK_SCHEMA_VERSION,
            });
        }
        for entry in &set.entries {
            entry.spec.validate()?;
        }
        Ok(set)
    }
}

/// Instance and initialization counts for one link count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCounts {
    pub instances: usize,
    pub inits_per_instance: usize,
}

impl InstanceCounts {
    pub fn new(instances: usize) -> Self {
        InstanceCounts {
            instances,
            inits_per_instance: 2,
        }
    }
}

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    [rng.gen(), rng.gen(), rng.gen()]
}

fn random_prism(rng: &mut impl Rng) -> LinkSpec {
    let a: f64 = rng.gen_range(9.0..=14.0);
    let b = rng.gen_range(3.5..=(a / 2.0).min(6.0));
    LinkSpec {
        shape: LinkShape::Prism,
        half_extents: (a, b),
        color: random_color(rng),
    }
}

fn random_ellipse(rng: &mut impl Rng) -> LinkSpec {
    let a: f64 = rng.gen_range(10.0..=15.0);
    let b = rng.gen_range(7.0..=a.min(10.0));
    LinkSpec {
        shape: LinkShape::Ellipse,
        half_extents: (a, b),
        color: random_color(rng),
    }
}

fn hinge(parent: &LinkSpec, child: &LinkSpec, index: usize) -> JointSpec {
    let (pa, pb) = parent.half_extents;
    let (ca, cb) = child.half_extents;
    JointSpec {
        parent_index: index,
        child_index: index + 1,
        parent_anchor: Vec2::new(pa - ANCHOR_INSET * pb, 0.0),
        child_anchor: Vec2::new(-(ca - ANCHOR_INSET * cb), 0.0),
        limits: (-JOINT_LIMIT, JOINT_LIMIT),
        rest_angle: 0.0,
    }
}

/// Build a revolute chain: two prisms for two links, prism–ellipse–prism for three.
pub fn generate_multilink(seed: u64, n_links: usize) -> Result<ObjectSpec> {
    let mut rng = rng(derive(seed, 0x11_4E));
    let links = match n_links {
        2 => vec![random_prism(&mut rng), random_prism(&mut rng)],
        3 => vec![
            random_prism(&mut rng),
            random_ellipse(&mut rng),
            random_prism(&mut rng),
        ],
        n => return Err(Error::InvalidLinkCount(n)),
    };
    let joints = links
        .windows(2)
        .enumerate()
        .map(|(i, pair)| hinge(&pair[0], &pair[1], i))
        .collect();
    Ok(ObjectSpec { links, joints })
}

/// Axis-aligned bounds `(min_x, min_y, max_x, max_y)` of the object footprint.
pub fn footprint_bounds(spec: &ObjectSpec, poses: &[Pose2]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (link, pose) in spec.links.iter().zip(poses) {
        let (hx, hy) = link.bbox_half_widths(pose.theta);
        b.0 = b.0.min(pose.x - hx);
        b.1 = b.1.min(pose.y - hy);
        b.2 = b.2.max(pose.x + hx);
        b.3 = b.3.max(pose.y + hy);
    }
    b
}

/// Whether the footprint keeps `margin` pixels from every frame edge. The
/// frame spans [−0.5, 89.5] in world coordinates.
pub fn inside_frame(spec: &ObjectSpec, poses: &[Pose2], margin: f64) -> bool {
    let (x0, y0, x1, y1) = footprint_bounds(spec, poses);
    let lo = -0.5 + margin;
    let hi = IMAGE_SIZE as f64 - 0.5 - margin;
    x0 >= lo && y0 >= lo && x1 <= hi && y1 <= hi
}

/// Sample pose, joint angles and scale so the object sits fully in frame.
pub fn sample_instance_init(spec: &ObjectSpec, seed: u64) -> Result<InstanceInit> {
    spec.validate()?;
    let mut rng = rng(derive(seed, 0x1A17));
    let lo = -0.5 + PLACEMENT_MARGIN;
    let hi = IMAGE_SIZE as f64 - 0.5 - PLACEMENT_MARGIN;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let theta = rng.gen_range(0.0..2.0 * PI);
        let joint_angles: Vec<f64> = spec
            .joints
            .iter()
            .map(|j| rng.gen_range(j.limits.0..=j.limits.1))
            .collect();
        let scale = rng.gen_range(SCALE_RANGE.0..=SCALE_RANGE.1);
        let background_id = rng.gen_range(0..BACKGROUND_COUNT);
        let scaled = spec.scaled(scale);
        let origin = Pose2::new(0.0, 0.0, theta);
        let (x0, y0, x1, y1) = footprint_bounds(&scaled, &scaled.link_poses(&origin, &joint_angles));
        let (xmin, xmax) = (lo - x0, hi - x1);
        let (ymin, ymax) = (lo - y0, hi - y1);
        // Consume the position draws unconditionally so retries stay aligned.
        let (ux, uy): (f64, f64) = (rng.gen(), rng.gen());
        if xmin > xmax || ymin > ymax {
            continue;
        }
        let init = InstanceInit {
            spec: spec.clone(),
            base_pose: Pose2::new(xmin + ux * (xmax - xmin), ymin + uy * (ymax - ymin), theta),
            joint_angles,
            scale,
            background_id,
        };
        let labels = sim::render_labels(&init.world_state());
        if (1..=spec.links.len() as u8).all(|l| labels.count(l) >= MIN_VISIBLE_PIXELS) {
            return Ok(init);
        }
    }
    Err(Error::UnplaceableInstance(PLACEMENT_ATTEMPTS))
}

/// Generate a frozen benchmark. Entries are ordered by link count, then
/// instance, then initialization.
pub fn build_benchmark(
    name: &str,
    seed: u64,
    counts: &BTreeMap<usize, InstanceCounts>,
) -> Result<BenchmarkSet> {
    let mut entries = Vec::new();
    for (&n_links, c) in counts {
        if c.instances == 0 || c.inits_per_instance == 0 {
            return Err(Error::InvalidConfig("instance counts must be positive".into()));
        }
        for k in 0..c.instances {
            let spec_seed = derive2(seed, n_links as u64, k as u64);
            let spec = generate_multilink(spec_seed, n_links)?;
            for j in 0..c.inits_per_instance {
                entries.push(sample_instance_init(&spec, derive(spec_seed, 0x1000 + j as u64))?);
            }
        }
    }
    Ok(BenchmarkSet {
        schema_version: BENCHMARK_SCHEMA_VERSION,
        name: name.to_string(),
        seed,
        entries,
    })
}

/// Low-contrast value-noise texture used as the table surface.
pub fn generate_background(background_id: u64) -> RgbImage {
    const CELL: usize = 10;
    const LATTICE: usize = IMAGE_SIZE / CELL + 2;
    let mut rng = rng(derive(background_id, 0xBAC6));
    let base: [f64; 3] = [
        rng.gen_range(0.38..0.62),
        rng.gen_range(0.38..0.62),
        rng.gen_range(0.38..0.62),
    ];
    let lattice: Vec<f64> = (0..LATTICE * LATTICE).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // Fine grain along a random axis, loosely wood-like.
    let grain_angle = rng.gen_range(0.0..PI);
    let grain_freq = rng.gen_range(0.4..0.9);
    let (gs, gc) = grain_angle.sin_cos();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut img = RgbImage::filled([0, 0, 0]);
    for r in 0..IMAGE_SIZE {
        for c in 0..IMAGE_SIZE {
            let (fy, fx) = (r as f64 / CELL as f64, c as f64 / CELL as f64);
            let (iy, ix) = (fy.floor() as usize, fx.floor() as usize);
            let (ty, tx) = (smooth(fy - iy as f64), smooth(fx - ix as f64));
            let at = |y: usize, x: usize| lattice[y * LATTICE + x];
            let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
            let bottom = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
            let noise = top * (1.0 - ty) + bottom * ty;
            let grain = (grain_freq * (c as f64 * gc + r as f64 * gs) + 3.0 * noise).sin();
            let v = 0.07 * noise + 0.03 * grain;
            let rgb = base.map(|b| to_byte(b + v));
            img.set(crate::geom::Pixel::new(r, c), rgb);
        }
    }
    img
}
