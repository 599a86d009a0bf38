//! Planar geometry: points, SE(2) poses, pixels and push directions.
//!
//! World coordinates are pixel units with `x` along columns and `y` along
//! rows (downwards). Pixel `(row, col)` has its center at `(col, row)`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::IMAGE_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn rotated(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Wrap an angle into (−π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Rigid planar transform `p ↦ R(theta)·p + (x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn translation(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotated(self.theta) + self.translation()
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.apply(other.translation());
        Pose2::new(t.x, t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let t = (-self.translation()).rotated(-self.theta);
        Pose2::new(t.x, t.y, -self.theta)
    }

    /// Rotation by `theta` about `pivot`.
    pub fn rotation_about(pivot: Vec2, theta: f64) -> Pose2 {
        let t = pivot - pivot.rotated(theta);
        Pose2::new(t.x, t.y, theta)
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.theta == 0.0
    }
}

/// Integer pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Pixel { row, col }
    }

    pub fn center(self) -> Vec2 {
        Vec2::new(self.col as f64, self.row as f64)
    }

    pub fn index(self) -> usize {
        self.row * IMAGE_SIZE + self.col
    }

    pub fn from_index(i: usize) -> Self {
        Pixel::new(i / IMAGE_SIZE, i % IMAGE_SIZE)
    }

    pub fn in_frame(row: i64, col: i64) -> bool {
        (0..IMAGE_SIZE as i64).contains(&row) && (0..IMAGE_SIZE as i64).contains(&col)
    }

    /// Nearest pixel to a world point, if inside the frame.
    pub fn nearest(p: Vec2) -> Option<Pixel> {
        let (r, c) = (p.y.round() as i64, p.x.round() as i64);
        Pixel::in_frame(r, c).then(|| Pixel::new(r as usize, c as usize))
    }
}

/// One of eight push directions, `d·45°` counter-clockwise from +x as seen
/// on screen (so direction 2 points up, towards row 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Direction(u8);

impl Direction {
    pub const COUNT: u8 = 8;

    pub fn new(d: u8) -> Option<Self> {
        (d < Self::COUNT).then_some(Direction(d))
    }

    pub fn all() -> impl Iterator<Item = Direction> {
        (0..Self::COUNT).map(Direction)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn angle(self) -> f64 {
        f64::from(self.0) * PI / 4.0
    }

    /// Unit vector in world coordinates (y down).
    pub fn unit(self) -> Vec2 {
        let a = self.angle();
        Vec2::new(a.cos(), -a.sin())
    }

    pub fn opposite(self) -> Direction {
        Direction((self.0 + 4) % Self::COUNT)
    }
}

impl TryFrom<u8> for Direction {
    type Error = String;
    fn try_from(d: u8) -> Result<Self, String> {
        Direction::new(d).ok_or_else(|| format!("direction {d} outside 0..7"))
    }
}

impl From<Direction> for u8 {
    fn from(d: Direction) -> u8 {
        d.0
    }
}
