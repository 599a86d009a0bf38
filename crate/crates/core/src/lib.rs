//! Planar simulator and benchmark for interactive part discovery on
//! articulated objects.
//!
//! An agent holds one pixel of a multi-link object and pushes another. The
//! simulator resolves the action quasi-statically, analytic optical flow is
//! thresholded into motion masks, and a five-channel part memory aggregates
//! those masks into a segmentation that is scored against ground truth.
//!
//! Module map:
//! - [`assets`]: procedural chain objects, instance initializations, benchmark sets
//! - [`sim`]: rendering, action resolution, flow and touch
//! - [`perception`]: motion masks from flow, hold/push encodings, mask corruption
//! - [`memory`]: part memory update rules, SE(2) ICP, flattening
//! - [`reward`]: supervision targets for the four reward variants
//! - [`metrics`]: APE, part-aware IoU and Hausdorff@95, step accounting, reports
//! - [`policies`]: random, push-only, ground-truth oracle and remote action sources
//! - [`harness`]: episode loop, rollout persistence, benchmark runner
//! - [`protocol`] / [`server`]: length-framed JSON wire protocol for remote policies

pub mod assets;
pub mod error;
pub mod geom;
pub mod grid;
pub mod harness;
pub mod memory;
pub mod metrics;
pub mod perception;
pub mod policies;
pub mod protocol;
pub mod reward;
pub mod rng;
pub mod server;
pub mod sim;

pub use error::{Error, Result};

/// Side length of every observation, label image and mask.
pub const IMAGE_SIZE: usize = 90;

/// Number of pixels in a frame.
pub const PIXELS: usize = IMAGE_SIZE * IMAGE_SIZE;

/// Minimum moved area, in pixels, for a step to count as motion.
pub const MIN_PART_AREA: usize = 5;

/// Flow magnitudes at or below this value (pixels) are treated as no motion.
pub const FLOW_EPSILON: f64 = 1e-4;
