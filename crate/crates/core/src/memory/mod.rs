//! History aggregation: a five-channel part memory updated from motion
//! mask pairs, plus flattening into a single segmentation.
//!
//! Each update compares `m_t` against the channel it overlaps most (lowest
//! index on ties). With `o` the overlap, `r_M = o / |m_t|` and
//! `r_V = o / |V^c|` select one of the update cases; see [`classify_update`].

mod icp;

use serde::{Deserialize, Serialize};

pub use icp::{fit_rigid, icp_se2};

use crate::geom::{Pixel, Pose2};
use crate::grid::{LabelImage, Mask};
use crate::MIN_PART_AREA;

pub const CHANNELS: usize = 5;
/// "Significant overlap" ratio.
pub const OVERLAP_THRESHOLD: f64 = 0.5;

/// Flattened memory: 0 background, `c + 1` for channel `c`.
pub type Segmentation = LabelImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateCase {
    NoMovement,
    NewPart,
    SplitNewPart,
    ExistingPart,
    EntangledParts,
    FullMemoryFallback,
}

impl UpdateCase {
    pub const ALL: [UpdateCase; 6] = [
        UpdateCase::NoMovement,
        UpdateCase::NewPart,
        UpdateCase::SplitNewPart,
        UpdateCase::ExistingPart,
        UpdateCase::EntangledParts,
        UpdateCase::FullMemoryFallback,
    ];

    pub fn discovers_part(self) -> bool {
        matches!(self, UpdateCase::NewPart | UpdateCase::SplitNewPart)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMode {
    /// Entangled motion overwrites the channel.
    Train,
    /// Entangled motion is split with ICP.
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartMemory {
    channels: Vec<Mask>,
    /// Non-empty channel indices, most recently allocated or modified first.
    recency: Vec<usize>,
}

impl Default for PartMemory {
    fn default() -> Self {
        PartMemory {
            channels: vec![Mask::empty(); CHANNELS],
            recency: Vec::new(),
        }
    }
}

impl PartMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuild a memory from raw channels and recency; `None` if the recency
    /// list does not name exactly the non-empty channels.
    pub fn from_parts(channels: Vec<Mask>, recency: Vec<usize>) -> Option<Self> {
        if channels.len() != CHANNELS {
            return None;
        }
        let mut seen = [false; CHANNELS];
        for &c in &recency {
            if c >= CHANNELS || seen[c] || channels[c].is_empty() {
                return None;
            }
            seen[c] = true;
        }
        if channels.iter().enumerate().any(|(i, m)| !m.is_empty() && !seen[i]) {
            return None;
        }
        Some(PartMemory { channels, recency })
    }

    pub fn channel(&self, c: usize) -> &Mask {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Mask] {
        &self.channels
    }

    pub fn recency(&self) -> &[usize] {
        &self.recency
    }

    pub fn occupied(&self) -> usize {
        self.recency.len()
    }

    pub fn free_channel(&self) -> Option<usize> {
        self.channels.iter().position(Mask::is_empty)
    }

    fn free_channel_except(&self, taken: usize) -> Option<usize> {
        (0..CHANNELS).find(|&i| i != taken && self.channels[i].is_empty())
    }

    fn assign(&mut self, c: usize, mask: Mask) {
        self.channels[c] = mask;
        self.recency.retain(|&i| i != c);
        self.recency.insert(0, c);
    }

    fn prune(&mut self) {
        let channels = &self.channels;
        self.recency.retain(|&i| !channels[i].is_empty());
    }
}

/// Channel with the largest overlap with `m_t`, lowest index on ties.
fn best_channel(memory: &PartMemory, m_t: &Mask) -> (usize, usize) {
    let mut best = (0, 0);
    for (i, ch) in memory.channels.iter().enumerate() {
        let o = ch.intersection_area(m_t);
        if o > best.1 {
            best = (i, o);
        }
    }
    best
}

/// Decide how `m_t` relates to the memory. Total: every input maps to one case.
pub fn classify_update(memory: &PartMemory, m_t: &Mask) -> (UpdateCase, Option<usize>) {
    let area = m_t.area();
    if area < MIN_PART_AREA {
        return (UpdateCase::NoMovement, None);
    }
    let (c, overlap) = best_channel(memory, m_t);
    let channel_area = memory.channels[c].area();
    let r_m = overlap as f64 / area as f64;
    let r_v = if channel_area == 0 {
        0.0
    } else {
        overlap as f64 / channel_area as f64
    };
    let (sig_m, sig_v) = (r_m >= OVERLAP_THRESHOLD, r_v >= OVERLAP_THRESHOLD);
    match (sig_m, sig_v) {
        (false, false) => match memory.free_channel() {
            Some(free) => (UpdateCase::NewPart, Some(free)),
            None => (UpdateCase::FullMemoryFallback, Some(c)),
        },
        (true, false) => match memory.free_channel() {
            Some(_) => (UpdateCase::SplitNewPart, Some(c)),
            None => (UpdateCase::FullMemoryFallback, Some(c)),
        },
        (true, true) => (UpdateCase::ExistingPart, Some(c)),
        (false, true) => (UpdateCase::EntangledParts, Some(c)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryUpdate {
    pub memory: PartMemory,
    pub case: UpdateCase,
    pub channel: Option<usize>,
}

/// Apply one motion mask pair to the memory.
pub fn apply_update(memory: &PartMemory, m_t: &Mask, m_t1: &Mask, mode: MemoryMode) -> MemoryUpdate {
    let (case, channel) = classify_update(memory, m_t);
    let mut next = memory.clone();
    match (case, channel) {
        (UpdateCase::NoMovement, _) | (_, None) => {}
        (UpdateCase::NewPart, Some(c)) | (UpdateCase::ExistingPart, Some(c)) => {
            next.assign(c, m_t1.clone());
        }
        (UpdateCase::SplitNewPart, Some(c)) => {
            let shrunk = next.channels[c].minus(m_t);
            next.assign(c, shrunk);
            if let Some(fresh) = next.free_channel_except(c) {
                next.assign(fresh, m_t1.clone());
            }
        }
        (UpdateCase::EntangledParts, Some(c)) => match mode {
            MemoryMode::Train => next.assign(c, m_t1.clone()),
            MemoryMode::Test => split_entangled(&mut next, c, m_t1),
        },
        (UpdateCase::FullMemoryFallback, Some(c)) => {
            let merged = next.channels[c].minus(m_t).or(m_t1);
            next.assign(c, merged);
        }
    }
    next.prune();
    MemoryUpdate {
        memory: next,
        case,
        channel,
    }
}

/// Register the remembered part onto `m_t1`, keep what it explains, and hand
/// the rest of the motion to a fresh channel.
fn split_entangled(memory: &mut PartMemory, c: usize, m_t1: &Mask) {
    let registered = icp_se2(&memory.channels[c], m_t1)
        .ok()
        .map(|t| transform_mask(&memory.channels[c], &t).and(m_t1))
        .filter(|m| !m.is_empty());
    let Some(kept) = registered else {
        memory.assign(c, m_t1.clone());
        return;
    };
    let rest = m_t1.minus(&kept);
    memory.assign(c, kept);
    if rest.is_empty() {
        return;
    }
    if let Some(fresh) = memory.free_channel_except(c) {
        memory.assign(fresh, rest);
    }
}

/// Move pixel centers by `t`, round, clip to the frame and close 1-px holes.
pub fn transform_mask(mask: &Mask, t: &Pose2) -> Mask {
    let moved = Mask::from_pixels(mask.pixels().filter_map(|p| Pixel::nearest(t.apply(p.center()))));
    moved.close()
}

/// Paint channels from least to most recent so recent channels win overlaps.
pub fn flatten(memory: &PartMemory) -> Segmentation {
    let mut labels = LabelImage::default();
    for &c in memory.recency.iter().rev() {
        for p in memory.channels[c].pixels() {
            labels.set(p, c as u8 + 1);
        }
    }
    labels
}
