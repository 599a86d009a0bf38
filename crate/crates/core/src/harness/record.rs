//! On-disk episode layout: `manifest.json` plus per-step PNGs and ATPF flow files.
//!
//! Per step `t`: `obs_t.png` (RGB), `labels_t.png` (link index + 1),
//! `memory_t.png` (bit `c` set for channel `c`), `masks_t.png` (bit 0 = m_t,
//! bit 1 = m_t1), `hold_t.png` / `push_t.png` (action encodings, for viewing)
//! and `flow_t.bin`. The frame after the last action is `obs_T.png` /
//! `labels_T.png` with `T` the episode length.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{step_reward, EpisodeConfig, EpisodeRecord, StepRecord};
use crate::assets::InstanceInit;
use crate::geom::Pixel;
use crate::grid::{decode_png, encode_png, LabelImage, Mask, PngKind, RgbImage};
use crate::memory::{PartMemory, UpdateCase, CHANNELS};
use crate::metrics::StepMetrics;
use crate::perception::{encode_hold, encode_push, MotionMaskPair};
use crate::reward::RewardTarget;
use crate::sim::{Action, FlowField, Observation, StepOutcome, TouchReading, WorldState};
use crate::{Error, Result, IMAGE_SIZE, PIXELS};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
const FLOW_MAGIC: &[u8; 4] = b"ATPF";

#[derive(Serialize, Deserialize)]
struct StepFiles {
    observation: String,
    labels: String,
    memory: String,
    masks: String,
    hold: Option<String>,
    push: String,
    flow: String,
}

#[derive(Serialize, Deserialize)]
struct StepEntry {
    t: usize,
    world: WorldState,
    action: Action,
    touch: TouchReading,
    outcome: StepOutcome,
    case: UpdateCase,
    channel: Option<usize>,
    reward: Option<RewardTarget>,
    memory_recency: Vec<usize>,
    metrics: StepMetrics,
    files: StepFiles,
}

#[derive(Serialize, Deserialize)]
struct FinalFiles {
    observation: String,
    labels: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    config: EpisodeConfig,
    entry_index: usize,
    master_seed: u64,
    seed: u64,
    category: String,
    init: InstanceInit,
    final_metrics: StepMetrics,
    steps: Vec<StepEntry>,
    final_frame: FinalFiles,
}

pub fn write_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 16 * PIXELS);
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(IMAGE_SIZE as u32).to_le_bytes());
    out.extend_from_slice(&(IMAGE_SIZE as u32).to_le_bytes());
    for v in flow.forward.iter().chain(&flow.backward) {
        out.extend_from_slice(&v[0].to_le_bytes());
        out.extend_from_slice(&v[1].to_le_bytes());
    }
    out
}

pub fn read_flow(bytes: &[u8]) -> std::result::Result<FlowField, String> {
    if bytes.len() < 12 || &bytes[..4] != FLOW_MAGIC {
        return Err("missing ATPF magic".into());
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (w, h) = (u32_at(4) as usize, u32_at(8) as usize);
    if w != IMAGE_SIZE || h != IMAGE_SIZE {
        return Err(format!("flow is {w}x{h}, expected {IMAGE_SIZE}x{IMAGE_SIZE}"));
    }
    let expected = 12 + 16 * w * h;
    if bytes.len() != expected {
        return Err(format!("flow has {} bytes, expected {expected}", bytes.len()));
    }
    let f32_at = |i: usize| f32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let plane = |start: usize| -> Vec<[f32; 2]> {
        (0..w * h).map(|k| [f32_at(start + 8 * k), f32_at(start + 8 * k + 4)]).collect()
    };
    Ok(FlowField {
        forward: plane(12),
        backward: plane(12 + 8 * w * h),
    })
}

fn mask_bits(masks: &[&Mask]) -> Vec<u8> {
    (0..PIXELS)
        .map(|i| {
            let p = Pixel::from_index(i);
            masks.iter().enumerate().fold(0u8, |acc, (b, m)| acc | ((m.get(p) as u8) << b))
        })
        .collect()
}

fn masks_from_bits(bits: &[u8], count: usize) -> Vec<Mask> {
    (0..count)
        .map(|b| Mask::from_fn(|p| bits[p.index()] >> b & 1 == 1))
        .collect()
}

/// Write `record` into `dir`. The manifest is written last, so a directory
/// holding a manifest is a complete episode.
pub fn persist_episode(record: &EpisodeRecord, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let put = |name: &str, bytes: &[u8]| -> Result<String> {
        std::fs::write(dir.join(name), bytes)?;
        Ok(name.to_string())
    };
    let mut steps = Vec::with_capacity(record.steps.len());
    for (t, s) in record.steps.iter().enumerate() {
        let channels: Vec<&Mask> = s.memory.channels().iter().collect();
        let files = StepFiles {
            observation: put(&format!("obs_{t}.png"), &encode_png(s.observation.rgb.as_slice(), PngKind::Rgb))?,
            labels: put(&format!("labels_{t}.png"), &encode_png(s.labels.as_slice(), PngKind::Gray))?,
            memory: put(&format!("memory_{t}.png"), &encode_png(&mask_bits(&channels), PngKind::Gray))?,
            masks: put(
                &format!("masks_{t}.png"),
                &encode_png(&mask_bits(&[&s.masks.m_t, &s.masks.m_t1]), PngKind::Gray),
            )?,
            hold: match s.action.hold {
                Some(h) => Some(put(&format!("hold_{t}.png"), &encode_png(&encode_hold(h).to_gray(), PngKind::Gray))?),
                None => None,
            },
            push: put(
                &format!("push_{t}.png"),
                &encode_png(&encode_push(s.action.push, s.action.direction).to_gray(), PngKind::Gray),
            )?,
            flow: put(&format!("flow_{t}.bin"), &write_flow(&s.flow))?,
        };
        steps.push(StepEntry {
            t,
            world: s.world.clone(),
            action: s.action,
            touch: s.touch,
            outcome: s.outcome.clone(),
            case: s.case,
            channel: s.channel,
            reward: s.reward.clone(),
            memory_recency: s.memory.recency().to_vec(),
            metrics: s.metrics,
            files,
        });
    }
    let last = record.steps.len();
    let final_frame = FinalFiles {
        observation: put(&format!("obs_{last}.png"), &encode_png(record.final_observation.rgb.as_slice(), PngKind::Rgb))?,
        labels: put(&format!("labels_{last}.png"), &encode_png(record.final_labels.as_slice(), PngKind::Gray))?,
    };
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        config: record.config.clone(),
        entry_index: record.entry_index,
        master_seed: record.master_seed,
        seed: record.seed,
        category: record.category.clone(),
        init: record.init.clone(),
        final_metrics: record.final_metrics,
        steps,
        final_frame,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    let path = dir.join("manifest.json");
    let tmp = dir.join("manifest.json.tmp");
    std::fs::write(&tmp, json)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

struct Reader<'a> {
    dir: &'a Path,
}

impl Reader<'_> {
    fn bytes(&self, name: &str) -> Result<Vec<u8>> {
        let path = self.dir.join(name);
        std::fs::read(&path).map_err(|e| Error::corrupt(path, e))
    }

    fn png(&self, name: &str, kind: PngKind) -> Result<Vec<u8>> {
        let bytes = self.bytes(name)?;
        decode_png(&bytes, kind).map_err(|e| Error::corrupt(self.dir.join(name), e))
    }

    fn labels(&self, name: &str) -> Result<LabelImage> {
        LabelImage::from_vec(self.png(name, PngKind::Gray)?).map_err(|e| Error::corrupt(self.dir.join(name), e))
    }

    fn observation(&self, name: &str) -> Result<Observation> {
        let rgb = RgbImage::from_vec(self.png(name, PngKind::Rgb)?).map_err(|e| Error::corrupt(self.dir.join(name), e))?;
        Ok(Observation { rgb })
    }

    fn flow(&self, name: &str) -> Result<FlowField> {
        read_flow(&self.bytes(name)?).map_err(|e| Error::corrupt(self.dir.join(name), e))
    }
}

/// Load an episode written by [`persist_episode`]. Dense reward maps are
/// recomputed from the stored flow.
pub fn load_episode(dir: &Path) -> Result<EpisodeRecord> {
    let path = dir.join("manifest.json");
    let bytes = std::fs::read(&path).map_err(|e| Error::corrupt(&path, e))?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| Error::corrupt(&path, e))?;
    let found = raw
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::corrupt(&path, "missing schema_version"))?;
    if found != u64::from(MANIFEST_SCHEMA_VERSION) {
        return Err(Error::UnsupportedSchema {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: MANIFEST_SCHEMA_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(raw).map_err(|e| Error::corrupt(&path, e))?;
    let reader = Reader { dir };

    let mut steps = Vec::with_capacity(manifest.steps.len());
    for entry in manifest.steps {
        let f = &entry.files;
        let flow = reader.flow(&f.flow)?;
        let masks = masks_from_bits(&reader.png(&f.masks, PngKind::Gray)?, 2);
        let channels = masks_from_bits(&reader.png(&f.memory, PngKind::Gray)?, CHANNELS);
        let memory = PartMemory::from_parts(channels, entry.memory_recency)
            .ok_or_else(|| Error::corrupt(dir.join(&f.memory), "recency does not match channels"))?;
        let reward = step_reward(
            &entry.outcome,
            entry.touch,
            entry.case,
            &flow,
            entry.action.hold,
            manifest.config.variant,
        );
        let scalars = |r: &Option<RewardTarget>| r.as_ref().map(|r| (r.hold_value, r.push_value, r.hold_pixel_zero_on_push));
        if scalars(&reward) != scalars(&entry.reward) {
            return Err(Error::corrupt(&path, format!("reward of step {} disagrees with its flow", entry.t)));
        }
        steps.push(StepRecord {
            world: entry.world,
            observation: reader.observation(&f.observation)?,
            labels: reader.labels(&f.labels)?,
            action: entry.action,
            touch: entry.touch,
            outcome: entry.outcome,
            flow,
            masks: MotionMaskPair {
                m_t: masks[0].clone(),
                m_t1: masks[1].clone(),
            },
            case: entry.case,
            channel: entry.channel,
            reward,
            memory,
            metrics: entry.metrics,
        });
    }
    Ok(EpisodeRecord {
        config: manifest.config,
        entry_index: manifest.entry_index,
        master_seed: manifest.master_seed,
        seed: manifest.seed,
        category: manifest.category,
        init: manifest.init,
        steps,
        final_observation: reader.observation(&manifest.final_frame.observation)?,
        final_labels: reader.labels(&manifest.final_frame.labels)?,
        final_metrics: manifest.final_metrics,
    })
}
