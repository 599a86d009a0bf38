//! Episode loop, rollout persistence and the benchmark runner.

mod bench;
mod record;

use serde::{Deserialize, Serialize};

pub use bench::{episode_dir_name, run_benchmark, run_benchmark_set};
pub use record::{load_episode, persist_episode, read_flow, write_flow, MANIFEST_SCHEMA_VERSION};

use crate::assets::InstanceInit;
use crate::memory::{apply_update, flatten, MemoryMode, PartMemory, UpdateCase};
use crate::metrics::{classify_step, score, StepMetrics};
use crate::perception::{corrupt_masks, motion_masks_from_flow, CorruptionModel, MotionMaskPair};
use crate::policies::{no_hold_random_policy, oracle_policy, random_policy, OracleContext, PolicyInput, PolicyKind};
use crate::reward::{compute_reward, RewardTarget, RewardVariant, StepContext};
use crate::rng::{derive, derive2};
use crate::sim::{self, Action, FlowField, Observation, PartLabelImage, StepOutcome, TouchReading, WorldState};
use crate::{Error, Result, MIN_PART_AREA};

pub const DEFAULT_EPISODE_LENGTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSource {
    Oracle,
    Corrupted { model: CorruptionModel },
}

/// The part of a run configuration that determines an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub episode_length: usize,
    pub policy: PolicyKind,
    pub variant: RewardVariant,
    pub mask_source: MaskSource,
    pub memory_mode: MemoryMode,
}

impl EpisodeConfig {
    /// Defaults for a policy: the perfect-mask oracle gets oracle masks,
    /// everything else sees corrupted masks.
    pub fn for_policy(policy: PolicyKind) -> Self {
        let mask_source = match policy {
            PolicyKind::OracleMot => MaskSource::Oracle,
            _ => MaskSource::Corrupted {
                model: CorruptionModel::default(),
            },
        };
        EpisodeConfig {
            episode_length: DEFAULT_EPISODE_LENGTH,
            policy,
            variant: RewardVariant::FullTouch,
            mask_source,
            memory_mode: MemoryMode::Test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episode_length == 0 {
            return Err(Error::InvalidConfig("episode length must be at least 1".into()));
        }
        if let MaskSource::Corrupted { model } = &self.mask_source {
            if !model.is_valid() {
                return Err(Error::InvalidConfig("corruption probabilities must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub episode: EpisodeConfig,
    pub benchmark: std::path::PathBuf,
    pub seeds: Vec<u64>,
    pub record_dir: Option<std::path::PathBuf>,
    /// Worker threads; 0 uses every core.
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// State before the action.
    pub world: WorldState,
    pub observation: Observation,
    pub labels: PartLabelImage,
    pub action: Action,
    pub touch: TouchReading,
    pub outcome: StepOutcome,
    pub flow: FlowField,
    pub masks: MotionMaskPair,
    pub case: UpdateCase,
    pub channel: Option<usize>,
    /// `None` when the masks contradict the flow (corrupted masks only).
    pub reward: Option<RewardTarget>,
    /// Memory after the update.
    pub memory: PartMemory,
    pub metrics: StepMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub config: EpisodeConfig,
    pub entry_index: usize,
    pub master_seed: u64,
    pub seed: u64,
    pub category: String,
    pub init: InstanceInit,
    pub steps: Vec<StepRecord>,
    pub final_observation: Observation,
    pub final_labels: PartLabelImage,
    pub final_metrics: StepMetrics,
}

impl EpisodeRecord {
    pub fn step_metrics(&self) -> Vec<StepMetrics> {
        self.steps.iter().map(|s| s.metrics).collect()
    }
}

/// Something that picks actions and hears back about them.
pub trait ActionSource {
    fn next_action(&mut self, input: &PolicyInput, world: &WorldState, labels: &PartLabelImage) -> Result<Action>;

    fn observe(&mut self, _touch: TouchReading, _outcome: &StepOutcome, _done: bool) -> Result<()> {
        Ok(())
    }

    fn finish(&mut self, _metrics: &StepMetrics) -> Result<()> {
        Ok(())
    }
}

/// In-process policies.
#[derive(Debug, Clone)]
pub struct BuiltinPolicy {
    kind: PolicyKind,
    history: Vec<Vec<usize>>,
}

impl BuiltinPolicy {
    pub fn new(kind: PolicyKind) -> Result<Self> {
        if kind == PolicyKind::Remote {
            return Err(Error::InvalidConfig("remote policies need a server connection".into()));
        }
        Ok(BuiltinPolicy {
            kind,
            history: Vec::new(),
        })
    }
}

impl ActionSource for BuiltinPolicy {
    fn next_action(&mut self, input: &PolicyInput, world: &WorldState, labels: &PartLabelImage) -> Result<Action> {
        match self.kind {
            PolicyKind::Random => Ok(random_policy(input)),
            PolicyKind::NoHold => Ok(no_hold_random_policy(input)),
            PolicyKind::Oracle | PolicyKind::OracleMot => oracle_policy(&OracleContext {
                world,
                labels,
                history: &self.history,
            }),
            PolicyKind::Remote => unreachable!("rejected in new"),
        }
    }

    fn observe(&mut self, _touch: TouchReading, outcome: &StepOutcome, _done: bool) -> Result<()> {
        self.history.push(outcome.moved_links());
        Ok(())
    }
}

pub fn policy_seed(seed: u64) -> u64 {
    derive(seed, 0)
}

fn motion_masks(flow: &FlowField, source: &MaskSource, seed: u64, t: usize) -> MotionMaskPair {
    let clean = motion_masks_from_flow(flow);
    match source {
        MaskSource::Oracle => clean,
        MaskSource::Corrupted { model } => corrupt_masks(&clean, &model.with_seed(derive2(seed, 1, t as u64))),
    }
}

/// Reward for one recorded step; `None` for contradictory contexts.
pub fn step_reward(
    outcome: &StepOutcome,
    touch: TouchReading,
    case: UpdateCase,
    flow: &FlowField,
    hold: Option<crate::geom::Pixel>,
    variant: RewardVariant,
) -> Option<RewardTarget> {
    let ctx = StepContext {
        flow_present: outcome.moved_pixel_count >= MIN_PART_AREA,
        touch,
        case,
        flow_norm_map: flow.forward_norm(),
        hold_pixel: hold,
    };
    compute_reward(&ctx, variant).ok()
}

/// Run one episode with a built-in policy.
pub fn run_episode(init: &InstanceInit, config: &EpisodeConfig, seed: u64) -> Result<EpisodeRecord> {
    let mut policy = BuiltinPolicy::new(config.policy)?;
    run_episode_with(init, config, seed, &mut policy)
}

/// Run one episode, asking `source` for every action.
pub fn run_episode_with(
    init: &InstanceInit,
    config: &EpisodeConfig,
    seed: u64,
    source: &mut dyn ActionSource,
) -> Result<EpisodeRecord> {
    config.validate()?;
    init.spec.validate()?;
    let links = init.spec.links.len();
    let mut world = init.world_state();
    let (mut observation, mut labels) = sim::render(&world, init.background_id);
    let mut memory = PartMemory::new();
    let mut touch_prev = None;
    let mut steps = Vec::with_capacity(config.episode_length);

    for t in 0..config.episode_length {
        let input = PolicyInput {
            observation: &observation,
            memory: &memory,
            step_index: t,
            steps_total: config.episode_length,
            touch_prev,
            rng_seed: policy_seed(seed),
        };
        let action = source.next_action(&input, &world, &labels)?;
        let (next, touch, outcome) = sim::step(&world, &action);
        let (next_obs, next_labels) = sim::render(&next, init.background_id);
        let flow = sim::compute_flow(&world, &next, &labels, &next_labels)?;
        let masks = motion_masks(&flow, &config.mask_source, seed, t);
        let update = apply_update(&memory, &masks.m_t, &masks.m_t1, config.memory_mode);
        let reward = step_reward(&outcome, touch, update.case, &flow, action.hold, config.variant);
        let class = classify_step(&labels, &action, &outcome, update.case, memory.occupied(), links);
        let (ape, hausdorff95, part_iou) = score(&next_labels, links, &flatten(&update.memory))?;
        let metrics = StepMetrics {
            ape,
            hausdorff95,
            part_iou,
            effective: class.effective,
            optimal: class.optimal,
        };
        let done = t + 1 == config.episode_length;
        source.observe(touch, &outcome, done)?;

        steps.push(StepRecord {
            world: world.clone(),
            observation: std::mem::replace(&mut observation, next_obs),
            labels: std::mem::replace(&mut labels, next_labels),
            action,
            touch,
            outcome,
            flow,
            masks,
            case: update.case,
            channel: update.channel,
            reward,
            memory: update.memory.clone(),
            metrics,
        });
        memory = update.memory;
        world = next;
        touch_prev = Some(touch);
    }

    let final_metrics = steps.last().map(|s| s.metrics).unwrap_or_default();
    source.finish(&final_metrics)?;
    Ok(EpisodeRecord {
        config: config.clone(),
        entry_index: 0,
        master_seed: seed,
        seed,
        category: init.category(),
        init: init.clone(),
        steps,
        final_observation: observation,
        final_labels: labels,
        final_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{build_benchmark, InstanceCounts};
    use std::collections::BTreeMap;

    pub(crate) fn small_set(links: usize, instances: usize) -> crate::assets::BenchmarkSet {
        let mut counts = BTreeMap::new();
        counts.insert(links, InstanceCounts { instances, inits_per_instance: 2 });
        build_benchmark("unit", 5, &counts).unwrap()
    }

    #[test]
    fn episode_has_requested_length_and_is_deterministic() {
        let set = small_set(2, 1);
        let cfg = EpisodeConfig::for_policy(PolicyKind::Random);
        let a = run_episode(&set.entries[0], &cfg, 9).unwrap();
        assert_eq!(a.steps.len(), 5);
        assert_eq!(a, run_episode(&set.entries[0], &cfg, 9).unwrap());
        let cfg7 = EpisodeConfig { episode_length: 7, ..cfg };
        assert_eq!(run_episode(&set.entries[0], &cfg7, 9).unwrap().steps.len(), 7);
    }

    #[test]
    fn oracle_with_perfect_masks_finds_both_links() {
        let set = small_set(2, 2);
        let cfg = EpisodeConfig::for_policy(PolicyKind::OracleMot);
        for init in &set.entries {
            let rec = run_episode(init, &cfg, 1).unwrap();
            assert!(rec.steps[2].memory.occupied() >= 2, "{:?}", rec.steps.iter().map(|s| s.case).collect::<Vec<_>>());
            assert!(rec.final_metrics.part_iou > 0.9);
        }
    }

    #[test]
    fn remote_kind_needs_a_connection() {
        let set = small_set(2, 1);
        let cfg = EpisodeConfig::for_policy(PolicyKind::Remote);
        assert!(matches!(run_episode(&set.entries[0], &cfg, 0), Err(Error::InvalidConfig(_))));
        let bad = EpisodeConfig { episode_length: 0, ..EpisodeConfig::for_policy(PolicyKind::Random) };
        assert!(run_episode(&set.entries[0], &bad, 0).is_err());
    }
}
