//! Benchmark runner: every entry under every master seed, in parallel,
//! resumable from a record directory.

use std::path::Path;

use rayon::prelude::*;

use super::{load_episode, persist_episode, run_episode, EpisodeConfig, RunConfig};
use crate::assets::BenchmarkSet;
use crate::metrics::{aggregate_metrics, BenchmarkReport, StepMetrics};
use crate::rng::derive;
use crate::{Error, Result};

pub fn episode_dir_name(master_seed: u64, entry_index: usize) -> String {
    format!("seed{master_seed}_entry{entry_index:05}")
}

fn one(
    set: &BenchmarkSet,
    config: &EpisodeConfig,
    master_seed: u64,
    entry_index: usize,
    record_dir: Option<&Path>,
) -> Result<(String, Vec<StepMetrics>)> {
    let dir = record_dir.map(|d| d.join(episode_dir_name(master_seed, entry_index)));
    if let Some(dir) = &dir {
        if dir.join("manifest.json").is_file() {
            let rec = load_episode(dir)?;
            if rec.config == *config && rec.master_seed == master_seed && rec.entry_index == entry_index {
                return Ok((rec.category.clone(), rec.step_metrics()));
            }
        }
    }
    let init = &set.entries[entry_index];
    let mut rec = run_episode(init, config, derive(master_seed, entry_index as u64))?;
    rec.entry_index = entry_index;
    rec.master_seed = master_seed;
    if let Some(dir) = &dir {
        persist_episode(&rec, dir)?;
    }
    Ok((rec.category.clone(), rec.step_metrics()))
}

/// Run `set` under `config` for each master seed. Results are reduced in
/// (seed, entry) order regardless of parallelism.
pub fn run_benchmark_set(
    set: &BenchmarkSet,
    config: &EpisodeConfig,
    seeds: &[u64],
    record_dir: Option<&Path>,
    parallelism: usize,
) -> Result<BenchmarkReport> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| (0..set.entries.len()).map(move |i| (s, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let results: Vec<Result<(String, Vec<StepMetrics>)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, i)| one(set, config, s, i, record_dir))
            .collect()
    });
    let results: Vec<(String, Vec<StepMetrics>)> = results.into_iter().collect::<Result<_>>()?;
    Ok(aggregate_metrics(
        results.iter().map(|(c, m)| (c.as_str(), m.as_slice())),
        seeds,
    ))
}

/// Load the benchmark set named in `config`, run it, and write the report
/// as `report.json` / `report.csv` into the record directory when one is set.
pub fn run_benchmark(config: &RunConfig) -> Result<BenchmarkReport> {
    let set = BenchmarkSet::load(&config.benchmark)?;
    let record_dir = config.record_dir.as_deref();
    let report = run_benchmark_set(&set, &config.episode, &config.seeds, record_dir, config.parallelism)?;
    if let Some(dir) = record_dir {
        report.write(&dir.join("report.json"))?;
    }
    Ok(report)
}
