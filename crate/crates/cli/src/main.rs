use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use partsim_core::assets::{build_benchmark, BenchmarkSet, InstanceCounts};
use partsim_core::geom::Pixel;
use partsim_core::grid::{encode_png_rgb_sized, LabelImage};
use partsim_core::harness::{load_episode, run_benchmark, EpisodeConfig, RunConfig};
use partsim_core::memory::{flatten, MemoryMode};
use partsim_core::metrics::{aggregate, BenchmarkReport};
use partsim_core::policies::PolicyKind;
use partsim_core::reward::RewardVariant;
use partsim_core::server::Server;
use partsim_core::IMAGE_SIZE;

#[derive(Parser)]
#[command(name = "partsim", version, about = "Interactive part discovery simulator and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Random,
    Nohold,
    Oracle,
    OracleMot,
    Remote,
}

impl From<Policy> for PolicyKind {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Random => PolicyKind::Random,
            Policy::Nohold => PolicyKind::NoHold,
            Policy::Oracle => PolicyKind::Oracle,
            Policy::OracleMot => PolicyKind::OracleMot,
            Policy::Remote => PolicyKind::Remote,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Full,
    Notouch,
    Nohold,
    Nopart,
}

impl From<Variant> for RewardVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Full => RewardVariant::FullTouch,
            Variant::Notouch => RewardVariant::NoTouch,
            Variant::Nohold => RewardVariant::NoHold,
            Variant::Nopart => RewardVariant::NoPart,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a frozen benchmark set
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Link counts to include, e.g. `--links 2,3`
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        links: Vec<usize>,
        /// Object instances per link count
        #[arg(long, default_value_t = 10)]
        instances: usize,
        /// Initializations per instance
        #[arg(long, default_value_t = 2)]
        inits: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "benchmark")]
        name: String,
    },
    /// Run a policy over a benchmark set
    Run {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, value_enum, default_value = "random")]
        policy: Policy,
        #[arg(long, value_enum, default_value = "full")]
        variant: Variant,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, value_enum, default_value = "test")]
        memory_mode: Mode,
        /// Episode record directory (enables resuming)
        #[arg(long)]
        record: Option<PathBuf>,
        /// Report path; a CSV is written next to it
        #[arg(long)]
        report: Option<PathBuf>,
        /// Worker threads, 0 for all cores
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Rebuild a report from recorded episodes
    Eval {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve episodes to remote policies
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, value_enum, default_value = "full")]
        variant: Variant,
        /// Seconds to wait for a client message
        #[arg(long, default_value_t = 30)]
        idle_timeout: u64,
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Print one recorded episode and write an image strip
    Replay {
        #[arg(long)]
        episode: PathBuf,
        /// Strip output path; defaults to `strip.png` inside the episode
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .chain()
                .filter_map(|c| c.downcast_ref::<partsim_core::Error>())
                .any(partsim_core::Error::is_validation);
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Gen { seed, links, instances, inits, out, name } => {
            let counts: BTreeMap<usize, InstanceCounts> = links
                .iter()
                .map(|&n| (n, InstanceCounts { instances, inits_per_instance: inits }))
                .collect();
            let set = build_benchmark(&name, seed, &counts)?;
            set.save(&out)?;
            println!("wrote {} entries to {}", set.entries.len(), out.display());
        }
        Command::Run { benchmark, policy, variant, steps, seeds, memory_mode, record, report, jobs } => {
            let kind = PolicyKind::from(policy);
            if kind == PolicyKind::Remote {
                bail!(partsim_core::Error::InvalidConfig(
                    "remote policies connect to `partsim serve`".into()
                ));
            }
            let episode = EpisodeConfig {
                episode_length: steps,
                variant: variant.into(),
                memory_mode: match memory_mode {
                    Mode::Train => MemoryMode::Train,
                    Mode::Test => MemoryMode::Test,
                },
                ..EpisodeConfig::for_policy(kind)
            };
            let config = RunConfig { episode, benchmark, seeds, record_dir: record, parallelism: jobs };
            let result = run_benchmark(&config)?;
            if let Some(path) = report {
                result.write(&path)?;
            }
            print_summary(&result);
        }
        Command::Eval { record, out } => {
            let report = eval(&record)?;
            report.write(&out)?;
            print_summary(&report);
        }
        Command::Serve { port, benchmark, steps, variant, idle_timeout, record } => {
            let set = BenchmarkSet::load(&benchmark)?;
            let config = EpisodeConfig {
                episode_length: steps,
                variant: variant.into(),
                ..EpisodeConfig::for_policy(PolicyKind::Remote)
            };
            let mut server = Server::bind(("127.0.0.1", port), set, config)?
                .with_idle_timeout(Duration::from_secs(idle_timeout));
            if let Some(dir) = record {
                server = server.with_record_dir(dir);
            }
            println!("listening on {}", server.local_addr()?);
            server.serve()?;
        }
        Command::Replay { episode, out } => replay(&episode, out)?,
    }
    Ok(())
}

fn eval(record: &Path) -> anyhow::Result<BenchmarkReport> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(record)
        .with_context(|| format!("reading {}", record.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    let mut records = Vec::with_capacity(dirs.len());
    for d in &dirs {
        records.push(load_episode(d)?);
    }
    records.sort_by_key(|r| (r.master_seed, r.entry_index));
    let mut seeds: Vec<u64> = records.iter().map(|r| r.master_seed).collect();
    seeds.dedup();
    Ok(aggregate(&records, &seeds))
}

fn print_summary(report: &BenchmarkReport) {
    println!("category  episodes  MAPE    dH95_px  mIoU_pct  effective  optimal");
    for s in &report.summary {
        println!(
            "{:<9} {:>8}  {:<6.3}  {:<7.2}  {:<8.1}  {:<9.3}  {:.3}",
            s.category, s.episodes, s.mape, s.dh95_px, s.miou_pct, s.effective_rate, s.optimal_rate
        );
    }
}

const PALETTE: [[u8; 3]; 6] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
];

fn colorize(labels: &LabelImage, p: Pixel) -> [u8; 3] {
    PALETTE[usize::from(labels.get(p)).min(PALETTE.len() - 1)]
}

fn replay(dir: &Path, out: Option<PathBuf>) -> anyhow::Result<()> {
    let rec = load_episode(dir)?;
    println!("{} entry {} seed {} ({} steps)", rec.category, rec.entry_index, rec.master_seed, rec.steps.len());
    for (t, s) in rec.steps.iter().enumerate() {
        let reward = s
            .reward
            .as_ref()
            .map(|r| format!("hold={:?} push={:?}", r.hold_value, r.push_value))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "t={t} case={} touch={:?} moved={} reward[{reward}] IoU={:.3} dH95={:.2} APE={:.3} effective={} optimal={}",
            serde_json::to_string(&s.case)?.trim_matches('"'),
            s.touch.bits(),
            s.outcome.moved_pixel_count,
            s.metrics.part_iou,
            s.metrics.hausdorff95,
            s.metrics.ape,
            s.metrics.effective,
            s.metrics.optimal,
        );
    }

    // One row per step: observation, ground-truth labels, motion masks, memory.
    let cols = 4;
    let (w, h) = (cols * IMAGE_SIZE, rec.steps.len() * IMAGE_SIZE);
    let mut img = vec![0u8; w * h * 3];
    for (t, s) in rec.steps.iter().enumerate() {
        let seg = flatten(&s.memory);
        for i in 0..IMAGE_SIZE * IMAGE_SIZE {
            let p = Pixel::from_index(i);
            let mask_px = match (s.masks.m_t.get(p), s.masks.m_t1.get(p)) {
                (true, true) => [255, 255, 255],
                (true, false) => [200, 60, 60],
                (false, true) => [60, 60, 200],
                (false, false) => [0, 0, 0],
            };
            let tiles = [s.observation.rgb.get(p), colorize(&s.labels, p), mask_px, colorize(&seg, p)];
            for (k, rgb) in tiles.iter().enumerate() {
                let (y, x) = (t * IMAGE_SIZE + p.row, k * IMAGE_SIZE + p.col);
                img[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(rgb);
            }
        }
    }
    let out = out.unwrap_or_else(|| dir.join("strip.png"));
    std::fs::write(&out, encode_png_rgb_sized(&img, w as u32, h as u32))?;
    println!("wrote {}", out.display());
    Ok(())
}
