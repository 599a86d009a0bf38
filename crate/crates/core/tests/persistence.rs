use std::collections::BTreeMap;
use std::path::Path;

use partsim_core::assets::{build_benchmark, BenchmarkSet, InstanceCounts};
use partsim_core::harness::{
    episode_dir_name, load_episode, persist_episode, run_benchmark_set, run_episode, EpisodeConfig,
};
use partsim_core::policies::PolicyKind;
use partsim_core::Error;

fn small_set(instances: usize) -> BenchmarkSet {
    let mut counts = BTreeMap::new();
    counts.insert(2, InstanceCounts { instances, inits_per_instance: 2 });
    build_benchmark("persist", 5, &counts).unwrap()
}

fn edit_manifest(dir: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join("manifest.json");
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
}

#[test]
fn episode_round_trips_through_disk() {
    let set = small_set(2);
    let tmp = tempfile::tempdir().unwrap();
    for kind in [PolicyKind::Random, PolicyKind::Oracle] {
        let rec = run_episode(&set.entries[1], &EpisodeConfig::for_policy(kind), 17).unwrap();
        let dir = tmp.path().join(kind.name());
        persist_episode(&rec, &dir).unwrap();
        assert_eq!(load_episode(&dir).unwrap(), rec);
    }
}

#[test]
fn unknown_schema_is_rejected() {
    let set = small_set(1);
    let tmp = tempfile::tempdir().unwrap();
    let rec = run_episode(&set.entries[0], &EpisodeConfig::for_policy(PolicyKind::Random), 1).unwrap();
    persist_episode(&rec, tmp.path()).unwrap();
    edit_manifest(tmp.path(), |v| v["schema_version"] = 999.into());
    assert!(matches!(
        load_episode(tmp.path()),
        Err(Error::UnsupportedSchema { found: 999, expected: 1 })
    ));
}

#[test]
fn truncated_flow_is_corrupt() {
    let set = small_set(1);
    let tmp = tempfile::tempdir().unwrap();
    let rec = run_episode(&set.entries[0], &EpisodeConfig::for_policy(PolicyKind::Random), 1).unwrap();
    persist_episode(&rec, tmp.path()).unwrap();
    let flow = tmp.path().join("flow_0.bin");
    let bytes = std::fs::read(&flow).unwrap();
    std::fs::write(&flow, &bytes[..bytes.len() - 7]).unwrap();
    let err = load_episode(tmp.path()).unwrap_err();
    assert!(matches!(err, Error::CorruptRecord { .. }), "{err}");
    assert!(err.is_validation());
}

#[test]
fn tampered_reward_is_corrupt() {
    let set = small_set(1);
    let tmp = tempfile::tempdir().unwrap();
    let rec = run_episode(&set.entries[0], &EpisodeConfig::for_policy(PolicyKind::Oracle), 2).unwrap();
    persist_episode(&rec, tmp.path()).unwrap();
    edit_manifest(tmp.path(), |v| v["steps"][0]["reward"] = serde_json::Value::Null);
    assert!(matches!(load_episode(tmp.path()), Err(Error::CorruptRecord { .. })));
}

#[test]
fn missing_image_is_corrupt() {
    let set = small_set(1);
    let tmp = tempfile::tempdir().unwrap();
    let rec = run_episode(&set.entries[0], &EpisodeConfig::for_policy(PolicyKind::Random), 3).unwrap();
    persist_episode(&rec, tmp.path()).unwrap();
    std::fs::remove_file(tmp.path().join("labels_2.png")).unwrap();
    assert!(matches!(load_episode(tmp.path()), Err(Error::CorruptRecord { .. })));
}

#[test]
fn every_seed_and_entry_gets_a_directory() {
    let set = small_set(10);
    assert_eq!(set.entries.len(), 20);
    let tmp = tempfile::tempdir().unwrap();
    run_benchmark_set(&set, &EpisodeConfig::for_policy(PolicyKind::Random), &[0, 1], Some(tmp.path()), 0).unwrap();
    let dirs: Vec<String> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(dirs.len(), 40);
    for seed in [0, 1] {
        for entry in 0..20 {
            let dir = tmp.path().join(episode_dir_name(seed, entry));
            assert!(dir.join("manifest.json").is_file());
        }
    }
}

#[test]
fn rerun_resumes_without_rewriting() {
    let set = small_set(3);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = EpisodeConfig::for_policy(PolicyKind::Oracle);
    let first = run_benchmark_set(&set, &cfg, &[4], Some(tmp.path()), 2).unwrap();
    let manifest = tmp.path().join(episode_dir_name(4, 2)).join("manifest.json");
    let stamp = std::fs::metadata(&manifest).unwrap().modified().unwrap();
    let removed = tmp.path().join(episode_dir_name(4, 0));
    let before = std::fs::read(removed.join("obs_3.png")).unwrap();
    std::fs::remove_dir_all(&removed).unwrap();

    let second = run_benchmark_set(&set, &cfg, &[4], Some(tmp.path()), 2).unwrap();
    assert_eq!(first, second);
    assert_eq!(std::fs::metadata(&manifest).unwrap().modified().unwrap(), stamp);
    assert_eq!(std::fs::read(removed.join("obs_3.png")).unwrap(), before);
}

#[test]
fn benchmark_set_schema_is_checked() {
    let set = small_set(1);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("set.json");
    set.save(&path).unwrap();
    assert_eq!(BenchmarkSet::load(&path).unwrap(), set);
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    v["schema_version"] = 999.into();
    std::fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    assert!(matches!(BenchmarkSet::load(&path), Err(Error::UnsupportedSchema { found: 999, .. })));
}
