use std::path::Path;
use std::process::{Command, Output};

fn partsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partsim")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_run_eval_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let set = tmp.path().join("set.json");
    let record = tmp.path().join("rec");
    let report = tmp.path().join("report.json");
    let out = partsim(&["gen", "--seed", "3", "--links", "2,3", "--instances", "2", "--out", s(&set)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = partsim(&[
        "run", "--benchmark", s(&set), "--policy", "oracle", "--seeds", "0,1",
        "--record", s(&record), "--report", s(&report), "--jobs", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("2-link") && stdout.contains("3-link"), "{stdout}");
    assert!(tmp.path().join("report.csv").is_file());
    assert_eq!(std::fs::read_dir(&record).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count(), 16);

    let evaluated = tmp.path().join("eval.json");
    let out = partsim(&["eval", "--record", s(&record), "--out", s(&evaluated)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(&evaluated).unwrap());

    let strip = tmp.path().join("strip.png");
    let episode = record.join("seed1_entry00002");
    let out = partsim(&["replay", "--episode", s(&episode), "--out", s(&strip)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("t=4 "));
    assert!(std::fs::metadata(&strip).unwrap().len() > 0);
}

#[test]
fn bad_inputs_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let set = tmp.path().join("set.json");
    assert_eq!(partsim(&["gen", "--links", "4", "--out", s(&set)]).status.code(), Some(2));

    std::fs::write(&set, b"{\"schema_version\": 1, \"name\": 3}").unwrap();
    assert_eq!(partsim(&["run", "--benchmark", s(&set)]).status.code(), Some(2));

    std::fs::write(&set, b"{\"schema_version\": 999, \"name\": \"x\", \"seed\": 0, \"entries\": []}").unwrap();
    assert_eq!(partsim(&["run", "--benchmark", s(&set)]).status.code(), Some(2));

    let out = partsim(&["gen", "--instances", "1", "--links", "2", "--out", s(&set)]);
    assert!(out.status.success());
    assert_eq!(partsim(&["run", "--benchmark", s(&set), "--steps", "0"]).status.code(), Some(2));
}
