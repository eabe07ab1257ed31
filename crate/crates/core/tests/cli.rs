use std::path::Path;
use std::process::{Command, Output};

use epiwarn::dataset::{Manifest, Sweep};
use epiwarn::intervention::Case;
use epiwarn::pipeline::{InterventionSummary, Provenance};

fn epiwarn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epiwarn"))
        .current_dir(dir)
        .env_remove("EPIWARN_CONFIG")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn simulate_writes_trajectory_outcome_and_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(epiwarn(d, &["simulate", "--seed", "7", "--out", "a"]));
    ok(epiwarn(d, &["simulate", "--seed", "7", "--out", "b"]));
    for f in ["trajectory.csv", "outcome.json", "provenance.json"] {
        assert_eq!(read(d.join("a").join(f)), read(d.join("b").join(f)), "{f}");
    }
    let prov: Provenance = serde_json::from_str(&read(d.join("a/provenance.json"))).unwrap();
    assert_eq!(prov.command, "simulate");
    assert_eq!(prov.seeds["sim"], 7);
    assert_eq!(prov.config.sim.seed, 7);

    ok(epiwarn(d, &["simulate", "--seed", "7", "--agent", "3", "--day", "2", "--out", "c"]));
    let base = read(d.join("a/trajectory.csv"));
    let cf = read(d.join("c/trajectory.csv"));
    let prefix = |t: &str| t.lines().take(3).collect::<Vec<_>>().join("\n");
    assert_eq!(prefix(&base), prefix(&cf));
}

#[test]
fn desk_sweep_and_downstream_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = r#"{
        "sweep": {"seeds_per_value": 20},
        "koopman": {"epochs": 2},
        "earlywarn": {"forest": {"n_trees": 20}},
        "paths": {"root": "work"}
    }"#;
    std::fs::write(d.join("cfg.json"), cfg).unwrap();
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "cfg.json"];
        full.extend_from_slice(args);
        ok(epiwarn(d, &full))
    };
    run(&["sweep"]);
    let sweep_dir = d.join("work/sweep");
    let csvs = std::fs::read_dir(sweep_dir.join("runs")).unwrap().count();
    assert_eq!(csvs, 100);
    let manifest = Manifest::read(&sweep_dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.n_runs, 100);
    let sweep = Sweep::read(&sweep_dir).unwrap();
    for (r, t) in manifest.runs.iter().zip(&sweep.trajectories) {
        assert_eq!((r.rho, r.label), (t.outcome.attack_rate, t.outcome.label));
    }

    run(&["train-koopman"]);
    run(&["train-ew"]);
    let stdout = run(&["eval"]);
    assert!(stdout.contains("run auc"), "{stdout}");
    for f in ["koopman/model.json", "earlywarn/forest.json", "eval/eval.json", "eval/end_day.csv", "eval/families.csv"] {
        assert!(d.join("work").join(f).exists(), "{f}");
    }
    for sub in ["sweep", "koopman", "earlywarn", "eval"] {
        assert!(d.join("work").join(sub).join("provenance.json").exists());
    }

    // Run 7 (value 0, seed 7) has a prevented case.
    run(&["intervene", "--runs", "7"]);
    let summary: InterventionSummary = serde_json::from_str(&read(d.join("work/intervene/summary.json"))).unwrap();
    assert_eq!(summary.baselines.len(), 1);
    let (_, rel) = summary.prevented_case.clone().expect("prevented case");
    let case_dir = d.join("work/intervene").join(rel);
    let case = Case::read(&case_dir, 0.3).unwrap();
    assert!(case.report.prevented);

    let svg_path = run(&["report", "--case", case_dir.to_str().unwrap()]);
    let svg = read(svg_path.trim());
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("stroke-dasharray"));
    run(&["report", "--case", case_dir.to_str().unwrap(), "--out", "again.svg"]);
    assert_eq!(read(d.join("again.svg")), svg);
}

#[test]
fn config_from_environment_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("env.json"), r#"{"sim": {"theta_tr": "inf"}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_epiwarn"))
        .current_dir(d)
        .env("EPIWARN_CONFIG", d.join("env.json"))
        .args(["simulate", "--out", "s"])
        .output()
        .unwrap();
    let stdout = ok(out);
    assert!(stdout.contains("attack_rate 0.002"), "{stdout}");
    let stdout = ok(epiwarn(d, &["--set", "sim.theta_tr=inf", "simulate", "--out", "t"]));
    assert!(stdout.contains("attack_rate 0.002"), "{stdout}");
}

#[test]
fn failures_exit_with_category_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    let out = epiwarn(d, &["--set", "sim.n_agnts=5", "simulate", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_agnts"));

    let out = epiwarn(d, &["--set", "sweep.seeds_per_value=0", "sweep"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.seeds_per_value"));

    let out = epiwarn(d, &["train-koopman", "--sweep", "nowhere"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));

    let out = epiwarn(d, &["--config", "missing.json", "simulate", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));

    let out = epiwarn(d, &["frobnicate"]);
    assert!(!out.status.success());
}
