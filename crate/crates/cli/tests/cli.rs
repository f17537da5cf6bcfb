use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedshap_core::GradientLog;
use serde_json::Value;

const MINIMAL: &str = r#"
seeds = [7]

[scenario]
clients = 4
epochs = 12
fraction = 0.5

[scenario.data]
source = "synthetic"

[scenario.train]
local_epochs = 3
batch_size = 32
learning_rate = 0.1
"#;

const POISONED: &str = r#"
[detection]
enabled = true
dishonest = [1]
window = [1, 4]
"#;

fn fedshap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedshap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str], cwd: &Path) {
    let out = fedshap(args, cwd);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn setup(config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("experiment.toml");
    fs::write(&path, config).unwrap();
    (dir, path)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_a_lossless_log_and_manifest() {
    let (dir, _) = setup(MINIMAL);
    let cwd = dir.path();
    run_ok(&["simulate", "--config", "experiment.toml", "--out", "run"], cwd);
    let text = fs::read_to_string(cwd.join("run/gradient_log.json")).unwrap();
    let log = GradientLog::from_json(&text).unwrap();
    log.validate().unwrap();
    assert_eq!(log.num_epochs(), 12);
    assert_eq!(log.num_clients, 4);
    assert_eq!(log.to_json().unwrap(), text);
    assert_eq!(log.meta["seed"], "7");

    let manifest = json(&cwd.join("run/manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap(), log.meta["config_hash"]);
    assert_eq!(manifest["config"]["scenario"]["clients"], 4);
}

#[test]
fn zero_fraction_is_rejected_with_its_field() {
    let (dir, _) = setup(&MINIMAL.replace("fraction = 0.5", "fraction = 0.0"));
    let out = fedshap(&["simulate", "--config", "experiment.toml", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.fraction"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn malformed_inputs_exit_with_one() {
    let (dir, _) = setup(&MINIMAL.replace("fraction = 0.5", "fraction = 0.5\nfractoin = 0.5"));
    let cwd = dir.path();
    let out = fedshap(&["simulate", "--config", "experiment.toml"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fractoin"));

    assert_eq!(fedshap(&["simulate", "--config", "missing.toml"], cwd).status.code(), Some(1));
    assert_eq!(fedshap(&["simulate"], cwd).status.code(), Some(1));
    assert_eq!(fedshap(&["frobnicate"], cwd).status.code(), Some(1));

    let (dir, _) = setup(MINIMAL);
    let cwd = dir.path();
    let out = fedshap(&["assess", "--config", "experiment.toml", "--log", "nope.json"], cwd);
    assert_eq!(out.status.code(), Some(1));
    // the default solver assesses everything, so there is nothing to schedule
    run_ok(&["simulate", "--config", "experiment.toml", "--out", "run"], cwd);
    let out = fedshap(&["schedule", "--config", "experiment.toml", "--out", "run"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("assessment.solver"));
}

#[test]
fn reruns_are_byte_identical_apart_from_timing() {
    let config = format!("{MINIMAL}{POISONED}");
    let (dir, _) = setup(&config);
    let cwd = dir.path();
    for out in ["a", "b"] {
        for cmd in ["simulate", "assess", "detect"] {
            run_ok(&[cmd, "--config", "experiment.toml", "--out", out], cwd);
        }
    }
    let mut names: Vec<String> = fs::read_dir(cwd.join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 10);
    let hash = json(&cwd.join("a/manifest.json"))["config_hash"].as_str().unwrap().to_string();
    for name in &names {
        let a = fs::read(cwd.join("a").join(name)).unwrap();
        let text = String::from_utf8(a.clone()).unwrap();
        assert!(text.contains(&hash), "{name} lacks the config hash");
        assert!(text.contains("seed"), "{name} lacks the seed");
        if !name.starts_with("timing_") {
            assert_eq!(a, fs::read(cwd.join("b").join(name)).unwrap(), "{name} differs");
        }
    }
}

#[test]
fn seed_flag_changes_the_run() {
    let (dir, _) = setup(MINIMAL);
    let cwd = dir.path();
    run_ok(&["simulate", "--config", "experiment.toml", "--out", "a"], cwd);
    run_ok(&["simulate", "--config", "experiment.toml", "--out", "b", "--seed", "8"], cwd);
    let a = fs::read_to_string(cwd.join("a/gradient_log.json")).unwrap();
    let b = fs::read_to_string(cwd.join("b/gradient_log.json")).unwrap();
    assert_ne!(a, b);
    assert_eq!(json(&cwd.join("b/manifest.json"))["seed"], 8);
}

#[test]
fn cutoff_yields_marked_partial_results() {
    let (dir, _) = setup(MINIMAL);
    let cwd = dir.path();
    run_ok(&["simulate", "--config", "experiment.toml", "--out", "run"], cwd);
    let out = fedshap(&["assess", "--config", "experiment.toml", "--out", "run", "--cutoff-seconds", "0"], cwd);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&cwd.join("run/summary.json"));
    assert_eq!(summary["complete"], false);
    assert_eq!(summary["summary"]["computed_epochs"].as_array().unwrap().len(), 0);
    let csv = fs::read_to_string(cwd.join("run/timeline.csv")).unwrap();
    assert!(csv.contains("# complete=false"));
    assert_eq!(json(&cwd.join("run/timeline.json"))["timeline"]["complete"], false);

    // a partial timeline cannot be analysed for change points
    let out = fedshap(&["detect", "--config", "experiment.toml", "--out", "run"], cwd);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_assessment_decomposes() {
    let (dir, _) = setup(MINIMAL);
    let cwd = dir.path();
    run_ok(&["simulate", "--config", "experiment.toml", "--out", "run"], cwd);
    run_ok(&["assess", "--config", "experiment.toml", "--out", "run"], cwd);
    let s = &json(&cwd.join("run/summary.json"))["summary"];
    let totals: f64 = s["totals"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((totals - s["final_utility"].as_f64().unwrap()).abs() < 1e-9);
    assert_eq!(s["residual"], 0.0);
    assert!(!cwd.join("run/schedule.json").exists());
}

#[test]
fn scheduled_assessment_respects_the_budget() {
    let config = MINIMAL.to_string() + "\n[assessment]\nsolver = \"two_sided_exact\"\nk = 4\ngamma = 1.0\n";
    let (dir, _) = setup(&config);
    let cwd = dir.path();
    run_ok(&["simulate", "--config", "experiment.toml", "--out", "run"], cwd);
    run_ok(&["schedule", "--config", "experiment.toml", "--out", "run"], cwd);
    let schedule = json(&cwd.join("run/schedule.json"));
    let picked = schedule["selected_epochs"].as_array().unwrap().len();
    assert!(picked <= 4);
    run_ok(&["assess", "--config", "experiment.toml", "--out", "run"], cwd);
    let summary = json(&cwd.join("run/summary.json"));
    assert_eq!(summary["selected_epochs"], schedule["selected_epochs"]);
    assert_eq!(summary["summary"]["computed_epochs"], schedule["selected_epochs"]);
}

#[test]
fn detect_reports_every_client() {
    let config = format!("{MINIMAL}{POISONED}");
    let (dir, _) = setup(&config);
    let cwd = dir.path();
    for cmd in ["simulate", "assess", "detect"] {
        run_ok(&[cmd, "--config", "experiment.toml", "--out", "run"], cwd);
    }
    let report = json(&cwd.join("run/detection.json"));
    let clients = report["clients"].as_array().unwrap();
    assert_eq!(clients.len(), 4);
    for (c, entry) in clients.iter().enumerate() {
        assert_eq!(entry["client_id"], c);
        assert_eq!(entry["dishonest"], c == 1);
        let mass = entry["window_mass"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&mass));
        assert_eq!(entry["posterior"]["mass"].as_array().unwrap().len(), 12);
    }
    let j = report["jaccard_honest_separation"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&j));
    let text = fs::read_to_string(cwd.join("run/detection_report.txt")).unwrap();
    assert!(text.contains("window: epochs 1..=4"));
    assert!(text.contains("partition:"));
}

#[test]
fn csv_source_is_split_into_training_and_validation() {
    let mut csv = String::from("a,b,label\n");
    for r in 0..200 {
        let y = r % 2;
        let shift = if y == 1 { 2.5 } else { -2.5 };
        csv.push_str(&format!("{},{},{y}\n", shift + ((r * 37) % 11) as f64 / 10.0, -shift + ((r * 13) % 7) as f64 / 10.0));
    }
    let config = MINIMAL.replace(
        "source = \"synthetic\"",
        "source = \"csv\"\npath = \"data.csv\"\nvalidation_fraction = 0.25",
    );
    let (dir, _) = setup(&config);
    let cwd = dir.path();
    fs::write(cwd.join("data.csv"), csv).unwrap();
    run_ok(&["simulate", "--config", "experiment.toml", "--out", "run"], cwd);
    let log = GradientLog::read(cwd.join("run/gradient_log.json")).unwrap();
    assert_eq!(log.validation.len(), 50);

    fs::remove_file(cwd.join("data.csv")).unwrap();
    let out = fedshap(&["simulate", "--config", "experiment.toml", "--out", "run"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.data.path"));
}

#[test]
fn compare_tables_are_reproducible_and_exact_scores_zero() {
    let config = MINIMAL.to_string()
        + "\n[compare]\nclients = [3, 4]\nepochs = [5]\nmc_samples = [10, 100]\nbudget_ratios = [0.4, 1.0]\nsolvers = [\"one_sided\", \"two_sided_exact\"]\n";
    let (dir, _) = setup(&config);
    let cwd = dir.path();
    run_ok(&["compare", "--config", "experiment.toml", "--out", "a"], cwd);
    let cfg2 = config.clone() + "parallelism = 1\n";
    fs::write(cwd.join("serial.toml"), cfg2).unwrap();
    run_ok(&["compare", "--config", "serial.toml", "--out", "b"], cwd);

    let table = fs::read_to_string(cwd.join("a/compare_mse.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    // two instances, each with exact + 2 MC + 2 solvers x 2 ratios
    assert_eq!(rows.len(), 2 * 7);
    for r in &rows {
        assert_eq!(r[5], "1");
        if r[4] == "exact" || r[4] == "one_sided_r1" {
            assert_eq!(r[7], "0.0", "{r:?}");
        }
    }
    // parallelism changes nothing but timing
    let strip = |s: String| s.lines().filter(|l| !l.starts_with("# config_hash")).collect::<Vec<_>>().join("\n");
    for name in ["compare_mse.csv", "cactus_mse.csv"] {
        let a = fs::read_to_string(cwd.join("a").join(name)).unwrap();
        let b = fs::read_to_string(cwd.join("b").join(name)).unwrap();
        assert_eq!(strip(a), strip(b), "{name}");
    }
    let runtime = fs::read_to_string(cwd.join("a/cactus_runtime.csv")).unwrap();
    assert!(runtime.lines().any(|l| l.starts_with("exact,2,")));
}

#[test]
fn compare_counts_cutoff_instances_as_unsolved() {
    let config = MINIMAL.to_string() + "\n[compare]\nepochs = [4]\nmc_samples = [10]\nbudget_ratios = [0.5]\n";
    let (dir, _) = setup(&config);
    let cwd = dir.path();
    let out = fedshap(&["compare", "--config", "experiment.toml", "--out", "run", "--cutoff-seconds", "0"], cwd);
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(cwd.join("run/compare_mse.csv")).unwrap();
    for line in table.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        // a schedule that picks no epoch finishes trivially, but nothing can be scored
        if cols[4] == "exact" {
            assert_eq!(cols[5], "0");
        }
        assert_eq!(cols[7], "");
    }
    let cactus = fs::read_to_string(cwd.join("run/cactus_runtime.csv")).unwrap();
    assert!(!cactus.lines().any(|l| l.starts_with("exact,")));
}
