//! Command-line behavior: exit codes, artifacts, bundled presets.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proxyforge"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    for sub in ["train", "eval", "gradcheck", "complexity"] {
        assert!(String::from_utf8_lossy(&out.stdout).contains(sub));
    }
}

#[test]
fn missing_config_exits_two() {
    let out = bin()
        .args(["train", "--config", "/nonexistent/path.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn log_level_env_var_controls_logging() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
  "seed": 2,
  "epochs": 2,
  "train_classes": 6,
  "test_classes": 3,
  "instances_per_class": 4,
  "test_instances_per_class": 3,
  "expected_batch_size": 4,
  "num_trials": 12
}"#,
    )
    .unwrap();
    let args = ["train", "--config", cfg.to_str().unwrap(), "--out", "o"];
    let quiet = bin()
        .args(args)
        .current_dir(dir.path())
        .env_remove("PROXYFORGE_LOG")
        .output()
        .unwrap();
    let verbose = bin()
        .args(args)
        .current_dir(dir.path())
        .env("PROXYFORGE_LOG", "info")
        .output()
        .unwrap();
    assert!(quiet.status.success() && verbose.status.success());
    assert!(!String::from_utf8_lossy(&quiet.stderr).contains("training mp"));
    assert!(String::from_utf8_lossy(&verbose.stderr).contains("training mp"));
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "{ not json").unwrap();
    let out = run_in(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_without_seed_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noseed.cfg");
    std::fs::write(&cfg, r#"{"loss": "mp"}"#).unwrap();
    let out = run_in(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_loss_in_gradcheck_exits_two() {
    let out = bin()
        .args(["gradcheck", "--loss", "contrastive"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_zero_trials_warns_and_passes() {
    let out = bin()
        .args(["gradcheck", "--loss", "mp", "--trials", "0"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("vacuous"));
}

#[test]
fn gradcheck_all_losses_pass_tolerance() {
    let out = bin()
        .args(["gradcheck", "--loss", "all", "--trials", "5", "--seed", "9"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("[ok]").count(), 8, "{stdout}");
}

#[test]
fn missing_model_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 1}"#).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "eval",
            "--model",
            "missing.json",
            "--config",
            cfg.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn diverged_training_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("diverge.cfg");
    std::fs::write(
        &cfg,
        r#"{
  "seed": 1,
  "loss": "prototypical",
  "learning_rate": 1e300,
  "epochs": 3,
  "train_classes": 4,
  "test_classes": 2,
  "instances_per_class": 4,
  "test_instances_per_class": 3,
  "expected_batch_size": 4,
  "num_trials": 10
}"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn infeasible_complexity_grid_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.cfg");
    // Only three grid points.
    std::fs::write(
        &cfg,
        r#"{"seed": 1, "losses": ["mp"], "sweep": "train_size", "values": [40, 80, 160]}"#,
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &["complexity", "--config", cfg.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mp_balance_preset_completes_benchmark() {
    // The bundled preset: balanced sampling with two shots per class and
    // the 0.3 regulator weight, on the synthetic benchmark.
    let dir = tempfile::tempdir().unwrap();
    let preset = repo_config("mp_balance.cfg");
    let out = run_in(
        dir.path(),
        &[
            "train",
            "--config",
            preset.to_str().unwrap(),
            "--out",
            "run",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["loss"], "mp");
    assert_eq!(summary["epochs_run"], 40);
    let best = summary["best_eer_percent"].as_f64().unwrap();
    assert!(best <= 2.0, "best EER {best}%");

    // The metrics log parses as CSV with the documented header.
    let metrics = std::fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("epoch,loss,lr,eer_percent"));
    assert_eq!(lines.count(), 40);

    // The snapshot reloads.
    let model =
        proxyforge::trainer::TrainedModel::load(&dir.path().join("run/model.json")).unwrap();
    assert_eq!(model.loss, proxyforge::losses::LossKind::MaskedProxy);
}

#[test]
fn eval_reports_eer_and_matches_oracle_on_emitted_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
  "seed": 5,
  "loss": "mp",
  "epochs": 20,
  "train_classes": 12,
  "test_classes": 5,
  "instances_per_class": 6,
  "test_instances_per_class": 5,
  "expected_batch_size": 8,
  "num_trials": 60
}"#,
    )
    .unwrap();
    let cfg_str = cfg.to_str().unwrap();
    let trained = run_in(dir.path(), &["train", "--config", cfg_str, "--out", "t"]);
    assert!(trained.status.success());
    let out = run_in(
        dir.path(),
        &[
            "eval",
            "--model",
            "t/model.json",
            "--config",
            cfg_str,
            "--out",
            "e",
        ],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let eer_line = stdout
        .lines()
        .find(|l| l.starts_with("EER% = "))
        .expect("EER line");
    let reported: f64 = eer_line.trim_start_matches("EER% = ").parse().unwrap();

    // Re-derive the EER from the emitted score CSV with a brute-force
    // threshold sweep.
    let scores_csv = std::fs::read_to_string(dir.path().join("e/scores.csv")).unwrap();
    let mut targets = Vec::new();
    let mut nontargets = Vec::new();
    for line in scores_csv.lines().skip(1) {
        let mut fields = line.split(',');
        let _id = fields.next().unwrap();
        let is_target: bool = fields.next().unwrap().parse().unwrap();
        let score: f64 = fields.next().unwrap().parse().unwrap();
        if is_target {
            targets.push(score);
        } else {
            nontargets.push(score);
        }
    }
    let mut candidates: Vec<f64> = targets.iter().chain(&nontargets).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates.push(candidates.last().unwrap() + 1.0);
    let mut best_gap = f64::INFINITY;
    let mut oracle = 0.0;
    for &t in &candidates {
        let far = nontargets.iter().filter(|&&s| s >= t).count() as f64 / nontargets.len() as f64;
        let frr = targets.iter().filter(|&&s| s < t).count() as f64 / targets.len() as f64;
        if (far - frr).abs() < best_gap {
            best_gap = (far - frr).abs();
            oracle = (far + frr) / 2.0;
        }
    }
    let step = 100.0 / targets.len().min(nontargets.len()) as f64;
    assert!(
        (reported - oracle * 100.0).abs() <= step,
        "reported {reported}% vs oracle {}%",
        oracle * 100.0
    );

    // DET CSV parses and is consistent.
    let det = std::fs::read_to_string(dir.path().join("e/det.csv")).unwrap();
    assert!(det.starts_with("threshold,far,frr\n"));
    assert!(det.lines().count() > 1);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
  "seed": 5,
  "epochs": 3,
  "train_classes": 6,
  "test_classes": 3,
  "instances_per_class": 4,
  "test_instances_per_class": 3,
  "expected_batch_size": 4,
  "num_trials": 12
}"#,
    )
    .unwrap();
    let cfg_str = cfg.to_str().unwrap();
    let a = run_in(dir.path(), &["train", "--config", cfg_str, "--out", "a"]);
    let b = run_in(
        dir.path(),
        &["train", "--config", cfg_str, "--out", "b", "--seed", "99"],
    );
    assert!(a.status.success() && b.status.success());
    let ma = std::fs::read(dir.path().join("a/metrics.csv")).unwrap();
    let mb = std::fs::read(dir.path().join("b/metrics.csv")).unwrap();
    assert_ne!(ma, mb, "a different seed must change the run");
}
