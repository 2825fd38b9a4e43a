//! Subcommand implementations.

use std::path::Path;
use std::process::ExitCode;

use log::info;

use proxyforge::complexity::{fit_scaling, write_scaling_csv, ProbeConfig, SweptParam};
use proxyforge::evaluation::{
    compute_eer, det_points, score_trial, write_det_csv, write_trial_scores_csv, ScoreSet, Trial,
};
use proxyforge::losses::{gradcheck_loss, LossKind, GRADCHECK_TOLERANCE};
use proxyforge::synth::Dataset;
use proxyforge::trainer::{train as run_training, write_metrics_csv, TrainedModel};
use proxyforge::Error;

use crate::config::{ComplexityGridConfig, ExperimentConfig};
use crate::{EXIT_DIVERGED, EXIT_USAGE};

fn usage_error(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_USAGE)
}

fn out_dir(flag: Option<&Path>, config_dir: Option<&str>) -> std::path::PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config_dir.map(std::path::PathBuf::from))
        .unwrap_or_else(|| std::path::PathBuf::from("."))
}

pub fn train(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> ExitCode {
    let mut config = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let train_config = match config.train_config() {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    let dataset = match Dataset::open_set(
        &config.dataset_config(),
        config.test_classes,
        config.test_instances_per_class,
    ) {
        Ok(d) => d,
        Err(e) => return usage_error(&format!("dataset generation failed: {e}")),
    };

    let dir = out_dir(out, config.out_dir.as_deref());
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return usage_error(&format!("cannot create {}: {e}", dir.display()));
    }

    info!(
        "training {} for {} epochs",
        train_config.loss, train_config.epochs
    );
    let outcome = match run_training(&train_config, &dataset) {
        Ok(o) => o,
        Err(Error::TrainingDiverged { epoch }) => {
            eprintln!("error: training diverged at epoch {epoch}");
            return ExitCode::from(EXIT_DIVERGED);
        }
        Err(e) => return usage_error(&format!("training failed: {e}")),
    };

    let best = outcome
        .metrics
        .iter()
        .map(|m| m.eer_percent)
        .fold(f64::INFINITY, f64::min);
    let last = outcome.metrics.last().map(|m| m.eer_percent);
    let summary = serde_json::json!({
        "loss": train_config.loss.name(),
        "epochs_run": outcome.metrics.len(),
        "final_eer_percent": last,
        "best_eer_percent": if best.is_finite() { Some(best) } else { None },
        "final_lr": outcome.final_lr,
    });

    let write = || -> proxyforge::Result<()> {
        write_metrics_csv(&dir.join("metrics.csv"), &outcome.metrics)?;
        outcome.model.save(&dir.join("model.json"))?;
        std::fs::write(
            dir.join("summary.json"),
            format!("{}\n", serde_json::to_string_pretty(&summary)?),
        )?;
        Ok(())
    };
    if let Err(e) = write() {
        eprintln!("error: writing artifacts: {e}");
        return ExitCode::FAILURE;
    }
    println!("{summary}");
    ExitCode::SUCCESS
}

/// Score trials across `workers` threads; scores land in trial order, so the
/// reduction is deterministic regardless of thread count.
fn score_all(
    trials: &[Trial],
    model: &TrainedModel,
    num_segments: usize,
    segment_length: usize,
    workers: usize,
) -> proxyforge::Result<Vec<f64>> {
    let workers = workers.max(1).min(trials.len().max(1));
    let mut scores = vec![0.0f64; trials.len()];
    if workers <= 1 {
        for (slot, trial) in trials.iter().enumerate() {
            scores[slot] = score_trial(trial, &model.embedder, num_segments, segment_length)?;
        }
        return Ok(scores);
    }
    let chunk = trials.len().div_ceil(workers);
    let mut failed: Option<proxyforge::Error> = None;
    std::thread::scope(|scope| {
        let handles: Vec<_> = trials
            .chunks(chunk)
            .zip(scores.chunks_mut(chunk))
            .map(|(trial_chunk, score_chunk)| {
                scope.spawn(move || -> proxyforge::Result<()> {
                    for (t, s) in trial_chunk.iter().zip(score_chunk) {
                        *s = score_trial(t, &model.embedder, num_segments, segment_length)?;
                    }
                    Ok(())
                })
            })
            .collect();
        for h in handles {
            if let Err(e) = h.join().expect("scoring thread panicked") {
                failed = Some(e);
            }
        }
    });
    match failed {
        Some(e) => Err(e),
        None => Ok(scores),
    }
}

pub fn eval(
    model_path: &Path,
    config_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    workers: usize,
) -> ExitCode {
    let model = match TrainedModel::load(model_path) {
        Ok(m) => m,
        Err(e) => return usage_error(&format!("cannot load model {}: {e}", model_path.display())),
    };
    let mut config = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }

    let dataset = match Dataset::open_set(
        &config.dataset_config(),
        config.test_classes,
        config.test_instances_per_class,
    ) {
        Ok(d) => d,
        Err(e) => return usage_error(&format!("dataset generation failed: {e}")),
    };
    let trials =
        match proxyforge::evaluation::build_trials(&dataset.test, config.num_trials, config.seed) {
            Ok(t) => t,
            Err(e) => return usage_error(&format!("building trials failed: {e}")),
        };

    let scores = match score_all(
        &trials,
        &model,
        config.eval_num_segments,
        config.eval_segment_len,
        workers,
    ) {
        Ok(s) => s,
        Err(e) => return usage_error(&format!("scoring failed: {e}")),
    };

    let mut score_set = ScoreSet::default();
    for (t, &s) in trials.iter().zip(&scores) {
        if t.is_target {
            score_set.target_scores.push(s);
        } else {
            score_set.nontarget_scores.push(s);
        }
    }
    let (eer, threshold) = match compute_eer(&score_set) {
        Ok(v) => v,
        Err(e) => return usage_error(&format!("EER computation failed: {e}")),
    };

    let dir = out_dir(out, config.out_dir.as_deref());
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return usage_error(&format!("cannot create {}: {e}", dir.display()));
    }
    let write = || -> proxyforge::Result<()> {
        write_trial_scores_csv(&dir.join("scores.csv"), &trials, &scores)?;
        write_det_csv(&dir.join("det.csv"), &det_points(&score_set)?)?;
        Ok(())
    };
    if let Err(e) = write() {
        eprintln!("error: writing artifacts: {e}");
        return ExitCode::FAILURE;
    }

    info!("threshold at crossing: {threshold}");
    println!("EER% = {:.2}", eer * 100.0);
    ExitCode::SUCCESS
}

pub fn gradcheck(loss: &str, seed: u64, trials: usize) -> ExitCode {
    let kinds: Vec<LossKind> = if loss == "all" {
        LossKind::ALL.to_vec()
    } else {
        match loss.parse::<LossKind>() {
            Ok(k) => vec![k],
            Err(e) => return usage_error(&format!("{e}")),
        }
    };
    if trials == 0 {
        println!("warning: 0 trials requested; gradient check passes vacuously");
        return ExitCode::SUCCESS;
    }

    let mut all_pass = true;
    for kind in kinds {
        let report = match gradcheck_loss(kind, seed, trials) {
            Ok(r) => r,
            Err(e) => return usage_error(&format!("gradcheck failed for {kind}: {e}")),
        };
        let pass = report.passes(GRADCHECK_TOLERANCE);
        all_pass &= pass;
        println!(
            "{:<22} embeddings {:.3e}  proxies {:.3e}  alpha {:.3e}  beta {:.3e}  [{}]",
            kind.name(),
            report.max_rel_embeddings,
            report.max_rel_proxies,
            report.max_rel_alpha,
            report.max_rel_beta,
            if pass { "ok" } else { "FAIL" }
        );
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

pub fn complexity(config_path: &Path, out: Option<&Path>) -> ExitCode {
    let config = match ComplexityGridConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    let sweep = match config.sweep.as_str() {
        "train_size" => SweptParam::TrainSize,
        "proxy_count" => SweptParam::ProxyCount,
        "train_size_full_batch" => SweptParam::TrainSizeFullBatch {
            classes: config.full_batch_classes,
        },
        other => return usage_error(&format!("unknown sweep: {other}")),
    };

    let mut reports = Vec::new();
    for name in &config.losses {
        let kind: LossKind = match name.parse() {
            Ok(k) => k,
            Err(e) => return usage_error(&format!("{e}")),
        };
        let mut base = ProbeConfig::new(
            kind,
            config.train_size,
            config.batch_size,
            config.proxy_count,
            config.shots,
        );
        base.seed = config.seed;
        let report = match fit_scaling(&base, sweep, &config.values) {
            Ok(r) => r,
            Err(e) => return usage_error(&format!("scaling sweep failed for {kind}: {e}")),
        };
        println!(
            "{:<22} {:<22} slope {:.4}  rms residual {:.4}",
            kind.name(),
            sweep.name(),
            report.slope,
            report.rms_residual
        );
        reports.push(report);
    }

    let dir = out_dir(out, config.out_dir.as_deref());
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return usage_error(&format!("cannot create {}: {e}", dir.display()));
    }
    if let Err(e) = write_scaling_csv(&dir.join("scaling.csv"), &reports) {
        eprintln!("error: writing scaling.csv: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
