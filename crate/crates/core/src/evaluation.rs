//! Verification-trial scoring and equal-error-rate computation.
//!
//! A trial compares two utterances: a fixed number of segments is taken at
//! evenly spaced offsets spanning each utterance, every segment is embedded,
//! and the score is the negated mean of all pairwise Euclidean distances
//! (higher means more similar). The EER is read off the ROC polyline with
//! linear interpolation between operating points.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synth::{Split, Utterance};
use crate::trainer::ToyEmbedder;
use crate::vecmath::euclidean_distance;

/// One verification trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub utterance_a: Utterance,
    pub utterance_b: Utterance,
    pub is_target: bool,
}

/// Scores split by trial label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub target_scores: Vec<f64>,
    pub nontarget_scores: Vec<f64>,
}

/// Evenly spaced segment start offsets spanning `0..=len - segment_length`.
/// A single segment starts at 0.
pub fn segment_offsets(
    len: usize,
    segment_length: usize,
    num_segments: usize,
) -> Result<Vec<usize>> {
    if len < segment_length {
        return Err(Error::TrialTooShort {
            frames: len,
            segment_length,
        });
    }
    debug_assert!(num_segments >= 1);
    let span = (len - segment_length) as f64;
    if num_segments == 1 {
        return Ok(vec![0]);
    }
    Ok((0..num_segments)
        .map(|i| (i as f64 * span / (num_segments - 1) as f64).round() as usize)
        .collect())
}

/// Score a trial and report the number of distance evaluations performed
/// (`num_segments` squared).
pub fn score_trial_counted(
    trial: &Trial,
    embedder: &ToyEmbedder,
    num_segments: usize,
    segment_length: usize,
) -> Result<(f64, u64)> {
    let embed_all = |utt: &Utterance| -> Result<Vec<crate::embedding::Embedding>> {
        segment_offsets(utt.len(), segment_length, num_segments)?
            .into_iter()
            .map(|start| embedder.embed_segment(utt, start, segment_length))
            .collect()
    };
    let a = embed_all(&trial.utterance_a)?;
    let b = embed_all(&trial.utterance_b)?;

    let mut sum = 0.0;
    let mut evaluations = 0u64;
    for ea in &a {
        for eb in &b {
            sum += euclidean_distance(ea.values(), eb.values());
            evaluations += 1;
        }
    }
    Ok((-(sum / evaluations as f64), evaluations))
}

/// Score a trial: the negated mean of the pairwise segment distances.
pub fn score_trial(
    trial: &Trial,
    embedder: &ToyEmbedder,
    num_segments: usize,
    segment_length: usize,
) -> Result<f64> {
    score_trial_counted(trial, embedder, num_segments, segment_length).map(|(s, _)| s)
}

/// One ROC operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Operating points at every distinct score plus a sentinel beyond the
/// maximum, in ascending threshold order.
pub fn det_points(scores: &ScoreSet) -> Result<Vec<DetPoint>> {
    if scores.target_scores.is_empty() || scores.nontarget_scores.is_empty() {
        return Err(Error::Evaluation {
            reason: "both target and nontarget scores are required".to_string(),
        });
    }
    let mut targets = scores.target_scores.clone();
    let mut nontargets = scores.nontarget_scores.clone();
    targets.sort_by(f64::total_cmp);
    nontargets.sort_by(f64::total_cmp);

    let mut thresholds: Vec<f64> = targets.iter().chain(nontargets.iter()).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let max = *thresholds.last().expect("non-empty");
    thresholds.push(max + 1.0);

    let n_t = targets.len() as f64;
    let n_n = nontargets.len() as f64;
    Ok(thresholds
        .into_iter()
        .map(|t| {
            // FAR: fraction of nontargets at or above the threshold.
            let below_n = nontargets.partition_point(|&s| s < t);
            // FRR: fraction of targets below the threshold.
            let below_t = targets.partition_point(|&s| s < t);
            DetPoint {
                threshold: t,
                far: (nontargets.len() - below_n) as f64 / n_n,
                frr: below_t as f64 / n_t,
            }
        })
        .collect())
}

/// Equal error rate from the ROC polyline: sweep thresholds at all distinct
/// scores and return the FAR/FRR crossing, linearly interpolated between
/// adjacent operating points. Returns `(eer, threshold)`.
pub fn compute_eer(scores: &ScoreSet) -> Result<(f64, f64)> {
    let points = det_points(scores)?;
    // FAR - FRR is non-increasing in the threshold: it is 1 at the minimum
    // score (every nontarget accepted, no target rejected) and -1 at the
    // sentinel, so a crossing always exists past the first point.
    let mut prev: Option<&DetPoint> = None;
    for p in &points {
        let diff = p.far - p.frr;
        if diff == 0.0 {
            return Ok((p.far, p.threshold));
        }
        if diff < 0.0 {
            let a = prev.expect("first operating point has FAR - FRR = 1");
            let d1 = a.far - a.frr;
            let d2 = diff;
            let lambda = d1 / (d1 - d2);
            let eer = a.far + lambda * (p.far - a.far);
            let threshold = a.threshold + lambda * (p.threshold - a.threshold);
            return Ok((eer, threshold));
        }
        prev = Some(p);
    }
    unreachable!("the sentinel operating point has FAR - FRR = -1");
}

/// Balanced target/nontarget trials over held-out classes, deterministic per
/// seed. Target and nontarget counts differ by at most one.
pub fn build_trials(test: &Split, num_trials: usize, seed: u64) -> Result<Vec<Trial>> {
    if test.classes.len() < 2 {
        return Err(Error::Evaluation {
            reason: format!(
                "need at least 2 test classes to build trials, got {}",
                test.classes.len()
            ),
        });
    }
    let pair_classes: Vec<usize> = (0..test.classes.len())
        .filter(|&c| test.classes[c].utterances.len() >= 2)
        .collect();
    if pair_classes.is_empty() {
        return Err(Error::Evaluation {
            reason: "no test class has 2 utterances for target trials".to_string(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(num_trials);
    for i in 0..num_trials {
        let is_target = i % 2 == 0;
        if is_target {
            let c = pair_classes[rng.random_range(0..pair_classes.len())];
            let class = &test.classes[c];
            let a = rng.random_range(0..class.utterances.len());
            let mut b = rng.random_range(0..class.utterances.len() - 1);
            if b >= a {
                b += 1;
            }
            trials.push(Trial {
                utterance_a: class.utterances[a].clone(),
                utterance_b: class.utterances[b].clone(),
                is_target: true,
            });
        } else {
            let ca = rng.random_range(0..test.classes.len());
            let mut cb = rng.random_range(0..test.classes.len() - 1);
            if cb >= ca {
                cb += 1;
            }
            let class_a = &test.classes[ca];
            let class_b = &test.classes[cb];
            trials.push(Trial {
                utterance_a: class_a.utterances[rng.random_range(0..class_a.utterances.len())]
                    .clone(),
                utterance_b: class_b.utterances[rng.random_range(0..class_b.utterances.len())]
                    .clone(),
                is_target: false,
            });
        }
    }
    Ok(trials)
}

/// Write per-trial scores as CSV: `trial_id,is_target,score`.
pub fn write_trial_scores_csv(path: &Path, trials: &[Trial], scores: &[f64]) -> Result<()> {
    debug_assert_eq!(trials.len(), scores.len());
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "trial_id,is_target,score")?;
    for (i, (t, s)) in trials.iter().zip(scores).enumerate() {
        writeln!(file, "{},{},{}", i, t.is_target, s)?;
    }
    Ok(())
}

/// Write DET operating points as CSV: `threshold,far,frr`.
pub fn write_det_csv(path: &Path, points: &[DetPoint]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "threshold,far,frr")?;
    for p in points {
        writeln!(file, "{},{},{}", p.threshold, p.far, p.frr)?;
    }
    Ok(())
}
