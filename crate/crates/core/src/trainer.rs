//! Desk-scale end-to-end optimization: a toy affine embedder with length
//! normalization, vanilla SGD over every learnable tensor, a
//! reduce-on-plateau learning-rate schedule keyed to test EER, and per-epoch
//! metrics logging.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batching::{epoch_batches, SamplerConfig};
use crate::embedding::{init_proxies, Embedding, Minibatch, ProxyTable, SimilarityParams};
use crate::error::{Error, Result};
use crate::evaluation::{build_trials, compute_eer, score_trial, Trial};
use crate::losses::{evaluate_loss, LossHyperparams, LossKind};
use crate::synth::Dataset;
use crate::vecmath::{axpy, norm, normalize_backward};

/// A single affine map from feature space to embedding space followed by
/// length normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEmbedder {
    /// Row-major `embedding_dim x feature_dim`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Intermediate values of one embedder forward pass, kept for the backward
/// pass.
#[derive(Debug, Clone)]
pub struct EmbedCache {
    features: Vec<f64>,
    unit: Vec<f64>,
    prenorm: f64,
}

impl ToyEmbedder {
    /// Gaussian init with scale `1/sqrt(feature_dim)`; zero bias.
    pub fn init(feature_dim: usize, embedding_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (feature_dim as f64).sqrt();
        let weights = (0..embedding_dim)
            .map(|_| {
                (0..feature_dim)
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        scale * g
                    })
                    .collect()
            })
            .collect();
        Self {
            weights,
            bias: vec![0.0; embedding_dim],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn embedding_dim(&self) -> usize {
        self.weights.len()
    }

    /// Embed a pooled feature vector, returning the unit embedding and the
    /// cache the backward pass needs.
    pub fn embed_features(&self, features: &[f64]) -> Result<(Embedding, EmbedCache)> {
        let mut pre: Vec<f64> = self
            .weights
            .iter()
            .map(|row| crate::vecmath::dot(row, features))
            .collect();
        for (y, b) in pre.iter_mut().zip(&self.bias) {
            *y += b;
        }
        let prenorm = norm(&pre);
        if prenorm == 0.0 || !prenorm.is_finite() {
            return Err(Error::Normalization);
        }
        let unit: Vec<f64> = pre.iter().map(|y| y / prenorm).collect();
        Ok((
            Embedding::from_raw(unit.clone()),
            EmbedCache {
                features: features.to_vec(),
                unit,
                prenorm,
            },
        ))
    }

    /// Embed the mean of `len` frames starting at `start`.
    pub fn embed_segment(
        &self,
        utterance: &crate::synth::Utterance,
        start: usize,
        len: usize,
    ) -> Result<Embedding> {
        if utterance.len() < start + len {
            return Err(Error::TrialTooShort {
                frames: utterance.len(),
                segment_length: len,
            });
        }
        let pooled = utterance.pooled_segment(start, len);
        Ok(self.embed_features(&pooled)?.0)
    }
}

/// Gradients for one SGD step over every learnable tensor.
#[derive(Debug, Clone)]
pub struct StepGrads {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub proxies: Vec<Vec<f64>>,
    pub alpha: f64,
    pub beta: f64,
}

impl StepGrads {
    pub fn zeros(embedder: &ToyEmbedder, proxies: &ProxyTable) -> Self {
        Self {
            weights: vec![vec![0.0; embedder.feature_dim()]; embedder.embedding_dim()],
            bias: vec![0.0; embedder.embedding_dim()],
            proxies: vec![vec![0.0; proxies.dim()]; proxies.len()],
            alpha: 0.0,
            beta: 0.0,
        }
    }

    /// Chain a loss gradient with respect to one unit embedding back onto
    /// the embedder weights and bias.
    pub fn accumulate_embedding(&mut self, cache: &EmbedCache, grad_embedding: &[f64]) {
        let g_pre = normalize_backward(&cache.unit, cache.prenorm, grad_embedding);
        for (row, (w_row, b)) in self.weights.iter_mut().zip(&mut self.bias).enumerate() {
            axpy(w_row, g_pre[row], &cache.features);
            *b += g_pre[row];
        }
    }
}

/// Vanilla SGD: `p <- p - lr * g` for the embedder weights, the proxies, and
/// the two similarity scalars. Proxies are re-normalized to unit length and
/// the scale is clamped to its floor after the step.
pub fn sgd_step(
    embedder: &mut ToyEmbedder,
    proxies: &mut ProxyTable,
    params: &mut SimilarityParams,
    grads: &StepGrads,
    lr: f64,
) -> Result<()> {
    for (row, g_row) in embedder.weights.iter_mut().zip(&grads.weights) {
        axpy(row, -lr, g_row);
    }
    axpy(&mut embedder.bias, -lr, &grads.bias);
    proxies.sgd_step(&grads.proxies, lr)?;
    params.alpha -= lr * grads.alpha;
    params.beta -= lr * grads.beta;
    params.clamp_alpha();
    Ok(())
}

/// Reduce-on-plateau schedule: when the metric has not strictly improved on
/// the best value seen for `patience` consecutive epochs, the learning rate
/// is multiplied by `factor` and the counter resets. Ties count as
/// non-improvement.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feed one epoch's metric (lower is better). Returns true when the
    /// learning rate was reduced.
    pub fn observe(&mut self, metric: f64) -> bool {
        let improved = match self.best {
            None => true,
            Some(best) => metric < best,
        };
        if improved {
            self.best = Some(metric);
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
            return true;
        }
        false
    }
}

/// Evaluation protocol settings used for the per-epoch EER.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub num_segments: usize,
    pub segment_length: usize,
    pub num_trials: usize,
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub hyper: LossHyperparams,
    pub sampler: SamplerConfig,
    pub seed: u64,
    pub embedding_dim: usize,
    /// Frames per training segment.
    pub train_segment_len: usize,
    pub eval: EvalSettings,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config {
                reason: format!("learning_rate must be > 0, got {}", self.learning_rate),
            });
        }
        if self.scheduler_factor <= 0.0 || self.scheduler_factor >= 1.0 {
            return Err(Error::Config {
                reason: format!(
                    "scheduler_factor must be in (0, 1), got {}",
                    self.scheduler_factor
                ),
            });
        }
        if self.scheduler_patience < 1 {
            return Err(Error::Config {
                reason: "scheduler_patience must be >= 1".to_string(),
            });
        }
        if self.embedding_dim < 2 {
            return Err(Error::Config {
                reason: format!("embedding_dim must be >= 2, got {}", self.embedding_dim),
            });
        }
        if self.train_segment_len == 0 {
            return Err(Error::Config {
                reason: "train_segment_len must be >= 1".to_string(),
            });
        }
        self.hyper.validate()?;
        self.sampler.validate()
    }
}

/// One metrics-log row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub mean_loss: f64,
    /// Learning rate in effect during the epoch.
    pub lr: f64,
    pub eer_percent: f64,
}

/// Everything learned by a run: the embedder, the proxy table and the
/// similarity scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub embedder: ToyEmbedder,
    pub proxies: ProxyTable,
    pub params: SimilarityParams,
    pub loss: LossKind,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A finished run: the model, one metrics row per epoch, and the final
/// learning rate.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub metrics: Vec<EpochMetrics>,
    pub final_lr: f64,
}

fn subseed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag)
}

/// Score the fixed trial set with the current embedder and return the EER
/// in percent.
fn test_eer(model_embedder: &ToyEmbedder, trials: &[Trial], eval: &EvalSettings) -> Result<f64> {
    let mut scores = crate::evaluation::ScoreSet::default();
    for trial in trials {
        let s = score_trial(
            trial,
            model_embedder,
            eval.num_segments,
            eval.segment_length,
        )?;
        if trial.is_target {
            scores.target_scores.push(s);
        } else {
            scores.nontarget_scores.push(s);
        }
    }
    let (eer, _) = compute_eer(&scores)?;
    Ok(eer * 100.0)
}

/// Run the full loop: sample, embed, evaluate the loss, update every
/// learnable tensor, then score the held-out trials and apply the plateau
/// rule after each epoch.
///
/// With `epochs == 0` the returned model equals its initialization.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    if !dataset.splits_disjoint() {
        return Err(Error::Config {
            reason: "train and test class sets overlap".to_string(),
        });
    }

    let feature_dim = dataset.train.feature_dim;
    let train_class_count = dataset.train.classes.len();
    let mut embedder =
        ToyEmbedder::init(feature_dim, config.embedding_dim, subseed(config.seed, 1));
    // Proxy ids must match the training split's class ids.
    let mut proxies = {
        let fresh = init_proxies(
            train_class_count.max(1),
            config.embedding_dim,
            subseed(config.seed, 2),
        )?;
        let vectors = (0..fresh.len()).map(|s| fresh.vector(s).to_vec()).collect();
        ProxyTable::new(dataset.train.class_ids(), vectors)?
    };
    let mut params = SimilarityParams::default();
    let mut scheduler = PlateauScheduler::new(
        config.learning_rate,
        config.scheduler_factor,
        config.scheduler_patience,
    );

    let trials = build_trials(
        &dataset.test,
        config.eval.num_trials,
        subseed(config.seed, 3),
    )?;
    let catalog = dataset.train.catalog();

    let mut metrics = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut segment_rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, 4));
        segment_rng.set_stream(epoch as u64);

        let batches = epoch_batches(&catalog, &config.sampler, epoch as u64 - 1)?;
        let mut loss_sum = 0.0;
        for batch in &batches {
            let mut embeddings = Vec::with_capacity(batch.len());
            let mut caches = Vec::with_capacity(batch.len());
            for item in &batch.items {
                let utt = dataset
                    .train
                    .utterance(item.class_id, item.instance)
                    .expect("sampler emits valid indices");
                if utt.len() < config.train_segment_len {
                    return Err(Error::TrialTooShort {
                        frames: utt.len(),
                        segment_length: config.train_segment_len,
                    });
                }
                let start = segment_rng.random_range(0..=utt.len() - config.train_segment_len);
                let pooled = utt.pooled_segment(start, config.train_segment_len);
                // A non-finite pre-normalization norm means the weights have
                // blown up: report it as divergence, with the epoch index.
                let (emb, cache) = embedder
                    .embed_features(&pooled)
                    .map_err(|_| Error::TrainingDiverged { epoch })?;
                embeddings.push(emb);
                caches.push(cache);
            }
            let minibatch =
                Minibatch::new(embeddings, batch.labels(), batch.query_positions.clone())?;
            let out = evaluate_loss(config.loss, &minibatch, &proxies, &params, &config.hyper)?;
            if !out.value.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            loss_sum += out.value;

            let mut grads = StepGrads::zeros(&embedder, &proxies);
            for (cache, g) in caches.iter().zip(&out.grad_embeddings) {
                grads.accumulate_embedding(cache, g);
            }
            grads.proxies = out.grad_proxies;
            grads.alpha = out.grad_alpha;
            grads.beta = out.grad_beta;
            sgd_step(
                &mut embedder,
                &mut proxies,
                &mut params,
                &grads,
                scheduler.lr(),
            )?;
        }
        let mean_loss = loss_sum / batches.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }

        let eer_percent = test_eer(&embedder, &trials, &config.eval)?;
        let lr_used = scheduler.lr();
        scheduler.observe(eer_percent);
        metrics.push(EpochMetrics {
            epoch,
            mean_loss,
            lr: lr_used,
            eer_percent,
        });
    }

    Ok(TrainOutcome {
        model: TrainedModel {
            embedder,
            proxies,
            params,
            loss: config.loss,
        },
        metrics,
        final_lr: scheduler.lr(),
    })
}

/// Write the metrics log as CSV: `epoch,loss,lr,eer_percent`, '.'-decimal,
/// '\n' line ends.
pub fn write_metrics_csv(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "epoch,loss,lr,eer_percent")?;
    for m in metrics {
        writeln!(
            file,
            "{},{},{},{}",
            m.epoch, m.mean_loss, m.lr, m.eer_percent
        )?;
    }
    Ok(())
}
