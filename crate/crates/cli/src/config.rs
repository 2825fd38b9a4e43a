//! Flat JSON experiment configuration and its mapping onto the library
//! config types.

use std::path::Path;

use serde::Deserialize;

use proxyforge::batching::{SamplerConfig, SamplerMode};
use proxyforge::losses::{LossHyperparams, LossKind};
use proxyforge::synth::SyntheticDatasetConfig;
use proxyforge::trainer::{EvalSettings, TrainConfig};

/// One flat key-value document drives a whole experiment: training, dataset
/// generation and evaluation settings. Only `seed` is mandatory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,

    #[serde(default = "defaults::loss")]
    pub loss: String,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::triplet_margin")]
    pub triplet_margin: f64,
    #[serde(default = "defaults::anchor_margin")]
    pub anchor_margin: f64,
    #[serde(default = "defaults::anchor_scale")]
    pub anchor_scale: f64,

    #[serde(default = "defaults::sampler_mode")]
    pub sampler_mode: String,
    #[serde(default = "defaults::shots_per_class")]
    pub shots_per_class: usize,
    #[serde(default = "defaults::expected_batch_size")]
    pub expected_batch_size: usize,

    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::scheduler_factor")]
    pub scheduler_factor: f64,
    #[serde(default = "defaults::scheduler_patience")]
    pub scheduler_patience: usize,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,

    #[serde(default = "defaults::train_classes")]
    pub train_classes: usize,
    #[serde(default = "defaults::test_classes")]
    pub test_classes: usize,
    #[serde(default = "defaults::instances_per_class")]
    pub instances_per_class: usize,
    #[serde(default = "defaults::test_instances_per_class")]
    pub test_instances_per_class: usize,
    #[serde(default = "defaults::feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "defaults::embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "defaults::cluster_spread")]
    pub cluster_spread: f64,
    #[serde(default = "defaults::sequence_length_min")]
    pub sequence_length_min: usize,
    #[serde(default = "defaults::sequence_length_max")]
    pub sequence_length_max: usize,

    #[serde(default = "defaults::train_segment_len")]
    pub train_segment_len: usize,
    #[serde(default = "defaults::eval_num_segments")]
    pub eval_num_segments: usize,
    #[serde(default = "defaults::eval_segment_len")]
    pub eval_segment_len: usize,
    #[serde(default = "defaults::num_trials")]
    pub num_trials: usize,

    #[serde(default)]
    pub out_dir: Option<String>,
}

mod defaults {
    pub fn loss() -> String {
        "mp".to_string()
    }
    pub fn lambda() -> f64 {
        0.3
    }
    pub fn triplet_margin() -> f64 {
        0.1
    }
    pub fn anchor_margin() -> f64 {
        0.15
    }
    pub fn anchor_scale() -> f64 {
        50.0
    }
    pub fn sampler_mode() -> String {
        "balanced".to_string()
    }
    pub fn shots_per_class() -> usize {
        2
    }
    pub fn expected_batch_size() -> usize {
        16
    }
    pub fn learning_rate() -> f64 {
        0.2
    }
    pub fn scheduler_factor() -> f64 {
        0.8
    }
    pub fn scheduler_patience() -> usize {
        3
    }
    pub fn epochs() -> usize {
        40
    }
    pub fn train_classes() -> usize {
        50
    }
    pub fn test_classes() -> usize {
        10
    }
    pub fn instances_per_class() -> usize {
        12
    }
    pub fn test_instances_per_class() -> usize {
        8
    }
    pub fn feature_dim() -> usize {
        64
    }
    pub fn embedding_dim() -> usize {
        16
    }
    pub fn cluster_spread() -> f64 {
        0.05
    }
    pub fn sequence_length_min() -> usize {
        60
    }
    pub fn sequence_length_max() -> usize {
        100
    }
    pub fn train_segment_len() -> usize {
        20
    }
    pub fn eval_num_segments() -> usize {
        10
    }
    pub fn eval_segment_len() -> usize {
        20
    }
    pub fn num_trials() -> usize {
        200
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("malformed config {}: {e}", path.display()))
    }

    pub fn loss_kind(&self) -> Result<LossKind, String> {
        self.loss.parse().map_err(|e| format!("{e}"))
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig, String> {
        let mode = match self.sampler_mode.as_str() {
            "balanced" => SamplerMode::Balanced,
            "variable" => SamplerMode::Variable,
            other => return Err(format!("unknown sampler_mode: {other}")),
        };
        Ok(SamplerConfig {
            mode,
            shots_per_class: self.shots_per_class,
            expected_batch_size: self.expected_batch_size,
            seed: self.seed,
        })
    }

    pub fn hyper(&self) -> LossHyperparams {
        LossHyperparams {
            lambda_balance: self.lambda,
            triplet_margin: self.triplet_margin,
            anchor_margin: self.anchor_margin,
            anchor_scale: self.anchor_scale,
            shots_per_class: self.shots_per_class,
        }
    }

    pub fn dataset_config(&self) -> SyntheticDatasetConfig {
        SyntheticDatasetConfig {
            num_classes: self.train_classes,
            instances_per_class: self.instances_per_class,
            feature_dim: self.feature_dim,
            sequence_length_range: (self.sequence_length_min, self.sequence_length_max),
            cluster_spread: self.cluster_spread,
            seed: self.seed,
        }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            num_segments: self.eval_num_segments,
            segment_length: self.eval_segment_len,
            num_trials: self.num_trials,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, String> {
        Ok(TrainConfig {
            learning_rate: self.learning_rate,
            scheduler_factor: self.scheduler_factor,
            scheduler_patience: self.scheduler_patience,
            epochs: self.epochs,
            loss: self.loss_kind()?,
            hyper: self.hyper(),
            sampler: self.sampler_config()?,
            seed: self.seed,
            embedding_dim: self.embedding_dim,
            train_segment_len: self.train_segment_len,
            eval: self.eval_settings(),
        })
    }
}

/// Grid configuration for the complexity subcommand.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityGridConfig {
    pub seed: u64,
    /// Losses to probe, by name.
    pub losses: Vec<String>,
    /// "train_size", "proxy_count" or "train_size_full_batch".
    pub sweep: String,
    pub values: Vec<usize>,
    #[serde(default = "grid_defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "grid_defaults::proxy_count")]
    pub proxy_count: usize,
    #[serde(default = "grid_defaults::shots")]
    pub shots: usize,
    #[serde(default = "grid_defaults::train_size")]
    pub train_size: usize,
    /// Class count held fixed by the full-batch sweep.
    #[serde(default = "grid_defaults::full_batch_classes")]
    pub full_batch_classes: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
}

mod grid_defaults {
    pub fn batch_size() -> usize {
        8
    }
    pub fn proxy_count() -> usize {
        64
    }
    pub fn shots() -> usize {
        2
    }
    pub fn train_size() -> usize {
        80
    }
    pub fn full_batch_classes() -> usize {
        4
    }
}

impl ComplexityGridConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("malformed config {}: {e}", path.display()))
    }
}
