//! Minibatch construction: a class-balanced sampler with a fixed number of
//! shots per class, and a variable sampler that draws 2 or 3 shots per class
//! so the expected batch size is 2.5 times the class count. Both reserve one
//! query instance per sampled class.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shots-per-class policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Every sampled class contributes exactly `shots_per_class` instances.
    Balanced,
    /// Every sampled class contributes 2 or 3 instances, drawn uniformly;
    /// the batch holds `floor(B / 2.5)` classes so the expected instance
    /// count is `B`.
    Variable,
}

/// Sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    /// Shots per class in balanced mode.
    pub shots_per_class: usize,
    /// Instances per batch (balanced: exact; variable: expected).
    pub expected_batch_size: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SamplerMode::Balanced => {
                if self.shots_per_class < 2 {
                    return Err(Error::Config {
                        reason: format!(
                            "balanced sampler needs shots_per_class >= 2, got {}",
                            self.shots_per_class
                        ),
                    });
                }
                if self.expected_batch_size == 0
                    || !self
                        .expected_batch_size
                        .is_multiple_of(self.shots_per_class)
                {
                    return Err(Error::Config {
                        reason: format!(
                            "expected_batch_size {} must be a positive multiple of shots_per_class {}",
                            self.expected_batch_size, self.shots_per_class
                        ),
                    });
                }
            }
            SamplerMode::Variable => {
                if self.classes_per_batch() == 0 {
                    return Err(Error::Config {
                        reason: format!(
                            "expected_batch_size {} is too small for the variable sampler",
                            self.expected_batch_size
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Classes per batch: `B / M` (balanced) or `floor(B / 2.5)` (variable).
    pub fn classes_per_batch(&self) -> usize {
        match self.mode {
            SamplerMode::Balanced => self.expected_batch_size / self.shots_per_class,
            SamplerMode::Variable => self.expected_batch_size * 2 / 5,
        }
    }

    /// Smallest per-class instance count a dataset must offer.
    fn min_instances_per_class(&self) -> usize {
        match self.mode {
            SamplerMode::Balanced => self.shots_per_class,
            SamplerMode::Variable => 3,
        }
    }
}

/// Per-class instance counts of a dataset, the only view the sampler needs.
#[derive(Debug, Clone)]
pub struct ClassCatalog {
    counts: BTreeMap<usize, usize>,
}

impl ClassCatalog {
    pub fn from_counts(counts: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            counts: counts.into_iter().collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total_instances(&self) -> usize {
        self.counts.values().sum()
    }

    fn eligible(&self, min_instances: usize) -> Vec<usize> {
        self.counts
            .iter()
            .filter(|(_, &c)| c >= min_instances)
            .map(|(&id, _)| id)
            .collect()
    }

    fn count(&self, class: usize) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }
}

/// One sampled item: a class id and an instance index within that class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchItem {
    pub class_id: usize,
    pub instance: usize,
}

/// A sampled minibatch before embedding: items plus the position of the
/// reserved query for each distinct class (ascending class-id order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedBatch {
    pub items: Vec<BatchItem>,
    /// Positions into `items`, one per distinct class, ascending class id.
    pub query_positions: Vec<usize>,
}

impl IndexedBatch {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.query_positions.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|it| it.class_id).collect()
    }
}

fn sample_class_items(
    catalog: &ClassCatalog,
    classes: &[usize],
    config: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<IndexedBatch> {
    let mut items = Vec::new();
    let mut class_positions: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &class in classes {
        let available = catalog.count(class);
        let shots = match config.mode {
            SamplerMode::Balanced => config.shots_per_class,
            SamplerMode::Variable => rng.random_range(2..=3usize),
        };
        if available < shots {
            return Err(Error::Sampler {
                reason: format!("class {class} has {available} instance(s), need {shots}"),
            });
        }
        let chosen = rand::seq::index::sample(rng, available, shots);
        for instance in chosen {
            class_positions.entry(class).or_default().push(items.len());
            items.push(BatchItem {
                class_id: class,
                instance,
            });
        }
    }
    let query_positions = class_positions
        .into_values()
        .map(|positions| positions[rng.random_range(0..positions.len())])
        .collect();
    Ok(IndexedBatch {
        items,
        query_positions,
    })
}

/// All minibatches of one epoch, deterministic per `(config.seed, epoch)`.
///
/// Classes are shuffled and chunked so each class is visited once per epoch;
/// when the class count does not divide evenly, the final batch is filled
/// with classes re-drawn from earlier chunks (never duplicated within the
/// batch), keeping every batch at full size.
pub fn epoch_batches(
    catalog: &ClassCatalog,
    config: &SamplerConfig,
    epoch: u64,
) -> Result<Vec<IndexedBatch>> {
    config.validate()?;
    let cpb = config.classes_per_batch();
    let mut eligible = catalog.eligible(config.min_instances_per_class());
    if eligible.len() < cpb {
        return Err(Error::Sampler {
            reason: format!(
                "need {cpb} classes with >= {} instances, dataset offers {}",
                config.min_instances_per_class(),
                eligible.len()
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(epoch);
    eligible.shuffle(&mut rng);

    let mut batches = Vec::new();
    let mut start = 0;
    while start < eligible.len() {
        let end = (start + cpb).min(eligible.len());
        let mut classes: Vec<usize> = eligible[start..end].to_vec();
        if classes.len() < cpb {
            let mut pool: Vec<usize> = eligible[..start].to_vec();
            pool.shuffle(&mut rng);
            classes.extend(pool.into_iter().take(cpb - classes.len()));
        }
        batches.push(sample_class_items(catalog, &classes, config, &mut rng)?);
        start = end;
    }
    Ok(batches)
}

/// One balanced batch: `B / M` distinct classes, exactly `M` instances each,
/// one query reserved per class. Deterministic per seed.
pub fn sample_balanced(catalog: &ClassCatalog, config: &SamplerConfig) -> Result<IndexedBatch> {
    if config.mode != SamplerMode::Balanced {
        return Err(Error::Config {
            reason: "sample_balanced requires balanced mode".to_string(),
        });
    }
    Ok(epoch_batches(catalog, config, 0)?
        .into_iter()
        .next()
        .expect("epoch has at least one batch"))
}

/// One variable batch: `floor(B / 2.5)` classes with 2 or 3 instances each,
/// one query per class. Deterministic per seed.
pub fn sample_variable(catalog: &ClassCatalog, config: &SamplerConfig) -> Result<IndexedBatch> {
    if config.mode != SamplerMode::Variable {
        return Err(Error::Config {
            reason: "sample_variable requires variable mode".to_string(),
        });
    }
    Ok(epoch_batches(catalog, config, 0)?
        .into_iter()
        .next()
        .expect("epoch has at least one batch"))
}
