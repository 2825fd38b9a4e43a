//! Synthetic open-set dataset: each class is a random unit direction in
//! feature space; instances are frame sequences jittered around a
//! per-instance latent vector. Train and test class sets are disjoint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batching::ClassCatalog;
use crate::error::{Error, Result};

/// Generator settings for one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetConfig {
    pub num_classes: usize,
    pub instances_per_class: usize,
    pub feature_dim: usize,
    /// Inclusive range of frames per utterance.
    pub sequence_length_range: (usize, usize),
    /// Standard deviation of the per-instance and per-frame Gaussian noise
    /// around the class mean direction.
    pub cluster_spread: f64,
    pub seed: u64,
}

impl SyntheticDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cluster_spread < 0.0 {
            return Err(Error::Config {
                reason: format!("cluster_spread must be >= 0, got {}", self.cluster_spread),
            });
        }
        if self.feature_dim < 2 {
            return Err(Error::Config {
                reason: format!("feature_dim must be >= 2, got {}", self.feature_dim),
            });
        }
        let (lo, hi) = self.sequence_length_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config {
                reason: format!("bad sequence_length_range ({lo}, {hi})"),
            });
        }
        Ok(())
    }
}

/// A frame sequence standing in for one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub frames: Vec<Vec<f64>>,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Mean of `len` frames starting at `start`.
    pub fn pooled_segment(&self, start: usize, len: usize) -> Vec<f64> {
        debug_assert!(start + len <= self.frames.len());
        let dim = self.frames[0].len();
        let mut mean = vec![0.0; dim];
        for frame in &self.frames[start..start + len] {
            for (m, x) in mean.iter_mut().zip(frame) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= len as f64;
        }
        mean
    }

    /// Mean of all frames.
    pub fn pooled(&self) -> Vec<f64> {
        self.pooled_segment(0, self.frames.len())
    }
}

/// All utterances of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassData {
    pub class_id: usize,
    pub utterances: Vec<Utterance>,
}

/// One split of the dataset (train or test).
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub feature_dim: usize,
    pub classes: Vec<ClassData>,
}

impl Split {
    pub fn class_ids(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.class_id).collect()
    }

    pub fn catalog(&self) -> ClassCatalog {
        ClassCatalog::from_counts(
            self.classes
                .iter()
                .map(|c| (c.class_id, c.utterances.len())),
        )
    }

    pub fn class(&self, class_id: usize) -> Option<&ClassData> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    pub fn utterance(&self, class_id: usize, instance: usize) -> Option<&Utterance> {
        self.class(class_id)
            .and_then(|c| c.utterances.get(instance))
    }

    /// Shortest utterance in the split (0 when empty).
    pub fn min_sequence_len(&self) -> usize {
        self.classes
            .iter()
            .flat_map(|c| c.utterances.iter().map(Utterance::len))
            .min()
            .unwrap_or(0)
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(u) = crate::embedding::l2_normalize(&v) {
            return u;
        }
    }
}

fn generate_class(cfg: &SyntheticDatasetConfig, class_id: usize) -> ClassData {
    // One stream per class id keeps generation independent of class order.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(class_id as u64);
    let mean = unit_direction(&mut rng, cfg.feature_dim);

    let (lo, hi) = cfg.sequence_length_range;
    let mut utterances = Vec::with_capacity(cfg.instances_per_class);
    for _ in 0..cfg.instances_per_class {
        let latent: Vec<f64> = mean
            .iter()
            .map(|m| {
                let g: f64 = StandardNormal.sample(&mut rng);
                m + cfg.cluster_spread * g
            })
            .collect();
        let frames = (0..rng.random_range(lo..=hi))
            .map(|_| {
                latent
                    .iter()
                    .map(|v| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        v + cfg.cluster_spread * g
                    })
                    .collect()
            })
            .collect();
        utterances.push(Utterance { frames });
    }
    ClassData {
        class_id,
        utterances,
    }
}

/// Generate one split with class ids `0..num_classes`. Deterministic per
/// seed.
pub fn generate_dataset(cfg: &SyntheticDatasetConfig) -> Result<Split> {
    cfg.validate()?;
    Ok(Split {
        feature_dim: cfg.feature_dim,
        classes: (0..cfg.num_classes)
            .map(|c| generate_class(cfg, c))
            .collect(),
    })
}

/// Train split plus a held-out test split with disjoint class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub test: Split,
}

impl Dataset {
    /// Generate `cfg.num_classes` training classes and `test_classes`
    /// held-out classes from one generator; test class ids start where the
    /// training ids end, so the splits are disjoint by construction.
    pub fn open_set(
        cfg: &SyntheticDatasetConfig,
        test_classes: usize,
        test_instances_per_class: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let train = generate_dataset(cfg)?;
        let test_cfg = SyntheticDatasetConfig {
            instances_per_class: test_instances_per_class,
            ..*cfg
        };
        let test = Split {
            feature_dim: cfg.feature_dim,
            classes: (cfg.num_classes..cfg.num_classes + test_classes)
                .map(|c| generate_class(&test_cfg, c))
                .collect(),
        };
        Ok(Self { train, test })
    }

    /// Every train class id is absent from the test split.
    pub fn splits_disjoint(&self) -> bool {
        let test_ids = self.test.class_ids();
        self.train
            .class_ids()
            .iter()
            .all(|id| !test_ids.contains(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> SyntheticDatasetConfig {
        SyntheticDatasetConfig {
            num_classes: 4,
            instances_per_class: 3,
            feature_dim: 8,
            sequence_length_range: (10, 14),
            cluster_spread: 0.1,
            seed,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(&cfg(5)).unwrap();
        let b = generate_dataset(&cfg(5)).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&cfg(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_spread_collapses_instances() {
        let mut c = cfg(1);
        c.cluster_spread = 0.0;
        c.sequence_length_range = (5, 5);
        let split = generate_dataset(&c).unwrap();
        for class in &split.classes {
            let first = &class.utterances[0];
            for utt in &class.utterances {
                assert_eq!(utt.frames, first.frames);
            }
        }
    }

    #[test]
    fn open_set_splits_are_disjoint() {
        let ds = Dataset::open_set(&cfg(2), 3, 2).unwrap();
        assert!(ds.splits_disjoint());
        assert_eq!(ds.test.classes.len(), 3);
        assert_eq!(ds.test.classes[0].utterances.len(), 2);
    }

    #[test]
    fn nearest_class_mean_separates_modest_spread() {
        // Brute-force nearest-class-mean classification on pooled features.
        let c = SyntheticDatasetConfig {
            num_classes: 20,
            instances_per_class: 6,
            feature_dim: 64,
            sequence_length_range: (20, 30),
            cluster_spread: 0.05,
            seed: 11,
        };
        let split = generate_dataset(&c).unwrap();
        let means: Vec<Vec<f64>> = split
            .classes
            .iter()
            .map(|cl| {
                let mut m = vec![0.0; c.feature_dim];
                for u in &cl.utterances {
                    for (mi, x) in m.iter_mut().zip(u.pooled()) {
                        *mi += x;
                    }
                }
                m.iter().map(|x| x / cl.utterances.len() as f64).collect()
            })
            .collect();
        let mut correct = 0;
        let mut total = 0;
        for (ci, cl) in split.classes.iter().enumerate() {
            for u in &cl.utterances {
                let pooled = u.pooled();
                let best = means
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        crate::vecmath::squared_distance(&pooled, a)
                            .partial_cmp(&crate::vecmath::squared_distance(&pooled, b))
                            .unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                if best == ci {
                    correct += 1;
                }
                total += 1;
            }
        }
        let accuracy = correct as f64 / total as f64;
        assert!(accuracy > 0.99, "nearest-class-mean accuracy {accuracy}");
    }

    #[test]
    fn pooled_segment_means_frames() {
        let u = Utterance {
            frames: vec![vec![1.0, 0.0], vec![3.0, 2.0], vec![5.0, 4.0]],
        };
        assert_eq!(u.pooled_segment(1, 2), vec![4.0, 3.0]);
        assert_eq!(u.pooled(), vec![3.0, 2.0]);
    }
}
