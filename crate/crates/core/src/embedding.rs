//! Vector primitives shared by every loss: length normalization, the
//! affine-scaled cosine similarity, leave-one-out centroids, and the
//! learnable proxy table.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{dot, norm, normalize_backward};

/// Smallest value the learnable scale is allowed to take. A negative scale
/// inverts the similarity ordering, so the trainer clamps after each step.
pub const ALPHA_MIN: f64 = 1e-3;

/// A unit-norm vector representing one instance, proxy or centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Length-normalize `values` into an embedding.
    ///
    /// Fails on the zero vector (or any vector whose norm underflows).
    pub fn unit(values: &[f64]) -> Result<Self> {
        Ok(Self(l2_normalize(values)?))
    }

    /// Wrap raw values without normalizing.
    ///
    /// Callers own the unit-norm precondition; the finite-difference harness
    /// relies on this to probe losses at slightly off-sphere points.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Normalize a vector to unit Euclidean length.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Normalization);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Learnable scale and bias of the affine cosine similarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub alpha: f64,
    pub beta: f64,
}

impl SimilarityParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// Clamp the scale to stay at or above [`ALPHA_MIN`].
    pub fn clamp_alpha(&mut self) {
        if self.alpha < ALPHA_MIN {
            self.alpha = ALPHA_MIN;
        }
    }
}

impl Default for SimilarityParams {
    /// Training initialization: scale 10, bias 0.1.
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta: 0.1,
        }
    }
}

/// `alpha * ((u . v) - beta)` for unit vectors `u`, `v`.
pub fn scaled_cosine(u: &Embedding, v: &Embedding, params: &SimilarityParams) -> f64 {
    params.alpha * (dot(u.values(), v.values()) - params.beta)
}

/// One learnable unit-direction vector per training class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyTable {
    class_ids: Vec<usize>,
    vectors: Vec<Vec<f64>>,
}

impl ProxyTable {
    /// Build a table from parallel class-id / vector lists.
    ///
    /// Class ids must be distinct; entries are stored sorted by class id so
    /// iteration order is deterministic.
    pub fn new(class_ids: Vec<usize>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if class_ids.len() != vectors.len() {
            return Err(Error::Config {
                reason: format!(
                    "proxy table has {} class ids but {} vectors",
                    class_ids.len(),
                    vectors.len()
                ),
            });
        }
        let mut paired: Vec<(usize, Vec<f64>)> = class_ids.into_iter().zip(vectors).collect();
        paired.sort_by_key(|(id, _)| *id);
        if paired.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config {
                reason: "duplicate class id in proxy table".to_string(),
            });
        }
        if let Some(d) = paired.first().map(|(_, v)| v.len()) {
            if paired.iter().any(|(_, v)| v.len() != d) {
                return Err(Error::Config {
                    reason: "proxy vectors have mixed dimensions".to_string(),
                });
            }
        }
        let (class_ids, vectors) = paired.into_iter().unzip();
        Ok(Self { class_ids, vectors })
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    /// Slot index of a class id, if present.
    pub fn slot(&self, class_id: usize) -> Option<usize> {
        self.class_ids.binary_search(&class_id).ok()
    }

    pub fn vector(&self, slot: usize) -> &[f64] {
        &self.vectors[slot]
    }

    pub fn vector_for_class(&self, class_id: usize) -> Option<&[f64]> {
        self.slot(class_id).map(|s| self.vector(s))
    }

    /// Iterate `(class_id, vector)` in ascending class-id order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.class_ids
            .iter()
            .copied()
            .zip(self.vectors.iter().map(Vec::as_slice))
    }

    /// Apply one SGD step to every proxy and re-normalize each to unit
    /// length afterwards.
    pub fn sgd_step(&mut self, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        debug_assert_eq!(grads.len(), self.vectors.len());
        for (v, g) in self.vectors.iter_mut().zip(grads) {
            for (x, gi) in v.iter_mut().zip(g) {
                *x -= lr * gi;
            }
            *v = l2_normalize(v)?;
        }
        Ok(())
    }
}

/// Sample `num_classes` unit vectors uniformly on the sphere (normalized
/// standard Gaussian draws), deterministically for a given seed.
pub fn init_proxies(num_classes: usize, dim: usize, seed: u64) -> Result<ProxyTable> {
    if num_classes < 1 || dim < 2 {
        return Err(Error::Config {
            reason: format!(
                "init_proxies needs num_classes >= 1 and dim >= 2, got ({num_classes}, {dim})"
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        // Redraw on the measure-zero zero-vector sample.
        loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if let Ok(unit) = l2_normalize(&v) {
                vectors.push(unit);
                break;
            }
        }
    }
    ProxyTable::new((0..num_classes).collect(), vectors)
}

/// A sampled minibatch: unit instances, integer labels, one reserved query
/// per distinct label, and the derived leave-one-out centroids.
#[derive(Debug, Clone)]
pub struct Minibatch {
    instances: Vec<Embedding>,
    labels: Vec<usize>,
    /// Distinct labels in ascending order.
    classes: Vec<usize>,
    /// Reserved query instance index, aligned with `classes`.
    query_indices: Vec<usize>,
    /// Instance indices per class (ascending), aligned with `classes`.
    members: Vec<Vec<usize>>,
    /// Unit centroids, aligned with `classes`.
    centroids: Vec<Embedding>,
    /// Norm of each centroid's pre-normalization mean, aligned with `classes`.
    centroid_prenorms: Vec<f64>,
}

impl Minibatch {
    /// Assemble a batch and derive its centroids.
    ///
    /// `query_indices` must contain exactly one instance index per distinct
    /// label (in any order). Every class needs at least two instances so the
    /// leave-one-out centroid averages at least one vector.
    pub fn new(
        instances: Vec<Embedding>,
        labels: Vec<usize>,
        query_indices: Vec<usize>,
    ) -> Result<Self> {
        if instances.len() != labels.len() {
            return Err(Error::Config {
                reason: format!(
                    "batch has {} instances but {} labels",
                    instances.len(),
                    labels.len()
                ),
            });
        }
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &label) in labels.iter().enumerate() {
            by_class.entry(label).or_default().push(i);
        }
        for (&class, idxs) in &by_class {
            if idxs.len() < 2 {
                return Err(Error::DegenerateClass {
                    class,
                    count: idxs.len(),
                });
            }
        }
        let classes: Vec<usize> = by_class.keys().copied().collect();
        let members: Vec<Vec<usize>> = by_class.into_values().collect();

        if query_indices.len() != classes.len() {
            return Err(Error::Config {
                reason: format!(
                    "expected one query per distinct label ({}), got {}",
                    classes.len(),
                    query_indices.len()
                ),
            });
        }
        let mut aligned_queries = vec![usize::MAX; classes.len()];
        for &q in &query_indices {
            let label = *labels.get(q).ok_or_else(|| Error::Config {
                reason: format!("query index {q} out of range"),
            })?;
            let slot = classes.binary_search(&label).expect("label seen above");
            if aligned_queries[slot] != usize::MAX {
                return Err(Error::Config {
                    reason: format!("duplicate query for class {label}"),
                });
            }
            aligned_queries[slot] = q;
        }

        let mut batch = Self {
            instances,
            labels,
            classes,
            query_indices: aligned_queries,
            members,
            centroids: Vec::new(),
            centroid_prenorms: Vec::new(),
        };
        batch.recompute_centroids()?;
        Ok(batch)
    }

    /// Recompute the leave-one-out centroids from the current instances.
    ///
    /// Each class centroid is the normalized mean of that class's instances
    /// excluding the class's reserved query; the exclusion applies uniformly
    /// whether the centroid is consumed by its own query or by another
    /// class's.
    pub fn recompute_centroids(&mut self) -> Result<()> {
        let dim = self.instances.first().map_or(0, Embedding::dim);
        let mut centroids = Vec::with_capacity(self.classes.len());
        let mut prenorms = Vec::with_capacity(self.classes.len());
        for (slot, idxs) in self.members.iter().enumerate() {
            let query = self.query_indices[slot];
            let mut mean = vec![0.0; dim];
            let mut count = 0usize;
            for &i in idxs {
                if i == query {
                    continue;
                }
                for (m, x) in mean.iter_mut().zip(self.instances[i].values()) {
                    *m += x;
                }
                count += 1;
            }
            debug_assert!(count > 0, "class has only its query");
            for m in &mut mean {
                *m /= count as f64;
            }
            let prenorm = norm(&mean);
            let unit = l2_normalize(&mean)?;
            centroids.push(Embedding::from_raw(unit));
            prenorms.push(prenorm);
        }
        self.centroids = centroids;
        self.centroid_prenorms = prenorms;
        Ok(())
    }

    pub fn instances(&self) -> &[Embedding] {
        &self.instances
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Slot of a label within [`Self::classes`].
    pub fn class_slot(&self, label: usize) -> Option<usize> {
        self.classes.binary_search(&label).ok()
    }

    /// Query instance indices, aligned with [`Self::classes`].
    pub fn query_indices(&self) -> &[usize] {
        &self.query_indices
    }

    /// Instance indices of a class slot (ascending).
    pub fn class_members(&self, slot: usize) -> &[usize] {
        &self.members[slot]
    }

    /// Unit centroid of a class slot.
    pub fn centroid(&self, slot: usize) -> &Embedding {
        &self.centroids[slot]
    }

    pub fn centroids(&self) -> &[Embedding] {
        &self.centroids
    }

    /// Norm of the pre-normalization centroid mean for a class slot; the
    /// backward passes chain through the normalization with it.
    pub(crate) fn centroid_prenorm(&self, slot: usize) -> f64 {
        self.centroid_prenorms[slot]
    }

    /// Non-query member indices of a class slot.
    pub fn non_query_members(&self, slot: usize) -> impl Iterator<Item = usize> + '_ {
        let query = self.query_indices[slot];
        self.members[slot]
            .iter()
            .copied()
            .filter(move |&i| i != query)
    }

    /// Replace one instance's raw values and refresh the centroids.
    ///
    /// Used by the finite-difference harness; the replacement is not
    /// re-normalized.
    pub fn with_instance_values(&self, index: usize, values: Vec<f64>) -> Result<Self> {
        let mut copy = self.clone();
        copy.instances[index] = Embedding::from_raw(values);
        copy.recompute_centroids()?;
        Ok(copy)
    }
}

/// Standalone leave-one-out centroid computation (one unit centroid per
/// distinct label, ascending label order). The batch constructor applies the
/// same rule; this entry point exists for direct use and testing.
pub fn leave_one_out_centroids(batch: &Minibatch) -> Vec<Embedding> {
    batch.centroids().to_vec()
}

/// Gradient bookkeeping for centroids: accumulates upstream gradients per
/// class slot and scatters them onto the contributing (non-query) instances
/// through the normalization and the mean.
pub(crate) struct CentroidGrads {
    per_class: Vec<Vec<f64>>,
}

impl CentroidGrads {
    pub fn new(batch: &Minibatch) -> Self {
        let dim = batch.instances().first().map_or(0, Embedding::dim);
        Self {
            per_class: vec![vec![0.0; dim]; batch.num_classes()],
        }
    }

    /// `d(loss)/d(centroid[slot]) += scale * v`
    pub fn add(&mut self, slot: usize, scale: f64, v: &[f64]) {
        crate::vecmath::axpy(&mut self.per_class[slot], scale, v);
    }

    /// Push the accumulated centroid gradients back onto instance gradients.
    pub fn scatter(self, batch: &Minibatch, grad_instances: &mut [Vec<f64>]) {
        for (slot, g) in self.per_class.into_iter().enumerate() {
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let unit = batch.centroid(slot).values();
            let prenorm = batch.centroid_prenorm(slot);
            let g_mean = normalize_backward(unit, prenorm, &g);
            let contributors: Vec<usize> = batch.non_query_members(slot).collect();
            let w = 1.0 / contributors.len() as f64;
            for i in contributors {
                crate::vecmath::axpy(&mut grad_instances[i], w, &g_mean);
            }
        }
    }
}
