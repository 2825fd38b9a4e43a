//! Central-finite-difference verification of the analytic gradients.
//!
//! Every loss is treated as a scalar function of the raw instance values,
//! the proxy vectors, and the two similarity scalars. Perturbing an instance
//! rebuilds the batch centroids, so the numeric gradient probes the same
//! function the analytic backward pass differentiates.

// Coordinate loops fill preallocated gradient matrices in place.
#![allow(clippy::needless_range_loop)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{Embedding, Minibatch, ProxyTable, SimilarityParams};
use crate::error::Result;
use crate::losses::{evaluate_loss, LossHyperparams, LossKind, LossOutput};
use crate::vecmath::squared_distance;

/// Maximum guarded relative error accepted between analytic and numeric
/// gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Step used by the verification suite.
pub const GRADCHECK_EPSILON: f64 = 1e-5;

/// Entries smaller than this in both gradients are compared absolutely at
/// this scale; below it, central differences measure only rounding noise.
const REL_ERROR_FLOOR: f64 = 1e-2;

/// One full loss-evaluation point.
#[derive(Debug, Clone)]
pub struct LossContext {
    pub batch: Minibatch,
    pub proxies: ProxyTable,
    pub params: SimilarityParams,
    pub hyper: LossHyperparams,
}

impl LossContext {
    pub fn evaluate(&self, kind: LossKind) -> Result<LossOutput> {
        evaluate_loss(kind, &self.batch, &self.proxies, &self.params, &self.hyper)
    }
}

/// Central difference `(f(x+eps) - f(x-eps)) / (2 eps)` of a scalar function.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, epsilon: f64) -> f64 {
    (f(x + epsilon) - f(x - epsilon)) / (2.0 * epsilon)
}

/// Numeric gradient buffers mirroring [`LossOutput`].
#[derive(Debug, Clone)]
pub struct NumericGradient {
    pub embeddings: Vec<Vec<f64>>,
    pub proxies: Vec<Vec<f64>>,
    pub alpha: f64,
    pub beta: f64,
}

/// Central finite differences of `f` over every coordinate of the context:
/// instance values, proxy values, and the two similarity scalars.
pub fn finite_difference_gradient<F>(
    f: F,
    ctx: &LossContext,
    epsilon: f64,
) -> Result<NumericGradient>
where
    F: Fn(&LossContext) -> f64,
{
    let dim = ctx.batch.instances().first().map_or(0, Embedding::dim);
    let mut embeddings = vec![vec![0.0; dim]; ctx.batch.len()];
    for i in 0..ctx.batch.len() {
        for k in 0..dim {
            let base = ctx.batch.instances()[i].values().to_vec();
            let mut plus = base.clone();
            plus[k] += epsilon;
            let mut minus = base;
            minus[k] -= epsilon;
            let ctx_plus = LossContext {
                batch: ctx.batch.with_instance_values(i, plus)?,
                ..ctx.clone()
            };
            let ctx_minus = LossContext {
                batch: ctx.batch.with_instance_values(i, minus)?,
                ..ctx.clone()
            };
            embeddings[i][k] = (f(&ctx_plus) - f(&ctx_minus)) / (2.0 * epsilon);
        }
    }

    let pdim = ctx.proxies.dim();
    let mut proxies = vec![vec![0.0; pdim]; ctx.proxies.len()];
    for slot in 0..ctx.proxies.len() {
        for k in 0..pdim {
            let base = ctx.proxies.vector(slot).to_vec();
            let mut plus = base.clone();
            plus[k] += epsilon;
            let mut minus = base;
            minus[k] -= epsilon;
            let ctx_plus = LossContext {
                proxies: with_proxy_vector(&ctx.proxies, slot, plus)?,
                ..ctx.clone()
            };
            let ctx_minus = LossContext {
                proxies: with_proxy_vector(&ctx.proxies, slot, minus)?,
                ..ctx.clone()
            };
            proxies[slot][k] = (f(&ctx_plus) - f(&ctx_minus)) / (2.0 * epsilon);
        }
    }

    let alpha = central_difference(
        |a| {
            let mut c = ctx.clone();
            c.params.alpha = a;
            f(&c)
        },
        ctx.params.alpha,
        epsilon,
    );
    let beta = central_difference(
        |b| {
            let mut c = ctx.clone();
            c.params.beta = b;
            f(&c)
        },
        ctx.params.beta,
        epsilon,
    );

    Ok(NumericGradient {
        embeddings,
        proxies,
        alpha,
        beta,
    })
}

fn with_proxy_vector(table: &ProxyTable, slot: usize, values: Vec<f64>) -> Result<ProxyTable> {
    let class_ids = table.class_ids().to_vec();
    let mut vectors: Vec<Vec<f64>> = (0..table.len()).map(|s| table.vector(s).to_vec()).collect();
    vectors[slot] = values;
    ProxyTable::new(class_ids, vectors)
}

/// Guarded relative error between an analytic and a numeric gradient entry.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Worst guarded relative error per parameter group over a set of random
/// configurations.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub loss: LossKind,
    pub trials: usize,
    pub max_rel_embeddings: f64,
    pub max_rel_proxies: f64,
    pub max_rel_alpha: f64,
    pub max_rel_beta: f64,
}

impl GradCheckReport {
    pub fn max_rel(&self) -> f64 {
        self.max_rel_embeddings
            .max(self.max_rel_proxies)
            .max(self.max_rel_alpha)
            .max(self.max_rel_beta)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel() < tolerance
    }
}

/// Geometry of a random verification configuration.
#[derive(Debug, Clone, Copy)]
pub struct ContextDims {
    pub dim: usize,
    pub classes: usize,
    pub proxies: usize,
}

impl Default for ContextDims {
    /// The verification suite's geometry: 8 dimensions, 6 batch classes,
    /// 10 proxies.
    fn default() -> Self {
        Self {
            dim: 8,
            classes: 6,
            proxies: 10,
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(u) = crate::embedding::l2_normalize(&v) {
            return u;
        }
    }
}

/// Draw a seeded random loss-evaluation point: 2-3 unit instances per class,
/// one random query per class, random unit proxies, and similarity
/// parameters away from their defaults.
pub fn random_context(seed: u64, stream: u64, dims: ContextDims) -> Result<LossContext> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut instances = Vec::new();
    let mut labels = Vec::new();
    let mut queries = Vec::new();
    for class in 0..dims.classes {
        let shots = rng.random_range(2..=3usize);
        let start = instances.len();
        for _ in 0..shots {
            instances.push(Embedding::from_raw(random_unit(&mut rng, dims.dim)));
            labels.push(class);
        }
        queries.push(start + rng.random_range(0..shots));
    }
    let batch = Minibatch::new(instances, labels, queries)?;

    let vectors: Vec<Vec<f64>> = (0..dims.proxies)
        .map(|_| random_unit(&mut rng, dims.dim))
        .collect();
    let proxies = ProxyTable::new((0..dims.proxies).collect(), vectors)?;

    let params = SimilarityParams::new(rng.random_range(0.5..10.0), rng.random_range(-0.2..0.2));
    let hyper = LossHyperparams {
        lambda_balance: *[0.0, 0.3, 0.5].choose(&mut rng).expect("non-empty"),
        ..LossHyperparams::default()
    };

    Ok(LossContext {
        batch,
        proxies,
        params,
        hyper,
    })
}

/// Smallest |hinge| over every enumerated triplet. Finite differences are
/// meaningless within a step of the hinge kink, so near-kink configurations
/// are redrawn.
fn triplet_min_hinge_gap(ctx: &LossContext) -> f64 {
    let instances = ctx.batch.instances();
    let labels = ctx.batch.labels();
    let mut min_gap = f64::INFINITY;
    for a in 0..instances.len() {
        for p in 0..instances.len() {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for n in 0..instances.len() {
                if labels[n] == labels[a] {
                    continue;
                }
                let hinge = squared_distance(instances[a].values(), instances[p].values())
                    - squared_distance(instances[a].values(), instances[n].values())
                    + ctx.hyper.triplet_margin;
                min_gap = min_gap.min(hinge.abs());
            }
        }
    }
    min_gap
}

/// Run the finite-difference suite for one loss over `trials` seeded random
/// configurations and report the worst guarded relative error per parameter
/// group.
pub fn gradcheck_loss(kind: LossKind, seed: u64, trials: usize) -> Result<GradCheckReport> {
    let dims = ContextDims::default();
    let mut report = GradCheckReport {
        loss: kind,
        trials,
        max_rel_embeddings: 0.0,
        max_rel_proxies: 0.0,
        max_rel_alpha: 0.0,
        max_rel_beta: 0.0,
    };
    for trial in 0..trials as u64 {
        let mut ctx = random_context(seed, trial << 8, dims)?;
        if kind == LossKind::Triplet {
            // Step past kinked configurations deterministically.
            let mut attempt = 1u64;
            while triplet_min_hinge_gap(&ctx) < 1e-3 {
                ctx = random_context(seed, (trial << 8) + attempt, dims)?;
                attempt += 1;
            }
        }
        let analytic = ctx.evaluate(kind)?;
        let numeric = finite_difference_gradient(
            |c| c.evaluate(kind).expect("loss evaluation").value,
            &ctx,
            GRADCHECK_EPSILON,
        )?;

        for (a_row, n_row) in analytic.grad_embeddings.iter().zip(&numeric.embeddings) {
            for (&a, &n) in a_row.iter().zip(n_row) {
                report.max_rel_embeddings = report.max_rel_embeddings.max(relative_error(a, n));
            }
        }
        for (a_row, n_row) in analytic.grad_proxies.iter().zip(&numeric.proxies) {
            for (&a, &n) in a_row.iter().zip(n_row) {
                report.max_rel_proxies = report.max_rel_proxies.max(relative_error(a, n));
            }
        }
        report.max_rel_alpha = report
            .max_rel_alpha
            .max(relative_error(analytic.grad_alpha, numeric.alpha));
        report.max_rel_beta = report
            .max_rel_beta
            .max(relative_error(analytic.grad_beta, numeric.beta));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_linear_is_exact() {
        let d = central_difference(|x| 3.0 * x + 1.0, 0.7, 1e-4);
        assert!((d - 3.0).abs() < 1e-10);
    }

    #[test]
    fn central_difference_constant_is_zero() {
        let d = central_difference(|_| 4.2, 1.3, 1e-4);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn central_difference_quadratic() {
        let d = central_difference(|x| x * x, 1.0, 1e-4);
        assert!((d - 2.0).abs() < 1e-7);
    }

    #[test]
    fn random_context_is_deterministic() {
        let a = random_context(9, 0, ContextDims::default()).unwrap();
        let b = random_context(9, 0, ContextDims::default()).unwrap();
        assert_eq!(a.batch.instances(), b.batch.instances());
        assert_eq!(a.proxies, b.proxies);
        assert_eq!(a.params, b.params);
    }

    // A cheap smoke check; the full 8-loss suite runs in the acceptance
    // tests.
    #[test]
    fn masked_proxy_gradients_match_finite_differences() {
        let report = gradcheck_loss(LossKind::MaskedProxy, 11, 3).unwrap();
        assert!(
            report.passes(GRADCHECK_TOLERANCE),
            "max rel err {}",
            report.max_rel()
        );
    }
}
