//! Forward values and analytic gradients for the masked-proxy losses and the
//! six baselines they are compared against.
//!
//! Every loss is a pure function of the batch instances, the proxy table and
//! the similarity parameters. Centroids are derived data: gradients with
//! respect to instances chain through the centroid mean and its length
//! normalization, so central finite differences over raw instance values
//! reproduce the analytic gradients.

mod baselines;
mod gradcheck;
mod masked_proxy;

pub use baselines::{
    angular_prototypical_loss, ge2e_loss, prototypical_loss, proxy_anchor_loss, proxy_nca_loss,
    triplet_loss,
};
pub use gradcheck::{
    central_difference, finite_difference_gradient, gradcheck_loss, random_context, ContextDims,
    GradCheckReport, LossContext, NumericGradient, GRADCHECK_EPSILON, GRADCHECK_TOLERANCE,
};
pub use masked_proxy::{
    mask_proxy_regulator, masked_proxy_loss, masked_proxy_positive_pair_gradients,
    masked_proxy_query_loss, masked_proxy_query_objective, multinomial_masked_proxy_loss,
    multinomial_positive_pair_gradients, multinomial_query_objective,
};

use serde::{Deserialize, Serialize};

use crate::embedding::{Minibatch, ProxyTable, SimilarityParams};
use crate::error::{Error, Result};

/// Hyperparameters shared by the loss family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossHyperparams {
    /// Weight of the regulator term in the masked-proxy losses.
    pub lambda_balance: f64,
    /// Margin of the triplet hinge.
    pub triplet_margin: f64,
    /// Margin of the proxy-anchor loss.
    pub anchor_margin: f64,
    /// Scale of the proxy-anchor loss.
    pub anchor_scale: f64,
    /// Instances per class under the balanced sampler.
    pub shots_per_class: usize,
}

impl Default for LossHyperparams {
    /// Best-reported defaults: lambda 0.3, triplet margin 0.1, anchor
    /// margin 0.15, anchor scale 50, two shots per class.
    fn default() -> Self {
        Self {
            lambda_balance: 0.3,
            triplet_margin: 0.1,
            anchor_margin: 0.15,
            anchor_scale: 50.0,
            shots_per_class: 2,
        }
    }
}

impl LossHyperparams {
    /// Alternative preset with the regulator weight at 0.5.
    pub fn lambda_half() -> Self {
        Self {
            lambda_balance: 0.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_balance < 0.0 {
            return Err(Error::Config {
                reason: format!("lambda_balance must be >= 0, got {}", self.lambda_balance),
            });
        }
        if self.anchor_scale <= 0.0 {
            return Err(Error::Config {
                reason: format!("anchor_scale must be > 0, got {}", self.anchor_scale),
            });
        }
        if self.triplet_margin < 0.0 {
            return Err(Error::Config {
                reason: format!("triplet_margin must be >= 0, got {}", self.triplet_margin),
            });
        }
        Ok(())
    }
}

/// Scalar loss value plus analytic gradients for every learnable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// One gradient vector per batch instance.
    pub grad_embeddings: Vec<Vec<f64>>,
    /// One gradient vector per proxy-table slot (all-zero for losses that do
    /// not use proxies).
    pub grad_proxies: Vec<Vec<f64>>,
    pub grad_alpha: f64,
    pub grad_beta: f64,
    /// Number of pairwise similarity/distance evaluations performed by the
    /// forward pass; consumed by the complexity probe.
    pub comparisons: u64,
}

impl LossOutput {
    pub(crate) fn zeros(
        n_instances: usize,
        dim: usize,
        n_proxies: usize,
        proxy_dim: usize,
    ) -> Self {
        Self {
            value: 0.0,
            grad_embeddings: vec![vec![0.0; dim]; n_instances],
            grad_proxies: vec![vec![0.0; proxy_dim]; n_proxies],
            grad_alpha: 0.0,
            grad_beta: 0.0,
            comparisons: 0,
        }
    }

    /// `self + scale * other`, componentwise over the value and every
    /// gradient buffer. Comparison counts add.
    pub fn add_scaled(mut self, scale: f64, other: &LossOutput) -> Self {
        self.value += scale * other.value;
        for (a, b) in self.grad_embeddings.iter_mut().zip(&other.grad_embeddings) {
            crate::vecmath::axpy(a, scale, b);
        }
        for (a, b) in self.grad_proxies.iter_mut().zip(&other.grad_proxies) {
            crate::vecmath::axpy(a, scale, b);
        }
        self.grad_alpha += scale * other.grad_alpha;
        self.grad_beta += scale * other.grad_beta;
        self.comparisons += other.comparisons;
        self
    }

    /// True when the value and every gradient entry are finite.
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad_alpha.is_finite()
            && self.grad_beta.is_finite()
            && self
                .grad_embeddings
                .iter()
                .chain(self.grad_proxies.iter())
                .all(|g| g.iter().all(|x| x.is_finite()))
    }
}

/// The eight supported training objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[serde(alias = "mp")]
    MaskedProxy,
    #[serde(alias = "mmp")]
    MultinomialMaskedProxy,
    ProxyNca,
    ProxyAnchor,
    Triplet,
    Prototypical,
    AngularPrototypical,
    Ge2e,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::MaskedProxy,
        LossKind::MultinomialMaskedProxy,
        LossKind::ProxyNca,
        LossKind::ProxyAnchor,
        LossKind::Triplet,
        LossKind::Prototypical,
        LossKind::AngularPrototypical,
        LossKind::Ge2e,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::MaskedProxy => "mp",
            LossKind::MultinomialMaskedProxy => "mmp",
            LossKind::ProxyNca => "proxy_nca",
            LossKind::ProxyAnchor => "proxy_anchor",
            LossKind::Triplet => "triplet",
            LossKind::Prototypical => "prototypical",
            LossKind::AngularPrototypical => "angular_prototypical",
            LossKind::Ge2e => "ge2e",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mp" | "masked_proxy" => Ok(LossKind::MaskedProxy),
            "mmp" | "multinomial_masked_proxy" => Ok(LossKind::MultinomialMaskedProxy),
            "proxy_nca" => Ok(LossKind::ProxyNca),
            "proxy_anchor" => Ok(LossKind::ProxyAnchor),
            "triplet" => Ok(LossKind::Triplet),
            "prototypical" => Ok(LossKind::Prototypical),
            "angular_prototypical" => Ok(LossKind::AngularPrototypical),
            "ge2e" => Ok(LossKind::Ge2e),
            other => Err(Error::Config {
                reason: format!("unknown loss name: {other}"),
            }),
        }
    }
}

/// Evaluate any of the eight losses on a batch.
///
/// The returned `grad_proxies` always holds one (possibly all-zero) vector
/// per proxy-table slot, also for the pair-based losses that never read the
/// table.
pub fn evaluate_loss(
    kind: LossKind,
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
    hyper: &LossHyperparams,
) -> Result<LossOutput> {
    let mut out = match kind {
        LossKind::MaskedProxy => masked_proxy_loss(batch, proxies, params, hyper),
        LossKind::MultinomialMaskedProxy => {
            multinomial_masked_proxy_loss(batch, proxies, params, hyper)
        }
        LossKind::ProxyNca => proxy_nca_loss(batch.instances(), batch.labels(), proxies),
        LossKind::ProxyAnchor => {
            proxy_anchor_loss(batch.instances(), batch.labels(), proxies, hyper)
        }
        LossKind::Triplet => triplet_loss(batch.instances(), batch.labels(), hyper),
        LossKind::Prototypical => prototypical_loss(batch),
        LossKind::AngularPrototypical => angular_prototypical_loss(batch, params),
        LossKind::Ge2e => ge2e_loss(batch, params),
    }?;
    if out.grad_proxies.len() != proxies.len() {
        out.grad_proxies = vec![vec![0.0; proxies.dim()]; proxies.len()];
    }
    Ok(out)
}
