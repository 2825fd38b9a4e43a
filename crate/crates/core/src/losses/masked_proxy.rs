//! Masked-proxy losses.
//!
//! Within a batch, each reserved query is compared against the other classes'
//! centroids (entity-to-entity) and against the proxies of classes absent
//! from the batch (entity-to-proxy); proxies of in-batch classes are masked
//! out. A regulator term pulls each in-batch proxy toward its class centroid
//! so masked proxies still receive updates. The multinomial variant replaces
//! the softmax form with a sum of log(1 + sum exp) terms, which weights each
//! positive pair by its hardness.

use crate::embedding::{CentroidGrads, Minibatch, ProxyTable, SimilarityParams};
use crate::error::{Error, Result};
use crate::losses::{LossHyperparams, LossOutput};
use crate::vecmath::{axpy, dot, log1p_softmax_weights, log1p_sum_exp, log_sum_exp, softmax};

/// Similarities gathered for one query: its positive centroid pair, the
/// other in-batch centroids, and the unmasked (out-of-batch) proxies.
struct QueryPairs {
    query_index: usize,
    class_slot: usize,
    positive_dot: f64,
    positive_sim: f64,
    /// Other class slots, their raw dots and similarities, aligned.
    negative_slots: Vec<usize>,
    negative_dots: Vec<f64>,
    negative_sims: Vec<f64>,
    /// Unmasked proxy-table slots, their raw dots and similarities, aligned.
    proxy_slots: Vec<usize>,
    proxy_dots: Vec<f64>,
    proxy_sims: Vec<f64>,
}

/// Per-pair loss derivatives with respect to the similarity values,
/// aligned with [`QueryPairs`].
struct PairCoefficients {
    positive: Vec<f64>,
    negative: Vec<Vec<f64>>,
    proxy: Vec<Vec<f64>>,
}

fn require_batch_proxies(batch: &Minibatch, proxies: &ProxyTable) -> Result<()> {
    for &class in batch.classes() {
        if proxies.slot(class).is_none() {
            return Err(Error::Config {
                reason: format!("no proxy for batch class {class}"),
            });
        }
    }
    Ok(())
}

/// Table slots of proxies whose class is not represented in the batch,
/// in ascending class-id order.
fn unmasked_proxy_slots(batch: &Minibatch, proxies: &ProxyTable) -> Vec<usize> {
    (0..proxies.len())
        .filter(|&slot| batch.class_slot(proxies.class_ids()[slot]).is_none())
        .collect()
}

/// Gather every query's pair similarities. Returns the pair table and the
/// number of similarity evaluations performed.
fn collect_query_pairs(
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
) -> Result<(Vec<QueryPairs>, u64)> {
    require_batch_proxies(batch, proxies)?;
    let unmasked = unmasked_proxy_slots(batch, proxies);
    let mut comparisons = 0u64;
    let mut all = Vec::with_capacity(batch.num_classes());
    for (slot, &q) in batch.query_indices().iter().enumerate() {
        let query = &batch.instances()[q];
        let positive_dot = dot(query.values(), batch.centroid(slot).values());
        let positive_sim = params.alpha * (positive_dot - params.beta);
        comparisons += 1;

        let mut negative_slots = Vec::new();
        let mut negative_dots = Vec::new();
        let mut negative_sims = Vec::new();
        for other in 0..batch.num_classes() {
            if other == slot {
                continue;
            }
            let d = dot(query.values(), batch.centroid(other).values());
            comparisons += 1;
            negative_slots.push(other);
            negative_dots.push(d);
            negative_sims.push(params.alpha * (d - params.beta));
        }

        let mut proxy_dots = Vec::new();
        let mut proxy_sims = Vec::new();
        for &p in &unmasked {
            let d = dot(query.values(), proxies.vector(p));
            comparisons += 1;
            proxy_dots.push(d);
            proxy_sims.push(params.alpha * (d - params.beta));
        }

        all.push(QueryPairs {
            query_index: q,
            class_slot: slot,
            positive_dot,
            positive_sim,
            negative_slots,
            negative_dots,
            negative_sims,
            proxy_slots: unmasked.clone(),
            proxy_dots,
            proxy_sims,
        });
    }
    Ok((all, comparisons))
}

/// Loss for a single reserved query: the negated positive similarity plus
/// the log-sum-exp over the other centroids and the unmasked proxies. The
/// positive term does not appear in the denominator.
pub fn masked_proxy_query_loss(
    query_index: usize,
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
) -> Result<f64> {
    if !batch.query_indices().contains(&query_index) {
        return Err(Error::Config {
            reason: format!("instance {query_index} is not a reserved query"),
        });
    }
    let (pairs, _) = collect_query_pairs(batch, proxies, params)?;
    let p = pairs
        .iter()
        .find(|p| p.query_index == query_index)
        .expect("query present");
    query_loss_from_pairs(p)
}

fn query_loss_from_pairs(p: &QueryPairs) -> Result<f64> {
    let denom: Vec<f64> = p
        .negative_sims
        .iter()
        .chain(p.proxy_sims.iter())
        .copied()
        .collect();
    if denom.is_empty() {
        return Err(Error::EmptyDenominator {
            context: "single-class batch with no masked-out proxy",
        });
    }
    Ok(-p.positive_sim + log_sum_exp(&denom))
}

/// Softmax-form coefficients: every positive pair gets exactly -1/|queries|.
fn masked_proxy_coefficients(pairs: &[QueryPairs]) -> Result<PairCoefficients> {
    let q = pairs.len() as f64;
    let mut positive = Vec::with_capacity(pairs.len());
    let mut negative = Vec::with_capacity(pairs.len());
    let mut proxy = Vec::with_capacity(pairs.len());
    for p in pairs {
        let denom: Vec<f64> = p
            .negative_sims
            .iter()
            .chain(p.proxy_sims.iter())
            .copied()
            .collect();
        if denom.is_empty() {
            return Err(Error::EmptyDenominator {
                context: "single-class batch with no masked-out proxy",
            });
        }
        let w = softmax(&denom);
        let (w_neg, w_prox) = w.split_at(p.negative_sims.len());
        positive.push(-1.0 / q);
        negative.push(w_neg.iter().map(|x| x / q).collect());
        proxy.push(w_prox.iter().map(|x| x / q).collect());
    }
    Ok(PairCoefficients {
        positive,
        negative,
        proxy,
    })
}

/// Multinomial-form coefficients: each positive pair is weighted by its
/// hardness, `-e^{-s_i} / (1 + sum_j e^{-s_j})` with the sum pooled over all
/// queries in the batch.
fn multinomial_coefficients(pairs: &[QueryPairs]) -> PairCoefficients {
    let q = pairs.len() as f64;
    let neg_pos: Vec<f64> = pairs.iter().map(|p| -p.positive_sim).collect();
    let positive: Vec<f64> = log1p_softmax_weights(&neg_pos)
        .into_iter()
        .map(|w| -w)
        .collect();
    let mut negative = Vec::with_capacity(pairs.len());
    let mut proxy = Vec::with_capacity(pairs.len());
    for p in pairs {
        negative.push(
            log1p_softmax_weights(&p.negative_sims)
                .into_iter()
                .map(|w| w / q)
                .collect(),
        );
        proxy.push(
            log1p_softmax_weights(&p.proxy_sims)
                .into_iter()
                .map(|w| w / q)
                .collect(),
        );
    }
    PairCoefficients {
        positive,
        negative,
        proxy,
    }
}

/// Assemble gradients for a query-side objective from its per-pair
/// coefficients, chaining centroid gradients back onto the contributing
/// instances.
fn assemble_query_objective(
    value: f64,
    comparisons: u64,
    pairs: &[QueryPairs],
    coeffs: &PairCoefficients,
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
) -> LossOutput {
    let dim = batch.instances().first().map_or(0, |e| e.dim());
    let mut out = LossOutput::zeros(batch.len(), dim, proxies.len(), proxies.dim());
    out.value = value;
    out.comparisons = comparisons;
    let mut centroid_grads = CentroidGrads::new(batch);
    let alpha = params.alpha;

    for (pi, p) in pairs.iter().enumerate() {
        let query = batch.instances()[p.query_index].values();

        // Positive pair (query, own centroid).
        let c_pos = coeffs.positive[pi];
        axpy(
            &mut out.grad_embeddings[p.query_index],
            c_pos * alpha,
            batch.centroid(p.class_slot).values(),
        );
        centroid_grads.add(p.class_slot, c_pos * alpha, query);
        out.grad_alpha += c_pos * (p.positive_dot - params.beta);
        out.grad_beta += c_pos * (-alpha);

        // Negative centroid pairs.
        for (k, &slot) in p.negative_slots.iter().enumerate() {
            let c = coeffs.negative[pi][k];
            axpy(
                &mut out.grad_embeddings[p.query_index],
                c * alpha,
                batch.centroid(slot).values(),
            );
            centroid_grads.add(slot, c * alpha, query);
            out.grad_alpha += c * (p.negative_dots[k] - params.beta);
            out.grad_beta += c * (-alpha);
        }

        // Unmasked proxy pairs.
        for (k, &slot) in p.proxy_slots.iter().enumerate() {
            let c = coeffs.proxy[pi][k];
            axpy(
                &mut out.grad_embeddings[p.query_index],
                c * alpha,
                proxies.vector(slot),
            );
            axpy(&mut out.grad_proxies[slot], c * alpha, query);
            out.grad_alpha += c * (p.proxy_dots[k] - params.beta);
            out.grad_beta += c * (-alpha);
        }
    }

    centroid_grads.scatter(batch, &mut out.grad_embeddings);
    out
}

/// Query objective of the masked-proxy loss: the mean of
/// [`masked_proxy_query_loss`] over all reserved queries, with analytic
/// gradients.
pub fn masked_proxy_query_objective(
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
) -> Result<LossOutput> {
    let (pairs, comparisons) = collect_query_pairs(batch, proxies, params)?;
    let mut value = 0.0;
    for p in &pairs {
        value += query_loss_from_pairs(p)?;
    }
    value /= pairs.len() as f64;
    let coeffs = masked_proxy_coefficients(&pairs)?;
    Ok(assemble_query_objective(
        value,
        comparisons,
        &pairs,
        &coeffs,
        batch,
        proxies,
        params,
    ))
}

/// Multinomial query objective: a single pooled log over all positive pairs
/// plus per-query means of logs over the negative centroid pairs and the
/// unmasked proxy pairs.
pub fn multinomial_query_objective(
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
) -> Result<LossOutput> {
    let (pairs, comparisons) = collect_query_pairs(batch, proxies, params)?;
    let q = pairs.len() as f64;
    let neg_pos: Vec<f64> = pairs.iter().map(|p| -p.positive_sim).collect();
    let mut value = log1p_sum_exp(&neg_pos);
    for p in &pairs {
        value += log1p_sum_exp(&p.negative_sims) / q;
        value += log1p_sum_exp(&p.proxy_sims) / q;
    }
    let coeffs = multinomial_coefficients(&pairs);
    Ok(assemble_query_objective(
        value,
        comparisons,
        &pairs,
        &coeffs,
        batch,
        proxies,
        params,
    ))
}

/// Derivative of the masked-proxy query objective with respect to each
/// query's positive similarity value, in batch class order. Equal to
/// `-1/|queries|` for every query.
pub fn masked_proxy_positive_pair_gradients(
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
) -> Result<Vec<f64>> {
    let (pairs, _) = collect_query_pairs(batch, proxies, params)?;
    Ok(masked_proxy_coefficients(&pairs)?.positive)
}

/// Derivative of the multinomial query objective with respect to each
/// query's positive similarity value, in batch class order.
pub fn multinomial_positive_pair_gradients(
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
) -> Result<Vec<f64>> {
    let (pairs, _) = collect_query_pairs(batch, proxies, params)?;
    Ok(multinomial_coefficients(&pairs).positive)
}

/// Regulator term: each in-batch proxy is anchored to its class centroid and
/// pushed from the other in-batch centroids. Out-of-batch proxies do not
/// appear and receive zero gradient.
pub fn mask_proxy_regulator(
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
) -> Result<LossOutput> {
    require_batch_proxies(batch, proxies)?;
    let m = batch.num_classes();
    if m < 2 {
        return Err(Error::EmptyDenominator {
            context: "regulator needs at least two batch classes",
        });
    }
    let dim = batch.instances().first().map_or(0, |e| e.dim());
    let mut out = LossOutput::zeros(batch.len(), dim, proxies.len(), proxies.dim());
    let mut centroid_grads = CentroidGrads::new(batch);
    let alpha = params.alpha;
    let scale = 1.0 / m as f64;

    for slot in 0..m {
        let proxy_slot = proxies.slot(batch.classes()[slot]).expect("checked above");
        let proxy = proxies.vector(proxy_slot);

        let positive_dot = dot(batch.centroid(slot).values(), proxy);
        let positive_sim = alpha * (positive_dot - params.beta);
        out.comparisons += 1;

        let mut negative_slots = Vec::with_capacity(m - 1);
        let mut negative_dots = Vec::with_capacity(m - 1);
        let mut negative_sims = Vec::with_capacity(m - 1);
        for other in 0..m {
            if other == slot {
                continue;
            }
            let d = dot(batch.centroid(other).values(), proxy);
            out.comparisons += 1;
            negative_slots.push(other);
            negative_dots.push(d);
            negative_sims.push(alpha * (d - params.beta));
        }

        out.value += scale * (-positive_sim + log_sum_exp(&negative_sims));

        // Positive pair (own centroid, proxy).
        centroid_grads.add(slot, -scale * alpha, proxy);
        axpy(
            &mut out.grad_proxies[proxy_slot],
            -scale * alpha,
            batch.centroid(slot).values(),
        );
        out.grad_alpha += -scale * (positive_dot - params.beta);
        out.grad_beta += -scale * (-alpha);

        // Negative pairs (other centroid, proxy).
        let w = softmax(&negative_sims);
        for (k, &other) in negative_slots.iter().enumerate() {
            let c = scale * w[k];
            centroid_grads.add(other, c * alpha, proxy);
            axpy(
                &mut out.grad_proxies[proxy_slot],
                c * alpha,
                batch.centroid(other).values(),
            );
            out.grad_alpha += c * (negative_dots[k] - params.beta);
            out.grad_beta += c * (-alpha);
        }
    }

    centroid_grads.scatter(batch, &mut out.grad_embeddings);
    Ok(out)
}

/// Full masked-proxy loss: query objective plus `lambda` times the
/// regulator. With `lambda == 0` the regulator is skipped entirely.
pub fn masked_proxy_loss(
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
    hyper: &LossHyperparams,
) -> Result<LossOutput> {
    let l1 = masked_proxy_query_objective(batch, proxies, params)?;
    if hyper.lambda_balance == 0.0 {
        return Ok(l1);
    }
    let l2 = mask_proxy_regulator(batch, proxies, params)?;
    Ok(l1.add_scaled(hyper.lambda_balance, &l2))
}

/// Full multinomial masked-proxy loss: multinomial query objective plus
/// `lambda` times the (unchanged) regulator.
pub fn multinomial_masked_proxy_loss(
    batch: &Minibatch,
    proxies: &ProxyTable,
    params: &SimilarityParams,
    hyper: &LossHyperparams,
) -> Result<LossOutput> {
    let l1m = multinomial_query_objective(batch, proxies, params)?;
    if hyper.lambda_balance == 0.0 {
        return Ok(l1m);
    }
    let l2 = mask_proxy_regulator(batch, proxies, params)?;
    Ok(l1m.add_scaled(hyper.lambda_balance, &l2))
}
