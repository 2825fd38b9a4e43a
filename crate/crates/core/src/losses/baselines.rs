//! The six baseline objectives the masked-proxy losses are compared against,
//! in their original published forms.

// The backward passes walk several parallel buffers with one index.
#![allow(clippy::needless_range_loop)]

use crate::embedding::{CentroidGrads, Embedding, Minibatch, ProxyTable, SimilarityParams};
use crate::error::{Error, Result};
use crate::losses::{LossHyperparams, LossOutput};
use crate::vecmath::{
    axpy, dot, euclidean_distance, log1p_softmax_weights, log1p_sum_exp, log_sum_exp, softmax,
    squared_distance,
};

/// Proxy-NCA: each instance is pulled to its class proxy and pushed from the
/// proxies of every other class, under negated Euclidean distance.
pub fn proxy_nca_loss(
    instances: &[Embedding],
    labels: &[usize],
    proxies: &ProxyTable,
) -> Result<LossOutput> {
    if proxies.len() < 2 {
        return Err(Error::EmptyDenominator {
            context: "proxy-nca needs at least two proxies",
        });
    }
    let dim = instances.first().map_or(0, Embedding::dim);
    let mut out = LossOutput::zeros(instances.len(), dim, proxies.len(), proxies.dim());
    let n = instances.len() as f64;

    for (i, (x, &label)) in instances.iter().zip(labels).enumerate() {
        let own_slot = proxies.slot(label).ok_or_else(|| Error::Config {
            reason: format!("no proxy for class {label}"),
        })?;

        let d_pos = euclidean_distance(x.values(), proxies.vector(own_slot));
        out.comparisons += 1;

        let mut neg_slots = Vec::with_capacity(proxies.len() - 1);
        let mut neg_dists = Vec::with_capacity(proxies.len() - 1);
        for slot in 0..proxies.len() {
            if slot == own_slot {
                continue;
            }
            neg_slots.push(slot);
            neg_dists.push(euclidean_distance(x.values(), proxies.vector(slot)));
            out.comparisons += 1;
        }

        let neg_exponents: Vec<f64> = neg_dists.iter().map(|d| -d).collect();
        out.value += (d_pos + log_sum_exp(&neg_exponents)) / n;

        // d(||x-p||)/dx = (x-p)/||x-p||; the direction is undefined at an
        // exact coincidence, where the contribution is dropped.
        let mut add_distance_grad = |slot: usize, coef: f64, d: f64| {
            if d <= 1e-12 {
                return;
            }
            let p = proxies.vector(slot);
            for k in 0..dim {
                let dir = (x.values()[k] - p[k]) / d;
                out.grad_embeddings[i][k] += coef * dir;
                out.grad_proxies[slot][k] -= coef * dir;
            }
        };

        add_distance_grad(own_slot, 1.0 / n, d_pos);
        let w = softmax(&neg_exponents);
        for (k, &slot) in neg_slots.iter().enumerate() {
            add_distance_grad(slot, -w[k] / n, neg_dists[k]);
        }
    }
    Ok(out)
}

/// Proxy-anchor: every proxy acts as an anchor; positive and negative
/// instance sets contribute with hardness-dependent weights under plain
/// cosine similarity with the loss's own scale and margin.
pub fn proxy_anchor_loss(
    instances: &[Embedding],
    labels: &[usize],
    proxies: &ProxyTable,
    hyper: &LossHyperparams,
) -> Result<LossOutput> {
    if proxies.is_empty() {
        return Err(Error::Config {
            reason: "proxy-anchor needs a non-empty proxy table".to_string(),
        });
    }
    let scale = hyper.anchor_scale;
    let margin = hyper.anchor_margin;
    let dim = instances.first().map_or(0, Embedding::dim);
    let mut out = LossOutput::zeros(instances.len(), dim, proxies.len(), proxies.dim());

    // Full instance-proxy similarity matrix; each pair is visited once.
    let sims: Vec<Vec<f64>> = instances
        .iter()
        .map(|x| {
            (0..proxies.len())
                .map(|slot| {
                    out.comparisons += 1;
                    dot(x.values(), proxies.vector(slot))
                })
                .collect()
        })
        .collect();

    let in_batch_slots: Vec<usize> = (0..proxies.len())
        .filter(|&slot| labels.contains(&proxies.class_ids()[slot]))
        .collect();

    // Positive term over proxies of classes present in the batch.
    if !in_batch_slots.is_empty() {
        let inv = 1.0 / in_batch_slots.len() as f64;
        for &slot in &in_batch_slots {
            let class = proxies.class_ids()[slot];
            let members: Vec<usize> = (0..instances.len())
                .filter(|&i| labels[i] == class)
                .collect();
            let exponents: Vec<f64> = members
                .iter()
                .map(|&i| -scale * (sims[i][slot] - margin))
                .collect();
            out.value += inv * log1p_sum_exp(&exponents);
            let w = log1p_softmax_weights(&exponents);
            for (k, &i) in members.iter().enumerate() {
                let coef = inv * (-scale) * w[k];
                axpy(&mut out.grad_embeddings[i], coef, proxies.vector(slot));
                axpy(&mut out.grad_proxies[slot], coef, instances[i].values());
            }
        }
    }

    // Negative term over every proxy in the table.
    let inv = 1.0 / proxies.len() as f64;
    for slot in 0..proxies.len() {
        let class = proxies.class_ids()[slot];
        let others: Vec<usize> = (0..instances.len())
            .filter(|&i| labels[i] != class)
            .collect();
        if others.is_empty() {
            continue;
        }
        let exponents: Vec<f64> = others
            .iter()
            .map(|&i| scale * (sims[i][slot] + margin))
            .collect();
        out.value += inv * log1p_sum_exp(&exponents);
        let w = log1p_softmax_weights(&exponents);
        for (k, &i) in others.iter().enumerate() {
            let coef = inv * scale * w[k];
            axpy(&mut out.grad_embeddings[i], coef, proxies.vector(slot));
            axpy(&mut out.grad_proxies[slot], coef, instances[i].values());
        }
    }
    Ok(out)
}

/// Triplet loss with full within-batch enumeration: the mean hinge
/// `max(0, d(a,p)^2 - d(a,n)^2 + margin)` over every ordered
/// (anchor, positive, negative) with matching/mismatching labels.
pub fn triplet_loss(
    instances: &[Embedding],
    labels: &[usize],
    hyper: &LossHyperparams,
) -> Result<LossOutput> {
    let margin = hyper.triplet_margin;
    let dim = instances.first().map_or(0, Embedding::dim);
    let mut out = LossOutput::zeros(instances.len(), dim, 0, 0);
    let n = instances.len();

    let mut triplet_count = 0u64;
    let mut total = 0.0;
    let mut active: Vec<(usize, usize, usize)> = Vec::new();
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for neg in 0..n {
                if labels[neg] == labels[a] {
                    continue;
                }
                // Full enumeration evaluates both distances per triplet.
                let d_ap = squared_distance(instances[a].values(), instances[p].values());
                let d_an = squared_distance(instances[a].values(), instances[neg].values());
                out.comparisons += 2;
                triplet_count += 1;
                let hinge = d_ap - d_an + margin;
                if hinge > 0.0 {
                    total += hinge;
                    active.push((a, p, neg));
                }
            }
        }
    }
    if triplet_count == 0 {
        return Err(Error::NoTriplet);
    }
    out.value = total / triplet_count as f64;

    let w = 1.0 / triplet_count as f64;
    for (a, p, neg) in active {
        for k in 0..dim {
            let ap = instances[a].values()[k] - instances[p].values()[k];
            let an = instances[a].values()[k] - instances[neg].values()[k];
            out.grad_embeddings[a][k] += w * 2.0 * (ap - an);
            out.grad_embeddings[p][k] += w * (-2.0) * ap;
            out.grad_embeddings[neg][k] += w * 2.0 * an;
        }
    }
    Ok(out)
}

/// Shared softmax cross-entropy over per-query centroid logits: returns the
/// mean loss and `d(loss)/d(logit)` per (query, class slot).
fn query_centroid_cross_entropy(batch: &Minibatch, logits: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let q = batch.num_classes() as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (slot, z) in logits.iter().enumerate() {
        value += (-z[slot] + log_sum_exp(z)) / q;
        let mut g = softmax(z);
        for (j, gj) in g.iter_mut().enumerate() {
            let target = if j == slot { 1.0 } else { 0.0 };
            *gj = (*gj - target) / q;
        }
        grads.push(g);
    }
    (value, grads)
}

/// Prototypical loss: softmax cross-entropy of each reserved query against
/// all batch centroids under negated squared Euclidean distance.
pub fn prototypical_loss(batch: &Minibatch) -> Result<LossOutput> {
    let m = batch.num_classes();
    if m < 2 {
        return Err(Error::EmptyDenominator {
            context: "prototypical loss needs at least two batch classes",
        });
    }
    let dim = batch.instances().first().map_or(0, Embedding::dim);
    let mut out = LossOutput::zeros(batch.len(), dim, 0, 0);

    let mut logits = Vec::with_capacity(m);
    for &qidx in batch.query_indices() {
        let x = batch.instances()[qidx].values();
        let z: Vec<f64> = (0..m)
            .map(|j| {
                out.comparisons += 1;
                -squared_distance(x, batch.centroid(j).values())
            })
            .collect();
        logits.push(z);
    }

    let (value, logit_grads) = query_centroid_cross_entropy(batch, &logits);
    out.value = value;

    let mut centroid_grads = CentroidGrads::new(batch);
    for (slot, &qidx) in batch.query_indices().iter().enumerate() {
        let x = batch.instances()[qidx].values().to_vec();
        for j in 0..m {
            let g = logit_grads[slot][j];
            let c = batch.centroid(j).values();
            for k in 0..dim {
                let diff = x[k] - c[k];
                out.grad_embeddings[qidx][k] += g * (-2.0) * diff;
            }
            let diff: Vec<f64> = x.iter().zip(c).map(|(xk, ck)| xk - ck).collect();
            centroid_grads.add(j, 2.0 * g, &diff);
        }
    }
    centroid_grads.scatter(batch, &mut out.grad_embeddings);
    Ok(out)
}

/// Angular prototypical loss: the prototypical structure under the affine
/// cosine similarity with learnable scale and bias.
pub fn angular_prototypical_loss(
    batch: &Minibatch,
    params: &SimilarityParams,
) -> Result<LossOutput> {
    let m = batch.num_classes();
    if m < 2 {
        return Err(Error::EmptyDenominator {
            context: "angular prototypical loss needs at least two batch classes",
        });
    }
    let dim = batch.instances().first().map_or(0, Embedding::dim);
    let mut out = LossOutput::zeros(batch.len(), dim, 0, 0);
    let alpha = params.alpha;

    let mut dots = Vec::with_capacity(m);
    let mut logits = Vec::with_capacity(m);
    for &qidx in batch.query_indices() {
        let x = batch.instances()[qidx].values();
        let d: Vec<f64> = (0..m)
            .map(|j| {
                out.comparisons += 1;
                dot(x, batch.centroid(j).values())
            })
            .collect();
        logits.push(d.iter().map(|&v| alpha * (v - params.beta)).collect());
        dots.push(d);
    }

    let (value, logit_grads) = query_centroid_cross_entropy(batch, &logits);
    out.value = value;

    let mut centroid_grads = CentroidGrads::new(batch);
    for (slot, &qidx) in batch.query_indices().iter().enumerate() {
        let x = batch.instances()[qidx].values().to_vec();
        for j in 0..m {
            let g = logit_grads[slot][j];
            axpy(
                &mut out.grad_embeddings[qidx],
                g * alpha,
                batch.centroid(j).values(),
            );
            centroid_grads.add(j, g * alpha, &x);
            out.grad_alpha += g * (dots[slot][j] - params.beta);
            out.grad_beta += g * (-alpha);
        }
    }
    centroid_grads.scatter(batch, &mut out.grad_embeddings);
    Ok(out)
}

/// GE2E (softmax variant): every instance is scored against all class
/// centroids under the affine cosine similarity; the instance's own class
/// centroid is computed leave-self-out, other centroids over the full class.
pub fn ge2e_loss(batch: &Minibatch, params: &SimilarityParams) -> Result<LossOutput> {
    let m = batch.num_classes();
    if m < 2 {
        return Err(Error::EmptyDenominator {
            context: "ge2e loss needs at least two batch classes",
        });
    }
    let dim = batch.instances().first().map_or(0, Embedding::dim);
    let n = batch.len();
    let mut out = LossOutput::zeros(n, dim, 0, 0);
    let alpha = params.alpha;

    // Full per-class sums and normalized full centroids.
    let mut class_sums: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut full_units: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut full_prenorms: Vec<f64> = Vec::with_capacity(m);
    for slot in 0..m {
        let members = batch.class_members(slot);
        let mut sum = vec![0.0; dim];
        for &i in members {
            axpy(&mut sum, 1.0, batch.instances()[i].values());
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / members.len() as f64).collect();
        let prenorm = crate::vecmath::norm(&mean);
        if prenorm == 0.0 {
            return Err(Error::Normalization);
        }
        full_units.push(mean.iter().map(|x| x / prenorm).collect());
        full_prenorms.push(prenorm);
        class_sums.push(sum);
    }

    // Leave-self-out centroid per instance.
    let mut own_units: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut own_prenorms: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let slot = batch.class_slot(batch.labels()[i]).expect("label present");
        let count = batch.class_members(slot).len() - 1;
        let mean: Vec<f64> = class_sums[slot]
            .iter()
            .zip(batch.instances()[i].values())
            .map(|(s, x)| (s - x) / count as f64)
            .collect();
        let prenorm = crate::vecmath::norm(&mean);
        if prenorm == 0.0 {
            return Err(Error::Normalization);
        }
        own_units.push(mean.iter().map(|x| x / prenorm).collect());
        own_prenorms.push(prenorm);
    }

    // Logits and the cross-entropy.
    let mut full_grads: Vec<Vec<f64>> = vec![vec![0.0; dim]; m];
    let mut own_grads: Vec<Vec<f64>> = vec![vec![0.0; dim]; n];
    for i in 0..n {
        let own_slot = batch.class_slot(batch.labels()[i]).expect("label present");
        let x = batch.instances()[i].values();
        let mut dots_row = Vec::with_capacity(m);
        let mut z = Vec::with_capacity(m);
        for j in 0..m {
            let target = if j == own_slot {
                own_units[i].as_slice()
            } else {
                full_units[j].as_slice()
            };
            let d = dot(x, target);
            out.comparisons += 1;
            dots_row.push(d);
            z.push(alpha * (d - params.beta));
        }
        out.value += (-z[own_slot] + log_sum_exp(&z)) / n as f64;

        let sm = softmax(&z);
        for j in 0..m {
            let target_ind = if j == own_slot { 1.0 } else { 0.0 };
            let g = (sm[j] - target_ind) / n as f64;
            let target = if j == own_slot {
                own_units[i].as_slice()
            } else {
                full_units[j].as_slice()
            };
            axpy(&mut out.grad_embeddings[i], g * alpha, target);
            if j == own_slot {
                axpy(&mut own_grads[i], g * alpha, x);
            } else {
                axpy(&mut full_grads[j], g * alpha, x);
            }
            out.grad_alpha += g * (dots_row[j] - params.beta);
            out.grad_beta += g * (-alpha);
        }
    }

    // Chain full-centroid gradients: every member contributes 1/N_c.
    for (j, g) in full_grads.into_iter().enumerate() {
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let g_mean = crate::vecmath::normalize_backward(&full_units[j], full_prenorms[j], &g);
        let members = batch.class_members(j);
        let w = 1.0 / members.len() as f64;
        for &i in members {
            axpy(&mut out.grad_embeddings[i], w, &g_mean);
        }
    }

    // Chain leave-self-out gradients: the other members of the class.
    for i in 0..n {
        let g = &own_grads[i];
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let g_mean = crate::vecmath::normalize_backward(&own_units[i], own_prenorms[i], g);
        let slot = batch.class_slot(batch.labels()[i]).expect("label present");
        let members = batch.class_members(slot);
        let w = 1.0 / (members.len() - 1) as f64;
        for &t in members {
            if t == i {
                continue;
            }
            axpy(&mut out.grad_embeddings[t], w, &g_mean);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Embedding;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::from_raw(v.to_vec())
    }

    #[test]
    fn nca_instance_at_proxy_with_antipodal_other() {
        // d(x, own) = 0; the single other proxy at distance 2:
        // value = 0 + log e^{-2} = -2.
        let instances = vec![emb(&[1.0, 0.0])];
        let proxies = ProxyTable::new(vec![0, 1], vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let out = proxy_nca_loss(&instances, &[0], &proxies).unwrap();
        assert!((out.value - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn nca_equidistant_proxies_give_zero() {
        let instances = vec![emb(&[0.0, 1.0])];
        let proxies = ProxyTable::new(vec![0, 1], vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let out = proxy_nca_loss(&instances, &[0], &proxies).unwrap();
        assert!(out.value.abs() < 1e-12);
    }

    #[test]
    fn nca_mean_is_order_invariant() {
        let a = vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0])];
        let b = vec![emb(&[0.0, 1.0]), emb(&[1.0, 0.0])];
        let proxies = ProxyTable::new(vec![0, 1], vec![vec![0.6, 0.8], vec![-0.6, 0.8]]).unwrap();
        let va = proxy_nca_loss(&a, &[0, 1], &proxies).unwrap().value;
        let vb = proxy_nca_loss(&b, &[1, 0], &proxies).unwrap().value;
        assert!((va - vb).abs() < 1e-12);
    }

    #[test]
    fn nca_single_proxy_is_empty_denominator() {
        let instances = vec![emb(&[1.0, 0.0])];
        let proxies = ProxyTable::new(vec![0], vec![vec![1.0, 0.0]]).unwrap();
        let got = proxy_nca_loss(&instances, &[0], &proxies);
        assert!(matches!(got, Err(Error::EmptyDenominator { .. })));
    }

    #[test]
    fn anchor_single_instance_at_its_proxy() {
        // One proxy, one same-class instance at the proxy, margin 0 and
        // scale 1: the positive term is log(1 + e^{-1}); the negative
        // instance set is empty so the second term vanishes.
        let instances = vec![emb(&[1.0, 0.0])];
        let proxies = ProxyTable::new(vec![0], vec![vec![1.0, 0.0]]).unwrap();
        let hyper = LossHyperparams {
            anchor_margin: 0.0,
            anchor_scale: 1.0,
            ..LossHyperparams::default()
        };
        let out = proxy_anchor_loss(&instances, &[0], &proxies, &hyper).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((out.value - expected).abs() < 1e-12);
    }

    #[test]
    fn anchor_proxy_without_positives_contributes_zero_to_first_term() {
        // Batch holds only class 0; proxy 1 has no positives, so the first
        // term is the class-0 proxy's alone. Proxy 1 still sees the batch
        // instance as a negative.
        let instances = vec![emb(&[1.0, 0.0]), emb(&[0.96, 0.28])];
        let proxies = ProxyTable::new(vec![0, 1], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let hyper = LossHyperparams {
            anchor_margin: 0.0,
            anchor_scale: 1.0,
            ..LossHyperparams::default()
        };
        let out = proxy_anchor_loss(&instances, &[0, 0], &proxies, &hyper).unwrap();

        let pos: f64 = {
            let e: Vec<f64> = instances
                .iter()
                .map(|x| (-dot(x.values(), &[1.0, 0.0])).exp())
                .collect();
            (1.0 + e.iter().sum::<f64>()).ln()
        };
        let neg: f64 = 0.5
            * (1.0
                + instances
                    .iter()
                    .map(|x| dot(x.values(), &[0.0, 1.0]).exp())
                    .sum::<f64>())
            .ln();
        assert!((out.value - (pos + neg)).abs() < 1e-12);
    }

    #[test]
    fn triplet_separated_clusters_reach_zero() {
        let instances = vec![
            emb(&[1.0, 0.0]),
            emb(&[1.0, 0.0]),
            emb(&[-1.0, 0.0]),
            emb(&[-1.0, 0.0]),
        ];
        let hyper = LossHyperparams {
            triplet_margin: 0.1,
            ..LossHyperparams::default()
        };
        let out = triplet_loss(&instances, &[0, 0, 1, 1], &hyper).unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn triplet_anchor_equals_positive() {
        // With a = p the hinge is max(0, margin - d(a,n)^2) per triplet.
        let instances = vec![emb(&[1.0, 0.0]), emb(&[1.0, 0.0]), emb(&[0.0, 1.0])];
        let hyper = LossHyperparams {
            triplet_margin: 0.5,
            ..LossHyperparams::default()
        };
        let out = triplet_loss(&instances, &[0, 0, 1], &hyper).unwrap();
        // d(a,n)^2 = 2 for both anchors, so every hinge is 0.
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn triplet_without_valid_triplets_errors() {
        let instances = vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0])];
        let hyper = LossHyperparams::default();
        let got = triplet_loss(&instances, &[0, 1], &hyper);
        assert!(matches!(got, Err(Error::NoTriplet)));
    }

    fn two_class_batch() -> Minibatch {
        Minibatch::new(
            vec![
                emb(&[1.0, 0.0]),
                emb(&[0.8, 0.6]),
                emb(&[-1.0, 0.0]),
                emb(&[-0.8, 0.6]),
            ],
            vec![0, 0, 1, 1],
            vec![0, 2],
        )
        .unwrap()
    }

    #[test]
    fn prototypical_far_negatives_drive_loss_to_zero() {
        // Queries sit exactly on their centroids; the other centroid is far.
        let batch = Minibatch::new(
            vec![
                emb(&[1.0, 0.0]),
                emb(&[1.0, 0.0]),
                emb(&[-1.0, 0.0]),
                emb(&[-1.0, 0.0]),
            ],
            vec![0, 0, 1, 1],
            vec![0, 2],
        )
        .unwrap();
        let out = prototypical_loss(&batch).unwrap();
        // Logit gap is -0 vs -4; softmax CE = log(1 + e^{-4}) per query.
        let expected = (1.0 + (-4.0f64).exp()).ln();
        assert!((out.value - expected).abs() < 1e-12);
    }

    #[test]
    fn prototypical_single_class_errors() {
        let batch = Minibatch::new(
            vec![emb(&[1.0, 0.0]), emb(&[1.0, 0.0])],
            vec![0, 0],
            vec![0],
        )
        .unwrap();
        assert!(matches!(
            prototypical_loss(&batch),
            Err(Error::EmptyDenominator { .. })
        ));
    }

    #[test]
    fn prototypical_class_relabeling_invariance() {
        let a = two_class_batch();
        let b = Minibatch::new(a.instances().to_vec(), vec![5, 5, 3, 3], vec![0, 2]).unwrap();
        let va = prototypical_loss(&a).unwrap().value;
        let vb = prototypical_loss(&b).unwrap().value;
        assert!((va - vb).abs() < 1e-12);
    }

    #[test]
    fn angular_prototypical_uses_learnable_similarity() {
        let batch = two_class_batch();
        let params = SimilarityParams::new(5.0, 0.1);
        let out = angular_prototypical_loss(&batch, &params).unwrap();
        assert!(out.value.is_finite());
        assert!(out.grad_alpha != 0.0 || out.grad_beta != 0.0);
    }

    #[test]
    fn ge2e_scores_every_instance() {
        let batch = two_class_batch();
        let params = SimilarityParams::new(2.0, 0.0);
        let out = ge2e_loss(&batch, &params).unwrap();
        assert!(out.value.is_finite());
        // Every instance is scored against every class centroid.
        assert_eq!(out.comparisons, (batch.len() * batch.num_classes()) as u64);
        // Pair-based loss: no proxy gradients.
        assert!(out.grad_proxies.is_empty());
    }

    #[test]
    fn ge2e_single_class_errors() {
        let batch = Minibatch::new(
            vec![emb(&[1.0, 0.0]), emb(&[0.8, 0.6]), emb(&[0.6, 0.8])],
            vec![0, 0, 0],
            vec![0],
        )
        .unwrap();
        let params = SimilarityParams::default();
        assert!(matches!(
            ge2e_loss(&batch, &params),
            Err(Error::EmptyDenominator { .. })
        ));
    }
}
