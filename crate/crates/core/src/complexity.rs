//! Empirical verification of per-epoch comparison counts.
//!
//! Every loss forward pass reports how many pairwise similarity/distance
//! evaluations it performed (centroid construction is not counted). The
//! probe runs instrumented epochs, checks the measured counts against
//! closed-form predictions, and fits log-log scaling slopes against the
//! training size or the proxy-table size.

use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::batching::{epoch_batches, ClassCatalog, IndexedBatch, SamplerConfig, SamplerMode};
use crate::embedding::{Embedding, Minibatch, ProxyTable, SimilarityParams};
use crate::error::{Error, Result};
use crate::losses::{evaluate_loss, LossHyperparams, LossKind};

/// Running count of pairwise similarity/distance evaluations within an
/// epoch; accumulated per batch, reset between epochs.
#[derive(Debug, Clone, Default)]
pub struct ComparisonCounter {
    count: u64,
}

impl ComparisonCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, n: u64) {
        self.count += n;
    }

    pub fn reset(&mut self) {
        self.count = 0;
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Probe configuration: dataset size `N`, batch size `B`, proxy count `P`
/// and shots per class `M`, with the dataset arranged as `N / M` classes.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub loss: LossKind,
    pub train_size: usize,
    pub batch_size: usize,
    pub proxy_count: usize,
    pub shots: usize,
    pub hyper: LossHyperparams,
    pub params: SimilarityParams,
    pub dim: usize,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn new(
        loss: LossKind,
        train_size: usize,
        batch_size: usize,
        proxy_count: usize,
        shots: usize,
    ) -> Self {
        Self {
            loss,
            train_size,
            batch_size,
            proxy_count,
            shots,
            hyper: LossHyperparams::default(),
            params: SimilarityParams::default(),
            dim: 8,
            seed: 0,
        }
    }
}

/// Measured and predicted per-epoch counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochComparisons {
    pub measured: u64,
    pub predicted: u64,
    pub batches: usize,
}

/// Closed-form comparison count for one batch.
///
/// `class_sizes` are the per-class instance counts of the batch; `proxies`
/// is the proxy-table size. `lambda_nonzero` selects whether the
/// masked-proxy regulator runs.
pub fn predicted_batch_comparisons(
    loss: LossKind,
    class_sizes: &[usize],
    proxies: usize,
    lambda_nonzero: bool,
) -> u64 {
    let c = class_sizes.len() as u64;
    let n: u64 = class_sizes.iter().map(|&s| s as u64).sum();
    let p = proxies as u64;
    match loss {
        // Per query: one positive centroid, c-1 negative centroids, p-c
        // unmasked proxies. The regulator visits all centroid-proxy pairs.
        LossKind::MaskedProxy | LossKind::MultinomialMaskedProxy => {
            let queries = c;
            let per_query = 1 + (c - 1) + (p - c);
            let regulator = if lambda_nonzero { c * c } else { 0 };
            queries * per_query + regulator
        }
        // Each query against every batch centroid.
        LossKind::Prototypical | LossKind::AngularPrototypical => c * c,
        // Every instance against every batch centroid.
        LossKind::Ge2e => n * c,
        // Every instance against every proxy.
        LossKind::ProxyNca | LossKind::ProxyAnchor => n * p,
        // Both distances of every enumerated (anchor, positive, negative).
        LossKind::Triplet => {
            2 * class_sizes
                .iter()
                .map(|&s| {
                    let s = s as u64;
                    s * (s - 1) * (n - s)
                })
                .sum::<u64>()
        }
    }
}

fn probe_instance(seed: u64, class: usize, instance: usize, dim: usize) -> Embedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 20) | instance as u64);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Ok(u) = crate::embedding::l2_normalize(&v) {
            return Embedding::from_raw(u);
        }
    }
}

fn probe_minibatch(batch: &IndexedBatch, cfg: &ProbeConfig) -> Result<Minibatch> {
    let instances = batch
        .items
        .iter()
        .map(|it| probe_instance(cfg.seed, it.class_id, it.instance, cfg.dim))
        .collect();
    Minibatch::new(instances, batch.labels(), batch.query_positions.clone())
}

fn probe_proxies(cfg: &ProbeConfig) -> Result<ProxyTable> {
    let vectors = (0..cfg.proxy_count)
        .map(|c| {
            probe_instance(cfg.seed ^ 0xABCD, c, 0, cfg.dim)
                .values()
                .to_vec()
        })
        .collect();
    ProxyTable::new((0..cfg.proxy_count).collect(), vectors)
}

/// Run one instrumented epoch and return the measured comparison count next
/// to the closed-form prediction. `train_size == 0` yields zero counts.
pub fn count_epoch_comparisons(cfg: &ProbeConfig) -> Result<EpochComparisons> {
    if cfg.train_size == 0 {
        return Ok(EpochComparisons {
            measured: 0,
            predicted: 0,
            batches: 0,
        });
    }
    if cfg.shots < 2 || !cfg.train_size.is_multiple_of(cfg.shots) {
        return Err(Error::Probe {
            reason: format!(
                "train_size {} must be a positive multiple of shots {} (>= 2)",
                cfg.train_size, cfg.shots
            ),
        });
    }
    let classes = cfg.train_size / cfg.shots;
    let needs_full_proxy_cover = matches!(
        cfg.loss,
        LossKind::MaskedProxy
            | LossKind::MultinomialMaskedProxy
            | LossKind::ProxyNca
            | LossKind::ProxyAnchor
    );
    if needs_full_proxy_cover && cfg.proxy_count < classes {
        return Err(Error::Probe {
            reason: format!(
                "proxy_count {} cannot cover {classes} dataset classes",
                cfg.proxy_count
            ),
        });
    }

    let catalog = ClassCatalog::from_counts((0..classes).map(|c| (c, cfg.shots)));
    let sampler = SamplerConfig {
        mode: SamplerMode::Balanced,
        shots_per_class: cfg.shots,
        expected_batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let batches = epoch_batches(&catalog, &sampler, 0).map_err(|e| Error::Probe {
        reason: format!("sampler: {e}"),
    })?;

    let proxies = probe_proxies(cfg)?;
    let lambda_nonzero = cfg.hyper.lambda_balance != 0.0;
    let mut counter = ComparisonCounter::new();
    let mut predicted = 0u64;
    for batch in &batches {
        let minibatch = probe_minibatch(batch, cfg)?;
        let class_sizes: Vec<usize> = (0..minibatch.num_classes())
            .map(|slot| minibatch.class_members(slot).len())
            .collect();
        let out = evaluate_loss(cfg.loss, &minibatch, &proxies, &cfg.params, &cfg.hyper)?;
        counter.add(out.comparisons);
        predicted +=
            predicted_batch_comparisons(cfg.loss, &class_sizes, proxies.len(), lambda_nonzero);
    }
    Ok(EpochComparisons {
        measured: counter.count(),
        predicted,
        batches: batches.len(),
    })
}

/// Which parameter a scaling sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptParam {
    /// Scale the training size; batch size and shots stay fixed (minibatch
    /// regime, one pass over the data per epoch).
    TrainSize,
    /// Scale the training size over a fixed number of classes; the whole
    /// dataset forms a single batch (full-enumeration regime).
    TrainSizeFullBatch { classes: usize },
    /// Scale the proxy-table size; the dataset stays fixed.
    ProxyCount,
}

impl SweptParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweptParam::TrainSize => "train_size",
            SweptParam::TrainSizeFullBatch { .. } => "train_size_full_batch",
            SweptParam::ProxyCount => "proxy_count",
        }
    }
}

/// One sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalingPoint {
    pub value: usize,
    pub count: u64,
}

/// Result of a scaling sweep: the counts per swept value and the log-log
/// least-squares slope with its RMS residual.
#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub loss: LossKind,
    pub param: SweptParam,
    pub points: Vec<ScalingPoint>,
    pub slope: f64,
    pub rms_residual: f64,
}

/// Sweep one parameter over `values` (at least 4) and fit
/// `log(count) ~ slope * log(value) + intercept`.
pub fn fit_scaling(
    base: &ProbeConfig,
    param: SweptParam,
    values: &[usize],
) -> Result<ScalingReport> {
    if values.len() < 4 {
        return Err(Error::Probe {
            reason: format!("scaling grid needs >= 4 sizes, got {}", values.len()),
        });
    }
    let mut points = Vec::with_capacity(values.len());
    for &v in values {
        let mut cfg = base.clone();
        match param {
            SweptParam::TrainSize => cfg.train_size = v,
            SweptParam::TrainSizeFullBatch { classes } => {
                if classes < 2 || v % classes != 0 {
                    return Err(Error::Probe {
                        reason: format!("value {v} is not a multiple of {classes} classes"),
                    });
                }
                cfg.train_size = v;
                cfg.batch_size = v;
                cfg.shots = v / classes;
            }
            SweptParam::ProxyCount => cfg.proxy_count = v,
        }
        let epoch = count_epoch_comparisons(&cfg)?;
        if epoch.measured != epoch.predicted {
            return Err(Error::Probe {
                reason: format!(
                    "measured count {} disagrees with prediction {} at {}={v}",
                    epoch.measured,
                    epoch.predicted,
                    param.name()
                ),
            });
        }
        if epoch.measured == 0 {
            return Err(Error::Probe {
                reason: format!("zero comparisons at {}={v}", param.name()),
            });
        }
        points.push(ScalingPoint {
            value: v,
            count: epoch.measured,
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| (p.value as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p.count as f64).ln()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    if sxx == 0.0 {
        return Err(Error::Probe {
            reason: "degenerate grid: all swept values identical".to_string(),
        });
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rms_residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();

    Ok(ScalingReport {
        loss: base.loss,
        param,
        points,
        slope,
        rms_residual,
    })
}

/// Write scaling sweeps as CSV: `loss,param,value,count`.
pub fn write_scaling_csv(path: &Path, reports: &[ScalingReport]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "loss,param,value,count")?;
    for r in reports {
        for p in &r.points {
            writeln!(
                file,
                "{},{},{},{}",
                r.loss,
                r.param.name(),
                p.value,
                p.count
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_proxy_hand_count() {
        // One batch of 4 classes x 2 shots against 10 proxies: the query
        // objective visits 4 x (1 + 3 + 6) = 40 pairs, the regulator
        // 4 x 4 = 16, total 56.
        let cfg = ProbeConfig::new(LossKind::MaskedProxy, 8, 8, 10, 2);
        let epoch = count_epoch_comparisons(&cfg).unwrap();
        assert_eq!(epoch.batches, 1);
        assert_eq!(epoch.measured, 56);
        assert_eq!(epoch.predicted, 56);
    }

    #[test]
    fn masked_proxy_lambda_zero_skips_regulator() {
        let mut cfg = ProbeConfig::new(LossKind::MaskedProxy, 8, 8, 10, 2);
        cfg.hyper.lambda_balance = 0.0;
        let epoch = count_epoch_comparisons(&cfg).unwrap();
        assert_eq!(epoch.measured, 40);
        assert_eq!(epoch.predicted, 40);
    }

    #[test]
    fn prototypical_is_classes_squared() {
        let cfg = ProbeConfig::new(LossKind::Prototypical, 8, 8, 4, 2);
        let epoch = count_epoch_comparisons(&cfg).unwrap();
        assert_eq!(epoch.measured, 16);
        assert_eq!(epoch.predicted, 16);
    }

    #[test]
    fn empty_epoch_counts_zero() {
        let cfg = ProbeConfig::new(LossKind::MaskedProxy, 0, 8, 10, 2);
        let epoch = count_epoch_comparisons(&cfg).unwrap();
        assert_eq!(epoch.measured, 0);
        assert_eq!(epoch.predicted, 0);
    }

    #[test]
    fn every_loss_matches_its_prediction() {
        for loss in LossKind::ALL {
            let cfg = ProbeConfig::new(loss, 24, 12, 16, 2);
            let epoch = count_epoch_comparisons(&cfg).unwrap();
            assert_eq!(
                epoch.measured, epoch.predicted,
                "count mismatch for {loss}: {} vs {}",
                epoch.measured, epoch.predicted
            );
        }
    }

    #[test]
    fn scaling_grid_must_have_four_points() {
        let cfg = ProbeConfig::new(LossKind::MaskedProxy, 40, 8, 64, 2);
        let got = fit_scaling(&cfg, SweptParam::TrainSize, &[40, 80, 160]);
        assert!(matches!(got, Err(Error::Probe { .. })));
    }

    #[test]
    fn masked_proxy_counts_are_affine_in_proxy_count() {
        // Equally spaced proxy grid: exact second differences vanish.
        let cfg = ProbeConfig::new(LossKind::MaskedProxy, 40, 8, 64, 2);
        let report = fit_scaling(&cfg, SweptParam::ProxyCount, &[64, 128, 192, 256]).unwrap();
        let counts: Vec<i64> = report.points.iter().map(|p| p.count as i64).collect();
        let d1: Vec<i64> = counts.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d1.windows(2).all(|w| w[0] == w[1]), "counts {counts:?}");
    }

    #[test]
    fn constant_counts_fit_slope_zero() {
        // Prototypical ignores the proxy table entirely.
        let cfg = ProbeConfig::new(LossKind::Prototypical, 16, 8, 16, 2);
        let report = fit_scaling(&cfg, SweptParam::ProxyCount, &[16, 32, 64, 128]).unwrap();
        assert_eq!(report.slope, 0.0);
        assert_eq!(report.rms_residual, 0.0);
    }
}
