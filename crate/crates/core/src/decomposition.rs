//! Bias-variance decomposition of model error in KL divergence.
//!
//! For a model family that is e-flat (theta zero off an index set `B`), the
//! generalized Pythagorean theorem splits the expected total error exactly:
//!
//! ```text
//! E[ D(P*, P_hat_B) ] = D(P*, P*_B) + E[ D(P*_B, P_hat_B) ]
//!                        \__ bias __/   \______ variance ______/
//! ```
//!
//! where `P*_B` is the KL projection of the truth onto the family and
//! `P_hat_B` the per-dataset fit. HBM rows satisfy the identity to numerical
//! precision in exact mode; RBM rows report the residual but make no claim,
//! since the visible-marginal family is not e-flat.
//!
//! Replicates run in parallel over derived seeds; every row aggregates in
//! canonical order, so reports are identical for any worker count.

use std::time::Instant;

use crate::distribution::{eta_from_p, kl_divergence, theta_from_p, DenseDistribution};
use crate::error::{Error, Result};
use crate::hbm::{
    exact_distribution, fit_mle, AisConfig, FitConfig, FitMode, GibbsConfig, HbmModel,
};
use crate::lattice::{model_index_set, Outcome};
use crate::parallel::map_indexed;
use crate::rbm::{train_cd_traced, visible_marginal, CdConfig, RbmModel};
use crate::synthdata::{draw_dataset, replicate_seed};

/// Slack allowed on off-`B` theta values when verifying submanifold
/// membership.
pub const SUBMANIFOLD_TOL: f64 = 1e-6;

/// How a family projection was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionMethod {
    Exact,
    Sampled,
    /// CD training on a dataset orders of magnitude larger than the grid,
    /// standing in for the intractable RBM maximum-likelihood projection.
    LargeSample,
}

impl std::fmt::Display for ProjectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProjectionMethod::Exact => write!(f, "exact"),
            ProjectionMethod::Sampled => write!(f, "sampled"),
            ProjectionMethod::LargeSample => write!(f, "large-sample"),
        }
    }
}

/// The KL projection of a distribution onto a model family.
#[derive(Clone, Debug)]
pub struct ProjectionResult {
    pub projected: DenseDistribution,
    /// `max over B of |eta* - eta_B|` actually reached by the fit.
    pub achieved_eta_gap: f64,
    pub method: ProjectionMethod,
    pub model: HbmModel,
}

/// Projects the truth onto the k-th order family by an exact-mode fit against
/// `eta(P*)` restricted to the index set.
pub fn project_true_hbm(
    p_star: &DenseDistribution,
    k: usize,
    fit: &FitConfig,
) -> Result<ProjectionResult> {
    let exact_fit = FitConfig {
        mode: FitMode::Exact,
        ..fit.clone()
    };
    let target = eta_from_p(p_star);
    let m0 = HbmModel::new(p_star.n(), k)?;
    let outcome = fit_mle(
        &target,
        &m0,
        &exact_fit,
        &GibbsConfig::new(1, 0, 0),
        &AisConfig::linear(1, 1, 0),
    )?;
    Ok(ProjectionResult {
        projected: exact_distribution(&outcome.model),
        achieved_eta_gap: outcome.final_grad_norm,
        method: ProjectionMethod::Exact,
        model: outcome.model,
    })
}

/// Bias term: KL from the truth to its family projection.
pub fn bias(p_star: &DenseDistribution, projection: &ProjectionResult) -> Result<f64> {
    kl_divergence(p_star, &projection.projected)
}

/// Replicate-averaged variance term.
#[derive(Clone, Debug)]
pub struct VarianceEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Replicates dropped because their KL was undefined.
    pub excluded: usize,
}

/// Mean over replicates of `KL(P*_B, fitted_r)`, with the standard error
/// across replicates. Replicates whose fit has a zero where `P*_B` has mass
/// are excluded and counted.
pub fn variance_estimate(
    p_star_b: &DenseDistribution,
    fitted: &[DenseDistribution],
) -> Result<VarianceEstimate> {
    if fitted.len() < 2 {
        return Err(Error::InvalidArgument(
            "variance estimation needs at least two replicates".into(),
        ));
    }
    let mut values = Vec::with_capacity(fitted.len());
    let mut excluded = 0usize;
    for replicate in fitted {
        match kl_divergence(p_star_b, replicate) {
            Ok(v) => values.push(v),
            Err(Error::DivergenceUndefined { .. }) => excluded += 1,
            Err(other) => return Err(other),
        }
    }
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "only {} replicates usable for the variance estimate",
            values.len()
        )));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        / (values.len() - 1) as f64;
    Ok(VarianceEstimate {
        mean,
        stderr: (var / values.len() as f64).sqrt(),
        excluded,
    })
}

fn verify_in_submanifold(p: &DenseDistribution, b: &[Outcome], label: &str) -> Result<()> {
    let theta = theta_from_p(p)?;
    let keep: std::collections::HashSet<u32> = b.iter().map(|s| s.bits()).collect();
    for (index, &value) in theta.values().iter().enumerate() {
        if index == 0 || keep.contains(&(index as u32)) {
            continue;
        }
        if value.abs() > SUBMANIFOLD_TOL {
            return Err(Error::InvalidArgument(format!(
                "{label} is not in the submanifold: theta at mask {index:#b} is {value:.3e}"
            )));
        }
    }
    Ok(())
}

/// Pythagorean residual `D(P*, P_hat_B) - D(P*, P*_B) - D(P*_B, P_hat_B)`.
///
/// Both family members must actually lie in the submanifold of the index set
/// `b`, verified through their recovered theta coordinates.
pub fn pythagoras_check(
    p_star: &DenseDistribution,
    p_star_b: &DenseDistribution,
    p_hat_b: &DenseDistribution,
    b: &[Outcome],
) -> Result<f64> {
    verify_in_submanifold(p_star_b, b, "the projection")?;
    verify_in_submanifold(p_hat_b, b, "the fitted model")?;
    let total = kl_divergence(p_star, p_hat_b)?;
    let bias = kl_divergence(p_star, p_star_b)?;
    let variance = kl_divergence(p_star_b, p_hat_b)?;
    Ok(total - bias - variance)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelFamily {
    Hbm,
    Rbm,
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelFamily::Hbm => write!(f, "hbm"),
            ModelFamily::Rbm => write!(f, "rbm"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Partial,
    Failed,
}

impl std::fmt::Display for RowStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowStatus::Ok => write!(f, "ok"),
            RowStatus::Partial => write!(f, "partial"),
            RowStatus::Failed => write!(f, "failed"),
        }
    }
}

/// One aggregated grid cell: a model family at one complexity and one sample
/// size, averaged over replicates.
#[derive(Clone, Debug)]
pub struct DecompositionReport {
    pub family: ModelFamily,
    pub n: usize,
    /// Interaction order for HBM rows, hidden count for RBM rows.
    pub complexity: usize,
    pub param_count: usize,
    pub method: ProjectionMethod,
    pub sample_size: u64,
    pub replicates: usize,
    pub replicates_ok: usize,
    /// Dataset seeds, one per replicate.
    pub seeds: Vec<u64>,
    pub bias: f64,
    pub variance: f64,
    pub variance_stderr: f64,
    pub total: f64,
    pub pythagoras_residual: f64,
    pub wall_time_s: f64,
    pub status: RowStatus,
}

/// Everything decompose_hbm needs besides the truth and the order.
#[derive(Clone, Debug)]
pub struct HbmSweepConfig {
    pub sample_sizes: Vec<u64>,
    pub replicates: usize,
    pub base_seed: u64,
    pub fit: FitConfig,
    pub gibbs: GibbsConfig,
    pub ais: AisConfig,
    /// Tight exact-mode settings for the one-off truth projection.
    pub projection: FitConfig,
}

struct ReplicateOutcome {
    total: f64,
    variance_part: Option<f64>,
    failure: Option<String>,
}

/// Sweeps one HBM order over the sample-size grid: projects the truth once,
/// then fits every (N, replicate) dataset and aggregates bias, variance and
/// total error per N.
pub fn decompose_hbm(
    p_star: &DenseDistribution,
    k: usize,
    cfg: &HbmSweepConfig,
) -> Result<Vec<DecompositionReport>> {
    let n = p_star.n();
    let projection = project_true_hbm(p_star, k, &cfg.projection)?;
    let bias_nats = bias(p_star, &projection)?;
    let param_count = projection.model.parameter_count();
    let replicates = cfg.replicates;

    let mut reports = Vec::with_capacity(cfg.sample_sizes.len());
    for (n_idx, &sample_size) in cfg.sample_sizes.iter().enumerate() {
        let row_start = Instant::now();
        let seeds: Vec<u64> = (0..replicates)
            .map(|r| {
                replicate_seed(
                    cfg.base_seed,
                    "dataset",
                    (n_idx * replicates + r) as u64,
                )
            })
            .collect();
        let outcomes: Vec<ReplicateOutcome> = map_indexed(replicates, |r| {
            replicate_hbm(p_star, &projection.projected, k, cfg, seeds[r], sample_size, r)
        });

        let mut totals = Vec::new();
        let mut fitted_kls = Vec::new();
        let mut failures = 0usize;
        for outcome in &outcomes {
            if outcome.failure.is_some() {
                failures += 1;
                continue;
            }
            totals.push(outcome.total);
            if let Some(v) = outcome.variance_part {
                fitted_kls.push(v);
            }
        }

        let report = if fitted_kls.len() < 2 {
            DecompositionReport {
                family: ModelFamily::Hbm,
                n,
                complexity: k,
                param_count,
                method: mode_label(&cfg.fit),
                sample_size,
                replicates,
                replicates_ok: fitted_kls.len(),
                seeds,
                bias: bias_nats,
                variance: f64::NAN,
                variance_stderr: f64::NAN,
                total: f64::NAN,
                pythagoras_residual: f64::NAN,
                wall_time_s: row_start.elapsed().as_secs_f64(),
                status: RowStatus::Failed,
            }
        } else {
            let variance = mean_and_stderr(&fitted_kls);
            let total = mean_and_stderr(&totals);
            DecompositionReport {
                family: ModelFamily::Hbm,
                n,
                complexity: k,
                param_count,
                method: mode_label(&cfg.fit),
                sample_size,
                replicates,
                replicates_ok: fitted_kls.len(),
                seeds,
                bias: bias_nats,
                variance: variance.0,
                variance_stderr: variance.1,
                total: total.0,
                pythagoras_residual: total.0 - (bias_nats + variance.0),
                wall_time_s: row_start.elapsed().as_secs_f64(),
                status: if failures == 0 {
                    RowStatus::Ok
                } else {
                    RowStatus::Partial
                },
            }
        };
        reports.push(report);
    }
    Ok(reports)
}

fn mode_label(fit: &FitConfig) -> ProjectionMethod {
    match fit.mode {
        FitMode::Exact => ProjectionMethod::Exact,
        FitMode::Sampled => ProjectionMethod::Sampled,
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, (var / values.len() as f64).sqrt())
}

fn replicate_hbm(
    p_star: &DenseDistribution,
    p_star_b: &DenseDistribution,
    k: usize,
    cfg: &HbmSweepConfig,
    dataset_seed: u64,
    sample_size: u64,
    replicate: usize,
) -> ReplicateOutcome {
    let run = || -> Result<(f64, f64)> {
        let dataset = draw_dataset(p_star, sample_size, dataset_seed)?;
        let target = eta_from_p(&dataset.empirical_distribution());
        let m0 = HbmModel::new(p_star.n(), k)?;
        let gibbs = GibbsConfig {
            seed: replicate_seed(cfg.base_seed, "fit-chain", replicate as u64),
            ..cfg.gibbs.clone()
        };
        let ais = AisConfig {
            seed: replicate_seed(cfg.base_seed, "fit-ais", replicate as u64),
            ..cfg.ais.clone()
        };
        let outcome = fit_mle(&target, &m0, &cfg.fit, &gibbs, &ais)?;
        let fitted = exact_distribution(&outcome.model);
        Ok((
            kl_divergence(p_star, &fitted)?,
            kl_divergence(p_star_b, &fitted)?,
        ))
    };
    match run() {
        Ok((total, variance_part)) => ReplicateOutcome {
            total,
            variance_part: Some(variance_part),
            failure: None,
        },
        Err(err) => ReplicateOutcome {
            total: f64::NAN,
            variance_part: None,
            failure: Some(err.to_string()),
        },
    }
}

/// Everything decompose_rbm needs besides the truth and the hidden grid.
#[derive(Clone, Debug)]
pub struct RbmSweepConfig {
    pub sample_sizes: Vec<u64>,
    pub replicates: usize,
    pub base_seed: u64,
    pub cd: CdConfig,
    /// Dataset size of the large-sample stand-in for the MLE projection.
    pub mle_sample_size: u64,
    /// Total CD updates targeted per training run; epochs are derived from
    /// the dataset and batch sizes.
    pub target_updates: usize,
}

/// Quality diagnostics of the large-sample projection proxies.
#[derive(Clone, Debug)]
pub struct RbmProxyDiagnostics {
    /// Per hidden count: KL between two independently trained large-sample
    /// fits. Noise floor below which RBM bias values are not meaningful.
    pub proxy_floor_kl: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct RbmDecomposition {
    pub reports: Vec<DecompositionReport>,
    pub diagnostics: RbmProxyDiagnostics,
}

fn epochs_for(total: u64, batch_size: usize, target_updates: usize) -> usize {
    let batches_per_epoch = (total as usize).div_ceil(batch_size).max(1);
    (target_updates.div_ceil(batches_per_epoch)).max(1)
}

fn train_marginal(
    p_star: &DenseDistribution,
    m: usize,
    cd: &CdConfig,
    sample_size: u64,
    target_updates: usize,
    dataset_seed: u64,
    train_seed: u64,
) -> Result<DenseDistribution> {
    let dataset = draw_dataset(p_star, sample_size, dataset_seed)?;
    let cfg = CdConfig {
        epochs: epochs_for(dataset.total(), cd.batch_size, target_updates),
        seed: train_seed,
        ..cd.clone()
    };
    let m0 = RbmModel::init_random(p_star.n(), m, replicate_seed(train_seed, "rbm-init", 0))?;
    let (model, _) = train_cd_traced(&m0, &dataset, &cfg, 0)?;
    visible_marginal(&model)
}

/// Sweeps the RBM hidden-count grid. The projection stand-in per hidden count
/// is a CD fit on an `mle_sample_size` dataset; two independent stand-ins are
/// trained and their mutual KL reported as the proxy noise floor.
pub fn decompose_rbm(
    p_star: &DenseDistribution,
    hidden_counts: &[usize],
    cfg: &RbmSweepConfig,
) -> Result<RbmDecomposition> {
    let n = p_star.n();
    let mut reports = Vec::new();
    let mut proxy_floor_kl = Vec::new();

    for (m_idx, &m) in hidden_counts.iter().enumerate() {
        let proxy = train_marginal(
            p_star,
            m,
            &cfg.cd,
            cfg.mle_sample_size,
            cfg.target_updates,
            replicate_seed(cfg.base_seed, "rbm-mle-data", m_idx as u64),
            replicate_seed(cfg.base_seed, "rbm-mle-train", m_idx as u64),
        )?;
        let proxy_check = train_marginal(
            p_star,
            m,
            &cfg.cd,
            cfg.mle_sample_size,
            cfg.target_updates,
            replicate_seed(cfg.base_seed, "rbm-mle-data2", m_idx as u64),
            replicate_seed(cfg.base_seed, "rbm-mle-train2", m_idx as u64),
        )?;
        proxy_floor_kl.push((m, kl_divergence(&proxy, &proxy_check)?));

        let bias_nats = kl_divergence(p_star, &proxy)?;
        let param_count = RbmModel::new(n, m)?.parameter_count();

        for (n_idx, &sample_size) in cfg.sample_sizes.iter().enumerate() {
            let row_start = Instant::now();
            let replicates = cfg.replicates;
            // Same dataset streams as the HBM sweep, shared on purpose.
            let seeds: Vec<u64> = (0..replicates)
                .map(|r| {
                    replicate_seed(
                        cfg.base_seed,
                        "dataset",
                        (n_idx * replicates + r) as u64,
                    )
                })
                .collect();
            let outcomes: Vec<ReplicateOutcome> = map_indexed(replicates, |r| {
                let train_seed = replicate_seed(
                    cfg.base_seed,
                    "cd-fit",
                    ((m_idx * cfg.sample_sizes.len() + n_idx) * replicates + r) as u64,
                );
                match train_marginal(
                    p_star,
                    m,
                    &cfg.cd,
                    sample_size,
                    cfg.target_updates,
                    seeds[r],
                    train_seed,
                ) {
                    Ok(marginal) => {
                        let total = kl_divergence(p_star, &marginal);
                        let var = kl_divergence(&proxy, &marginal);
                        match (total, var) {
                            (Ok(t), Ok(v)) => ReplicateOutcome {
                                total: t,
                                variance_part: Some(v),
                                failure: None,
                            },
                            (t, v) => ReplicateOutcome {
                                total: f64::NAN,
                                variance_part: None,
                                failure: Some(format!("{:?} / {:?}", t.err(), v.err())),
                            },
                        }
                    }
                    Err(err) => ReplicateOutcome {
                        total: f64::NAN,
                        variance_part: None,
                        failure: Some(err.to_string()),
                    },
                }
            });

            let totals: Vec<f64> = outcomes
                .iter()
                .filter(|o| o.failure.is_none())
                .map(|o| o.total)
                .collect();
            let vars: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| o.variance_part)
                .collect();
            let failures = outcomes.iter().filter(|o| o.failure.is_some()).count();

            let report = if vars.len() < 2 {
                DecompositionReport {
                    family: ModelFamily::Rbm,
                    n,
                    complexity: m,
                    param_count,
                    method: ProjectionMethod::LargeSample,
                    sample_size,
                    replicates,
                    replicates_ok: vars.len(),
                    seeds,
                    bias: bias_nats,
                    variance: f64::NAN,
                    variance_stderr: f64::NAN,
                    total: f64::NAN,
                    pythagoras_residual: f64::NAN,
                    wall_time_s: row_start.elapsed().as_secs_f64(),
                    status: RowStatus::Failed,
                }
            } else {
                let variance = mean_and_stderr(&vars);
                let total = mean_and_stderr(&totals);
                DecompositionReport {
                    family: ModelFamily::Rbm,
                    n,
                    complexity: m,
                    param_count,
                    method: ProjectionMethod::LargeSample,
                    sample_size,
                    replicates,
                    replicates_ok: vars.len(),
                    seeds,
                    bias: bias_nats,
                    variance: variance.0,
                    variance_stderr: variance.1,
                    total: total.0,
                    pythagoras_residual: total.0 - (bias_nats + variance.0),
                    wall_time_s: row_start.elapsed().as_secs_f64(),
                    status: if failures == 0 {
                        RowStatus::Ok
                    } else {
                        RowStatus::Partial
                    },
                }
            };
            reports.push(report);
        }
    }
    Ok(RbmDecomposition {
        reports,
        diagnostics: RbmProxyDiagnostics { proxy_floor_kl },
    })
}

/// Index set helper for submanifold checks on k-th order families.
pub fn hbm_index_set(n: usize, k: usize) -> Result<Vec<Outcome>> {
    model_index_set(n, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::generate_true_distribution;

    fn projection_cfg() -> FitConfig {
        FitConfig::exact(0.3, 200_000, 1e-10)
    }

    fn sweep_cfg(base_seed: u64) -> HbmSweepConfig {
        HbmSweepConfig {
            sample_sizes: vec![20, 200],
            replicates: 4,
            base_seed,
            fit: FitConfig::exact(0.3, 20_000, 1e-8),
            gibbs: GibbsConfig::new(100, 10, 0),
            ais: AisConfig::linear(10, 5, 0),
            projection: projection_cfg(),
        }
    }

    #[test]
    fn saturated_projection_is_the_truth() {
        let truth = generate_true_distribution(3, 5).unwrap().distribution;
        let proj = project_true_hbm(&truth, 3, &projection_cfg()).unwrap();
        assert!(bias(&truth, &proj).unwrap() < 1e-10);
        for (a, b) in proj.projected.probs().iter().zip(truth.probs()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn product_truth_has_zero_first_order_bias() {
        let marginals = [0.2, 0.7];
        let probs: Vec<f64> = (0..4u32)
            .map(|bits| {
                marginals
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| if bits & (1 << i) != 0 { m } else { 1.0 - m })
                    .product()
            })
            .collect();
        let truth = DenseDistribution::new(probs).unwrap();
        let proj = project_true_hbm(&truth, 1, &projection_cfg()).unwrap();
        assert!(bias(&truth, &proj).unwrap() < 1e-10);
    }

    #[test]
    fn correlated_truth_projects_to_product_of_marginals_at_first_order() {
        let truth = generate_true_distribution(3, 9).unwrap().distribution;
        let proj = project_true_hbm(&truth, 1, &projection_cfg()).unwrap();

        let marginals: Vec<f64> = (0..3)
            .map(|i| {
                truth
                    .probs()
                    .iter()
                    .enumerate()
                    .filter(|(bits, _)| bits & (1 << i) != 0)
                    .map(|(_, &p)| p)
                    .sum()
            })
            .collect();
        let product: Vec<f64> = (0..8u32)
            .map(|bits| {
                marginals
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| if bits & (1 << i) != 0 { m } else { 1.0 - m })
                    .product()
            })
            .collect();
        let product = DenseDistribution::new(product).unwrap();
        let oracle_bias = kl_divergence(&truth, &product).unwrap();
        let got = bias(&truth, &proj).unwrap();
        assert!((got - oracle_bias).abs() < 1e-8, "{got} vs {oracle_bias}");
    }

    #[test]
    fn bias_is_monotone_in_model_order() {
        let truth = generate_true_distribution(4, 11).unwrap().distribution;
        let mut previous = f64::INFINITY;
        for k in 1..=4 {
            let proj = project_true_hbm(&truth, k, &projection_cfg()).unwrap();
            let b = bias(&truth, &proj).unwrap();
            assert!(b <= previous + 1e-9, "k={k}: {b} > {previous}");
            previous = b;
        }
        assert!(previous < 1e-8);
    }

    #[test]
    fn variance_estimate_examples() {
        let truth = generate_true_distribution(2, 13).unwrap().distribution;
        let est = variance_estimate(&truth, &[truth.clone(), truth.clone()]).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.excluded, 0);

        // Two replicates displaced symmetrically in eta on B = {{1}}.
        let eta = eta_from_p(&truth);
        let mut up = eta.values().to_vec();
        let mut down = eta.values().to_vec();
        up[1] += 0.05;
        down[1] -= 0.05;
        let up = crate::distribution::p_from_eta(
            &crate::distribution::EtaCoordinates::new(up).unwrap(),
        )
        .unwrap();
        let down = crate::distribution::p_from_eta(
            &crate::distribution::EtaCoordinates::new(down).unwrap(),
        )
        .unwrap();
        let kl_up = kl_divergence(&truth, &up).unwrap();
        let kl_down = kl_divergence(&truth, &down).unwrap();
        let est = variance_estimate(&truth, &[up, down]).unwrap();
        assert!(kl_up > 0.0 && kl_down > 0.0);
        assert!((est.mean - 0.5 * (kl_up + kl_down)).abs() < 1e-15);

        assert!(variance_estimate(&truth, &[truth.clone()]).is_err());
    }

    #[test]
    fn variance_excludes_support_violations() {
        let p = DenseDistribution::new(vec![0.5, 0.5]).unwrap();
        let degenerate = DenseDistribution::new(vec![1.0, 0.0]).unwrap();
        let est = variance_estimate(&p, &[p.clone(), p.clone(), degenerate]).unwrap();
        assert_eq!(est.excluded, 1);
    }

    #[test]
    fn pythagoras_residual_is_zero_at_the_projection() {
        let truth = generate_true_distribution(3, 17).unwrap().distribution;
        let proj = project_true_hbm(&truth, 2, &projection_cfg()).unwrap();
        let b = hbm_index_set(3, 2).unwrap();
        let residual =
            pythagoras_check(&truth, &proj.projected, &proj.projected, &b).unwrap();
        assert!(residual.abs() < 1e-12);
    }

    #[test]
    fn pythagoras_residual_small_for_exact_fits() {
        let truth = generate_true_distribution(3, 19).unwrap().distribution;
        let dataset = draw_dataset(&truth, 100, 20).unwrap();
        let proj = project_true_hbm(&truth, 2, &projection_cfg()).unwrap();
        let target = eta_from_p(&dataset.empirical_distribution());
        let fitted = fit_mle(
            &target,
            &HbmModel::new(3, 2).unwrap(),
            &FitConfig::exact(0.3, 100_000, 1e-9),
            &GibbsConfig::new(1, 0, 0),
            &AisConfig::linear(1, 1, 0),
        )
        .unwrap();
        let p_hat = exact_distribution(&fitted.model);
        let b = hbm_index_set(3, 2).unwrap();
        let residual = pythagoras_check(&truth, &proj.projected, &p_hat, &b).unwrap();
        assert!(residual.abs() < 1e-6, "residual {residual}");
    }

    #[test]
    fn pythagoras_two_variable_product_case() {
        // Product distributions on two bits: first-order family contains all
        // of them, KLs have closed forms, residual vanishes.
        let make = |p1: f64, p2: f64| {
            DenseDistribution::new(vec![
                (1.0 - p1) * (1.0 - p2),
                p1 * (1.0 - p2),
                (1.0 - p1) * p2,
                p1 * p2,
            ])
            .unwrap()
        };
        let p_star = make(0.3, 0.6);
        let p_star_b = make(0.3, 0.6);
        let p_hat_b = make(0.4, 0.5);
        let b = hbm_index_set(2, 1).unwrap();
        let residual = pythagoras_check(&p_star, &p_star_b, &p_hat_b, &b).unwrap();
        assert!(residual.abs() < 1e-9, "residual {residual}");
    }

    #[test]
    fn pythagoras_rejects_non_members() {
        let truth = generate_true_distribution(3, 23).unwrap().distribution;
        let proj = project_true_hbm(&truth, 1, &projection_cfg()).unwrap();
        let b = hbm_index_set(3, 1).unwrap();
        // The raw truth is correlated, so it is not in the first-order family.
        let err = pythagoras_check(&truth, &proj.projected, &truth, &b).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn hbm_sweep_shapes_and_residuals() {
        let truth = generate_true_distribution(4, 29).unwrap().distribution;
        let cfg = sweep_cfg(101);
        let reports = decompose_hbm(&truth, 2, &cfg).unwrap();
        assert_eq!(reports.len(), cfg.sample_sizes.len());
        for row in &reports {
            assert_eq!(row.replicates, 4);
            assert_eq!(row.replicates_ok, 4);
            assert_eq!(row.param_count, 10);
            assert_eq!(row.status, RowStatus::Ok);
            assert!(row.bias >= -1e-9);
            assert!(row.variance >= -1e-9);
            assert!(
                row.pythagoras_residual.abs() < 1e-6,
                "residual {}",
                row.pythagoras_residual
            );
            assert_eq!(row.seeds.len(), 4);
        }
    }

    #[test]
    fn saturated_sweep_has_zero_bias() {
        let truth = generate_true_distribution(3, 31).unwrap().distribution;
        let mut cfg = sweep_cfg(103);
        cfg.sample_sizes = vec![50];
        let reports = decompose_hbm(&truth, 3, &cfg).unwrap();
        assert!(reports[0].bias < 1e-8);
        assert!((reports[0].total - reports[0].variance).abs() < 1e-6);
    }

    #[test]
    fn hbm_sweep_is_deterministic() {
        let truth = generate_true_distribution(3, 37).unwrap().distribution;
        let cfg = sweep_cfg(107);
        let a = decompose_hbm(&truth, 2, &cfg).unwrap();
        let b = decompose_hbm(&truth, 2, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.bias, y.bias);
            assert_eq!(x.variance, y.variance);
            assert_eq!(x.total, y.total);
            assert_eq!(x.seeds, y.seeds);
        }
    }

    #[test]
    fn rbm_sweep_shapes() {
        let truth = generate_true_distribution(3, 41).unwrap().distribution;
        let cfg = RbmSweepConfig {
            sample_sizes: vec![30, 300],
            replicates: 3,
            base_seed: 109,
            cd: CdConfig {
                learning_rate: 0.1,
                cd_steps: 1,
                epochs: 1, // recomputed per run
                batch_size: 16,
                seed: 0,
            },
            mle_sample_size: 20_000,
            target_updates: 600,
        };
        let result = decompose_rbm(&truth, &[0, 2], &cfg).unwrap();
        assert_eq!(result.reports.len(), 4);
        assert_eq!(result.diagnostics.proxy_floor_kl.len(), 2);
        for row in &result.reports {
            assert_eq!(row.method, ProjectionMethod::LargeSample);
            assert!(row.bias >= -1e-9);
            assert!(row.variance >= -1e-9);
            assert_eq!(row.status, RowStatus::Ok);
        }
        // m = 0 bias equals KL to the large-sample product fit, which in turn
        // sits near the product of the truth's marginals.
        let bias_m0 = result.reports[0].bias;
        let marginals: Vec<f64> = (0..3)
            .map(|i| {
                truth
                    .probs()
                    .iter()
                    .enumerate()
                    .filter(|(bits, _)| bits & (1 << i) != 0)
                    .map(|(_, &p)| p)
                    .sum()
            })
            .collect();
        let product: Vec<f64> = (0..8u32)
            .map(|bits| {
                marginals
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| if bits & (1 << i) != 0 { m } else { 1.0 - m })
                    .product()
            })
            .collect();
        let product = DenseDistribution::new(product).unwrap();
        let oracle = kl_divergence(&truth, &product).unwrap();
        assert!((bias_m0 - oracle).abs() < 0.05, "{bias_m0} vs {oracle}");
    }

    #[test]
    fn epochs_scale_with_dataset_size() {
        assert_eq!(epochs_for(100, 32, 1000), 250);
        assert_eq!(epochs_for(100_000, 32, 1000), 1);
        assert!(epochs_for(1, 32, 1) >= 1);
    }
}
