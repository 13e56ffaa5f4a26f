//! Maximum-likelihood fitting by plain gradient ascent on the natural
//! parameters.
//!
//! The KL gradient with respect to `theta(x)` for `x` in the index set is
//! `eta_hat(x) - eta_B(x)`, so each iteration moves every parameter toward
//! matching the target expectation parameters on `B`. Exact mode evaluates
//! `eta_B` through the lattice transforms and renormalizes `theta(bottom)`
//! from the exact partition function every step; sampled mode estimates
//! `eta_B` from a fresh Gibbs chain per iteration and only invokes AIS once,
//! to normalize the final model.

use super::{ais_log_z, estimate_eta, exact_log_z, gibbs_sample, AisConfig, GibbsConfig, HbmModel};
use crate::distribution::{eta_from_p, DenseDistribution, EtaCoordinates};
use crate::error::{Error, Result};
use crate::lattice::{fast_zeta_transform, Direction};
use crate::synthdata::replicate_seed;
use crate::util::log_sum_exp;

/// How `eta_B` is evaluated during fitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMode {
    /// Lattice transforms, exact normalization every iteration.
    Exact,
    /// Gibbs-sampled `eta_B`, AIS normalization at the end.
    Sampled,
}

impl std::fmt::Display for FitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitMode::Exact => write!(f, "exact"),
            FitMode::Sampled => write!(f, "sampled"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop once `max over B of |eta_hat - eta_B|` falls below this; 0
    /// disables early stopping.
    pub eta_tolerance: f64,
    pub mode: FitMode,
}

impl FitConfig {
    pub fn exact(learning_rate: f64, max_iterations: usize, eta_tolerance: f64) -> Self {
        Self {
            learning_rate,
            max_iterations,
            eta_tolerance,
            mode: FitMode::Exact,
        }
    }

    pub fn sampled(learning_rate: f64, max_iterations: usize) -> Self {
        Self {
            learning_rate,
            max_iterations,
            eta_tolerance: 0.0,
            mode: FitMode::Sampled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "need at least one fit iteration".into(),
            ));
        }
        Ok(())
    }
}

/// One recorded fit iteration. `log_likelihood` is the normalized per-sample
/// value `<theta_B, eta_hat_B> + theta(bottom)`, available in exact mode.
#[derive(Clone, Copy, Debug)]
pub struct FitTracePoint {
    pub iteration: usize,
    pub grad_norm: f64,
    pub log_likelihood: Option<f64>,
}

/// A fitted model plus convergence diagnostics.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: HbmModel,
    pub iterations: usize,
    /// `max over B of |eta_hat - eta_B|` at the returned parameters.
    pub final_grad_norm: f64,
    /// Whether the eta tolerance was reached before the iteration budget.
    pub converged: bool,
    pub trace: Vec<FitTracePoint>,
}

/// Gradient of the divergence-threshold check: the fit aborts if the gradient
/// norm grows by this factor over its initial value.
const DIVERGENCE_FACTOR: f64 = 100.0;

struct ExactEval {
    log_z: f64,
    eta_b: Vec<f64>,
}

/// eta_B restricted to the index set, plus log Z, via dense transforms.
fn exact_eval(dense_theta: &mut [f64], scratch: &mut [f64], model: &HbmModel) -> ExactEval {
    scratch.copy_from_slice(dense_theta);
    fast_zeta_transform(scratch, Direction::Down).expect("valid length");
    let log_z = log_sum_exp(scratch);
    for v in scratch.iter_mut() {
        *v = (*v - log_z).exp();
    }
    fast_zeta_transform(scratch, Direction::Up).expect("valid length");
    let eta_b = model.index_set().iter().map(|s| scratch[s.index()]).collect();
    ExactEval { log_z, eta_b }
}

/// Fits `m0`'s parameter set to the target expectation parameters.
///
/// The target needs to be defined on the full lattice; only its values on the
/// index set are consumed, so empirical targets with zero counts are fine.
/// Errors with [`Error::FitDiverged`] if the gradient norm grows more than
/// 100x over its initial value.
pub fn fit_mle(
    target: &EtaCoordinates,
    m0: &HbmModel,
    fit: &FitConfig,
    gibbs: &GibbsConfig,
    ais: &AisConfig,
) -> Result<FitOutcome> {
    fit.validate()?;
    if target.n() != m0.n() {
        return Err(Error::VarCountMismatch {
            left: target.n(),
            right: m0.n(),
        });
    }
    let mut target_b: Vec<f64> = m0.index_set().iter().map(|s| target.value(*s)).collect();
    for v in &mut target_b {
        if !v.is_finite() || *v < -1e-9 || *v > 1.0 + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "target eta value {v} outside [0, 1]"
            )));
        }
        *v = v.clamp(0.0, 1.0);
    }

    let mut model = m0.clone();
    let size = 1usize << model.n();
    let mut dense = model.dense_theta();
    let mut scratch = vec![0.0f64; size];
    let mut trace = Vec::new();
    let mut initial_norm: Option<f64> = None;
    let mut iterations = 0usize;
    let mut converged = false;

    for iter in 0..fit.max_iterations {
        // Evaluate eta_B and the gradient at the current parameters.
        let (eta_b, log_z) = match fit.mode {
            FitMode::Exact => {
                let eval = exact_eval(&mut dense, &mut scratch, &model);
                (eval.eta_b, Some(eval.log_z))
            }
            FitMode::Sampled => {
                let chain_cfg = GibbsConfig {
                    seed: replicate_seed(gibbs.seed, "fit-gibbs", iter as u64),
                    ..gibbs.clone()
                };
                let samples = gibbs_sample(&model, &chain_cfg)?;
                let eta_hat = estimate_eta(&samples, model.n())?;
                let eta_b = model
                    .index_set()
                    .iter()
                    .map(|s| eta_hat.value(*s))
                    .collect();
                (eta_b, None)
            }
        };

        let mut grad_norm = 0.0f64;
        for (pos, &eta) in eta_b.iter().enumerate() {
            grad_norm = grad_norm.max((target_b[pos] - eta).abs());
        }
        let log_likelihood = log_z.map(|z| {
            let dot: f64 = model
                .theta()
                .iter()
                .zip(&target_b)
                .map(|(&t, &e)| t * e)
                .sum();
            dot - z
        });
        trace.push(FitTracePoint {
            iteration: iter,
            grad_norm,
            log_likelihood,
        });

        if let Some(z) = log_z {
            model.set_theta_bottom(-z, true);
        }

        let initial = *initial_norm.get_or_insert(grad_norm);
        if grad_norm > DIVERGENCE_FACTOR * initial && grad_norm > 1e-12 {
            return Err(Error::FitDiverged {
                iterations: iter,
                grad_norm,
                initial_grad_norm: initial,
                grad_trace: trace.iter().map(|t| t.grad_norm).collect(),
            });
        }
        if fit.eta_tolerance > 0.0 && grad_norm < fit.eta_tolerance {
            converged = true;
            iterations = iter;
            break;
        }

        // Ascent step on the index set.
        {
            let step = fit.learning_rate;
            let theta = model.theta_mut();
            for (pos, &eta) in eta_b.iter().enumerate() {
                theta[pos] += step * (target_b[pos] - eta);
            }
        }
        for (pos, s) in m0.index_set().iter().enumerate() {
            dense[s.index()] = model.theta()[pos];
        }
        iterations = iter + 1;
    }

    // Final diagnostics and normalization at the returned parameters.
    let final_grad_norm;
    match fit.mode {
        FitMode::Exact => {
            let eval = exact_eval(&mut dense, &mut scratch, &model);
            final_grad_norm = eval
                .eta_b
                .iter()
                .enumerate()
                .map(|(pos, &eta)| (target_b[pos] - eta).abs())
                .fold(0.0, f64::max);
            model.set_theta_bottom(-eval.log_z, true);
        }
        FitMode::Sampled => {
            final_grad_norm = trace.last().map(|t| t.grad_norm).unwrap_or(f64::NAN);
            let estimate = ais_log_z(&model, ais)?;
            model.set_theta_bottom(-estimate.log_z_estimate, false);
        }
    }

    Ok(FitOutcome {
        model,
        iterations,
        final_grad_norm,
        converged,
        trace,
    })
}

/// Convenience: the fitted distribution of an exact-mode fit against an
/// explicit target distribution.
pub fn fit_distribution_exact(
    target: &DenseDistribution,
    n: usize,
    k: usize,
    fit: &FitConfig,
) -> Result<FitOutcome> {
    let target_eta = eta_from_p(target);
    let m0 = HbmModel::new(n, k)?;
    let gibbs = GibbsConfig::new(1, 0, 0);
    let ais = AisConfig::linear(1, 1, 0);
    fit_mle(&target_eta, &m0, fit, &gibbs, &ais)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{kl_divergence, theta_from_p};
    use crate::hbm::tests::{out, random_model};
    use crate::hbm::{exact_distribution, exact_eta, unnormalized_log_prob};
    use crate::synthdata::{draw_dataset, generate_true_distribution};

    fn exact_cfg() -> FitConfig {
        FitConfig::exact(0.5, 200_000, 1e-10)
    }

    #[test]
    fn saturated_fit_matches_the_data_exactly() {
        let truth = generate_true_distribution(4, 3).unwrap().distribution;
        let fitted = fit_distribution_exact(&truth, 4, 4, &exact_cfg()).unwrap();
        assert!(fitted.converged);
        let kl = kl_divergence(&truth, &exact_distribution(&fitted.model)).unwrap();
        assert!(kl < 1e-8, "kl {kl}");
    }

    #[test]
    fn first_order_fit_recovers_a_product_distribution() {
        // Independent bits with P(x_i = 1) = m_i.
        let marginals = [0.3, 0.6, 0.8];
        let probs: Vec<f64> = (0..8u32)
            .map(|bits| {
                marginals
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| if bits & (1 << i) != 0 { m } else { 1.0 - m })
                    .product()
            })
            .collect();
        let truth = DenseDistribution::new(probs).unwrap();
        let fitted = fit_distribution_exact(&truth, 3, 1, &exact_cfg()).unwrap();
        let kl = kl_divergence(&truth, &exact_distribution(&fitted.model)).unwrap();
        assert!(kl < 1e-8, "kl {kl}");
    }

    #[test]
    fn exact_fit_matches_target_eta_on_the_index_set() {
        let truth = generate_true_distribution(4, 11).unwrap().distribution;
        let target = eta_from_p(&truth);
        let cfg = FitConfig::exact(0.1, 500_000, 1e-7);
        let m0 = HbmModel::new(4, 2).unwrap();
        let fitted = fit_mle(
            &target,
            &m0,
            &cfg,
            &GibbsConfig::new(1, 0, 0),
            &AisConfig::linear(1, 1, 0),
        )
        .unwrap();
        let eta = exact_eta(&fitted.model);
        for s in fitted.model.index_set() {
            assert!((eta.value(*s) - target.value(*s)).abs() < 1e-6);
        }
        // Parameters off B stay exactly zero: recover theta of the fitted
        // distribution and look above order k.
        let theta = theta_from_p(&exact_distribution(&fitted.model)).unwrap();
        for bits in 0..16u32 {
            let x = out(bits, 4);
            if x.order() > 2 {
                assert!(theta.value(x).abs() < 1e-6, "theta({bits:#b}) leaked");
            }
        }
    }

    #[test]
    fn log_likelihood_trace_is_monotone_in_exact_mode() {
        let truth = generate_true_distribution(4, 17).unwrap().distribution;
        let data = draw_dataset(&truth, 500, 18).unwrap();
        let target = eta_from_p(&data.empirical_distribution());
        let cfg = FitConfig::exact(0.1, 300, 0.0);
        let fitted = fit_mle(
            &target,
            &HbmModel::new(4, 2).unwrap(),
            &cfg,
            &GibbsConfig::new(1, 0, 0),
            &AisConfig::linear(1, 1, 0),
        )
        .unwrap();
        let lls: Vec<f64> = fitted
            .trace
            .iter()
            .map(|t| t.log_likelihood.unwrap())
            .collect();
        for w in lls.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "log-likelihood decreased: {w:?}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // d/dtheta(x) of (log-likelihood / N), with theta(bottom)
        // renormalized at every evaluation, equals eta_hat(x) - eta_B(x).
        let truth = generate_true_distribution(4, 23).unwrap().distribution;
        let data = draw_dataset(&truth, 200, 24).unwrap();
        let target = eta_from_p(&data.empirical_distribution());
        let model = random_model(4, 2, 0.8, 25);
        let eta_b = exact_eta(&model);

        let step = 1e-5;
        for (pos, s) in model.index_set().iter().enumerate() {
            let expect = target.value(*s) - eta_b.value(*s);
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.theta_mut()[pos] += delta;
                let log_z = crate::hbm::exact_log_z(&m);
                data.counts()
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(i, &c)| {
                        let x = out(i as u32, 4);
                        c as f64 / data.total() as f64
                            * (unnormalized_log_prob(&m, x).unwrap() - log_z)
                    })
                    .sum::<f64>()
            };
            let fd = (eval(step) - eval(-step)) / (2.0 * step);
            assert!(
                (fd - expect).abs() < 1e-4,
                "pos {pos}: fd {fd}, gradient {expect}"
            );
        }
    }

    #[test]
    fn likelihood_is_monotone_in_model_order() {
        let truth = generate_true_distribution(4, 31).unwrap().distribution;
        let data = draw_dataset(&truth, 1000, 32).unwrap();
        let target = eta_from_p(&data.empirical_distribution());
        let mut previous = f64::NEG_INFINITY;
        for k in 1..=4 {
            let fitted = fit_mle(
                &target,
                &HbmModel::new(4, k).unwrap(),
                &FitConfig::exact(0.5, 100_000, 1e-10),
                &GibbsConfig::new(1, 0, 0),
                &AisConfig::linear(1, 1, 0),
            )
            .unwrap();
            let ll = crate::hbm::log_likelihood(
                &fitted.model,
                &data,
                crate::hbm::exact_log_z(&fitted.model),
            )
            .unwrap();
            assert!(ll >= previous - 1e-6, "k={k}: {ll} < {previous}");
            previous = ll;
        }
    }

    #[test]
    fn divergent_learning_rate_is_reported() {
        // Start next to an optimum so the initial gradient is tiny, then let
        // an absurd learning rate blow it up past the 100x detector.
        let model = random_model(3, 3, 0.5, 41);
        let mut target_model = model.clone();
        target_model.theta_mut()[0] += 1e-4;
        let target = exact_eta(&target_model);
        let cfg = FitConfig::exact(5_000.0, 1_000, 0.0);
        let err = fit_mle(
            &target,
            &model,
            &cfg,
            &GibbsConfig::new(1, 0, 0),
            &AisConfig::linear(1, 1, 0),
        )
        .unwrap_err();
        match err {
            Error::FitDiverged {
                grad_norm,
                initial_grad_norm,
                ..
            } => assert!(grad_norm > 100.0 * initial_grad_norm),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn sampled_mode_approaches_the_target() {
        let truth = generate_true_distribution(3, 51).unwrap().distribution;
        let target = eta_from_p(&truth);
        let fit = FitConfig::sampled(0.2, 150);
        let gibbs = GibbsConfig::new(2000, 100, 53);
        let ais = AisConfig::linear(300, 50, 54);
        let fitted = fit_mle(&target, &HbmModel::new(3, 2).unwrap(), &fit, &gibbs, &ais).unwrap();
        assert!(!fitted.model.normalized());
        // Sampled gradients are noisy; just require a rough eta match and a
        // sane AIS normalization.
        let eta = exact_eta(&fitted.model);
        for s in fitted.model.index_set() {
            assert!((eta.value(*s) - target.value(*s)).abs() < 0.1);
        }
        let exact = crate::hbm::exact_log_z(&fitted.model);
        assert!((fitted.model.theta_bottom() + exact).abs() < 0.2);
    }
}
