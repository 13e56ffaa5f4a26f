//! k-th order Boltzmann machine in the log-linear parameterization.
//!
//! The model places a natural parameter `theta(s)` on every non-empty outcome
//! `s` with `|s| <= k` (the index set `B`) and zero on everything else, so
//!
//! ```text
//! log p(x) = sum over s in B with s <= x of theta(s) + theta(bottom)
//! ```
//!
//! with `theta(bottom) = -log Z` when the model is normalized. Exact inference
//! (partition function, expectation parameters) runs in O(n 2^n) through the
//! fast lattice transforms; [`gibbs`] and [`ais`] provide the sampling path
//! for the same quantities, and [`fit`] the maximum-likelihood gradient loop.

mod ais;
mod fit;
mod gibbs;

pub use ais::{ais_log_z, AisConfig, AisResult};
pub use fit::{fit_mle, FitConfig, FitMode, FitOutcome, FitTracePoint};
pub use gibbs::{estimate_eta, gibbs_conditional, gibbs_sample, GibbsConfig};

use crate::distribution::{DenseDistribution, EmpiricalDataset, EtaCoordinates};
use crate::error::{Error, Result};
use crate::lattice::{fast_zeta_transform, model_index_set, Direction, Lattice, Outcome};
use crate::util::log_sum_exp;

/// Normalization slack allowed on a model whose `normalized` flag is set.
pub const NORMALIZED_TOL: f64 = 1e-6;

/// A k-th order Boltzmann machine on `n` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct HbmModel {
    n: u8,
    k: u8,
    index_set: Vec<Outcome>,
    theta: Vec<f64>,
    theta_bottom: f64,
    normalized: bool,
}

impl HbmModel {
    /// The uniform model: every interaction parameter zero,
    /// `theta(bottom) = -n log 2`. Exactly normalized.
    pub fn new(n: usize, k: usize) -> Result<Self> {
        let index_set = model_index_set(n, k)?;
        let len = index_set.len();
        Ok(Self {
            n: n as u8,
            k: k as u8,
            index_set,
            theta: vec![0.0; len],
            theta_bottom: -(n as f64) * std::f64::consts::LN_2,
            normalized: true,
        })
    }

    /// Builds a model from explicit parameter values in canonical index-set
    /// order. When `normalized` is claimed it is verified within
    /// [`NORMALIZED_TOL`].
    pub fn from_theta(
        n: usize,
        k: usize,
        theta: Vec<f64>,
        theta_bottom: f64,
        normalized: bool,
    ) -> Result<Self> {
        let index_set = model_index_set(n, k)?;
        if theta.len() != index_set.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} theta values for n={n} k={k}, got {}",
                index_set.len(),
                theta.len()
            )));
        }
        if let Some(bad) = theta.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericRange(format!("non-finite theta value {bad}")));
        }
        if !theta_bottom.is_finite() {
            return Err(Error::NumericRange(format!(
                "non-finite theta bottom {theta_bottom}"
            )));
        }
        let model = Self {
            n: n as u8,
            k: k as u8,
            index_set,
            theta,
            theta_bottom,
            normalized,
        };
        if normalized {
            let gap = (model.theta_bottom + exact_log_z(&model)).abs();
            if gap > NORMALIZED_TOL {
                return Err(Error::NotNormalized {
                    sum: gap.exp(),
                    tol: NORMALIZED_TOL,
                });
            }
        }
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    /// The parameter index set `B` in canonical order.
    pub fn index_set(&self) -> &[Outcome] {
        &self.index_set
    }

    /// Parameter values, parallel to [`Self::index_set`].
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_bottom(&self) -> f64 {
        self.theta_bottom
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// Number of free interaction parameters, `C(n,1) + ... + C(n,k)`.
    pub fn parameter_count(&self) -> usize {
        self.index_set.len()
    }

    /// The parameter on `x`, or `None` when `x` is outside `B` (where theta is
    /// implicitly zero) or on a different variable count.
    pub fn theta_of(&self, x: Outcome) -> Option<f64> {
        if x.n() != self.n() || x.is_bottom() || x.order() as usize > self.k() {
            return None;
        }
        self.index_set
            .binary_search_by_key(&(x.order(), x.bits()), |s| (s.order(), s.bits()))
            .ok()
            .map(|pos| self.theta[pos])
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [f64] {
        self.normalized = false;
        &mut self.theta
    }

    pub(crate) fn set_theta_bottom(&mut self, value: f64, normalized: bool) {
        self.theta_bottom = value;
        self.normalized = normalized;
    }

    /// Dense mask-indexed vector of the interaction parameters, zero outside
    /// `B` and zero at the bottom (normalization is handled separately).
    pub(crate) fn dense_theta(&self) -> Vec<f64> {
        let mut dense = vec![0.0; 1usize << self.n];
        for (pos, s) in self.index_set.iter().enumerate() {
            dense[s.index()] = self.theta[pos];
        }
        dense
    }

    /// `sum over s in B with s <= x of theta(s)` for every outcome at once.
    pub(crate) fn unnormalized_log_probs(&self) -> Vec<f64> {
        let mut values = self.dense_theta();
        fast_zeta_transform(&mut values, Direction::Down).expect("valid length");
        values
    }
}

/// The energy sum `sum over s in B with s <= x of theta(s)`, i.e. the log of
/// the unnormalized probability. The bottom parameter is not included.
pub fn unnormalized_log_prob(model: &HbmModel, x: Outcome) -> Result<f64> {
    if x.n() != model.n() {
        return Err(Error::VarCountMismatch {
            left: x.n(),
            right: model.n(),
        });
    }
    let mut total = 0.0;
    for (pos, s) in model.index_set.iter().enumerate() {
        if s.bits() & x.bits() == s.bits() {
            total += model.theta[pos];
        }
    }
    Ok(total)
}

/// Exact log partition function by max-shifted log-sum-exp over all 2^n
/// unnormalized log probabilities.
pub fn exact_log_z(model: &HbmModel) -> f64 {
    log_sum_exp(&model.unnormalized_log_probs())
}

/// The exactly normalized model distribution.
pub fn exact_distribution(model: &HbmModel) -> DenseDistribution {
    let mut values = model.unnormalized_log_probs();
    let log_z = log_sum_exp(&values);
    for v in &mut values {
        *v = (*v - log_z).exp();
    }
    DenseDistribution::new(values).expect("normalized by construction")
}

/// Exact expectation parameters: normalize via [`exact_log_z`], then take
/// upper-set sums.
pub fn exact_eta(model: &HbmModel) -> EtaCoordinates {
    crate::distribution::eta_from_p(&exact_distribution(model))
}

/// Log-likelihood `N * sum over x of p_hat(x) (log f*(x) - log Z)` of a
/// dataset under the model, with the caller supplying `log Z` (exact or an
/// AIS estimate).
pub fn log_likelihood(model: &HbmModel, data: &EmpiricalDataset, log_z: f64) -> Result<f64> {
    if data.n() != model.n() {
        return Err(Error::VarCountMismatch {
            left: data.n(),
            right: model.n(),
        });
    }
    let unnorm = model.unnormalized_log_probs();
    let total = data.total() as f64;
    let mut acc = 0.0;
    for (index, &count) in data.counts().iter().enumerate() {
        if count > 0 {
            acc += (count as f64 / total) * (unnorm[index] - log_z);
        }
    }
    Ok(total * acc)
}

/// Per-site adjacency of the index set: for each variable, the parameters
/// that touch it, keyed by the rest of their mask. Lets a Gibbs conditional
/// evaluate `delta_i(x)` in O(|B touching i|).
pub(crate) struct SiteIndex {
    per_site: Vec<Vec<(u32, f64)>>,
}

impl SiteIndex {
    pub(crate) fn new(model: &HbmModel) -> Self {
        let n = model.n();
        let mut per_site = vec![Vec::new(); n];
        for (pos, s) in model.index_set.iter().enumerate() {
            for (site, slot) in per_site.iter_mut().enumerate() {
                if s.contains_var(site) {
                    slot.push((s.bits() & !(1u32 << site), model.theta[pos]));
                }
            }
        }
        Self { per_site }
    }

    /// `delta_i(x)`: energy-sum difference between setting and clearing site
    /// `i` while the other coordinates of `x` stay fixed.
    pub(crate) fn delta(&self, bits: u32, site: usize) -> f64 {
        let mut total = 0.0;
        for &(rest, theta) in &self.per_site[site] {
            if rest & bits == rest {
                total += theta;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::zeta;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    const LN_2: f64 = std::f64::consts::LN_2;

    pub(crate) fn out(bits: u32, n: usize) -> Outcome {
        Outcome::new(bits, n).unwrap()
    }

    pub(crate) fn random_model(n: usize, k: usize, scale: f64, seed: u64) -> HbmModel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut model = HbmModel::new(n, k).unwrap();
        for v in model.theta_mut() {
            *v = rng.gen_range(-scale..scale);
        }
        let log_z = exact_log_z(&model);
        model.set_theta_bottom(-log_z, true);
        model
    }

    #[test]
    fn zero_model_has_zero_energy_everywhere() {
        let model = HbmModel::new(3, 2).unwrap();
        for bits in 0..8u32 {
            assert_eq!(unnormalized_log_prob(&model, out(bits, 3)).unwrap(), 0.0);
        }
    }

    #[test]
    fn energy_adds_over_the_lower_set() {
        let mut model = HbmModel::new(2, 2).unwrap();
        // canonical order for n=2, k=2: {1}, {2}, {1,2}
        model.theta_mut().copy_from_slice(&[0.3, -0.7, 0.2]);
        let v = unnormalized_log_prob(&model, out(0b11, 2)).unwrap();
        assert!((v - (0.3 - 0.7 + 0.2)).abs() < 1e-15);
        assert!((unnormalized_log_prob(&model, out(0b01, 2)).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn energy_matches_naive_zeta_sum() {
        let model = random_model(4, 3, 1.0, 3);
        for bits in 0..16u32 {
            let x = out(bits, 4);
            let naive: f64 = model
                .index_set()
                .iter()
                .zip(model.theta())
                .map(|(&s, &t)| zeta(s, x).unwrap() as f64 * t)
                .sum();
            let fast = unnormalized_log_prob(&model, x).unwrap();
            assert!((fast - naive).abs() < 1e-12);
            // and against the dense transform path
            assert!((model.unnormalized_log_probs()[x.index()] - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn log_z_of_zero_model_is_n_log2() {
        let model = HbmModel::new(4, 2).unwrap();
        assert!((exact_log_z(&model) - 4.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn log_z_two_term_sum() {
        let mut model = HbmModel::new(1, 1).unwrap();
        model.theta_mut()[0] = 3.0f64.ln();
        assert!((exact_log_z(&model) - 4.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_z_matches_naive_exponential_sum() {
        let model = random_model(6, 3, 1.0, 5);
        let naive: f64 = (0..64u32)
            .map(|bits| unnormalized_log_prob(&model, out(bits, 6)).unwrap().exp())
            .sum();
        let rel = (exact_log_z(&model).exp() - naive).abs() / naive;
        assert!(rel < 1e-12);
    }

    #[test]
    fn eta_of_zero_model_halves_per_level() {
        let model = HbmModel::new(3, 3).unwrap();
        let eta = exact_eta(&model);
        for bits in 0..8u32 {
            let expect = 0.5f64.powi(bits.count_ones() as i32);
            assert!((eta.values()[bits as usize] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_single_variable_closed_form() {
        let mut model = HbmModel::new(1, 1).unwrap();
        model.theta_mut()[0] = 3.0f64.ln();
        let eta = exact_eta(&model);
        assert!((eta.values()[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn eta_matches_distribution_module() {
        let model = random_model(5, 2, 1.0, 8);
        let via_dist = crate::distribution::eta_from_p(&exact_distribution(&model));
        let direct = exact_eta(&model);
        for (a, b) in direct.values().iter().zip(via_dist.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_likelihood_of_uniform_model() {
        let model = HbmModel::new(3, 1).unwrap();
        let data = EmpiricalDataset::new(vec![5, 0, 1, 0, 2, 0, 0, 2]).unwrap();
        let got = log_likelihood(&model, &data, exact_log_z(&model)).unwrap();
        assert!((got - (-(data.total() as f64) * 3.0 * LN_2)).abs() < 1e-10);
    }

    #[test]
    fn site_index_delta_matches_energy_difference() {
        let model = random_model(5, 3, 1.0, 13);
        let idx = SiteIndex::new(&model);
        for bits in 0..32u32 {
            for site in 0..5 {
                let x1 = out(bits, 5).with_var(site, true);
                let x0 = out(bits, 5).with_var(site, false);
                let direct = unnormalized_log_prob(&model, x1).unwrap()
                    - unnormalized_log_prob(&model, x0).unwrap();
                assert!((idx.delta(bits, site) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn from_theta_checks_normalization_claim() {
        let theta = vec![0.0; 3];
        assert!(HbmModel::from_theta(2, 2, theta.clone(), 0.0, true).is_err());
        assert!(HbmModel::from_theta(2, 2, theta.clone(), 0.0, false).is_ok());
        assert!(HbmModel::from_theta(2, 2, theta, -2.0 * LN_2, true).is_ok());
    }

    #[test]
    fn theta_of_looks_up_by_outcome() {
        let model = random_model(4, 2, 1.0, 21);
        for (pos, s) in model.index_set().iter().enumerate() {
            assert_eq!(model.theta_of(*s), Some(model.theta()[pos]));
        }
        assert_eq!(model.theta_of(out(0b0111, 4)), None);
        assert_eq!(model.theta_of(out(0, 4)), None);
    }
}
