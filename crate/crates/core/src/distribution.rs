//! Dense discrete distributions over `{0,1}^n` and their three coordinate
//! systems: raw probabilities `p`, log-linear natural parameters `theta`, and
//! expectation parameters `eta`.
//!
//! The coordinate maps are Moebius/zeta transform pairs and therefore exact
//! inverses of each other:
//!
//! ```text
//! theta(x) = sum over s <= x of mu(s, x) log p(s)      log p(x) = sum over s <= x of theta(s)
//! eta(x)   = sum over s >= x of p(s)                   p(x)     = sum over s >= x of mu(x, s) eta(s)
//! ```
//!
//! `eta(x)` is the probability that every variable in `x` is simultaneously 1,
//! so `eta(bottom) = 1` and `eta` is non-increasing up the lattice.

use crate::error::{Error, Result};
use crate::lattice::{fast_mobius_transform, fast_zeta_transform, Direction, Lattice, Outcome};
use crate::util::log_sum_exp;

/// Tolerance used when validating that probabilities sum to 1.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Entries of an eta vector inverted back to p may round slightly negative;
/// anything below this is treated as an inconsistent input.
const ETA_CONSISTENCY_TOL: f64 = 1e-9;

fn infer_n(len: usize) -> Result<usize> {
    if len.is_power_of_two() {
        let n = len.trailing_zeros() as usize;
        if n >= 1 && Lattice::new(n).is_ok() {
            return Ok(n);
        }
    }
    Err(Error::InvalidLength { len })
}

/// A probability vector over all 2^n outcomes, indexed by bitmask.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseDistribution {
    n: u8,
    probs: Vec<f64>,
    strictly_positive: bool,
}

impl DenseDistribution {
    /// Validates non-negativity and normalization within [`NORMALIZATION_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let n = infer_n(probs.len())?;
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::NegativeProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized {
                sum,
                tol: NORMALIZATION_TOL,
            });
        }
        let strictly_positive = probs.iter().all(|&p| p > 0.0);
        Ok(Self {
            n: n as u8,
            probs,
            strictly_positive,
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        let lattice = Lattice::new(n)?;
        Self::new(vec![1.0 / lattice.size() as f64; lattice.size()])
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: Outcome) -> f64 {
        debug_assert_eq!(x.n(), self.n());
        self.probs[x.index()]
    }

    /// True iff every outcome has nonzero probability.
    pub fn strictly_positive(&self) -> bool {
        self.strictly_positive
    }
}

/// Natural parameters of the log-linear model, one value per outcome.
/// The bottom entry carries normalization: `theta(bottom) = -log Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaCoordinates {
    n: u8,
    theta: Vec<f64>,
}

impl ThetaCoordinates {
    /// Validates that the induced distribution is normalized within
    /// [`NORMALIZATION_TOL`].
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        let coords = Self::from_raw(theta)?;
        let log_norm = coords.log_normalizer();
        if log_norm.abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized {
                sum: log_norm.exp(),
                tol: NORMALIZATION_TOL,
            });
        }
        Ok(coords)
    }

    /// Accepts any finite theta vector, normalized or not.
    pub fn from_raw(theta: Vec<f64>) -> Result<Self> {
        let n = infer_n(theta.len())?;
        if let Some(index) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericRange(format!(
                "theta[{index}] = {} is not finite",
                theta[index]
            )));
        }
        Ok(Self {
            n: n as u8,
            theta,
        })
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn values(&self) -> &[f64] {
        &self.theta
    }

    pub fn value(&self, x: Outcome) -> f64 {
        debug_assert_eq!(x.n(), self.n());
        self.theta[x.index()]
    }

    /// log of the total mass induced by this theta vector; 0 for a normalized
    /// vector.
    fn log_normalizer(&self) -> f64 {
        let mut log_p = self.theta.clone();
        fast_zeta_transform(&mut log_p, Direction::Down).expect("validated length");
        log_sum_exp(&log_p)
    }
}

/// Expectation parameters: `eta(x)` is the probability that all variables in
/// `x` are simultaneously 1.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaCoordinates {
    n: u8,
    eta: Vec<f64>,
}

impl EtaCoordinates {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        let n = infer_n(eta.len())?;
        if (eta[0] - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized {
                sum: eta[0],
                tol: NORMALIZATION_TOL,
            });
        }
        for (index, &value) in eta.iter().enumerate() {
            if !value.is_finite() || !(-NORMALIZATION_TOL..=1.0 + NORMALIZATION_TOL).contains(&value) {
                return Err(Error::InvalidArgument(format!(
                    "eta[{index}] = {value} outside [0, 1]"
                )));
            }
        }
        Ok(Self { n: n as u8, eta })
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn values(&self) -> &[f64] {
        &self.eta
    }

    pub fn value(&self, x: Outcome) -> f64 {
        debug_assert_eq!(x.n(), self.n());
        self.eta[x.index()]
    }
}

/// Outcome counts from a finite sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmpiricalDataset {
    n: u8,
    counts: Vec<u64>,
    total: u64,
}

impl EmpiricalDataset {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        let n = infer_n(counts.len())?;
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidArgument(
                "empirical dataset must contain at least one sample".into(),
            ));
        }
        Ok(Self {
            n: n as u8,
            counts,
            total,
        })
    }

    pub fn from_samples(n: usize, samples: &[Outcome]) -> Result<Self> {
        let lattice = Lattice::new(n)?;
        let mut counts = vec![0u64; lattice.size()];
        for x in samples {
            if x.n() != n {
                return Err(Error::VarCountMismatch {
                    left: x.n(),
                    right: n,
                });
            }
            counts[x.index()] += 1;
        }
        Self::new(counts)
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// The empirical distribution `counts / N`.
    pub fn empirical_distribution(&self) -> DenseDistribution {
        let total = self.total as f64;
        let probs = self.counts.iter().map(|&c| c as f64 / total).collect();
        DenseDistribution::new(probs).expect("counts normalize by construction")
    }
}

/// Natural parameters of a distribution: the Moebius transform (down) of
/// `log p`. Requires strict positivity.
pub fn theta_from_p(p: &DenseDistribution) -> Result<ThetaCoordinates> {
    if let Some(index) = p.probs().iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroProbability { index });
    }
    let mut theta: Vec<f64> = p.probs().iter().map(|&v| v.ln()).collect();
    fast_mobius_transform(&mut theta, Direction::Down)?;
    ThetaCoordinates::from_raw(theta)
}

/// Result of [`p_from_theta`]: the distribution plus the magnitude of the
/// normalization correction that was applied (0 for an exactly normalized
/// input).
#[derive(Clone, Debug)]
pub struct ProbsFromTheta {
    pub distribution: DenseDistribution,
    pub log_correction: f64,
}

/// Exponentiates the zeta transform (down) of theta. Work happens in log
/// space; a mis-normalized input is renormalized and the correction reported.
pub fn p_from_theta(t: &ThetaCoordinates) -> Result<ProbsFromTheta> {
    let mut log_p = t.values().to_vec();
    fast_zeta_transform(&mut log_p, Direction::Down)?;
    let log_norm = log_sum_exp(&log_p);
    if !log_norm.is_finite() {
        return Err(Error::NumericRange(format!(
            "log normalizer {log_norm} while exponentiating theta"
        )));
    }
    let probs: Vec<f64> = log_p.iter().map(|&v| (v - log_norm).exp()).collect();
    Ok(ProbsFromTheta {
        distribution: DenseDistribution::new(probs)?,
        log_correction: log_norm.abs(),
    })
}

/// Expectation parameters: upper-set sums of `p`.
pub fn eta_from_p(p: &DenseDistribution) -> EtaCoordinates {
    let mut eta = p.probs().to_vec();
    fast_zeta_transform(&mut eta, Direction::Up).expect("validated length");
    // Upper-set sums of a distribution can round a hair past 1.
    for v in &mut eta {
        *v = v.min(1.0);
    }
    eta[0] = 1.0;
    EtaCoordinates::new(eta).expect("valid distribution yields valid eta")
}

/// Inverts [`eta_from_p`] by the Moebius transform (up). Entries that come out
/// negative beyond tolerance signal an inconsistent eta vector.
pub fn p_from_eta(e: &EtaCoordinates) -> Result<DenseDistribution> {
    let mut probs = e.values().to_vec();
    fast_mobius_transform(&mut probs, Direction::Up)?;
    for (index, value) in probs.iter_mut().enumerate() {
        if *value < -ETA_CONSISTENCY_TOL {
            return Err(Error::InconsistentEta {
                index,
                value: *value,
            });
        }
        if *value < 0.0 {
            *value = 0.0;
        }
    }
    DenseDistribution::new(probs)
}

/// KL divergence `sum p log(p/q)` in nats, with `0 log 0 := 0`.
pub fn kl_divergence(p: &DenseDistribution, q: &DenseDistribution) -> Result<f64> {
    if p.n() != q.n() {
        return Err(Error::VarCountMismatch {
            left: p.n(),
            right: q.n(),
        });
    }
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::DivergenceUndefined { index, p: pi });
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}
