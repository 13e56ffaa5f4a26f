//! Restricted Boltzmann Machine: a bipartite energy model over `n` visible
//! and `m` hidden binary units, trained by contrastive divergence and
//! evaluated exactly at small scale.
//!
//! Energy of a joint state: `-b_v . v - b_h . h - v^T W h`. The bipartite
//! structure factorizes both conditionals, which is all CD needs; the exact
//! operations below exist to evaluate trained models against a reference
//! distribution in KL.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::distribution::{DenseDistribution, EmpiricalDataset, kl_divergence};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, Outcome, MAX_VARS};
use crate::util::{log_sum_exp, logistic};

/// Joint-state cap for the brute-force evaluation ops.
pub const MAX_JOINT_VARS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct RbmModel {
    visible_bias: Array1<f64>,
    hidden_bias: Array1<f64>,
    /// `n x m`, row per visible unit.
    weights: Array2<f64>,
}

impl RbmModel {
    /// All-zero parameters: the uniform visible marginal. `m = 0` is allowed
    /// and gives a bias-only independent model.
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || n > MAX_VARS {
            return Err(Error::InvalidArgument(format!(
                "visible count {n} outside supported range 1..={MAX_VARS}"
            )));
        }
        if m > MAX_VARS {
            return Err(Error::InvalidArgument(format!(
                "hidden count {m} above supported cap {MAX_VARS}"
            )));
        }
        Ok(Self {
            visible_bias: Array1::zeros(n),
            hidden_bias: Array1::zeros(m),
            weights: Array2::zeros((n, m)),
        })
    }

    /// Zero biases and weights drawn uniformly from [-0.01, 0.01].
    pub fn init_random(n: usize, m: usize, seed: u64) -> Result<Self> {
        let mut model = Self::new(n, m)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for w in model.weights.iter_mut() {
            *w = rng.gen_range(-0.01..0.01);
        }
        Ok(model)
    }

    pub fn from_parts(
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
        weights: Array2<f64>,
    ) -> Result<Self> {
        let (n, m) = (visible_bias.len(), hidden_bias.len());
        if weights.dim() != (n, m) {
            return Err(Error::InvalidArgument(format!(
                "weight matrix {:?} does not match n={n}, m={m}",
                weights.dim()
            )));
        }
        let finite = visible_bias.iter().chain(hidden_bias.iter()).chain(weights.iter());
        for &v in finite {
            if !v.is_finite() {
                return Err(Error::NumericRange(format!("non-finite parameter {v}")));
            }
        }
        Self::new(n, m)?; // range checks
        Ok(Self {
            visible_bias,
            hidden_bias,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn m(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn visible_bias(&self) -> &Array1<f64> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &Array1<f64> {
        &self.hidden_bias
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// `(n + m) + n * m`: biases plus edges.
    pub fn parameter_count(&self) -> usize {
        self.n() + self.m() + self.n() * self.m()
    }

    fn apply_delta(&mut self, delta: &CdDelta) {
        self.weights += &delta.d_weights;
        self.visible_bias += &delta.d_visible_bias;
        self.hidden_bias += &delta.d_hidden_bias;
    }
}

fn state_vector(bits: u32, len: usize) -> Array1<f64> {
    Array1::from_shape_fn(len, |i| ((bits >> i) & 1) as f64)
}

fn sample_bernoulli(probs: &Array1<f64>, rng: &mut ChaCha12Rng) -> Array1<f64> {
    probs.mapv(|p| (rng.gen::<f64>() < p) as u8 as f64)
}

/// `P(h_j = 1 | v)`: elementwise logistic of `b_h + W^T v`.
pub fn hidden_conditional(model: &RbmModel, v: &Array1<f64>) -> Result<Array1<f64>> {
    if v.len() != model.n() {
        return Err(Error::VarCountMismatch {
            left: v.len(),
            right: model.n(),
        });
    }
    Ok((model.weights.t().dot(v) + &model.hidden_bias).mapv(logistic))
}

/// `P(v_i = 1 | h)`: elementwise logistic of `b_v + W h`.
pub fn visible_conditional(model: &RbmModel, h: &Array1<f64>) -> Result<Array1<f64>> {
    if h.len() != model.m() {
        return Err(Error::VarCountMismatch {
            left: h.len(),
            right: model.m(),
        });
    }
    Ok((model.weights.dot(h) + &model.visible_bias).mapv(logistic))
}

/// Contrastive divergence configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct CdConfig {
    pub learning_rate: f64,
    pub cd_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl CdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.cd_steps == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "cd_steps, epochs and batch_size must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Batch-averaged parameter update from one CD pass.
#[derive(Clone, Debug)]
pub struct CdDelta {
    pub d_weights: Array2<f64>,
    pub d_visible_bias: Array1<f64>,
    pub d_hidden_bias: Array1<f64>,
}

/// One CD-k update over a batch of visible states:
/// `dW = eps (v h^T - v' h'^T)`, `db_v = eps (v - v')`, `db_h = eps (h - h')`,
/// with all of `h`, `v'`, `h'` binary samples from the factorized
/// conditionals and `(v', h')` taken after `cd_steps` reconstruction rounds.
pub fn cd_update(
    model: &RbmModel,
    batch: &[Outcome],
    cfg: &CdConfig,
    rng: &mut ChaCha12Rng,
) -> Result<CdDelta> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty CD batch".into()));
    }
    let (n, m) = (model.n(), model.m());
    let mut d_weights = Array2::zeros((n, m));
    let mut d_visible = Array1::zeros(n);
    let mut d_hidden = Array1::zeros(m);

    for x in batch {
        if x.n() != n {
            return Err(Error::VarCountMismatch {
                left: x.n(),
                right: n,
            });
        }
        let v = state_vector(x.bits(), n);
        let h = sample_bernoulli(&hidden_conditional(model, &v)?, rng);
        let mut v_neg = v.clone();
        let mut h_neg = h.clone();
        for _ in 0..cfg.cd_steps {
            v_neg = sample_bernoulli(&visible_conditional(model, &h_neg)?, rng);
            h_neg = sample_bernoulli(&hidden_conditional(model, &v_neg)?, rng);
        }
        // outer products v h^T and v' h'^T
        for i in 0..n {
            for j in 0..m {
                d_weights[(i, j)] += v[i] * h[j] - v_neg[i] * h_neg[j];
            }
        }
        d_visible += &(&v - &v_neg);
        d_hidden += &(&h - &h_neg);
    }

    let scale = cfg.learning_rate / batch.len() as f64;
    Ok(CdDelta {
        d_weights: d_weights * scale,
        d_visible_bias: d_visible * scale,
        d_hidden_bias: d_hidden * scale,
    })
}

/// Per-epoch progress metric.
#[derive(Clone, Copy, Debug)]
pub enum EpochMetric {
    /// KL from the empirical distribution to the exact visible marginal,
    /// available while `n + m` stays within the joint cap.
    ExactKl(f64),
    /// Mean per-bit reconstruction error, the fallback proxy at larger sizes.
    ReconstructionError(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub metric: EpochMetric,
}

#[derive(Clone, Debug, Default)]
pub struct CdTrace {
    pub epochs: Vec<EpochRecord>,
}

/// Shuffled-minibatch CD training with a per-epoch trace.
pub fn train_cd(
    m0: &RbmModel,
    data: &EmpiricalDataset,
    cfg: &CdConfig,
) -> Result<(RbmModel, CdTrace)> {
    train_cd_traced(m0, data, cfg, 1)
}

/// As [`train_cd`], recording the metric every `trace_every` epochs
/// (0 disables the trace entirely; decomposition sweeps use that).
pub fn train_cd_traced(
    m0: &RbmModel,
    data: &EmpiricalDataset,
    cfg: &CdConfig,
    trace_every: usize,
) -> Result<(RbmModel, CdTrace)> {
    cfg.validate()?;
    if data.n() != m0.n() {
        return Err(Error::VarCountMismatch {
            left: data.n(),
            right: m0.n(),
        });
    }
    let n = m0.n();
    let mut samples: Vec<Outcome> = Vec::with_capacity(data.total() as usize);
    for (bits, &count) in data.counts().iter().enumerate() {
        for _ in 0..count {
            samples.push(Outcome::new(bits as u32, n)?);
        }
    }

    let empirical = data.empirical_distribution();
    let exact_ok = n + m0.m() <= MAX_JOINT_VARS;
    let mut model = m0.clone();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut trace = CdTrace::default();

    for epoch in 0..cfg.epochs {
        samples.shuffle(&mut rng);
        for batch in samples.chunks(cfg.batch_size) {
            let delta = cd_update(&model, batch, cfg, &mut rng)?;
            model.apply_delta(&delta);
        }
        if trace_every > 0 && epoch % trace_every == 0 {
            let metric = if exact_ok {
                EpochMetric::ExactKl(kl_divergence(
                    &empirical,
                    &exact_visible_marginal(&model)?,
                )?)
            } else {
                EpochMetric::ReconstructionError(reconstruction_error(
                    &model,
                    &samples,
                    &mut rng,
                )?)
            };
            trace.epochs.push(EpochRecord { epoch, metric });
        }
    }
    Ok((model, trace))
}

/// Mean per-bit disagreement between data and a one-step reconstruction.
fn reconstruction_error(
    model: &RbmModel,
    samples: &[Outcome],
    rng: &mut ChaCha12Rng,
) -> Result<f64> {
    let n = model.n();
    let mut total = 0.0;
    for x in samples {
        let v = state_vector(x.bits(), n);
        let h = sample_bernoulli(&hidden_conditional(model, &v)?, rng);
        let v_prob = visible_conditional(model, &h)?;
        total += v
            .iter()
            .zip(v_prob.iter())
            .map(|(a, p)| (a - p).abs())
            .sum::<f64>()
            / n as f64;
    }
    Ok(total / samples.len() as f64)
}

fn check_joint_cap(model: &RbmModel) -> Result<()> {
    if model.n() + model.m() > MAX_JOINT_VARS {
        return Err(Error::InvalidArgument(format!(
            "joint state space 2^{} exceeds the exact-evaluation cap 2^{MAX_JOINT_VARS}",
            model.n() + model.m()
        )));
    }
    Ok(())
}

/// Bipartite energy of a joint state.
fn energy(model: &RbmModel, v_bits: u32, h_bits: u32) -> f64 {
    let mut acc = 0.0;
    for i in 0..model.n() {
        if v_bits & (1 << i) != 0 {
            acc += model.visible_bias[i];
            for j in 0..model.m() {
                if h_bits & (1 << j) != 0 {
                    acc += model.weights[(i, j)];
                }
            }
        }
    }
    for j in 0..model.m() {
        if h_bits & (1 << j) != 0 {
            acc += model.hidden_bias[j];
        }
    }
    -acc
}

/// Exact log partition function: stable log-sum-exp of `-energy` over all
/// `2^(n+m)` joint states.
pub fn exact_log_z_rbm(model: &RbmModel) -> Result<f64> {
    check_joint_cap(model)?;
    let mut values = Vec::with_capacity(1usize << (model.n() + model.m()));
    for v_bits in 0..(1u32 << model.n()) {
        for h_bits in 0..(1u32 << model.m()) {
            values.push(-energy(model, v_bits, h_bits));
        }
    }
    Ok(log_sum_exp(&values))
}

/// Exact visible marginal by brute-force summation over all hidden states per
/// visible state, normalized by [`exact_log_z_rbm`].
pub fn exact_visible_marginal(model: &RbmModel) -> Result<DenseDistribution> {
    check_joint_cap(model)?;
    let log_z = exact_log_z_rbm(model)?;
    let mut probs = Vec::with_capacity(1usize << model.n());
    for v_bits in 0..(1u32 << model.n()) {
        let logs: Vec<f64> = (0..(1u32 << model.m()))
            .map(|h_bits| -energy(model, v_bits, h_bits))
            .collect();
        probs.push((log_sum_exp(&logs) - log_z).exp());
    }
    DenseDistribution::new(probs)
}

/// Closed-form visible marginal: the hidden sum factorizes per unit, so
/// `log p(v) = b_v . v + sum_j log(1 + exp(b_h_j + (W^T v)_j)) - log Z`.
/// Algebraically identical to [`exact_visible_marginal`] but O(2^n m), which
/// keeps large hidden layers evaluable; the unit tests pin the two together.
pub fn visible_marginal(model: &RbmModel) -> Result<DenseDistribution> {
    let n = model.n();
    Lattice::new(n)?;
    let mut log_unnorm = Vec::with_capacity(1usize << n);
    for v_bits in 0..(1u32 << n) {
        let v = state_vector(v_bits, n);
        let mut acc = model.visible_bias.dot(&v);
        let activations = model.weights.t().dot(&v) + &model.hidden_bias;
        for &a in activations.iter() {
            // log(1 + e^a), stable on both sides
            acc += if a > 0.0 { a + (-a).exp().ln_1p() } else { a.exp().ln_1p() };
        }
        log_unnorm.push(acc);
    }
    let log_z = log_sum_exp(&log_unnorm);
    DenseDistribution::new(log_unnorm.into_iter().map(|l| (l - log_z).exp()).collect())
}
