//! Systematic-scan Gibbs sampling for the HBM.
//!
//! One sample is the state after a full sweep over all `n` sites in order.
//! The single-site conditional only needs the energy difference of flipping
//! that site, so the partition function cancels exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::{HbmModel, SiteIndex};
use crate::distribution::EtaCoordinates;
use crate::error::{Error, Result};
use crate::lattice::{fast_zeta_transform, Direction, Lattice, Outcome};
use crate::util::logistic;

/// Chain configuration. `temperature` is the constant of the Boltzmann
/// distribution and is fixed at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsConfig {
    pub num_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub temperature: f64,
}

impl GibbsConfig {
    pub fn new(num_samples: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            num_samples,
            burn_in,
            seed,
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::InvalidArgument(
                "need at least one Gibbs sample".into(),
            ));
        }
        if self.temperature != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "Boltzmann constant is fixed at 1, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// `P(x_i = 1 | rest of x)`: the logistic of the flip energy difference
/// `delta_i = log f*(x with i set) - log f*(x with i clear)`.
pub fn gibbs_conditional(model: &HbmModel, x: Outcome, site: usize) -> Result<f64> {
    if x.n() != model.n() {
        return Err(Error::VarCountMismatch {
            left: x.n(),
            right: model.n(),
        });
    }
    if site >= model.n() {
        return Err(Error::InvalidArgument(format!(
            "site {site} outside 0..{}",
            model.n()
        )));
    }
    let up = super::unnormalized_log_prob(model, x.with_var(site, true))?;
    let down = super::unnormalized_log_prob(model, x.with_var(site, false))?;
    Ok(logistic(up - down))
}

/// One systematic sweep over all sites at inverse temperature `beta`,
/// maintaining the running energy sum `log_f` of the current state.
pub(crate) fn sweep(
    bits: &mut u32,
    log_f: &mut f64,
    index: &SiteIndex,
    n: usize,
    beta: f64,
    rng: &mut ChaCha12Rng,
) {
    for site in 0..n {
        let bit = 1u32 << site;
        let delta = index.delta(*bits, site);
        let p_one = logistic(beta * delta);
        let set = rng.gen::<f64>() < p_one;
        if set && *bits & bit == 0 {
            *bits |= bit;
            *log_f += delta;
        } else if !set && *bits & bit != 0 {
            *bits &= !bit;
            *log_f -= delta;
        }
    }
}

/// Runs one chain: a uniform random start, `burn_in` discarded sweeps, then
/// one recorded state per sweep. Deterministic given the seed.
pub fn gibbs_sample(model: &HbmModel, cfg: &GibbsConfig) -> Result<Vec<Outcome>> {
    cfg.validate()?;
    let n = model.n();
    let index = SiteIndex::new(model);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut bits = rng.gen_range(0..(1u32 << n));
    let mut log_f = 0.0; // unused at beta = 1 sampling, maintained for reuse
    for _ in 0..cfg.burn_in {
        sweep(&mut bits, &mut log_f, &index, n, 1.0, &mut rng);
    }
    let mut samples = Vec::with_capacity(cfg.num_samples);
    for _ in 0..cfg.num_samples {
        sweep(&mut bits, &mut log_f, &index, n, 1.0, &mut rng);
        samples.push(Outcome::new(bits, n).expect("in range"));
    }
    Ok(samples)
}

/// Empirical expectation parameters of a sample list: `eta_hat(x)` is the
/// fraction of samples that contain `x`, computed by counting followed by an
/// upward zeta transform.
pub fn estimate_eta(samples: &[Outcome], n: usize) -> Result<EtaCoordinates> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot estimate eta from an empty sample list".into(),
        ));
    }
    let lattice = Lattice::new(n)?;
    let mut counts = vec![0.0f64; lattice.size()];
    for x in samples {
        if x.n() != n {
            return Err(Error::VarCountMismatch {
                left: x.n(),
                right: n,
            });
        }
        counts[x.index()] += 1.0;
    }
    fast_zeta_transform(&mut counts, Direction::Up)?;
    let total = samples.len() as f64;
    let eta: Vec<f64> = counts.into_iter().map(|c| c / total).collect();
    EtaCoordinates::new(eta)
}
