//! Higher-order Boltzmann machines in the log-linear parameterization over the
//! Boolean lattice, plus the pieces needed to study their bias-variance trade-off:
//!
//! - [`lattice`]: subset lattice, zeta/Moebius functions, fast subset-sum transforms
//! - [`distribution`]: dense distributions over `{0,1}^n` with p/theta/eta coordinates
//! - [`hbm`]: k-th order Boltzmann machine with exact inference, Gibbs sampling,
//!   annealed importance sampling and maximum-likelihood fitting
//! - [`rbm`]: restricted Boltzmann machine with contrastive-divergence training and
//!   exact small-scale evaluation
//! - [`decomposition`]: KL bias-variance decomposition via the generalized
//!   Pythagorean theorem
//! - [`synthdata`]: seeded synthetic ground truth and multinomial datasets
//! - [`io`]: versioned structured-text persistence for distributions and models
//!
//! Everything dense is capped at `n <= 20` variables. All randomized operations are
//! deterministic functions of explicit 64-bit seeds; with the default `parallel`
//! feature, replicate sweeps and AIS runs fan out over rayon without changing any
//! result.

pub mod decomposition;
pub mod distribution;
pub mod error;
pub mod hbm;
pub mod io;
pub mod lattice;
pub mod parallel;
pub mod rbm;
pub mod synthdata;

mod util;

pub use error::{Error, Result};
pub use lattice::{Lattice, Outcome, MAX_VARS};
