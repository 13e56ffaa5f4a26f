//! The Boolean outcome lattice: subsets of the variable set `{0, .., n-1}`
//! ordered by inclusion.
//!
//! Outcomes are bitmasks, so the lattice is never materialized as a graph; a
//! dense vector indexed by mask addresses every node in O(1) and the zeta and
//! Moebius transforms run in O(n 2^n) instead of the O(4^n) naive double loop.

use crate::error::{Error, Result};

/// Hard cap on the variable count for dense 2^n storage.
pub const MAX_VARS: usize = 20;

/// A subset of the `n` binary variables, stored as a bitmask.
///
/// Bit `i` set means variable `i` is 1 (equivalently, `i` is in the subset).
/// The same value serves as a state vector in `{0,1}^n` and as a node of the
/// subset lattice. The empty mask is the bottom element.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Outcome {
    bits: u32,
    n: u8,
}

impl std::fmt::Debug for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Outcome({:0width$b})", self.bits, width = self.n as usize)
    }
}

impl Outcome {
    pub fn new(bits: u32, n: usize) -> Result<Self> {
        check_var_count(n)?;
        if bits >= (1u32 << n) {
            return Err(Error::InvalidArgument(format!(
                "outcome bits {bits:#b} do not fit in {n} variables"
            )));
        }
        Ok(Self { bits, n: n as u8 })
    }

    /// The bottom element: the all-zeros state / empty subset.
    pub fn bottom(n: usize) -> Result<Self> {
        Self::new(0, n)
    }

    /// The top element: the all-ones state / full subset.
    pub fn top(n: usize) -> Result<Self> {
        check_var_count(n)?;
        Ok(Self {
            bits: (1u32 << n) - 1,
            n: n as u8,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    /// Position in a dense mask-indexed vector.
    pub fn index(&self) -> usize {
        self.bits as usize
    }

    /// Number of variables set to 1; zero exactly for the bottom element.
    pub fn order(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn is_bottom(&self) -> bool {
        self.bits == 0
    }

    /// Whether variable `var` (zero-based) is set.
    pub fn contains_var(&self, var: usize) -> bool {
        debug_assert!(var < self.n());
        self.bits & (1 << var) != 0
    }

    /// Copy of this outcome with variable `var` forced to `value`.
    pub fn with_var(&self, var: usize, value: bool) -> Self {
        debug_assert!(var < self.n());
        let bit = 1u32 << var;
        Self {
            bits: if value { self.bits | bit } else { self.bits & !bit },
            n: self.n,
        }
    }
}

/// The lattice of all 2^n outcomes on `n` variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lattice {
    n: u8,
}

impl Lattice {
    pub fn new(n: usize) -> Result<Self> {
        check_var_count(n)?;
        Ok(Self { n: n as u8 })
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn size(&self) -> usize {
        1usize << self.n
    }

    /// All outcomes in mask order.
    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        let n = self.n;
        (0..self.size() as u32).map(move |bits| Outcome { bits, n })
    }

    /// All outcomes in canonical order: ascending cardinality, then ascending
    /// mask. This is the record order used by every serialized artifact.
    pub fn canonical_order(&self) -> Vec<Outcome> {
        let mut all: Vec<Outcome> = self.outcomes().collect();
        all.sort_by_key(|x| (x.order(), x.bits()));
        all
    }
}

fn check_var_count(n: usize) -> Result<()> {
    if n == 0 || n > MAX_VARS {
        return Err(Error::InvalidArgument(format!(
            "variable count {n} outside supported range 1..={MAX_VARS}"
        )));
    }
    Ok(())
}

fn check_same_n(a: Outcome, b: Outcome) -> Result<()> {
    if a.n != b.n {
        return Err(Error::VarCountMismatch {
            left: a.n(),
            right: b.n(),
        });
    }
    Ok(())
}

/// Partial order: `s <= x` iff `s` is a subset of `x`.
pub fn leq(s: Outcome, x: Outcome) -> Result<bool> {
    check_same_n(s, x)?;
    Ok(s.bits & x.bits == s.bits)
}

/// Zeta function: 1 if `s <= x`, else 0.
pub fn zeta(s: Outcome, x: Outcome) -> Result<u8> {
    Ok(leq(s, x)? as u8)
}

/// Moebius function, the convolution inverse of zeta. On the subset lattice it
/// has the closed form `(-1)^(|x| - |s|)` for `s <= x` and 0 otherwise; the
/// unit tests check this against the defining recursion.
pub fn mobius(s: Outcome, x: Outcome) -> Result<i64> {
    if !leq(s, x)? {
        return Ok(0);
    }
    let diff = x.order() - s.order();
    Ok(if diff % 2 == 0 { 1 } else { -1 })
}

/// The parameter index set of a k-th order model: every non-empty outcome with
/// cardinality at most `k`, in canonical order. Its length is
/// `C(n,1) + ... + C(n,k)`.
pub fn model_index_set(n: usize, k: usize) -> Result<Vec<Outcome>> {
    check_var_count(n)?;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "interaction order {k} outside supported range 1..={n}"
        )));
    }
    let lattice = Lattice::new(n)?;
    Ok(lattice
        .canonical_order()
        .into_iter()
        .filter(|x| !x.is_bottom() && x.order() as usize <= k)
        .collect())
}

/// Direction of a lattice transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Sum over the lower set: `g(x) = sum over s <= x`.
    Down,
    /// Sum over the upper set: `g(x) = sum over s >= x`.
    Up,
}

fn check_dense_len(len: usize) -> Result<usize> {
    if len.is_power_of_two() {
        let n = len.trailing_zeros() as usize;
        if (1..=MAX_VARS).contains(&n) {
            return Ok(n);
        }
    }
    Err(Error::InvalidLength { len })
}

/// In-place fast zeta transform over a mask-indexed dense vector.
///
/// `Down` computes subset sums, `Up` computes superset sums; both in O(n 2^n).
pub fn fast_zeta_transform(values: &mut [f64], direction: Direction) -> Result<()> {
    let n = check_dense_len(values.len())?;
    for j in 0..n {
        let bit = 1usize << j;
        match direction {
            Direction::Down => {
                for x in 0..values.len() {
                    if x & bit != 0 {
                        values[x] += values[x ^ bit];
                    }
                }
            }
            Direction::Up => {
                for x in 0..values.len() {
                    if x & bit == 0 {
                        values[x] += values[x | bit];
                    }
                }
            }
        }
    }
    Ok(())
}

/// In-place fast Moebius transform, the exact inverse of [`fast_zeta_transform`]
/// in the same direction.
pub fn fast_mobius_transform(values: &mut [f64], direction: Direction) -> Result<()> {
    let n = check_dense_len(values.len())?;
    for j in 0..n {
        let bit = 1usize << j;
        match direction {
            Direction::Down => {
                for x in 0..values.len() {
                    if x & bit != 0 {
                        values[x] -= values[x ^ bit];
                    }
                }
            }
            Direction::Up => {
                for x in 0..values.len() {
                    if x & bit == 0 {
                        values[x] -= values[x | bit];
                    }
                }
            }
        }
    }
    Ok(())
}
