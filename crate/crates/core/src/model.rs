//! Problem instances `(n, p, k)` and the quantities derived from them.
//!
//! Indices are zero-based throughout: axis `i` of a `d`-dimensional instance
//! runs over `0..d`, and the implicit last cell has index `d`.

use crate::error::{Error, Result};

/// Weights `p_1, ..., p_d` of a multinomial with an implicit `(d+1)`-th cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityWeights {
    p: Vec<f64>,
    last: f64,
    prefix: Vec<f64>,
}

impl ProbabilityWeights {
    /// Minimum admissible value for every weight, including the implicit one.
    pub const MARGIN: f64 = 1e-12;

    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::EmptyWeights);
        }
        for (index, &value) in p.iter().enumerate() {
            if !value.is_finite() || value <= Self::MARGIN {
                return Err(Error::InvalidWeight {
                    index,
                    value,
                    margin: Self::MARGIN,
                });
            }
        }
        let mut prefix = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        for &value in &p {
            acc += value;
            prefix.push(acc);
        }
        let last = 1.0 - acc;
        if last <= Self::MARGIN {
            return Err(Error::WeightSum {
                sum: acc,
                last,
                margin: Self::MARGIN,
            });
        }
        Ok(Self { p, last, prefix })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// `p_(d+1) = 1 - (p_1 + ... + p_d)`.
    pub fn last(&self) -> f64 {
        self.last
    }

    /// Cumulative bounds `P_i = p_1 + ... + p_i`.
    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    /// Weight of cell `i` for `i` in `0..=d`; `i == d` is the implicit cell.
    pub fn weight(&self, i: usize) -> f64 {
        if i == self.p.len() {
            self.last
        } else {
            self.p[i]
        }
    }

    /// All `d + 1` weights.
    pub fn full(&self) -> impl Iterator<Item = f64> + '_ {
        self.p.iter().copied().chain(std::iter::once(self.last))
    }

    /// Membership in the region `R_d`: `s >= 0` and `s_1 + ... + s_i <= P_i` for every `i`.
    pub fn region_contains(&self, s: &[f64]) -> Result<bool> {
        self.check_len("s", s.len())?;
        let mut acc = 0.0;
        for (i, &si) in s.iter().enumerate() {
            if si < 0.0 {
                return Ok(false);
            }
            acc += si;
            if acc > self.prefix[i] {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Upper integration limit `U_i = P_i - (s_1 + ... + s_(i-1))` for axis `axis`,
    /// given the coordinates already fixed on the earlier axes.
    pub fn nested_upper_limit(&self, axis: usize, s_prefix: &[f64]) -> Result<f64> {
        if axis >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: axis,
                dim: self.dim(),
            });
        }
        if s_prefix.len() != axis {
            return Err(Error::DimensionMismatch {
                what: "fixed prefix",
                expected: axis,
                got: s_prefix.len(),
            });
        }
        let mut used = 0.0;
        for (k, &sk) in s_prefix.iter().enumerate() {
            used += sk;
            if sk < 0.0 || used > self.prefix[k] {
                return Err(Error::OutsideRegion { axis: k });
            }
        }
        Ok(self.prefix[axis] - used)
    }

    pub(crate) fn check_len(&self, what: &'static str, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// Thresholds `k` and their cumulative sums `kappa_i = k_1 + ... + k_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thresholds {
    k: Vec<u64>,
    kappa: Vec<u64>,
}

impl Thresholds {
    pub fn new(k: Vec<u64>) -> Self {
        let kappa = k
            .iter()
            .scan(0u64, |acc, &ki| {
                *acc = acc.saturating_add(ki);
                Some(*acc)
            })
            .collect();
        Self { k, kappa }
    }

    pub fn k(&self) -> &[u64] {
        &self.k
    }

    pub fn kappa(&self) -> &[u64] {
        &self.kappa
    }

    pub fn total(&self) -> u64 {
        self.kappa.last().copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }
}

/// A fully derived instance: `N = n - d`, the gaps `j`, `J = j - 1` and the
/// relative deviations `eps`, `eps_tilde` of `J / N` from `p`.
///
/// `j`, `big_j`, `eps` and `eps_tilde` have `d + 1` entries. When `N <= 0`
/// the deviation vectors are empty and the instance is enumeration-only.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalInstance {
    n: u64,
    weights: ProbabilityWeights,
    thresholds: Thresholds,
    big_n: i64,
    j: Vec<i64>,
    big_j: Vec<i64>,
    eps: Vec<f64>,
    eps_tilde: Vec<f64>,
}

impl SurvivalInstance {
    pub fn new(n: u64, weights: ProbabilityWeights, thresholds: Thresholds) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroSampleSize);
        }
        weights.check_len("k", thresholds.len())?;
        let d = weights.dim();
        let big_n = n as i64 - d as i64;

        let mut j = Vec::with_capacity(d + 1);
        let mut previous = 0i64;
        for &kappa in thresholds.kappa() {
            let kappa = kappa as i64;
            j.push(kappa - previous);
            previous = kappa;
        }
        j.push(n as i64 + 1 - previous);
        let big_j: Vec<i64> = j.iter().map(|&ji| ji - 1).collect();

        let (eps, eps_tilde) = if big_n > 0 {
            let scale = big_n as f64;
            let eps: Vec<f64> = big_j
                .iter()
                .zip(weights.full())
                .map(|(&ji, pi)| (ji as f64 / scale - pi) / pi)
                .collect();
            let eps_tilde = eps.iter().zip(weights.full()).map(|(e, pi)| pi * e).collect();
            (eps, eps_tilde)
        } else {
            (Vec::new(), Vec::new())
        };

        Ok(Self {
            n,
            weights,
            thresholds,
            big_n,
            j,
            big_j,
            eps,
            eps_tilde,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    pub fn weights(&self) -> &ProbabilityWeights {
        &self.weights
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    /// `N = n - d`.
    pub fn big_n(&self) -> i64 {
        self.big_n
    }

    pub fn gaps(&self) -> &[i64] {
        &self.j
    }

    /// `J_i = j_i - 1`, summing to `N`.
    pub fn big_j(&self) -> &[i64] {
        &self.big_j
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn eps_tilde(&self) -> &[f64] {
        &self.eps_tilde
    }

    /// `kappa_d > n`: the event is impossible.
    pub fn is_impossible(&self) -> bool {
        self.thresholds.total() > self.n
    }

    pub fn is_enumeration_only(&self) -> bool {
        self.big_n <= 0
    }

    /// Every gap `j_i >= 1` and `N >= 1`, as the Dirichlet representation needs.
    pub fn dirichlet_eligible(&self) -> bool {
        self.big_n > 0 && self.j.iter().all(|&ji| ji >= 1)
    }

    /// Every `J_i >= 1` and `N >= 1`, as the Gaussian representation needs.
    pub fn gaussian_eligible(&self) -> bool {
        self.big_n > 0 && self.big_j.iter().all(|&ji| ji >= 1)
    }

    /// First reason the Dirichlet route cannot run on this instance as is.
    pub(crate) fn require_dirichlet(&self) -> Result<()> {
        if self.is_impossible() {
            return Err(Error::ImpossibleEvent {
                total: self.thresholds.total(),
                n: self.n,
            });
        }
        if let Some(index) = self.thresholds.k().iter().position(|&ki| ki == 0) {
            return Err(Error::UnreducedThresholds { index });
        }
        if self.big_n <= 0 {
            return Err(Error::NonPositiveN(self.big_n));
        }
        Ok(())
    }

    /// First reason the Gaussian route cannot run on this instance as is.
    pub(crate) fn require_gaussian(&self) -> Result<()> {
        if self.is_impossible() {
            return Err(Error::ImpossibleEvent {
                total: self.thresholds.total(),
                n: self.n,
            });
        }
        if self.big_n <= 0 {
            return Err(Error::NonPositiveN(self.big_n));
        }
        if let Some(index) = self.big_j.iter().position(|&ji| ji < 1) {
            return Err(Error::ZeroGap {
                index,
                value: self.big_j[index],
            });
        }
        Ok(())
    }

    /// The equivalent instance with every zero threshold merged away, or
    /// `None` when all thresholds are zero (probability one).
    pub fn reduced(&self) -> Result<Option<SurvivalInstance>> {
        let (p, k) = reduce_thresholds(self.weights.p(), self.thresholds.k());
        if k.is_empty() {
            return Ok(None);
        }
        if k.len() == self.dim() {
            return Ok(Some(self.clone()));
        }
        SurvivalInstance::new(self.n, ProbabilityWeights::new(p)?, Thresholds::new(k)).map(Some)
    }
}

/// Validates `(n, p, k)` and derives every instance quantity.
pub fn build_instance(n: u64, p: &[f64], k: &[u64]) -> Result<SurvivalInstance> {
    let weights = ProbabilityWeights::new(p.to_vec())?;
    SurvivalInstance::new(n, weights, Thresholds::new(k.to_vec()))
}

/// Removes every zero threshold. A zero `k_i` makes constraint `i` redundant,
/// so its weight is merged into the next cell; a trailing zero is dropped
/// (its weight joins the implicit last cell).
pub fn reduce_thresholds(p: &[f64], k: &[u64]) -> (Vec<f64>, Vec<u64>) {
    let mut out_p = Vec::with_capacity(p.len());
    let mut out_k = Vec::with_capacity(k.len());
    let mut carry = 0.0;
    for (&pi, &ki) in p.iter().zip(k) {
        carry += pi;
        if ki > 0 {
            out_p.push(carry);
            out_k.push(ki);
            carry = 0.0;
        }
    }
    (out_p, out_k)
}
