//! Integration over the nested region `R_d`.
//!
//! Axis `i` runs over `[0, U_i]` with `U_i = P_i - (s_1 + ... + s_(i-1))`.
//! The deterministic integrator applies a Gauss-Legendre rule on every axis
//! and accumulates each level in log space, so integrands that span hundreds
//! of orders of magnitude neither overflow nor underflow. The Monte Carlo
//! integrator draws each `s_i` uniformly on its current interval and weights
//! by the product of interval lengths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::ProbabilityWeights;

pub const MIN_NODES: usize = 2;
pub const MAX_NODES: usize = 128;
pub const DEFAULT_NODES: usize = 48;
/// Largest `G^d` accepted by [`integrate_region`].
pub const MAX_EVALUATIONS: f64 = 1e8;
pub const MIN_REPLICATIONS: u64 = 1000;
/// Replications per independently seeded Monte Carlo stream.
pub const MC_CHUNK: u64 = 1 << 14;

/// Gauss-Legendre rule mapped to `[0, 1]`, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self> {
        if !(MIN_NODES..=MAX_NODES).contains(&order) {
            return Err(Error::NodeCount(order));
        }
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            for _ in 0..100 {
                let (value, deriv) = legendre_with_derivative(order, x);
                let step = value / deriv;
                x -= step;
                if step.abs() <= 1e-15 {
                    break;
                }
            }
            let (_, deriv) = legendre_with_derivative(order, x);
            let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
            // x is in (0, 1) and decreasing in i; map [-1, 1] -> [0, 1]
            nodes[order - 1 - i] = 0.5 * (1.0 + x);
            nodes[i] = 0.5 * (1.0 - x);
            weights[order - 1 - i] = 0.5 * w;
            weights[i] = 0.5 * w;
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `int_a^b f(x) dx`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(a + h * x))
            .sum::<f64>()
            * h
    }
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

pub fn legendre_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let rule = GaussLegendre::new(order)?;
    Ok((rule.nodes, rule.weights))
}

/// Deterministic rule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    pub nodes_per_axis: usize,
}

impl QuadratureSpec {
    pub fn new(nodes_per_axis: usize) -> Result<Self> {
        if !(MIN_NODES..=MAX_NODES).contains(&nodes_per_axis) {
            return Err(Error::NodeCount(nodes_per_axis));
        }
        Ok(Self { nodes_per_axis })
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_axis: DEFAULT_NODES,
        }
    }
}

/// Monte Carlo parameters. `(replications, seed)` fully determine an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloSpec {
    pub replications: u64,
    pub seed: u64,
}

impl MonteCarloSpec {
    pub fn new(replications: u64, seed: u64) -> Result<Self> {
        if replications < MIN_REPLICATIONS {
            return Err(Error::TooFewReplications(replications));
        }
        Ok(Self { replications, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub log_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub replications: u64,
    pub seed: u64,
}

/// Running log-sum-exp.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

struct Grid<'a, F> {
    prefix: &'a [f64],
    rule: &'a GaussLegendre,
    log_weights: Vec<f64>,
    logf: &'a F,
}

impl<F: Fn(&[f64]) -> f64> Grid<'_, F> {
    /// Log of the integral over axes `axis..d` with `s[..axis]` fixed.
    fn level(&self, axis: usize, used: f64, s: &mut [f64]) -> Result<f64> {
        let upper = self.prefix[axis] - used;
        if upper <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let last = axis + 1 == s.len();
        let mut acc = LogSum::new();
        for (x, lw) in self.rule.nodes().iter().zip(&self.log_weights) {
            s[axis] = upper * x;
            let inner = if last {
                let v = (self.logf)(s);
                if v.is_nan() || v == f64::INFINITY {
                    return Err(Error::NonFinite {
                        value: v,
                        node: s.to_vec(),
                    });
                }
                v
            } else {
                self.level(axis + 1, used + s[axis], s)?
            };
            acc.push(lw + inner);
        }
        Ok(acc.value() + upper.ln())
    }
}

/// Iterated Gauss-Legendre integral of `exp(logf)` over `R_d`.
///
/// `logf` receives the `d` free coordinates. A value of `-inf` is a genuine
/// zero; NaN or `+inf` at a node is an error. The outermost axis is split
/// across threads when the `parallel` feature is on, with the reduction done
/// in node order so results are bit-identical to the serial path.
pub fn integrate_region<F>(
    weights: &ProbabilityWeights,
    logf: F,
    spec: QuadratureSpec,
) -> Result<Integral>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let rule = GaussLegendre::new(spec.nodes_per_axis)?;
    let d = weights.dim();
    let cost = (spec.nodes_per_axis as f64).powi(d as i32);
    if cost > MAX_EVALUATIONS {
        return Err(Error::CostGuard {
            what: "quadrature",
            cost,
            limit: MAX_EVALUATIONS,
        });
    }
    let grid = Grid {
        prefix: weights.prefix(),
        rule: &rule,
        log_weights: rule.weights().iter().map(|w| w.ln()).collect(),
        logf: &logf,
    };
    let upper = weights.prefix()[0];

    let outer = |x: f64| -> Result<f64> {
        let mut s = vec![0.0; d];
        s[0] = upper * x;
        if d == 1 {
            let v = logf(&s);
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::NonFinite { value: v, node: s });
            }
            Ok(v)
        } else {
            grid.level(1, s[0], &mut s)
        }
    };

    #[cfg(feature = "parallel")]
    let inner: Vec<Result<f64>> = {
        use rayon::prelude::*;
        rule.nodes().par_iter().map(|&x| outer(x)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let inner: Vec<Result<f64>> = rule.nodes().iter().map(|&x| outer(x)).collect();

    let mut acc = LogSum::new();
    for (value, lw) in inner.into_iter().zip(&grid.log_weights) {
        acc.push(lw + value?);
    }
    let log_value = acc.value() + upper.ln();
    Ok(Integral {
        value: log_value.exp(),
        log_value,
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sum: f64,
    sum_sq: f64,
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Runs `body` on `replications` draws split into fixed-size chunks, each with
/// its own ChaCha stream, and combines the per-chunk moments in chunk order.
pub(crate) fn run_chunked<B>(spec: MonteCarloSpec, body: B) -> Result<(f64, f64)>
where
    B: Fn(&mut ChaCha8Rng, u64) -> Result<(f64, f64)> + Sync,
{
    let chunks = spec.replications.div_ceil(MC_CHUNK);
    let run = |c: u64| {
        let start = c * MC_CHUNK;
        let count = MC_CHUNK.min(spec.replications - start);
        let mut rng = chunk_rng(spec.seed, c);
        body(&mut rng, count)
    };

    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(f64, f64)>> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(f64, f64)>> = (0..chunks).map(run).collect();

    let mut total = Moments::default();
    for part in parts {
        let (sum, sum_sq) = part?;
        total.sum += sum;
        total.sum_sq += sum_sq;
    }
    Ok((total.sum, total.sum_sq))
}

/// Monte Carlo integral of `exp(logf)` over `R_d` by sequential conditional
/// uniform sampling. Each draw is weighted by `prod_i U_i(s_<i)`, the inverse
/// sampling density, so the estimator is unbiased.
pub fn integrate_region_mc<F>(
    weights: &ProbabilityWeights,
    logf: F,
    spec: MonteCarloSpec,
) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    MonteCarloSpec::new(spec.replications, spec.seed)?;
    let d = weights.dim();
    let prefix = weights.prefix();
    // values are scaled by exp(-shift) while accumulating
    let shift = {
        let at_p = logf(weights.p());
        if at_p.is_finite() {
            at_p
        } else {
            0.0
        }
    };

    let (sum, sum_sq) = run_chunked(spec, |rng, count| {
        let mut s = vec![0.0; d];
        let mut m = Moments::default();
        for _ in 0..count {
            let mut used = 0.0;
            let mut jacobian = 1.0;
            for i in 0..d {
                let upper = (prefix[i] - used).max(0.0);
                s[i] = upper * rng.gen::<f64>();
                jacobian *= upper;
                used += s[i];
            }
            let v = logf(&s);
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::NonFinite {
                    value: v,
                    node: s.clone(),
                });
            }
            let value = (v - shift).exp() * jacobian;
            m.sum += value;
            m.sum_sq += value * value;
        }
        Ok((m.sum, m.sum_sq))
    })?;

    let r = spec.replications as f64;
    let mean = sum / r;
    let var = ((sum_sq - r * mean * mean) / (r - 1.0)).max(0.0);
    let scale = shift.exp();
    Ok(McEstimate {
        estimate: mean * scale,
        stderr: (var / r).sqrt() * scale,
        replications: spec.replications,
        seed: spec.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_point_rule() {
        let (x, w) = legendre_rule(2).unwrap();
        let r3 = 3f64.sqrt();
        assert_relative_eq!(x[0], (3.0 - r3) / 6.0, epsilon = 1e-15);
        assert_relative_eq!(x[1], (3.0 + r3) / 6.0, epsilon = 1e-15);
        assert_relative_eq!(w[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.5, epsilon = 1e-15);
        let rule = GaussLegendre::new(2).unwrap();
        assert_relative_eq!(rule.integrate(0.0, 1.0, |x| x.powi(3)), 0.25, epsilon = 1e-16);
    }

    #[test]
    fn rules_are_well_formed() {
        for g in [2, 3, 7, 16, 48, 64, 127, 128] {
            let rule = GaussLegendre::new(g).unwrap();
            let total: f64 = rule.weights().iter().sum();
            assert!((total - 1.0).abs() <= 1e-15 * g as f64, "G = {g}: {total}");
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            assert!(rule.nodes().iter().all(|&x| x > 0.0 && x < 1.0));
            assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
            // exact through degree 2G - 1
            let deg = 2 * g - 1;
            let got = rule.integrate(0.0, 1.0, |x| (deg as f64 + 1.0) * x.powi(deg as i32));
            assert!((got - 1.0).abs() < 1e-13, "G = {g}: {got}");
        }
        assert_eq!(GaussLegendre::new(1), Err(Error::NodeCount(1)));
        assert_eq!(GaussLegendre::new(129), Err(Error::NodeCount(129)));
    }

    #[test]
    fn region_measure() {
        let w = ProbabilityWeights::new(vec![0.3]).unwrap();
        let r = integrate_region(&w, |_| 0.0, QuadratureSpec::new(4).unwrap()).unwrap();
        assert_relative_eq!(r.value, 0.3, epsilon = 1e-15);

        let w = ProbabilityWeights::new(vec![0.3, 0.3]).unwrap();
        let r = integrate_region(&w, |_| 0.0, QuadratureSpec::new(4).unwrap()).unwrap();
        assert_relative_eq!(r.value, 0.135, epsilon = 1e-15);
        assert_relative_eq!(r.log_value, 0.135f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn zero_integrand_and_errors() {
        let w = ProbabilityWeights::new(vec![0.3, 0.3]).unwrap();
        let spec = QuadratureSpec::new(4).unwrap();
        let r = integrate_region(&w, |_| f64::NEG_INFINITY, spec).unwrap();
        assert_eq!(r.value, 0.0);
        let err = integrate_region(&w, |_| f64::NAN, spec).unwrap_err();
        assert!(matches!(err, Error::NonFinite { ref node, .. } if node.len() == 2));

        let w6 = ProbabilityWeights::new(vec![0.1; 6]).unwrap();
        let err = integrate_region(&w6, |_| 0.0, QuadratureSpec::new(30).unwrap()).unwrap_err();
        assert!(matches!(err, Error::CostGuard { .. }));
    }

    #[test]
    fn log_space_survives_extreme_scale() {
        let w = ProbabilityWeights::new(vec![0.3]).unwrap();
        let spec = QuadratureSpec::new(8).unwrap();
        let r = integrate_region(&w, |_| 1000.0, spec).unwrap();
        assert_relative_eq!(r.log_value, 1000.0 + 0.3f64.ln(), epsilon = 1e-12);
        assert!(r.value.is_infinite());
    }

    #[test]
    fn mc_region_measure() {
        let w = ProbabilityWeights::new(vec![0.3, 0.3]).unwrap();
        let a = integrate_region_mc(&w, |_| 0.0, MonteCarloSpec::new(100_000, 1).unwrap()).unwrap();
        let b = integrate_region_mc(&w, |_| 0.0, MonteCarloSpec::new(100_000, 2).unwrap()).unwrap();
        assert!((a.estimate - 0.135).abs() <= 4.0 * a.stderr);
        assert!((b.estimate - 0.135).abs() <= 4.0 * b.stderr);
        assert_ne!(a.estimate, b.estimate);
        let combined = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.estimate - b.estimate).abs() <= 4.0 * combined);

        let again = integrate_region_mc(&w, |_| 0.0, MonteCarloSpec::new(100_000, 1).unwrap()).unwrap();
        assert_eq!(a, again);
        assert!(MonteCarloSpec::new(999, 1).is_err());
    }
}
