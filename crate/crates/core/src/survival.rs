//! The four routes to `P(X_1 + ... + X_i >= kappa_i for all i)` and the
//! report comparing them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::expansions::{ln_factorial, DirichletIntegrand, ExpansionContext};
use crate::model::SurvivalInstance;
use crate::quadrature::{
    integrate_region, run_chunked, McEstimate, MonteCarloSpec, QuadratureSpec,
};

/// Largest number of lattice points `C(n + d, d)` enumerated by [`survival_exact`].
pub const MAX_LATTICE_POINTS: f64 = 1e7;

#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    compensation: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }
}

fn lattice_points(n: u64, d: usize) -> f64 {
    (1..=d).fold(1.0, |acc, i| acc * (n as f64 + i as f64) / i as f64)
}

struct Enumeration<'a> {
    n: u64,
    kappa: &'a [u64],
    ln_fact: Vec<f64>,
    ln_p: Vec<f64>,
    ln_last: f64,
    acc: Kahan,
}

impl Enumeration<'_> {
    fn visit(&mut self, axis: usize, used: u64, log_term: f64) {
        if axis == self.kappa.len() {
            let rest = self.n - used;
            let term = log_term - self.ln_fact[rest as usize] + rest as f64 * self.ln_last;
            self.acc.add(term.exp());
            return;
        }
        let lo = self.kappa[axis].saturating_sub(used);
        for x in lo..=(self.n - used) {
            let next = log_term - self.ln_fact[x as usize] + x as f64 * self.ln_p[axis];
            self.visit(axis + 1, used + x, next);
        }
    }
}

/// Sums the multinomial pmf over every `x` with `x_1 + ... + x_i >= kappa_i`,
/// in log space with compensated summation.
pub fn survival_exact(instance: &SurvivalInstance) -> Result<f64> {
    if instance.is_impossible() {
        return Ok(0.0);
    }
    if instance.thresholds().total() == 0 {
        // every lattice point qualifies
        return Ok(1.0);
    }
    let n = instance.n();
    let d = instance.dim();
    let cost = lattice_points(n, d);
    if cost > MAX_LATTICE_POINTS {
        return Err(Error::CostGuard {
            what: "enumeration",
            cost,
            limit: MAX_LATTICE_POINTS,
        });
    }
    let weights = instance.weights();
    let mut walk = Enumeration {
        n,
        kappa: instance.thresholds().kappa(),
        ln_fact: (0..=n).map(ln_factorial).collect(),
        ln_p: weights.p().iter().map(|p| p.ln()).collect(),
        ln_last: weights.last().ln(),
        acc: Kahan::default(),
    };
    let start = walk.ln_fact[n as usize];
    walk.visit(0, 0, start);
    Ok(walk.acc.sum)
}

/// Integral of the Dirichlet-type density over `R_d`. Needs every `k_i >= 1`
/// and `N >= 1`; an impossible event short-circuits to zero.
pub fn survival_dirichlet(instance: &SurvivalInstance, spec: QuadratureSpec) -> Result<f64> {
    if instance.is_impossible() {
        return Ok(0.0);
    }
    let integrand = DirichletIntegrand::new(instance)?;
    let integral = integrate_region(instance.weights(), |s| integrand.log_eval(s), spec)?;
    Ok(integral.value)
}

/// `e^{Delta_N} int_{R_d} exp(N gamma_star(s)) N^{d/2} phi(sqrt(N)(p - s + eps_tilde)) ds`.
/// Needs every `J_i >= 1`; an impossible event short-circuits to zero.
pub fn survival_gaussian(instance: &SurvivalInstance, spec: QuadratureSpec) -> Result<f64> {
    if instance.is_impossible() {
        return Ok(0.0);
    }
    instance.require_dirichlet()?;
    let ctx = ExpansionContext::new(instance)?;
    let integral = integrate_region(instance.weights(), |s| ctx.log_gaussian_integrand(s), spec)?;
    Ok(integral.value)
}

/// Cell of a uniform draw: the first `i` with `u <= P_i`, or `d` for the last cell.
fn cell_of(prefix: &[f64], u: f64) -> usize {
    prefix.iter().position(|&bound| u <= bound).unwrap_or(prefix.len())
}

/// Frequency of the event over `replications` samples of `n` uniforms:
/// `U_(kappa_i) <= P_i` for every `i`, i.e. at least `kappa_i` draws at or
/// below `P_i`.
pub fn survival_mc(instance: &SurvivalInstance, spec: MonteCarloSpec) -> Result<McEstimate> {
    MonteCarloSpec::new(spec.replications, spec.seed)?;
    let prefix = instance.weights().prefix();
    let kappa = instance.thresholds().kappa();
    let n = instance.n();
    let d = instance.dim();

    let (hits, _) = run_chunked(spec, |rng, count| {
        let mut counts = vec![0u64; d + 1];
        let mut hits = 0.0;
        for _ in 0..count {
            counts.iter_mut().for_each(|c| *c = 0);
            for _ in 0..n {
                counts[cell_of(prefix, rng.gen::<f64>())] += 1;
            }
            let mut cumulative = 0;
            let ok = kappa.iter().zip(&counts).all(|(&kap, &c)| {
                cumulative += c;
                cumulative >= kap
            });
            if ok {
                hits += 1.0;
            }
        }
        Ok((hits, hits))
    })?;

    let r = spec.replications as f64;
    let estimate = hits / r;
    Ok(McEstimate {
        estimate,
        stderr: (estimate * (1.0 - estimate) / r).sqrt(),
        replications: spec.replications,
        seed: spec.seed,
    })
}

/// Outcome of one route in a [`RouteReport`].
#[derive(Debug, Clone, PartialEq)]
pub enum RouteValue<T> {
    Value(T),
    Inapplicable(String),
    /// Not requested.
    Skipped,
}

impl<T> RouteValue<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            RouteValue::Value(v) => Some(v),
            _ => None,
        }
    }
}

/// Which routes [`evaluate_routes`] runs. Monte Carlo runs only when given a spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteSelection {
    pub exact: bool,
    pub dirichlet: bool,
    pub gaussian: bool,
    pub mc: Option<MonteCarloSpec>,
}

impl RouteSelection {
    pub fn all(mc: Option<MonteCarloSpec>) -> Self {
        Self {
            exact: true,
            dirichlet: true,
            gaussian: true,
            mc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteReport {
    pub n: u64,
    pub p: Vec<f64>,
    pub k: Vec<u64>,
    pub exact: RouteValue<f64>,
    pub dirichlet: RouteValue<f64>,
    pub gaussian: RouteValue<f64>,
    pub mc: RouteValue<McEstimate>,
    pub delta_n: Option<f64>,
    pub gamma_tilde: Option<f64>,
    /// Largest pairwise relative difference among the deterministic routes
    /// that produced a value; zero when fewer than two did.
    pub max_rel_diff: f64,
    pub nodes: usize,
    pub tolerance: Option<f64>,
}

impl RouteReport {
    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn deterministic_values(&self) -> Vec<f64> {
        [&self.exact, &self.dirichlet, &self.gaussian]
            .into_iter()
            .filter_map(|r| r.value().copied())
            .collect()
    }
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn max_pairwise(values: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, &a) in values.iter().enumerate() {
        for &b in &values[i + 1..] {
            worst = worst.max(relative_difference(a, b));
        }
    }
    worst
}

fn pick<T>(wanted: bool, f: impl FnOnce() -> RouteValue<T>) -> RouteValue<T> {
    if wanted {
        f()
    } else {
        RouteValue::Skipped
    }
}

/// Runs the selected routes on `instance` after merging away zero thresholds.
/// Inapplicable routes are recorded with a reason; only cost guards and
/// invalid Monte Carlo parameters abort.
pub fn evaluate_routes(
    instance: &SurvivalInstance,
    routes: RouteSelection,
    spec: QuadratureSpec,
) -> Result<RouteReport> {
    let mut report = RouteReport {
        n: instance.n(),
        p: instance.weights().p().to_vec(),
        k: instance.thresholds().k().to_vec(),
        exact: RouteValue::Skipped,
        dirichlet: RouteValue::Skipped,
        gaussian: RouteValue::Skipped,
        mc: RouteValue::Skipped,
        delta_n: None,
        gamma_tilde: None,
        max_rel_diff: 0.0,
        nodes: spec.nodes_per_axis,
        tolerance: None,
    };
    if let Some(mc) = routes.mc {
        MonteCarloSpec::new(mc.replications, mc.seed)?;
    }

    let reduced = instance.reduced()?;
    let constant = match &reduced {
        None => Some(1.0),
        Some(r) if r.is_impossible() => Some(0.0),
        Some(_) => None,
    };

    if let Some(value) = constant {
        report.exact = pick(routes.exact, || RouteValue::Value(value));
        report.dirichlet = pick(routes.dirichlet, || RouteValue::Value(value));
        report.gaussian = pick(routes.gaussian, || RouteValue::Value(value));
        if let Some(mc) = routes.mc {
            report.mc = RouteValue::Value(McEstimate {
                estimate: value,
                stderr: 0.0,
                replications: mc.replications,
                seed: mc.seed,
            });
        }
        report.max_rel_diff = max_pairwise(&report.deterministic_values());
        return Ok(report);
    }
    let r = reduced.expect("non-constant case has a reduced instance");

    if routes.exact {
        report.exact = RouteValue::Value(survival_exact(&r)?);
    }
    if routes.dirichlet {
        report.dirichlet = if r.big_n() <= 0 {
            RouteValue::Inapplicable("N <= 0".into())
        } else {
            RouteValue::Value(survival_dirichlet(&r, spec)?)
        };
    }
    if routes.gaussian {
        report.gaussian = if r.big_n() <= 0 {
            RouteValue::Inapplicable("N <= 0".into())
        } else if !r.gaussian_eligible() {
            RouteValue::Inapplicable("J_i = 0".into())
        } else {
            RouteValue::Value(survival_gaussian(&r, spec)?)
        };
    }
    if let Some(mc) = routes.mc {
        report.mc = RouteValue::Value(survival_mc(&r, mc)?);
    }
    if let Ok(ctx) = ExpansionContext::new(&r) {
        report.delta_n = Some(ctx.delta_n());
        report.gamma_tilde = Some(ctx.gamma_tilde());
    }
    report.max_rel_diff = max_pairwise(&report.deterministic_values());
    Ok(report)
}

/// Every route, with Monte Carlo when `mc` is given.
pub fn compare_routes(
    instance: &SurvivalInstance,
    spec: QuadratureSpec,
    mc: Option<MonteCarloSpec>,
) -> Result<RouteReport> {
    evaluate_routes(instance, RouteSelection::all(mc), spec)
}
