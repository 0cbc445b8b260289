//! Scalar kernels behind the Gaussian representation: Stirling errors,
//! `Lambda_N`, `Delta_N`, `gamma_tilde`, `gamma_star`, the concave function
//! `H`, and the two log-integrands whose pointwise equality carries the
//! representation.
//!
//! All `d + 1`-vectors (`J`, `eps`, `eps_tilde`, full points) list the implicit
//! last cell at index `d`. Points `s` passed in have `d` coordinates and
//! `s_(d+1) = 1 - sum s_i`.
//!
//! The Stirling error of the *cell counts* `J_i!` enters `Lambda_N`, i.e.
//! `Lambda_N = lambda_N - sum_i lambda_(J_i)`.

use std::f64::consts::PI;

use crate::covariance::CovarianceStructure;
use crate::error::{Error, Result};
use crate::model::{ProbabilityWeights, SurvivalInstance};

/// Largest `m` whose factorial is handled by exact products.
const EXACT_FACTORIAL_MAX: u64 = 20;

/// `B_2k / (2k (2k - 1))` for `k = 1..=6`.
const STIRLING_SERIES: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
];

fn exact_factorial(m: u64) -> f64 {
    debug_assert!(m <= EXACT_FACTORIAL_MAX);
    (2..=m).product::<u64>() as f64
}

fn stirling_series(m: f64) -> f64 {
    let inv = 1.0 / m;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    let mut power = inv;
    for c in STIRLING_SERIES {
        acc += c * power;
        power *= inv2;
    }
    acc
}

/// `ln(m!)`; exact products up to `m = 20`, Stirling with its asymptotic
/// correction series beyond.
pub fn ln_factorial(m: u64) -> f64 {
    if m <= EXACT_FACTORIAL_MAX {
        exact_factorial(m).ln()
    } else {
        let x = m as f64;
        0.5 * (2.0 * PI * x).ln() + x * x.ln() - x + stirling_series(x)
    }
}

/// Stirling error `lambda_m = ln(m!) - ln(2 pi m)/2 - m ln m + m`,
/// which satisfies `1/(12m + 1) <= lambda_m <= 1/(12m)`.
pub fn stirling_lambda(m: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::StirlingAtZero);
    }
    if m <= EXACT_FACTORIAL_MAX {
        let x = m as f64;
        Ok(exact_factorial(m).ln() - 0.5 * (2.0 * PI * x).ln() - x * x.ln() + x)
    } else {
        // The difference form cancels about log10(m ln m) digits, so large m
        // uses the series directly.
        Ok(stirling_series(m as f64))
    }
}

/// Precomputed Gaussian-route quantities of an instance with `N >= 1` and
/// every `J_i >= 1`. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct ExpansionContext {
    instance: SurvivalInstance,
    cov: CovarianceStructure,
    lambda_n: f64,
    lambda_j: Vec<f64>,
    capital_lambda: f64,
    gamma_tilde: f64,
    delta_n: f64,
    /// `J_i / N = p_i (1 + eps_i)`.
    freq: Vec<f64>,
    ln_p: Vec<f64>,
    eps_tilde_sum: f64,
    big_n: f64,
    log_const: f64,
}

impl ExpansionContext {
    pub fn new(instance: &SurvivalInstance) -> Result<Self> {
        instance.require_gaussian()?;
        let cov = CovarianceStructure::new(instance.weights());
        let big_n = instance.big_n() as u64;
        let lambda_n = stirling_lambda(big_n)?;
        let lambda_j = instance
            .big_j()
            .iter()
            .map(|&j| stirling_lambda(j as u64))
            .collect::<Result<Vec<_>>>()?;
        let capital_lambda = lambda_n - lambda_j.iter().sum::<f64>();
        let gamma_tilde = gamma_tilde_unchecked(&cov, instance.eps_tilde());

        let d = instance.dim();
        let nf = big_n as f64;
        let log_ratio: f64 = (1..=d).map(|i| (i as f64 / nf).ln_1p()).sum();
        let half_log_jac: f64 = 0.5 * instance.eps().iter().map(|e| e.ln_1p()).sum::<f64>();
        let delta_n = log_ratio + capital_lambda - half_log_jac - nf * gamma_tilde;

        let freq = instance.big_j().iter().map(|&j| j as f64 / nf).collect();
        let ln_p = instance.weights().full().map(f64::ln).collect();
        let eps_tilde_sum = instance.eps_tilde()[..d].iter().sum();
        let log_const = delta_n + 0.5 * d as f64 * nf.ln() + cov.log_normalizer();

        Ok(Self {
            instance: instance.clone(),
            cov,
            lambda_n,
            lambda_j,
            capital_lambda,
            gamma_tilde,
            delta_n,
            freq,
            ln_p,
            eps_tilde_sum,
            big_n: nf,
            log_const,
        })
    }

    pub fn instance(&self) -> &SurvivalInstance {
        &self.instance
    }

    pub fn covariance(&self) -> &CovarianceStructure {
        &self.cov
    }

    pub fn lambda_n(&self) -> f64 {
        self.lambda_n
    }

    /// `lambda_(J_i)` for the `d + 1` cells.
    pub fn lambda_j(&self) -> &[f64] {
        &self.lambda_j
    }

    pub fn capital_lambda(&self) -> f64 {
        self.capital_lambda
    }

    pub fn gamma_tilde(&self) -> f64 {
        self.gamma_tilde
    }

    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }

    /// `Delta_N + N gamma_star(s) + (d/2) ln N + ln phi(sqrt(N) (p - s + eps_tilde))`
    /// in a single pass. Returns NaN outside the open simplex.
    pub fn log_gaussian_integrand(&self, s: &[f64]) -> f64 {
        let p = self.instance.weights().p();
        let eps_tilde = self.instance.eps_tilde();
        let d = p.len();

        let mut entropy = 0.0;
        let mut cross = 0.0;
        let mut quad = 0.0;
        let mut shifted = 0.0;
        let mut sum_s = 0.0;
        let mut sum_delta = 0.0;
        for i in 0..d {
            let delta = s[i] - p[i];
            let inv = 1.0 / p[i];
            entropy += self.freq[i] * (s[i].ln() - self.ln_p[i]);
            cross += eps_tilde[i] * delta * inv;
            quad += delta * delta * inv;
            let y = eps_tilde[i] - delta;
            shifted += y * y * inv;
            sum_s += s[i];
            sum_delta += delta;
        }
        let s_last = 1.0 - sum_s;
        let inv_last = 1.0 / self.instance.weights().last();
        entropy += self.freq[d] * (s_last.ln() - self.ln_p[d]);
        cross += self.eps_tilde_sum * sum_delta * inv_last;
        quad += sum_delta * sum_delta * inv_last;
        let y_sum = self.eps_tilde_sum - sum_delta;
        shifted += y_sum * y_sum * inv_last;

        let gamma_star = entropy - (cross - 0.5 * quad);
        self.log_const + self.big_n * gamma_star - 0.5 * self.big_n * shifted
    }
}

/// Log of the Dirichlet-type integrand `n! / prod J_i! * prod s_i^(J_i)`,
/// prepared once per instance.
#[derive(Debug, Clone)]
pub struct DirichletIntegrand {
    log_const: f64,
    exponents: Vec<f64>,
}

impl DirichletIntegrand {
    pub fn new(instance: &SurvivalInstance) -> Result<Self> {
        instance.require_dirichlet()?;
        let big_n = instance.big_n() as u64;
        let d = instance.dim() as u64;
        let log_const = ln_factorial(big_n + d)
            - instance
                .big_j()
                .iter()
                .map(|&j| ln_factorial(j as u64))
                .sum::<f64>();
        let exponents = instance.big_j().iter().map(|&j| j as f64).collect();
        Ok(Self {
            log_const,
            exponents,
        })
    }

    pub fn log_const(&self) -> f64 {
        self.log_const
    }

    /// Zero exponents contribute exactly zero, even on the boundary.
    pub fn log_eval(&self, s: &[f64]) -> f64 {
        let d = s.len();
        let mut acc = self.log_const;
        let mut sum_s = 0.0;
        for (si, &e) in s.iter().zip(&self.exponents) {
            sum_s += si;
            if e != 0.0 {
                acc += e * si.ln();
            }
        }
        let e = self.exponents[d];
        if e != 0.0 {
            acc += e * (1.0 - sum_s).ln();
        }
        acc
    }
}

fn require_deviations(instance: &SurvivalInstance) -> Result<()> {
    if instance.big_n() <= 0 {
        return Err(Error::NonPositiveN(instance.big_n()));
    }
    Ok(())
}

/// Returns `(s_1, ..., s_d, s_(d+1))` after checking every coordinate is positive.
fn interior_point(weights: &ProbabilityWeights, s: &[f64]) -> Result<Vec<f64>> {
    weights.check_len("s", s.len())?;
    let mut full = Vec::with_capacity(s.len() + 1);
    full.extend_from_slice(s);
    full.push(1.0 - s.iter().sum::<f64>());
    if let Some(coordinate) = full.iter().position(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::NotInterior { coordinate });
    }
    Ok(full)
}

/// `Lambda_N = lambda_N - sum_i lambda_(J_i)`.
pub fn capital_lambda(instance: &SurvivalInstance) -> Result<f64> {
    instance.require_gaussian()?;
    let mut acc = stirling_lambda(instance.big_n() as u64)?;
    for &j in instance.big_j() {
        acc -= stirling_lambda(j as u64)?;
    }
    Ok(acc)
}

fn gamma_tilde_unchecked(cov: &CovarianceStructure, eps_tilde: &[f64]) -> f64 {
    let d = cov.dim();
    let entropy: f64 = cov
        .weights()
        .full()
        .zip(eps_tilde)
        .map(|(pi, &et)| {
            let e = et / pi;
            pi * (1.0 + e) * e.ln_1p()
        })
        .sum();
    entropy - 0.5 * cov.bilinear_unchecked(&eps_tilde[..d], &eps_tilde[..d])
}

/// `gamma_tilde = sum p_i (1 + eps_i) ln(1 + eps_i) - eps_tilde^T Sigma^{-1} eps_tilde / 2`.
pub fn gamma_tilde(instance: &SurvivalInstance) -> Result<f64> {
    instance.require_gaussian()?;
    let cov = CovarianceStructure::new(instance.weights());
    Ok(gamma_tilde_unchecked(&cov, instance.eps_tilde()))
}

fn check_deviation(weights: &ProbabilityWeights, eps_tilde: &[f64]) -> Result<()> {
    if eps_tilde.len() != weights.dim() + 1 {
        return Err(Error::DimensionMismatch {
            what: "eps_tilde",
            expected: weights.dim() + 1,
            got: eps_tilde.len(),
        });
    }
    if let Some(coordinate) = weights
        .full()
        .zip(eps_tilde)
        .position(|(pi, &et)| (pi + et).is_nan() || pi + et <= 0.0)
    {
        return Err(Error::NotInterior { coordinate });
    }
    Ok(())
}

/// `gamma_tilde` at an arbitrary deviation vector `eps_tilde` (`d + 1`
/// entries). Used to probe the remainder of the series along `t * eps_tilde`.
pub fn gamma_tilde_at(weights: &ProbabilityWeights, eps_tilde: &[f64]) -> Result<f64> {
    check_deviation(weights, eps_tilde)?;
    Ok(gamma_tilde_unchecked(&CovarianceStructure::new(weights), eps_tilde))
}

/// Cubic plus quartic terms of the expansion of `gamma_tilde` in `eps_tilde`.
pub fn gamma_tilde_series_at(weights: &ProbabilityWeights, eps_tilde: &[f64]) -> Result<f64> {
    check_deviation(weights, eps_tilde)?;
    let d = weights.dim();
    let last = weights.last();
    let head = &eps_tilde[..d];
    let sum: f64 = head.iter().sum();
    let cubic: f64 = head
        .iter()
        .zip(weights.p())
        .map(|(e, p)| e.powi(3) / (p * p))
        .sum::<f64>()
        - sum.powi(3) / (last * last);
    let quartic: f64 = head
        .iter()
        .zip(weights.p())
        .map(|(e, p)| e.powi(4) / p.powi(3))
        .sum::<f64>()
        + sum.powi(4) / last.powi(3);
    Ok(-cubic / 6.0 + quartic / 12.0)
}

pub fn gamma_tilde_series(instance: &SurvivalInstance) -> Result<f64> {
    instance.require_gaussian()?;
    gamma_tilde_series_at(instance.weights(), instance.eps_tilde())
}

/// Left side of the quadratic cancellation: the double sum with the
/// closed-form inverse entries written out, minus the quadratic form
/// evaluated through `CovarianceStructure`. Zero up to rounding.
pub fn quadratic_cancellation_residual(instance: &SurvivalInstance) -> Result<f64> {
    require_deviations(instance)?;
    let weights = instance.weights();
    let d = weights.dim();
    let et = &instance.eps_tilde()[..d];
    let mut double_sum = 0.0;
    for i in 0..d {
        for j in 0..d {
            let entry = if i == j { 1.0 / weights.p()[i] } else { 0.0 } + 1.0 / weights.last();
            double_sum += et[i] * et[j] * entry;
        }
    }
    let cov = CovarianceStructure::new(weights);
    Ok(0.5 * double_sum - 0.5 * cov.quad_form(et)?)
}

/// `Delta_N = ln((N + d)! / (N! N^d)) + Lambda_N - sum ln(1 + eps_i) / 2 - N gamma_tilde`.
pub fn delta_n(instance: &SurvivalInstance) -> Result<f64> {
    Ok(ExpansionContext::new(instance)?.delta_n())
}

/// `sum_i p_i (1 + eps_i) ln(s_i / p_i)` over all `d + 1` cells.
pub fn entropy_lhs(instance: &SurvivalInstance, s: &[f64]) -> Result<f64> {
    require_deviations(instance)?;
    let full = interior_point(instance.weights(), s)?;
    let nf = instance.big_n() as f64;
    Ok(instance
        .big_j()
        .iter()
        .zip(&full)
        .zip(instance.weights().full())
        .map(|((&j, si), pi)| j as f64 / nf * (si / pi).ln())
        .sum())
}

/// `gamma_star(s) = entropy_lhs(s) - {eps_tilde^T Sigma^{-1} (s - p) - (s - p)^T Sigma^{-1} (s - p) / 2}`.
pub fn gamma_star(instance: &SurvivalInstance, s: &[f64]) -> Result<f64> {
    let entropy = entropy_lhs(instance, s)?;
    let weights = instance.weights();
    let cov = CovarianceStructure::new(weights);
    let d = weights.dim();
    let delta: Vec<f64> = s.iter().zip(weights.p()).map(|(si, pi)| si - pi).collect();
    let et = &instance.eps_tilde()[..d];
    Ok(entropy - (cov.bilinear(et, &delta)? - 0.5 * cov.quad_form(&delta)?))
}

/// `H(s) = sum_i (J_i / N) ln s_i` over all `d + 1` cells.
pub fn h_value(instance: &SurvivalInstance, s: &[f64]) -> Result<f64> {
    require_deviations(instance)?;
    let full = interior_point(instance.weights(), s)?;
    let nf = instance.big_n() as f64;
    Ok(instance
        .big_j()
        .iter()
        .zip(&full)
        .map(|(&j, si)| j as f64 / nf * si.ln())
        .sum())
}

/// Accepts the `d` free coordinates or all `d + 1` of them. Passing the full
/// point lets the caller supply `s_(d+1)` without the rounding of `1 - sum s`.
fn simplex_point(weights: &ProbabilityWeights, s: &[f64]) -> Result<Vec<f64>> {
    if s.len() != weights.dim() + 1 {
        return interior_point(weights, s);
    }
    if let Some(coordinate) = s.iter().position(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::NotInterior { coordinate });
    }
    if (s.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::OutsideRegion { axis: s.len() - 1 });
    }
    Ok(s.to_vec())
}

/// Gradient of `H` in the `d` free coordinates; `s` may carry `d` or `d + 1`
/// coordinates. Each term is `(J_i / N) / s_i`, so at the full point `J / N`
/// every term is exactly one and the gradient is exactly zero.
pub fn h_grad(instance: &SurvivalInstance, s: &[f64]) -> Result<Vec<f64>> {
    require_deviations(instance)?;
    let full = simplex_point(instance.weights(), s)?;
    let nf = instance.big_n() as f64;
    let j = instance.big_j();
    let d = instance.dim();
    let tail = (j[d] as f64 / nf) / full[d];
    Ok((0..d).map(|i| (j[i] as f64 / nf) / full[i] - tail).collect())
}

/// Hessian of `H` in the `d` free coordinates, row-major.
pub fn h_hessian(instance: &SurvivalInstance, s: &[f64]) -> Result<Vec<Vec<f64>>> {
    require_deviations(instance)?;
    let full = simplex_point(instance.weights(), s)?;
    let nf = instance.big_n() as f64;
    let j = instance.big_j();
    let d = instance.dim();
    let tail = (j[d] as f64 / nf) / (full[d] * full[d]);
    Ok((0..d)
        .map(|r| {
            (0..d)
                .map(|c| {
                    let diag = if r == c {
                        (j[r] as f64 / nf) / (full[r] * full[r])
                    } else {
                        0.0
                    };
                    -diag - tail
                })
                .collect()
        })
        .collect())
}


pub fn log_dirichlet_integrand(instance: &SurvivalInstance, s: &[f64]) -> Result<f64> {
    let integrand = DirichletIntegrand::new(instance)?;
    interior_point(instance.weights(), s)?;
    Ok(integrand.log_eval(s))
}

pub fn log_gaussian_integrand(instance: &SurvivalInstance, s: &[f64]) -> Result<f64> {
    let ctx = ExpansionContext::new(instance)?;
    interior_point(instance.weights(), s)?;
    Ok(ctx.log_gaussian_integrand(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_instance;
    use approx::assert_relative_eq;

    fn lambda_direct(m: u64) -> f64 {
        // independent route: ln(m!) by summing logs
        let ln_fact: f64 = (2..=m).map(|k| (k as f64).ln()).sum();
        let x = m as f64;
        ln_fact - 0.5 * (2.0 * PI * x).ln() - x * x.ln() + x
    }

    #[test]
    fn stirling_small_values() {
        let l1 = stirling_lambda(1).unwrap();
        assert!((l1 - (1.0 - 0.5 * (2.0 * PI).ln())).abs() < 1e-15);
        assert_relative_eq!(l1, 0.0810614667953272, epsilon = 1e-15);
        let l2 = stirling_lambda(2).unwrap();
        assert_relative_eq!(l2, 0.0413407, epsilon = 1e-7);
        assert!(l2 >= 1.0 / 25.0 && l2 <= 1.0 / 24.0);
        // ln 3! - (3.5 ln 3 - 3 + ln(2 pi) / 2)
        let l3 = 6.0f64.ln() - (3.5 * 3.0f64.ln() - 3.0 + 0.5 * (2.0 * PI).ln());
        assert_relative_eq!(stirling_lambda(3).unwrap(), l3, epsilon = 1e-15);
        assert_relative_eq!(l3, 0.0276779, epsilon = 1e-7);
        assert_eq!(stirling_lambda(0), Err(Error::StirlingAtZero));
    }

    #[test]
    fn stirling_series_matches_summation_past_switch() {
        for m in [21u64, 25, 40, 100] {
            let a = stirling_lambda(m).unwrap();
            let b = lambda_direct(m);
            assert!((a - b).abs() < 1e-12, "m = {m}: {a} vs {b}");
        }
    }

    #[test]
    fn stirling_bounds() {
        for m in (1..=1000).chain([1_000_000, 1 << 40]) {
            let l = stirling_lambda(m).unwrap();
            let x = m as f64;
            assert!(l >= 1.0 / (12.0 * x + 1.0) && l <= 1.0 / (12.0 * x), "m = {m}");
        }
    }

    #[test]
    fn ln_factorial_continuity() {
        let by_sum: f64 = (2..=30u64).map(|k| (k as f64).ln()).sum();
        assert_relative_eq!(ln_factorial(30), by_sum, max_relative = 1e-14);
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
    }

    #[test]
    fn capital_lambda_example() {
        let inst = build_instance(4, &[0.5], &[2]).unwrap();
        let expected = stirling_lambda(3).unwrap() - stirling_lambda(1).unwrap() - stirling_lambda(2).unwrap();
        assert_eq!(capital_lambda(&inst).unwrap(), expected);
        assert_relative_eq!(expected, -0.0947243, epsilon = 1e-7);

        // d = 1, J = (1, 1), N = 2
        let inst = build_instance(3, &[0.5], &[2]).unwrap();
        assert_eq!(inst.big_j(), &[1, 1]);
        let l1 = stirling_lambda(1).unwrap();
        assert_relative_eq!(capital_lambda(&inst).unwrap(), stirling_lambda(2).unwrap() - 2.0 * l1);

        assert!(capital_lambda(&build_instance(2, &[0.5], &[1]).unwrap()).is_err());
    }

    #[test]
    fn symmetric_blocks_leave_lambda_and_delta_unchanged() {
        // swapping the two free cells with equal weights permutes J
        let a = build_instance(12, &[0.3, 0.3], &[3, 5]).unwrap();
        let b = build_instance(12, &[0.3, 0.3], &[5, 3]).unwrap();
        assert_relative_eq!(capital_lambda(&a).unwrap(), capital_lambda(&b).unwrap(), epsilon = 1e-15);
        assert_relative_eq!(delta_n(&a).unwrap(), delta_n(&b).unwrap(), epsilon = 1e-13);
    }

    #[test]
    fn gamma_tilde_example() {
        let inst = build_instance(4, &[0.5], &[2]).unwrap();
        let entropy = (1.0 / 3.0) * (2.0f64 / 3.0).ln() + (2.0 / 3.0) * (4.0f64 / 3.0).ln();
        let quad = 0.5 * (1.0 / 36.0) * 4.0;
        assert_relative_eq!(entropy, 0.0566330, epsilon = 1e-7);
        assert_relative_eq!(quad, 0.0555556, epsilon = 1e-7);
        assert_relative_eq!(gamma_tilde(&inst).unwrap(), entropy - quad, epsilon = 1e-15);
        assert_relative_eq!(gamma_tilde(&inst).unwrap(), 1.0775e-3, epsilon = 1e-7);
    }

    #[test]
    fn gamma_tilde_vanishes_at_zero_deviation() {
        // J_i = N p_i exactly: N = 10, p = (0.3, 0.2) -> J = (3, 2, 5)
        let inst = build_instance(12, &[0.3, 0.2], &[4, 3]).unwrap();
        assert_eq!(inst.big_j(), &[3, 2, 5]);
        assert!(gamma_tilde(&inst).unwrap().abs() < 1e-16);
        assert!(gamma_tilde_series(&inst).unwrap().abs() < 1e-16);
        assert!(quadratic_cancellation_residual(&inst).unwrap().abs() < 1e-16);
    }

    #[test]
    fn series_example() {
        let inst = build_instance(4, &[0.5], &[2]).unwrap();
        let expected = (1.0 / 12.0) * (1.0f64 / 6.0).powi(4) * 16.0;
        assert_relative_eq!(gamma_tilde_series(&inst).unwrap(), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 1.0288e-3, epsilon = 1e-7);
    }

    #[test]
    fn series_matches_literal_nested_sums() {
        let w = ProbabilityWeights::new(vec![0.2, 0.15, 0.3]).unwrap();
        let head = [0.02, -0.035, 0.01];
        let mut et = head.to_vec();
        et.push(-head.iter().sum::<f64>());
        let (p, last) = (w.p(), w.last());
        let mut cubic = 0.0;
        let mut quartic = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let ind = if i == j && j == k { 1.0 / (p[i] * p[i]) } else { 0.0 };
                    cubic += head[i] * head[j] * head[k] * (ind - 1.0 / (last * last));
                    for l in 0..3 {
                        let ind = if i == j && j == k && k == l { 1.0 / p[i].powi(3) } else { 0.0 };
                        quartic += head[i] * head[j] * head[k] * head[l] * (ind + 1.0 / last.powi(3));
                    }
                }
            }
        }
        let literal = -cubic / 6.0 + quartic / 12.0;
        assert_relative_eq!(gamma_tilde_series_at(&w, &et).unwrap(), literal, max_relative = 1e-12);
    }

    #[test]
    fn delta_n_example() {
        let inst = build_instance(4, &[0.5], &[2]).unwrap();
        let terms = (4.0f64 / 3.0).ln() + capital_lambda(&inst).unwrap()
            - 0.5 * ((2.0f64 / 3.0).ln() + (4.0f64 / 3.0).ln())
            - 3.0 * gamma_tilde(&inst).unwrap();
        assert_relative_eq!(delta_n(&inst).unwrap(), terms, epsilon = 1e-15);
        assert_relative_eq!(delta_n(&inst).unwrap(), 0.2486, epsilon = 1e-4);
    }

    #[test]
    fn delta_n_vanishes_for_large_n() {
        let mut previous = f64::INFINITY;
        for big_n in [100i64, 1000, 10_000] {
            let n = big_n as u64 + 1;
            let k1 = (big_n as f64 * 0.3).round() as u64 + 1;
            let inst = build_instance(n, &[0.3], &[k1]).unwrap();
            let delta = delta_n(&inst).unwrap().abs();
            assert!(delta < previous, "N = {big_n}: {delta}");
            previous = delta;
        }
        assert!(previous < 1e-3);
    }

    #[test]
    fn gamma_star_vanishes_at_p() {
        let inst = build_instance(12, &[0.2, 0.3], &[3, 5]).unwrap();
        assert!(gamma_star(&inst, &[0.2, 0.3]).unwrap().abs() < 1e-16);
    }

    #[test]
    fn gamma_star_unrolled() {
        let inst = build_instance(4, &[0.5], &[2]).unwrap();
        let s = 0.4;
        let et = -1.0 / 6.0;
        let inv = 4.0;
        let expected = entropy_lhs(&inst, &[s]).unwrap() - et * inv * (s - 0.5) + 0.5 * (s - 0.5) * inv * (s - 0.5);
        assert_relative_eq!(gamma_star(&inst, &[s]).unwrap(), expected, epsilon = 1e-15);
        assert!(gamma_star(&inst, &[1.0]).is_err());
        assert!(gamma_star(&inst, &[0.0]).is_err());
    }

    #[test]
    fn h_gradient_vanishes_at_mode() {
        let inst = build_instance(12, &[0.2, 0.3], &[3, 5]).unwrap();
        let nf = inst.big_n() as f64;
        let mode: Vec<f64> = inst.big_j().iter().map(|&j| j as f64 / nf).collect();
        assert_eq!(h_grad(&inst, &mode).unwrap(), vec![0.0, 0.0]);
        // the d-coordinate form reconstructs s_(d+1) and is zero up to rounding
        let g = h_grad(&inst, &mode[..2]).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-14));
        let hess = h_hessian(&inst, &mode).unwrap();
        assert_eq!(hess[0][1], hess[1][0]);
        assert!(hess[0][0] < 0.0 && hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0] > 0.0);
    }

    #[test]
    fn dirichlet_integrand_examples() {
        let inst = build_instance(2, &[0.5], &[1]).unwrap();
        assert_eq!(inst.big_j(), &[0, 1]);
        assert_relative_eq!(log_dirichlet_integrand(&inst, &[0.25]).unwrap(), 1.5f64.ln(), epsilon = 1e-15);
        // J_1 = 0 makes the s_1 = 0 endpoint harmless
        let f = DirichletIntegrand::new(&inst).unwrap();
        assert_relative_eq!(f.log_eval(&[0.0]), 2.0f64.ln(), epsilon = 1e-15);

        let inst = build_instance(4, &[0.5], &[2]).unwrap();
        let a = log_dirichlet_integrand(&inst, &[1e-3]).unwrap();
        let b = log_dirichlet_integrand(&inst, &[1e-6]).unwrap();
        assert!(b < a);
        assert!(log_dirichlet_integrand(&inst, &[0.0]).is_err());
    }

    #[test]
    fn integrands_agree_on_small_instance() {
        let inst = build_instance(4, &[0.5], &[2]).unwrap();
        let a = log_dirichlet_integrand(&inst, &[0.5]).unwrap();
        let b = log_gaussian_integrand(&inst, &[0.5]).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn gaussian_integrand_rejects_zero_gap() {
        let inst = build_instance(2, &[0.5], &[1]).unwrap();
        assert!(matches!(
            log_gaussian_integrand(&inst, &[0.25]),
            Err(Error::ZeroGap { index: 0, value: 0 })
        ));
    }
}
