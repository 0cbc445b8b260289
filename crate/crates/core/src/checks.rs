//! Identity and invariant suite behind the `check` command.
//!
//! Each check draws its inputs from a seeded generator, measures a residual
//! and compares it with a threshold. The dense elimination used for the
//! covariance checks lives here as an independent oracle; the library itself
//! only uses closed forms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covariance::CovarianceStructure;
use crate::error::Result;
use crate::expansions::{
    entropy_lhs, gamma_star, h_grad, h_hessian, h_value, log_dirichlet_integrand,
    quadratic_cancellation_residual, stirling_lambda, ExpansionContext,
};
use crate::model::{build_instance, ProbabilityWeights, SurvivalInstance};
use crate::quadrature::QuadratureSpec;
use crate::survival::{relative_difference, survival_dirichlet, survival_exact, survival_gaussian};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: &'static str, residual: f64, threshold: f64) -> Self {
        Self {
            name,
            residual,
            threshold,
            passed: residual <= threshold,
        }
    }

    fn below(name: &'static str, residual: f64, threshold: f64) -> Self {
        Self {
            name,
            residual,
            threshold,
            passed: residual < threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Relative tolerance on route agreement.
    pub route_tol: f64,
    /// Absolute tolerance on pointwise identities.
    pub pointwise_tol: f64,
    pub nodes: usize,
}

impl SuiteConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            route_tol: 1e-8,
            pointwise_tol: 1e-10,
            nodes: 48,
        }
    }
}

/// Weights with every cell (including the implicit one) at least `floor`.
pub fn random_weights(rng: &mut impl Rng, d: usize, floor: f64) -> ProbabilityWeights {
    let raw: Vec<f64> = (0..=d).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let free = 1.0 - floor * (d + 1) as f64;
    let p = raw[..d].iter().map(|x| floor + free * x / total).collect();
    ProbabilityWeights::new(p).expect("generated weights are valid")
}

/// Instance with every `J_i` drawn from `1..=max_j`, so all routes apply.
pub fn random_gaussian_instance(rng: &mut impl Rng, d: usize, max_j: i64) -> SurvivalInstance {
    let weights = random_weights(rng, d, 0.05);
    let big_j: Vec<i64> = (0..=d).map(|_| rng.gen_range(1..=max_j)).collect();
    let big_n: i64 = big_j.iter().sum();
    let k: Vec<u64> = big_j[..d].iter().map(|&j| (j + 1) as u64).collect();
    build_instance((big_n + d as i64) as u64, weights.p(), &k).expect("generated instance is valid")
}

/// Strictly interior point of `R_d`, drawn by nested uniform fractions.
pub fn random_region_point(rng: &mut impl Rng, weights: &ProbabilityWeights) -> Vec<f64> {
    let mut s = Vec::with_capacity(weights.dim());
    let mut used = 0.0;
    for &bound in weights.prefix() {
        let u: f64 = rng.gen_range(0.01..0.99);
        let si = (bound - used) * u;
        s.push(si);
        used += si;
    }
    s
}

/// `J / N` restricted to the `d` free coordinates.
pub fn mode(instance: &SurvivalInstance) -> Vec<f64> {
    let nf = instance.big_n() as f64;
    instance.big_j()[..instance.dim()]
        .iter()
        .map(|&j| j as f64 / nf)
        .collect()
}

fn det_by_elimination(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        let diag = a[col][col];
        det *= diag;
        for row in col + 1..n {
            let factor = a[row][col] / diag;
            for c in col..n {
                a[row][c] -= factor * a[col][c];
            }
        }
    }
    det
}

fn check_stirling() -> CheckResult {
    let mut worst: f64 = 0.0;
    for m in (1..=1000u64).chain([1_000_000]) {
        let l = stirling_lambda(m).expect("m >= 1");
        let x = m as f64;
        let lo = 1.0 / (12.0 * x + 1.0);
        let hi = 1.0 / (12.0 * x);
        worst = worst.max(lo - l).max(l - hi);
    }
    CheckResult::at_most("stirling lambda bounds", worst.max(0.0), 0.0)
}

fn check_covariance(rng: &mut ChaCha8Rng) -> [CheckResult; 3] {
    let mut det_err: f64 = 0.0;
    let mut inv_err: f64 = 0.0;
    let mut pd_min = f64::INFINITY;
    for trial in 0..50 {
        let d = 1 + trial % 6;
        let w = random_weights(rng, d, 0.02);
        let cov = CovarianceStructure::new(&w);
        let det = det_by_elimination(cov.sigma());
        let closed = cov.log_det().exp();
        det_err = det_err.max((det - closed).abs() / closed);
        for i in 0..d {
            for j in 0..d {
                let prod: f64 = (0..d)
                    .map(|k| cov.sigma_entry(i, k).unwrap() * cov.inverse_entry(k, j).unwrap())
                    .sum();
                let id = if i == j { 1.0 } else { 0.0 };
                inv_err = inv_err.max((prod - id).abs());
            }
        }
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm: f64 = x.iter().map(|v| v * v).sum();
        pd_min = pd_min.min(cov.quad_form(&x).unwrap() / norm);
    }
    [
        CheckResult::at_most("sigma determinant closed form", det_err, 1e-10),
        CheckResult::at_most("sigma inverse closed form", inv_err, 1e-10),
        CheckResult {
            name: "sigma positive definite",
            residual: -pd_min,
            threshold: 0.0,
            passed: pd_min > 0.0,
        },
    ]
}

struct IdentityResiduals {
    cancellation: f64,
    entropy_one: f64,
    entropy_two: f64,
    max_diff_h: f64,
    decomposition: f64,
    integrand_gap: f64,
    gradient: f64,
    hessian_max: f64,
}

fn identity_residuals(rng: &mut ChaCha8Rng) -> Result<IdentityResiduals> {
    let mut r = IdentityResiduals {
        cancellation: 0.0,
        entropy_one: 0.0,
        entropy_two: 0.0,
        max_diff_h: 0.0,
        decomposition: 0.0,
        integrand_gap: 0.0,
        gradient: 0.0,
        hessian_max: f64::NEG_INFINITY,
    };
    for trial in 0..20 {
        let d = 1 + trial % 3;
        let inst = random_gaussian_instance(rng, d, 12);
        let ctx = ExpansionContext::new(&inst)?;
        let cov = ctx.covariance();
        let weights = inst.weights();
        let et = &inst.eps_tilde()[..d];
        let half_q = 0.5 * cov.quad_form(et)?;
        let nf = inst.big_n() as f64;
        let m = mode(&inst);

        let residual = quadratic_cancellation_residual(&inst)?;
        r.cancellation = r.cancellation.max(residual.abs() / half_q.max(f64::MIN_POSITIVE));

        let kl: f64 = inst
            .big_j()
            .iter()
            .zip(weights.full())
            .map(|(&j, p)| {
                let f = j as f64 / nf;
                f * (p / f).ln()
            })
            .sum();
        r.entropy_one = r.entropy_one.max((kl + half_q + ctx.gamma_tilde()).abs());

        let h_p = h_value(&inst, weights.p())?;
        let h_mode = h_value(&inst, &m)?;
        r.max_diff_h = r.max_diff_h.max((h_p - h_mode + half_q + ctx.gamma_tilde()).abs());

        let full_mode: Vec<f64> = inst.big_j().iter().map(|&j| j as f64 / nf).collect();
        r.gradient = r
            .gradient
            .max(h_grad(&inst, &full_mode)?.iter().fold(0.0, |a: f64, g| a.max(g.abs())));

        for _ in 0..100 {
            let s = random_region_point(rng, weights);
            let lhs = entropy_lhs(&inst, &s)?;
            let off: Vec<f64> = s.iter().zip(&m).map(|(a, b)| a - b).collect();
            let rhs = half_q - 0.5 * cov.quad_form(&off)? + gamma_star(&inst, &s)?;
            r.entropy_two = r.entropy_two.max((lhs - rhs).abs());

            let h_s = h_value(&inst, &s)?;
            let split = nf * (h_s - h_p) + nf * (h_p - h_mode);
            r.decomposition = r.decomposition.max((split - nf * (h_s - h_mode)).abs());

            let a = log_dirichlet_integrand(&inst, &s)?;
            let b = ctx.log_gaussian_integrand(&s);
            r.integrand_gap = r.integrand_gap.max((a - b).abs());
        }

        for _ in 0..50 {
            let s = random_region_point(rng, weights);
            let hess = h_hessian(&inst, &s)?;
            let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let form: f64 = (0..d)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .map(|(i, j)| z[i] * hess[i][j] * z[j])
                .sum();
            r.hessian_max = r.hessian_max.max(form);
        }
    }
    Ok(r)
}

/// Deterministic routes against enumeration on a fixed panel of instances
/// with every `J_i >= 1`. Returns the worst Dirichlet and Gaussian
/// relative errors.
fn route_agreement(spec: QuadratureSpec) -> Result<(f64, f64)> {
    let mut worst_dir: f64 = 0.0;
    let mut worst_gauss: f64 = 0.0;
    for n in [5u64, 10, 16] {
        for p in [[0.3, 0.3], [0.2, 0.5]] {
            for k1 in 2..n {
                for k2 in 2..n {
                    if k1 + k2 > n - 1 {
                        continue;
                    }
                    let inst = build_instance(n, &p, &[k1, k2])?;
                    let exact = survival_exact(&inst)?;
                    let dir = survival_dirichlet(&inst, spec)?;
                    let gauss = survival_gaussian(&inst, spec)?;
                    worst_dir = worst_dir.max(relative_difference(dir, exact));
                    worst_gauss = worst_gauss.max(relative_difference(gauss, exact));
                }
            }
        }
    }
    let inst = build_instance(12, &[0.2, 0.3, 0.25], &[2, 3, 2])?;
    let exact = survival_exact(&inst)?;
    let small = QuadratureSpec::new(spec.nodes_per_axis.min(32))?;
    worst_dir = worst_dir.max(relative_difference(survival_dirichlet(&inst, small)?, exact));
    worst_gauss = worst_gauss.max(relative_difference(survival_gaussian(&inst, small)?, exact));
    Ok((worst_dir, worst_gauss))
}

fn monotonicity(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=12u64);
        let w = random_weights(rng, d, 0.05);
        let k: Vec<u64> = (0..d).map(|_| rng.gen_range(0..=n / d as u64 + 1)).collect();
        let i = rng.gen_range(0..d);
        let mut bumped = k.clone();
        bumped[i] += 1;
        let base = survival_exact(&build_instance(n, w.p(), &k)?)?;
        let next = survival_exact(&build_instance(n, w.p(), &bumped)?)?;
        worst = worst.max(next - base);
    }
    Ok(worst)
}

/// Runs every check. Errors only come from invalid configuration.
pub fn run_suite(config: SuiteConfig) -> Result<Vec<CheckResult>> {
    let spec = QuadratureSpec::new(config.nodes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tol = config.pointwise_tol;

    let mut out = vec![check_stirling()];
    out.extend(check_covariance(&mut rng));

    let r = identity_residuals(&mut rng)?;
    out.push(CheckResult::at_most("quadratic cancellation (relative)", r.cancellation, 1e-14));
    out.push(CheckResult::at_most("entropy identity at J/N", r.entropy_one, tol));
    out.push(CheckResult::at_most("entropy identity at s", r.entropy_two, tol));
    out.push(CheckResult::at_most("H(p) - H(J/N) identity", r.max_diff_h, tol));
    out.push(CheckResult::at_most("Laplace decomposition", r.decomposition, tol));
    out.push(CheckResult::at_most("pointwise integrand equality", r.integrand_gap, tol));
    out.push(CheckResult::at_most("grad H vanishes at J/N", r.gradient, 0.0));
    out.push(CheckResult::below("Hessian of H negative definite", r.hessian_max, 0.0));

    let (dir, gauss) = route_agreement(spec)?;
    out.push(CheckResult::at_most("dirichlet vs exact (relative)", dir, config.route_tol));
    out.push(CheckResult::at_most("gaussian vs exact (relative)", gauss, config.route_tol));

    out.push(CheckResult::at_most("monotonicity in k", monotonicity(&mut rng)?, 1e-12));
    Ok(out)
}
