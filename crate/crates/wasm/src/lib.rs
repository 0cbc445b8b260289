//! Browser bindings for the `www/` demo page.
//!
//! Each export has a plain-Rust twin returning `Result<String, String>` so the
//! logic is testable off the browser; the exports only convert the error.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use mnsurv::expansions::{gamma_star, log_dirichlet_integrand, ExpansionContext};
use mnsurv::{build_instance, compare_routes, report, MonteCarloSpec, QuadratureSpec};

/// Longest `delta_curve` the page may request.
pub const MAX_CURVE_N: u32 = 20_000;

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, String> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| format!("{what}: cannot parse `{}`", s.trim()))
        })
        .collect()
}

pub fn compare_json(
    n: u32,
    p: &str,
    k: &str,
    nodes: u32,
    reps: u32,
    seed: Option<u32>,
) -> Result<String, String> {
    let p: Vec<f64> = parse_list(p, "p")?;
    let k: Vec<u64> = parse_list(k, "k")?;
    let inst = build_instance(n.into(), &p, &k).map_err(|e| e.to_string())?;
    let spec = QuadratureSpec::new(nodes as usize).map_err(|e| e.to_string())?;
    let mc = seed
        .map(|s| MonteCarloSpec::new(reps.into(), s.into()))
        .transpose()
        .map_err(|e| e.to_string())?;
    let report = compare_routes(&inst, spec, mc).map_err(|e| e.to_string())?;
    Ok(report::to_json(&report))
}

/// Both log-integrands along `s = (t, p_2, ..., p_d)` for `t` in `(0, p_1)`,
/// which keeps every point strictly inside the region. The Gaussian form is
/// split into its correction `Delta_N + N gamma_star(s)` and its normal part.
pub fn integrand_profile_json(n: u32, p: &str, k: &str, points: u32) -> Result<String, String> {
    let p: Vec<f64> = parse_list(p, "p")?;
    let k: Vec<u64> = parse_list(k, "k")?;
    let inst = build_instance(n.into(), &p, &k).map_err(|e| e.to_string())?;
    let ctx = ExpansionContext::new(&inst).map_err(|e| e.to_string())?;
    let points = points.clamp(2, 2000) as usize;
    let nf = inst.big_n() as f64;
    let d = inst.dim();
    let et = &inst.eps_tilde()[..d];

    let mut rows = Vec::with_capacity(points);
    for i in 1..=points {
        let t = p[0] * i as f64 / (points + 1) as f64;
        let mut s = p.clone();
        s[0] = t;
        let dir = log_dirichlet_integrand(&inst, &s).map_err(|e| e.to_string())?;
        let gauss = ctx.log_gaussian_integrand(&s);
        let correction = ctx.delta_n() + nf * gamma_star(&inst, &s).map_err(|e| e.to_string())?;
        let arg: Vec<f64> = (0..d).map(|j| nf.sqrt() * (p[j] - s[j] + et[j])).collect();
        let normal = ctx
            .covariance()
            .log_mvn_density(&arg)
            .map_err(|e| e.to_string())?
            + 0.5 * d as f64 * nf.ln();
        rows.push(json!({
            "t": t,
            "dirichlet": dir,
            "gaussian": gauss,
            "correction": correction,
            "normal": normal,
            "difference": dir - gauss,
        }));
    }
    Ok(Value::Array(rows).to_string())
}

/// `Delta_N` and `gamma_tilde` along `J_i = round(N p_i)` (all cells at least
/// one), i.e. `k_i = J_i + 1`, for `N` up to `n_max`.
pub fn delta_curve_json(p: &str, n_max: u32) -> Result<String, String> {
    let p: Vec<f64> = parse_list(p, "p")?;
    let d = p.len() as u64;
    let n_max = u64::from(n_max.min(MAX_CURVE_N));
    let mut rows = Vec::new();
    let mut big_n = d + 1;
    while big_n <= n_max {
        let nf = big_n as f64;
        let big_j: Vec<u64> = p.iter().map(|pi| (nf * pi).round().max(1.0) as u64).collect();
        let used: u64 = big_j.iter().sum();
        if used < big_n {
            let k: Vec<u64> = big_j.iter().map(|j| j + 1).collect();
            let inst = build_instance(big_n + d, &p, &k).map_err(|e| e.to_string())?;
            let ctx = ExpansionContext::new(&inst).map_err(|e| e.to_string())?;
            rows.push(json!({
                "big_n": big_n,
                "delta_n": ctx.delta_n(),
                "gamma_tilde": ctx.gamma_tilde(),
            }));
        }
        // roughly logarithmic spacing keeps the curve short
        big_n += (big_n / 50).max(1);
    }
    Ok(Value::Array(rows).to_string())
}

fn to_js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

/// Runs every route on one instance; Monte Carlo only when `seed` is given.
#[wasm_bindgen]
pub fn compare(
    n: u32,
    p: &str,
    k: &str,
    nodes: u32,
    reps: u32,
    seed: Option<u32>,
) -> Result<String, JsValue> {
    to_js(compare_json(n, p, k, nodes, reps, seed))
}

#[wasm_bindgen]
pub fn integrand_profile(n: u32, p: &str, k: &str, points: u32) -> Result<String, JsValue> {
    to_js(integrand_profile_json(n, p, k, points))
}

#[wasm_bindgen]
pub fn delta_curve(p: &str, n_max: u32) -> Result<String, JsValue> {
    to_js(delta_curve_json(p, n_max))
}
