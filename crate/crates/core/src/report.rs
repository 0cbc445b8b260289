//! JSON and CSV encodings of [`RouteReport`].
//!
//! Every floating-point value is written with 17 significant digits, so
//! parsing a report back reproduces each number bit for bit. Routes that were
//! not requested encode as `null`; inapplicable routes as
//! `{"inapplicable": "<reason>"}`.

use serde::Serialize;
use serde_json::value::RawValue;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::quadrature::McEstimate;
use crate::survival::{RouteReport, RouteValue};

fn raw(text: String) -> Box<RawValue> {
    RawValue::from_string(text).expect("generated JSON fragment is valid")
}

/// `x` with 17 significant digits, or `null` when not finite.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_owned()
    }
}

fn num(x: f64) -> Box<RawValue> {
    raw(format_number(x))
}

fn opt_num(x: Option<f64>) -> Box<RawValue> {
    x.map_or_else(|| raw("null".into()), num)
}

fn inapplicable(reason: &str) -> Box<RawValue> {
    raw(json!({ "inapplicable": reason }).to_string())
}

fn route_json(route: &RouteValue<f64>) -> Box<RawValue> {
    match route {
        RouteValue::Value(v) => num(*v),
        RouteValue::Inapplicable(reason) => inapplicable(reason),
        RouteValue::Skipped => raw("null".into()),
    }
}

#[derive(Serialize)]
struct McJson {
    estimate: Box<RawValue>,
    stderr: Box<RawValue>,
    replications: u64,
    seed: u64,
}

fn mc_json(route: &RouteValue<McEstimate>) -> Box<RawValue> {
    match route {
        RouteValue::Value(m) => {
            let body = McJson {
                estimate: num(m.estimate),
                stderr: num(m.stderr),
                replications: m.replications,
                seed: m.seed,
            };
            raw(serde_json::to_string(&body).expect("serializable"))
        }
        RouteValue::Inapplicable(reason) => inapplicable(reason),
        RouteValue::Skipped => raw("null".into()),
    }
}

#[derive(Serialize)]
struct InstanceJson {
    n: u64,
    d: usize,
    p: Vec<Box<RawValue>>,
    k: Vec<u64>,
}

#[derive(Serialize)]
struct RoutesJson {
    exact: Box<RawValue>,
    dirichlet: Box<RawValue>,
    gaussian: Box<RawValue>,
    mc: Box<RawValue>,
}

#[derive(Serialize)]
struct DiagnosticsJson {
    delta_n: Box<RawValue>,
    gamma_tilde: Box<RawValue>,
    max_rel_diff: Box<RawValue>,
}

#[derive(Serialize)]
struct ParamsJson {
    nodes: usize,
    tolerance: Box<RawValue>,
}

#[derive(Serialize)]
struct ReportJson {
    instance: InstanceJson,
    routes: RoutesJson,
    diagnostics: DiagnosticsJson,
    params: ParamsJson,
}

fn to_json_struct(report: &RouteReport) -> ReportJson {
    ReportJson {
        instance: InstanceJson {
            n: report.n,
            d: report.dim(),
            p: report.p.iter().map(|&x| num(x)).collect(),
            k: report.k.clone(),
        },
        routes: RoutesJson {
            exact: route_json(&report.exact),
            dirichlet: route_json(&report.dirichlet),
            gaussian: route_json(&report.gaussian),
            mc: mc_json(&report.mc),
        },
        diagnostics: DiagnosticsJson {
            delta_n: opt_num(report.delta_n),
            gamma_tilde: opt_num(report.gamma_tilde),
            max_rel_diff: num(report.max_rel_diff),
        },
        params: ParamsJson {
            nodes: report.nodes,
            tolerance: opt_num(report.tolerance),
        },
    }
}

pub fn to_json(report: &RouteReport) -> String {
    serde_json::to_string_pretty(&to_json_struct(report)).expect("serializable")
}

/// A JSON array of reports.
pub fn to_json_array(reports: &[RouteReport]) -> String {
    let items: Vec<ReportJson> = reports.iter().map(to_json_struct).collect();
    serde_json::to_string_pretty(&items).expect("serializable")
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Report(msg.into())
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| bad(format!("missing field `{key}`")))
}

fn object<'a>(value: &'a Value, what: &str) -> Result<&'a Map<String, Value>> {
    value
        .as_object()
        .ok_or_else(|| bad(format!("`{what}` is not an object")))
}

fn float(value: &Value, what: &str) -> Result<f64> {
    match value {
        Value::Null => Ok(f64::NAN),
        v => v.as_f64().ok_or_else(|| bad(format!("`{what}` is not a number"))),
    }
}

fn uint(value: &Value, what: &str) -> Result<u64> {
    value
        .as_u64()
        .ok_or_else(|| bad(format!("`{what}` is not an unsigned integer")))
}

fn opt_float(value: &Value, what: &str) -> Result<Option<f64>> {
    if value.is_null() {
        Ok(None)
    } else {
        float(value, what).map(Some)
    }
}

fn parse_route<T>(
    value: &Value,
    what: &str,
    parse: impl FnOnce(&Value) -> Result<T>,
) -> Result<RouteValue<T>> {
    if value.is_null() {
        return Ok(RouteValue::Skipped);
    }
    if let Some(reason) = value.get("inapplicable") {
        let reason = reason
            .as_str()
            .ok_or_else(|| bad(format!("`{what}.inapplicable` is not a string")))?;
        return Ok(RouteValue::Inapplicable(reason.to_owned()));
    }
    parse(value).map(RouteValue::Value)
}

fn from_value(value: &Value) -> Result<RouteReport> {
    let root = object(value, "report")?;
    let instance = object(field(root, "instance")?, "instance")?;
    let routes = object(field(root, "routes")?, "routes")?;
    let diagnostics = object(field(root, "diagnostics")?, "diagnostics")?;
    let params = object(field(root, "params")?, "params")?;

    let p = field(instance, "p")?
        .as_array()
        .ok_or_else(|| bad("`p` is not an array"))?
        .iter()
        .map(|x| float(x, "p"))
        .collect::<Result<Vec<_>>>()?;
    let k = field(instance, "k")?
        .as_array()
        .ok_or_else(|| bad("`k` is not an array"))?
        .iter()
        .map(|x| uint(x, "k"))
        .collect::<Result<Vec<_>>>()?;
    let d = uint(field(instance, "d")?, "d")? as usize;
    if p.len() != d || k.len() != d {
        return Err(bad("`d` disagrees with the lengths of `p` and `k`"));
    }

    let scalar = |key: &str| -> Result<RouteValue<f64>> {
        parse_route(field(routes, key)?, key, |v| float(v, key))
    };
    let mc = parse_route(field(routes, "mc")?, "mc", |v| {
        let m = object(v, "mc")?;
        Ok(McEstimate {
            estimate: float(field(m, "estimate")?, "estimate")?,
            stderr: float(field(m, "stderr")?, "stderr")?,
            replications: uint(field(m, "replications")?, "replications")?,
            seed: uint(field(m, "seed")?, "seed")?,
        })
    })?;

    Ok(RouteReport {
        n: uint(field(instance, "n")?, "n")?,
        p,
        k,
        exact: scalar("exact")?,
        dirichlet: scalar("dirichlet")?,
        gaussian: scalar("gaussian")?,
        mc,
        delta_n: opt_float(field(diagnostics, "delta_n")?, "delta_n")?,
        gamma_tilde: opt_float(field(diagnostics, "gamma_tilde")?, "gamma_tilde")?,
        max_rel_diff: float(field(diagnostics, "max_rel_diff")?, "max_rel_diff")?,
        nodes: uint(field(params, "nodes")?, "nodes")? as usize,
        tolerance: opt_float(field(params, "tolerance")?, "tolerance")?,
    })
}

/// Parses one report, or every report in a JSON array.
pub fn from_json(text: &str) -> Result<Vec<RouteReport>> {
    let value: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    match &value {
        Value::Array(items) => items.iter().map(from_value).collect(),
        other => Ok(vec![from_value(other)?]),
    }
}

pub fn csv_header(d: usize) -> String {
    let mut cols = vec!["n".to_owned(), "d".to_owned()];
    cols.extend((1..=d).map(|i| format!("p_{i}")));
    cols.extend((1..=d).map(|i| format!("k_{i}")));
    cols.extend(
        [
            "exact",
            "dirichlet",
            "gaussian",
            "mc_est",
            "mc_se",
            "delta_n",
            "gamma_tilde",
            "max_rel_diff",
        ]
        .map(String::from),
    );
    cols.join(",")
}

fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format_number(v),
        _ => String::new(),
    }
}

pub fn csv_row(report: &RouteReport) -> String {
    let mut cols = vec![report.n.to_string(), report.dim().to_string()];
    cols.extend(report.p.iter().map(|&x| format_number(x)));
    cols.extend(report.k.iter().map(|x| x.to_string()));
    let mc = report.mc.value();
    cols.extend([
        cell(report.exact.value().copied()),
        cell(report.dirichlet.value().copied()),
        cell(report.gaussian.value().copied()),
        cell(mc.map(|m| m.estimate)),
        cell(mc.map(|m| m.stderr)),
        cell(report.delta_n),
        cell(report.gamma_tilde),
        cell(Some(report.max_rel_diff)),
    ]);
    cols.join(",")
}

/// Header plus one row per report. All reports must share the same `d`.
pub fn to_csv(reports: &[RouteReport]) -> Result<String> {
    let d = reports.first().map_or(0, RouteReport::dim);
    if reports.iter().any(|r| r.dim() != d) {
        return Err(bad("CSV output needs every instance to have the same dimension"));
    }
    let mut out = csv_header(d);
    out.push('\n');
    for r in reports {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RouteReport {
        RouteReport {
            n: 2,
            p: vec![0.5],
            k: vec![1],
            exact: RouteValue::Value(0.75),
            dirichlet: RouteValue::Value(0.7500000000000002),
            gaussian: RouteValue::Inapplicable("J_i = 0".into()),
            mc: RouteValue::Value(McEstimate {
                estimate: 0.7491,
                stderr: 0.0013712,
                replications: 100_000,
                seed: u64::MAX,
            }),
            delta_n: None,
            gamma_tilde: None,
            max_rel_diff: 2.9605947323337506e-16,
            nodes: 16,
            tolerance: Some(1e-8),
        }
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_number(0.75), "7.5000000000000000e-1");
        assert_eq!(format_number(f64::NAN), "null");
        let x = 0.1 + 0.2;
        assert_eq!(format_number(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn inapplicable_route_shape() {
        let text = to_json(&sample());
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["routes"]["gaussian"], json!({ "inapplicable": "J_i = 0" }));
        assert_eq!(v["instance"]["d"], json!(1));
        assert_eq!(v["routes"]["mc"]["seed"], json!(u64::MAX));
        assert!(v["diagnostics"]["delta_n"].is_null());
    }

    #[test]
    fn json_round_trip() {
        let report = sample();
        let back = from_json(&to_json(&report)).unwrap();
        assert_eq!(back, vec![report.clone()]);
        let many = from_json(&to_json_array(&[report.clone(), report.clone()])).unwrap();
        assert_eq!(many.len(), 2);
    }

    #[test]
    fn csv_layout() {
        assert_eq!(
            csv_header(2),
            "n,d,p_1,p_2,k_1,k_2,exact,dirichlet,gaussian,mc_est,mc_se,delta_n,gamma_tilde,max_rel_diff"
        );
        let text = to_csv(&[sample(), sample()]).unwrap();
        assert_eq!(text.matches("n,d,").count(), 1);
        let row = text.lines().nth(1).unwrap();
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 2 + 2 + 8);
        assert_eq!(cols[6], "", "inapplicable gaussian is an empty cell");

        let mut other = sample();
        other.p = vec![0.2, 0.3];
        other.k = vec![1, 1];
        assert!(to_csv(&[sample(), other]).is_err());
    }

    #[test]
    fn malformed_reports() {
        assert!(from_json("{}").is_err());
        assert!(from_json("not json").is_err());
    }
}
