//! Documents in and reports out.

use std::fs;
use std::path::Path;

use rug::Rational;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::descendent::CurvePoint;
use crate::frobenius::{FrobeniusModel, ModelError};
use crate::matrix::Matrix;
use crate::scalar::{Cx, Field, Q};

/// Environment variable holding the default working precision in bits.
pub const PRECISION_ENV: &str = "FGENUS_PRECISION";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("bad number `{0}`")]
    Number(String),
    #[error("expected {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("tau document: {0}")]
    Tau(String),
    #[error("unknown built-in model `{0}`")]
    Builtin(String),
}

fn read_json(path: &Path) -> Result<Value, IoError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IoError::Read { path: p.clone(), source })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: p, source })
}

/// A model by file path, or one of `pt`, `a3`, `two-primary:<d>`.
pub fn load_model(spec: &str) -> Result<FrobeniusModel, IoError> {
    match spec {
        "pt" => return Ok(FrobeniusModel::point()),
        "a3" => return Ok(FrobeniusModel::a3()),
        _ => {}
    }
    if let Some(d) = spec.strip_prefix("two-primary:") {
        let d = Q::parse(d).ok_or_else(|| IoError::Number(d.to_string()))?;
        return Ok(FrobeniusModel::two_primary(&d.0, &Rational::from(1))?);
    }
    let path = Path::new(spec);
    if !path.exists() && !spec.contains('.') && !spec.contains('/') {
        return Err(IoError::Builtin(spec.to_string()));
    }
    Ok(FrobeniusModel::from_json(&read_json(path)?)?)
}

/// Comma-separated coordinates, each a decimal, `p/q` or complex literal.
pub fn parse_point(s: &str, n: usize) -> Result<Vec<Cx>, IoError> {
    let pts = parse_list(s)?;
    if pts.len() != n {
        return Err(IoError::Arity { expected: n, got: pts.len() });
    }
    Ok(pts)
}

pub fn parse_list(s: &str) -> Result<Vec<Cx>, IoError> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(|x| Cx::parse(x).ok_or_else(|| IoError::Number(x.to_string()))).collect()
}

pub fn parse_rationals(s: &str, n: usize) -> Result<Vec<Rational>, IoError> {
    let v: Vec<Rational> = s
        .split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| Q::parse(x).map(|q| q.0).ok_or_else(|| IoError::Number(x.to_string())))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(IoError::Arity { expected: n, got: v.len() });
    }
    Ok(v)
}

fn number(v: &Value) -> Result<Cx, IoError> {
    match v {
        Value::String(s) => Cx::parse(s).ok_or_else(|| IoError::Number(s.clone())),
        Value::Number(x) => Cx::parse(&x.to_string()).ok_or_else(|| IoError::Number(x.to_string())),
        other => Err(IoError::Number(other.to_string())),
    }
}

/// `{"Kmax": K, "t": [[t_0 components], [t_1 components], ...]}`; missing
/// rows up to `Kmax` are zero.
pub fn parse_tau(v: &Value, n: usize) -> Result<CurvePoint, IoError> {
    let kmax = v.get("Kmax").and_then(Value::as_u64).ok_or_else(|| IoError::Tau("missing integer `Kmax`".into()))? as usize;
    let rows = v.get("t").and_then(Value::as_array).ok_or_else(|| IoError::Tau("missing array `t`".into()))?;
    if rows.len() > kmax + 1 {
        return Err(IoError::Tau(format!("{} rows for Kmax = {kmax}", rows.len())));
    }
    let mut tau = CurvePoint::zero(n, kmax);
    for (k, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| IoError::Tau(format!("row {k} is not an array")))?;
        if row.len() != n {
            return Err(IoError::Arity { expected: n, got: row.len() });
        }
        for (a, x) in row.iter().enumerate() {
            tau.t[k][a] = number(x)?;
        }
    }
    Ok(tau)
}

pub fn load_tau(path: &Path, n: usize) -> Result<CurvePoint, IoError> {
    parse_tau(&read_json(path)?, n)
}

pub fn cx(x: &Cx) -> Value {
    Value::String(x.to_string())
}

pub fn cx_vec(v: &[Cx]) -> Value {
    Value::Array(v.iter().map(cx).collect())
}

pub fn cx_matrix(m: &Matrix<Cx>) -> Value {
    Value::Array((0..m.rows()).map(|i| Value::Array((0..m.cols()).map(|j| cx(&m[(i, j)])).collect())).collect())
}

pub fn rational(q: &Rational) -> Value {
    Value::String(q.to_string())
}

/// Object keyed by comma-joined index tuples.
pub fn keyed<I: IntoIterator<Item = (Vec<usize>, Value)>>(entries: I) -> Value {
    let mut sorted: Vec<(Vec<usize>, Value)> = entries.into_iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut map = Map::new();
    for (k, v) in sorted {
        map.insert(k.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","), v);
    }
    Value::Object(map)
}

/// Annotates a report with the working precision.
pub fn with_precision(mut report: Value) -> Value {
    if let Value::Object(map) = &mut report {
        map.insert("precision_bits".into(), json!(crate::scalar::precision()));
        map.insert("digits".into(), json!(crate::scalar::decimal_digits()));
    }
    report
}

/// Flat `key: value` lines for the text output format.
pub fn to_text(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, x) in map {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&p, x, out);
                }
            }
            Value::Array(items) if items.iter().any(|x| x.is_object() || x.is_array()) => {
                for (i, x) in items.iter().enumerate() {
                    walk(&format!("{prefix}[{i}]"), x, out);
                }
            }
            Value::String(s) => out.push_str(&format!("{prefix}: {s}\n")),
            other => out.push_str(&format!("{prefix}: {other}\n")),
        }
    }
    let mut out = String::new();
    walk("", v, &mut out);
    out
}

pub fn max_magnitude(v: &[Cx]) -> f64 {
    v.iter().map(Field::magnitude).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_models() {
        assert_eq!(load_model("pt").unwrap().dim(), 1);
        assert_eq!(load_model("a3").unwrap().dim(), 3);
        assert!(load_model("two-primary:1/3").unwrap().is_conformal());
        assert!(matches!(load_model("nonsense"), Err(IoError::Builtin(_))));
    }

    #[test]
    fn tau_document() {
        let v = json!({"Kmax": 2, "t": [["0.1", 0.25], ["1/3", "0"]]});
        let tau = parse_tau(&v, 2).unwrap();
        assert_eq!(tau.kmax(), 2);
        assert_eq!(tau.t[1][0], Cx::from_ratio(1, 3));
        assert_eq!(tau.t[0][1], Cx::from_ratio(1, 4));
        assert!(tau.t[2].iter().all(|x| x.is_exactly_zero()));
        assert!(parse_tau(&json!({"Kmax": 0, "t": [["1"], ["2"]]}), 1).is_err());
        assert!(matches!(parse_tau(&json!({"Kmax": 1, "t": [["1", "2"]]}), 1), Err(IoError::Arity { .. })));
    }

    #[test]
    fn point_parsing() {
        let p = parse_point("0.3, 1/2", 2).unwrap();
        assert_eq!(p[1], Cx::from_ratio(1, 2));
        assert!(parse_point("1,2,3", 2).is_err());
        assert!(parse_point("x", 1).is_err());
    }

    #[test]
    fn keyed_is_ordered() {
        let v = keyed(vec![(vec![1, 0], json!(2)), (vec![0, 1], json!(1))]);
        assert_eq!(v.to_string(), r#"{"0,1":1,"1,0":2}"#);
    }

    #[test]
    fn malformed_metric() {
        let doc = json!({"dimension": 2, "metric": [["0", "1"], ["2", "0"]], "potential": []});
        assert!(FrobeniusModel::from_json(&doc).is_err());
    }
}
