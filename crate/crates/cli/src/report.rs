//! Report files: JSON with a fixed envelope and rounded numbers.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use vrp_core::matrixcore::Matrix;

pub const TOOL: &str = "vrp-ols";
pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub tool: String,
    pub version: String,
    /// The verb and its effective arguments.
    pub command: Value,
    /// SHA-256 of the input files, in the order read.
    pub inputs_digest: String,
    pub results: Value,
}

impl Report {
    pub fn new(command: Value, inputs: &[&[u8]], results: Value) -> Self {
        Report {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            inputs_digest: digest(inputs),
            results,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values are plain JSON")
    }

    pub fn parse(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

pub fn digest(inputs: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for part in inputs {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

/// `x` rounded to 12 significant digits; non-finite values become null.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses");
    json!(rounded)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn matrix(m: &Matrix) -> Value {
    json!({
        "rows": m.rows(),
        "cols": m.cols(),
        "data": nums(m.as_slice()),
    })
}

/// Reads a serialized matrix back.
pub fn matrix_from(v: &Value) -> Option<Matrix> {
    let rows = v.get("rows")?.as_u64()? as usize;
    let cols = v.get("cols")?.as_u64()? as usize;
    let data: Option<Vec<f64>> = v.get("data")?.as_array()?.iter().map(Value::as_f64).collect();
    Matrix::from_vec(rows, cols, data?).ok()
}

pub fn object(pairs: Vec<(&str, Value)>) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        m.insert(k.to_string(), v);
    }
    Value::Object(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(num(0.1 + 0.2), json!(0.3));
        assert_eq!(num(1.0 / 3.0), json!(0.333333333333));
        assert_eq!(num(-123456789.123456789), json!(-123456789.123));
        assert_eq!(num(f64::NAN), Value::Null);
        assert_eq!(num(0.0), json!(0.0));
    }

    #[test]
    fn matrix_round_trip() {
        let m = Matrix::from_rows(&[vec![1.0, 2.5], vec![-3.0, 4.0], vec![0.0, 1e-7]]).unwrap();
        let v = matrix(&m);
        assert_eq!(v["rows"], 3);
        assert_eq!(matrix_from(&v).unwrap(), m);
    }

    #[test]
    fn report_round_trip() {
        let r = Report::new(json!({"verb": "check"}), &[b"abc"], json!({"x": num(2.0)}));
        assert_eq!(Report::parse(&r.to_json()).unwrap(), r);
        assert_eq!(r.inputs_digest.len(), 64);
    }
}
