//! Shared report plumbing: verdicts and JSON encoding of non-finite numbers.

use serde::{Serialize, Serializer};

/// Outcome of a check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Holds
        } else {
            Verdict::Fails
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Encodes a float for JSON: finite values as numbers, others as the strings
/// `"+inf"`, `"-inf"` or `"nan"`.
pub fn encode(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else if v.is_nan() {
        serde_json::json!("nan")
    } else if v > 0.0 {
        serde_json::json!("+inf")
    } else {
        serde_json::json!("-inf")
    }
}

pub fn ser_f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    encode(*v).serialize(s)
}

pub fn ser_vec_f64<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    v.iter().map(|x| encode(*x)).collect::<Vec<_>>().serialize(s)
}

pub fn ser_opt_f64<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    v.map(encode).serialize(s)
}

/// Formats a float for CSV output with the same non-finite convention.
pub fn csv_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.17e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "+inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_encoding() {
        assert_eq!(encode(f64::INFINITY), serde_json::json!("+inf"));
        assert_eq!(encode(1.5), serde_json::json!(1.5));
        assert_eq!(csv_num(f64::NEG_INFINITY), "-inf");
        assert_eq!(csv_num(0.5).parse::<f64>().unwrap(), 0.5);
    }
}
