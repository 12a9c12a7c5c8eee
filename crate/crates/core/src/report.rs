//! Stable numeric formatting for emitted artifacts.

use serde_json::Value;

/// Significant digits of every emitted float.
pub const SIG_DIGITS: usize = 12;

/// Rounds to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Shortest decimal form of `x` after rounding to 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    let r = round_sig(x);
    if r == 0.0 {
        // drop the sign of negative zero
        return "0".into();
    }
    format!("{r}")
}

/// Rounds every float inside a JSON value.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => {
                let r = round_sig(f);
                serde_json::Number::from_f64(if r == 0.0 { 0.0 } else { r })
                    .map(Value::Number)
                    .unwrap_or(Value::Null)
            }
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn to_json_string<T: serde::Serialize>(value: &T) -> serde_json::Result<String> {
    let v = round_json(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt_num(0.24), "0.24");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.0f64.sqrt() - 1.0), "0.414213562373");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1e-20), "0.00000000000000000001");
    }

    #[test]
    fn json_rounding() {
        let v = serde_json::json!({"a": 0.1 + 0.2, "b": [1, 2.0000000000001], "c": "x"});
        let s = to_json_string(&v).unwrap();
        assert!(s.contains("\"a\": 0.3"));
        assert!(s.contains("2.0"));
        assert!(s.contains("\"c\": \"x\""));
    }
}
