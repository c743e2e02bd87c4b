//! Canonical JSON encoding for report files.
//!
//! Reports must be byte-identical across runs and thread counts, so the
//! encoder fixes everything the default serializer leaves open: keys are
//! sorted, floats are printed at 12 significant digits (scientific form),
//! and there is no insignificant whitespace variation.

use serde_json::Value;

/// Fixed float formatting: 12 significant digits, scientific notation.
///
/// `-0.0` is normalized to `0.0` first so that sign noise from summation
/// order can never leak into a report.
pub fn format_float(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{:.11e}", x)
}

/// Encode a [`serde_json::Value`] canonically (sorted keys, fixed floats).
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out
}

/// Canonical encoding followed by a trailing newline, for whole files.
pub fn canonical_json_line(value: &Value) -> String {
    let mut s = canonical_json(value);
    s.push('\n');
    s
}

fn write_value(value: &Value, indent: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                // serde_json numbers are never NaN/inf
                out.push_str(&format_float(n.as_f64().expect("finite")));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string encoding cannot fail"));
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline_indent(indent + 1, out);
                write_value(item, indent + 1, out);
            }
            newline_indent(indent, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline_indent(indent + 1, out);
                out.push_str(&serde_json::to_string(key).expect("string encoding cannot fail"));
                out.push_str(": ");
                write_value(&map[key.as_str()], indent + 1, out);
            }
            newline_indent(indent, out);
            out.push('}');
        }
    }
}

fn newline_indent(indent: usize, out: &mut String) {
    out.push('\n');
    for _ in 0..indent {
        out.push_str("  ");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted() {
        let v = json!({"z": 1, "a": 2, "m": {"q": 1, "b": 2}});
        let s = canonical_json(&v);
        let a = s.find("\"a\"").unwrap();
        let m = s.find("\"m\"").unwrap();
        let z = s.find("\"z\"").unwrap();
        assert!(a < m && m < z);
        let b = s.find("\"b\"").unwrap();
        let q = s.find("\"q\"").unwrap();
        assert!(b < q);
    }

    #[test]
    fn floats_have_twelve_significant_digits() {
        assert_eq!(format_float(0.5), "5.00000000000e-1");
        assert_eq!(format_float(0.0), "0.00000000000e0");
        assert_eq!(format_float(-0.0), "0.00000000000e0");
        assert_eq!(format_float(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(format_float(1234.5), "1.23450000000e3");
    }

    #[test]
    fn twelve_digits_round_trip_config_scale_values() {
        // Hand-entered config values (one or two decimals) must survive a
        // serialize/parse cycle exactly.
        for x in [0.1, 0.25, 0.6, 0.2, 3.0, 0.106] {
            let printed = format_float(x);
            let back: f64 = printed.parse().unwrap();
            assert_eq!(back, x, "{printed}");
        }
    }

    #[test]
    fn identical_values_encode_identically() {
        let v = json!({"report": {"mean": 0.5, "n": 10}, "list": [1.0, 2.0]});
        assert_eq!(canonical_json(&v), canonical_json(&v.clone()));
    }

    #[test]
    fn encoding_parses_back() {
        let v = json!({"a": [0.1, 2, null, true, "s"], "b": {"c": 0.1234567890123456}});
        let s = canonical_json(&v);
        let parsed: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(parsed["a"][1], json!(2));
        assert_eq!(parsed["a"][3], json!(true));
    }
}
