//! Byte-stable JSON: sorted keys, floats at 12 significant digits.

use serde::Serialize;
use serde_json::Value;

pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("valid float");
    let a = rounded.abs();
    if (1e-6..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().expect("f64")));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push(':');
                write_value(&map[k], out);
            }
            out.push('}');
        }
    }
}

pub fn to_canonical_value(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, &mut out);
    out
}

pub fn to_canonical(value: &impl Serialize) -> serde_json::Result<String> {
    Ok(to_canonical_value(&serde_json::to_value(value)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_and_keys() {
        assert_eq!(format_float(11530.0), "11530");
        assert_eq!(format_float(74.82289192650463), "74.8228919265");
        assert_eq!(format_float(1.0567147751401464e-6), "0.00000105671477514");
        assert_eq!(format_float(8.185752090096556e-17), "8.18575209010e-17".parse::<f64>().map(|x| format!("{x:e}")).unwrap());
        assert_eq!(format_float(f64::NAN), "null");
        let v = json!({"b": 1, "a": [0.1, true, null], "c": {"z": "x", "y": 2.5}});
        assert_eq!(to_canonical_value(&v), r#"{"a":[0.1,true,null],"b":1,"c":{"y":2.5,"z":"x"}}"#);
    }
}
