//! `key=value` overrides applied to a JSON config before it is typed.

use serde_json::{Map, Value};

use crate::CliError;

/// Short names used in the literature, mapped to config paths.
const ALIASES: &[(&str, &str)] = &[
    ("N", "node_count"),
    ("B", "mean_bandwidth"),
    ("L", "mean_latency"),
    ("mu", "miss_rate"),
    ("T", "protocol.thread_count"),
    ("t0", "protocol.slot_interval"),
    ("S_B", "protocol.max_block_size"),
    ("F", "protocol.finality"),
    ("E", "protocol.endorsement_slots"),
    ("S_H", "header_size"),
    ("S_tx", "tx_size"),
];

fn parse_value(raw: &str) -> Value {
    match serde_json::from_str::<Value>(raw) {
        // 12e6 should fill an integer field.
        Ok(Value::Number(n)) if n.is_f64() => {
            let x = n.as_f64().expect("f64");
            if x.fract() == 0.0 && x.abs() < 9.0e15 {
                Value::from(x as i64)
            } else {
                Value::Number(n)
            }
        }
        Ok(v) => v,
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override path {path:?} crosses a non-object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

fn get_f64(root: &Value, path: &str) -> Option<f64> {
    path.split('.')
        .try_fold(root, |v, k| v.get(k))
        .and_then(Value::as_f64)
}

/// Applies overrides in order. `C_B` (bits/s) is applied last and sets the
/// block size to C_B·t0/T.
pub fn apply_overrides(config: &mut Value, overrides: &[String]) -> Result<(), CliError> {
    let mut bitrate = None;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
        let key = key.trim();
        let value = parse_value(raw.trim());
        if key == "C_B" {
            bitrate = Some(
                value
                    .as_f64()
                    .ok_or_else(|| CliError::Config(format!("C_B must be a number, got {raw}")))?,
            );
            continue;
        }
        let path = ALIASES
            .iter()
            .find(|(a, _)| *a == key)
            .map_or(key, |(_, p)| p);
        set_path(config, path, value)?;
    }
    if let Some(cb) = bitrate {
        let t0 = get_f64(config, "protocol.slot_interval");
        let t = get_f64(config, "protocol.thread_count");
        let (Some(t0), Some(t)) = (t0, t) else {
            return Err(CliError::Config("C_B needs protocol.slot_interval and thread_count".into()));
        };
        set_path(
            config,
            "protocol.max_block_size",
            Value::from((cb * t0 / t).round() as u64),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn aliases_paths_and_bitrate() {
        let mut v = json!({"node_count": 128, "protocol": {"thread_count": 32, "slot_interval": 32.0}});
        apply_overrides(
            &mut v,
            &["N=8".into(), "T=2".into(), "t0=16".into(), "C_B=1e6".into(), "seed=7".into()],
        )
        .unwrap();
        assert_eq!(v["node_count"], 8);
        assert_eq!(v["protocol"]["thread_count"], 2);
        assert_eq!(v["protocol"]["max_block_size"], 8_000_000);
        assert_eq!(v["seed"], 7);
        apply_overrides(&mut v, &["S_B=12e6".into(), "protocol.finality=3".into()]).unwrap();
        assert_eq!(v["protocol"]["max_block_size"], 12_000_000);
        assert_eq!(v["protocol"]["finality"], 3);
        assert!(apply_overrides(&mut v, &["N".into()]).is_err());
        assert!(apply_overrides(&mut v, &["node_count.x=1".into()]).is_err());
    }
}
