//! Canonical JSON: sorted keys, no whitespace, integers as integers and
//! floats with 17 significant digits. Used for config hashes, lock records
//! and the evidence pack, so equal inputs give byte-identical output.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable value")
}

pub fn to_string<T: Serialize>(v: &T) -> String {
    let mut out = String::new();
    write_value(&to_value(v), &mut out);
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash<T: Serialize>(v: &T) -> String {
    sha256_hex(to_string(v).as_bytes())
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().expect("finite number");
                if f == 0.0 {
                    // fold -0.0
                    out.push_str("0.0000000000000000e0");
                } else {
                    out.push_str(&format!("{f:.16e}"));
                }
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

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let v = json!({"b": 1, "a": [0.1, 2.5, -0.0], "c": {"z": null, "y": true}});
        assert_eq!(
            to_string(&v),
            r#"{"a":[1.0000000000000001e-1,2.5000000000000000e0,0.0000000000000000e0],"b":1,"c":{"y":true,"z":null}}"#
        );
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 6.02e23] {
            let s = to_string(&x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn hash_is_stable() {
        let a = json!({"x": 1.5, "y": "q"});
        let b = json!({"y": "q", "x": 1.5});
        assert_eq!(hash(&a), hash(&b));
        assert_eq!(hash(&a).len(), 64);
    }
}
