//! Shared test support: locating the binary's assets and a small validator
//! for the JSON-schema subset the shipped schemas use.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dcoe"))
}

pub fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name)
}

pub fn preset_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name)
}

pub fn load_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Validates `value` against the subset of JSON Schema used by the shipped
/// schemas: type, required, properties, items, enum, oneOf, and the numeric
/// bound keywords. Panics with a path-qualified message on violation.
pub fn validate_schema(value: &Value, schema: &Value, at: &str) {
    if let Some(Value::Array(options)) = schema.get("oneOf") {
        let ok = options.iter().any(|opt| {
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                validate_schema(value, opt, at)
            }))
            .is_ok()
        });
        assert!(ok, "{at}: no oneOf branch matched {value}");
        return;
    }
    if let Some(Value::String(ty)) = schema.get("type") {
        let ok = match ty.as_str() {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "integer" => value.as_i64().is_some() || value.as_u64().is_some(),
            "number" => value.is_number(),
            "boolean" => value.is_boolean(),
            other => panic!("{at}: unsupported schema type {other}"),
        };
        assert!(ok, "{at}: expected {ty}, got {value}");
    }
    if let Some(Value::Array(allowed)) = schema.get("enum") {
        assert!(allowed.contains(value), "{at}: {value} not in enum {allowed:?}");
    }
    if let Some(n) = value.as_f64() {
        for (key, strict) in
            [("minimum", false), ("exclusiveMinimum", true), ("maximum", false), ("exclusiveMaximum", true)]
        {
            if let Some(bound) = schema.get(key).and_then(Value::as_f64) {
                let ok = match (key.starts_with("max") || key.starts_with("exclusiveMax"), strict) {
                    (false, false) => n >= bound,
                    (false, true) => n > bound,
                    (true, false) => n <= bound,
                    (true, true) => n < bound,
                };
                assert!(ok, "{at}: {n} violates {key} {bound}");
            }
        }
    }
    if let Value::Object(map) = value {
        if let Some(Value::Array(required)) = schema.get("required") {
            for key in required {
                let key = key.as_str().unwrap();
                assert!(map.contains_key(key), "{at}: missing required field {key}");
            }
        }
        if let Some(Value::Object(props)) = schema.get("properties") {
            for (key, subschema) in props {
                if let Some(sub) = map.get(key) {
                    validate_schema(sub, subschema, &format!("{at}.{key}"));
                }
            }
        }
    }
    if let Value::Array(items) = value {
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                validate_schema(item, item_schema, &format!("{at}[{i}]"));
            }
        }
    }
}

pub fn assert_valid(path: &Path, schema_name: &str) {
    let value = load_json(path);
    let schema = load_json(&schema_path(schema_name));
    validate_schema(&value, &schema, schema_name);
}
