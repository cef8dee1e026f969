//! Versioned JSON documents.
//!
//! Every JSON file carries a top-level `format_version`. Config files may
//! omit it; any other value than [`FORMAT_VERSION`] is rejected.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

pub fn to_versioned<T: Serialize>(value: &T) -> Value {
    let mut map = Map::new();
    map.insert("format_version".into(), FORMAT_VERSION.into());
    match serde_json::to_value(value).expect("serializable") {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("value".into(), other);
        }
    }
    Value::Object(map)
}

pub fn from_versioned<T: DeserializeOwned>(path: &Path, mut value: Value, require_version: bool) -> Result<T> {
    let Value::Object(map) = &mut value else {
        return Err(Error::format(path, "expected a JSON object"));
    };
    match map.remove("format_version") {
        None if !require_version => {}
        None => return Err(Error::format(path, "missing `format_version`")),
        Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::format(
                path,
                format!("unsupported format_version {v}, expected {FORMAT_VERSION}"),
            ))
        }
    }
    serde_json::from_value(value).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read<T: DeserializeOwned>(path: &Path, require_version: bool) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    from_versioned(path, value, require_version)
}

pub fn write<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&to_versioned(value)).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
