//! `--config FILE` support. The file is a flat JSON object whose keys are
//! long flag names (`min-size` or `min_size`). Each entry is appended to the
//! argument list unless the same flag already appears on the command line,
//! so explicit flags always win.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::Value;

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn present(args: &[OsString], flag: &str) -> bool {
    let with_eq = format!("{flag}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&with_eq)
    })
}

fn scalar(key: &str, v: &Value) -> Result<OsString> {
    Ok(match v {
        Value::String(s) => s.into(),
        Value::Number(n) => n.to_string().into(),
        Value::Bool(b) => b.to_string().into(),
        _ => bail!("config key `{key}`: expected a string, number or boolean"),
    })
}

/// Returns `args` extended with the entries of the config file, if any.
pub fn merge(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let Value::Object(map) = doc else {
        bail!("config {} must hold a JSON object", path.display());
    };
    let mut extra = Vec::new();
    for (key, value) in &map {
        let name = key.replace('_', "-");
        if name == "config" {
            bail!("config files cannot name another config file");
        }
        let flag = format!("--{name}");
        if present(&args, &flag) {
            continue;
        }
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => extra.push(OsString::from(&flag)),
            Value::Array(items) => {
                if items.is_empty() {
                    continue;
                }
                extra.push(OsString::from(&flag));
                for item in items {
                    extra.push(scalar(key, item)?);
                }
            }
            Value::Object(_) => bail!("config key `{key}`: nested objects are not supported"),
            other => {
                extra.push(OsString::from(&flag));
                extra.push(scalar(key, other)?);
            }
        }
    }
    args.extend(extra);
    Ok(args)
}
