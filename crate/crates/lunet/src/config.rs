//! Flat `key = value` config files, turned into long-form flags.

use crate::error::{Error, Result};

/// Parses `key = value` lines into `--key value` arguments.
///
/// Blank lines and `#` comments are skipped, underscores in keys become
/// hyphens, `true` yields a bare `--key` and `false` drops the key.
pub fn config_to_args(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!("line {}: bad key {:?}", n + 1, k.trim())));
        }
        let value = v.trim().trim_matches('"');
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => {
                out.push(format!("--{key}"));
                out.push(value.to_string());
            }
        }
    }
    Ok(out)
}
