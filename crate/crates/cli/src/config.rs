use std::path::Path;

use anyhow::{bail, Context, Result};

/// Reads `key = value` lines. Blank lines and `#` comments are skipped.
pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_pairs(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected 'key = value', got '{}'", n + 1, raw.trim());
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            bail!("line {}: empty key or value", n + 1);
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}
