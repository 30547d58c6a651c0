//! `key=value` configuration files.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! ignored. Keys are the `MetricsConfig` field names plus a few run-level
//! settings.

use std::collections::BTreeMap;

use crate::metrics::MetricsConfig;

pub const METRICS_KEYS: [&str; 7] = [
    "p",
    "depth",
    "overlap_ks",
    "rbo_mode",
    "overlap_mode",
    "epsilon_intra",
    "epsilon_instability",
];

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value, got {raw:?}", i + 1));
        };
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        if out.insert(key.clone(), v.trim().to_owned()).is_some() {
            return Err(format!("line {}: duplicate key {key:?}", i + 1));
        }
    }
    Ok(out)
}

pub fn parse_list(v: &str) -> Result<Vec<usize>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

impl MetricsConfig {
    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let num = |v: &str| v.parse::<f64>().map_err(|e| format!("{key}: {e}"));
        match key {
            "p" => self.p = num(value)?,
            "depth" => self.depth = value.parse().map_err(|e| format!("{key}: {e}"))?,
            "overlap_ks" => self.overlap_ks = parse_list(value).map_err(|e| format!("{key}: {e}"))?,
            "rbo_mode" => self.rbo_mode = value.parse()?,
            "overlap_mode" => self.overlap_mode = value.parse()?,
            "epsilon_intra" => self.epsilon_intra = num(value)?,
            "epsilon_instability" => self.epsilon_instability = num(value)?,
            _ => return Err(format!("unknown metrics key {key:?}")),
        }
        Ok(())
    }

    /// Applies every metrics key present in `kv`, ignoring other keys.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<(), String> {
        for (k, v) in kv {
            if METRICS_KEYS.contains(&k.as_str()) {
                self.set(k, v)?;
            }
        }
        Ok(())
    }
}
