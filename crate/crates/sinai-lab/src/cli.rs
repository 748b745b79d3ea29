//! Command-line surface: configuration parsing, atomic artifact persistence,
//! and reproducible run manifests.
//!
//! Every run writes its artifacts via temp-then-rename plus a `manifest.json`
//! echoing the full configuration, the master seed, the crate version, and a
//! SHA-256 of every artifact, which is enough to reproduce the run
//! bit-identically (results do not depend on the worker count).

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses `start:stop:step` into an inclusive grid.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = |d: String| CliError::Invalid { what: "grid", detail: d };
    if parts.len() != 3 {
        return Err(bad(format!("expected start:stop:step, got {s}")));
    }
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.parse::<f64>()).collect();
    let nums = nums.map_err(|e| bad(format!("{s}: {e}")))?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0 && stop >= start) {
        return Err(bad(format!("degenerate range {s}")));
    }
    let n = ((stop - start) / step).round() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Parses a count that may use scientific notation ("1e6").
pub fn parse_count(s: &str) -> Result<u64, CliError> {
    let v: f64 = s
        .parse()
        .map_err(|e| CliError::Invalid { what: "count", detail: format!("{s}: {e}") })?;
    if !(v >= 1.0 && v.fract() == 0.0 || v >= 1.0 && v < 1e18) {
        return Err(CliError::Invalid { what: "count", detail: format!("{s} is not a positive count") });
    }
    Ok(v.round() as u64)
}

/// Parses a comma-separated list of floats.
pub fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Invalid { what: "list", detail: format!("{p}: {e}") })
        })
        .collect()
}

/// Root for run outputs: `$SINAI_LAB_DIR` or `./runs`.
pub fn default_out_root() -> PathBuf {
    std::env::var_os("SINAI_LAB_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

/// Atomic write: temp file in the target directory, then rename.
pub fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<String, CliError> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, dir.join(name))?;
    let mut h = Sha256::new();
    h.update(bytes);
    Ok(hex_digest(&h.finalize()))
}

fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub verb: &'a str,
    pub config: &'a C,
    pub master_seed: u64,
    pub crate_version: &'a str,
    pub artifacts: Vec<(String, String)>,
}

/// Writes artifacts and the manifest for one run; returns the artifact
/// hashes in order.
pub fn persist_run<C: Serialize>(
    dir: &Path,
    verb: &str,
    config: &C,
    seed: u64,
    artifacts: &[(String, Vec<u8>)],
) -> Result<Vec<String>, CliError> {
    let mut hashes = Vec::with_capacity(artifacts.len());
    let mut listed = Vec::with_capacity(artifacts.len());
    for (name, bytes) in artifacts {
        let h = write_artifact(dir, name, bytes)?;
        listed.push((name.clone(), h.clone()));
        hashes.push(h);
    }
    let manifest = Manifest {
        verb,
        config,
        master_seed: seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        artifacts: listed,
    };
    let bytes = serde_json::to_vec_pretty(&manifest).expect("serializable");
    write_artifact(dir, "manifest.json", &bytes)?;
    Ok(hashes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("1:4:0.5").unwrap().len(), 7);
        assert_eq!(parse_grid("2:8:1").unwrap(), vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert!(parse_grid("4:1:1").is_err());
        assert!(parse_grid("1:2").is_err());
    }

    #[test]
    fn count_parsing() {
        assert_eq!(parse_count("1e6").unwrap(), 1_000_000);
        assert_eq!(parse_count("123").unwrap(), 123);
        assert!(parse_count("-5").is_err());
        assert!(parse_count("abc").is_err());
    }

    #[test]
    fn artifacts_are_atomic_and_hashed() {
        let dir = std::env::temp_dir().join(format!("sinai-test-{}", std::process::id()));
        let h1 = write_artifact(&dir, "a.json", b"{}").unwrap();
        let h2 = write_artifact(&dir, "a.json", b"{}").unwrap();
        assert_eq!(h1, h2);
        assert!(dir.join("a.json").exists());
        std::fs::remove_dir_all(&dir).ok();
    }
}
