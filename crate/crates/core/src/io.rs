//! Number formatting, file helpers and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// `<root>/<first 12 hex digits of the config hash>-<UTC timestamp>`, with
/// a numeric suffix if that directory already exists.
pub fn run_directory(root: &Path, hash: &str) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let base = format!("{}-{stamp}", &hash[..hash.len().min(12)]);
    let mut dir = root.join(&base);
    let mut n = 1;
    while dir.exists() {
        dir = root.join(format!("{base}-{n}"));
        n += 1;
    }
    dir
}

/// Written next to every output so a run can be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub created_utc: String,
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, seed: u64, config: &T) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(config)?,
            seed,
            config: serde_json::to_value(config)?,
            created_utc: chrono::Utc::now().to_rfc3339(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&serde_json::json!({"m": 1})).unwrap();
        assert_eq!(a, config_hash(&serde_json::json!({"m": 1})).unwrap());
        assert_ne!(a, config_hash(&serde_json::json!({"m": 2})).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn run_directories_do_not_collide() {
        let dir = tempfile::tempdir().unwrap();
        let a = run_directory(dir.path(), "abc");
        create_dir(&a).unwrap();
        let b = run_directory(dir.path(), "abc");
        assert_ne!(a, b);
    }

    #[test]
    fn json_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_json(&p, &vec![1.5, 2.5]).unwrap();
        let back: Vec<f64> = read_json(&p).unwrap();
        assert_eq!(back, vec![1.5, 2.5]);
        assert!(matches!(read_json::<Vec<f64>>(&dir.path().join("none")), Err(Error::File { .. })));
    }
}
