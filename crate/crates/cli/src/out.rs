//! Output directory helpers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<OutDir, CliError> {
        fs::create_dir_all(path).map_err(CliError::io(path))?;
        Ok(OutDir(path.to_path_buf()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn text(&self, name: &str, body: &str) -> Result<(), CliError> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        }
        fs::write(&p, body).map_err(CliError::io(&p))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut body = serde_json::to_string_pretty(value).expect("serializable");
        body.push('\n');
        self.text(name, &body)
    }

    /// One record per line.
    pub fn jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut body = String::new();
        for r in rows {
            body.push_str(&serde_json::to_string(r).expect("serializable"));
            body.push('\n');
        }
        self.text(name, &body)
    }
}

/// FNV-1a over the file contents, to pin down which trace a run used.
pub fn fingerprint(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_matches_reference_vectors() {
        assert_eq!(fingerprint(b""), "cbf29ce484222325");
        assert_eq!(fingerprint(b"a"), "af63dc4c8601ec8c");
        assert_eq!(fingerprint(b"foobar"), "85944171f73967e8");
    }
}
