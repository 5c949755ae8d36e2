//! Content-hash stage cache: `<dir>/<file>` plus `<dir>/<file>.key`.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tractlens_core::write_atomic;

use crate::CliError;

/// Incremental sha256 over length-prefixed parts, so `["ab","c"]` and `["a","bc"]` differ.
#[derive(Default)]
pub struct KeyBuilder(Sha256);

impl KeyBuilder {
    pub fn new(stage: &str) -> Self {
        let mut k = Self::default();
        k.add(stage.as_bytes());
        k
    }

    pub fn add(&mut self, part: &[u8]) -> &mut Self {
        self.0.update((part.len() as u64).to_le_bytes());
        self.0.update(part);
        self
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

pub struct StageCache {
    dir: PathBuf,
}

impl StageCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn key_path(&self, file: &str) -> PathBuf {
        self.dir.join(format!("{file}.key"))
    }

    /// The cached text when its key matches.
    pub fn lookup(&self, file: &str, key: &str) -> Option<String> {
        let stored = std::fs::read_to_string(self.key_path(file)).ok()?;
        if stored.trim() != key {
            return None;
        }
        std::fs::read_to_string(self.path(file)).ok()
    }

    /// Writes the output before its key so an interrupted store never looks fresh.
    pub fn store(&self, file: &str, key: &str, contents: &str) -> Result<(), CliError> {
        let _ = std::fs::remove_file(self.key_path(file));
        write_file(&self.path(file), contents.as_bytes())?;
        write_file(&self.key_path(file), format!("{key}\n").as_bytes())
    }
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    write_atomic(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_length_prefixed() {
        let k = |parts: &[&str]| {
            let mut b = KeyBuilder::new("s");
            for p in parts {
                b.add(p.as_bytes());
            }
            b.finish()
        };
        assert_ne!(k(&["ab", "c"]), k(&["a", "bc"]));
        assert_eq!(k(&["x"]), k(&["x"]));
    }

    #[test]
    fn stale_key_misses() {
        let dir = tempfile::tempdir().unwrap();
        let c = StageCache::new(dir.path());
        assert!(c.lookup("a.csv", "k1").is_none());
        c.store("a.csv", "k1", "hello").unwrap();
        assert_eq!(c.lookup("a.csv", "k1").as_deref(), Some("hello"));
        assert!(c.lookup("a.csv", "k2").is_none());
    }
}
