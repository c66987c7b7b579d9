//! Output bookkeeping: provenance sidecars and cleanup of partial results.

use std::path::{Path, PathBuf};

use serde::Serialize;
use utilret::corpus::write_atomic;

use crate::error::{Classify, Outcome};

/// Removes everything it tracks when dropped before [`Outputs::commit`].
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn track(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    /// Tracks a directory, but only when this command creates it.
    pub fn track_new_dir(&mut self, path: &Path) {
        if !path.exists() {
            self.dirs.push(path.to_path_buf());
        }
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Outcome<()> {
        self.track(path);
        write_atomic(path, bytes).or_data()
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Outcome<()> {
        let mut s = serde_json::to_string_pretty(value).or_data()?;
        s.push('\n');
        self.write(path, s.as_bytes())
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            if f.exists() {
                log::info!("removing partial output {}", f.display());
                let _ = std::fs::remove_file(f);
            }
        }
        for d in &self.dirs {
            if d.exists() {
                log::info!("removing partial output directory {}", d.display());
                let _ = std::fs::remove_dir_all(d);
            }
        }
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Sidecar describing how an artifact was produced.
#[derive(Debug, Serialize)]
pub struct Meta<'a, T: Serialize> {
    pub command: &'a str,
    pub config_sha256: &'a str,
    pub details: T,
}

pub fn write_meta<T: Serialize>(
    outputs: &mut Outputs,
    artifact: &Path,
    command: &str,
    config_sha256: &str,
    details: T,
) -> Outcome<()> {
    let meta = Meta {
        command,
        config_sha256,
        details,
    };
    outputs.write_json(&meta_path(artifact), &meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let sub = dir.path().join("sub");
        {
            let mut o = Outputs::new();
            o.track_new_dir(&sub);
            o.write(&a, b"x").unwrap();
            o.write(&sub.join("b.txt"), b"y").unwrap();
        }
        assert!(!a.exists());
        assert!(!sub.exists());
    }

    #[test]
    fn committed_outputs_stay() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let mut o = Outputs::new();
        o.write(&a, b"x").unwrap();
        write_meta(&mut o, &a, "test", "abc", serde_json::json!({"n": 1})).unwrap();
        o.commit();
        assert!(a.exists());
        let meta = std::fs::read_to_string(meta_path(&a)).unwrap();
        assert!(meta.contains("\"config_sha256\": \"abc\""));
    }

    #[test]
    fn existing_directories_are_never_removed() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut o = Outputs::new();
            o.track_new_dir(dir.path());
        }
        assert!(dir.path().exists());
    }
}
