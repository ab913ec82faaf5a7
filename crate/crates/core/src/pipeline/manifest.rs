//! Content-hash stage manifests and the output-directory lock.

use std::fs::{File, OpenOptions};
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    /// Hash of the stage's configuration and input file contents.
    pub hash: String,
    pub outputs: Vec<OutputFile>,
    pub duration_s: f64,
}

impl StageManifest {
    pub fn path(out_dir: &Path, stage: &str) -> PathBuf {
        out_dir.join("manifests").join(format!("{stage}.json"))
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        let path = Self::path(out_dir, &self.stage);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(out_dir: &Path, stage: &str) -> Result<Option<Self>> {
        let path = Self::path(out_dir, stage);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    /// Every listed output exists with the recorded content.
    pub fn outputs_intact(&self, out_dir: &Path) -> Result<bool> {
        for o in &self.outputs {
            let p = out_dir.join(&o.path);
            if !p.is_file() || file_sha256(&p)? != o.sha256 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Files under `dir`, sorted, as paths relative to `root`.
pub fn list_files(root: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))?;
        for entry in entries {
            let p = entry.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn describe_outputs(root: &Path, dir: &Path) -> Result<Vec<OutputFile>> {
    list_files(root, dir)?
        .into_iter()
        .map(|rel| {
            Ok(OutputFile {
                path: rel_string(&rel),
                sha256: file_sha256(&root.join(&rel))?,
            })
        })
        .collect()
}

fn rel_string(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Incremental stage key: labelled config values and input file hashes.
pub struct StageHasher(Sha256);

impl StageHasher {
    pub fn new(stage: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"stage\0");
        h.update(stage.as_bytes());
        Self(h)
    }

    pub fn value(&mut self, label: &str, v: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string(v)?;
        self.bytes(label, text.as_bytes());
        Ok(())
    }

    pub fn bytes(&mut self, label: &str, bytes: &[u8]) {
        self.0.update((label.len() as u64).to_le_bytes());
        self.0.update(label.as_bytes());
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

/// Exclusive lock on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub const FILE: &'static str = ".updsim.lock";

    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(Self::FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::config(
                "output_dir",
                format!(
                    "{} is locked by another run (remove {} if it is stale)",
                    dir.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            file_sha256(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hasher_separates_labels_and_values() {
        let key = |pairs: &[(&str, &str)]| {
            let mut h = StageHasher::new("s");
            for (l, v) in pairs {
                h.bytes(l, v.as_bytes());
            }
            h.finish()
        };
        assert_eq!(key(&[("a", "bc")]), key(&[("a", "bc")]));
        assert_ne!(key(&[("a", "bc")]), key(&[("ab", "c")]));
        assert_ne!(key(&[("a", "b")]), key(&[("a", "c")]));
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(Error::Config { .. })));
        drop(lock);
        assert!(DirLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn manifest_detects_changed_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir_all(root.join("s/sub")).unwrap();
        std::fs::write(root.join("s/b.txt"), "b").unwrap();
        std::fs::write(root.join("s/sub/a.txt"), "a").unwrap();
        let m = StageManifest {
            stage: "s".into(),
            hash: "h".into(),
            outputs: describe_outputs(root, &root.join("s")).unwrap(),
            duration_s: 0.0,
        };
        assert_eq!(
            m.outputs.iter().map(|o| o.path.as_str()).collect::<Vec<_>>(),
            ["s/b.txt", "s/sub/a.txt"]
        );
        m.save(root).unwrap();
        assert_eq!(StageManifest::load(root, "s").unwrap().unwrap(), m);
        assert!(m.outputs_intact(root).unwrap());
        std::fs::write(root.join("s/b.txt"), "B").unwrap();
        assert!(!m.outputs_intact(root).unwrap());
        std::fs::remove_file(root.join("s/b.txt")).unwrap();
        assert!(!m.outputs_intact(root).unwrap());
    }
}
