//! Run-directory bookkeeping: which command produced each artifact, under
//! which config, and what its bytes hash to.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub sha256: String,
    pub producer: String,
    pub config_hash: String,
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

/// Hash of a file, or of a directory's sorted relative paths and contents.
pub fn hash_path(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        for rel in files {
            let bytes = fs::read(path.join(&rel))?;
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0u8]);
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    } else {
        h.update(fs::read(path).with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

pub struct RunDir {
    root: PathBuf,
    config_hash: String,
    manifest: Manifest,
}

impl RunDir {
    pub fn open(root: PathBuf, config_hash: String) -> Result<Self> {
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        let path = root.join(MANIFEST_FILE);
        let manifest = if path.exists() {
            serde_json::from_slice(&fs::read(&path)?).with_context(|| format!("parsing {}", path.display()))?
        } else {
            Manifest::default()
        };
        Ok(Self {
            root,
            config_hash,
            manifest,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.root.join(artifact)
    }

    /// Checks that `artifact` exists, was built under the current config and
    /// has not changed since; returns its path.
    pub fn require(&self, artifact: &str, producer: &str) -> Result<PathBuf> {
        let path = self.path(artifact);
        let entry = self.manifest.artifacts.get(artifact);
        let Some(entry) = entry.filter(|_| path.exists()) else {
            bail!("missing artifact `{artifact}`: run `prefir {producer}` first");
        };
        if entry.config_hash != self.config_hash {
            bail!(
                "stale artifact `{artifact}`: built under config {} but the current config is {}; rerun `prefir {}`",
                short(&entry.config_hash),
                short(&self.config_hash),
                entry.producer
            );
        }
        let actual = hash_path(&path)?;
        if actual != entry.sha256 {
            bail!(
                "stale artifact `{artifact}`: contents changed since `prefir {}` wrote it",
                entry.producer
            );
        }
        Ok(path)
    }

    pub fn has(&self, artifact: &str) -> bool {
        self.manifest.artifacts.contains_key(artifact) && self.path(artifact).exists()
    }

    /// Removes an artifact (file or directory) so a producer can rebuild it.
    pub fn clear(&mut self, artifact: &str) -> Result<PathBuf> {
        let path = self.path(artifact);
        if path.is_dir() {
            fs::remove_dir_all(&path)?;
        } else if path.exists() {
            fs::remove_file(&path)?;
        }
        self.manifest.artifacts.remove(artifact);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(path)
    }

    pub fn record(&mut self, artifact: &str, producer: &str, inputs: &[&str]) -> Result<()> {
        let sha256 = hash_path(&self.path(artifact)).map_err(|e| anyhow!("hashing `{artifact}`: {e}"))?;
        self.manifest.artifacts.insert(
            artifact.to_string(),
            ArtifactEntry {
                sha256,
                producer: producer.to_string(),
                config_hash: self.config_hash.clone(),
                inputs: inputs.iter().map(|s| s.to_string()).collect(),
            },
        );
        self.save()
    }

    fn save(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(self.root.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}
