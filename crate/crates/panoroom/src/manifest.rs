//! Output directories with a `manifest.json` that hashes every artifact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    /// Path relative to the output directory, or the input's file name.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn of(path: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            path: path.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        }
    }
}

/// A per-object placement problem. These never abort a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureRecord {
    pub instance_id: u16,
    /// Index into the input detection list.
    pub detection: usize,
    pub class: String,
    pub error: String,
    /// Whether an approximate footprint was placed instead.
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
    #[serde(default)]
    pub failures: Vec<FailureRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Collects artifacts written under one directory.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `rel` (forward slashes) and records its hash.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(Artifact::of(rel, bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.write(rel, &formats::to_json_bytes(value))
    }

    /// Writes the manifest listing everything written so far.
    pub fn finish(self, command: &str, seed: u64, inputs: Vec<Artifact>, failures: Vec<FailureRecord>) -> Result<Manifest> {
        let manifest = Manifest {
            tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            command: command.into(),
            seed,
            inputs,
            artifacts: self.artifacts,
            failures,
        };
        formats::write_json(&self.root.join(MANIFEST), &manifest)?;
        Ok(manifest)
    }
}

/// Hash record of an input file, named by its file name only so that
/// manifests do not depend on where the inputs live.
pub fn input_artifact(path: &Path, bytes: &[u8]) -> Artifact {
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Artifact::of(name, bytes)
}

/// Re-hashes every artifact of a manifest and reports the first mismatch.
pub fn verify(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = formats::read_json(&dir.join(MANIFEST))?;
    for (i, a) in manifest.artifacts.iter().enumerate() {
        let bytes = formats::read_bytes(&dir.join(&a.path))?;
        if sha256_hex(&bytes) != a.sha256 || bytes.len() as u64 != a.bytes {
            return Err(Error::schema(dir.join(MANIFEST), format!("/artifacts/{i}"), "hash mismatch"));
        }
    }
    Ok(manifest)
}
