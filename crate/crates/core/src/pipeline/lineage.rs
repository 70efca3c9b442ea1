//! Artifact lineage. Every workspace artifact gets a `<name>.meta.json`
//! sidecar holding its own SHA-256 and the SHA-256 of each input it was
//! built from; consumers re-hash before trusting anything.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fingerprint::Fingerprint;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub sha256: String,
    /// Input path -> SHA-256 at build time.
    pub inputs: BTreeMap<String, String>,
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Hashes a raw input file (one without a sidecar).
pub fn input_fingerprint(path: &Path) -> Result<Fingerprint> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Fingerprint::of_file(path)
}

/// Writes the sidecar for a freshly written `artifact`.
pub fn record(artifact: &Path, inputs: &[(&Path, Fingerprint)]) -> Result<Fingerprint> {
    let fp = Fingerprint::of_file(artifact)?;
    let meta = ArtifactMeta {
        sha256: fp.to_hex(),
        inputs: inputs
            .iter()
            .map(|(p, f)| (p.display().to_string(), f.to_hex()))
            .collect(),
    };
    let path = meta_path(artifact);
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(fp)
}

fn stale(path: &Path, reason: String) -> Error {
    Error::StaleArtifact {
        path: path.to_path_buf(),
        reason,
    }
}

/// Checks that `artifact` exists, is unmodified since it was recorded, and
/// that none of its inputs changed since. Returns its fingerprint.
pub fn verify(artifact: &Path) -> Result<Fingerprint> {
    if !artifact.exists() {
        return Err(Error::MissingArtifact(artifact.to_path_buf()));
    }
    let fp = Fingerprint::of_file(artifact)?;
    let mpath = meta_path(artifact);
    let text = std::fs::read_to_string(&mpath).map_err(|_| stale(artifact, "no lineage record".into()))?;
    let meta: ArtifactMeta =
        serde_json::from_str(&text).map_err(|e| stale(artifact, format!("unreadable lineage record: {e}")))?;
    if meta.sha256 != fp.to_hex() {
        return Err(stale(artifact, "modified after it was written".into()));
    }
    for (input, recorded) in &meta.inputs {
        let p = Path::new(input);
        if !p.exists() {
            return Err(stale(artifact, format!("input {input} no longer exists")));
        }
        if Fingerprint::of_file(p)?.to_hex() != *recorded {
            return Err(stale(artifact, format!("input {input} changed since it was built")));
        }
    }
    Ok(fp)
}
