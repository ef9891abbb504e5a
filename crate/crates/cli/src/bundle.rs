//! Report bundle assembly: content-hashed artifacts, a manifest, and an
//! atomic move of the finished directory into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("output directory {0} already exists")]
    OutputExists(PathBuf),
    #[error("bundle io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub step: String,
    pub message: String,
}

/// Bundle metadata. `created_utc` is the only field that varies between
/// reruns of the same scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub created_utc: String,
    pub scenario_name: String,
    pub scenario_sha256: String,
    pub case_ref: String,
    pub case_sha256: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub error: Option<ErrorRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A bundle under construction in a scratch directory next to its final
/// location. Artifacts are hashed as they are written; [`BundleWriter::finish`]
/// writes the manifest and renames the directory into place.
pub struct BundleWriter {
    final_dir: PathBuf,
    work_dir: PathBuf,
    artifacts: Vec<ArtifactEntry>,
}

impl BundleWriter {
    pub fn create(output_dir: &Path) -> Result<Self, BundleError> {
        if output_dir.exists() {
            return Err(BundleError::OutputExists(output_dir.to_path_buf()));
        }
        let work_dir = output_dir.with_extension("partial");
        if work_dir.exists() {
            fs::remove_dir_all(&work_dir).map_err(|e| io_err(&work_dir, e))?;
        }
        fs::create_dir_all(&work_dir).map_err(|e| io_err(&work_dir, e))?;
        Ok(Self {
            final_dir: output_dir.to_path_buf(),
            work_dir,
            artifacts: Vec::new(),
        })
    }

    pub fn write_artifact(&mut self, name: &str, contents: &[u8]) -> Result<(), BundleError> {
        let path = self.work_dir.join(name);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.artifacts.push(ArtifactEntry {
            file: name.to_string(),
            sha256: sha256_hex(contents),
        });
        Ok(())
    }

    /// Seals the bundle: manifest out, directory renamed to its final name.
    pub fn finish(
        mut self,
        mut manifest: Manifest,
        error: Option<ErrorRecord>,
    ) -> Result<(PathBuf, Manifest), BundleError> {
        self.artifacts.sort_by(|a, b| a.file.cmp(&b.file));
        manifest.artifacts = self.artifacts;
        manifest.error = error;
        let manifest_json =
            serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
        let manifest_path = self.work_dir.join("manifest.json");
        fs::write(&manifest_path, manifest_json).map_err(|e| io_err(&manifest_path, e))?;
        fs::rename(&self.work_dir, &self.final_dir).map_err(|e| io_err(&self.final_dir, e))?;
        Ok((self.final_dir, manifest))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> BundleError {
    BundleError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a bundle manifest back and checks every artifact hash.
pub fn verify_bundle(dir: &Path) -> Result<Manifest, String> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| format!("cannot read {}: {e}", manifest_path.display()))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| format!("bad manifest: {e}"))?;
    for artifact in &manifest.artifacts {
        let path = dir.join(&artifact.file);
        let bytes =
            fs::read(&path).map_err(|e| format!("missing artifact {}: {e}", artifact.file))?;
        let digest = sha256_hex(&bytes);
        if digest != artifact.sha256 {
            return Err(format!(
                "artifact {} hash mismatch: manifest {} vs file {digest}",
                artifact.file, artifact.sha256
            ));
        }
    }
    Ok(manifest)
}
