//! Output directory ownership, artifact bookkeeping and the run manifest.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const LOCK_FILE: &str = ".sledger.lock";
pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Exclusive claim on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => bail!(
                "{} is in use by another run (remove {} if that run is gone)",
                dir.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: Option<String>,
    pub status: ArtifactStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub corpus_fingerprint: Option<String>,
    pub artifacts: Vec<Artifact>,
    pub notes: Vec<String>,
    pub status: String,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        let canonical = serde_json::to_vec(&config).expect("config serialises");
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256: sha256_bytes(&canonical),
            config,
            inputs: Vec::new(),
            corpus_fingerprint: None,
            artifacts: Vec::new(),
            notes: Vec::new(),
            status: "running".into(),
            error: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text).context("writing run manifest")
    }
}

/// Writes artifacts into the output directory and records each in the
/// manifest. A failed write leaves the entry marked partial.
pub struct ArtifactSink<'a> {
    pub dir: &'a Path,
    pub manifest: &'a mut RunManifest,
}

impl ArtifactSink<'_> {
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        match fs::write(&path, bytes) {
            Ok(()) => {
                self.manifest.artifacts.push(Artifact {
                    file: name.to_string(),
                    sha256: Some(sha256_bytes(bytes)),
                    status: ArtifactStatus::Complete,
                });
                Ok(())
            }
            Err(e) => {
                self.manifest.artifacts.push(Artifact { file: name.to_string(), sha256: None, status: ArtifactStatus::Partial });
                Err(e).with_context(|| format!("writing {}", path.display()))
            }
        }
    }
}
