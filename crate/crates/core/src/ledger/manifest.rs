//! Checkpoint manifest for crash-restart.
//!
//! The manifest is the commit point of a year: run files not listed in it
//! are discarded on resume.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LedgerRow;
use crate::corpus::Refinement;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEntry {
    pub id: u32,
    pub records: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardManifest {
    pub next_run: u32,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub k: u8,
    pub refinement: Refinement,
    pub shard_count: usize,
    pub corpus_fingerprint: String,
    /// Last fully committed year.
    pub watermark: Option<i32>,
    pub rows: Vec<LedgerRow>,
    pub shards: Vec<ShardManifest>,
}

impl Manifest {
    pub fn read(path: &Path) -> io::Result<Option<Self>> {
        match fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Write-then-rename so a crash leaves either the old or the new manifest.
    pub fn write_atomic(&self, path: &Path) -> io::Result<()> {
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&serde_json::to_vec_pretty(self).map_err(io::Error::other)?)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        if let Some(dir) = path.parent() {
            // Directory fsync is not supported everywhere; the rename is what matters.
            let _ = File::open(dir).and_then(|d| d.sync_all());
        }
        Ok(())
    }
}
