//! Exact year-granular first-occurrence ledger of keyword combinations.
//!
//! Years are swept in ascending order. A simplex is new in year `t` when it
//! occurs in some year-`t` article and in no article of an earlier year; it
//! is peripheral when at least one of its keywords also debuts in `t`.
//!
//! Distinct simplices are kept on disk. Emissions of a year are hash-sharded
//! by their packed encoding; each shard buffers a bounded in-memory batch
//! (spilling sorted runs when full) and at year end merges the year's
//! distinct simplices against its sorted history runs. Genuinely new
//! entries are counted, classified and appended as a new history run.
//! A manifest written after every year allows resuming after a crash.

mod engine;
mod manifest;
mod runs;

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusStore, Refinement};
use crate::ontology::KeywordId;
use crate::simplex::MAX_ORDER;

pub use manifest::{Manifest, RunEntry, ShardManifest, MANIFEST_FILE, MANIFEST_FORMAT};

/// Per-year tallies for one `(k, refinement)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub year: i32,
    /// Articles with at least `k + 1` keywords under the refinement.
    pub articles_processed: u64,
    pub cum_articles: u64,
    pub new_simplices: u64,
    pub cum_simplices: u64,
    pub new_peripheral: u64,
    pub new_keywords: u64,
    pub cum_keywords: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSeries {
    pub k: u8,
    pub refinement: Refinement,
    pub rows: Vec<LedgerRow>,
}

impl LedgerSeries {
    pub fn row(&self, year: i32) -> Option<&LedgerRow> {
        self.rows.iter().find(|r| r.year == year)
    }

    pub fn total_simplices(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.cum_simplices)
    }

    /// Checks the cumulative, ordering and peripheral-bound invariants.
    pub fn check_consistency(&self) -> Result<(), String> {
        let (mut arts, mut simp, mut kws) = (0u64, 0u64, 0u64);
        let mut last_year = None;
        for r in &self.rows {
            if last_year.is_some_and(|y| y >= r.year) {
                return Err(format!("year {} out of order", r.year));
            }
            last_year = Some(r.year);
            arts += r.articles_processed;
            simp += r.new_simplices;
            kws += r.new_keywords;
            if (arts, simp, kws) != (r.cum_articles, r.cum_simplices, r.cum_keywords) {
                return Err(format!("year {}: cumulative columns are not prefix sums", r.year));
            }
            if r.new_peripheral > r.new_simplices {
                return Err(format!("year {}: peripheral exceeds new simplices", r.year));
            }
            if r.new_keywords == 0 && r.new_peripheral != 0 {
                return Err(format!("year {}: peripheral without a debut keyword", r.year));
            }
        }
        Ok(())
    }

    /// CSV with header
    /// `year,k,refinement,articles_processed,cum_articles,new_simplices,cum_simplices,new_peripheral,new_keywords,cum_keywords`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "year",
            "k",
            "refinement",
            "articles_processed",
            "cum_articles",
            "new_simplices",
            "cum_simplices",
            "new_peripheral",
            "new_keywords",
            "cum_keywords",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.year.to_string(),
                self.k.to_string(),
                self.refinement.to_string(),
                r.articles_processed.to_string(),
                r.cum_articles.to_string(),
                r.new_simplices.to_string(),
                r.cum_simplices.to_string(),
                r.new_peripheral.to_string(),
                r.new_keywords.to_string(),
                r.cum_keywords.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stops a run at a chosen point; used to exercise crash-restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltPoint {
    /// Stop after the year's manifest commit.
    AfterCommit(i32),
    /// Stop after the year's run files are written but before the commit.
    BeforeCommit(i32),
}

#[derive(Debug, Clone)]
pub struct LedgerConfig {
    /// Simplex order. `1..=3` for reporting; order 0 tallies single keywords.
    pub k: u8,
    pub refinement: Refinement,
    pub shard_count: usize,
    pub memory_budget_bytes: u64,
    pub spill_directory: PathBuf,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// History runs per shard before they are compacted into one.
    pub max_runs_per_shard: usize,
    /// Continue from an existing manifest instead of starting over.
    pub resume: bool,
    pub halt: Option<HaltPoint>,
}

impl LedgerConfig {
    pub const DEFAULT_SHARDS: usize = 16;
    pub const DEFAULT_BUDGET: u64 = 1 << 30;

    pub fn new(k: u8, refinement: Refinement, spill_directory: impl Into<PathBuf>) -> Self {
        Self {
            k,
            refinement,
            shard_count: Self::DEFAULT_SHARDS,
            memory_budget_bytes: Self::DEFAULT_BUDGET,
            spill_directory: spill_directory.into(),
            threads: None,
            max_runs_per_shard: 8,
            resume: false,
            halt: None,
        }
    }

    pub fn validate(&self) -> Result<(), LedgerError> {
        if self.k > MAX_ORDER {
            return Err(LedgerError::InvalidConfig(format!("order {} exceeds {MAX_ORDER}", self.k)));
        }
        if self.shard_count == 0 {
            return Err(LedgerError::InvalidConfig("shard_count must be at least 1".into()));
        }
        if self.memory_budget_bytes == 0 {
            return Err(LedgerError::InvalidConfig("memory budget must be positive".into()));
        }
        if self.max_runs_per_shard < 2 {
            return Err(LedgerError::InvalidConfig("max_runs_per_shard must be at least 2".into()));
        }
        if self.threads == Some(0) {
            return Err(LedgerError::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Directory holding this `(k, refinement)`'s runs and manifest.
    pub fn state_directory(&self) -> PathBuf {
        self.spill_directory.join(format!("k{}", self.k)).join(self.refinement.as_str())
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("invalid ledger configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "memory budget of {budget} bytes is too small for {shards} shards; \
         need at least {needed} bytes (raise the budget or lower the shard count)"
    )]
    BudgetTooSmall { budget: u64, needed: u64, shards: usize },
    #[error("spill directory {path} is not writable: {source}")]
    SpillDirectory { path: PathBuf, source: io::Error },
    #[error("existing manifest does not match this run: {0}")]
    ManifestMismatch(String),
    #[error("ledger state is corrupt: {0}")]
    Corrupt(String),
    #[error("tabulation halted at year {year}")]
    Halted { year: i32 },
    #[error("oracle guard exceeded: {emissions} emissions (limit {limit})")]
    OracleGuard { emissions: u64, limit: u64 },
    #[error("could not build worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// First year each keyword occurs under `refinement`.
pub fn keyword_debut_years(corpus: &CorpusStore, refinement: Refinement) -> BTreeMap<KeywordId, i32> {
    let mut debut = BTreeMap::new();
    for block in corpus.years() {
        for a in block.articles() {
            for &k in a.keywords(refinement) {
                debut.entry(k).or_insert(block.year);
            }
        }
    }
    debut
}

/// Sweeps `corpus` and returns the exact ledger for `config.k` and
/// `config.refinement`. Results do not depend on shard or thread counts.
pub fn tabulate(corpus: &CorpusStore, config: &LedgerConfig) -> Result<LedgerSeries, LedgerError> {
    config.validate()?;
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| LedgerError::ThreadPool(e.to_string()))?
            .install(|| engine::Engine::open(corpus, config)?.run()),
        None => engine::Engine::open(corpus, config)?.run(),
    }
}
