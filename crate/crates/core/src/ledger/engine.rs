use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::{Manifest, RunEntry, ShardManifest, MANIFEST_FILE, MANIFEST_FORMAT};
use super::runs::{DedupMerge, RecordIter, RunReader, RunWriter, IO_BUFFER};
use super::{HaltPoint, LedgerConfig, LedgerError, LedgerRow, LedgerSeries};
use crate::corpus::{CorpusStore, YearBlock};
use crate::ontology::KeywordId;
use crate::simplex::{arity, combinations, for_each_packed};

/// In-memory size of one buffered emission.
const RECORD_BYTES: u64 = 16;
const MIN_BATCH_RECORDS: u64 = 1024;

struct Bitset(Vec<u64>);

impl Bitset {
    fn new(bits: usize) -> Self {
        Self(vec![0; bits.div_ceil(64)])
    }

    #[inline]
    fn get(&self, i: u32) -> bool {
        self.0.get(i as usize / 64).is_some_and(|w| w >> (i % 64) & 1 == 1)
    }

    /// Sets bit `i`; true if it was previously clear.
    #[inline]
    fn insert(&mut self, i: u32) -> bool {
        let w = &mut self.0[i as usize / 64];
        let mask = 1u64 << (i % 64);
        let fresh = *w & mask == 0;
        *w |= mask;
        fresh
    }
}

#[inline]
fn shard_of(word: u128, shards: usize) -> usize {
    let mut x = (word as u64) ^ ((word >> 64) as u64).rotate_left(29);
    // splitmix64 finaliser
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    (x % shards as u64) as usize
}

#[inline]
fn is_peripheral(word: u128, arity: usize, debut: &Bitset) -> bool {
    (0..arity).any(|i| debut.get((word >> (32 * i)) as u32))
}

fn run_name(id: u32) -> String {
    format!("run{id:04}")
}

struct Shard {
    dir: PathBuf,
    runs: Vec<RunEntry>,
    next_run: u32,
    batch: Vec<u128>,
    pending: Vec<PathBuf>,
    next_pending: u32,
}

struct YearOutcome {
    new: u64,
    peripheral: u64,
}

impl Shard {
    fn run_path(&self, id: u32) -> PathBuf {
        self.dir.join(run_name(id))
    }

    fn spill(&mut self, width: usize, max_pending: usize) -> io::Result<()> {
        self.batch.sort_unstable();
        self.batch.dedup();
        let path = self.dir.join(format!("pending{:04}", self.next_pending));
        self.next_pending += 1;
        let mut w = RunWriter::create(&path, width)?;
        for &v in &self.batch {
            w.push(v)?;
        }
        let records = w.finish()?;
        log::debug!("spilled {records} records to {}", path.display());
        self.batch.clear();
        self.pending.push(path);
        if self.pending.len() >= max_pending {
            let merged = self.dir.join(format!("pending{:04}", self.next_pending));
            self.next_pending += 1;
            let sources = self
                .pending
                .iter()
                .map(|p| RunReader::open(p, width).map(|r| Box::new(r) as RecordIter))
                .collect::<io::Result<Vec<_>>>()?;
            let mut w = RunWriter::create(&merged, width)?;
            for v in DedupMerge::new(sources) {
                w.push(v?)?;
            }
            w.finish()?;
            for p in self.pending.drain(..) {
                fs::remove_file(p)?;
            }
            self.pending.push(merged);
        }
        Ok(())
    }

    /// Merges the year's distinct simplices against history and writes the
    /// genuinely new ones as a fresh run.
    fn close_year(&mut self, debut: &Bitset, arity: usize, width: usize) -> io::Result<YearOutcome> {
        let mut batch = std::mem::take(&mut self.batch);
        batch.sort_unstable();
        batch.dedup();
        let mut sources: Vec<RecordIter> = Vec::with_capacity(self.pending.len() + 1);
        for p in &self.pending {
            sources.push(Box::new(RunReader::open(p, width)?));
        }
        sources.push(Box::new(batch.into_iter().map(Ok)));
        let year = DedupMerge::new(sources);

        let history_sources = self
            .runs
            .iter()
            .map(|r| RunReader::open(&self.run_path(r.id), width).map(|x| Box::new(x) as RecordIter))
            .collect::<io::Result<Vec<_>>>()?;
        let mut history = DedupMerge::new(history_sources);
        let mut head = history.next().transpose()?;

        let mut writer: Option<RunWriter> = None;
        let mut outcome = YearOutcome { new: 0, peripheral: 0 };
        for y in year {
            let y = y?;
            while let Some(h) = head {
                if h >= y {
                    break;
                }
                head = history.next().transpose()?;
            }
            if head == Some(y) {
                continue;
            }
            outcome.new += 1;
            if is_peripheral(y, arity, debut) {
                outcome.peripheral += 1;
            }
            if writer.is_none() {
                writer = Some(RunWriter::create(&self.run_path(self.next_run), width)?);
            }
            writer.as_mut().expect("writer just created").push(y)?;
        }
        if let Some(w) = writer {
            let records = w.finish()?;
            self.runs.push(RunEntry { id: self.next_run, records });
            self.next_run += 1;
        }
        for p in self.pending.drain(..) {
            fs::remove_file(p)?;
        }
        self.next_pending = 0;
        Ok(outcome)
    }

    /// Folds all history runs into one. Returns the superseded files, which
    /// may only be removed once the manifest no longer lists them.
    fn compact(&mut self, width: usize) -> io::Result<Vec<PathBuf>> {
        let sources = self
            .runs
            .iter()
            .map(|r| RunReader::open(&self.run_path(r.id), width).map(|x| Box::new(x) as RecordIter))
            .collect::<io::Result<Vec<_>>>()?;
        let id = self.next_run;
        let mut w = RunWriter::create(&self.run_path(id), width)?;
        for v in DedupMerge::new(sources) {
            w.push(v?)?;
        }
        let records = w.finish()?;
        let old = self.runs.iter().map(|r| self.run_path(r.id)).collect();
        self.runs = vec![RunEntry { id, records }];
        self.next_run += 1;
        Ok(old)
    }
}

pub(crate) struct Engine<'a> {
    corpus: &'a CorpusStore,
    cfg: &'a LedgerConfig,
    arity: usize,
    width: usize,
    manifest_path: PathBuf,
    manifest: Manifest,
    shards: Vec<Shard>,
    batch_cap: usize,
    chunk_cap: u64,
    merge_parallelism: usize,
    seen: Bitset,
}

fn spill_err(path: &Path) -> impl FnOnce(io::Error) -> LedgerError + '_ {
    move |source| LedgerError::SpillDirectory { path: path.to_path_buf(), source }
}

impl<'a> Engine<'a> {
    pub(crate) fn open(corpus: &'a CorpusStore, cfg: &'a LedgerConfig) -> Result<Self, LedgerError> {
        let arity = arity(cfg.k);
        let width = 4 * arity;
        let shards = cfg.shard_count as u64;
        let budget = cfg.memory_budget_bytes;

        // Budget split: a quarter for shard batches, an eighth for the
        // enumeration chunk, an eighth for merge I/O buffers; the rest
        // absorbs allocator growth.
        let frame_io = (2 * cfg.max_runs_per_shard as u64 + 2) * IO_BUFFER as u64;
        let batch_cap = budget / 4 / shards / RECORD_BYTES;
        let chunk_cap = (budget / 8 / RECORD_BYTES).max(1);
        let threads = rayon::current_num_threads() as u64;
        let merge_parallelism = threads.min(shards).min(budget / 8 / frame_io);
        if batch_cap < MIN_BATCH_RECORDS || merge_parallelism == 0 {
            let needed = (4 * shards * MIN_BATCH_RECORDS * RECORD_BYTES).max(8 * frame_io);
            return Err(LedgerError::BudgetTooSmall { budget, needed, shards: cfg.shard_count });
        }

        let state_dir = cfg.state_directory();
        let manifest_path = state_dir.join(MANIFEST_FILE);
        let fingerprint = corpus.fingerprint();
        let existing = if cfg.resume {
            Manifest::read(&manifest_path).map_err(|e| match e.kind() {
                io::ErrorKind::InvalidData => LedgerError::Corrupt(e.to_string()),
                _ => LedgerError::Io(e),
            })?
        } else {
            None
        };
        if existing.is_none() && state_dir.exists() {
            fs::remove_dir_all(&state_dir).map_err(spill_err(&state_dir))?;
        }
        fs::create_dir_all(&state_dir).map_err(spill_err(&state_dir))?;

        let manifest = match existing {
            Some(m) => {
                let mismatch = if m.format != MANIFEST_FORMAT {
                    Some(format!("format {} (expected {MANIFEST_FORMAT})", m.format))
                } else if m.k != cfg.k || m.refinement != cfg.refinement {
                    Some(format!("manifest is for k={} {}", m.k, m.refinement))
                } else if m.shard_count != cfg.shard_count || m.shards.len() != cfg.shard_count {
                    Some(format!("manifest has {} shards, config {}", m.shard_count, cfg.shard_count))
                } else if m.corpus_fingerprint != fingerprint {
                    Some("corpus fingerprint differs".to_string())
                } else {
                    None
                };
                if let Some(reason) = mismatch {
                    return Err(LedgerError::ManifestMismatch(reason));
                }
                m
            }
            None => Manifest {
                format: MANIFEST_FORMAT,
                k: cfg.k,
                refinement: cfg.refinement,
                shard_count: cfg.shard_count,
                corpus_fingerprint: fingerprint,
                watermark: None,
                rows: Vec::new(),
                shards: vec![ShardManifest::default(); cfg.shard_count],
            },
        };

        let mut shard_states = Vec::with_capacity(cfg.shard_count);
        for (i, sm) in manifest.shards.iter().enumerate() {
            let dir = state_dir.join(format!("shard{i:04}"));
            fs::create_dir_all(&dir).map_err(spill_err(&dir))?;
            let shard = Shard {
                dir,
                runs: sm.runs.clone(),
                next_run: sm.next_run,
                batch: Vec::new(),
                pending: Vec::new(),
                next_pending: 0,
            };
            reconcile_shard_dir(&shard, width)?;
            shard_states.push(shard);
        }

        let mut seen = Bitset::new(corpus.keyword_bound() as usize);
        if let Some(w) = manifest.watermark {
            for block in corpus.years().iter().take_while(|b| b.year <= w) {
                for a in block.articles() {
                    for k in a.keywords(cfg.refinement) {
                        seen.insert(k.0);
                    }
                }
            }
        }

        Ok(Self {
            corpus,
            cfg,
            arity,
            width,
            manifest_path,
            manifest,
            shards: shard_states,
            batch_cap: batch_cap as usize,
            chunk_cap,
            merge_parallelism: merge_parallelism as usize,
            seen,
        })
    }

    pub(crate) fn run(mut self) -> Result<LedgerSeries, LedgerError> {
        let watermark = self.manifest.watermark;
        for block in self.corpus.years() {
            if watermark.is_some_and(|w| block.year <= w) {
                continue;
            }
            self.process_year(block)?;
        }
        Ok(LedgerSeries {
            k: self.cfg.k,
            refinement: self.cfg.refinement,
            rows: self.manifest.rows,
        })
    }

    fn process_year(&mut self, block: &YearBlock) -> Result<(), LedgerError> {
        let refinement = self.cfg.refinement;
        let mut debut = Bitset::new(self.seen.0.len() * 64);
        let mut new_keywords = 0u64;
        for a in block.articles() {
            for k in a.keywords(refinement) {
                if self.seen.insert(k.0) {
                    debut.insert(k.0);
                    new_keywords += 1;
                }
            }
        }

        let eligible: Vec<&[KeywordId]> = block
            .articles()
            .iter()
            .map(|a| a.keywords(refinement))
            .filter(|k| k.len() >= self.arity)
            .collect();
        let articles_processed = eligible.len() as u64;

        let mut start = 0;
        let mut pending_emissions = 0u64;
        for (i, kws) in eligible.iter().enumerate() {
            pending_emissions += combinations(kws.len(), self.arity);
            if pending_emissions >= self.chunk_cap {
                self.absorb(&eligible[start..=i])?;
                start = i + 1;
                pending_emissions = 0;
            }
        }
        if start < eligible.len() {
            self.absorb(&eligible[start..])?;
        }

        let (arity, width) = (self.arity, self.width);
        let mut new_simplices = 0u64;
        let mut new_peripheral = 0u64;
        for group in self.shards.chunks_mut(self.merge_parallelism) {
            let outcomes = group
                .par_iter_mut()
                .map(|s| s.close_year(&debut, arity, width))
                .collect::<io::Result<Vec<_>>>()?;
            for o in outcomes {
                new_simplices += o.new;
                new_peripheral += o.peripheral;
            }
        }

        if self.cfg.halt == Some(HaltPoint::BeforeCommit(block.year)) {
            return Err(LedgerError::Halted { year: block.year });
        }

        let prev = self.manifest.rows.last().copied();
        let row = LedgerRow {
            year: block.year,
            articles_processed,
            cum_articles: prev.map_or(0, |p| p.cum_articles) + articles_processed,
            new_simplices,
            cum_simplices: prev.map_or(0, |p| p.cum_simplices) + new_simplices,
            new_peripheral,
            new_keywords,
            cum_keywords: prev.map_or(0, |p| p.cum_keywords) + new_keywords,
        };
        self.manifest.rows.push(row);
        self.manifest.watermark = Some(block.year);
        self.commit()?;
        log::debug!(
            "k={} {} {}: {} new simplices, {} articles",
            self.cfg.k,
            refinement,
            block.year,
            new_simplices,
            articles_processed
        );

        let max_runs = self.cfg.max_runs_per_shard;
        let superseded: Vec<PathBuf> = self
            .shards
            .par_iter_mut()
            .filter(|s| s.runs.len() > max_runs)
            .map(|s| s.compact(width))
            .collect::<io::Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        if !superseded.is_empty() {
            self.commit()?;
            for p in superseded {
                fs::remove_file(p)?;
            }
        }

        if self.cfg.halt == Some(HaltPoint::AfterCommit(block.year)) {
            return Err(LedgerError::Halted { year: block.year });
        }
        Ok(())
    }

    /// Enumerates a chunk of articles into the shard batches, spilling any
    /// batch that reaches its cap.
    fn absorb(&mut self, chunk: &[&[KeywordId]]) -> Result<(), LedgerError> {
        let n = self.shards.len();
        let arity = self.arity;
        let parts = chunk
            .par_iter()
            .fold(
                || vec![Vec::<u128>::new(); n],
                |mut acc, kws| {
                    for_each_packed(kws, arity, |w| acc[shard_of(w, n)].push(w));
                    acc
                },
            )
            .reduce(
                || vec![Vec::new(); n],
                |mut a, b| {
                    for (x, mut y) in a.iter_mut().zip(b) {
                        if x.is_empty() {
                            *x = y;
                        } else {
                            x.append(&mut y);
                        }
                    }
                    a
                },
            );
        let (cap, width, max_pending) = (self.batch_cap, self.width, self.cfg.max_runs_per_shard);
        self.shards
            .par_iter_mut()
            .zip(parts)
            .try_for_each(|(s, part)| -> io::Result<()> {
                s.batch.extend(part);
                if s.batch.len() >= cap {
                    s.spill(width, max_pending)?;
                }
                Ok(())
            })?;
        Ok(())
    }

    fn commit(&mut self) -> Result<(), LedgerError> {
        self.manifest.shards = self
            .shards
            .iter()
            .map(|s| ShardManifest { next_run: s.next_run, runs: s.runs.clone() })
            .collect();
        self.manifest.write_atomic(&self.manifest_path)?;
        Ok(())
    }
}

/// Deletes files the manifest does not list (leftovers of an interrupted
/// year) and checks that every listed run is intact.
fn reconcile_shard_dir(shard: &Shard, width: usize) -> Result<(), LedgerError> {
    let listed: Vec<String> = shard.runs.iter().map(|r| run_name(r.id)).collect();
    for entry in fs::read_dir(&shard.dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !listed.contains(&name) {
            fs::remove_file(entry.path())?;
        }
    }
    for r in &shard.runs {
        let path = shard.run_path(r.id);
        let len = fs::metadata(&path)
            .map_err(|e| LedgerError::Corrupt(format!("{}: {e}", path.display())))?
            .len();
        if len != r.records * width as u64 {
            return Err(LedgerError::Corrupt(format!(
                "{}: {len} bytes, expected {}",
                path.display(),
                r.records * width as u64
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitset_basics() {
        let mut b = Bitset::new(130);
        assert!(b.insert(129));
        assert!(!b.insert(129));
        assert!(b.get(129));
        assert!(!b.get(128));
        assert!(!b.get(10_000));
    }

    #[test]
    fn sharding_is_stable_and_spread() {
        let mut counts = [0usize; 8];
        for w in 0..8000u128 {
            let s = shard_of(w << 32 | (w + 1), 8);
            assert_eq!(s, shard_of(w << 32 | (w + 1), 8));
            counts[s] += 1;
        }
        assert!(counts.iter().all(|&c| c > 800), "{counts:?}");
    }

    #[test]
    fn peripheral_checks_every_slot() {
        let mut debut = Bitset::new(64);
        debut.insert(7);
        let w = crate::simplex::pack(&[KeywordId(1), KeywordId(3), KeywordId(7)]);
        assert!(is_peripheral(w, 3, &debut));
        let w = crate::simplex::pack(&[KeywordId(7), KeywordId(9)]);
        assert!(is_peripheral(w, 2, &debut));
        let w = crate::simplex::pack(&[KeywordId(8), KeywordId(9)]);
        assert!(!is_peripheral(w, 2, &debut));
    }
}
