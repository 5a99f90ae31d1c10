//! Brute-force reference tabulation.
//!
//! Shares nothing with the streaming engine beyond the corpus types: its own
//! combination generator, a plain hash set of every simplex seen, and its
//! own keyword debut bookkeeping. Only meant for small corpora.

use std::collections::HashSet;

use crate::corpus::{CorpusStore, Refinement};
use crate::ledger::{LedgerError, LedgerRow, LedgerSeries};

/// Emission ceiling; beyond this the oracle refuses to run.
pub const ORACLE_EMISSION_LIMIT: u64 = 10_000_000;

fn choose(items: &[u32], size: usize, start: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if current.len() == size {
        out.push(current.clone());
        return;
    }
    let remaining = size - current.len();
    for i in start..items.len() {
        if items.len() - i < remaining {
            break;
        }
        current.push(items[i]);
        choose(items, size, i + 1, current, out);
        current.pop();
    }
}

fn subsets(items: &[u32], size: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if size > 0 {
        choose(items, size, 0, &mut Vec::with_capacity(size), &mut out);
    }
    out
}

fn binomial_small(n: u64, s: u64) -> u64 {
    if s > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..s {
        r = r * u128::from(n - i) / u128::from(i + 1);
    }
    r.min(u128::from(u64::MAX)) as u64
}

/// Recomputes the first-occurrence ledger by exhaustive enumeration.
pub fn oracle_tabulate(corpus: &CorpusStore, k: u8, refinement: Refinement) -> Result<LedgerSeries, LedgerError> {
    let size = usize::from(k) + 1;
    let emissions: u64 = corpus
        .articles()
        .map(|a| binomial_small(a.keywords(refinement).len() as u64, size as u64))
        .fold(0u64, u64::saturating_add);
    if emissions > ORACLE_EMISSION_LIMIT {
        return Err(LedgerError::OracleGuard { emissions, limit: ORACLE_EMISSION_LIMIT });
    }

    let mut seen_simplices: HashSet<Vec<u32>> = HashSet::new();
    let mut seen_keywords: HashSet<u32> = HashSet::new();
    let mut rows: Vec<LedgerRow> = Vec::new();
    for block in corpus.years() {
        let mut debut: HashSet<u32> = HashSet::new();
        for a in block.articles() {
            for kw in a.keywords(refinement) {
                if !seen_keywords.contains(&kw.0) {
                    debut.insert(kw.0);
                }
            }
        }
        seen_keywords.extend(debut.iter().copied());

        let mut fresh: HashSet<Vec<u32>> = HashSet::new();
        let mut processed = 0u64;
        for a in block.articles() {
            let mut ids: Vec<u32> = a.keywords(refinement).iter().map(|k| k.0).collect();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() < size {
                continue;
            }
            processed += 1;
            for combo in subsets(&ids, size) {
                if !seen_simplices.contains(&combo) {
                    fresh.insert(combo);
                }
            }
        }
        let peripheral = fresh.iter().filter(|c| c.iter().any(|id| debut.contains(id))).count() as u64;
        let new = fresh.len() as u64;
        seen_simplices.extend(fresh);

        let prev = rows.last();
        let row = LedgerRow {
            year: block.year,
            articles_processed: processed,
            cum_articles: prev.map_or(0, |p| p.cum_articles) + processed,
            new_simplices: new,
            cum_simplices: seen_simplices.len() as u64,
            new_peripheral: peripheral,
            new_keywords: debut.len() as u64,
            cum_keywords: seen_keywords.len() as u64,
        };
        rows.push(row);
    }
    Ok(LedgerSeries { k, refinement, rows })
}
