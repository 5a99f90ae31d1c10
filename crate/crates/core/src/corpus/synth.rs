//! Seeded synthetic corpora for desk-scale verification.
//!
//! Keywords enter the vocabulary on a fixed schedule: `initial` ids debut in
//! the first year and `per_year` more in each later year. Every scheduled
//! keyword is placed in at least one article of its debut year, so debut
//! years match the schedule exactly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ArticleRecord, CorpusStore};
use crate::ontology::KeywordId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KeywordCount {
    Fixed { n: u32 },
    /// Inclusive range.
    Uniform { min: u32, max: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ArticleGrowth {
    Constant,
    /// Year `i` (counted from the first year) gets weight `exp(rate * i)`.
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrySchedule {
    pub initial: u32,
    pub per_year: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_articles: u64,
    pub vocab_size: u32,
    pub first_year: i32,
    pub last_year: i32,
    pub keywords_per_article: KeywordCount,
    pub major_fraction: f64,
    pub entry: EntrySchedule,
    pub growth: ArticleGrowth,
    /// Sampling weight of keyword `i` is `1 / (i + 1)^zipf_exponent`; zero is uniform.
    pub zipf_exponent: f64,
    /// Articles draw only from keywords debuting in their own year.
    pub fresh_only: bool,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_articles: 1_000,
            vocab_size: 200,
            first_year: 2000,
            last_year: 2019,
            keywords_per_article: KeywordCount::Uniform { min: 2, max: 8 },
            major_fraction: 0.4,
            entry: EntrySchedule { initial: 20, per_year: 5 },
            growth: ArticleGrowth::Constant,
            zipf_exponent: 0.0,
            fresh_only: false,
            seed: 1,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic parameters: {0}")]
    Invalid(String),
    #[error("entry schedule needs {needed} keywords but the vocabulary has {vocab_size}")]
    VocabExhausted { needed: u64, vocab_size: u32 },
    #[error("year {year}: {debuts} debut keywords do not fit in {slots} keyword slots")]
    InsufficientCapacity { year: i32, debuts: u32, slots: u64 },
}

impl SynthParams {
    pub fn n_years(&self) -> u32 {
        (self.last_year - self.first_year + 1).max(0) as u32
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if self.n_articles == 0 || self.vocab_size == 0 {
            return bad("n_articles and vocab_size must be positive");
        }
        if self.last_year < self.first_year {
            return bad("last_year precedes first_year");
        }
        if !(0.0..=1.0).contains(&self.major_fraction) {
            return bad("major_fraction must lie in [0, 1]");
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be a finite non-negative number");
        }
        match self.keywords_per_article {
            KeywordCount::Fixed { n } if n < 2 => return bad("articles need at least two keywords"),
            KeywordCount::Uniform { min, max } if min < 2 || max < min => {
                return bad("keyword range must satisfy 2 <= min <= max")
            }
            _ => {}
        }
        if let ArticleGrowth::Exponential { rate } = self.growth {
            if !rate.is_finite() {
                return bad("growth rate must be finite");
            }
        }
        if self.entry.initial < 2 {
            return bad("the initial vocabulary needs at least two keywords");
        }
        if self.fresh_only && self.entry.per_year == 1 {
            return bad("fresh_only needs at least two debuts per year");
        }
        let needed = self.total_keywords();
        if needed > u64::from(self.vocab_size) {
            return Err(SynthError::VocabExhausted { needed, vocab_size: self.vocab_size });
        }
        Ok(())
    }

    /// Keywords introduced over the whole schedule.
    pub fn total_keywords(&self) -> u64 {
        u64::from(self.entry.initial)
            + u64::from(self.entry.per_year) * u64::from(self.n_years().saturating_sub(1))
    }

    /// Number of articles in each year, summing to `n_articles`.
    pub fn articles_per_year(&self) -> Vec<u64> {
        let n_years = self.n_years() as usize;
        let weights: Vec<f64> = (0..n_years)
            .map(|i| match self.growth {
                ArticleGrowth::Constant => 1.0,
                ArticleGrowth::Exponential { rate } => (rate * i as f64).exp(),
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let exact: Vec<f64> = weights.iter().map(|w| self.n_articles as f64 * w / total).collect();
        let mut counts: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
        let assigned: u64 = counts.iter().sum();
        let mut order: Vec<usize> = (0..n_years).collect();
        // Largest remainder first, later years break ties.
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(b.cmp(&a))
        });
        for &i in order.iter().take((self.n_articles - assigned) as usize) {
            counts[i] += 1;
        }
        counts
    }

    fn debut_range(&self, year_index: u32) -> (u32, u32) {
        if year_index == 0 {
            (0, self.entry.initial)
        } else {
            let start = self.entry.initial + self.entry.per_year * (year_index - 1);
            (start, start + self.entry.per_year)
        }
    }
}

struct Sampler {
    cumulative: Vec<f64>,
}

impl Sampler {
    fn new(pool: u32, exponent: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = (0..pool)
            .map(|i| {
                acc += if exponent == 0.0 { 1.0 } else { (f64::from(i) + 1.0).powf(-exponent) };
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> u32 {
        let total = *self.cumulative.last().expect("non-empty pool");
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1) as u32
    }
}

/// Builds a corpus from `params`. Identical parameters give identical stores.
pub fn generate_synthetic(params: &SynthParams) -> Result<CorpusStore, SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let per_year = params.articles_per_year();
    let mut records = Vec::with_capacity(params.n_articles as usize);

    for (yi, &n_t) in per_year.iter().enumerate() {
        let yi = yi as u32;
        let year = params.first_year + yi as i32;
        let (debut_lo, debut_hi) = params.debut_range(yi);
        let pool_hi = debut_hi;
        let (draw_lo, draw_hi) = if params.fresh_only { (debut_lo, debut_hi) } else { (0, pool_hi) };
        let drawable = draw_hi - draw_lo;

        let sizes: Vec<u32> = (0..n_t)
            .map(|_| {
                let want = match params.keywords_per_article {
                    KeywordCount::Fixed { n } => n,
                    KeywordCount::Uniform { min, max } => rng.random_range(min..=max),
                };
                want.min(drawable)
            })
            .collect();
        let slots: u64 = sizes.iter().map(|&s| u64::from(s)).sum();
        let debuts = debut_hi - debut_lo;
        if u64::from(debuts) > slots || (debuts > 0 && n_t == 0) {
            return Err(SynthError::InsufficientCapacity { year, debuts, slots });
        }

        let mut sets: Vec<Vec<u32>> = sizes.iter().map(|&s| Vec::with_capacity(s as usize)).collect();
        let mut pending: Vec<u32> = (debut_lo..debut_hi).collect();
        pending.shuffle(&mut rng);
        // Round-robin the debuts over articles that still have room.
        let n_sets = sets.len();
        let mut j = 0usize;
        for kw in pending {
            while sets[j % n_sets].len() as u32 >= sizes[j % n_sets] {
                j += 1;
            }
            sets[j % n_sets].push(kw);
            j += 1;
        }

        let sampler = Sampler::new(drawable, params.zipf_exponent);
        for (set, &size) in sets.iter_mut().zip(&sizes) {
            while (set.len() as u32) < size {
                let kw = draw_lo + sampler.draw(&mut rng);
                if !set.contains(&kw) {
                    set.push(kw);
                }
            }
        }

        for (j, set) in sets.into_iter().enumerate() {
            let major: Vec<KeywordId> = set
                .iter()
                .filter(|_| rng.random_bool(params.major_fraction))
                .map(|&k| KeywordId(k))
                .collect();
            let all = set.into_iter().map(KeywordId).collect();
            let rec = ArticleRecord::new(format!("s{year}-{j:07}"), year, all, major)
                .map_err(|e| SynthError::Invalid(e.to_string()))?;
            records.push(rec);
        }
    }
    Ok(CorpusStore::from_records(records).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_store, Refinement};
    use std::collections::BTreeMap;

    #[test]
    fn same_seed_gives_identical_bytes() {
        let p = SynthParams { seed: 42, ..SynthParams::default() };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_store(&generate_synthetic(&p).unwrap(), &mut a).unwrap();
        write_store(&generate_synthetic(&p).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let other = generate_synthetic(&SynthParams { seed: 43, ..p }).unwrap();
        let mut c = Vec::new();
        write_store(&other, &mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn entry_schedule_uses_exactly_the_scheduled_keywords() {
        let p = SynthParams {
            n_articles: 500,
            vocab_size: 1_000,
            first_year: 1990,
            last_year: 1999,
            entry: EntrySchedule { initial: 10, per_year: 10 },
            ..SynthParams::default()
        };
        let store = generate_synthetic(&p).unwrap();
        let mut debut: BTreeMap<u32, i32> = BTreeMap::new();
        for a in store.articles() {
            for k in &a.all_keywords {
                debut.entry(k.0).or_insert(a.year);
            }
        }
        assert_eq!(debut.len(), 100);
        for (k, y) in debut {
            assert_eq!(y, 1990 + (k / 10) as i32, "keyword {k}");
        }
    }

    #[test]
    fn mean_major_count_tracks_fraction() {
        let p = SynthParams {
            n_articles: 10_000,
            vocab_size: 500,
            keywords_per_article: KeywordCount::Fixed { n: 8 },
            major_fraction: 0.4,
            entry: EntrySchedule { initial: 100, per_year: 10 },
            seed: 7,
            ..SynthParams::default()
        };
        let store = generate_synthetic(&p).unwrap();
        assert_eq!(store.len(), 10_000);
        let total: usize = store.articles().map(|a| a.keywords(Refinement::Major).len()).sum();
        let mean = total as f64 / store.len() as f64;
        assert!((mean - 3.2).abs() <= 0.1, "mean major count {mean}");
        assert!(store.articles().all(|a| a.all_keywords.len() == 8));
    }

    #[test]
    fn vocab_exhaustion_is_rejected() {
        let p = SynthParams {
            vocab_size: 50,
            first_year: 1990,
            last_year: 1999,
            entry: EntrySchedule { initial: 10, per_year: 10 },
            ..SynthParams::default()
        };
        assert_eq!(
            generate_synthetic(&p).unwrap_err(),
            SynthError::VocabExhausted { needed: 100, vocab_size: 50 }
        );
    }

    #[test]
    fn invalid_fraction_is_rejected() {
        let p = SynthParams { major_fraction: 1.5, ..SynthParams::default() };
        assert!(matches!(generate_synthetic(&p), Err(SynthError::Invalid(_))));
    }

    #[test]
    fn exponential_growth_allocation_sums() {
        let p = SynthParams {
            n_articles: 10_007,
            growth: ArticleGrowth::Exponential { rate: 0.15 },
            ..SynthParams::default()
        };
        let per_year = p.articles_per_year();
        assert_eq!(per_year.iter().sum::<u64>(), 10_007);
        assert!(per_year.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn fresh_only_articles_use_debut_keywords() {
        let p = SynthParams {
            fresh_only: true,
            n_articles: 200,
            entry: EntrySchedule { initial: 10, per_year: 10 },
            first_year: 2000,
            last_year: 2009,
            ..SynthParams::default()
        };
        let store = generate_synthetic(&p).unwrap();
        for a in store.articles() {
            let yi = (a.year - 2000) as u32;
            assert!(a.all_keywords.iter().all(|k| k.0 / 10 == yi));
        }
    }
}
