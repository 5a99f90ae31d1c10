//! Article records, filtering, ingestion and the year-partitioned store.

mod filter;
mod persist;
mod synth;
mod tsv;
mod xml;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::KeywordId;

pub use filter::{filter_article, ArticleFilter, FilterConfig, IngestError, IngestStats, RawArticle, RawKeyword, RowError};
pub use persist::{read_store, write_store, PersistError, STORE_MAGIC};
pub use synth::{
    generate_synthetic, ArticleGrowth, EntrySchedule, KeywordCount, SynthError, SynthParams,
};
pub use tsv::{ingest_tsv, parse_tsv_row};
pub use xml::{ingest_pubmed_xml, parse_pubmed_xml};

/// Which keyword set of an article a computation runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Refinement {
    /// Every eligible keyword.
    All,
    /// Only keywords flagged as a principal topic.
    Major,
}

impl Refinement {
    pub const BOTH: [Refinement; 2] = [Refinement::All, Refinement::Major];

    pub fn as_str(self) -> &'static str {
        match self {
            Refinement::All => "all",
            Refinement::Major => "major",
        }
    }
}

impl fmt::Display for Refinement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Refinement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(Refinement::All),
            "major" => Ok(Refinement::Major),
            other => Err(format!("unknown refinement {other:?} (expected all or major)")),
        }
    }
}

/// One publication that survived filtering.
///
/// Both keyword lists are sorted ascending without repeats and
/// `major_keywords` is a subset of `all_keywords`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArticleRecord {
    pub article_id: String,
    pub year: i32,
    pub all_keywords: Vec<KeywordId>,
    pub major_keywords: Vec<KeywordId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("article {0}: major keywords are not a subset of all keywords")]
    MajorNotSubset(String),
    #[error("article {0}: fewer than two keywords")]
    TooFewKeywords(String),
}

impl ArticleRecord {
    /// Canonicalises both keyword lists and checks the subset and arity invariants.
    pub fn new(
        article_id: impl Into<String>,
        year: i32,
        mut all_keywords: Vec<KeywordId>,
        mut major_keywords: Vec<KeywordId>,
    ) -> Result<Self, RecordError> {
        let article_id = article_id.into();
        all_keywords.sort_unstable();
        all_keywords.dedup();
        major_keywords.sort_unstable();
        major_keywords.dedup();
        if all_keywords.len() < 2 {
            return Err(RecordError::TooFewKeywords(article_id));
        }
        if !major_keywords.iter().all(|k| all_keywords.binary_search(k).is_ok()) {
            return Err(RecordError::MajorNotSubset(article_id));
        }
        Ok(Self { article_id, year, all_keywords, major_keywords })
    }

    pub fn keywords(&self, refinement: Refinement) -> &[KeywordId] {
        match refinement {
            Refinement::All => &self.all_keywords,
            Refinement::Major => &self.major_keywords,
        }
    }
}

/// Largest arity for which per-year article counts are cached.
pub const MAX_CACHED_ARITY: usize = 4;

/// Articles of one publication year, ordered by article id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YearBlock {
    pub year: i32,
    articles: Vec<ArticleRecord>,
    at_least_all: [u64; MAX_CACHED_ARITY + 1],
    at_least_major: [u64; MAX_CACHED_ARITY + 1],
}

impl YearBlock {
    fn new(year: i32, mut articles: Vec<ArticleRecord>) -> Self {
        articles.sort_by(|a, b| a.article_id.cmp(&b.article_id));
        let mut at_least_all = [0u64; MAX_CACHED_ARITY + 1];
        let mut at_least_major = [0u64; MAX_CACHED_ARITY + 1];
        for a in &articles {
            for s in 0..=MAX_CACHED_ARITY {
                at_least_all[s] += u64::from(a.all_keywords.len() >= s);
                at_least_major[s] += u64::from(a.major_keywords.len() >= s);
            }
        }
        Self { year, articles, at_least_all, at_least_major }
    }

    pub fn articles(&self) -> &[ArticleRecord] {
        &self.articles
    }

    /// Number of articles carrying at least `s` keywords under `refinement`.
    pub fn articles_with_at_least(&self, refinement: Refinement, s: usize) -> u64 {
        if s <= MAX_CACHED_ARITY {
            match refinement {
                Refinement::All => self.at_least_all[s],
                Refinement::Major => self.at_least_major[s],
            }
        } else {
            self.articles.iter().filter(|a| a.keywords(refinement).len() >= s).count() as u64
        }
    }
}

/// Immutable, year-partitioned article store. Years ascend.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStore {
    years: Vec<YearBlock>,
}

impl CorpusStore {
    /// Groups records by year. Later records replace earlier ones with the
    /// same article id; the number of replacements is returned alongside.
    pub fn from_records<I>(records: I) -> (Self, u64)
    where
        I: IntoIterator<Item = ArticleRecord>,
    {
        let mut builder = StoreBuilder::default();
        for r in records {
            builder.insert(r);
        }
        let replaced = builder.replaced;
        (builder.build(), replaced)
    }

    pub fn years(&self) -> &[YearBlock] {
        &self.years
    }

    pub fn year(&self, year: i32) -> Option<&YearBlock> {
        self.years.binary_search_by_key(&year, |b| b.year).ok().map(|i| &self.years[i])
    }

    pub fn len(&self) -> usize {
        self.years.iter().map(|b| b.articles.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn articles(&self) -> impl Iterator<Item = &ArticleRecord> {
        self.years.iter().flat_map(|b| b.articles.iter())
    }

    /// One past the largest keyword id referenced by any article.
    pub fn keyword_bound(&self) -> u32 {
        self.articles()
            .filter_map(|a| a.all_keywords.last())
            .map(|k| k.0 + 1)
            .max()
            .unwrap_or(0)
    }

    /// SHA-256 of the canonical binary encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        write_store(self, &mut buf).expect("writing to a Vec cannot fail");
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(&buf))
    }
}

#[derive(Debug, Default)]
pub(crate) struct StoreBuilder {
    records: HashMap<String, ArticleRecord>,
    pub(crate) replaced: u64,
}

impl StoreBuilder {
    pub(crate) fn insert(&mut self, record: ArticleRecord) {
        if self.records.insert(record.article_id.clone(), record).is_some() {
            self.replaced += 1;
        }
    }

    pub(crate) fn build(self) -> CorpusStore {
        let mut by_year: BTreeMap<i32, Vec<ArticleRecord>> = BTreeMap::new();
        for r in self.records.into_values() {
            by_year.entry(r.year).or_default().push(r);
        }
        CorpusStore {
            years: by_year.into_iter().map(|(y, a)| YearBlock::new(y, a)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw(ids: &[u32]) -> Vec<KeywordId> {
        ids.iter().copied().map(KeywordId).collect()
    }

    #[test]
    fn record_canonicalises_and_validates() {
        let r = ArticleRecord::new("p", 2000, kw(&[3, 1, 3, 2]), kw(&[2, 2])).unwrap();
        assert_eq!(r.all_keywords, kw(&[1, 2, 3]));
        assert_eq!(r.major_keywords, kw(&[2]));
        assert_eq!(
            ArticleRecord::new("q", 2000, kw(&[1, 2]), kw(&[5])),
            Err(RecordError::MajorNotSubset("q".into()))
        );
        assert!(matches!(
            ArticleRecord::new("r", 2000, kw(&[1, 1]), vec![]),
            Err(RecordError::TooFewKeywords(_))
        ));
    }

    #[test]
    fn store_groups_by_year_and_counts_arity() {
        let recs = vec![
            ArticleRecord::new("b", 2001, kw(&[1, 2, 3, 4]), kw(&[1, 2])).unwrap(),
            ArticleRecord::new("a", 2001, kw(&[1, 2]), kw(&[])).unwrap(),
            ArticleRecord::new("c", 1999, kw(&[5, 6, 7]), kw(&[5, 6, 7])).unwrap(),
            ArticleRecord::new("a", 2001, kw(&[1, 2, 3]), kw(&[1])).unwrap(),
        ];
        let (store, replaced) = CorpusStore::from_records(recs);
        assert_eq!(replaced, 1);
        assert_eq!(store.len(), 3);
        let years: Vec<i32> = store.years().iter().map(|b| b.year).collect();
        assert_eq!(years, vec![1999, 2001]);
        let y = store.year(2001).unwrap();
        assert_eq!(y.articles()[0].article_id, "a");
        assert_eq!(y.articles()[0].all_keywords.len(), 3);
        assert_eq!(y.articles_with_at_least(Refinement::All, 2), 2);
        assert_eq!(y.articles_with_at_least(Refinement::All, 3), 2);
        assert_eq!(y.articles_with_at_least(Refinement::All, 4), 1);
        assert_eq!(y.articles_with_at_least(Refinement::Major, 2), 1);
        assert_eq!(y.articles_with_at_least(Refinement::Major, 5), 0);
        assert_eq!(store.keyword_bound(), 8);
    }

    #[test]
    fn refinement_parses() {
        assert_eq!("Major".parse::<Refinement>().unwrap(), Refinement::Major);
        assert_eq!("all".parse::<Refinement>().unwrap(), Refinement::All);
        assert!("minor".parse::<Refinement>().is_err());
    }
}
