use serde::{Deserialize, Serialize};

use super::ArticleRecord;
use crate::ontology::{BranchFilter, KeywordId, Ontology};

/// Keyword annotation as it appears in a source record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawKeyword {
    pub code: String,
    pub major: bool,
}

/// A source record before filtering. Produced by both ingestion paths.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawArticle {
    pub article_id: String,
    pub year: Option<i32>,
    pub publication_types: Vec<String>,
    pub keywords: Vec<RawKeyword>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    #[serde(with = "branch_letters")]
    pub branches: BranchFilter,
    pub min_year: i32,
    /// Accepted publication types, compared case-insensitively.
    pub publication_types: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            branches: BranchFilter::default(),
            min_year: 1902,
            publication_types: vec!["Journal Article".into(), "Review".into()],
        }
    }
}

mod branch_letters {
    use super::BranchFilter;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(f: &BranchFilter, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&f.letters())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BranchFilter, D::Error> {
        let s = String::deserialize(d)?;
        BranchFilter::from_letters(&s).map_err(serde::de::Error::custom)
    }
}

/// A row that could not be parsed at all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: usize,
    pub reason: String,
}

/// Ingestion counters.
///
/// `records_seen` equals `accepted` plus the sum of the `rejected_*` fields.
/// The resulting store holds `accepted - duplicate_article_ids` articles.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub records_seen: u64,
    pub accepted: u64,
    pub rejected_malformed: u64,
    pub rejected_publication_type: u64,
    pub rejected_missing_year: u64,
    pub rejected_before_min_year: u64,
    pub rejected_too_few_keywords: u64,
    pub keywords_unknown: u64,
    pub keywords_ineligible: u64,
    pub duplicate_article_ids: u64,
    /// First few malformed rows, for diagnostics.
    pub row_errors: Vec<RowError>,
}

impl IngestStats {
    pub(crate) const MAX_ROW_ERRORS: usize = 100;

    pub fn rejected(&self) -> u64 {
        self.rejected_malformed
            + self.rejected_publication_type
            + self.rejected_missing_year
            + self.rejected_before_min_year
            + self.rejected_too_few_keywords
    }

    pub(crate) fn malformed(&mut self, line: usize, reason: impl Into<String>) {
        self.records_seen += 1;
        self.rejected_malformed += 1;
        if self.row_errors.len() < Self::MAX_ROW_ERRORS {
            self.row_errors.push(RowError { line, reason: reason.into() });
        }
    }
}

/// Ingestion failure that aborts the stream. Row-level problems are counted
/// in [`IngestStats`] instead.
#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("I/O error after {} records: {source}", partial.records_seen)]
    Io {
        source: std::io::Error,
        partial: Box<IngestStats>,
    },
    #[error("malformed XML at byte {offset}: {message}")]
    Xml {
        offset: u64,
        message: String,
        partial: Box<IngestStats>,
    },
}

/// Filter prepared against one ontology: eligibility is computed once.
pub struct ArticleFilter<'a> {
    ontology: &'a Ontology,
    eligible: Vec<bool>,
    config: FilterConfig,
}

impl<'a> ArticleFilter<'a> {
    pub fn new(ontology: &'a Ontology, config: &FilterConfig) -> Self {
        Self {
            ontology,
            eligible: ontology.eligibility_mask(&config.branches),
            config: config.clone(),
        }
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Applies the publication-type, year and keyword rules in that order.
    /// Keyword repeats collapse; a keyword flagged major in any repeat stays major.
    pub fn apply(&self, raw: &RawArticle, stats: &mut IngestStats) -> Option<ArticleRecord> {
        stats.records_seen += 1;
        let type_ok = raw.publication_types.iter().any(|t| {
            let t = t.trim();
            self.config.publication_types.iter().any(|a| a.eq_ignore_ascii_case(t))
        });
        if !type_ok {
            stats.rejected_publication_type += 1;
            return None;
        }
        let year = match raw.year {
            Some(y) => y,
            None => {
                stats.rejected_missing_year += 1;
                return None;
            }
        };
        if year < self.config.min_year {
            stats.rejected_before_min_year += 1;
            return None;
        }

        let mut all: Vec<KeywordId> = Vec::with_capacity(raw.keywords.len());
        let mut major: Vec<KeywordId> = Vec::new();
        for kw in &raw.keywords {
            let Some(id) = self.ontology.lookup(kw.code.trim()) else {
                stats.keywords_unknown += 1;
                continue;
            };
            if !self.eligible[id.index()] {
                stats.keywords_ineligible += 1;
                continue;
            }
            all.push(id);
            if kw.major {
                major.push(id);
            }
        }
        all.sort_unstable();
        all.dedup();
        if all.len() < 2 {
            stats.rejected_too_few_keywords += 1;
            return None;
        }
        stats.accepted += 1;
        Some(
            ArticleRecord::new(raw.article_id.clone(), year, all, major)
                .expect("filtered keyword sets satisfy record invariants"),
        )
    }
}

/// One-shot form of [`ArticleFilter::apply`].
pub fn filter_article(
    raw: &RawArticle,
    ontology: &Ontology,
    config: &FilterConfig,
    stats: &mut IngestStats,
) -> Option<ArticleRecord> {
    ArticleFilter::new(ontology, config).apply(raw, stats)
}
