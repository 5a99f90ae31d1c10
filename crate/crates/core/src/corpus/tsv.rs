//! Tab-separated corpus rows:
//! `article_id <TAB> year <TAB> pub_type <TAB> keyword-list`.
//!
//! The keyword list is `;`-separated external codes; a leading `*` marks a
//! major topic. Several publication types may be given `;`-separated.

use std::io::BufRead;

use super::filter::{ArticleFilter, FilterConfig, IngestError, IngestStats, RawArticle, RawKeyword};
use super::{CorpusStore, StoreBuilder};
use crate::ontology::Ontology;

/// Parses one row. `Err` carries a human-readable reason.
pub fn parse_tsv_row(line: &str) -> Result<RawArticle, String> {
    let cells: Vec<&str> = line.split('\t').collect();
    if cells.len() != 4 {
        return Err(format!("expected 4 tab-separated cells, found {}", cells.len()));
    }
    let year_cell = cells[1].trim();
    let year: i32 = year_cell.parse().map_err(|_| format!("unparseable year {year_cell:?}"))?;
    let keywords = cells[3]
        .split(';')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(|c| match c.strip_prefix('*') {
            Some(code) => RawKeyword { code: code.trim().to_string(), major: true },
            None => RawKeyword { code: c.to_string(), major: false },
        })
        .collect();
    Ok(RawArticle {
        article_id: cells[0].trim().to_string(),
        year: Some(year),
        publication_types: cells[2]
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect(),
        keywords,
    })
}

/// Reads a corpus TSV stream into a store. Unparseable rows are counted and
/// skipped; an I/O failure aborts with the counters gathered so far.
pub fn ingest_tsv<R: BufRead>(
    stream: R,
    ontology: &Ontology,
    config: &FilterConfig,
) -> Result<(CorpusStore, IngestStats), IngestError> {
    let filter = ArticleFilter::new(ontology, config);
    let mut stats = IngestStats::default();
    let mut builder = StoreBuilder::default();
    for (idx, line) in stream.lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(source) => return Err(IngestError::Io { source, partial: Box::new(stats) }),
        };
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || (idx == 0 && line.starts_with("article_id\t")) {
            continue;
        }
        match parse_tsv_row(line) {
            Ok(raw) => {
                if let Some(rec) = filter.apply(&raw, &mut stats) {
                    builder.insert(rec);
                }
            }
            Err(reason) => stats.malformed(idx + 1, reason),
        }
    }
    stats.duplicate_article_ids = builder.replaced;
    Ok((builder.build(), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Refinement;
    use crate::ontology::KeywordId;

    fn ontology() -> Ontology {
        Ontology::load("D000001\ta\tA01\nD000002\tb\tB01\nD000003\tc\tC01\n".as_bytes()).unwrap()
    }

    #[test]
    fn single_row_with_major_marker() {
        let src = "p1\t1998\tJournal Article\t*D000001;D000002\n";
        let (store, stats) = ingest_tsv(src.as_bytes(), &ontology(), &FilterConfig::default()).unwrap();
        assert_eq!(store.len(), 1);
        let rec = store.articles().next().unwrap();
        assert_eq!(rec.year, 1998);
        assert_eq!(rec.all_keywords.len(), 2);
        assert_eq!(rec.keywords(Refinement::Major), &[KeywordId(0)]);
        assert_eq!(stats.accepted, 1);
    }

    #[test]
    fn editorial_row_is_filtered() {
        let src = "p1\t1998\tJournal Article\tD000001;D000002\np2\t1999\tEditorial\tD000001;D000003\n";
        let ont = ontology();
        let cfg = FilterConfig::default();
        let (store, stats) = ingest_tsv(src.as_bytes(), &ont, &cfg).unwrap();
        // Row-wise oracle.
        let mut oracle_stats = IngestStats::default();
        let expected = src
            .lines()
            .filter_map(|l| crate::corpus::filter_article(&parse_tsv_row(l).unwrap(), &ont, &cfg, &mut oracle_stats))
            .count();
        assert_eq!(store.len(), expected);
        assert_eq!(store.len(), 1);
        assert_eq!(stats.rejected_publication_type, 1);
        assert_eq!(stats.records_seen - stats.rejected(), store.len() as u64);
    }

    #[test]
    fn empty_stream_yields_empty_store() {
        let (store, stats) = ingest_tsv("".as_bytes(), &ontology(), &FilterConfig::default()).unwrap();
        assert!(store.is_empty());
        assert_eq!(stats, IngestStats::default());
    }

    #[test]
    fn malformed_rows_are_counted_with_line_numbers() {
        let src = "p1\tnineteen\tReview\tD000001;D000002\np2\t2000\tReview\np3\t2000\tReview\tD000001;D000003\n";
        let (store, stats) = ingest_tsv(src.as_bytes(), &ontology(), &FilterConfig::default()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(stats.rejected_malformed, 2);
        assert_eq!(stats.row_errors[0].line, 1);
        assert_eq!(stats.row_errors[1].line, 2);
    }

    #[test]
    fn unknown_codes_are_dropped_per_keyword() {
        let src = "p1\t2000\tReview\tD000001;D999999;*D000002\n";
        let (store, stats) = ingest_tsv(src.as_bytes(), &ontology(), &FilterConfig::default()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(stats.keywords_unknown, 1);
    }

    #[test]
    fn duplicate_ids_are_last_wins() {
        let src = "p1\t2000\tReview\tD000001;D000002\np1\t2001\tReview\tD000001;D000003\n";
        let (store, stats) = ingest_tsv(src.as_bytes(), &ontology(), &FilterConfig::default()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(stats.duplicate_article_ids, 1);
        assert_eq!(store.articles().next().unwrap().year, 2001);
    }

    #[test]
    fn io_error_reports_partial_counts() {
        struct Failing(usize);
        impl std::io::Read for Failing {
            fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
                if self.0 == 0 {
                    self.0 += 1;
                    let row = b"p1\t2000\tReview\tD000001;D000002\n";
                    buf[..row.len()].copy_from_slice(row);
                    Ok(row.len())
                } else {
                    Err(std::io::Error::other("disk gone"))
                }
            }
        }
        let reader = std::io::BufReader::new(Failing(0));
        match ingest_tsv(reader, &ontology(), &FilterConfig::default()) {
            Err(IngestError::Io { partial, .. }) => assert_eq!(partial.accepted, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
