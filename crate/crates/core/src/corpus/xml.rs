//! Streaming reader for PubMed citation XML.
//!
//! Only the fields needed for filtering are extracted: PMID, publication
//! dates, publication types and the MeSH heading list. Each
//! `MedlineCitation` element is one record.

use std::io::BufRead;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::filter::{ArticleFilter, FilterConfig, IngestError, IngestStats, RawArticle, RawKeyword};
use super::{CorpusStore, StoreBuilder};
use crate::ontology::Ontology;

#[derive(Default)]
struct RecordState {
    raw: RawArticle,
    /// Index in `raw.keywords` of the descriptor of the heading being read.
    heading: Option<usize>,
}

impl RecordState {
    fn offer_year(&mut self, year: Option<i32>) {
        if let Some(y) = year {
            self.raw.year = Some(self.raw.year.map_or(y, |cur| cur.min(y)));
        }
    }
}

fn attr(e: &BytesStart<'_>, name: &[u8]) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.local_name().as_ref() == name)
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

/// First run of four digits, e.g. "1998 Dec-1999 Jan" gives 1998.
fn first_year(text: &str) -> Option<i32> {
    let bytes = text.as_bytes();
    bytes
        .windows(4)
        .enumerate()
        .find(|(i, w)| {
            w.iter().all(u8::is_ascii_digit)
                && (*i == 0 || !bytes[i - 1].is_ascii_digit())
                && bytes.get(i + 4).is_none_or(|b| !b.is_ascii_digit())
        })
        .and_then(|(_, w)| std::str::from_utf8(w).ok()?.parse().ok())
}

fn on_element(state: &mut RecordState, e: &BytesStart<'_>, parent: Option<&[u8]>) {
    match e.local_name().as_ref() {
        b"DescriptorName" if parent == Some(b"MeshHeading".as_slice()) => {
            let code = attr(e, b"UI").unwrap_or_default();
            let major = attr(e, b"MajorTopicYN").is_some_and(|v| v.eq_ignore_ascii_case("Y"));
            state.raw.keywords.push(RawKeyword { code, major });
            state.heading = Some(state.raw.keywords.len() - 1);
        }
        b"QualifierName" if parent == Some(b"MeshHeading".as_slice()) => {
            // A major qualifier makes the whole heading a major topic.
            let major = attr(e, b"MajorTopicYN").is_some_and(|v| v.eq_ignore_ascii_case("Y"));
            if let (true, Some(i)) = (major, state.heading) {
                state.raw.keywords[i].major = true;
            }
        }
        _ => {}
    }
}

/// Parses a citation stream and hands each record to `sink`.
///
/// Returns `(byte offset, message)` on malformed XML.
pub fn parse_pubmed_xml<R, F>(stream: R, mut sink: F) -> Result<(), (u64, String)>
where
    R: BufRead,
    F: FnMut(RawArticle),
{
    let mut reader = Reader::from_reader(stream);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut text = String::new();
    let mut record: Option<RecordState> = None;

    loop {
        let event = match reader.read_event_into(&mut buf) {
            Ok(ev) => ev,
            Err(e) => return Err((reader.error_position(), e.to_string())),
        };
        match event {
            Event::Start(e) => {
                let name = e.local_name().as_ref().to_vec();
                if name == b"MedlineCitation" {
                    record = Some(RecordState::default());
                } else if let Some(state) = record.as_mut() {
                    if name == b"MeshHeading" {
                        state.heading = None;
                    }
                    on_element(state, &e, stack.last().map(Vec::as_slice));
                }
                stack.push(name);
                text.clear();
            }
            Event::Empty(e) => {
                if let Some(state) = record.as_mut() {
                    on_element(state, &e, stack.last().map(Vec::as_slice));
                }
            }
            Event::Text(t) => {
                let piece = t.unescape().map_err(|e| (reader.buffer_position(), e.to_string()))?;
                text.push_str(&piece);
            }
            Event::CData(t) => text.push_str(&String::from_utf8_lossy(&t)),
            Event::End(_) => {
                let name = stack.pop().unwrap_or_default();
                let parent = stack.last().map(Vec::as_slice);
                if name == b"MedlineCitation" {
                    if let Some(state) = record.take() {
                        sink(state.raw);
                    }
                } else if let Some(state) = record.as_mut() {
                    let value = text.trim();
                    match (name.as_slice(), parent) {
                        (b"PMID", Some(b"MedlineCitation")) if state.raw.article_id.is_empty() => {
                            state.raw.article_id = value.to_string();
                        }
                        (b"Year", Some(b"PubDate")) | (b"Year", Some(b"ArticleDate")) => {
                            state.offer_year(value.parse().ok());
                        }
                        (b"MedlineDate", Some(b"PubDate")) => state.offer_year(first_year(value)),
                        (b"PublicationType", _) => {
                            state.raw.publication_types.push(value.to_string());
                        }
                        _ => {}
                    }
                }
                text.clear();
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err((reader.buffer_position(), "unexpected end of input inside an element".into()));
    }
    Ok(())
}

/// Reads PubMed citation XML into a store using the same filter as the TSV path.
pub fn ingest_pubmed_xml<R: BufRead>(
    stream: R,
    ontology: &Ontology,
    config: &FilterConfig,
) -> Result<(CorpusStore, IngestStats), IngestError> {
    let filter = ArticleFilter::new(ontology, config);
    let mut stats = IngestStats::default();
    let mut builder = StoreBuilder::default();
    let parsed = parse_pubmed_xml(stream, |raw| {
        if let Some(rec) = filter.apply(&raw, &mut stats) {
            builder.insert(rec);
        }
    });
    if let Err((offset, message)) = parsed {
        stats.duplicate_article_ids = builder.replaced;
        return Err(IngestError::Xml { offset, message, partial: Box::new(stats) });
    }
    stats.duplicate_article_ids = builder.replaced;
    Ok((builder.build(), stats))
}
