//! Derived series: coverage fractions and innovation rates.

use std::io;

use serde::{Deserialize, Serialize};

use crate::corpus::Refinement;
use crate::ledger::LedgerSeries;

/// Exact non-negative count; 128 bits hold every binomial needed here.
pub type BigCount = u128;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("C({n},{s}) does not fit in 128 bits")]
    Overflow { n: u64, s: u64 },
    #[error("vocabulary of {n} keywords cannot form order-{k} simplices")]
    VocabularyTooSmall { n: u64, k: u8 },
    #[error("{count} simplices exceeds the {possible} possible for {n} keywords")]
    CountExceedsPossible { count: u64, possible: BigCount, n: u64 },
    #[error("ledger is inconsistent: {0}")]
    Inconsistent(String),
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `C(n, s)` with checked arithmetic.
pub fn exact_binomial(n: u64, s: u64) -> Result<BigCount, MetricsError> {
    if s > n {
        return Ok(0);
    }
    let s = s.min(n - s);
    let mut acc: u128 = 1;
    for i in 0..s {
        // acc * (n - i) / (i + 1) is exact; divide out the common factor first
        // so the intermediate stays as small as possible.
        let num = u128::from(n - i);
        let den = u128::from(i + 1);
        let g = gcd(acc, den);
        let (a, d) = (acc / g, den / g);
        let n2 = num / d;
        acc = a.checked_mul(n2).ok_or(MetricsError::Overflow { n, s })?;
    }
    Ok(acc)
}

/// `count / C(n, k + 1)`, reduced exactly before the single division.
pub fn coverage_fraction(count: u64, n: u64, k: u8) -> Result<f64, MetricsError> {
    let s = u64::from(k) + 1;
    if n < s {
        return Err(MetricsError::VocabularyTooSmall { n, k });
    }
    let possible = exact_binomial(n, s)?;
    let count128 = u128::from(count);
    if count128 > possible {
        return Err(MetricsError::CountExceedsPossible { count, possible, n });
    }
    if count == 0 {
        return Ok(0.0);
    }
    let g = gcd(count128, possible);
    Ok((count128 / g) as f64 / (possible / g) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub year: i32,
    pub k: u8,
    pub refinement: Refinement,
    pub new_simplices: u64,
    pub cum_simplices: u64,
    pub new_peripheral: u64,
    pub new_mesh: u64,
    pub cum_mesh: u64,
    pub cum_articles: u64,
    /// Absent while the vocabulary is smaller than the simplex arity.
    pub coverage: Option<f64>,
    pub r_m: Option<f64>,
    /// Absent in years without new simplices.
    pub r_p: Option<f64>,
    pub r_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub k: u8,
    pub refinement: Refinement,
    pub rows: Vec<MetricsRow>,
}

pub const METRICS_HEADER: [&str; 13] = [
    "year",
    "k",
    "refinement",
    "new_simplices",
    "cum_simplices",
    "new_peripheral",
    "new_mesh",
    "cum_mesh",
    "cum_articles",
    "coverage",
    "r_m",
    "r_p",
    "r_c",
];

/// Derives the metrics table from a ledger.
pub fn innovation_rates(ledger: &LedgerSeries) -> Result<MetricsTable, MetricsError> {
    ledger.check_consistency().map_err(MetricsError::Inconsistent)?;
    let mut rows = Vec::with_capacity(ledger.rows.len());
    for r in &ledger.rows {
        let coverage = if r.cum_keywords > u64::from(ledger.k) {
            Some(coverage_fraction(r.cum_simplices, r.cum_keywords, ledger.k)?)
        } else if r.cum_simplices > 0 {
            return Err(MetricsError::VocabularyTooSmall { n: r.cum_keywords, k: ledger.k });
        } else {
            None
        };
        let r_p = (r.new_simplices > 0).then(|| r.new_peripheral as f64 / r.new_simplices as f64);
        rows.push(MetricsRow {
            year: r.year,
            k: ledger.k,
            refinement: ledger.refinement,
            new_simplices: r.new_simplices,
            cum_simplices: r.cum_simplices,
            new_peripheral: r.new_peripheral,
            new_mesh: r.new_keywords,
            cum_mesh: r.cum_keywords,
            cum_articles: r.cum_articles,
            coverage,
            r_m: (r.cum_keywords > 0).then(|| r.new_keywords as f64 / r.cum_keywords as f64),
            r_p,
            r_c: r_p.map(|p| 1.0 - p),
        });
    }
    Ok(MetricsTable { k: ledger.k, refinement: ledger.refinement, rows })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl MetricsTable {
    /// Writes the header and one line per year; undefined values are empty cells.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(METRICS_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.year.to_string(),
                r.k.to_string(),
                r.refinement.to_string(),
                r.new_simplices.to_string(),
                r.cum_simplices.to_string(),
                r.new_peripheral.to_string(),
                r.new_mesh.to_string(),
                r.cum_mesh.to_string(),
                r.cum_articles.to_string(),
                cell(r.coverage),
                cell(r.r_m),
                cell(r.r_p),
                cell(r.r_c),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads tables written by [`MetricsTable::write_csv`]; one table per
    /// (k, refinement) pair in order of first appearance.
    pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<MetricsTable>, csv::Error> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        if header.iter().ne(METRICS_HEADER.iter().copied()) {
            return Err(bad_csv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut tables: Vec<MetricsTable> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let int = |i: usize| -> Result<u64, csv::Error> {
                rec[i].parse().map_err(|e| bad_csv(format!("column {}: {e}", METRICS_HEADER[i])))
            };
            let opt = |i: usize| -> Result<Option<f64>, csv::Error> {
                if rec[i].is_empty() {
                    return Ok(None);
                }
                rec[i].parse().map(Some).map_err(|e| bad_csv(format!("column {}: {e}", METRICS_HEADER[i])))
            };
            let year: i32 = rec[0].parse().map_err(|e| bad_csv(format!("column year: {e}")))?;
            let k: u8 = rec[1].parse().map_err(|e| bad_csv(format!("column k: {e}")))?;
            let refinement: Refinement = rec[2].parse().map_err(|e| bad_csv(format!("column refinement: {e}")))?;
            let row = MetricsRow {
                year,
                k,
                refinement,
                new_simplices: int(3)?,
                cum_simplices: int(4)?,
                new_peripheral: int(5)?,
                new_mesh: int(6)?,
                cum_mesh: int(7)?,
                cum_articles: int(8)?,
                coverage: opt(9)?,
                r_m: opt(10)?,
                r_p: opt(11)?,
                r_c: opt(12)?,
            };
            match tables.iter_mut().find(|t| t.k == k && t.refinement == refinement) {
                Some(t) => t.rows.push(row),
                None => tables.push(MetricsTable { k, refinement, rows: vec![row] }),
            }
        }
        Ok(tables)
    }
}

fn bad_csv(msg: String) -> csv::Error {
    csv::Error::from(io::Error::new(io::ErrorKind::InvalidData, msg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XAxis {
    Articles,
    Vocabulary,
    Year,
}

impl XAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            XAxis::Articles => "articles",
            XAxis::Vocabulary => "vocabulary",
            XAxis::Year => "year",
        }
    }
}

impl std::str::FromStr for XAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "articles" => Ok(XAxis::Articles),
            "vocabulary" => Ok(XAxis::Vocabulary),
            "year" => Ok(XAxis::Year),
            _ => Err(format!("unknown x axis {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YColumn {
    CumSimplices,
    Coverage,
    RateM,
    RateP,
    RateC,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub year: i32,
    pub x: f64,
    pub y: f64,
}

/// Pairs `y` with the chosen x column, in year order; rows where `y` is
/// undefined are skipped.
pub fn paired_series(table: &MetricsTable, x_axis: XAxis, y: YColumn) -> Vec<SeriesPoint> {
    table
        .rows
        .iter()
        .filter_map(|r| {
            let x = match x_axis {
                XAxis::Articles => r.cum_articles as f64,
                XAxis::Vocabulary => r.cum_mesh as f64,
                XAxis::Year => f64::from(r.year),
            };
            let y = match y {
                YColumn::CumSimplices => Some(r.cum_simplices as f64),
                YColumn::Coverage => r.coverage,
                YColumn::RateM => r.r_m,
                YColumn::RateP => r.r_p,
                YColumn::RateC => r.r_c,
            }?;
            Some(SeriesPoint { year: r.year, x, y })
        })
        .collect()
}
