//! Corpus loading and the per-(k, refinement) artifact set.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use serde::{Serialize, Serializer};
use sledger_core::corpus::{
    ingest_pubmed_xml, ingest_tsv, read_store, CorpusStore, FilterConfig, IngestStats,
};
use sledger_core::fitting::{fit_exponential, fit_linear, write_fit_csv, FitRow};
use sledger_core::metrics::{paired_series, MetricsTable, XAxis, YColumn};
use sledger_core::ontology::{BranchFilter, Ontology};

use crate::output::{sha256_file, ArtifactSink, InputDigest};
use crate::plot::{Chart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `.xml` is read as PubMed XML, anything else as TSV.
    Auto,
    Tsv,
    Xml,
}

/// Closed year interval applied to metrics rows before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWindow {
    Full,
    /// 2005 through 2018.
    PaperRecent,
    Years(i32, i32),
}

impl FitWindow {
    pub fn contains(self, year: i32) -> bool {
        match self {
            FitWindow::Full => true,
            FitWindow::PaperRecent => (2005..=2018).contains(&year),
            FitWindow::Years(a, b) => (a..=b).contains(&year),
        }
    }
}

impl FromStr for FitWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(FitWindow::Full),
            "paper-recent" => Ok(FitWindow::PaperRecent),
            _ => {
                let (a, b) = s
                    .split_once(':')
                    .ok_or_else(|| format!("fit window {s:?}: expected full, paper-recent or FIRST:LAST"))?;
                let a: i32 = a.trim().parse().map_err(|_| format!("bad year {a:?}"))?;
                let b: i32 = b.trim().parse().map_err(|_| format!("bad year {b:?}"))?;
                if a > b {
                    return Err(format!("fit window {a}:{b} is empty"));
                }
                Ok(FitWindow::Years(a, b))
            }
        }
    }
}

impl fmt::Display for FitWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitWindow::Full => f.write_str("full"),
            FitWindow::PaperRecent => f.write_str("paper-recent"),
            FitWindow::Years(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

impl Serialize for FitWindow {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct CorpusArgs {
    /// Corpus store written by `ingest` or `synth`.
    #[arg(long, conflicts_with_all = ["inputs", "ontology"])]
    pub store: Option<PathBuf>,
    /// Keyword ontology TSV: external_code, name, tree numbers.
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    /// Corpus file (TSV or PubMed XML); repeatable.
    #[arg(long = "input", value_name = "FILE")]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,
    /// Eligible ontology branches as letters.
    #[arg(long, default_value = BranchFilter::DEFAULT_BRANCHES)]
    pub branches: String,
    #[arg(long, default_value_t = 1902)]
    pub min_year: i32,
    /// Accepted publication types, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "Journal Article,Review")]
    pub publication_types: Vec<String>,
}

pub struct LoadedCorpus {
    pub store: CorpusStore,
    pub digests: Vec<InputDigest>,
    pub stats: Vec<(String, IngestStats)>,
}

impl CorpusArgs {
    pub fn filter_config(&self) -> Result<FilterConfig> {
        let branches: BranchFilter = self.branches.parse().map_err(|e| anyhow::anyhow!("--branches: {e}"))?;
        Ok(FilterConfig { branches, min_year: self.min_year, publication_types: self.publication_types.clone() })
    }

    /// Fails early if a named path is missing.
    pub fn validate(&self) -> Result<()> {
        match &self.store {
            Some(p) => ensure!(p.is_file(), "store {} does not exist", p.display()),
            None => {
                let Some(ont) = &self.ontology else { bail!("give either --store or --ontology with --input") };
                ensure!(ont.is_file(), "ontology {} does not exist", ont.display());
                ensure!(!self.inputs.is_empty(), "no --input files given");
                for p in &self.inputs {
                    ensure!(p.is_file(), "input {} does not exist", p.display());
                }
            }
        }
        self.filter_config()?;
        Ok(())
    }

    pub fn load(&self) -> Result<LoadedCorpus> {
        self.validate()?;
        let digest = |p: &Path| -> Result<InputDigest> {
            Ok(InputDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p).with_context(|| format!("reading {}", p.display()))?,
            })
        };
        if let Some(path) = &self.store {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let store = read_store(BufReader::new(f)).with_context(|| format!("reading store {}", path.display()))?;
            return Ok(LoadedCorpus { store, digests: vec![digest(path)?], stats: Vec::new() });
        }
        let ont_path = self.ontology.as_ref().expect("validated");
        let ontology = Ontology::load(BufReader::new(File::open(ont_path)?))
            .with_context(|| format!("loading ontology {}", ont_path.display()))?;
        let cfg = self.filter_config()?;
        let mut digests = vec![digest(ont_path)?];
        let mut stats = Vec::new();
        let mut parts = Vec::new();
        for p in &self.inputs {
            digests.push(digest(p)?);
            let xml = match self.format {
                InputFormat::Xml => true,
                InputFormat::Tsv => false,
                InputFormat::Auto => p.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")),
            };
            let reader = BufReader::new(File::open(p)?);
            let (store, s) = if xml {
                ingest_pubmed_xml(reader, &ontology, &cfg)
            } else {
                ingest_tsv(reader, &ontology, &cfg)
            }
            .with_context(|| format!("ingesting {}", p.display()))?;
            log::info!("{}: {} accepted, {} rejected", p.display(), s.accepted, s.rejected());
            stats.push((p.display().to_string(), s));
            parts.push(store);
        }
        let store = if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            // Later files win on repeated article ids.
            CorpusStore::from_records(parts.iter().flat_map(|s| s.articles().cloned())).0
        };
        Ok(LoadedCorpus { store, digests, stats })
    }
}

pub fn stem(k: u8, refinement: impl fmt::Display) -> String {
    format!("k{k}_{refinement}")
}

/// Fit CSV and the four charts for one metrics table.
pub fn emit_analysis(
    table: &MetricsTable,
    window: FitWindow,
    log_scale: bool,
    sink: &mut ArtifactSink<'_>,
) -> Result<()> {
    let stem = stem(table.k, table.refinement);
    let windowed = MetricsTable {
        k: table.k,
        refinement: table.refinement,
        rows: table.rows.iter().copied().filter(|r| window.contains(r.year)).collect(),
    };
    let xy = |axis, col| -> Vec<(f64, f64)> { paired_series(&windowed, axis, col).iter().map(|p| (p.x, p.y)).collect() };
    let mut fits = Vec::new();
    let mut linear = None;
    let mut exponential = None;
    match fit_linear(&xy(XAxis::Articles, YColumn::CumSimplices), None) {
        Ok(fit) => {
            linear = Some(fit);
            fits.push(FitRow { k: table.k, refinement: table.refinement, x_axis: XAxis::Articles, fit });
        }
        Err(e) => note(sink, format!("{stem}: linear fit over window {window} skipped: {e}")),
    }
    let positive: Vec<(f64, f64)> = xy(XAxis::Vocabulary, YColumn::CumSimplices).into_iter().filter(|p| p.1 > 0.0).collect();
    match fit_exponential(&positive, None) {
        Ok(fit) => {
            exponential = Some(fit);
            fits.push(FitRow { k: table.k, refinement: table.refinement, x_axis: XAxis::Vocabulary, fit });
        }
        Err(e) => note(sink, format!("{stem}: exponential fit over window {window} skipped: {e}")),
    }
    let mut buf = Vec::new();
    write_fit_csv(&fits, &mut buf)?;
    sink.write(&format!("fits_{stem}.csv"), &buf)?;

    let full = |axis, col| -> Vec<(f64, f64)> { paired_series(table, axis, col).iter().map(|p| (p.x, p.y)).collect() };
    let label = format!("k={} {}", table.k, table.refinement);
    let overlay = |fit: Option<sledger_core::fitting::FitResult>, name: &str| {
        fit.map(|f| {
            let steps = 40;
            let points = (0..=steps)
                .map(|i| {
                    let x = f.x_min + (f.x_max - f.x_min) * f64::from(i) / f64::from(steps);
                    (x, f.predict(x))
                })
                .collect();
            Series { name: name.to_string(), points, dashed: true }
        })
    };

    let mut series = vec![Series { name: "C_t".into(), points: full(XAxis::Articles, YColumn::CumSimplices), dashed: false }];
    series.extend(overlay(linear, &format!("linear fit ({window})")));
    let chart = Chart {
        title: format!("Distinct simplices vs articles, {label}"),
        x_label: "cumulative articles".into(),
        y_label: "cumulative simplices".into(),
        log_y: log_scale,
        series,
    };
    sink.write(&format!("plot_{stem}_articles.svg"), chart.render().as_bytes())?;

    let mut series = vec![Series { name: "C_t".into(), points: full(XAxis::Vocabulary, YColumn::CumSimplices), dashed: false }];
    series.extend(overlay(exponential, &format!("exponential fit ({window})")));
    let chart = Chart {
        title: format!("Distinct simplices vs vocabulary, {label}"),
        x_label: "keywords used".into(),
        y_label: "cumulative simplices".into(),
        log_y: log_scale,
        series,
    };
    sink.write(&format!("plot_{stem}_vocabulary.svg"), chart.render().as_bytes())?;

    let chart = Chart {
        title: format!("Coverage fraction vs vocabulary, {label}"),
        x_label: "keywords used".into(),
        y_label: "F".into(),
        log_y: log_scale,
        series: vec![Series { name: "F_t".into(), points: full(XAxis::Vocabulary, YColumn::Coverage), dashed: false }],
    };
    sink.write(&format!("plot_{stem}_coverage.svg"), chart.render().as_bytes())?;

    let chart = Chart {
        title: format!("Innovation rates, {label}"),
        x_label: "year".into(),
        y_label: "rate".into(),
        log_y: false,
        series: vec![
            Series { name: "r_m".into(), points: full(XAxis::Year, YColumn::RateM), dashed: false },
            Series { name: "r_p".into(), points: full(XAxis::Year, YColumn::RateP), dashed: false },
        ],
    };
    sink.write(&format!("plot_{stem}_rates.svg"), chart.render().as_bytes())?;
    Ok(())
}

fn note(sink: &mut ArtifactSink<'_>, msg: String) {
    log::warn!("{msg}");
    sink.manifest.notes.push(msg);
}

/// Range checks on derived columns, re-run before anything is written.
pub fn check_metrics(table: &MetricsTable) -> Result<()> {
    let unit = |v: Option<f64>| v.is_none_or(|x| (0.0..=1.0).contains(&x));
    let mut prev: Option<(u64, u64, u64)> = None;
    for r in &table.rows {
        ensure!(unit(r.coverage), "{}: coverage {:?} outside [0, 1]", r.year, r.coverage);
        ensure!(unit(r.r_p) && unit(r.r_c), "{}: rate outside [0, 1]", r.year);
        let cur = (r.cum_simplices, r.cum_mesh, r.cum_articles);
        if let Some(p) = prev {
            ensure!(cur.0 >= p.0 && cur.1 >= p.1 && cur.2 >= p.2, "{}: cumulative column decreased", r.year);
        }
        prev = Some(cur);
    }
    Ok(())
}
