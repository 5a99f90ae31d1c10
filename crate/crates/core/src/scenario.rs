//! Scenario harness: synthetic corpus, streaming ledger and brute-force
//! oracle side by side, compared cell by cell.

use std::collections::HashSet;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{generate_synthetic, CorpusStore, Refinement, SynthError, SynthParams};
use crate::ledger::{tabulate, LedgerConfig, LedgerError, LedgerSeries};
use crate::metrics::{innovation_rates, MetricsError, MetricsTable};
use crate::oracle::oracle_tabulate;

/// Qualitative outcome a scenario must show on top of exact agreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    /// Only pipeline/oracle agreement is checked.
    Agreement,
    /// Every year with new simplices has `r_p = 1`.
    AllPeripheral,
    /// After the first year no keyword debuts: `r_m = 0` and `r_p` is 0 or undefined.
    FrozenVocabulary,
}

impl Expectation {
    pub fn as_str(self) -> &'static str {
        match self {
            Expectation::Agreement => "agreement",
            Expectation::AllPeripheral => "all-peripheral",
            Expectation::FrozenVocabulary => "frozen-vocabulary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub expected: Expectation,
    #[serde(default)]
    pub params: SynthParams,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario catalog: {0}")]
    Catalog(String),
    #[error("scenario {name}: {source}")]
    Synth { name: String, source: SynthError },
    #[error("scenario {name}: {source}")]
    Ledger { name: String, source: LedgerError },
    #[error("scenario {name}: {source}")]
    Metrics { name: String, source: MetricsError },
}

#[derive(Debug, Deserialize)]
struct CatalogFile {
    #[serde(default)]
    scenario: Vec<ScenarioSpec>,
}

/// Parses a TOML catalog of `[[scenario]]` tables; names must be unique.
pub fn load_catalog(text: &str) -> Result<Vec<ScenarioSpec>, ScenarioError> {
    let file: CatalogFile = toml::from_str(text).map_err(|e| ScenarioError::Catalog(e.to_string()))?;
    let mut names = HashSet::new();
    for s in &file.scenario {
        if !names.insert(s.name.as_str()) {
            return Err(ScenarioError::Catalog(format!("duplicate scenario name {:?}", s.name)));
        }
    }
    Ok(file.scenario)
}

/// The catalog shipped with the crate.
pub const BUILTIN_CATALOG: &str = include_str!("../data/scenarios.toml");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonRow {
    pub scenario: String,
    pub k: u8,
    pub refinement: Refinement,
    pub year: i32,
    pub column: String,
    pub pipeline: String,
    pub oracle: String,
    pub ok: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioReport {
    pub rows: Vec<ComparisonRow>,
}

impl ScenarioReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| !r.ok)
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "k", "refinement", "year", "column", "pipeline", "oracle", "status"])?;
        for r in &self.rows {
            w.write_record([
                r.scenario.as_str(),
                &r.k.to_string(),
                r.refinement.as_str(),
                &r.year.to_string(),
                &r.column,
                &r.pipeline,
                &r.oracle,
                if r.ok { "match" } else { "MISMATCH" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn show(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn metric_cells(t: &MetricsTable, i: usize) -> [(&'static str, String); 10] {
    let r = &t.rows[i];
    [
        ("new_simplices", r.new_simplices.to_string()),
        ("cum_simplices", r.cum_simplices.to_string()),
        ("new_peripheral", r.new_peripheral.to_string()),
        ("new_mesh", r.new_mesh.to_string()),
        ("cum_mesh", r.cum_mesh.to_string()),
        ("cum_articles", r.cum_articles.to_string()),
        ("coverage", show(r.coverage)),
        ("r_m", show(r.r_m)),
        ("r_p", show(r.r_p)),
        ("r_c", show(r.r_c)),
    ]
}

fn compare(name: &str, pipeline: &LedgerSeries, oracle: &LedgerSeries, pm: &MetricsTable, om: &MetricsTable) -> Vec<ComparisonRow> {
    let (k, refinement) = (pipeline.k, pipeline.refinement);
    let row = |year, column: &str, p: String, o: String| ComparisonRow {
        scenario: name.to_string(),
        k,
        refinement,
        year,
        column: column.to_string(),
        ok: p == o,
        pipeline: p,
        oracle: o,
    };
    let mut out = Vec::new();
    if pipeline.rows.len() != oracle.rows.len() {
        out.push(row(0, "years", pipeline.rows.len().to_string(), oracle.rows.len().to_string()));
        return out;
    }
    for i in 0..pipeline.rows.len() {
        let (p, o) = (&pipeline.rows[i], &oracle.rows[i]);
        out.push(row(p.year, "year", p.year.to_string(), o.year.to_string()));
        out.push(row(p.year, "articles_processed", p.articles_processed.to_string(), o.articles_processed.to_string()));
        for ((col, pv), (_, ov)) in metric_cells(pm, i).into_iter().zip(metric_cells(om, i)) {
            out.push(row(p.year, col, pv, ov));
        }
    }
    out
}

fn check_expectation(name: &str, expected: Expectation, m: &MetricsTable) -> Vec<ComparisonRow> {
    let column = format!("expected:{}", expected.as_str());
    let first_year = m.rows.first().map(|r| r.year);
    m.rows
        .iter()
        .filter_map(|r| {
            let ok = match expected {
                Expectation::Agreement => return None,
                Expectation::AllPeripheral => r.r_p.is_none_or(|p| p == 1.0),
                Expectation::FrozenVocabulary => {
                    if Some(r.year) == first_year {
                        return None;
                    }
                    r.r_m == Some(0.0) && r.r_p.is_none_or(|p| p == 0.0)
                }
            };
            Some(ComparisonRow {
                scenario: name.to_string(),
                k: m.k,
                refinement: m.refinement,
                year: r.year,
                column: column.clone(),
                pipeline: format!("r_m={} r_p={}", show(r.r_m), show(r.r_p)),
                oracle: String::new(),
                ok,
            })
        })
        .collect()
}

fn one_pass(
    spec: &ScenarioSpec,
    corpus: &CorpusStore,
    k: u8,
    refinement: Refinement,
    spill: &Path,
) -> Result<Vec<ComparisonRow>, ScenarioError> {
    let ledger_err = |source| ScenarioError::Ledger { name: spec.name.clone(), source };
    let metrics_err = |source| ScenarioError::Metrics { name: spec.name.clone(), source };
    // The oracle runs first so an over-limit scenario is rejected cheaply.
    let oracle = oracle_tabulate(corpus, k, refinement).map_err(ledger_err)?;
    let mut cfg = LedgerConfig::new(k, refinement, spill);
    cfg.shard_count = 4;
    cfg.memory_budget_bytes = 64 << 20;
    let pipeline = tabulate(corpus, &cfg).map_err(ledger_err)?;
    let pm = innovation_rates(&pipeline).map_err(metrics_err)?;
    let om = innovation_rates(&oracle).map_err(metrics_err)?;
    let mut rows = compare(&spec.name, &pipeline, &oracle, &pm, &om);
    rows.extend(check_expectation(&spec.name, spec.expected, &pm));
    Ok(rows)
}

/// Runs one scenario for every order in `orders` and both refinements.
/// `scratch` receives the ledger spill files.
pub fn run_scenario(spec: &ScenarioSpec, orders: &[u8], scratch: &Path) -> Result<ScenarioReport, ScenarioError> {
    let corpus = generate_synthetic(&spec.params).map_err(|source| ScenarioError::Synth { name: spec.name.clone(), source })?;
    let mut rows = Vec::new();
    for &k in orders {
        for refinement in Refinement::BOTH {
            let spill: PathBuf = scratch.join(&spec.name);
            rows.extend(one_pass(spec, &corpus, k, refinement, &spill)?);
        }
    }
    Ok(ScenarioReport { rows })
}

/// Runs scenarios in parallel; reports come back in catalog order.
pub fn run_catalog(specs: &[ScenarioSpec], orders: &[u8], scratch: &Path) -> Result<ScenarioReport, ScenarioError> {
    let reports = specs
        .par_iter()
        .map(|s| run_scenario(s, orders, scratch))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScenarioReport { rows: reports.into_iter().flat_map(|r| r.rows).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog_loads() {
        let specs = load_catalog(BUILTIN_CATALOG).unwrap();
        let names: Vec<_> = specs.iter().map(|s| s.name.as_str()).collect();
        assert!(names.contains(&"all-new-every-year"));
        assert!(names.contains(&"frozen-vocabulary"));
        assert!(names.contains(&"paper-shape"));
        for s in &specs {
            s.params.validate().unwrap();
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = "[[scenario]]\nname = \"a\"\nexpected = \"agreement\"\n[[scenario]]\nname = \"a\"\nexpected = \"agreement\"\n";
        assert!(matches!(load_catalog(text), Err(ScenarioError::Catalog(_))));
    }

    #[test]
    fn builtin_scenarios_pass() {
        let dir = tempfile::tempdir().unwrap();
        let specs = load_catalog(BUILTIN_CATALOG).unwrap();
        let report = run_catalog(&specs, &[1, 2, 3], dir.path()).unwrap();
        let bad: Vec<_> = report.mismatches().take(5).collect();
        assert!(bad.is_empty(), "{bad:#?}");
        assert!(report.rows.iter().any(|r| r.column == "expected:all-peripheral"));
        assert!(report.rows.iter().any(|r| r.column == "expected:frozen-vocabulary"));
    }

    #[test]
    fn broken_expectation_is_reported() {
        let spec = ScenarioSpec {
            name: "mislabelled".into(),
            description: String::new(),
            expected: Expectation::AllPeripheral,
            params: SynthParams { n_articles: 200, ..SynthParams::default() },
        };
        let dir = tempfile::tempdir().unwrap();
        let report = run_scenario(&spec, &[1], dir.path()).unwrap();
        assert!(!report.passed());
        assert!(report.mismatches().all(|r| r.column.starts_with("expected:")));
    }
}
