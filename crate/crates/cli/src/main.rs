mod output;
mod pipeline;
mod plot;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sledger_core::corpus::{generate_synthetic, write_store, Refinement, SynthParams};
use sledger_core::ledger::{tabulate, LedgerConfig};
use sledger_core::metrics::{innovation_rates, MetricsTable};
use sledger_core::scenario::{load_catalog, run_catalog, BUILTIN_CATALOG};

use output::{sha256_file, ArtifactSink, InputDigest, OutputLock, RunManifest};
use pipeline::{check_metrics, emit_analysis, stem, CorpusArgs, FitWindow};

/// Overrides the default spill directory.
const TMP_ENV: &str = "SLEDGER_TMP";

#[derive(Parser)]
#[command(name = "sledger", version, about = "Exact first-occurrence tabulation of keyword combinations")]
struct Cli {
    /// More log output; repeat for debug detail.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter raw corpus files into a compact store.
    Ingest(IngestArgs),
    /// Tabulate ledgers and write metrics, fits and charts.
    Run(RunArgs),
    /// Generate a seeded synthetic corpus store.
    Synth(SynthArgs),
    /// Run the scenario harness against the brute-force oracle.
    Verify(VerifyArgs),
    /// Recompute fits and charts from existing metrics CSVs.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Store file to write.
    #[arg(long)]
    out: PathBuf,
    /// Write ingest counters as JSON here instead of stdout.
    #[arg(long)]
    stats: Option<PathBuf>,
}

fn parse_order(s: &str) -> Result<u8, String> {
    match s.trim().parse::<u8>() {
        Ok(k @ 1..=3) => Ok(k),
        _ => Err(format!("order {s:?} must be 1, 2 or 3")),
    }
}

fn parse_refinement(s: &str) -> Result<Refinement, String> {
    s.parse()
}

/// Accepts plain bytes or a KiB/MiB/GiB suffix.
fn parse_bytes(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (digits, unit) = t.split_at(split);
    let n: u64 = digits.parse().map_err(|_| format!("bad size {s:?}"))?;
    let mult: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kib" => 1 << 10,
        "m" | "mib" => 1 << 20,
        "g" | "gib" => 1 << 30,
        other => return Err(format!("unknown size unit {other:?}")),
    };
    n.checked_mul(mult).ok_or_else(|| format!("size {s:?} overflows"))
}

#[derive(Args, Serialize)]
struct RunArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Simplex orders, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3", value_parser = parse_order)]
    k: Vec<u8>,
    /// Refinements, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "all,major", value_parser = parse_refinement)]
    refinement: Vec<Refinement>,
    /// `full`, `paper-recent` (2005-2018) or FIRST:LAST years.
    #[arg(long, default_value = "full")]
    fit_window: FitWindow,
    #[arg(long, default_value_t = 16)]
    shard_count: usize,
    /// Memory budget for the tabulation, e.g. 512MiB.
    #[arg(long, default_value = "1GiB", value_parser = parse_bytes)]
    memory_budget: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Spill directory (default: $SLEDGER_TMP, else OUT/spill).
    #[arg(long)]
    spill_directory: Option<PathBuf>,
    /// Continue from an interrupted run's checkpoint.
    #[arg(long)]
    resume: bool,
    /// Keep ledger spill state after a successful run.
    #[arg(long)]
    keep_spill: bool,
    /// Logarithmic y axes on growth charts.
    #[arg(long)]
    log_scale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file of generator parameters; omitted keys take defaults.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_articles: Option<u64>,
    #[arg(long)]
    vocab_size: Option<u32>,
    /// Store file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scenario catalog (default: the built-in one).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Only run the named scenarios.
    #[arg(long = "scenario")]
    scenarios: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3", value_parser = parse_order)]
    k: Vec<u8>,
    /// Comparison report CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// Metrics CSV written by `run`; repeatable.
    #[arg(long = "metrics", value_name = "FILE", required = true)]
    metrics: Vec<PathBuf>,
    #[arg(long, default_value = "full")]
    fit_window: FitWindow,
    #[arg(long)]
    log_scale: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Report(a) => cmd_report(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn write_store_file(store: &sledger_core::corpus::CorpusStore, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_store(store, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_ingest(args: &IngestArgs) -> Result<ExitCode> {
    ensure!(args.corpus.store.is_none(), "ingest reads raw files; --store is not accepted");
    let loaded = args.corpus.load()?;
    write_store_file(&loaded.store, &args.out)?;
    let report = serde_json::json!({
        "articles": loaded.store.len(),
        "years": loaded.store.years().len(),
        "corpus_fingerprint": loaded.store.fingerprint(),
        "inputs": loaded.digests,
        "files": loaded.stats.iter().map(|(p, s)| serde_json::json!({ "path": p, "stats": s })).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &args.stats {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn spill_root(args: &RunArgs) -> PathBuf {
    args.spill_directory
        .clone()
        .or_else(|| std::env::var_os(TMP_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| args.out.join("spill"))
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    args.corpus.validate()?;
    ensure!(!args.k.is_empty() && !args.refinement.is_empty(), "nothing to do: empty --k or --refinement");
    let _lock = OutputLock::acquire(&args.out)?;
    let mut manifest = RunManifest::new("run", serde_json::to_value(args)?);
    let outcome = run_into(args, &mut manifest);
    match &outcome {
        Ok(()) => manifest.status = "complete".into(),
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(format!("{e:#}"));
        }
    }
    manifest.write(&args.out)?;
    outcome.map(|()| ExitCode::SUCCESS)
}

fn run_into(args: &RunArgs, manifest: &mut RunManifest) -> Result<()> {
    let loaded = args.corpus.load()?;
    manifest.inputs = loaded.digests.clone();
    manifest.corpus_fingerprint = Some(loaded.store.fingerprint());
    for (path, s) in &loaded.stats {
        manifest.notes.push(format!("{path}: {} records, {} accepted", s.records_seen, s.accepted));
    }
    let spill = spill_root(args);
    let mut orders = args.k.clone();
    orders.sort_unstable();
    orders.dedup();
    let mut refinements = args.refinement.clone();
    refinements.dedup();
    for &k in &orders {
        for &refinement in &refinements {
            let mut cfg = LedgerConfig::new(k, refinement, &spill);
            cfg.shard_count = args.shard_count;
            cfg.memory_budget_bytes = args.memory_budget;
            cfg.threads = args.threads;
            cfg.resume = args.resume;
            log::info!("tabulating k={k} {refinement}");
            let ledger = tabulate(&loaded.store, &cfg).with_context(|| format!("tabulating k={k} {refinement}"))?;
            ledger.check_consistency().map_err(|e| anyhow::anyhow!("ledger k={k} {refinement}: {e}"))?;
            let metrics = innovation_rates(&ledger)?;
            check_metrics(&metrics)?;

            let stem = stem(k, refinement);
            let mut sink = ArtifactSink { dir: &args.out, manifest };
            let mut buf = Vec::new();
            ledger.write_csv(&mut buf)?;
            sink.write(&format!("ledger_{stem}.csv"), &buf)?;
            buf.clear();
            metrics.write_csv(&mut buf)?;
            sink.write(&format!("metrics_{stem}.csv"), &buf)?;
            emit_analysis(&metrics, args.fit_window, args.log_scale, &mut sink)?;
            if !args.keep_spill {
                let state = cfg.state_directory();
                if state.exists() {
                    fs::remove_dir_all(&state).with_context(|| format!("removing {}", state.display()))?;
                }
            }
        }
    }
    if !args.keep_spill && args.spill_directory.is_none() && spill == args.out.join("spill") {
        let _ = remove_empty_dirs(&spill);
    }
    Ok(())
}

fn remove_empty_dirs(dir: &Path) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            remove_empty_dirs(&p)?;
        }
    }
    fs::remove_dir(dir)
}

fn cmd_synth(args: &SynthArgs) -> Result<ExitCode> {
    let mut params = match &args.params {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<SynthParams>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthParams::default(),
    };
    if let Some(s) = args.seed {
        params.seed = s;
    }
    if let Some(n) = args.n_articles {
        params.n_articles = n;
    }
    if let Some(v) = args.vocab_size {
        params.vocab_size = v;
    }
    let store = generate_synthetic(&params)?;
    write_store_file(&store, &args.out)?;
    println!("{} articles over {} years, fingerprint {}", store.len(), store.years().len(), store.fingerprint());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let text = match &args.catalog {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => BUILTIN_CATALOG.to_string(),
    };
    let mut specs = load_catalog(&text)?;
    if !args.scenarios.is_empty() {
        for name in &args.scenarios {
            ensure!(specs.iter().any(|s| &s.name == name), "no scenario named {name:?}");
        }
        specs.retain(|s| args.scenarios.contains(&s.name));
    }
    let base = std::env::var_os(TMP_ENV).filter(|v| !v.is_empty()).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let scratch = base.join(format!("sledger-verify-{}", std::process::id()));
    let report = run_catalog(&specs, &args.k, &scratch);
    let _ = fs::remove_dir_all(&scratch);
    let report = report?;
    match &args.out {
        Some(p) => report.write_csv(File::create(p).with_context(|| format!("creating {}", p.display()))?)?,
        None => report.write_csv(io::stdout().lock())?,
    }
    let bad = report.mismatches().count();
    for s in &specs {
        let fails = report.mismatches().filter(|r| r.scenario == s.name).count();
        eprintln!("{}: {}", s.name, if fails == 0 { "ok".to_string() } else { format!("{fails} mismatches") });
    }
    Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_report(args: &ReportArgs) -> Result<ExitCode> {
    let _lock = OutputLock::acquire(&args.out)?;
    let mut manifest = RunManifest::new("report", serde_json::to_value(args)?);
    let outcome = (|| -> Result<()> {
        for p in &args.metrics {
            ensure!(p.is_file(), "metrics file {} does not exist", p.display());
            manifest.inputs.push(InputDigest { path: p.display().to_string(), sha256: sha256_file(p)? });
            let tables = MetricsTable::read_csv(File::open(p)?).with_context(|| format!("reading {}", p.display()))?;
            if tables.is_empty() {
                bail!("{} has no rows", p.display());
            }
            for t in &tables {
                check_metrics(t)?;
                let mut sink = ArtifactSink { dir: &args.out, manifest: &mut manifest };
                emit_analysis(t, args.fit_window, args.log_scale, &mut sink)?;
            }
        }
        Ok(())
    })();
    match &outcome {
        Ok(()) => manifest.status = "complete".into(),
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(format!("{e:#}"));
        }
    }
    manifest.write(&args.out)?;
    outcome.map(|()| ExitCode::SUCCESS)
}
