//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, in order, regardless of
//! output capture. Exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sledger_core::corpus::{generate_synthetic, CorpusStore, EntrySchedule, KeywordCount, Refinement, SynthParams};
use sledger_core::fitting::{fit_exponential, fit_linear};
use sledger_core::ledger::{tabulate, HaltPoint, LedgerConfig, LedgerError, LedgerRow, LedgerSeries};
use sledger_core::metrics::{exact_binomial, innovation_rates, paired_series, XAxis, YColumn};
use sledger_core::ontology::KeywordId;
use sledger_core::oracle::oracle_tabulate;
use sledger_core::simplex::{enumerate_simplices, CanonicalSimplex};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn config(k: u8, refinement: Refinement, dir: &Path) -> LedgerConfig {
    let mut c = LedgerConfig::new(k, refinement, dir);
    c.shard_count = 4;
    c.memory_budget_bytes = 64 << 20;
    c
}

fn run(k: u8, refinement: Refinement, corpus: &CorpusStore, dir: &Path) -> Result<LedgerSeries, String> {
    tabulate(corpus, &config(k, refinement, dir)).map_err(|e| e.to_string())
}

/// Random generator settings inside the oracle-sized envelope: at most 2,000
/// articles, 200 keywords and 20 years.
fn small_params(seed: u64) -> SynthParams {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + seed);
    let vocab_size = rng.random_range(60..=200u32);
    let initial = rng.random_range(8..=20u32);
    let per_year = rng.random_range(0..=((vocab_size - initial) / 19).min(9));
    SynthParams {
        n_articles: rng.random_range(200..=2000),
        vocab_size,
        first_year: 2000,
        last_year: 2019,
        keywords_per_article: KeywordCount::Uniform { min: 2, max: rng.random_range(3..=10) },
        major_fraction: rng.random_range(0.2..0.9),
        entry: EntrySchedule { initial, per_year },
        zipf_exponent: rng.random_range(0.0..1.5),
        seed,
        ..SynthParams::default()
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let got = [exact_binomial(27_875, 2), exact_binomial(27_875, 3), exact_binomial(27_875, 4)];
    let elapsed = start.elapsed();
    let want: [u128; 3] = [388_493_875, 3_609_496_592_625, 25_150_972_257_411_000];
    for (g, w) in got.iter().zip(want) {
        ensure!(*g == Ok(w), "got {g:?}, want {w}");
    }
    ensure!(elapsed < Duration::from_millis(1), "took {elapsed:?}");
    Ok(format!("three denominators exact in {elapsed:?}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..500 {
        let size = rng.random_range(2..=15usize);
        let mut ids: Vec<u32> = Vec::new();
        while ids.len() < size {
            let v = rng.random_range(0..10_000);
            if !ids.contains(&v) {
                ids.push(v);
            }
        }
        let kws: Vec<KeywordId> = ids.iter().copied().map(KeywordId).collect();
        for k in 0..=3u8 {
            let out = enumerate_simplices(&kws, k);
            let want = exact_binomial(size as u64, u64::from(k) + 1).unwrap();
            ensure!(out.len() as u128 == want, "size {size} k {k}: {} != {want}", out.len());
            ensure!(out.windows(2).all(|w| w[0] < w[1]), "not strictly sorted");
            ensure!(out.iter().all(|s| s.ids().windows(2).all(|p| p[0] < p[1])), "tuple not ascending");
            ensure!(
                out.iter().all(|s| CanonicalSimplex::new(s.ids()) == Some(*s)),
                "non-canonical tuple"
            );
            checked += 1;
        }
    }
    let twelve: Vec<KeywordId> = (0..12).map(KeywordId).collect();
    ensure!(enumerate_simplices(&twelve, 3).len() == 495, "12 keywords did not give 495 quartets");
    Ok(format!("{checked} keyword sets, including 12 -> 495"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut comparisons = 0;
    for seed in 0..100 {
        let params = small_params(seed);
        let corpus = generate_synthetic(&params).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure!(corpus.len() <= 2000 && corpus.keyword_bound() <= 200, "seed {seed} outside envelope");
        for k in 1..=3u8 {
            for refinement in Refinement::BOTH {
                let oracle = oracle_tabulate(&corpus, k, refinement).map_err(|e| e.to_string())?;
                let got = run(k, refinement, &corpus, dir.path())?;
                ensure!(got == oracle, "seed {seed} k {k} {refinement}: ledger differs from oracle");
                comparisons += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!("{comparisons} ledgers identical to oracle in {:.1?}", elapsed))
}

fn criterion_4() -> Outcome {
    let params = SynthParams {
        n_articles: 100_000,
        vocab_size: 3000,
        entry: EntrySchedule { initial: 300, per_year: 120 },
        zipf_exponent: 0.7,
        seed: 4,
        ..SynthParams::default()
    };
    let corpus = generate_synthetic(&params).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reference: Option<LedgerSeries> = None;
    let mut variants = 0;
    for shards in [1usize, 4, 16] {
        for threads in [1usize, 4] {
            let mut c = LedgerConfig::new(2, Refinement::All, dir.path());
            c.shard_count = shards;
            c.threads = Some(threads);
            c.memory_budget_bytes = 32 << 20;
            let got = tabulate(&corpus, &c).map_err(|e| e.to_string())?;
            match &reference {
                None => reference = Some(got),
                Some(r) => ensure!(*r == got, "shards {shards} threads {threads} differ"),
            }
            variants += 1;
        }
    }
    let total = reference.map(|r| r.total_simplices()).unwrap_or(0);
    Ok(format!("{variants} shard/thread variants identical ({total} triads)"))
}

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut years = 0;
    for seed in 0..30 {
        let corpus = generate_synthetic(&small_params(1000 + seed)).map_err(|e| e.to_string())?;
        for refinement in Refinement::BOTH {
            let order0 = run(0, refinement, &corpus, dir.path())?;
            for k in 1..=3u8 {
                let ledger = run(k, refinement, &corpus, dir.path())?;
                let m = innovation_rates(&ledger).map_err(|e| e.to_string())?;
                for (row, zero) in m.rows.iter().zip(&order0.rows) {
                    ensure!(row.year == zero.year, "year misalignment");
                    ensure!(row.cum_mesh == zero.cum_simplices, "seed {seed} {}: vocabulary != order-0 tally", row.year);
                    if let (Some(p), Some(c)) = (row.r_p, row.r_c) {
                        ensure!(p + c == 1.0, "r_p + r_c = {} in {}", p + c, row.year);
                    }
                    ensure!(row.r_p.is_some() == (row.new_simplices > 0), "r_p defined without new simplices");
                    if row.new_mesh == 0 {
                        ensure!(row.new_peripheral == 0, "peripheral without debut in {}", row.year);
                    }
                    years += 1;
                }
            }
        }
    }
    Ok(format!("{years} year rows satisfy all identities"))
}

fn normal_equations(points: &[(f64, f64)]) -> (f64, f64) {
    // Solve [n Σx; Σx Σx²] [a; b] = [Σy; Σxy] by Cramer's rule.
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    ((sy * sxx - sx * sxy) / det, (n * sxy - sx * sy) / det)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..100 {
        let n = rng.random_range(3..40);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0))).collect();
        let f = fit_linear(&pts, None).map_err(|e| e.to_string())?;
        let (a, b) = normal_equations(&pts);
        ensure!((f.a - a).abs() <= 1e-9 && (f.slope - b).abs() <= 1e-9, "trial {trial}: ({}, {}) vs ({a}, {b})", f.a, f.slope);

        let (a0, b0, g0) = (rng.random_range(-5.0..5.0), rng.random_range(-3.0..3.0), rng.random_range(-0.2..0.2));
        let line: Vec<(f64, f64)> = (0..n).map(|i| (f64::from(i), a0 + b0 * f64::from(i))).collect();
        let f = fit_linear(&line, None).map_err(|e| e.to_string())?;
        ensure!((f.a - a0).abs() <= 1e-9 && (f.slope - b0).abs() <= 1e-9, "exact line not recovered");
        let curve: Vec<(f64, f64)> = (0..n).map(|i| (f64::from(i), 3.0 * (g0 * f64::from(i)).exp())).collect();
        let f = fit_exponential(&curve, None).map_err(|e| e.to_string())?;
        ensure!((f.a.ln() - 3f64.ln()).abs() <= 1e-9 && (f.slope - g0).abs() <= 1e-9, "exact exponential not recovered");
    }

    // A 30-year ledger whose cumulative simplex count follows A exp(gamma N).
    let gamma = 0.015;
    let mut rows = Vec::new();
    let mut prev = LedgerRow { year: 1989, articles_processed: 0, cum_articles: 0, new_simplices: 0, cum_simplices: 0, new_peripheral: 0, new_keywords: 0, cum_keywords: 0 };
    for t in 0..30 {
        let vocab = 200 + 25 * t;
        let cum = (40.0 * (gamma * vocab as f64).exp()).round() as u64;
        let row = LedgerRow {
            year: 1990 + t as i32,
            articles_processed: 100,
            cum_articles: prev.cum_articles + 100,
            new_simplices: cum - prev.cum_simplices,
            cum_simplices: cum,
            new_peripheral: 0,
            new_keywords: vocab - prev.cum_keywords,
            cum_keywords: vocab,
        };
        rows.push(row);
        prev = row;
    }
    let table = innovation_rates(&LedgerSeries { k: 3, refinement: Refinement::All, rows }).map_err(|e| e.to_string())?;
    let pts: Vec<(f64, f64)> = paired_series(&table, XAxis::Vocabulary, YColumn::CumSimplices).iter().map(|p| (p.x, p.y)).collect();
    let f = fit_exponential(&pts, None).map_err(|e| e.to_string())?;
    let rel = (f.slope - gamma).abs() / gamma;
    ensure!(rel < 0.01, "gamma {} vs {gamma}", f.slope);
    Ok(format!("normal equations matched on 100 sets; gamma recovered to {:.2e} relative", rel))
}

fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn criterion_7() -> Outcome {
    let params = SynthParams {
        n_articles: 100_000,
        vocab_size: 20_000,
        keywords_per_article: KeywordCount::Fixed { n: 10 },
        entry: EntrySchedule { initial: 2000, per_year: 900 },
        seed: 7,
        ..SynthParams::default()
    };
    let corpus = generate_synthetic(&params).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut c = LedgerConfig::new(3, Refinement::All, dir.path());
    c.shard_count = 16;
    // Low enough that every shard spills several times per year.
    c.memory_budget_bytes = 24 << 20;
    let start = Instant::now();
    let ledger = tabulate(&corpus, &c).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let emissions: u64 = ledger.rows.iter().map(|r| r.articles_processed).sum::<u64>() * 210;
    ensure!(emissions == 21_000_000, "expected 2.1e7 emissions, got {emissions}");
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    let rss = peak_rss_bytes();
    if let Some(rss) = rss {
        ensure!(rss <= 1 << 30, "peak RSS {rss} bytes");
    }
    Ok(format!(
        "{emissions} quartet emissions, {} distinct, {:.1?}, peak RSS {} MiB",
        ledger.total_simplices(),
        elapsed,
        rss.map_or("n/a".to_string(), |r| (r >> 20).to_string())
    ))
}

fn criterion_8() -> Outcome {
    let corpus = generate_synthetic(&SynthParams { n_articles: 5000, seed: 8, ..SynthParams::default() })
        .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut interruptions = 0;
    for k in 1..=3u8 {
        let baseline = run(k, Refinement::All, &corpus, dir.path())?;
        for halt in [HaltPoint::AfterCommit(2004), HaltPoint::BeforeCommit(2011), HaltPoint::AfterCommit(2019)] {
            let mut c = config(k, Refinement::All, dir.path());
            c.halt = Some(halt);
            match tabulate(&corpus, &c) {
                Err(LedgerError::Halted { .. }) => {}
                other => return Err(format!("{halt:?} did not halt: {other:?}")),
            }
            // A stray partial file from the interrupted year must be ignored.
            let shard = c.state_directory().join("shard0000");
            std::fs::write(shard.join("run9999.tmp"), [1u8; 7]).map_err(|e| e.to_string())?;
            c.halt = None;
            c.resume = true;
            let resumed = tabulate(&corpus, &c).map_err(|e| e.to_string())?;
            ensure!(resumed == baseline, "k {k} {halt:?}: resumed ledger differs");
            interruptions += 1;
        }
    }
    Ok(format!("{interruptions} interrupted runs resumed to identical ledgers"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("binomial exactness", criterion_1),
        ("enumeration exactness", criterion_2),
        ("oracle equivalence", criterion_3),
        ("determinism under parallelism", criterion_4),
        ("rate identities", criterion_5),
        ("fit recovery", criterion_6),
        ("performance budget", criterion_7),
        ("crash-restart", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("{label}: PASS - {detail}"),
            Err(why) => {
                failed += 1;
                println!("{label}: FAIL - {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
