use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sledger() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sledger"));
    c.env_remove("SLEDGER_TMP").env("RUST_LOG", "error");
    c
}

fn demo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo").join(name)
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn check(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn demo_run(out: &Path, extra: &[&str]) -> Output {
    sledger()
        .args(["run", "--ontology"])
        .arg(demo("ontology.tsv"))
        .arg("--input")
        .arg(demo("corpus.tsv"))
        .args(extra)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn csv_row<'a>(text: &'a str, year: &str) -> Vec<&'a str> {
    text.lines().find(|l| l.starts_with(year)).unwrap().split(',').collect()
}

#[test]
fn demo_rates_for_2001() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    check(&demo_run(&out, &["--k", "1", "--refinement", "major", "--fit-window", "paper-recent"]));
    let metrics = fs::read_to_string(out.join("metrics_k1_major.csv")).unwrap();
    let row = csv_row(&metrics, "2001");
    // r_m, r_p, r_c are the last three columns
    assert_eq!(&row[10..], &["0.25", "1.0", "0.0"]);
    for stem in ["articles", "vocabulary", "coverage", "rates"] {
        assert!(out.join(format!("plot_k1_major_{stem}.svg")).is_file());
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(!out.join(".sledger.lock").exists());
    assert!(!out.join("spill").exists());
}

#[test]
fn headers_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    check(&demo_run(&out, &["--k", "1,2", "--refinement", "all"]));
    for (file, gold) in [
        ("ledger_k2_all.csv", "ledger_header.csv"),
        ("metrics_k2_all.csv", "metrics_header.csv"),
        ("fits_k1_all.csv", "fits_header.csv"),
    ] {
        let text = fs::read_to_string(out.join(file)).unwrap();
        assert_eq!(text.lines().next().unwrap().to_string() + "\n", golden(gold), "{file}");
    }
    // Two years fit exactly, so both models are present.
    let fits = fs::read_to_string(out.join("fits_k1_all.csv")).unwrap();
    assert_eq!(fits.lines().count(), 3);
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("corpus.sldg");
    check(&sledger().args(["synth", "--seed", "5", "--n-articles", "600", "--out"]).arg(&store).output().unwrap());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = sledger()
            .args(["run", "--store"])
            .arg(&store)
            .args(["--shard-count", "4", "--memory-budget", "64MiB", "--threads", threads, "--log-scale", "--out"])
            .arg(out)
            .output()
            .unwrap();
        check(&o);
    }
    let mut compared = 0;
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_string_lossy();
        if name.ends_with(".csv") || name.ends_with(".svg") {
            assert_eq!(fs::read(a.join(&*name)).unwrap(), fs::read(b.join(&*name)).unwrap(), "{name}");
            compared += 1;
        }
    }
    // 6 (k, refinement) pairs, 3 CSVs and 4 charts each
    assert_eq!(compared, 42);
}

#[test]
fn busy_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".sledger.lock"), "1").unwrap();
    let o = demo_run(&out, &["--k", "1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("in use"));
}

#[test]
fn invalid_configuration_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(!demo_run(&out, &["--k", "4"]).status.success());
    assert!(!demo_run(&out, &["--refinement", "minor"]).status.success());
    let o = sledger().args(["run", "--ontology", "/nonexistent.tsv", "--input", "/nonexistent", "--out"]).arg(&out).output().unwrap();
    assert!(!o.status.success());
    // Budget too small is a tabulation failure: the manifest records it.
    let o = demo_run(&out, &["--k", "1", "--memory-budget", "4096"]);
    assert!(!o.status.success());
    let manifest = fs::read_to_string(out.join("run_manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"failed\"") && manifest.contains("need at least"), "{manifest}");
}

#[test]
fn spill_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let spill = dir.path().join("spill-here");
    let o = sledger()
        .env("SLEDGER_TMP", &spill)
        .args(["run", "--ontology"])
        .arg(demo("ontology.tsv"))
        .arg("--input")
        .arg(demo("corpus.tsv"))
        .args(["--k", "2", "--refinement", "all", "--keep-spill", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    check(&o);
    assert!(spill.join("k2/all/manifest.json").is_file());
}

#[test]
fn ingest_then_run_from_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("demo.sldg");
    let stats = dir.path().join("stats.json");
    let o = sledger()
        .args(["ingest", "--ontology"])
        .arg(demo("ontology.tsv"))
        .arg("--input")
        .arg(demo("corpus.tsv"))
        .arg("--out")
        .arg(&store)
        .arg("--stats")
        .arg(&stats)
        .output()
        .unwrap();
    check(&o);
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(s["articles"], 2);
    let out = dir.path().join("out");
    check(&sledger().args(["run", "--store"]).arg(&store).args(["--k", "1", "--refinement", "major", "--out"]).arg(&out).output().unwrap());
    let direct = dir.path().join("direct");
    check(&demo_run(&direct, &["--k", "1", "--refinement", "major"]));
    assert_eq!(
        fs::read(out.join("ledger_k1_major.csv")).unwrap(),
        fs::read(direct.join("ledger_k1_major.csv")).unwrap()
    );
}

#[test]
fn report_rebuilds_fits_from_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    check(&demo_run(&out, &["--k", "1", "--refinement", "all"]));
    let rep = dir.path().join("rep");
    check(
        &sledger()
            .args(["report", "--metrics"])
            .arg(out.join("metrics_k1_all.csv"))
            .arg("--out")
            .arg(&rep)
            .output()
            .unwrap(),
    );
    assert_eq!(fs::read(out.join("fits_k1_all.csv")).unwrap(), fs::read(rep.join("fits_k1_all.csv")).unwrap());
    assert_eq!(
        fs::read(out.join("plot_k1_all_rates.svg")).unwrap(),
        fs::read(rep.join("plot_k1_all_rates.svg")).unwrap()
    );
}

#[test]
fn verify_runs_selected_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.csv");
    let o = sledger()
        .env("SLEDGER_TMP", dir.path())
        .args(["verify", "--scenario", "frozen-vocabulary", "--k", "1,2", "--out"])
        .arg(&report)
        .output()
        .unwrap();
    check(&o);
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("scenario,k,refinement,year,column,pipeline,oracle,status\n"));
    assert!(!text.contains("MISMATCH"));
    assert!(text.contains("expected:frozen-vocabulary"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[[scenario]]\nname = \"x\"\nexpected = \"all-peripheral\"\n[scenario.params]\nn_articles = 300\n").unwrap();
    let o = sledger().env("SLEDGER_TMP", dir.path()).args(["verify", "--k", "1", "--catalog"]).arg(&bad).output().unwrap();
    assert!(!o.status.success(), "a failed expectation must exit non-zero");
}
