mod common;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use distractor_align::backend::server::{ScoringServer, ServerOptions};
use distractor_align::backend::{load_table_backend, Fallback, ScoreCache, ScoringBackend};
use distractor_align::dataset::SyntheticProfile;
use distractor_align_cli::{cmd_analyze, cmd_report, cmd_score, CliError, RunConfig};

const BIN: &str = env!("CARGO_BIN_EXE_distractor-align");

fn bin(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/anti_aligned_seed1")
}

fn table_server(dir: &Path, options: ServerOptions) -> ScoringServer {
    let table = load_table_backend(dir.join("table.jsonl"), Fallback::Error).unwrap();
    ScoringServer::start_with(Arc::new(table) as Arc<dyn ScoringBackend>, options).unwrap()
}

/// Rewrites the synthetic config so its model is scored over HTTP.
fn point_at(dir: &Path, endpoint: &str) -> PathBuf {
    let path = dir.join("config.toml");
    let text = fs::read_to_string(&path).unwrap();
    let text = text
        .replace("endpoint = \"table\"\n", &format!("endpoint = \"{endpoint}\"\n"))
        .replace("table = \"table.jsonl\"\n", "");
    let http = dir.join("http.toml");
    fs::write(&http, text).unwrap();
    http
}

#[test]
fn report_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::synth_config(dir.path(), SyntheticProfile::AntiAligned, 30, 1);
    common::run_all(&cfg);
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for name in ["rq1.csv", "rq2.csv", "size_series.csv", "report.txt"] {
        let actual = fs::read_to_string(cfg.out_path().join(name)).unwrap();
        let path = golden_dir().join(name);
        if update {
            fs::create_dir_all(golden_dir()).unwrap();
            fs::write(&path, &actual).unwrap();
        }
        assert_eq!(actual, fs::read_to_string(&path).unwrap(), "{name} drifted from golden");
    }
}

#[test]
fn report_json_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::synth_config(dir.path(), SyntheticProfile::PerfectlyAligned, 10, 3);
    common::run_all(&cfg);
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(cfg.out_path().join("report.json")).unwrap()).unwrap();
    let meta = &v["metadata"];
    assert_eq!(meta["template_ids"]["index"], "v1-index");
    assert_eq!(meta["template_ids"]["text"], "v1-text");
    assert_eq!(meta["aggregation_modes"], serde_json::json!(["mean_per_question", "pooled"]));
    assert_eq!(meta["cache_state_hash"].as_str().unwrap().len(), 64);
    assert!(meta["tie_rules"]["kendall"].as_str().unwrap().contains("tau-a"));
    assert_eq!(meta["config"]["dataset"], "dataset.jsonl");
    assert_eq!(v["dataset"]["n_questions"], 10);
    assert_eq!(v["rq1"][0]["pearson"].as_f64().map(|p| (p - 1.0).abs() < 1e-9), Some(true));
}

#[test]
fn analysis_is_independent_of_scoring_order_and_concurrency() {
    let run = |concurrency: usize| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = common::synth_config(dir.path(), SyntheticProfile::UniformStudents, 25, 5);
        cfg.backend.concurrency = concurrency;
        common::run_all(&cfg);
        let mut files = common::read_dir_bytes(&cfg.out_path());
        // the effective config records the concurrency itself
        for name in ["rq1.json", "rq2.json", "report.json"] {
            let mut v: serde_json::Value = serde_json::from_slice(&files[name]).unwrap();
            v["metadata"]["config"]["backend"]["concurrency"] = serde_json::Value::Null;
            files.insert(name.to_string(), serde_json::to_vec(&v).unwrap());
        }
        (dir, files)
    };
    let (_a, one) = run(1);
    let (_b, eight) = run(8);
    assert_eq!(one, eight);
}

#[test]
fn analyze_never_touches_the_network() {
    let dir = tempfile::tempdir().unwrap();
    common::synth_config(dir.path(), SyntheticProfile::AntiAligned, 12, 2);
    let server = table_server(dir.path(), ServerOptions::default());
    let cfg = RunConfig::load(&point_at(dir.path(), &server.endpoint())).unwrap();
    let stats = cmd_score(&cfg, false).unwrap();
    assert_eq!(stats.backend_calls, 12 * 8);
    let before = server.request_count();
    assert_eq!(before, 12 * 8);

    cmd_analyze(&cfg).unwrap();
    cmd_report(&cfg).unwrap();
    assert_eq!(server.request_count(), before);

    // an unreachable endpoint makes no difference to the offline stages
    let cfg = RunConfig::load(&point_at(dir.path(), "http://127.0.0.1:9")).unwrap();
    assert!(cmd_analyze(&cfg).is_ok());
    let out = bin(&["analyze", "--offline", "--config", dir.path().join("http.toml").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn interrupted_score_resumes_without_rescoring() {
    let dir = tempfile::tempdir().unwrap();
    common::synth_config(dir.path(), SyntheticProfile::PerfectlyAligned, 40, 8);
    let total = 40 * 8;
    let server = table_server(
        dir.path(),
        ServerOptions {
            delay: Duration::from_millis(10),
            ..Default::default()
        },
    );
    let config = point_at(dir.path(), &server.endpoint());
    let cache = dir.path().join("cache.jsonl");

    let mut child = Command::new(BIN)
        .args(["score", "--config", config.to_str().unwrap()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let lines = fs::File::open(&cache)
            .map(|f| BufReader::new(f).lines().count())
            .unwrap_or(0);
        if lines >= 40 || Instant::now() > deadline {
            break;
        }
        thread::sleep(Duration::from_millis(5));
    }
    child.kill().unwrap();
    child.wait().unwrap();

    let cached = ScoreCache::open(&cache).unwrap().len();
    assert!(cached >= 40 && cached < total, "cached {cached}");
    let cfg = RunConfig::load(&config).unwrap();
    let stats = cmd_score(&cfg, false).unwrap();
    assert_eq!(stats.backend_calls, total - cached);
    assert_eq!(stats.cache_hits, cached);
    assert_eq!(cmd_score(&cfg, false).unwrap().backend_calls, 0);
    assert!(cmd_analyze(&cfg).is_ok());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = bin(&["synth", "--out", d.to_str().unwrap(), "--seed", "4", "--n", "8", "--profile", "anti-aligned"]);
    assert!(synth.status.success());
    let config = d.join("config.toml");
    let c = config.to_str().unwrap();

    assert_eq!(bin(&["validate", "--config", c]).status.code(), Some(0));
    // report and analyze before their inputs exist
    assert_eq!(bin(&["report", "--config", c]).status.code(), Some(3));
    assert_eq!(bin(&["analyze", "--config", c]).status.code(), Some(2));
    assert_eq!(bin(&["score", "--config", c, "--offline"]).status.code(), Some(0));
    assert_eq!(bin(&["analyze", "--config", c]).status.code(), Some(0));
    let report = bin(&["report", "--config", c, "--approach", "index", "--aggregation", "pooled"]);
    assert_eq!(report.status.code(), Some(0));
    let rq1 = fs::read_to_string(d.join("out/rq1.csv")).unwrap();
    assert_eq!(rq1.lines().count(), 2, "{rq1}");
    assert!(rq1.contains(",index,pooled,"));

    let unknown = bin(&["score", "--config", c, "--models", "nope"]);
    assert_eq!(unknown.status.code(), Some(1));

    // bad fraction sum on line 3
    let dataset = fs::read_to_string(d.join("dataset.jsonl")).unwrap();
    let mut lines: Vec<String> = dataset.lines().map(String::from).collect();
    lines[2] = lines[2].replace("\"responses\":[", "\"responses\":[0.5,");
    lines[2] = lines[2].replacen(",", "", 0);
    let bad: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(d.join("bad.jsonl"), bad).unwrap();
    let bad_cfg = d.join("bad.toml");
    fs::write(&bad_cfg, fs::read_to_string(&config).unwrap().replace("dataset.jsonl", "bad.jsonl")).unwrap();
    let out = bin(&["validate", "--config", bad_cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));

    // a non-table model without any endpoint
    let no_ep = d.join("noep.toml");
    fs::write(
        &no_ep,
        fs::read_to_string(&config)
            .unwrap()
            .replace("endpoint = \"table\"\n", "")
            .replace("table = \"table.jsonl\"\n", ""),
    )
    .unwrap();
    let out = bin(&["validate", "--config", no_ep.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing endpoint"));

    // network model while offline
    let http = point_at(d, "http://127.0.0.1:9");
    fs::remove_file(d.join("cache.jsonl")).unwrap();
    assert_eq!(bin(&["score", "--config", http.to_str().unwrap(), "--offline"]).status.code(), Some(2));
    // unreachable backend
    assert_eq!(bin(&["score", "--config", http.to_str().unwrap()]).status.code(), Some(2));

    // no question survives the filter
    let empty = d.join("empty.toml");
    fs::write(
        &empty,
        fs::read_to_string(&config).unwrap().replace("min_respondents = 50", "min_respondents = 100000"),
    )
    .unwrap();
    assert_eq!(bin(&["analyze", "--config", empty.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn synth_is_deterministic_and_validates() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = bin(&["synth", "--out", d.path().to_str().unwrap(), "--seed", "11", "--profile", "uniform-students"]);
        assert!(out.status.success());
    }
    for f in ["dataset.jsonl", "table.jsonl", "config.toml"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let out = bin(&["validate", "--config", a.path().join("config.toml").to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("50 records, 50 pass"));
}

#[test]
fn non_finite_scores_are_excluded_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::synth_config(dir.path(), SyntheticProfile::PerfectlyAligned, 6, 9);
    let table = dir.path().join("table.jsonl");
    let text = fs::read_to_string(&table).unwrap();
    // poison the first index-approach entry of the first question
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let v: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    let lp = v["tokens"][0]["logprob"].to_string();
    lines[0] = lines[0].replace(&format!("\"logprob\":{lp}"), "\"logprob\":\"NaN\"");
    fs::write(&table, lines.join("\n") + "\n").unwrap();

    cmd_score(&cfg, true).unwrap();
    let out = cmd_analyze(&cfg).unwrap();
    assert_eq!(out.rq1.excluded.len(), 1);
    assert_eq!(out.rq1.excluded[0].question_id, "syn-000");
    let index_mean = &out.rq1.summaries[0];
    assert_eq!(index_mean.n_questions, 5);
    assert!(cmd_report(&cfg).is_ok());
}

#[test]
fn missing_config_is_a_validation_error() {
    let err = RunConfig::load(Path::new("/nonexistent/config.toml")).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)));
    assert_eq!(err.exit_code(), 1);
}
