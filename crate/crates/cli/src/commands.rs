//! Pipeline stages. Only `score` talks to backends; `analyze` reads the
//! cache and `report` reads analysis files.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use distractor_align::backend::{
    cache_key, load_table_backend, write_table, BackendError, HttpBackend, RetryPolicy, ScoreCache, Scorer,
    ScoringBackend, Variant, TABLE_ENDPOINT,
};
use distractor_align::dataset::{
    filter_dataset, generate_synthetic, parse_dataset, parse_dataset_all, summarize_dataset, write_dataset,
    DatasetSummary, SyntheticProfile,
};
use distractor_align::distractor_correlation::{summarize_correlations, DistractorPoints, QuestionCorrelations};
use distractor_align::error_alignment::{analyze_selection, summarize_errors, ErrorAnalysisRecord};
use distractor_align::report::{
    build_size_series, rq1_rows, rq1_table, rq2_rows, rq2_table, series_table, ReportExport, RunMetadata, Table,
};
use distractor_align::scoring::{loglikelihood, normalize, render_prompt, ScoringError};
use distractor_align::{
    Aggregation, AlignmentSummary64, Approach, Coefficient, CorrelationSummary64, FilterCriteria, McqItem,
};
use serde::{Deserialize, Serialize};

use crate::config::{BackendSettings, ModelConfig, RunConfig, Templates};
use crate::CliError;

pub const RQ1_JSON: &str = "rq1.json";
pub const RQ2_JSON: &str = "rq2.json";
pub const DATASET_SUMMARY_JSON: &str = "dataset_summary.json";
pub const RQ1_CSV: &str = "rq1.csv";
pub const RQ2_CSV: &str = "rq2.csv";
pub const SERIES_CSV: &str = "size_series.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| {
        CliError::NoData(format!("{}: {e}; run `analyze` first", path.display()))
    })?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn backend_error(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Backend(format!("{context}: {e}"))
}

/// Parsed, filtered items in id order.
pub fn load_items(cfg: &RunConfig) -> Result<Vec<McqItem>, CliError> {
    let path = cfg.dataset_path();
    let file = File::open(&path).map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
    let items = parse_dataset(BufReader::new(file)).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
    let mut kept = filter_dataset(&items, &cfg.filter);
    kept.sort_by(|a, b| a.question.id.cmp(&b.question.id));
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateReport {
    pub diagnostics: Vec<String>,
    pub n_records: usize,
    pub n_kept: usize,
}

impl ValidateReport {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

pub fn cmd_validate(cfg: &RunConfig) -> ValidateReport {
    let mut diagnostics = cfg.diagnostics();
    let (mut n_records, mut n_kept) = (0, 0);
    if let Ok(file) = File::open(cfg.dataset_path()) {
        let (items, errors) = parse_dataset_all(BufReader::new(file));
        diagnostics.extend(errors.iter().map(|e| e.to_string()));
        n_records = items.len();
        n_kept = filter_dataset(&items, &cfg.filter).len();
    }
    ValidateReport {
        diagnostics,
        n_records,
        n_kept,
    }
}

pub const SYNTH_MODEL: &str = "synthetic-table";

/// Writes `dataset.jsonl`, `table.jsonl` and a ready-to-run `config.toml`.
pub fn cmd_synth(seed: u64, profile: SyntheticProfile, n: usize, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out)?;
    let fixture = generate_synthetic(seed, n, profile);
    let dataset = out.join("dataset.jsonl");
    let table = out.join("table.jsonl");
    let config = out.join("config.toml");

    let mut w = BufWriter::new(File::create(&dataset)?);
    write_dataset(&fixture.items, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(&table)?);
    write_table(&fixture.table, &mut w)?;
    w.flush()?;

    let cfg = RunConfig {
        dataset: "dataset.jsonl".into(),
        cache: "cache.jsonl".into(),
        out_dir: "out".into(),
        seed,
        approaches: Approach::ALL.to_vec(),
        aggregations: Aggregation::ALL.to_vec(),
        filter: FilterCriteria::default(),
        backend: BackendSettings::default(),
        templates: Templates::default(),
        models: vec![ModelConfig {
            name: SYNTH_MODEL.into(),
            family: "synthetic".into(),
            parameter_count: 1.0,
            variant: Variant::Base,
            endpoint: Some(TABLE_ENDPOINT.into()),
            table: Some("table.jsonl".into()),
            fallback: Default::default(),
        }],
        base_dir: PathBuf::new(),
    };
    let text = toml::to_string(&cfg).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(&config, format!("# synthetic profile {profile}, seed {seed}, {n} questions\n{text}"))?;
    Ok(vec![dataset, table, config])
}

/// Backend for one configured model. Network backends are refused offline.
pub fn make_backend(cfg: &RunConfig, model: &ModelConfig, offline: bool) -> Result<Arc<dyn ScoringBackend>, CliError> {
    if model.is_table() {
        let path = model
            .table
            .as_ref()
            .map(|t| cfg.resolve(t))
            .ok_or_else(|| CliError::Validation(vec![format!("model {:?}: no table file", model.name)]))?;
        let backend = load_table_backend(&path, model.fallback)
            .map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
        return Ok(Arc::new(backend));
    }
    let endpoint = cfg
        .endpoint_for(model)
        .ok_or_else(|| CliError::Validation(vec![format!("model {:?}: missing endpoint", model.name)]))?;
    if offline {
        return Err(backend_error(&model.name, BackendError::Offline(endpoint.to_string())));
    }
    let token = match &cfg.backend.auth_env {
        None => None,
        Some(var) => Some(std::env::var(var).map_err(|_| {
            CliError::Validation(vec![format!("environment variable {var} (backend.auth_env) is not set")])
        })?),
    };
    let retry = RetryPolicy {
        max_attempts: cfg.backend.retries,
        ..RetryPolicy::default()
    };
    Ok(Arc::new(HttpBackend::new(
        endpoint,
        token,
        retry,
        Duration::from_secs(cfg.backend.timeout_secs),
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ScoreStats {
    pub requests: usize,
    pub backend_calls: usize,
    pub cache_hits: usize,
}

pub fn cmd_score(cfg: &RunConfig, offline: bool) -> Result<ScoreStats, CliError> {
    let backends = cfg
        .models
        .iter()
        .map(|m| Ok((m.name.clone(), make_backend(cfg, m, offline)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    score_with(cfg, &backends)
}

struct Job<'a> {
    model: usize,
    question: &'a str,
    template_id: &'static str,
    context: Arc<str>,
    continuation: String,
}

/// Scores every (model, question, approach, option) not yet cached, with at
/// most `backend.concurrency` requests in flight.
pub fn score_with(cfg: &RunConfig, backends: &[(String, Arc<dyn ScoringBackend>)]) -> Result<ScoreStats, CliError> {
    let items = load_items(cfg)?;
    let cache = Arc::new(ScoreCache::open(cfg.cache_path()).map_err(|e| backend_error("cache", e))?);
    let scorers: Vec<Scorer> = backends
        .iter()
        .map(|(_, b)| Scorer::new(Arc::clone(b), Arc::clone(&cache)))
        .collect();

    let mut jobs = Vec::new();
    for (m, _) in backends.iter().enumerate() {
        for item in &items {
            for &approach in &cfg.approaches {
                let bundle = render_prompt(&item.question, approach)
                    .map_err(|e| CliError::Validation(vec![e.to_string()]))?;
                let context: Arc<str> = bundle.context.into();
                for continuation in bundle.continuations {
                    jobs.push(Job {
                        model: m,
                        question: &item.question.id,
                        template_id: approach.template_id(),
                        context: Arc::clone(&context),
                        continuation,
                    });
                }
            }
        }
    }

    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let first_error: Mutex<Option<CliError>> = Mutex::new(None);
    let workers = cfg.backend.concurrency.max(1).min(jobs.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                while !failed.load(Ordering::SeqCst) {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = jobs.get(i) else { break };
                    let name = &backends[job.model].0;
                    let result =
                        scorers[job.model].score(name, job.template_id, &job.context, &job.continuation);
                    if let Err(e) = result {
                        failed.store(true, Ordering::SeqCst);
                        let mut slot = first_error.lock().expect("error slot");
                        slot.get_or_insert_with(|| {
                            backend_error(&format!("model {name}, question {}", job.question), e)
                        });
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("error slot") {
        return Err(e);
    }
    Ok(ScoreStats {
        requests: jobs.len(),
        backend_calls: scorers.iter().map(Scorer::backend_calls).sum(),
        cache_hits: scorers.iter().map(Scorer::cache_hits).sum(),
    })
}

/// A question dropped from analysis, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub model: String,
    pub approach: Approach,
    pub question_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub model: String,
    pub approach: Approach,
    pub question_id: String,
    pub correct_index: usize,
    pub log_likelihoods: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub pearson: Coefficient<f64>,
    pub spearman: Coefficient<f64>,
    pub kendall: Coefficient<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelErrorRecord {
    pub model: String,
    pub approach: Approach,
    #[serde(flatten)]
    pub record: ErrorAnalysisRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq1File {
    pub metadata: RunMetadata,
    pub summaries: Vec<CorrelationSummary64>,
    pub questions: Vec<QuestionResult>,
    pub excluded: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq2File {
    pub metadata: RunMetadata,
    pub summaries: Vec<AlignmentSummary64>,
    pub records: Vec<ModelErrorRecord>,
    pub excluded: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOutput {
    pub rq1: Rq1File,
    pub rq2: Rq2File,
    pub dataset: DatasetSummary,
    pub files: Vec<PathBuf>,
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeOutput, CliError> {
    let items = load_items(cfg)?;
    if items.is_empty() {
        return Err(CliError::NoData("no questions survive the filter".into()));
    }
    let cache_path = cfg.cache_path();
    if !cache_path.is_file() {
        return Err(CliError::Backend(format!(
            "cache {} does not exist; run `score` first",
            cache_path.display()
        )));
    }
    let cache = Arc::new(ScoreCache::open(&cache_path).map_err(|e| backend_error("cache", e))?);
    let scorer = Scorer::cache_only(cache);

    let mut keys = BTreeSet::new();
    let mut questions = Vec::new();
    let mut records = Vec::new();
    let mut excluded = Vec::new();
    let mut rq1_summaries = Vec::new();
    let mut rq2_summaries = Vec::new();
    for model in &cfg.models {
        let ms = scorer.for_model(&model.name);
        for &approach in &cfg.approaches {
            let mut points = Vec::new();
            let mut errs = Vec::new();
            for item in &items {
                let q = &item.question;
                let bundle = render_prompt(q, approach).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
                for cont in &bundle.continuations {
                    keys.insert(cache_key(&model.name, approach.template_id(), &bundle.context, cont));
                }
                let lv = match loglikelihood::<f64, _>(&ms, q, approach) {
                    Ok(lv) => lv,
                    Err(e @ (ScoringError::NonFinite { .. } | ScoringError::EmptyTokenization { .. })) => {
                        excluded.push(Exclusion {
                            model: model.name.clone(),
                            approach,
                            question_id: q.id.clone(),
                            reason: e.to_string(),
                        });
                        continue;
                    }
                    Err(e) => return Err(backend_error(&format!("model {}", model.name), e)),
                };
                let p = normalize(&lv);
                let pts = DistractorPoints::new(&p, &item.students, q.correct_index)
                    .map_err(|e| CliError::Other(e.to_string()))?;
                let qc = QuestionCorrelations::compute(&pts).map_err(|e| CliError::Other(e.to_string()))?;
                let record = analyze_selection(&p, &item.students, q.correct_index)
                    .map_err(|e| CliError::Other(format!("question {}: {e}", q.id)))?;
                questions.push(QuestionResult {
                    model: model.name.clone(),
                    approach,
                    question_id: q.id.clone(),
                    correct_index: q.correct_index,
                    log_likelihoods: lv.log_likelihoods,
                    probabilities: p.probabilities,
                    pearson: qc.pearson,
                    spearman: qc.spearman,
                    kendall: qc.kendall,
                });
                points.push(pts);
                errs.push(record.clone());
                records.push(ModelErrorRecord {
                    model: model.name.clone(),
                    approach,
                    record,
                });
            }
            for &aggregation in &cfg.aggregations {
                rq1_summaries.push(
                    summarize_correlations(&model.name, approach, aggregation, &points)
                        .map_err(|e| CliError::Other(e.to_string()))?,
                );
            }
            rq2_summaries.push(summarize_errors(&model.name, approach, &errs));
        }
    }

    let state_hash = scorer.cache().state_hash(keys.iter().map(String::as_str));
    let metadata = RunMetadata::new(cfg.aggregations.clone(), state_hash, cfg.effective());
    let dataset = summarize_dataset(&items).map_err(|e| CliError::Other(e.to_string()))?;
    let rq1 = Rq1File {
        metadata: metadata.clone(),
        summaries: rq1_summaries,
        questions,
        excluded: excluded.clone(),
    };
    let rq2 = Rq2File {
        metadata,
        summaries: rq2_summaries,
        records,
        excluded,
    };

    let out = cfg.out_path();
    fs::create_dir_all(&out)?;
    let files = vec![out.join(RQ1_JSON), out.join(RQ2_JSON), out.join(DATASET_SUMMARY_JSON)];
    write_json(&files[0], &rq1)?;
    write_json(&files[1], &rq2)?;
    write_json(&files[2], &dataset)?;
    Ok(AnalyzeOutput {
        rq1,
        rq2,
        dataset,
        files,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub rq1: Table,
    pub rq2: Table,
    pub series: Table,
    pub files: Vec<PathBuf>,
}

impl ReportOutput {
    pub fn to_text(&self) -> String {
        format!(
            "Distractor correlations\n\n{}\nError alignment\n\n{}",
            self.rq1.to_text(),
            self.rq2.to_text()
        )
    }
}

/// Turns the analysis files into CSV tables, plot data and a JSON export.
pub fn cmd_report(cfg: &RunConfig) -> Result<ReportOutput, CliError> {
    let out = cfg.out_path();
    let rq1: Rq1File = read_json(&out.join(RQ1_JSON))?;
    let rq2: Rq2File = read_json(&out.join(RQ2_JSON))?;
    let dataset: Option<DatasetSummary> = read_json(&out.join(DATASET_SUMMARY_JSON)).ok();

    let wanted = |model: &str, approach: Approach| {
        cfg.models.iter().any(|m| m.name == model) && cfg.approaches.contains(&approach)
    };
    let summaries1: Vec<CorrelationSummary64> = rq1
        .summaries
        .into_iter()
        .filter(|s| wanted(&s.model, s.approach) && cfg.aggregations.contains(&s.aggregation))
        .collect();
    let summaries2: Vec<AlignmentSummary64> =
        rq2.summaries.into_iter().filter(|s| wanted(&s.model, s.approach)).collect();
    if summaries1.iter().all(|s| s.n_questions == 0) && summaries2.iter().all(|s| s.n_questions == 0) {
        return Err(CliError::NoData("analysis contains no scored questions".into()));
    }

    let specs = cfg.specs();
    let report = |e: distractor_align::report::ReportError| CliError::Other(e.to_string());
    let rows1 = rq1_rows(&summaries1, &specs).map_err(report)?;
    let rows2 = rq2_rows(&summaries2, &specs).map_err(report)?;
    let series = build_size_series(&summaries1, &specs).map_err(report)?;
    let output = ReportOutput {
        rq1: rq1_table(&rows1),
        rq2: rq2_table(&rows2),
        series: series_table(&series),
        files: [RQ1_CSV, RQ2_CSV, SERIES_CSV, REPORT_TXT, REPORT_JSON]
            .iter()
            .map(|f| out.join(f))
            .collect(),
    };
    let export = ReportExport {
        metadata: rq1.metadata,
        dataset,
        rq1: rows1,
        rq2: rows2,
        size_series: series,
    };

    fs::write(&output.files[0], output.rq1.to_csv())?;
    fs::write(&output.files[1], output.rq2.to_csv())?;
    fs::write(&output.files[2], output.series.to_csv())?;
    fs::write(&output.files[3], output.to_text())?;
    let mut w = BufWriter::new(File::create(&output.files[4])?);
    export.write_json(&mut w).map_err(report)?;
    w.flush()?;
    Ok(output)
}
