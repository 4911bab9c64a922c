//! Deterministic tables, plot-data series and JSON exports.
//!
//! CSV and text tables print numbers with three decimals and `NA` for
//! absent values. JSON keeps full precision.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{ModelSpec, Variant};
use crate::dataset::DatasetSummary;
use crate::distractor_correlation::{Aggregation, CorrelationSummary};
use crate::error_alignment::AlignmentSummary;
use crate::scoring::Approach;

pub const RQ1_COLUMNS: [&str; 9] = [
    "model",
    "approach",
    "aggregation",
    "pearson",
    "spearman",
    "kendall",
    "n_questions",
    "n_degenerate",
    "template_id",
];

pub const RQ2_COLUMNS: [&str; 8] = [
    "model",
    "approach",
    "n_incorrect",
    "pct_rank1",
    "pct_rank2",
    "pct_rank3",
    "mean_alignment",
    "template_id",
];

pub const SERIES_COLUMNS: [&str; 7] = [
    "family",
    "variant",
    "approach",
    "aggregation",
    "parameter_count",
    "model",
    "pearson",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("duplicate summary for {0}")]
    DuplicateKey(String),
    #[error("no model spec named {0:?}")]
    UnknownModel(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Fixed-precision cell text; `-0.000` is printed as `0.000`.
pub fn format_value(v: Option<f64>) -> String {
    match v {
        None => "NA".to_string(),
        Some(x) if x.is_nan() => "NA".to_string(),
        Some(x) => {
            let s = format!("{x:.3}");
            if s == "-0.000" {
                "0.000".to_string()
            } else {
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("cells are UTF-8")
    }

    /// Space-aligned plain text, first column left-aligned, others right-aligned.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.columns);
        out.push('\n');
        out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq1Row {
    pub model: String,
    pub approach: Approach,
    pub aggregation: Aggregation,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    pub n_questions: usize,
    pub n_degenerate: usize,
    pub template_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq2Row {
    pub model: String,
    pub approach: Approach,
    pub n_incorrect: usize,
    pub pct_rank1: Option<f64>,
    pub pct_rank2: Option<f64>,
    pub pct_rank3: Option<f64>,
    pub mean_alignment: Option<f64>,
    pub template_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSeriesPoint {
    pub family: String,
    pub variant: Variant,
    pub approach: Approach,
    pub aggregation: Aggregation,
    /// Billions of parameters.
    pub parameter_count: f64,
    pub model: String,
    pub pearson: Option<f64>,
}

fn spec_index(specs: &[ModelSpec]) -> HashMap<&str, &ModelSpec> {
    specs.iter().map(|s| (s.name.as_str(), s)).collect()
}

fn lookup<'a>(index: &HashMap<&str, &'a ModelSpec>, name: &str) -> Result<&'a ModelSpec, ReportError> {
    index
        .get(name)
        .copied()
        .ok_or_else(|| ReportError::UnknownModel(name.to_string()))
}

fn by_size(a: &ModelSpec, b: &ModelSpec) -> Ordering {
    a.parameter_count
        .total_cmp(&b.parameter_count)
        .then_with(|| a.name.cmp(&b.name))
}

/// RQ1 rows sorted by (approach, parameter count, model name, aggregation).
pub fn rq1_rows(summaries: &[CorrelationSummary], specs: &[ModelSpec]) -> Result<Vec<Rq1Row>, ReportError> {
    let index = spec_index(specs);
    let mut seen = HashSet::new();
    let mut keyed = Vec::with_capacity(summaries.len());
    for s in summaries {
        let spec = lookup(&index, &s.model)?;
        if !seen.insert((s.model.as_str(), s.approach, s.aggregation)) {
            return Err(ReportError::DuplicateKey(format!(
                "model {} approach {} aggregation {}",
                s.model, s.approach, s.aggregation
            )));
        }
        keyed.push((spec, s));
    }
    keyed.sort_by(|(sa, a), (sb, b)| {
        a.approach
            .cmp(&b.approach)
            .then_with(|| by_size(sa, sb))
            .then_with(|| a.aggregation.cmp(&b.aggregation))
    });
    Ok(keyed
        .into_iter()
        .map(|(_, s)| Rq1Row {
            model: s.model.clone(),
            approach: s.approach,
            aggregation: s.aggregation,
            pearson: s.pearson,
            spearman: s.spearman,
            kendall: s.kendall,
            n_questions: s.n_questions,
            n_degenerate: s.n_degenerate,
            template_id: s.approach.template_id().to_string(),
        })
        .collect())
}

pub fn rq1_table(rows: &[Rq1Row]) -> Table {
    let mut t = Table::new(&RQ1_COLUMNS);
    for r in rows {
        t.rows.push(vec![
            r.model.clone(),
            r.approach.to_string(),
            r.aggregation.to_string(),
            format_value(r.pearson),
            format_value(r.spearman),
            format_value(r.kendall),
            r.n_questions.to_string(),
            r.n_degenerate.to_string(),
            r.template_id.clone(),
        ]);
    }
    t
}

pub fn build_rq1_table(summaries: &[CorrelationSummary], specs: &[ModelSpec]) -> Result<Table, ReportError> {
    Ok(rq1_table(&rq1_rows(summaries, specs)?))
}

/// RQ2 rows sorted by (approach, parameter count, model name). Rank rates
/// are expressed as percentages.
pub fn rq2_rows(summaries: &[AlignmentSummary], specs: &[ModelSpec]) -> Result<Vec<Rq2Row>, ReportError> {
    let index = spec_index(specs);
    let mut seen = HashSet::new();
    let mut keyed = Vec::with_capacity(summaries.len());
    for s in summaries {
        let spec = lookup(&index, &s.model)?;
        if !seen.insert((s.model.as_str(), s.approach)) {
            return Err(ReportError::DuplicateKey(format!("model {} approach {}", s.model, s.approach)));
        }
        keyed.push((spec, s));
    }
    keyed.sort_by(|(sa, a), (sb, b)| a.approach.cmp(&b.approach).then_with(|| by_size(sa, sb)));
    Ok(keyed
        .into_iter()
        .map(|(_, s)| {
            let pct = |k: usize| s.rank_rates.map(|r| r[k] * 100.0);
            Rq2Row {
                model: s.model.clone(),
                approach: s.approach,
                n_incorrect: s.n_incorrect,
                pct_rank1: pct(0),
                pct_rank2: pct(1),
                pct_rank3: pct(2),
                mean_alignment: s.mean_alignment,
                template_id: s.approach.template_id().to_string(),
            }
        })
        .collect())
}

pub fn rq2_table(rows: &[Rq2Row]) -> Table {
    let mut t = Table::new(&RQ2_COLUMNS);
    for r in rows {
        t.rows.push(vec![
            r.model.clone(),
            r.approach.to_string(),
            r.n_incorrect.to_string(),
            format_value(r.pct_rank1),
            format_value(r.pct_rank2),
            format_value(r.pct_rank3),
            format_value(r.mean_alignment),
            r.template_id.clone(),
        ]);
    }
    t
}

pub fn build_rq2_table(summaries: &[AlignmentSummary], specs: &[ModelSpec]) -> Result<Table, ReportError> {
    Ok(rq2_table(&rq2_rows(summaries, specs)?))
}

/// Pearson against model size, grouped by (family, variant, approach,
/// aggregation) and ascending in size within each group.
pub fn build_size_series(
    summaries: &[CorrelationSummary],
    specs: &[ModelSpec],
) -> Result<Vec<SizeSeriesPoint>, ReportError> {
    let index = spec_index(specs);
    let mut points = Vec::with_capacity(summaries.len());
    for s in summaries {
        let spec = lookup(&index, &s.model)?;
        points.push(SizeSeriesPoint {
            family: spec.family.clone(),
            variant: spec.variant,
            approach: s.approach,
            aggregation: s.aggregation,
            parameter_count: spec.parameter_count,
            model: s.model.clone(),
            pearson: s.pearson,
        });
    }
    points.sort_by(|a, b| {
        (&a.family, a.variant, a.approach, a.aggregation)
            .cmp(&(&b.family, b.variant, b.approach, b.aggregation))
            .then_with(|| a.parameter_count.total_cmp(&b.parameter_count))
            .then_with(|| a.model.cmp(&b.model))
    });
    Ok(points)
}

pub fn series_table(points: &[SizeSeriesPoint]) -> Table {
    let mut t = Table::new(&SERIES_COLUMNS);
    for p in points {
        t.rows.push(vec![
            p.family.clone(),
            p.variant.to_string(),
            p.approach.to_string(),
            p.aggregation.to_string(),
            p.parameter_count.to_string(),
            p.model.clone(),
            format_value(p.pearson),
        ]);
    }
    t
}

/// Tie-handling conventions, keyed by the rule they govern.
pub fn tie_rules() -> BTreeMap<String, String> {
    [
        ("spearman", "average ranks; Pearson on ranks when ties are present"),
        ("kendall", "tau-a; tied pairs count as neither concordant nor discordant"),
        ("degenerate", "zero-variance inputs are flagged and excluded, never imputed"),
        ("model_choice", "argmax of option probabilities; lowest index wins ties"),
        ("distractor_rank", "ordered by student fraction; lower option index wins ties"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub template_ids: BTreeMap<String, String>,
    pub aggregation_modes: Vec<Aggregation>,
    pub tie_rules: BTreeMap<String, String>,
    pub cache_state_hash: String,
    pub correctness_weighting: String,
    pub config: serde_json::Value,
}

impl RunMetadata {
    pub fn new(aggregation_modes: Vec<Aggregation>, cache_state_hash: String, config: serde_json::Value) -> Self {
        RunMetadata {
            template_ids: Approach::ALL
                .iter()
                .map(|a| (a.to_string(), a.template_id().to_string()))
                .collect(),
            aggregation_modes,
            tie_rules: tie_rules(),
            cache_state_hash,
            correctness_weighting: crate::dataset::CORRECTNESS_WEIGHTING.to_string(),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportExport {
    pub metadata: RunMetadata,
    pub dataset: Option<DatasetSummary>,
    pub rq1: Vec<Rq1Row>,
    pub rq2: Vec<Rq2Row>,
    pub size_series: Vec<SizeSeriesPoint>,
}

impl ReportExport {
    pub fn write_json<W: Write>(&self, mut out: W) -> Result<(), ReportError> {
        serde_json::to_writer_pretty(&mut out, self).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}
