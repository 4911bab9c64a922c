//! Multiple-choice questions paired with aggregated student responses.
//!
//! Records are line-delimited JSON:
//!
//! ```text
//! {"id": "...", "subject": "...", "stem": "...", "options": [...],
//!  "correct_index": 0, "responses": [...], "n_respondents": 120}
//! ```

mod synth;

use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use synth::{generate_synthetic, SyntheticFixture, SyntheticProfile, UnknownProfile};

/// Absolute tolerance on the sum of response fractions.
pub const FRACTION_SUM_TOLERANCE: f64 = 1e-6;

/// Error-rate differences smaller than this are treated as equality, so a
/// question sitting exactly on the threshold is rejected regardless of how
/// its fractions rounded.
pub const ERROR_RATE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqQuestion {
    pub id: String,
    pub subject: String,
    pub stem: String,
    pub options: Vec<String>,
    pub correct_index: usize,
}

impl McqQuestion {
    pub fn option_count(&self) -> usize {
        self.options.len()
    }
}

/// Fraction of respondents choosing each option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentDistribution {
    pub fractions: Vec<f64>,
    pub n_respondents: u64,
}

impl StudentDistribution {
    pub fn correct_fraction(&self, correct_index: usize) -> f64 {
        self.fractions[correct_index]
    }

    pub fn error_rate(&self, correct_index: usize) -> f64 {
        1.0 - self.fractions[correct_index]
    }
}

/// A validated question together with its student distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct McqItem {
    pub question: McqQuestion,
    pub students: StudentDistribution,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: field `{field}`: {reason}")]
    Field {
        line: usize,
        field: &'static str,
        reason: String,
    },
    #[error("line {line}: {responses} response fractions for {options} options")]
    LengthMismatch {
        line: usize,
        options: usize,
        responses: usize,
    },
    #[error("line {line}: fractions sum {sum:?} ≠ 1.0")]
    FractionSum { line: usize, sum: f64 },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("dataset is empty")]
    Empty,
    #[error("reading dataset: {0}")]
    Io(#[from] io::Error),
}

impl DatasetError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DatasetError::Malformed { line, .. }
            | DatasetError::Field { line, .. }
            | DatasetError::LengthMismatch { line, .. }
            | DatasetError::FractionSum { line, .. }
            | DatasetError::DuplicateId { line, .. } => Some(*line),
            DatasetError::Empty | DatasetError::Io(_) => None,
        }
    }
}

fn field_err(line: usize, field: &'static str, reason: impl Into<String>) -> DatasetError {
    DatasetError::Field {
        line,
        field,
        reason: reason.into(),
    }
}

fn take_str(obj: &Map<String, Value>, line: usize, field: &'static str) -> Result<String, DatasetError> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(field_err(line, field, "expected a string")),
        None => Err(field_err(line, field, "missing")),
    }
}

fn take_uint(obj: &Map<String, Value>, line: usize, field: &'static str) -> Result<u64, DatasetError> {
    match obj.get(field) {
        Some(v) => v
            .as_u64()
            .ok_or_else(|| field_err(line, field, "expected a non-negative integer")),
        None => Err(field_err(line, field, "missing")),
    }
}

fn take_array<'a>(
    obj: &'a Map<String, Value>,
    line: usize,
    field: &'static str,
) -> Result<&'a Vec<Value>, DatasetError> {
    match obj.get(field) {
        Some(Value::Array(a)) => Ok(a),
        Some(_) => Err(field_err(line, field, "expected an array")),
        None => Err(field_err(line, field, "missing")),
    }
}

/// Parses and validates one record. `line` is 1-based and only used in errors.
pub fn parse_record(line: usize, text: &str) -> Result<McqItem, DatasetError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DatasetError::Malformed {
        line,
        reason: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| DatasetError::Malformed {
        line,
        reason: "expected a JSON object".into(),
    })?;

    let id = take_str(obj, line, "id")?;
    if id.is_empty() {
        return Err(field_err(line, "id", "must be non-empty"));
    }
    let subject = take_str(obj, line, "subject")?;
    let stem = take_str(obj, line, "stem")?;

    let options = take_array(obj, line, "options")?
        .iter()
        .enumerate()
        .map(|(j, v)| match v {
            Value::String(s) if !s.is_empty() => Ok(s.clone()),
            Value::String(_) => Err(field_err(line, "options", format!("option {j} is empty"))),
            _ => Err(field_err(line, "options", format!("option {j} is not a string"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if options.is_empty() {
        return Err(field_err(line, "options", "must be non-empty"));
    }

    let correct_index = take_uint(obj, line, "correct_index")? as usize;
    if correct_index >= options.len() {
        return Err(field_err(
            line,
            "correct_index",
            format!("{correct_index} out of range for {} options", options.len()),
        ));
    }

    let mut fractions = take_array(obj, line, "responses")?
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let f = v
                .as_f64()
                .ok_or_else(|| field_err(line, "responses", format!("entry {j} is not a number")))?;
            if !(0.0..=1.0).contains(&f) {
                return Err(field_err(line, "responses", format!("entry {j} = {f} outside [0, 1]")));
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if fractions.len() != options.len() {
        return Err(DatasetError::LengthMismatch {
            line,
            options: options.len(),
            responses: fractions.len(),
        });
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > FRACTION_SUM_TOLERANCE {
        return Err(DatasetError::FractionSum { line, sum });
    }
    for f in &mut fractions {
        *f /= sum;
    }

    let n_respondents = take_uint(obj, line, "n_respondents")?;
    if n_respondents == 0 {
        return Err(field_err(line, "n_respondents", "must be positive"));
    }

    Ok(McqItem {
        question: McqQuestion {
            id,
            subject,
            stem,
            options,
            correct_index,
        },
        students: StudentDistribution {
            fractions,
            n_respondents,
        },
    })
}

/// Parses every line, collecting all diagnostics instead of stopping at the first.
pub fn parse_dataset_all<R: BufRead>(source: R) -> (Vec<McqItem>, Vec<DatasetError>) {
    let mut items = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let text = match line {
            Ok(t) => t,
            Err(e) => {
                errors.push(DatasetError::Io(e));
                break;
            }
        };
        if text.trim().is_empty() {
            continue;
        }
        match parse_record(line_no, &text) {
            Ok(item) => {
                if !seen.insert(item.question.id.clone()) {
                    errors.push(DatasetError::DuplicateId {
                        line: line_no,
                        id: item.question.id,
                    });
                } else {
                    items.push(item);
                }
            }
            Err(e) => errors.push(e),
        }
    }
    (items, errors)
}

/// Parses a line-delimited dataset, failing on the first bad record.
pub fn parse_dataset<R: BufRead>(source: R) -> Result<Vec<McqItem>, DatasetError> {
    let (items, errors) = parse_dataset_all(source);
    match errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(items),
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    subject: &'a str,
    stem: &'a str,
    options: &'a [String],
    correct_index: usize,
    responses: &'a [f64],
    n_respondents: u64,
}

/// Writes items in the line-delimited record schema.
pub fn write_dataset<W: Write>(items: &[McqItem], mut out: W) -> io::Result<()> {
    for item in items {
        let rec = RecordOut {
            id: &item.question.id,
            subject: &item.question.subject,
            stem: &item.question.stem,
            options: &item.question.options,
            correct_index: item.question.correct_index,
            responses: &item.students.fractions,
            n_respondents: item.students.n_respondents,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterCriteria {
    pub min_respondents: u64,
    /// Retained questions must have an error rate strictly above this.
    pub min_error_rate: f64,
    pub required_option_count: usize,
}

impl Default for FilterCriteria {
    fn default() -> Self {
        FilterCriteria {
            min_respondents: 50,
            min_error_rate: 0.05,
            required_option_count: 4,
        }
    }
}

impl FilterCriteria {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_respondents < 1 {
            return Err("min_respondents must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.min_error_rate) {
            return Err(format!("min_error_rate {} outside [0, 1)", self.min_error_rate));
        }
        if self.required_option_count < 2 {
            return Err("required_option_count must be at least 2".into());
        }
        Ok(())
    }

    pub fn accepts(&self, item: &McqItem) -> bool {
        let q = &item.question;
        item.students.n_respondents >= self.min_respondents
            && q.option_count() == self.required_option_count
            && item.students.error_rate(q.correct_index) - self.min_error_rate > ERROR_RATE_EPSILON
    }
}

/// Keeps the items meeting `criteria`, preserving order.
pub fn filter_dataset(items: &[McqItem], criteria: &FilterCriteria) -> Vec<McqItem> {
    items.iter().filter(|i| criteria.accepts(i)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub count: usize,
    pub mean_correctness: f64,
}

/// Question-count and average correctness, overall and per subject.
///
/// Averages are unweighted over questions; respondent counts do not enter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_questions: usize,
    pub per_subject: BTreeMap<String, SubjectSummary>,
    pub overall_correctness: f64,
    pub weighting: String,
}

pub const CORRECTNESS_WEIGHTING: &str = "unweighted mean over questions";

pub fn summarize_dataset(items: &[McqItem]) -> Result<DatasetSummary, DatasetError> {
    if items.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut groups: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    let mut total = 0.0;
    for item in items {
        let f = item.students.correct_fraction(item.question.correct_index);
        total += f;
        let g = groups.entry(item.question.subject.as_str()).or_default();
        g.0 += 1;
        g.1 += f;
    }
    let per_subject = groups
        .into_iter()
        .map(|(s, (count, sum))| {
            (
                s.to_string(),
                SubjectSummary {
                    count,
                    mean_correctness: sum / count as f64,
                },
            )
        })
        .collect();
    Ok(DatasetSummary {
        n_questions: items.len(),
        per_subject,
        overall_correctness: total / items.len() as f64,
        weighting: CORRECTNESS_WEIGHTING.to_string(),
    })
}
