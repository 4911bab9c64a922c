//! Correlation between model probabilities and student selection rates over
//! the distractors of each question.
//!
//! The correct option is dropped from both vectors before correlating, so a
//! 4-option question yields a 3-point correlation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::StudentDistribution;
use crate::num::Real;
use crate::scoring::{Approach, ChoiceProbabilities};
use crate::stats::{self, Coefficient, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
    Kendall,
}

impl CorrelationMethod {
    pub const ALL: [CorrelationMethod; 3] = [
        CorrelationMethod::Pearson,
        CorrelationMethod::Spearman,
        CorrelationMethod::Kendall,
    ];

    pub fn correlate<T: Real>(self, x: &[T], y: &[T]) -> Result<Coefficient<T>, StatsError> {
        match self {
            CorrelationMethod::Pearson => stats::pearson(x, y),
            CorrelationMethod::Spearman => stats::spearman(x, y),
            CorrelationMethod::Kendall => stats::kendall(x, y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of per-question coefficients, degenerate questions excluded.
    MeanPerQuestion,
    /// One coefficient over every (question, distractor) point.
    Pooled,
}

impl Aggregation {
    pub const ALL: [Aggregation; 2] = [Aggregation::MeanPerQuestion, Aggregation::Pooled];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::MeanPerQuestion => "mean_per_question",
            Aggregation::Pooled => "pooled",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" | "mean_per_question" => Ok(Aggregation::MeanPerQuestion),
            "pooled" => Ok(Aggregation::Pooled),
            other => Err(format!("unknown aggregation `{other}` (expected mean or pooled)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CorrelationError {
    #[error("question {question_id}: {source}")]
    Stats {
        question_id: String,
        #[source]
        source: StatsError,
    },
    #[error("question {question_id}: {model} model probabilities vs {students} student fractions")]
    LengthMismatch {
        question_id: String,
        model: usize,
        students: usize,
    },
    #[error("question {question_id}: correct index {correct} out of range")]
    CorrectIndex { question_id: String, correct: usize },
    #[error("no non-degenerate questions to aggregate")]
    NoValidQuestions,
}

/// Entries of `values` other than the correct one, in option order.
pub fn distractors<T: Copy>(values: &[T], correct: usize) -> Vec<T> {
    values
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != correct)
        .map(|(_, &v)| v)
        .collect()
}

/// Model and student distractor vectors for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct DistractorPoints<T = f64> {
    pub question_id: String,
    pub model: Vec<T>,
    pub students: Vec<T>,
}

impl<T: Real> DistractorPoints<T> {
    pub fn new(
        p: &ChoiceProbabilities<T>,
        s: &StudentDistribution,
        correct: usize,
    ) -> Result<Self, CorrelationError> {
        let m = p.probabilities.len();
        if m != s.fractions.len() {
            return Err(CorrelationError::LengthMismatch {
                question_id: p.question_id.clone(),
                model: m,
                students: s.fractions.len(),
            });
        }
        if correct >= m {
            return Err(CorrelationError::CorrectIndex {
                question_id: p.question_id.clone(),
                correct,
            });
        }
        let students: Vec<T> = s.fractions.iter().map(|&f| T::of(f)).collect();
        Ok(DistractorPoints {
            question_id: p.question_id.clone(),
            model: distractors(&p.probabilities, correct),
            students: distractors(&students, correct),
        })
    }

    pub fn correlate(&self, method: CorrelationMethod) -> Result<CorrelationResult<T>, CorrelationError> {
        let value = method
            .correlate(&self.model, &self.students)
            .map_err(|source| CorrelationError::Stats {
                question_id: self.question_id.clone(),
                source,
            })?;
        Ok(CorrelationResult {
            question_id: self.question_id.clone(),
            method,
            value,
            n_points: self.model.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult<T = f64> {
    pub question_id: String,
    pub method: CorrelationMethod,
    pub value: Coefficient<T>,
    pub n_points: usize,
}

pub fn question_correlation<T: Real>(
    p: &ChoiceProbabilities<T>,
    s: &StudentDistribution,
    correct: usize,
    method: CorrelationMethod,
) -> Result<CorrelationResult<T>, CorrelationError> {
    DistractorPoints::new(p, s, correct)?.correlate(method)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCorrelation<T> {
    pub value: T,
    pub n_used: usize,
    pub n_degenerate: usize,
}

/// Arithmetic mean over the non-degenerate results; degenerate ones are
/// counted, never imputed.
pub fn aggregate_correlations<T: Real>(
    results: &[CorrelationResult<T>],
) -> Result<MeanCorrelation<T>, CorrelationError> {
    let values: Vec<T> = results.iter().filter_map(|r| r.value.value()).collect();
    if values.is_empty() {
        return Err(CorrelationError::NoValidQuestions);
    }
    let n_used = values.len();
    Ok(MeanCorrelation {
        value: values.into_iter().sum::<T>() / T::of_count(n_used),
        n_used,
        n_degenerate: results.len() - n_used,
    })
}

/// A single coefficient over the concatenated distractor points of all questions.
pub fn pooled_correlation<T: Real>(
    points: &[DistractorPoints<T>],
    method: CorrelationMethod,
) -> Result<Coefficient<T>, CorrelationError> {
    let model: Vec<T> = points.iter().flat_map(|p| p.model.iter().copied()).collect();
    let students: Vec<T> = points.iter().flat_map(|p| p.students.iter().copied()).collect();
    method
        .correlate(&model, &students)
        .map_err(|source| CorrelationError::Stats {
            question_id: "<pooled>".into(),
            source,
        })
}

/// All three coefficients for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCorrelations<T = f64> {
    pub question_id: String,
    pub pearson: Coefficient<T>,
    pub spearman: Coefficient<T>,
    pub kendall: Coefficient<T>,
}

impl<T: Real> QuestionCorrelations<T> {
    pub fn compute(points: &DistractorPoints<T>) -> Result<Self, CorrelationError> {
        Ok(QuestionCorrelations {
            question_id: points.question_id.clone(),
            pearson: points.correlate(CorrelationMethod::Pearson)?.value,
            spearman: points.correlate(CorrelationMethod::Spearman)?.value,
            kendall: points.correlate(CorrelationMethod::Kendall)?.value,
        })
    }

    pub fn get(&self, method: CorrelationMethod) -> Coefficient<T> {
        match method {
            CorrelationMethod::Pearson => self.pearson,
            CorrelationMethod::Spearman => self.spearman,
            CorrelationMethod::Kendall => self.kendall,
        }
    }

    pub fn any_degenerate(&self) -> bool {
        CorrelationMethod::ALL.iter().any(|&m| self.get(m).is_degenerate())
    }
}

/// One row of the correlation report.
///
/// A coefficient is `None` when nothing could be aggregated (every question
/// degenerate, or the pooled vectors constant). `n_degenerate` counts
/// questions whose own coefficient is undefined under any method; under
/// pooling they still contribute their points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary<T = f64> {
    pub model: String,
    pub approach: Approach,
    pub aggregation: Aggregation,
    pub pearson: Option<T>,
    pub spearman: Option<T>,
    pub kendall: Option<T>,
    pub n_questions: usize,
    pub n_degenerate: usize,
}

impl<T: Copy> CorrelationSummary<T> {
    pub fn get(&self, method: CorrelationMethod) -> Option<T> {
        match method {
            CorrelationMethod::Pearson => self.pearson,
            CorrelationMethod::Spearman => self.spearman,
            CorrelationMethod::Kendall => self.kendall,
        }
    }
}

pub fn summarize_correlations<T: Real>(
    model: &str,
    approach: Approach,
    aggregation: Aggregation,
    points: &[DistractorPoints<T>],
) -> Result<CorrelationSummary<T>, CorrelationError> {
    let per_question = points
        .iter()
        .map(QuestionCorrelations::compute)
        .collect::<Result<Vec<_>, _>>()?;
    let n_degenerate = per_question.iter().filter(|q| q.any_degenerate()).count();

    let mut values = [None; 3];
    for (slot, method) in values.iter_mut().zip(CorrelationMethod::ALL) {
        *slot = match aggregation {
            Aggregation::MeanPerQuestion => {
                let results: Vec<CorrelationResult<T>> = per_question
                    .iter()
                    .zip(points)
                    .map(|(q, pt)| CorrelationResult {
                        question_id: q.question_id.clone(),
                        method,
                        value: q.get(method),
                        n_points: pt.model.len(),
                    })
                    .collect();
                match aggregate_correlations(&results) {
                    Ok(mean) => Some(mean.value),
                    Err(CorrelationError::NoValidQuestions) => None,
                    Err(e) => return Err(e),
                }
            }
            Aggregation::Pooled if points.is_empty() => None,
            Aggregation::Pooled => pooled_correlation(points, method)?.value(),
        };
    }
    let [pearson, spearman, kendall] = values;
    Ok(CorrelationSummary {
        model: model.to_string(),
        approach,
        aggregation,
        pearson,
        spearman,
        kendall,
        n_questions: points.len(),
        n_degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(v: &[f64]) -> ChoiceProbabilities {
        ChoiceProbabilities {
            question_id: "q".into(),
            approach: Approach::Index,
            probabilities: v.to_vec(),
        }
    }

    fn students(v: &[f64]) -> StudentDistribution {
        StudentDistribution {
            fractions: v.to_vec(),
            n_respondents: 100,
        }
    }

    #[test]
    fn identical_distractors_correlate_perfectly() {
        let p = probs(&[0.4, 0.3, 0.2, 0.1]);
        let s = students(&[0.4, 0.3, 0.2, 0.1]);
        for m in CorrelationMethod::ALL {
            let r = question_correlation(&p, &s, 0, m).unwrap();
            assert_eq!(r.n_points, 3);
            assert!((r.value.value().unwrap() - 1.0).abs() < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn uniform_student_distractors_are_degenerate() {
        let p = probs(&[0.4, 0.3, 0.2, 0.1]);
        let s = students(&[0.4, 0.2, 0.2, 0.2]);
        for m in CorrelationMethod::ALL {
            assert!(question_correlation(&p, &s, 0, m).unwrap().value.is_degenerate());
        }
    }

    #[test]
    fn drops_the_correct_option() {
        // distractors (0.5,0.3,0.2) vs (0.2,0.5,0.3) after removing index 2
        let p = probs(&[0.5, 0.3, 0.9, 0.2]);
        let s = students(&[0.2, 0.5, 0.0, 0.3]);
        let r = question_correlation(&p, &s, 2, CorrelationMethod::Pearson).unwrap();
        assert!((r.value.value().unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn mean_skips_degenerate() {
        let mk = |v| CorrelationResult {
            question_id: "q".into(),
            method: CorrelationMethod::Pearson,
            value: v,
            n_points: 3,
        };
        let results = [mk(Coefficient::Value(1.0)), mk(Coefficient::Value(0.0)), mk(Coefficient::Degenerate)];
        let mean = aggregate_correlations(&results).unwrap();
        assert_eq!(mean.value, 0.5);
        assert_eq!(mean.n_degenerate, 1);
        assert_eq!(
            aggregate_correlations(&[mk(Coefficient::<f64>::Degenerate)]),
            Err(CorrelationError::NoValidQuestions)
        );
    }

    #[test]
    fn input_errors() {
        let p = probs(&[0.5, 0.5]);
        assert!(matches!(
            question_correlation(&p, &students(&[0.2, 0.3, 0.5]), 0, CorrelationMethod::Kendall),
            Err(CorrelationError::LengthMismatch { .. })
        ));
        assert!(matches!(
            question_correlation(&p, &students(&[0.5, 0.5]), 2, CorrelationMethod::Kendall),
            Err(CorrelationError::CorrectIndex { .. })
        ));
        assert!(matches!(
            question_correlation(&p, &students(&[0.5, 0.5]), 0, CorrelationMethod::Kendall),
            Err(CorrelationError::Stats { source: StatsError::TooShort(1), .. })
        ));
    }

    #[test]
    fn all_degenerate_summary_has_no_values() {
        let p = probs(&[0.4, 0.3, 0.2, 0.1]);
        let s = students(&[0.4, 0.2, 0.2, 0.2]);
        let pts = vec![DistractorPoints::new(&p, &s, 0).unwrap(); 3];
        let mean = summarize_correlations("m", Approach::Index, Aggregation::MeanPerQuestion, &pts).unwrap();
        assert_eq!((mean.pearson, mean.n_degenerate, mean.n_questions), (None, 3, 3));
        let pooled = summarize_correlations("m", Approach::Index, Aggregation::Pooled, &pts).unwrap();
        assert_eq!(pooled.kendall, None);
    }

    #[test]
    fn aggregation_parsing() {
        assert_eq!("mean".parse::<Aggregation>().unwrap(), Aggregation::MeanPerQuestion);
        assert_eq!("pooled".parse::<Aggregation>().unwrap(), Aggregation::Pooled);
        assert!("both".parse::<Aggregation>().is_err());
    }
}
