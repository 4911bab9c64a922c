//! Does the model, when wrong, pick the distractor students pick most?
//!
//! The model's answer is the argmax of its option probabilities (lowest
//! index on ties). For each wrong answer the alignment score is the chosen
//! distractor's student fraction over the largest distractor fraction, and
//! the distractor rank is its position among the distractors ordered by
//! student popularity (lower index wins ties).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::StudentDistribution;
use crate::num::Real;
use crate::scoring::{Approach, ChoiceProbabilities};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorRank {
    First,
    Second,
    Third,
}

impl DistractorRank {
    pub fn index(self) -> usize {
        match self {
            DistractorRank::First => 0,
            DistractorRank::Second => 1,
            DistractorRank::Third => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignmentError {
    #[error("selected option is the correct answer")]
    SelectedCorrect,
    #[error("no student chose any distractor")]
    NoDistractorResponses,
    #[error("distractor ranks need exactly 4 options, got {0}")]
    OptionCount(usize),
    #[error("option index {index} out of range for {len} options")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("question {question_id}: {model} model probabilities vs {students} student fractions")]
    LengthMismatch {
        question_id: String,
        model: usize,
        students: usize,
    },
}

/// Index of the largest probability; ties go to the lowest index.
pub fn select_choice<T: Real>(probabilities: &[T]) -> usize {
    let mut best = 0;
    for (j, &p) in probabilities.iter().enumerate().skip(1) {
        if p > probabilities[best] {
            best = j;
        }
    }
    best
}

/// 1 when the selected option is wrong, else 0.
pub fn error_indicator(selected: usize, correct: usize) -> u32 {
    u32::from(selected != correct)
}

fn check_indices(len: usize, selected: usize, correct: usize) -> Result<(), AlignmentError> {
    for index in [selected, correct] {
        if index >= len {
            return Err(AlignmentError::IndexOutOfRange { index, len });
        }
    }
    if selected == correct {
        return Err(AlignmentError::SelectedCorrect);
    }
    Ok(())
}

/// `s[selected] / max_{j != correct} s[j]`.
pub fn alignment_score<T: Real>(fractions: &[T], selected: usize, correct: usize) -> Result<T, AlignmentError> {
    check_indices(fractions.len(), selected, correct)?;
    let modal = fractions
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != correct)
        .map(|(_, &f)| f)
        .fold(T::zero(), T::max);
    if modal <= T::zero() {
        return Err(AlignmentError::NoDistractorResponses);
    }
    Ok(fractions[selected] / modal)
}

pub fn distractor_rank<T: Real>(
    fractions: &[T],
    selected: usize,
    correct: usize,
) -> Result<DistractorRank, AlignmentError> {
    if fractions.len() != 4 {
        return Err(AlignmentError::OptionCount(fractions.len()));
    }
    check_indices(fractions.len(), selected, correct)?;
    let chosen = fractions[selected];
    let ahead = fractions
        .iter()
        .enumerate()
        .filter(|&(j, &f)| j != correct && j != selected && (f > chosen || (f == chosen && j < selected)))
        .count();
    Ok(match ahead {
        0 => DistractorRank::First,
        1 => DistractorRank::Second,
        _ => DistractorRank::Third,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnalysisRecord<T = f64> {
    pub question_id: String,
    pub selected: usize,
    pub error: bool,
    /// Present iff `error`.
    pub alignment: Option<T>,
    /// Present iff `error`.
    pub distractor_rank: Option<DistractorRank>,
}

pub fn analyze_selection<T: Real>(
    p: &ChoiceProbabilities<T>,
    s: &StudentDistribution,
    correct: usize,
) -> Result<ErrorAnalysisRecord<T>, AlignmentError> {
    if p.probabilities.len() != s.fractions.len() {
        return Err(AlignmentError::LengthMismatch {
            question_id: p.question_id.clone(),
            model: p.probabilities.len(),
            students: s.fractions.len(),
        });
    }
    let selected = select_choice(&p.probabilities);
    if error_indicator(selected, correct) == 0 {
        return Ok(ErrorAnalysisRecord {
            question_id: p.question_id.clone(),
            selected,
            error: false,
            alignment: None,
            distractor_rank: None,
        });
    }
    let fractions: Vec<T> = s.fractions.iter().map(|&f| T::of(f)).collect();
    Ok(ErrorAnalysisRecord {
        question_id: p.question_id.clone(),
        selected,
        error: true,
        alignment: Some(alignment_score(&fractions, selected, correct)?),
        distractor_rank: Some(distractor_rank(&fractions, selected, correct)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary<T = f64> {
    pub model: String,
    pub approach: Approach,
    pub n_questions: usize,
    pub n_incorrect: usize,
    /// Fractions of wrong answers hitting the 1st, 2nd, 3rd most popular distractor.
    pub rank_rates: Option<[T; 3]>,
    pub mean_alignment: Option<T>,
}

/// Folds records into rank rates and the mean alignment over wrong answers.
/// The result does not depend on record order.
pub fn summarize_errors<T: Real>(
    model: &str,
    approach: Approach,
    records: &[ErrorAnalysisRecord<T>],
) -> AlignmentSummary<T> {
    let mut counts = [0usize; 3];
    let mut alignments = Vec::new();
    for r in records.iter().filter(|r| r.error) {
        if let Some(rank) = r.distractor_rank {
            counts[rank.index()] += 1;
        }
        if let Some(a) = r.alignment {
            alignments.push(a);
        }
    }
    let n_incorrect = records.iter().filter(|r| r.error).count();
    // summing in sorted order makes the float result order-independent
    alignments.sort_by(|a, b| a.partial_cmp(b).expect("finite alignment"));
    let (rank_rates, mean_alignment) = if n_incorrect == 0 {
        (None, None)
    } else {
        let n = T::of_count(n_incorrect);
        let rates = counts.map(|c| T::of_count(c) / n);
        let mean = alignments.iter().copied().sum::<T>() / T::of_count(alignments.len());
        (Some(rates), Some(mean))
    };
    AlignmentSummary {
        model: model.to_string(),
        approach,
        n_questions: records.len(),
        n_incorrect,
        rank_rates,
        mean_alignment,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // A correct (0.35), B 0.30, C 0.20, D 0.15
    const WORKED: [f64; 4] = [0.35, 0.30, 0.20, 0.15];

    fn record(alignment: f64, rank: DistractorRank) -> ErrorAnalysisRecord {
        ErrorAnalysisRecord {
            question_id: "q".into(),
            selected: 1,
            error: true,
            alignment: Some(alignment),
            distractor_rank: Some(rank),
        }
    }

    #[test]
    fn selection_and_ties() {
        assert_eq!(select_choice(&[0.1, 0.6, 0.2, 0.1]), 1);
        assert_eq!(select_choice(&[0.3, 0.3, 0.2, 0.2]), 0);
        assert_eq!(select_choice(&[0.2, 0.2, 0.3, 0.3]), 2);
    }

    #[test]
    fn indicator() {
        assert_eq!(error_indicator(2, 2), 0);
        assert_eq!(error_indicator(1, 2), 1);
        let selections = [0, 1, 2, 0, 3];
        let total: u32 = selections.iter().map(|&s| error_indicator(s, 0)).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn worked_alignment_example() {
        let a = alignment_score(&WORKED, 2, 0).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{a:.2}"), "0.67");
        assert_eq!(alignment_score(&WORKED, 1, 0).unwrap(), 1.0);
        assert!((alignment_score(&WORKED, 3, 0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn alignment_errors() {
        assert_eq!(alignment_score(&WORKED, 0, 0), Err(AlignmentError::SelectedCorrect));
        assert_eq!(
            alignment_score(&[1.0, 0.0, 0.0, 0.0], 1, 0),
            Err(AlignmentError::NoDistractorResponses)
        );
        assert!(matches!(
            alignment_score(&WORKED, 4, 0),
            Err(AlignmentError::IndexOutOfRange { index: 4, len: 4 })
        ));
    }

    #[test]
    fn ranks() {
        assert_eq!(distractor_rank(&WORKED, 1, 0).unwrap(), DistractorRank::First);
        assert_eq!(distractor_rank(&WORKED, 2, 0).unwrap(), DistractorRank::Second);
        assert_eq!(distractor_rank(&WORKED, 3, 0).unwrap(), DistractorRank::Third);
        // tie between options 1 and 2 at 0.25: the later index ranks second
        let tied = [0.40, 0.25, 0.25, 0.10];
        assert_eq!(distractor_rank(&tied, 1, 0).unwrap(), DistractorRank::First);
        assert_eq!(distractor_rank(&tied, 2, 0).unwrap(), DistractorRank::Second);
        assert_eq!(distractor_rank(&[0.5, 0.5, 0.0], 1, 0), Err(AlignmentError::OptionCount(3)));
    }

    #[test]
    fn summary_arithmetic() {
        let records = vec![
            record(1.0, DistractorRank::First),
            record(0.5, DistractorRank::Third),
            ErrorAnalysisRecord {
                question_id: "ok".into(),
                selected: 0,
                error: false,
                alignment: None,
                distractor_rank: None,
            },
        ];
        let s = summarize_errors("m", Approach::Index, &records);
        assert_eq!(s.n_incorrect, 2);
        assert_eq!(s.n_questions, 3);
        assert_eq!(s.mean_alignment, Some(0.75));
        assert_eq!(s.rank_rates, Some([0.5, 0.0, 0.5]));
    }

    #[test]
    fn no_errors_means_no_rates() {
        let s = summarize_errors::<f64>("m", Approach::Text, &[]);
        assert_eq!((s.n_incorrect, s.rank_rates, s.mean_alignment), (0, None, None));
    }

    #[test]
    fn record_from_probabilities() {
        let p = ChoiceProbabilities {
            question_id: "q".into(),
            approach: Approach::Index,
            probabilities: vec![0.1, 0.2, 0.6, 0.1],
        };
        let s = StudentDistribution {
            fractions: WORKED.to_vec(),
            n_respondents: 80,
        };
        let r = analyze_selection(&p, &s, 0).unwrap();
        assert!(r.error);
        assert_eq!(r.selected, 2);
        assert_eq!(r.distractor_rank, Some(DistractorRank::Second));
        let right = analyze_selection(&p, &s, 2).unwrap();
        assert!(!right.error && right.alignment.is_none() && right.distractor_rank.is_none());
    }
}
