//! Prompt rendering and per-option log-likelihoods.
//!
//! Two zero-shot templates are fixed and versioned by `template_id`:
//!
//! * `v1-index`: `"Question: {stem}\nA. {opt0}\nB. {opt1}\n...\nAnswer:"`,
//!   continuations `" A"`, `" B"`, ... Multi-token letters are summed.
//! * `v1-text`: `"Question: {stem}\nAnswer:"`, continuation `" {option}"`,
//!   scored as the mean per-token log-probability.
//!
//! Scored continuations carry one leading space so the first token matches
//! the usual tokenizer convention for a word following `Answer:`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, TokenLogprob};
use crate::dataset::McqQuestion;
use crate::num::Real;

pub const INDEX_TEMPLATE_ID: &str = "v1-index";
pub const TEXT_TEMPLATE_ID: &str = "v1-text";

const MAX_LETTERED_OPTIONS: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Index,
    Text,
}

impl Approach {
    pub const ALL: [Approach; 2] = [Approach::Index, Approach::Text];

    pub fn template_id(self) -> &'static str {
        match self {
            Approach::Index => INDEX_TEMPLATE_ID,
            Approach::Text => TEXT_TEMPLATE_ID,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::Index => "index",
            Approach::Text => "text",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "index" => Ok(Approach::Index),
            "text" => Ok(Approach::Text),
            other => Err(format!("unknown approach `{other}` (expected index or text)")),
        }
    }
}

/// A rendered context plus one continuation per option, in option order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub context: String,
    pub continuations: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("{count} options cannot be lettered (max {MAX_LETTERED_OPTIONS})")]
    TooManyOptions { count: usize },
    #[error("question {question_id}: {source}")]
    Backend {
        question_id: String,
        #[source]
        source: BackendError,
    },
    #[error("question {question_id}: non-finite score for option {option}")]
    NonFinite { question_id: String, option: usize },
    #[error("question {question_id}: option {option} tokenized to nothing")]
    EmptyTokenization { question_id: String, option: usize },
}

fn letter(j: usize) -> char {
    (b'A' + j as u8) as char
}

pub fn render_index_prompt(q: &McqQuestion) -> Result<PromptBundle, ScoringError> {
    let m = q.options.len();
    if m > MAX_LETTERED_OPTIONS {
        return Err(ScoringError::TooManyOptions { count: m });
    }
    let mut context = format!("Question: {}\n", q.stem);
    for (j, opt) in q.options.iter().enumerate() {
        context.push_str(&format!("{}. {}\n", letter(j), opt));
    }
    context.push_str("Answer:");
    let continuations = (0..m).map(|j| format!(" {}", letter(j))).collect();
    Ok(PromptBundle {
        context,
        continuations,
    })
}

pub fn render_text_prompt(q: &McqQuestion) -> PromptBundle {
    PromptBundle {
        context: format!("Question: {}\nAnswer:", q.stem),
        continuations: q.options.iter().map(|o| format!(" {o}")).collect(),
    }
}

pub fn render_prompt(q: &McqQuestion, approach: Approach) -> Result<PromptBundle, ScoringError> {
    match approach {
        Approach::Index => render_index_prompt(q),
        Approach::Text => Ok(render_text_prompt(q)),
    }
}

/// Source of per-token log-probabilities for a continuation.
pub trait ContinuationScorer {
    fn token_logprobs(
        &self,
        template_id: &str,
        context: &str,
        continuation: &str,
    ) -> Result<Vec<TokenLogprob>, BackendError>;
}

impl<S: ContinuationScorer + ?Sized> ContinuationScorer for &S {
    fn token_logprobs(
        &self,
        template_id: &str,
        context: &str,
        continuation: &str,
    ) -> Result<Vec<TokenLogprob>, BackendError> {
        (**self).token_logprobs(template_id, context, continuation)
    }
}

/// Per-option log-likelihoods (nats) for one question under one approach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodVector<T = f64> {
    pub question_id: String,
    pub approach: Approach,
    pub log_likelihoods: Vec<T>,
    /// Tokens per continuation; all 1 for the index approach.
    pub token_counts: Vec<usize>,
}

/// Softmax-normalized option probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceProbabilities<T = f64> {
    pub question_id: String,
    pub approach: Approach,
    pub probabilities: Vec<T>,
}

fn score_options<T, S, F>(
    scorer: &S,
    q: &McqQuestion,
    approach: Approach,
    reduce: F,
) -> Result<LikelihoodVector<T>, ScoringError>
where
    T: Real,
    S: ContinuationScorer + ?Sized,
    F: Fn(&[TokenLogprob]) -> (T, usize),
{
    let bundle = render_prompt(q, approach)?;
    let mut log_likelihoods = Vec::with_capacity(bundle.continuations.len());
    let mut token_counts = Vec::with_capacity(bundle.continuations.len());
    for (option, cont) in bundle.continuations.iter().enumerate() {
        let tokens = scorer
            .token_logprobs(approach.template_id(), &bundle.context, cont)
            .map_err(|source| ScoringError::Backend {
                question_id: q.id.clone(),
                source,
            })?;
        if tokens.is_empty() {
            return Err(ScoringError::EmptyTokenization {
                question_id: q.id.clone(),
                option,
            });
        }
        let (value, count) = reduce(&tokens);
        if !value.is_finite() {
            return Err(ScoringError::NonFinite {
                question_id: q.id.clone(),
                option,
            });
        }
        log_likelihoods.push(value);
        token_counts.push(count);
    }
    Ok(LikelihoodVector {
        question_id: q.id.clone(),
        approach,
        log_likelihoods,
        token_counts,
    })
}

/// Log-probability of each option letter given the full lettered prompt.
pub fn index_loglikelihood<T: Real, S: ContinuationScorer + ?Sized>(
    scorer: &S,
    q: &McqQuestion,
) -> Result<LikelihoodVector<T>, ScoringError> {
    score_options(scorer, q, Approach::Index, |tokens| {
        let total = tokens.iter().map(|t| T::of(t.logprob)).sum::<T>();
        (total, 1)
    })
}

/// Mean per-token log-probability of each option text given only the stem.
pub fn text_loglikelihood<T: Real, S: ContinuationScorer + ?Sized>(
    scorer: &S,
    q: &McqQuestion,
) -> Result<LikelihoodVector<T>, ScoringError> {
    score_options(scorer, q, Approach::Text, |tokens| {
        let total = tokens.iter().map(|t| T::of(t.logprob)).sum::<T>();
        (total / T::of_count(tokens.len()), tokens.len())
    })
}

pub fn loglikelihood<T: Real, S: ContinuationScorer + ?Sized>(
    scorer: &S,
    q: &McqQuestion,
    approach: Approach,
) -> Result<LikelihoodVector<T>, ScoringError> {
    match approach {
        Approach::Index => index_loglikelihood(scorer, q),
        Approach::Text => text_loglikelihood(scorer, q),
    }
}

/// Max-subtracted softmax. Inputs must be finite.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total = exps.iter().copied().sum::<T>();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn normalize<T: Real>(v: &LikelihoodVector<T>) -> ChoiceProbabilities<T> {
    ChoiceProbabilities {
        question_id: v.question_id.clone(),
        approach: v.approach,
        probabilities: softmax(&v.log_likelihoods),
    }
}
