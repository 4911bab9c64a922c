//! Seeded synthetic datasets with a matching table-backend score table.
//!
//! Generation uses ChaCha8 seeded from the `u64` seed, so the same seed
//! yields the same bytes on every platform.
//!
//! Student counts per question are four distinct values `d < c < b < a`.
//! The correct option receives `a`, except on every third question
//! (`i % 3 == 0`) where it receives `b` so the modal distractor outdraws it.
//! The remaining counts are shuffled over the other slots.
//!
//! Model probabilities per profile:
//! - `perfectly_aligned`: the student fractions themselves.
//! - `anti_aligned`: the correct option keeps its fraction and the
//!   distractor fractions are reassigned in reversed popularity order.
//! - `uniform_students`: all distractors share one student count; the model
//!   gets random distinct weights.
//!
//! The table stores `ln p` for the index continuation token and for every
//! token of the text continuation, so both approaches recover `p` after
//! normalization.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{McqItem, McqQuestion, StudentDistribution};
use crate::backend::{simple_tokenize, TableEntry, TokenLogprob};
use crate::scoring::{render_prompt, Approach};

const SUBJECTS: [&str; 5] = ["biology", "chemistry", "geography", "history", "physics"];

const WORDS: [&str; 40] = [
    "amber", "basalt", "cedar", "delta", "ember", "fjord", "garnet", "harbor", "iris", "jasper", "kelp",
    "lagoon", "marble", "nectar", "onyx", "prairie", "quartz", "reef", "sierra", "tundra", "umber",
    "valley", "willow", "xenon", "yarrow", "zephyr", "atoll", "bamboo", "canyon", "dune", "estuary",
    "fern", "glacier", "heath", "isthmus", "juniper", "knoll", "lichen", "mesa", "nimbus",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticProfile {
    PerfectlyAligned,
    AntiAligned,
    UniformStudents,
}

impl SyntheticProfile {
    pub const ALL: [SyntheticProfile; 3] = [
        SyntheticProfile::PerfectlyAligned,
        SyntheticProfile::AntiAligned,
        SyntheticProfile::UniformStudents,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticProfile::PerfectlyAligned => "perfectly_aligned",
            SyntheticProfile::AntiAligned => "anti_aligned",
            SyntheticProfile::UniformStudents => "uniform_students",
        }
    }
}

impl fmt::Display for SyntheticProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown synthetic profile {0:?}")]
pub struct UnknownProfile(pub String);

impl FromStr for SyntheticProfile {
    type Err = UnknownProfile;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownProfile(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFixture {
    pub items: Vec<McqItem>,
    /// Entries for both approaches, in item order.
    pub table: Vec<TableEntry>,
    /// Model probabilities the table encodes, one vector per item.
    pub model_probabilities: Vec<Vec<f64>>,
}

/// Strictly decreasing counts `[a, b, c, d]`.
fn ordered_counts(rng: &mut ChaCha8Rng) -> [u64; 4] {
    let d = rng.random_range(5..=30);
    let c = d + rng.random_range(5..=30);
    let b = c + rng.random_range(5..=40);
    let a = b + rng.random_range(5..=120);
    [a, b, c, d]
}

fn student_counts(rng: &mut ChaCha8Rng, profile: SyntheticProfile, hard: bool, correct: usize) -> Vec<u64> {
    let mut counts = vec![0; 4];
    let rest: Vec<usize> = (0..4).filter(|&j| j != correct).collect();
    match profile {
        SyntheticProfile::UniformStudents => {
            let d = rng.random_range(20..=60);
            counts[correct] = d + rng.random_range(10..=150);
            for j in rest {
                counts[j] = d;
            }
        }
        _ => {
            let [a, b, c, d] = ordered_counts(rng);
            let (top, mut others) = if hard { (b, vec![a, c, d]) } else { (a, vec![b, c, d]) };
            others.shuffle(rng);
            counts[correct] = top;
            for (j, v) in rest.into_iter().zip(others) {
                counts[j] = v;
            }
        }
    }
    counts
}

fn model_probabilities(rng: &mut ChaCha8Rng, profile: SyntheticProfile, s: &[f64], correct: usize) -> Vec<f64> {
    match profile {
        SyntheticProfile::PerfectlyAligned => s.to_vec(),
        SyntheticProfile::AntiAligned => {
            let mut slots: Vec<usize> = (0..s.len()).filter(|&j| j != correct).collect();
            slots.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
            let mut p = s.to_vec();
            let n = slots.len();
            for k in 0..n {
                p[slots[k]] = s[slots[n - 1 - k]];
            }
            p
        }
        SyntheticProfile::UniformStudents => {
            let mut weights: Vec<u32> = (1..=40).collect();
            weights.shuffle(rng);
            let w = &weights[..s.len()];
            let total: u32 = w.iter().sum();
            w.iter().map(|&x| f64::from(x) / f64::from(total)).collect()
        }
    }
}

fn option_texts(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut picks = WORDS;
    picks.shuffle(rng);
    (0..4)
        .map(|j| {
            if rng.random_bool(0.5) {
                picks[j].to_string()
            } else {
                format!("{} {}", picks[j], picks[j + 4])
            }
        })
        .collect()
}

fn table_entries(item: &McqItem, p: &[f64]) -> Vec<TableEntry> {
    let mut out = Vec::new();
    for approach in Approach::ALL {
        let bundle = render_prompt(&item.question, approach).expect("four options render");
        for (cont, &pj) in bundle.continuations.iter().zip(p) {
            let lp = pj.ln();
            let tokens = match approach {
                Approach::Index => vec![TokenLogprob::new(cont.clone(), lp)],
                Approach::Text => simple_tokenize(cont)
                    .into_iter()
                    .map(|t| TokenLogprob::new(t, lp))
                    .collect(),
            };
            out.push(TableEntry {
                context: bundle.context.clone(),
                continuation: cont.clone(),
                tokens,
            });
        }
    }
    out
}

pub fn generate_synthetic(seed: u64, n_questions: usize, profile: SyntheticProfile) -> SyntheticFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_questions.max(1).to_string().len().max(3);
    let mut fixture = SyntheticFixture {
        items: Vec::with_capacity(n_questions),
        table: Vec::with_capacity(n_questions * 8),
        model_probabilities: Vec::with_capacity(n_questions),
    };
    for i in 0..n_questions {
        let correct = rng.random_range(0..4);
        let subject = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
        let options = option_texts(&mut rng);
        let counts = student_counts(&mut rng, profile, i % 3 == 0, correct);
        let total: u64 = counts.iter().sum();
        let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let p = model_probabilities(&mut rng, profile, &fractions, correct);
        let item = McqItem {
            question: McqQuestion {
                id: format!("syn-{i:0width$}"),
                subject: subject.to_string(),
                stem: format!("Item {i}: which {subject} term fits best?"),
                options,
                correct_index: correct,
            },
            students: StudentDistribution {
                fractions,
                n_respondents: total,
            },
        };
        fixture.table.extend(table_entries(&item, &p));
        fixture.items.push(item);
        fixture.model_probabilities.push(p);
    }
    fixture
}
