use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{request_hash, BackendError, ScoreRequest, ScoreResponse, ScoringBackend, TokenLogprob};

/// One line of a table-backend file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub context: String,
    pub continuation: String,
    pub tokens: Vec<TokenLogprob>,
}

/// What the table backend answers for a request it has no entry for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    #[default]
    Error,
    /// Every token gets `ln(1/V)` for the declared vocabulary size `V`.
    Uniform(u32),
}

/// Splits text into tokens that each start at a space boundary, so that
/// `" the cell wall"` becomes `[" the", " cell", " wall"]`. Concatenating the
/// tokens always gives back the input.
pub fn simple_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut prev_space = true;
    for ch in text.chars() {
        let is_space = ch == ' ';
        if is_space && !prev_space && !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        current.push(ch);
        prev_space = is_space;
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Deterministic backend answering from a fixed table.
#[derive(Debug, Clone)]
pub struct TableBackend {
    entries: HashMap<(String, String), ScoreResponse>,
    fallback: Fallback,
}

impl TableBackend {
    pub fn from_entries(
        entries: impl IntoIterator<Item = TableEntry>,
        fallback: Fallback,
    ) -> Result<Self, BackendError> {
        let mut map = HashMap::new();
        for (idx, e) in entries.into_iter().enumerate() {
            Self::add(&mut map, idx + 1, e)?;
        }
        Ok(TableBackend { entries: map, fallback })
    }

    fn add(
        map: &mut HashMap<(String, String), ScoreResponse>,
        line: usize,
        e: TableEntry,
    ) -> Result<(), BackendError> {
        let response = ScoreResponse { tokens: e.tokens };
        response
            .check_reconstructs(&e.continuation)
            .map_err(|err| BackendError::Table {
                line,
                reason: err.to_string(),
            })?;
        match map.get(&(e.context.clone(), e.continuation.clone())) {
            Some(existing) if *existing != response => Err(BackendError::Table {
                line,
                reason: "conflicting duplicate entry".into(),
            }),
            Some(_) => Ok(()),
            None => {
                map.insert((e.context, e.continuation), response);
                Ok(())
            }
        }
    }

    pub fn read<R: BufRead>(source: R, fallback: Fallback) -> Result<Self, BackendError> {
        let mut map = HashMap::new();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TableEntry = serde_json::from_str(&line).map_err(|e| BackendError::Table {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            Self::add(&mut map, idx + 1, entry)?;
        }
        Ok(TableBackend { entries: map, fallback })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_table_backend(path: impl AsRef<Path>, fallback: Fallback) -> Result<TableBackend, BackendError> {
    let file = File::open(path.as_ref())?;
    TableBackend::read(BufReader::new(file), fallback)
}

pub fn write_table<W: Write>(entries: &[TableEntry], mut out: W) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

impl ScoringBackend for TableBackend {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, BackendError> {
        let key = (request.context.clone(), request.continuation.clone());
        if let Some(r) = self.entries.get(&key) {
            return Ok(r.clone());
        }
        match self.fallback {
            Fallback::Error => Err(BackendError::UnknownRequest {
                hash: request_hash(&request.context, &request.continuation),
            }),
            Fallback::Uniform(vocab) => {
                let lp = (1.0 / f64::from(vocab.max(1))).ln();
                Ok(ScoreResponse {
                    tokens: simple_tokenize(&request.continuation)
                        .into_iter()
                        .map(|t| TokenLogprob::new(t, lp))
                        .collect(),
                })
            }
        }
    }
}
