//! Scoring providers.
//!
//! A provider answers "what log-probability does the model give each token of
//! this continuation, after this context". Two providers exist: a remote
//! client for the JSON scoring protocol (`POST /score`) and a table backend
//! read from a file. Both sit behind [`Scorer`], which consults the
//! persistent [`ScoreCache`] before calling out.

mod cache;
mod http;
#[cfg(feature = "test-server")]
pub mod server;
mod table;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, ScoreCache};
pub use http::{HttpBackend, RetryPolicy};
pub use table::{load_table_backend, simple_tokenize, write_table, Fallback, TableBackend, TableEntry};

use crate::scoring::ContinuationScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Base,
    Instruct,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Instruct => "instruct",
        })
    }
}

/// Identity of a scored model. The endpoint is either a base URL or the
/// literal `"table"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub family: String,
    /// Billions of parameters.
    pub parameter_count: f64,
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

pub const TABLE_ENDPOINT: &str = "table";

impl ModelSpec {
    pub fn is_table(&self) -> bool {
        self.endpoint.as_deref() == Some(TABLE_ENDPOINT)
    }
}

/// One token of a scored continuation; `logprob` is in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub text: String,
    #[serde(serialize_with = "ser_logprob", deserialize_with = "de_logprob")]
    pub logprob: f64,
}

impl TokenLogprob {
    pub fn new(text: impl Into<String>, logprob: f64) -> Self {
        TokenLogprob {
            text: text.into(),
            logprob,
        }
    }
}

// JSON has no NaN/inf; those are written as strings so a misbehaving backend
// is recorded faithfully instead of breaking the cache file.
fn ser_logprob<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("NaN")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn de_logprob<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Text(s) => match s.as_str() {
            "NaN" => Ok(f64::NAN),
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(serde::de::Error::custom(format!("invalid logprob `{other}`"))),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub model: String,
    pub context: String,
    pub continuation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub tokens: Vec<TokenLogprob>,
}

impl ScoreResponse {
    /// Checks that the token texts concatenate to exactly `continuation`.
    pub fn check_reconstructs(&self, continuation: &str) -> Result<(), BackendError> {
        let joined: String = self.tokens.iter().map(|t| t.text.as_str()).collect();
        if joined == continuation {
            Ok(())
        } else {
            Err(BackendError::Protocol(format!(
                "tokens reconstruct {joined:?}, expected {continuation:?}"
            )))
        }
    }

    pub fn total_logprob(&self) -> f64 {
        self.tokens.iter().map(|t| t.logprob).sum()
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("no table entry for request {hash}")]
    UnknownRequest { hash: String },
    #[error("cache miss for {key}; run `score` first")]
    CacheMiss { key: String },
    #[error("malformed table, line {line}: {reason}")]
    Table { line: usize, reason: String },
    #[error("cache file, line {line}: {reason}")]
    CacheFormat { line: usize, reason: String },
    #[error("network access requested for `{0}` in offline mode")]
    Offline(String),
    #[error("backend i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

/// A provider of per-token log-probabilities.
pub trait ScoringBackend: Send + Sync {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, BackendError>;
}

impl<B: ScoringBackend + ?Sized> ScoringBackend for Arc<B> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, BackendError> {
        (**self).score(request)
    }
}

fn hash_fields(fields: &[&str]) -> String {
    let mut h = Sha256::new();
    for f in fields {
        h.update((f.len() as u64).to_le_bytes());
        h.update(f.as_bytes());
    }
    hex::encode(h.finalize())
}

/// SHA-256 over the length-prefixed (model, template, context, continuation).
pub fn cache_key(model: &str, template_id: &str, context: &str, continuation: &str) -> String {
    hash_fields(&[model, template_id, context, continuation])
}

/// Identifies a request independent of model and template.
pub fn request_hash(context: &str, continuation: &str) -> String {
    hash_fields(&[context, continuation])
}

/// Cache-first front end over an optional backend.
///
/// Without a backend every miss is an error, which is how the offline
/// analysis stages read scores.
pub struct Scorer {
    backend: Option<Arc<dyn ScoringBackend>>,
    cache: Arc<ScoreCache>,
    backend_calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl Scorer {
    pub fn new(backend: Arc<dyn ScoringBackend>, cache: Arc<ScoreCache>) -> Self {
        Scorer {
            backend: Some(backend),
            cache,
            backend_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        }
    }

    pub fn cache_only(cache: Arc<ScoreCache>) -> Self {
        Scorer {
            backend: None,
            cache,
            backend_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        }
    }

    pub fn score(
        &self,
        model: &str,
        template_id: &str,
        context: &str,
        continuation: &str,
    ) -> Result<ScoreResponse, BackendError> {
        let key = cache_key(model, template_id, context, continuation);
        if let Some(hit) = self.cache.get(&key) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        let Some(backend) = &self.backend else {
            return Err(BackendError::CacheMiss { key });
        };
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let response = backend.score(&ScoreRequest {
            model: model.to_string(),
            context: context.to_string(),
            continuation: continuation.to_string(),
        })?;
        response.check_reconstructs(continuation)?;
        self.cache.insert(&key, &response)?;
        Ok(response)
    }

    /// Number of requests forwarded to the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    pub fn cache(&self) -> &ScoreCache {
        &self.cache
    }

    pub fn for_model<'a>(&'a self, model: &'a str) -> ModelScorer<'a> {
        ModelScorer { scorer: self, model }
    }
}

/// A [`Scorer`] bound to one model name.
#[derive(Clone, Copy)]
pub struct ModelScorer<'a> {
    scorer: &'a Scorer,
    model: &'a str,
}

impl ContinuationScorer for ModelScorer<'_> {
    fn token_logprobs(
        &self,
        template_id: &str,
        context: &str,
        continuation: &str,
    ) -> Result<Vec<TokenLogprob>, BackendError> {
        self.scorer
            .score(self.model, template_id, context, continuation)
            .map(|r| r.tokens)
    }
}
