//! Declarative run configuration (TOML).
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use distractor_align::backend::{Fallback, ModelSpec, Variant, TABLE_ENDPOINT};
use distractor_align::scoring::{INDEX_TEMPLATE_ID, TEXT_TEMPLATE_ID};
use distractor_align::{Aggregation, Approach, FilterCriteria};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_CONCURRENCY: usize = 4;
pub const DEFAULT_RETRIES: u32 = 3;
pub const DEFAULT_TIMEOUT_SECS: u64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSettings {
    /// Endpoint for models that do not name their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding a bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Attempts per request, including the first.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_concurrency() -> usize {
    DEFAULT_CONCURRENCY
}

fn default_retries() -> u32 {
    DEFAULT_RETRIES
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

impl Default for BackendSettings {
    fn default() -> Self {
        BackendSettings {
            endpoint: None,
            auth_env: None,
            concurrency: DEFAULT_CONCURRENCY,
            retries: DEFAULT_RETRIES,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    #[serde(default = "default_index_template")]
    pub index: String,
    #[serde(default = "default_text_template")]
    pub text: String,
}

fn default_index_template() -> String {
    INDEX_TEMPLATE_ID.to_string()
}

fn default_text_template() -> String {
    TEXT_TEMPLATE_ID.to_string()
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            index: default_index_template(),
            text: default_text_template(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub family: String,
    /// Billions of parameters.
    pub parameter_count: f64,
    pub variant: Variant,
    /// Base URL, or `"table"` for the table backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Score table, required when the endpoint is `"table"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default)]
    pub fallback: Fallback,
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            name: self.name.clone(),
            family: self.family.clone(),
            parameter_count: self.parameter_count,
            variant: self.variant,
            endpoint: self.endpoint.clone(),
        }
    }

    pub fn is_table(&self) -> bool {
        self.endpoint.as_deref() == Some(TABLE_ENDPOINT)
    }
}

fn default_cache() -> PathBuf {
    PathBuf::from("cache.jsonl")
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_approaches() -> Vec<Approach> {
    Approach::ALL.to_vec()
}

fn default_aggregations() -> Vec<Aggregation> {
    Aggregation::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_cache")]
    pub cache: PathBuf,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_approaches")]
    pub approaches: Vec<Approach>,
    #[serde(default = "default_aggregations")]
    pub aggregations: Vec<Aggregation>,
    #[serde(default)]
    pub filter: FilterCriteria,
    #[serde(default)]
    pub backend: BackendSettings,
    #[serde(default)]
    pub templates: Templates,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        cfg.base_dir = std::path::absolute(dir)?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.resolve(&self.dataset)
    }

    pub fn cache_path(&self) -> PathBuf {
        self.resolve(&self.cache)
    }

    pub fn out_path(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn specs(&self) -> Vec<ModelSpec> {
        self.models.iter().map(ModelConfig::spec).collect()
    }

    /// Keeps only the named models; unknown names are an error.
    pub fn select_models(&mut self, names: &[String]) -> Result<(), CliError> {
        let known: HashSet<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        let unknown: Vec<String> = names
            .iter()
            .filter(|n| !known.contains(n.as_str()))
            .map(|n| format!("unknown model {n:?}"))
            .collect();
        if !unknown.is_empty() {
            return Err(CliError::Validation(unknown));
        }
        self.models.retain(|m| names.contains(&m.name));
        Ok(())
    }

    /// Endpoint a non-table model will be scored against.
    pub fn endpoint_for<'a>(&'a self, model: &'a ModelConfig) -> Option<&'a str> {
        model.endpoint.as_deref().or(self.backend.endpoint.as_deref())
    }

    /// Problems with the configuration itself, excluding the dataset contents.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.dataset_path().is_file() {
            out.push(format!("dataset {} does not exist", self.dataset_path().display()));
        }
        if let Err(e) = self.filter.validate() {
            out.push(format!("filter: {e}"));
        }
        if self.backend.concurrency == 0 {
            out.push("backend.concurrency must be at least 1".into());
        }
        if self.backend.retries == 0 {
            out.push("backend.retries must be at least 1".into());
        }
        if self.templates.index != INDEX_TEMPLATE_ID {
            out.push(format!(
                "templates.index {:?} is not supported (expected {INDEX_TEMPLATE_ID:?})",
                self.templates.index
            ));
        }
        if self.templates.text != TEXT_TEMPLATE_ID {
            out.push(format!(
                "templates.text {:?} is not supported (expected {TEXT_TEMPLATE_ID:?})",
                self.templates.text
            ));
        }
        if self.approaches.is_empty() {
            out.push("approaches is empty".into());
        }
        if self.aggregations.is_empty() {
            out.push("aggregations is empty".into());
        }
        if self.models.is_empty() {
            out.push("no models configured".into());
        }
        let mut names = HashSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                out.push(format!("model {:?} is listed twice", m.name));
            }
            if !(m.parameter_count.is_finite() && m.parameter_count > 0.0) {
                out.push(format!("model {:?}: parameter_count must be positive", m.name));
            }
            if m.is_table() {
                match &m.table {
                    None => out.push(format!("model {:?}: table endpoint needs a `table` file", m.name)),
                    Some(t) if !self.resolve(t).is_file() => out.push(format!(
                        "model {:?}: table {} does not exist",
                        m.name,
                        self.resolve(t).display()
                    )),
                    Some(_) => {}
                }
            } else if self.endpoint_for(m).is_none() {
                out.push(format!("model {:?}: missing endpoint", m.name));
            }
        }
        out
    }

    /// Path as written when it lies under the config directory, so the
    /// embedded config does not depend on where the run happened.
    fn portable(&self, p: &Path) -> PathBuf {
        let resolved = self.resolve(p);
        resolved
            .strip_prefix(&self.base_dir)
            .map(Path::to_path_buf)
            .unwrap_or(resolved)
    }

    /// The effective configuration, for embedding in outputs.
    pub fn effective(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.dataset = self.portable(&self.dataset);
        c.cache = self.portable(&self.cache);
        c.out_dir = self.portable(&self.out_dir);
        for m in &mut c.models {
            m.table = m.table.as_ref().map(|t| self.portable(t));
        }
        serde_json::to_value(&c).expect("config serializes")
    }
}
