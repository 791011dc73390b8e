//! Run configuration: one TOML file, overridable key by key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::AttributionConfig;
use crate::error::{Error, Result};
use crate::oracles::{DEFAULT_MAX_INFLIGHT, DEFAULT_TEMPERATURE};
use crate::sampling::SamplingStrategy;
use crate::synthesis::{GenerationParams, SynthesisParams, DEFAULT_SPARQL_LIMIT};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// passages.jsonl
    pub corpus: Option<PathBuf>,
    /// Raw documents `{id, text}` to be cut into passages and added to the corpus.
    pub documents: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub wikidata_fixture: Option<PathBuf>,
    pub gti: Option<PathBuf>,
    pub retrieval_eval: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub mode: OracleMode,
    pub score_url: Option<String>,
    pub generate_url: Option<String>,
    /// Cue rules for the mock generator.
    pub mock_rules: Option<PathBuf>,
    pub timeout_secs: u64,
    pub attempts: u32,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            mode: OracleMode::Mock,
            score_url: None,
            generate_url: None,
            mock_rules: None,
            timeout_secs: 120,
            attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub per_entity: usize,
    pub total: usize,
    pub sparql_limit: usize,
    pub seeds_per_task: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub filter: bool,
    pub inject_noise: bool,
    pub max_words: usize,
    pub sparql_url: Option<String>,
    pub search_url: Option<String>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            per_entity: 10,
            total: 10,
            sparql_limit: DEFAULT_SPARQL_LIMIT,
            seeds_per_task: 1000,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 512,
            filter: true,
            inject_noise: true,
            max_words: 100,
            sparql_url: None,
            search_url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionSection {
    pub n: usize,
    pub p: f64,
    pub lambda: f64,
    pub penalize_intercept: bool,
}

impl Default for AttributionSection {
    fn default() -> Self {
        let d = AttributionConfig::default();
        AttributionSection {
            n: d.n,
            p: d.p,
            lambda: d.lambda,
            penalize_intercept: d.penalize_intercept,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub strategy: SamplingStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_sigma: f64,
    pub buckets: usize,
    pub dim: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            init_sigma: d.init_sigma,
            buckets: d.buckets,
            dim: d.dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributorKind {
    #[default]
    Perturbation,
    LlmRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Cut-offs for the GTI benchmark.
    pub ks: Vec<usize>,
    /// Cut-off for retrieval evaluation.
    pub top_k: usize,
    pub attributor: AttributorKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![1, 3, 5],
            top_k: 3,
            attributor: AttributorKind::Perturbation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub seed: u64,
    pub max_inflight: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            seed: 0,
            max_inflight: DEFAULT_MAX_INFLIGHT,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub oracle: OracleConfig,
    pub synthesis: SynthesisConfig,
    pub attribution: AttributionSection,
    pub sampling: SamplingConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
    pub runtime: RuntimeConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Parses an override value as a TOML value, or takes it as a bare string.
fn override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `section.key=value` to a raw table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override {assignment:?} is not key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::InvalidConfig(format!("override key {key:?} is not section.key")))?;
    if section.is_empty() || field.is_empty() || field.contains('.') {
        return Err(Error::InvalidConfig(format!("override key {key:?} is not section.key")));
    }
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(Error::InvalidConfig(format!("{section} is not a section")));
    };
    sec.insert(field.to_string(), override_value(value.trim()));
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applies overrides, validates.
    pub fn from_toml_str(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_toml_str(&text, overrides, &base)
    }

    pub fn validate(&self) -> Result<()> {
        self.attribution_config().validate()?;
        self.train_config().validate()?;
        let s = &self.synthesis;
        if s.per_entity == 0 || s.total == 0 || s.sparql_limit == 0 || s.seeds_per_task == 0 {
            return Err(Error::InvalidConfig(
                "synthesis.per_entity, total, sparql_limit and seeds_per_task must be positive".into(),
            ));
        }
        if !(s.temperature >= 0.0 && s.temperature.is_finite()) || s.max_tokens == 0 || s.max_words == 0 {
            return Err(Error::InvalidConfig(
                "synthesis.temperature, max_tokens or max_words out of range".into(),
            ));
        }
        if self.eval.top_k == 0 || self.eval.ks.contains(&0) {
            return Err(Error::InvalidConfig("eval cut-offs must be positive".into()));
        }
        if self.runtime.max_inflight == 0 {
            return Err(Error::InvalidConfig("runtime.max_inflight must be positive".into()));
        }
        if self.paths.out_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("paths.out_dir is required".into()));
        }
        if self.oracle.mode == OracleMode::Http
            && (self.oracle.score_url.is_none() || self.oracle.generate_url.is_none())
        {
            return Err(Error::InvalidConfig(
                "oracle.mode = \"http\" needs score_url and generate_url".into(),
            ));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// A configured input path, resolved; `InvalidConfig` when unset.
    pub fn input(&self, key: &str) -> Result<PathBuf> {
        let p = &self.paths;
        let value = match key {
            "corpus" => &p.corpus,
            "documents" => &p.documents,
            "tasks" => &p.tasks,
            "seeds" => &p.seeds,
            "wikidata_fixture" => &p.wikidata_fixture,
            "gti" => &p.gti,
            "retrieval_eval" => &p.retrieval_eval,
            "mock_rules" => &self.oracle.mock_rules,
            other => return Err(Error::InvalidConfig(format!("unknown input {other}"))),
        };
        value
            .as_deref()
            .map(|v| self.resolve(v))
            .ok_or_else(|| Error::InvalidConfig(format!("input path {key} is not configured")))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.paths.out_dir)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    pub fn attribution_config(&self) -> AttributionConfig {
        AttributionConfig {
            n: self.attribution.n,
            p: self.attribution.p,
            lambda: self.attribution.lambda,
            penalize_intercept: self.attribution.penalize_intercept,
            seed: self.runtime.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            seed: self.runtime.seed,
            init_sigma: self.train.init_sigma,
            buckets: self.train.buckets,
            dim: self.train.dim,
        }
    }

    pub fn generation(&self) -> GenerationParams {
        GenerationParams {
            temperature: self.synthesis.temperature,
            max_tokens: self.synthesis.max_tokens,
        }
    }

    pub fn synthesis_params(&self) -> SynthesisParams {
        SynthesisParams {
            per_entity: self.synthesis.per_entity,
            total: self.synthesis.total,
            sparql_limit: self.synthesis.sparql_limit,
            seeds_per_task: self.synthesis.seeds_per_task,
            gen: self.generation(),
            filter: self.synthesis.filter,
            inject_noise: self.synthesis.inject_noise,
            seed: self.runtime.seed,
            max_inflight: self.runtime.max_inflight,
        }
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
