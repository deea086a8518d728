//! Run configuration: one TOML file plus environment overrides for endpoints
//! and credentials.

use super::PipelineError;
use crate::ensemble::Strategy;
use crate::gnn::{GinConfig, TrainConfig};
use crate::netgen::{GenParams, GenSettings};
use crate::persona::AttributeSpace;
use crate::proxy::{ProxySettings, RetrievalMode};
use crate::taxonomy::TaskKind;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const ENV_LLM_BASE_URL: &str = "MISINFO_LLM_BASE_URL";
pub const ENV_LLM_API_KEY: &str = "MISINFO_LLM_API_KEY";
pub const ENV_EMBED_URL: &str = "MISINFO_EMBED_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Parent of the per-config run directories.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub gnn: GnnConfig,
    #[serde(default)]
    pub proxy: ProxyConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// JSONL file, or `builtin:toy-binary` / `builtin:toy-framing`.
    pub path: String,
    pub task: TaskKind,
    #[serde(default = "default_max_articles")]
    pub max_articles: usize,
}

fn default_max_articles() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub temperature: f64,
    pub comment_max_tokens: u32,
    pub select_max_tokens: u32,
    /// Persona attributes pinned for every simulated user.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub restrict: Vec<PersonaPin>,
}

/// Pins persona `category` to `option` (an option sentence or a word in it).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaPin {
    pub category: String,
    pub option: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let p = GenParams::default();
        let s = GenSettings::default();
        Self {
            m: p.m,
            alpha: p.alpha,
            beta: p.beta,
            k: p.k,
            temperature: s.temperature,
            comment_max_tokens: s.comment_max_tokens,
            select_max_tokens: s.select_max_tokens,
            restrict: Vec::new(),
        }
    }
}

impl GenerationConfig {
    /// The canonical attribute space with the configured pins applied.
    pub fn attribute_space(&self) -> Result<AttributeSpace, PipelineError> {
        let mut space = AttributeSpace::canonical();
        for pin in &self.restrict {
            space = space.restrict(&pin.category, &pin.option).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(space)
    }

    pub fn params(&self) -> GenParams {
        GenParams { m: self.m, alpha: self.alpha, beta: self.beta, k: self.k }
    }

    pub fn settings(&self) -> GenSettings {
        GenSettings {
            temperature: self.temperature,
            comment_max_tokens: self.comment_max_tokens,
            select_max_tokens: self.select_max_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub master: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub provider: ProviderKind,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub concurrency: usize,
    /// Append every request and response to `audit.jsonl` in the run directory.
    pub audit: bool,
    /// Audit log to answer from when `provider = "replay"`.
    pub replay_log: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Mock,
            base_url: None,
            model: None,
            timeout_secs: 120,
            max_retries: 4,
            concurrency: 4,
            audit: false,
            replay_log: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderBackend {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub backend: EncoderBackend,
    pub dim: usize,
    pub url: Option<String>,
    pub timeout_secs: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { backend: EncoderBackend::Hash, dim: 1024, url: None, timeout_secs: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnConfig {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Multi-label decision threshold on raw scores.
    pub threshold: f64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let g = GinConfig::new(TaskKind::Binary, 1);
        Self {
            hidden: g.hidden,
            layers: g.layers,
            dropout: g.dropout,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            batch_size: t.batch_size,
            threshold: t.threshold,
        }
    }
}

impl GnnConfig {
    pub fn model(&self, task: TaskKind, embed_dim: usize) -> GinConfig {
        GinConfig { task, embed_dim, hidden: self.hidden, layers: self.layers, dropout: self.dropout }
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnowledgeKind {
    None,
    /// The summaries shipped with the toy datasets.
    #[default]
    Bundled,
    /// A directory of `Entity_Name.txt` files.
    Dir,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    pub retrieval_mode: RetrievalMode,
    pub knowledge: KnowledgeKind,
    pub knowledge_path: Option<PathBuf>,
    pub knowledge_url: Option<String>,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        let s = ProxySettings::default();
        Self {
            temperature: s.temperature,
            max_tokens: s.max_tokens,
            retrieval_mode: s.retrieval_mode,
            knowledge: KnowledgeKind::Bundled,
            knowledge_path: None,
            knowledge_url: None,
        }
    }
}

impl ProxyConfig {
    pub fn settings(&self) -> ProxySettings {
        ProxySettings { temperature: self.temperature, max_tokens: self.max_tokens, retrieval_mode: self.retrieval_mode }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub strategies: Vec<Strategy>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { strategies: Strategy::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Comment keep-fractions for the robustness curve.
    pub keep_fractions: Vec<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { keep_fractions: vec![1.0, 0.5, 0.1] }
    }
}

impl RunConfig {
    /// A config for the bundled toy data with everything else at defaults.
    pub fn builtin(path: &str, task: TaskKind) -> Self {
        Self {
            output_dir: default_output_dir(),
            dataset: DatasetConfig { path: path.into(), task, max_articles: default_max_articles() },
            generation: GenerationConfig::default(),
            seeds: SeedConfig::default(),
            llm: LlmConfig::default(),
            encoder: EncoderConfig::default(),
            gnn: GnnConfig::default(),
            proxy: ProxyConfig::default(),
            ensemble: EnsembleConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads `path`, resolves relative paths against its directory, applies
    /// environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if !self.dataset.path.starts_with("builtin:") && Path::new(&self.dataset.path).is_relative() {
            self.dataset.path = base.join(&self.dataset.path).to_string_lossy().into_owned();
        }
        if let Some(p) = self.llm.replay_log.as_mut() {
            fix(p);
        }
        if let Some(p) = self.proxy.knowledge_path.as_mut() {
            fix(p);
        }
    }

    /// Endpoint overrides. The API key is never stored in the config.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(url) = var(ENV_LLM_BASE_URL) {
            self.llm.base_url = Some(url);
        }
        if let Some(url) = var(ENV_EMBED_URL) {
            self.encoder.url = Some(url);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.generation.params().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.generation.attribute_space()?;
        for (name, t) in [("generation.temperature", self.generation.temperature), ("proxy.temperature", self.proxy.temperature)] {
            if !(0.0..=2.0).contains(&t) {
                return bad(format!("{name} = {t} outside [0, 2]"));
            }
        }
        if self.dataset.max_articles == 0 {
            return bad("dataset.max_articles must be at least 1".into());
        }
        if !self.dataset.path.starts_with("builtin:") && !Path::new(&self.dataset.path).is_file() {
            return bad(format!("dataset file {} does not exist", self.dataset.path));
        }
        if self.llm.concurrency == 0 {
            return bad("llm.concurrency must be at least 1".into());
        }
        match self.llm.provider {
            ProviderKind::Http if self.llm.base_url.is_none() || self.llm.model.is_none() => {
                return bad(format!("the http provider needs llm.base_url (or {ENV_LLM_BASE_URL}) and llm.model"));
            }
            ProviderKind::Replay => match &self.llm.replay_log {
                Some(p) if p.is_file() => {}
                Some(p) => return bad(format!("replay log {} does not exist", p.display())),
                None => return bad("the replay provider needs llm.replay_log".into()),
            },
            _ => {}
        }
        if self.encoder.dim == 0 {
            return bad("encoder.dim must be at least 1".into());
        }
        if self.encoder.backend == EncoderBackend::Remote && self.encoder.url.is_none() {
            return bad(format!("the remote encoder needs encoder.url (or {ENV_EMBED_URL})"));
        }
        match self.proxy.knowledge {
            KnowledgeKind::Dir => match &self.proxy.knowledge_path {
                Some(p) if p.is_dir() => {}
                _ => return bad("proxy.knowledge = \"dir\" needs an existing proxy.knowledge_path".into()),
            },
            KnowledgeKind::Http if self.proxy.knowledge_url.is_none() => {
                return bad("proxy.knowledge = \"http\" needs proxy.knowledge_url".into());
            }
            _ => {}
        }
        self.gnn.model(self.dataset.task, self.encoder.dim).validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.gnn.train(0).validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.ensemble.strategies.is_empty() {
            return bad("ensemble.strategies is empty".into());
        }
        if let Some(f) = self.evaluate.keep_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return bad(format!("keep fraction {f} outside [0, 1]"));
        }
        Ok(())
    }

    /// Settings that determine the outputs, as canonical JSON. The output
    /// directory and the audit switch are left out.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("object");
        obj.remove("output_dir");
        if let Some(llm) = obj.get_mut("llm").and_then(|l| l.as_object_mut()) {
            llm.remove("audit");
        }
        serde_json::to_string(&v).expect("json")
    }
}
