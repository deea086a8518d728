//! Stage orchestration and the on-disk run layout.
//!
//! A run lives in `<output_dir>/run-<config hash prefix>/`. Each stage reads
//! artifacts written by earlier stages, writes its own next to a
//! `<artifact>.meta.json` sidecar, and records status plus sha256 hashes of
//! inputs and outputs in `MANIFEST.json`. A stage whose recorded inputs and
//! outputs still match is skipped.

mod config;
mod dataset;
mod manifest;

pub use config::{
    DatasetConfig, EncoderBackend, EncoderConfig, EnsembleConfig, EvaluateConfig, GenerationConfig, GnnConfig,
    KnowledgeKind, LlmConfig, PersonaPin, ProviderKind, ProxyConfig, RunConfig, SeedConfig, ENV_EMBED_URL,
    ENV_LLM_API_KEY, ENV_LLM_BASE_URL,
};
pub use dataset::{dataset_text, parse_jsonl, split_dataset, Split, MIN_ARTICLES, TOY_BINARY, TOY_FRAMING, TOY_KNOWLEDGE};
pub use manifest::{file_sha256, meta_path, sha256_hex, version, ArtifactMeta, Manifest, StageRecord, StageStatus, MANIFEST_FILE};

use crate::encode::{encode_network, CachedEmbedder, EmbedError, Embedder, GraphInput, HashEmbedder, RemoteEmbedder};
use crate::ensemble::{expert_for, run_ensemble, write_decisions, EnsembleError, ExpertReport, FinalDecision, Strategy};
use crate::eval::{dataset_stats, drop_comments, ece, f1_scores, CalibrationBins, EvalError, GraphStats, MetricsReport};
use crate::gnn::{self, load_checkpoint, predict, save_checkpoint, write_trace, GinModel, GnnError, PredictionOutput};
use crate::llm::{AuditLog, Gateway, HttpProvider, HttpProviderConfig, LlmError, MockScript, ReplayProvider, RetryPolicy};
use crate::netgen::{build_network, InteractionNetwork, NetgenError, NewsArticle};
use crate::proxy::{
    annotate_network, AnnotatedNetwork, FixtureKnowledge, HttpKnowledge, KnowledgeSource, NoKnowledge, ProxyError,
    ProxyTaskKind, TableKnowledge,
};
use crate::seed::derive_str;
use crate::taxonomy::TaskKind;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage `{stage}` depends on stage `{missing}`, which has not completed")]
    Dependency { stage: String, missing: String },
    #[error(
        "stage `{stage}` would read `{artifact}` produced under config {found}, but the current config is {expected}; \
         rerun the producing stage or pass --force"
    )]
    ConfigMismatch { stage: String, artifact: String, found: String, expected: String },
    #[error("stage `{stage}`: `{artifact}` changed after stage `{producer}` wrote it; rerun `{producer}`")]
    Stale { stage: String, artifact: String, producer: String },
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
    /// Error raised inside a stage body; reported as [`PipelineError::Stage`].
    #[error("{0}")]
    Module(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_owned(), source }
    }
}

macro_rules! module_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Module(e.to_string())
            }
        }
    )*};
}
module_errors!(EmbedError, EnsembleError, EvalError, GnnError, LlmError, NetgenError, ProxyError, serde_json::Error);

pub const GENERATE: &str = "generate";
pub const EVALUATE: &str = "evaluate";
pub const STATS: &str = "stats";

pub const SPLIT_FILE: &str = "split.json";
pub const NETWORKS_FILE: &str = "networks.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const ROBUSTNESS_FILE: &str = "robustness.json";
pub const GRAPH_STATS_FILE: &str = "graph_stats.json";
const AUDIT_FILE: &str = "audit.jsonl";
const EMBED_CACHE_FILE: &str = "embed-cache.json";

pub fn annotate_stage(kind: ProxyTaskKind) -> String {
    format!("annotate:{kind}")
}
pub fn train_stage(kind: ProxyTaskKind) -> String {
    format!("train:{kind}")
}
pub fn predict_stage(kind: ProxyTaskKind) -> String {
    format!("predict:{kind}")
}
pub fn ensemble_stage(strategy: Strategy) -> String {
    format!("ensemble:{strategy}")
}

pub fn annotated_file(kind: ProxyTaskKind) -> String {
    format!("annotated-{kind}.jsonl")
}
pub fn checkpoint_file(kind: ProxyTaskKind) -> String {
    format!("expert-{kind}.ckpt")
}
pub fn trace_file(kind: ProxyTaskKind) -> String {
    format!("expert-{kind}.trace.csv")
}
pub fn predictions_file(kind: ProxyTaskKind) -> String {
    format!("predictions-{kind}.jsonl")
}
pub fn decisions_file(strategy: Strategy) -> String {
    format!("decisions-{strategy}.jsonl")
}
pub fn calibration_file(strategy: Strategy) -> String {
    format!("calibration-{strategy}.csv")
}

/// Stage and artifact holding the networks an expert learns from.
fn expert_source(kind: ProxyTaskKind) -> (String, String) {
    match kind {
        ProxyTaskKind::Vanilla => (GENERATE.into(), NETWORKS_FILE.into()),
        k => (annotate_stage(k), annotated_file(k)),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Accept artifacts written under a different config hash.
    pub force: bool,
    /// Use this directory instead of the config-keyed one.
    pub run_dir: Option<PathBuf>,
}

enum Encoder {
    Hash(HashEmbedder),
    Remote(CachedEmbedder<RemoteEmbedder>),
}

impl Encoder {
    fn get(&self) -> &dyn Embedder {
        match self {
            Encoder::Hash(e) => e,
            Encoder::Remote(e) => e,
        }
    }
}

/// Per-expert test metrics, ensemble metrics and calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: TaskKind,
    pub test_articles: usize,
    pub experts: BTreeMap<String, MetricsReport>,
    pub strategies: BTreeMap<String, StrategyReport>,
    /// Mean structure indicators over all generated networks.
    pub graph: GraphStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub metrics: MetricsReport,
    /// `None` when no decision carried a token probability.
    pub calibration: Option<CalibrationBins>,
    /// Share of decisions that needed no fallback.
    pub non_degraded: f64,
    /// How often each expert id was consulted.
    pub expert_frequency: BTreeMap<u8, usize>,
}

/// Expert metrics on the test networks after comment removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub experts: BTreeMap<String, Vec<DropPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropPoint {
    pub keep: f64,
    pub comments: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub article_id: String,
    pub stats: GraphStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStatsReport {
    pub networks: Vec<NetworkStats>,
    pub mean: GraphStats,
}

/// Collects the artifacts a stage writes.
struct StageCtx<'a> {
    dir: &'a Path,
    meta: ArtifactMeta,
    artifacts: BTreeMap<String, String>,
}

impl StageCtx<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        let meta = meta_path(&path);
        let mut sidecar = serde_json::to_vec_pretty(&self.meta)?;
        sidecar.push(b'\n');
        std::fs::write(&meta, sidecar).map_err(|e| PipelineError::io(&meta, e))?;
        self.artifacts.insert(name.to_owned(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn write_jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<(), PipelineError> {
        let mut bytes = Vec::new();
        for item in items {
            serde_json::to_writer(&mut bytes, item)?;
            bytes.push(b'\n');
        }
        self.write(name, &bytes)
    }
}

fn parse_jsonl_items<T: DeserializeOwned>(name: &str, bytes: &[u8]) -> Result<Vec<T>, PipelineError> {
    let text = std::str::from_utf8(bytes).map_err(|e| PipelineError::Module(format!("{name}: {e}")))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| PipelineError::Module(format!("{name} line {}: {e}", i + 1))))
        .collect()
}

/// Splits per-article results into successes and a failure summary.
fn partition<T>(results: Vec<(String, Result<T, PipelineError>)>) -> (Vec<T>, Vec<String>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failed.push(format!("{id}: {e}")),
        }
    }
    (ok, failed)
}

fn failure_message(failed: &[String], total: usize) -> String {
    format!("{} of {total} articles failed; first: {}", failed.len(), failed[0])
}

/// An opened run directory with its providers.
pub struct Run {
    config: RunConfig,
    options: RunOptions,
    dir: PathBuf,
    config_hash: String,
    dataset_hash: String,
    articles: Vec<NewsArticle>,
    gateway: Gateway,
    encoder: Encoder,
    knowledge: Box<dyn KnowledgeSource>,
    manifest: Manifest,
}

impl Run {
    /// Validates `config`, loads the dataset and prepares the run directory.
    pub fn open(config: RunConfig, options: RunOptions) -> Result<Self, PipelineError> {
        config.validate()?;
        let text = dataset_text(&config.dataset.path)?;
        let articles = parse_jsonl(&text, config.dataset.task)?;
        let dataset_hash = sha256_hex(text.as_bytes());
        let config_hash = sha256_hex(format!("{}\n{dataset_hash}", config.canonical_json()).as_bytes());
        let dir = options.run_dir.clone().unwrap_or_else(|| config.output_dir.join(format!("run-{}", &config_hash[..16])));
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        let resolved = dir.join("config.json");
        let mut bytes = serde_json::to_vec_pretty(&config)?;
        bytes.push(b'\n');
        std::fs::write(&resolved, bytes).map_err(|e| PipelineError::io(&resolved, e))?;

        let gateway = build_gateway(&config, &dir)?;
        let encoder = match config.encoder.backend {
            EncoderBackend::Hash => Encoder::Hash(HashEmbedder::new(config.encoder.dim)?),
            EncoderBackend::Remote => {
                let url = config.encoder.url.as_deref().expect("validated");
                let remote = RemoteEmbedder::new(url, config.encoder.dim, Duration::from_secs(config.encoder.timeout_secs))?;
                Encoder::Remote(CachedEmbedder::load(remote, &dir.join(EMBED_CACHE_FILE))?)
            }
        };
        let knowledge: Box<dyn KnowledgeSource> = match config.proxy.knowledge {
            KnowledgeKind::None => Box::new(NoKnowledge),
            KnowledgeKind::Bundled => Box::new(TableKnowledge::parse_tsv(TOY_KNOWLEDGE).map_err(PipelineError::Config)?),
            KnowledgeKind::Dir => Box::new(FixtureKnowledge::new(config.proxy.knowledge_path.clone().expect("validated"))),
            KnowledgeKind::Http => Box::new(
                HttpKnowledge::new(
                    config.proxy.knowledge_url.clone().expect("validated"),
                    Duration::from_secs(config.llm.timeout_secs),
                )
                .map_err(|e| PipelineError::Config(e.to_string()))?,
            ),
        };
        let manifest = Manifest::load(&dir)?;
        log::info!("run directory {} (config {})", dir.display(), &config_hash[..16]);
        Ok(Self { config, options, dir, config_hash, dataset_hash, articles, gateway, encoder, knowledge, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn articles(&self) -> &[NewsArticle] {
        &self.articles
    }

    fn master(&self) -> u64 {
        self.config.seeds.master
    }

    fn task(&self) -> TaskKind {
        self.config.dataset.task
    }

    /// Checks that `producer` completed and that the listed artifacts are
    /// unchanged; returns their hashes as stage inputs.
    fn require(&self, stage: &str, producer: &str, names: &[&str]) -> Result<BTreeMap<String, String>, PipelineError> {
        let missing = || PipelineError::Dependency { stage: stage.into(), missing: producer.into() };
        let record = self.manifest.stages.get(producer).ok_or_else(missing)?;
        if record.status != StageStatus::Complete {
            return Err(missing());
        }
        let mut out = BTreeMap::new();
        for &name in names {
            let recorded = record.artifacts.get(name).ok_or_else(missing)?;
            let path = self.dir.join(name);
            if !path.exists() {
                return Err(missing());
            }
            let meta: ArtifactMeta = {
                let mp = meta_path(&path);
                let bytes = std::fs::read(&mp).map_err(|e| PipelineError::io(&mp, e))?;
                serde_json::from_slice(&bytes)?
            };
            if (record.config_hash != self.config_hash || meta.config_hash != self.config_hash) && !self.options.force {
                return Err(PipelineError::ConfigMismatch {
                    stage: stage.into(),
                    artifact: name.into(),
                    found: meta.config_hash,
                    expected: self.config_hash.clone(),
                });
            }
            let actual = file_sha256(&path)?;
            if &actual != recorded {
                return Err(PipelineError::Stale { stage: stage.into(), artifact: name.into(), producer: producer.into() });
            }
            out.insert(name.to_owned(), actual);
        }
        Ok(out)
    }

    fn read(&self, name: &str) -> Result<Vec<u8>, PipelineError> {
        let path = self.dir.join(name);
        std::fs::read(&path).map_err(|e| PipelineError::io(&path, e))
    }

    fn read_jsonl<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>, PipelineError> {
        parse_jsonl_items(name, &self.read(name)?)
    }

    fn read_split(&self) -> Result<Split, PipelineError> {
        Ok(serde_json::from_slice(&self.read(SPLIT_FILE)?)?)
    }

    fn up_to_date(&self, stage: &str, inputs: &BTreeMap<String, String>) -> bool {
        let Some(r) = self.manifest.stages.get(stage) else { return false };
        r.status == StageStatus::Complete
            && r.config_hash == self.config_hash
            && &r.inputs == inputs
            && r.artifacts.iter().all(|(name, hash)| file_sha256(&self.dir.join(name)).is_ok_and(|h| &h == hash))
    }

    /// Runs `body` as stage `name` unless it is up to date, recording the
    /// outcome in the manifest either way it ends.
    fn execute(
        &mut self,
        name: &str,
        seed: u64,
        inputs: BTreeMap<String, String>,
        body: impl FnOnce(&Run, &mut StageCtx<'_>) -> Result<(), PipelineError>,
    ) -> Result<(), PipelineError> {
        if self.up_to_date(name, &inputs) {
            log::info!("stage {name}: up to date");
            return Ok(());
        }
        log::info!("stage {name}: running");
        let mut record = StageRecord {
            status: StageStatus::Incomplete,
            config_hash: self.config_hash.clone(),
            inputs,
            artifacts: BTreeMap::new(),
            error: None,
        };
        self.manifest.stages.insert(name.to_owned(), record.clone());
        self.manifest.save(&self.dir)?;

        let dir = self.dir.clone();
        let meta = ArtifactMeta { config_hash: self.config_hash.clone(), seed, version: version(), stage: name.to_owned() };
        let mut ctx = StageCtx { dir: &dir, meta, artifacts: BTreeMap::new() };
        let result = body(self, &mut ctx);
        if let Encoder::Remote(cache) = &self.encoder {
            let path = self.dir.join(EMBED_CACHE_FILE);
            if let Err(e) = cache.save(&path) {
                log::warn!("could not save the embedding cache {}: {e}", path.display());
            }
        }
        record.artifacts = ctx.artifacts;
        match &result {
            Ok(()) => record.status = StageStatus::Complete,
            Err(e) => {
                record.status = StageStatus::Failed;
                record.error = Some(e.to_string());
            }
        }
        self.manifest.stages.insert(name.to_owned(), record);
        self.manifest.save(&self.dir)?;
        result.map_err(|e| match e {
            PipelineError::Module(message) => PipelineError::Stage { stage: name.to_owned(), message },
            other => other,
        })
    }

    /// Splits the dataset and grows one network per sampled article.
    pub fn generate(&mut self) -> Result<(), PipelineError> {
        let inputs = BTreeMap::from([("dataset".to_owned(), self.dataset_hash.clone())]);
        let seed = derive_str(self.master(), "network");
        self.execute(GENERATE, seed, inputs, |run, ctx| {
            let split = split_dataset(&run.articles, run.config.dataset.max_articles, derive_str(run.master(), "split"))?;
            ctx.write_json(SPLIT_FILE, &split)?;
            let chosen: std::collections::HashSet<&String> = split.all().collect();
            let selected: Vec<&NewsArticle> = run.articles.iter().filter(|a| chosen.contains(&a.id)).collect();
            let space = run.config.generation.attribute_space()?;
            let params = run.config.generation.params();
            let settings = run.config.generation.settings();
            let results: Vec<(String, Result<InteractionNetwork, PipelineError>)> = selected
                .par_iter()
                .map(|a| {
                    let s = derive_str(seed, &a.id);
                    (a.id.clone(), build_network(a, &params, &space, &run.gateway, s, &settings).map_err(Into::into))
                })
                .collect();
            let total = results.len();
            let (networks, failed) = partition(results);
            ctx.write_jsonl(NETWORKS_FILE, &networks)?;
            if failed.is_empty() {
                Ok(())
            } else {
                Err(PipelineError::Module(failure_message(&failed, total)))
            }
        })
    }

    /// Attaches `kind` explanations to every generated network.
    pub fn annotate(&mut self, kind: ProxyTaskKind) -> Result<(), PipelineError> {
        let name = annotate_stage(kind);
        if kind == ProxyTaskKind::Vanilla {
            return Err(PipelineError::Config("the vanilla expert needs no annotation".into()));
        }
        let inputs = self.require(&name, GENERATE, &[NETWORKS_FILE])?;
        self.execute(&name, self.master(), inputs, |run, ctx| {
            let networks: Vec<InteractionNetwork> = run.read_jsonl(NETWORKS_FILE)?;
            let settings = run.config.proxy.settings();
            let results: Vec<(String, Result<AnnotatedNetwork, PipelineError>)> = networks
                .par_iter()
                .map(|n| {
                    let r = annotate_network(n, kind, &run.gateway, run.knowledge.as_ref(), &settings);
                    (n.article.id.clone(), r.map_err(Into::into))
                })
                .collect();
            let total = results.len();
            let (annotated, failed) = partition(results);
            ctx.write_jsonl(&annotated_file(kind), &annotated)?;
            if failed.is_empty() {
                Ok(())
            } else {
                Err(PipelineError::Module(failure_message(&failed, total)))
            }
        })
    }

    /// Networks the `kind` expert sees, keyed by article id.
    fn expert_networks(&self, kind: ProxyTaskKind) -> Result<HashMap<String, AnnotatedNetwork>, PipelineError> {
        let nets: Vec<AnnotatedNetwork> = match kind {
            ProxyTaskKind::Vanilla => {
                self.read_jsonl::<InteractionNetwork>(NETWORKS_FILE)?.into_iter().map(AnnotatedNetwork::vanilla).collect()
            }
            k => self.read_jsonl(&annotated_file(k))?,
        };
        Ok(nets.into_iter().map(|n| (n.network.article.id.clone(), n)).collect())
    }

    fn select<'a>(
        nets: &'a HashMap<String, AnnotatedNetwork>,
        ids: &[String],
    ) -> Result<Vec<&'a AnnotatedNetwork>, PipelineError> {
        ids.iter()
            .map(|id| nets.get(id).ok_or_else(|| PipelineError::Module(format!("no network for article `{id}`"))))
            .collect()
    }

    fn encode(&self, nets: &[&AnnotatedNetwork]) -> Result<Vec<GraphInput>, PipelineError> {
        let backend = self.encoder.get();
        Ok(nets.par_iter().map(|n| encode_network(n, backend)).collect::<Result<Vec<_>, _>>()?)
    }

    fn expert_inputs(&self, stage: &str, kind: ProxyTaskKind) -> Result<BTreeMap<String, String>, PipelineError> {
        let (producer, file) = expert_source(kind);
        let mut inputs = self.require(stage, GENERATE, &[SPLIT_FILE])?;
        inputs.extend(self.require(stage, &producer, &[&file])?);
        Ok(inputs)
    }

    fn load_model(&self, kind: ProxyTaskKind) -> Result<GinModel, PipelineError> {
        let (model, _) = load_checkpoint(std::io::Cursor::new(self.read(&checkpoint_file(kind))?))?;
        if model.config.embed_dim != self.encoder.get().dim() || model.config.task != self.task() {
            return Err(PipelineError::Module(format!(
                "checkpoint for {kind} expects a {}-dimensional {} encoder",
                model.config.embed_dim, model.config.task
            )));
        }
        Ok(model)
    }

    /// Trains the `kind` expert on the training split, selecting on validation.
    pub fn train(&mut self, kind: ProxyTaskKind) -> Result<(), PipelineError> {
        let name = train_stage(kind);
        let inputs = self.expert_inputs(&name, kind)?;
        let seed = derive_str(self.master(), &name);
        self.execute(&name, seed, inputs, |run, ctx| {
            let split = run.read_split()?;
            let nets = run.expert_networks(kind)?;
            let train = run.encode(&Self::select(&nets, &split.train)?)?;
            let val = run.encode(&Self::select(&nets, &split.val)?)?;
            let model = GinModel::new(run.config.gnn.model(run.task(), run.encoder.get().dim()), seed)?;
            let outcome = gnn::train(model, &train, &val, &run.config.gnn.train(seed))?;
            log::info!("expert {kind}: best validation epoch {}", outcome.best_epoch);
            let extra = serde_json::json!({
                "expert": kind,
                "best_epoch": outcome.best_epoch,
                "embedder": run.encoder.get().id(),
                "config_hash": run.config_hash,
            });
            let mut ckpt = Vec::new();
            save_checkpoint(&outcome.model, extra, &mut ckpt)?;
            ctx.write(&checkpoint_file(kind), &ckpt)?;
            let mut trace = Vec::new();
            write_trace(&outcome.trace, &mut trace).map_err(|e| PipelineError::Module(e.to_string()))?;
            ctx.write(&trace_file(kind), &trace)
        })
    }

    /// Predictions of the `kind` expert on the test split.
    pub fn predict(&mut self, kind: ProxyTaskKind) -> Result<(), PipelineError> {
        let name = predict_stage(kind);
        let mut inputs = self.expert_inputs(&name, kind)?;
        inputs.extend(self.require(&name, &train_stage(kind), &[&checkpoint_file(kind)])?);
        self.execute(&name, self.master(), inputs, |run, ctx| {
            let split = run.read_split()?;
            let nets = run.expert_networks(kind)?;
            let model = run.load_model(kind)?;
            let test = run.encode(&Self::select(&nets, &split.test)?)?;
            let refs: Vec<&GraphInput> = test.iter().collect();
            let preds = predict(&model, &refs, run.config.gnn.threshold)?;
            ctx.write_jsonl(&predictions_file(kind), &preds)
        })
    }

    fn predictions(&self, kind: ProxyTaskKind) -> Result<HashMap<String, PredictionOutput>, PipelineError> {
        let preds: Vec<PredictionOutput> = self.read_jsonl(&predictions_file(kind))?;
        Ok(preds.into_iter().map(|p| (p.article_id.clone(), p)).collect())
    }

    fn all_prediction_inputs(&self, stage: &str) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut inputs = BTreeMap::new();
        for kind in ProxyTaskKind::ALL {
            inputs.extend(self.require(stage, &predict_stage(kind), &[&predictions_file(kind)])?);
        }
        inputs.extend(self.require(stage, GENERATE, &[SPLIT_FILE])?);
        Ok(inputs)
    }

    /// Merges the seven experts on every test article.
    pub fn ensemble(&mut self, strategy: Strategy) -> Result<(), PipelineError> {
        let name = ensemble_stage(strategy);
        let inputs = self.all_prediction_inputs(&name)?;
        self.execute(&name, self.master(), inputs, |run, ctx| {
            let split = run.read_split()?;
            let preds: Vec<(ProxyTaskKind, HashMap<String, PredictionOutput>)> = ProxyTaskKind::ALL
                .into_iter()
                .map(|k| run.predictions(k).map(|p| (k, p)))
                .collect::<Result<_, _>>()?;
            let by_id: HashMap<&str, &NewsArticle> = run.articles.iter().map(|a| (a.id.as_str(), a)).collect();
            let decisions: Vec<FinalDecision> = split
                .test
                .par_iter()
                .map(|id| {
                    let article = by_id.get(id.as_str()).ok_or_else(|| PipelineError::Module(format!("unknown article `{id}`")))?;
                    let reports = preds
                        .iter()
                        .map(|(k, p)| {
                            let pred = p.get(id).ok_or_else(|| PipelineError::Module(format!("no {k} prediction for `{id}`")))?;
                            Ok(ExpertReport::from_prediction(expert_for(*k).id, pred))
                        })
                        .collect::<Result<Vec<_>, PipelineError>>()?;
                    Ok(run_ensemble(strategy, article, &reports, &run.gateway)?)
                })
                .collect::<Result<_, PipelineError>>()?;
            let mut bytes = Vec::new();
            write_decisions(&decisions, &mut bytes).map_err(|e| PipelineError::Module(e.to_string()))?;
            ctx.write(&decisions_file(strategy), &bytes)
        })
    }

    /// Test metrics for every expert and strategy, calibration tables, the
    /// comment-removal curve and mean graph indicators.
    pub fn evaluate(&mut self) -> Result<(), PipelineError> {
        let mut inputs = self.all_prediction_inputs(EVALUATE)?;
        inputs.extend(self.require(EVALUATE, GENERATE, &[NETWORKS_FILE])?);
        for kind in ProxyTaskKind::ALL {
            inputs.extend(self.expert_inputs(EVALUATE, kind)?);
            inputs.extend(self.require(EVALUATE, &train_stage(kind), &[&checkpoint_file(kind)])?);
        }
        for &s in &self.config.ensemble.strategies {
            inputs.extend(self.require(EVALUATE, &ensemble_stage(s), &[&decisions_file(s)])?);
        }
        self.execute(EVALUATE, self.master(), inputs, |run, ctx| {
            let split = run.read_split()?;
            let gold_of: HashMap<&str, &Vec<usize>> = run.articles.iter().map(|a| (a.id.as_str(), &a.labels)).collect();
            let gold: Vec<Vec<usize>> = split.test.iter().map(|id| gold_of[id.as_str()].clone()).collect();
            let n_labels = run.task().taxonomy().len();

            let mut experts = BTreeMap::new();
            for kind in ProxyTaskKind::ALL {
                let p = run.predictions(kind)?;
                let pred = split
                    .test
                    .iter()
                    .map(|id| p.get(id).map(|x| x.labels.clone()).ok_or_else(|| PipelineError::Module(format!("no {kind} prediction for `{id}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                experts.insert(kind.to_string(), f1_scores(&gold, &pred, n_labels)?);
            }

            let mut strategies = BTreeMap::new();
            for &s in &run.config.ensemble.strategies {
                let decisions: Vec<FinalDecision> = run.read_jsonl(&decisions_file(s))?;
                let by_id: HashMap<&str, &FinalDecision> = decisions.iter().map(|d| (d.article_id.as_str(), d)).collect();
                let mut pred = Vec::with_capacity(gold.len());
                let mut samples = Vec::with_capacity(gold.len());
                let mut frequency = BTreeMap::new();
                let mut clean = 0usize;
                for (id, g) in split.test.iter().zip(&gold) {
                    let d = by_id.get(id.as_str()).ok_or_else(|| PipelineError::Module(format!("no {s} decision for `{id}`")))?;
                    pred.push(d.labels.clone());
                    samples.push((d.confidence, &d.labels == g));
                    clean += usize::from(!d.degraded);
                    for &e in &d.consulted {
                        *frequency.entry(e).or_insert(0) += 1;
                    }
                }
                let calibration = match ece(&samples) {
                    Ok(c) => Some(c),
                    Err(EvalError::Precondition(msg)) if samples.iter().all(|(c, _)| c.is_none()) => {
                        log::info!("strategy {s}: {msg}; calibration skipped");
                        None
                    }
                    Err(e) => return Err(e.into()),
                };
                let mut csv = Vec::new();
                let table = calibration.clone().unwrap_or(CalibrationBins { bins: Vec::new(), ece: f64::NAN, coverage: 0.0, covered: 0, total: samples.len() });
                table.write_csv(&mut csv).map_err(|e| PipelineError::Module(e.to_string()))?;
                ctx.write(&calibration_file(s), &csv)?;
                strategies.insert(
                    s.to_string(),
                    StrategyReport {
                        metrics: f1_scores(&gold, &pred, n_labels)?,
                        calibration,
                        non_degraded: clean as f64 / gold.len() as f64,
                        expert_frequency: frequency,
                    },
                );
            }

            let networks: Vec<InteractionNetwork> = run.read_jsonl(NETWORKS_FILE)?;
            let graph = dataset_stats(&networks.iter().map(crate::eval::graph_stats).collect::<Result<Vec<_>, _>>()?)?;
            let report = EvaluationReport { task: run.task(), test_articles: gold.len(), experts, strategies, graph };
            ctx.write_json(METRICS_FILE, &report)?;
            ctx.write_json(ROBUSTNESS_FILE, &run.robustness(&split, &gold)?)
        })
    }

    /// Expert metrics on the test networks with comments removed, newest first.
    fn robustness(&self, split: &Split, gold: &[Vec<usize>]) -> Result<RobustnessReport, PipelineError> {
        let n_labels = self.task().taxonomy().len();
        let mut experts = BTreeMap::new();
        for kind in ProxyTaskKind::ALL {
            let nets = self.expert_networks(kind)?;
            let test = Self::select(&nets, &split.test)?;
            let model = self.load_model(kind)?;
            let mut points = Vec::new();
            for &keep in &self.config.evaluate.keep_fractions {
                let reduced = test
                    .iter()
                    .map(|a| Ok(a.truncated(drop_comments(&a.network, keep)?.comment_count())))
                    .collect::<Result<Vec<AnnotatedNetwork>, EvalError>>()?;
                let refs: Vec<&AnnotatedNetwork> = reduced.iter().collect();
                let graphs = self.encode(&refs)?;
                let graph_refs: Vec<&GraphInput> = graphs.iter().collect();
                let pred: Vec<Vec<usize>> =
                    predict(&model, &graph_refs, self.config.gnn.threshold)?.into_iter().map(|p| p.labels).collect();
                points.push(DropPoint {
                    keep,
                    comments: reduced.iter().map(|a| a.network.comment_count()).sum(),
                    metrics: f1_scores(gold, &pred, n_labels)?,
                });
            }
            experts.insert(kind.to_string(), points);
        }
        Ok(RobustnessReport { experts })
    }

    /// Structure indicators of every generated network.
    pub fn stats(&mut self) -> Result<(), PipelineError> {
        let inputs = self.require(STATS, GENERATE, &[NETWORKS_FILE])?;
        self.execute(STATS, self.master(), inputs, |run, ctx| {
            let networks: Vec<InteractionNetwork> = run.read_jsonl(NETWORKS_FILE)?;
            let per = networks
                .iter()
                .map(|n| Ok(NetworkStats { article_id: n.article.id.clone(), stats: crate::eval::graph_stats(n)? }))
                .collect::<Result<Vec<_>, EvalError>>()?;
            let mean = dataset_stats(&per.iter().map(|s| s.stats).collect::<Vec<_>>())?;
            ctx.write_json(GRAPH_STATS_FILE, &GraphStatsReport { networks: per, mean })
        })
    }

    /// Every stage in dependency order, stopping at the first failure.
    pub fn pipeline(&mut self) -> Result<(), PipelineError> {
        self.generate()?;
        for kind in ProxyTaskKind::ANNOTATED {
            self.annotate(kind)?;
        }
        for kind in ProxyTaskKind::ALL {
            self.train(kind)?;
        }
        for kind in ProxyTaskKind::ALL {
            self.predict(kind)?;
        }
        for s in self.config.ensemble.strategies.clone() {
            self.ensemble(s)?;
        }
        self.evaluate()?;
        self.stats()
    }
}

fn build_gateway(config: &RunConfig, dir: &Path) -> Result<Gateway, PipelineError> {
    let llm = &config.llm;
    let gateway = match llm.provider {
        ProviderKind::Mock => Gateway::mock(MockScript::new(derive_str(config.seeds.master, "mock"))),
        ProviderKind::Http => Gateway::new(HttpProvider::new(HttpProviderConfig {
            base_url: llm.base_url.clone().expect("validated"),
            model: llm.model.clone().expect("validated"),
            api_key: std::env::var(ENV_LLM_API_KEY).ok(),
            timeout_secs: llm.timeout_secs,
        })?),
        ProviderKind::Replay => {
            let path = llm.replay_log.as_ref().expect("validated");
            Gateway::new(ReplayProvider::from_log(path).map_err(|e| PipelineError::io(path, e))?)
        }
    };
    let mut gateway = gateway
        .with_retry(RetryPolicy { max_retries: llm.max_retries, ..RetryPolicy::default() })
        .with_concurrency(llm.concurrency);
    if llm.audit {
        let path = dir.join(AUDIT_FILE);
        gateway = gateway.with_audit(AuditLog::open(&path).map_err(|e| PipelineError::io(&path, e))?);
    }
    Ok(gateway)
}
