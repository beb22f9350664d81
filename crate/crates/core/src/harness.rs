//! Benchmark runs over a dataset, log evaluation, bank inspection and replay.
//!
//! A run writes `output_dir/<run-id>/` containing `manifest.json`,
//! `bank.jsonl` (the final bank) and one directory per query with
//! `variant-<i>.log` files and the episode `manifest.json`. Nothing written
//! there depends on wall-clock time or absolute paths.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedding::Encoder;
use crate::error::{HarnessError, MemoryError};
use crate::evolution::{consolidate, distill_contrastive, extract_single};
use crate::exploration::{run_exploration, DiversityConfig, ExplorationConfig, RewardWeights, RunMode};
use crate::memory::{CanonicalKey, MemoryBank, PatternType};
use crate::metrics::{episode_report, render_table, summarize, MetricReport, MetricSummary};
use crate::model::{filtered_tool_sequence, parse_answer, parse_log, render_log, Query, Trajectory};
use crate::pipeline::{Agents, PipelineConfig};
use crate::provider::{LanguageModel, OpenAiCompatible, RemoteConfig, RetryPolicy, Sampling, Script, ScriptedProvider};
use crate::tools::{SimulatedWorkspace, ToolRegistry};

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    HashedLocal,
    Remote,
}

/// Run configuration. Read from a flat `key = value` file; later sources
/// override earlier ones (defaults, then file, then command line).
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub k_variants: usize,
    pub n_executors_max: usize,
    pub retries_a: u32,
    pub top_k: usize,
    pub tail_l: usize,
    pub weights: RewardWeights,
    pub s_max_steps: usize,
    pub provider: ProviderKind,
    /// Replaces every fixture's script.json when set.
    pub script_path: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub embedding_model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub encoder: EncoderKind,
    pub encoder_dimension: usize,
    pub mode: RunMode,
    pub seed: u64,
    pub temperature_base: f64,
    pub temperature_delta: f64,
    pub memory_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub run_id: String,
    pub parallel_subgoals: bool,
    pub core_tools_only: bool,
    pub model_summarizer: bool,
}

impl Default for Config {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        let diversity = DiversityConfig::default();
        Self {
            k_variants: 2,
            n_executors_max: pipeline.n_executors_max,
            retries_a: pipeline.retries_a,
            top_k: 1,
            tail_l: pipeline.tail_l,
            weights: RewardWeights::default(),
            s_max_steps: pipeline.s_max_steps,
            provider: ProviderKind::Scripted,
            script_path: None,
            endpoint: None,
            model: None,
            embedding_model: None,
            api_key_env: None,
            timeout_secs: 120,
            encoder: EncoderKind::HashedLocal,
            encoder_dimension: 256,
            mode: RunMode::Evolve,
            seed: 0,
            temperature_base: diversity.temperature_base,
            temperature_delta: diversity.temperature_delta,
            memory_path: None,
            output_dir: PathBuf::from("runs"),
            run_id: "run".into(),
            parallel_subgoals: false,
            core_tools_only: false,
            model_summarizer: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| HarnessError::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(HarnessError::Config(format!("{key} = {value:?}: expected true or false"))),
    }
}

fn resolve(base: Option<&Path>, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

impl Config {
    /// Sets one key. Relative paths are resolved against `base` when given.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<(), HarnessError> {
        let value = value.trim();
        let text = || (!value.is_empty()).then(|| value.to_string());
        match key.trim() {
            "k_variants" => self.k_variants = parse_value(key, value)?,
            "n_executors_max" => self.n_executors_max = parse_value(key, value)?,
            "retries_A" | "retries_a" => self.retries_a = parse_value(key, value)?,
            "top_k" => self.top_k = parse_value(key, value)?,
            "tail_L" | "tail_l" => self.tail_l = parse_value(key, value)?,
            "alpha" => self.weights.alpha = parse_value(key, value)?,
            "beta" => self.weights.beta = parse_value(key, value)?,
            "lambda" => self.weights.lambda = parse_value(key, value)?,
            "s_max_steps" => self.s_max_steps = parse_value(key, value)?,
            "provider" => {
                self.provider = match value {
                    "scripted" => ProviderKind::Scripted,
                    "remote" => ProviderKind::Remote,
                    _ => return Err(HarnessError::Config(format!("provider = {value:?}: expected scripted or remote"))),
                }
            }
            "script_path" => self.script_path = text().map(|v| resolve(base, &v)),
            "endpoint" => self.endpoint = text(),
            "model" => self.model = text(),
            "embedding_model" => self.embedding_model = text(),
            "api_key_env" => self.api_key_env = text(),
            "timeout_secs" => self.timeout_secs = parse_value(key, value)?,
            "encoder" => {
                self.encoder = match value {
                    "hashed_local" => EncoderKind::HashedLocal,
                    "remote" => EncoderKind::Remote,
                    _ => return Err(HarnessError::Config(format!("encoder = {value:?}: expected hashed_local or remote"))),
                }
            }
            "encoder_dimension" => self.encoder_dimension = parse_value(key, value)?,
            "mode" => self.mode = value.parse().map_err(HarnessError::Config)?,
            "seed" => self.seed = parse_value(key, value)?,
            "temperature_base" => self.temperature_base = parse_value(key, value)?,
            "temperature_delta" => self.temperature_delta = parse_value(key, value)?,
            "memory_path" => self.memory_path = text().map(|v| resolve(base, &v)),
            "output_dir" => self.output_dir = resolve(base, value),
            "run_id" => self.run_id = value.to_string(),
            "parallel_subgoals" => self.parallel_subgoals = parse_bool(key, value)?,
            "core_tools_only" => self.core_tools_only = parse_bool(key, value)?,
            "model_summarizer" => self.model_summarizer = parse_bool(key, value)?,
            other => return Err(HarnessError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` text. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, base: Option<&Path>) -> Result<(), HarnessError> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", idx + 1)))?;
            self.set(key, value, base).map_err(|e| match e {
                HarnessError::Config(msg) => HarnessError::Config(format!("line {}: {msg}", idx + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Defaults overridden by the file at `path`.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config = Config::default();
        config.apply_text(&text, path.parent())?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        for (name, value) in [
            ("k_variants", self.k_variants),
            ("n_executors_max", self.n_executors_max),
            ("top_k", self.top_k),
            ("tail_L", self.tail_l),
            ("s_max_steps", self.s_max_steps),
        ] {
            if value == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        self.weights.validate().map_err(HarnessError::Config)?;
        if !(self.temperature_base >= 0.0 && self.temperature_delta >= 0.0) {
            return fail("temperatures must be non-negative".into());
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id == ".." {
            return fail(format!("run_id {:?} is not a plain directory name", self.run_id));
        }
        if self.provider == ProviderKind::Remote {
            if self.endpoint.is_none() || self.model.is_none() {
                return fail("the remote provider needs endpoint and model".into());
            }
        }
        if self.encoder == EncoderKind::Remote {
            if self.provider != ProviderKind::Remote || self.embedding_model.is_none() {
                return fail("the remote encoder needs the remote provider and embedding_model".into());
            }
        } else if self.encoder_dimension < 8 {
            return fail("encoder_dimension must be at least 8".into());
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            n_executors_max: self.n_executors_max,
            retries_a: self.retries_a,
            s_max_steps: self.s_max_steps,
            tail_l: self.tail_l,
            parallel_subgoals: self.parallel_subgoals,
            model_summarizer: self.model_summarizer,
        }
    }

    pub fn exploration(&self) -> ExplorationConfig {
        ExplorationConfig {
            k_variants: self.k_variants,
            top_k: self.top_k,
            mode: self.mode,
            weights: self.weights,
            diversity: DiversityConfig {
                seed: self.seed,
                temperature_base: self.temperature_base,
                temperature_delta: self.temperature_delta,
            },
            variant_retries: Vec::new(),
        }
    }

    /// The settings that shape results, without paths or credentials.
    pub fn summary(&self) -> ConfigSummary {
        ConfigSummary {
            k_variants: self.k_variants,
            n_executors_max: self.n_executors_max,
            retries_a: self.retries_a,
            top_k: self.top_k,
            tail_l: self.tail_l,
            weights: self.weights,
            s_max_steps: self.s_max_steps,
            provider: self.provider,
            model: self.model.clone(),
            encoder: self.encoder,
            encoder_dimension: self.encoder_dimension,
            mode: self.mode,
            seed: self.seed,
            temperature_base: self.temperature_base,
            temperature_delta: self.temperature_delta,
            parallel_subgoals: self.parallel_subgoals,
            core_tools_only: self.core_tools_only,
            model_summarizer: self.model_summarizer,
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_id)
    }

    fn remote_provider(&self) -> Result<Arc<OpenAiCompatible>, HarnessError> {
        let api_key = match &self.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                HarnessError::Config(format!("environment variable {var} (api_key_env) is not set"))
            })?),
            None => None,
        };
        let config = RemoteConfig {
            endpoint: self.endpoint.clone().unwrap_or_default(),
            model: self.model.clone().unwrap_or_default(),
            embedding_model: self.embedding_model.clone().unwrap_or_default(),
            embedding_dimension: self.encoder_dimension,
            api_key,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(self.timeout_secs),
        };
        Ok(Arc::new(OpenAiCompatible::new(config)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub k_variants: usize,
    pub n_executors_max: usize,
    pub retries_a: u32,
    pub top_k: usize,
    pub tail_l: usize,
    pub weights: RewardWeights,
    pub s_max_steps: usize,
    pub provider: ProviderKind,
    pub model: Option<String>,
    pub encoder: EncoderKind,
    pub encoder_dimension: usize,
    pub mode: RunMode,
    pub seed: u64,
    pub temperature_base: f64,
    pub temperature_delta: f64,
    pub parallel_subgoals: bool,
    pub core_tools_only: bool,
    pub model_summarizer: bool,
}

// ---------------------------------------------------------------------------
// Datasets and fixtures

/// A dataset line plus the directory holding its fixture bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub query: Query,
    pub bundle: PathBuf,
}

/// Per-query adjustments read from `overrides.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Retry budget per variant (index 0 is variant 1); `null` keeps the
    /// configured budget.
    #[serde(default)]
    pub variant_retries: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub workspace: SimulatedWorkspace,
    pub script: Option<Script>,
    pub overrides: Overrides,
}

pub const WORKSPACE_FILE: &str = "workspace.json";
pub const SCRIPT_FILE: &str = "script.json";
pub const OVERRIDES_FILE: &str = "overrides.json";

/// Reads a JSONL dataset. Each record's bundle is `fixture_ref` (relative to
/// the dataset file) or, by default, the sibling directory named after the id.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let bad = |line: usize, reason: String| HarnessError::Dataset { path: path.to_path_buf(), reason: format!("line {line}: {reason}") };
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let query: Query = serde_json::from_str(line).map_err(|e| bad(idx + 1, e.to_string()))?;
        query.validate().map_err(|e| bad(idx + 1, e))?;
        if !seen.insert(query.id.clone()) {
            return Err(bad(idx + 1, format!("duplicate query id {:?}", query.id)));
        }
        let bundle = dir.join(query.fixture_ref.as_deref().unwrap_or(&query.id));
        records.push(DatasetRecord { query, bundle });
    }
    if records.is_empty() {
        return Err(HarnessError::Dataset { path: path.to_path_buf(), reason: "no records".into() });
    }
    Ok(records)
}

/// Loads a record's bundle. The script is read only when `scripted` is set.
pub fn load_fixture(record: &DatasetRecord, scripted: bool, shared_script: Option<&Path>) -> Result<Fixture, HarnessError> {
    let fixture_err = |path: PathBuf, reason: String| HarnessError::Fixture { path, reason };
    let ws_path = record.bundle.join(WORKSPACE_FILE);
    let workspace = SimulatedWorkspace::load(&ws_path).map_err(|e| fixture_err(ws_path.clone(), e))?;
    let script = if scripted {
        let path = shared_script.map(Path::to_path_buf).unwrap_or_else(|| record.bundle.join(SCRIPT_FILE));
        Some(Script::load(&path).map_err(|e| fixture_err(path.clone(), e))?)
    } else {
        None
    };
    let ov_path = record.bundle.join(OVERRIDES_FILE);
    let overrides = if ov_path.exists() {
        let text = std::fs::read_to_string(&ov_path).map_err(|e| HarnessError::io(&ov_path, e))?;
        serde_json::from_str(&text).map_err(|e| fixture_err(ov_path.clone(), e.to_string()))?
    } else {
        Overrides::default()
    };
    Ok(Fixture { workspace, script, overrides })
}

// ---------------------------------------------------------------------------
// Manifests

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub key: String,
    pub title: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub index: usize,
    pub seed: u64,
    pub temperature: f64,
    pub diversity_hint: String,
    /// Success label s.
    pub success: bool,
    /// Judge verdict Y.
    pub judge_success: bool,
    pub confidence: f64,
    pub reward: f64,
    pub steps: usize,
    pub tool_errors: usize,
    pub answer: Option<String>,
    pub aborted: Option<String>,
    /// Relative to the episode directory.
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeManifest {
    pub query_id: String,
    pub status: EpisodeStatus,
    pub error: Option<String>,
    pub retrieved: Vec<RetrievalRecord>,
    pub strategy_context: String,
    pub selected_variant: Option<usize>,
    pub answer: Option<String>,
    pub variants: Vec<VariantSummary>,
    pub inserted_keys: Vec<String>,
    pub metrics: Option<MetricReport>,
    pub bank_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub query_id: String,
    pub status: EpisodeStatus,
    pub selected_variant: Option<usize>,
    /// Relative to the run directory.
    pub manifest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset: String,
    pub config: ConfigSummary,
    pub episodes: Vec<EpisodeEntry>,
    pub bank: String,
    pub bank_size: usize,
    pub metrics: MetricSummary,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BANK_SNAPSHOT: &str = "bank.jsonl";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("manifests serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Manifest { path: path.to_path_buf(), reason: e.to_string() })
}

// ---------------------------------------------------------------------------
// Running

pub fn build_encoder(config: &Config) -> Result<Encoder, HarnessError> {
    match config.encoder {
        EncoderKind::HashedLocal => Encoder::hashed(config.encoder_dimension)
            .map_err(|e| HarnessError::Config(format!("encoder: {e}"))),
        EncoderKind::Remote => Ok(Encoder::remote(config.remote_provider()?)),
    }
}

/// Loads the bank at `path`; an absent file is an empty bank.
pub fn load_bank(path: Option<&Path>, encoder: Encoder) -> Result<MemoryBank, HarnessError> {
    match path {
        Some(p) if p.exists() => Ok(MemoryBank::load(p, encoder)?),
        _ => Ok(MemoryBank::new(encoder)),
    }
}

/// Tool names scored by the metrics; bookkeeping tools are dropped only
/// when `core_tools_only` is set.
fn scored_tools(trajectory: &Trajectory, registry: &ToolRegistry, core_tools_only: bool) -> Vec<String> {
    filtered_tool_sequence(trajectory, |name| core_tools_only && registry.is_auxiliary(name))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub episodes: Vec<EpisodeManifest>,
}

/// Runs every query in dataset order: explore, select, distill, consolidate,
/// persist. The bank carries over between queries. A failing query yields a
/// failed manifest and the run continues; configuration and fixture problems
/// stop the run before the first query.
pub fn run_benchmark(config: &Config, dataset_path: &Path) -> Result<RunOutcome, HarnessError> {
    config.validate()?;
    let records = load_dataset(dataset_path)?;
    let scripted = config.provider == ProviderKind::Scripted;
    let fixtures = records
        .iter()
        .map(|r| load_fixture(r, scripted, config.script_path.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    if config.mode == RunMode::Evolve {
        if let Some(r) = records.iter().find(|r| r.query.gold_answer.is_none()) {
            return Err(HarnessError::Config(format!("evolve mode needs gold answers; query {} has none", r.query.id)));
        }
    }
    let remote = match config.provider {
        ProviderKind::Remote => Some(config.remote_provider()?),
        ProviderKind::Scripted => None,
    };
    let encoder = build_encoder(config)?;
    let mut bank = load_bank(config.memory_path.as_deref(), encoder)?;
    if let Some(parent) = config.memory_path.as_deref().and_then(Path::parent).filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }

    let standard = ToolRegistry::standard();
    let registry = if config.core_tools_only { standard.core_only() } else { standard.clone() };
    let pipeline = config.pipeline();
    let run_dir = config.run_dir();
    std::fs::create_dir_all(&run_dir).map_err(|e| HarnessError::io(&run_dir, e))?;

    let mut episodes = Vec::with_capacity(records.len());
    for (record, fixture) in records.iter().zip(fixtures) {
        let scripted_provider = fixture.script.clone().map(ScriptedProvider::new);
        let provider: &dyn LanguageModel = match (&scripted_provider, &remote) {
            (Some(p), _) => p,
            (None, Some(r)) => r.as_ref(),
            (None, None) => unreachable!("provider chosen above"),
        };
        let agents = Agents { provider, registry: &registry, config: &pipeline };
        let mut exploration = config.exploration();
        exploration.variant_retries = fixture.overrides.variant_retries.clone();
        let episode_dir = run_dir.join(&record.query.id);
        std::fs::create_dir_all(&episode_dir).map_err(|e| HarnessError::io(&episode_dir, e))?;
        let manifest = run_episode(&agents, config, &exploration, &record.query, &fixture, &mut bank, &episode_dir, &standard)?;
        if let Some(path) = &config.memory_path {
            bank.persist(path)?;
        }
        write_json(&episode_dir.join(MANIFEST_FILE), &manifest)?;
        tracing::info!(
            query = %manifest.query_id,
            status = ?manifest.status,
            selected = ?manifest.selected_variant,
            inserted = manifest.inserted_keys.len(),
            "episode finished"
        );
        episodes.push(manifest);
    }

    bank.persist(&run_dir.join(BANK_SNAPSHOT))?;
    let reports: Vec<MetricReport> = episodes.iter().filter_map(|e| e.metrics.clone()).collect();
    let manifest = RunManifest {
        run_id: config.run_id.clone(),
        dataset: dataset_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        config: config.summary(),
        episodes: episodes
            .iter()
            .map(|e| EpisodeEntry {
                query_id: e.query_id.clone(),
                status: e.status,
                selected_variant: e.selected_variant,
                manifest: format!("{}/{MANIFEST_FILE}", e.query_id),
            })
            .collect(),
        bank: BANK_SNAPSHOT.into(),
        bank_size: bank.len(),
        metrics: summarize(&reports),
    };
    write_json(&run_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(RunOutcome { run_dir, manifest, episodes })
}

#[allow(clippy::too_many_arguments)]
fn run_episode(
    agents: &Agents<'_>,
    config: &Config,
    exploration: &ExplorationConfig,
    query: &Query,
    fixture: &Fixture,
    bank: &mut MemoryBank,
    episode_dir: &Path,
    standard: &ToolRegistry,
) -> Result<EpisodeManifest, HarnessError> {
    let mut manifest = EpisodeManifest {
        query_id: query.id.clone(),
        status: EpisodeStatus::Failed,
        error: None,
        retrieved: Vec::new(),
        strategy_context: String::new(),
        selected_variant: None,
        answer: None,
        variants: Vec::new(),
        inserted_keys: Vec::new(),
        metrics: None,
        bank_size: bank.len(),
    };
    let result = match run_exploration(agents, query, bank, &fixture.workspace, exploration) {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(query = %query.id, error = %e, "episode failed");
            manifest.error = Some(e.to_string());
            return Ok(manifest);
        }
    };
    manifest.retrieved = result
        .retrieved
        .iter()
        .map(|h| RetrievalRecord { key: h.item.key().to_string(), title: h.item.title.clone(), score: h.score })
        .collect();
    manifest.strategy_context = result.context.rendered.clone();

    for c in &result.candidates {
        let log = format!("variant-{}.log", c.index());
        let path = episode_dir.join(&log);
        std::fs::write(&path, render_log(c.trajectory())).map_err(|e| HarnessError::io(&path, e))?;
        manifest.variants.push(VariantSummary {
            index: c.index(),
            seed: c.variant.seed,
            temperature: c.variant.temperature,
            diversity_hint: c.variant.diversity_hint.clone(),
            success: c.success,
            judge_success: c.judge_success,
            confidence: c.confidence,
            reward: c.reward,
            steps: c.step_count(),
            tool_errors: c.trajectory().error_count(),
            answer: c.parsed_answer.clone(),
            aborted: c.run.aborted.clone(),
            log,
        });
    }
    let best = result.best();
    manifest.selected_variant = Some(best.index());
    manifest.answer = best.parsed_answer.clone();

    let sampling = Sampling { seed: config.seed, temperature: 0.0 };
    let single = extract_single(agents.provider, bank.encoder(), query, best, sampling);
    let contrastive = distill_contrastive(agents.provider, bank.encoder(), query, &result.candidates, sampling);
    manifest.inserted_keys = consolidate(bank, single, contrastive)?.iter().map(CanonicalKey::to_string).collect();
    manifest.bank_size = bank.len();

    if let Some(gold) = &query.gold_answer {
        let predicted = scored_tools(best.trajectory(), standard, config.core_tools_only);
        manifest.metrics = Some(episode_report(
            &query.id,
            best.parsed_answer.as_deref(),
            gold,
            query.answer_mode(),
            query.gold_tool_sequence.as_deref(),
            &predicted,
        ));
    }
    manifest.status = EpisodeStatus::Ok;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<MetricReport>,
    pub summary: MetricSummary,
    /// Dataset ids without a log.
    pub missing_logs: Vec<String>,
    /// Dataset ids without a gold answer.
    pub unscored: Vec<String>,
}

impl EvalReport {
    pub fn table(&self) -> String {
        render_table(&self.episodes)
    }
}

pub const REPORT_FILE: &str = "report.json";

/// The log to score for `query_id`: the selected variant named by the
/// episode manifest, a lone `variant-*.log`, or `<query_id>.log`.
pub fn find_log(log_dir: &Path, query_id: &str) -> Option<PathBuf> {
    let dir = log_dir.join(query_id);
    if let Ok(m) = read_json::<EpisodeManifest>(&dir.join(MANIFEST_FILE)) {
        if let Some(v) = m.selected_variant.and_then(|i| m.variants.iter().find(|s| s.index == i)) {
            return Some(dir.join(&v.log));
        }
    }
    if let Ok(entries) = std::fs::read_dir(&dir) {
        let mut logs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("variant-")) && p.extension().is_some_and(|x| x == "log"))
            .collect();
        if logs.len() == 1 {
            return logs.pop();
        }
    }
    let flat = log_dir.join(format!("{query_id}.log"));
    flat.exists().then_some(flat)
}

/// Scores each dataset query's log against its gold data and writes
/// `report.json` into `log_dir`. With `core_tools_only`, bookkeeping tools are
/// left out of the predicted sequences.
pub fn evaluate_logs(dataset_path: &Path, log_dir: &Path, core_tools_only: bool) -> Result<EvalReport, HarnessError> {
    let records = load_dataset(dataset_path)?;
    let registry = ToolRegistry::standard();
    let mut report = EvalReport { episodes: Vec::new(), summary: summarize(&[]), missing_logs: Vec::new(), unscored: Vec::new() };
    for record in &records {
        let q = &record.query;
        let Some(gold) = &q.gold_answer else {
            report.unscored.push(q.id.clone());
            continue;
        };
        let Some(path) = find_log(log_dir, &q.id) else {
            report.missing_logs.push(q.id.clone());
            continue;
        };
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let trajectory: Trajectory = parse_log(&text)?;
        let predicted = scored_tools(&trajectory, &registry, core_tools_only);
        report.episodes.push(episode_report(
            &q.id,
            parse_answer(&trajectory.final_text).as_deref(),
            gold,
            q.answer_mode(),
            q.gold_tool_sequence.as_deref(),
            &predicted,
        ));
    }
    report.summary = summarize(&report.episodes);
    write_json(&log_dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Bank inspection

pub fn open_bank_file(path: &Path) -> Result<MemoryBank, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "bank file not found")));
    }
    Ok(MemoryBank::load(path, Encoder::default())?)
}

pub fn memory_ls(bank: &MemoryBank) -> String {
    let mut out = format!("{} items\n", bank.len());
    for item in bank.items() {
        out.push_str(&format!("{}\t{}\n", item.key(), item.pattern_type));
    }
    out
}

pub fn memory_show(bank: &MemoryBank, key: &str) -> Result<String, HarnessError> {
    let parsed = CanonicalKey::parse(key).ok_or_else(|| MemoryError::UnknownKey(key.to_string()))?;
    let item = bank.get(&parsed).ok_or_else(|| MemoryError::UnknownKey(key.to_string()))?;
    Ok(item.card())
}

/// The full bank as a JSON array.
pub fn memory_export(bank: &MemoryBank) -> String {
    let mut text = serde_json::to_string_pretty(bank.items()).expect("memory items serialize");
    text.push('\n');
    text
}

pub fn memory_stats(bank: &MemoryBank) -> String {
    let counts = bank.counts_by_type();
    let mut out = String::new();
    for p in [PatternType::AnalysisPattern, PatternType::ErrorAttribution] {
        out.push_str(&format!("{}:{}\n", p, counts.get(&p).copied().unwrap_or(0)));
    }
    out.push_str(&format!("total:{}\n", bank.len()));
    out
}

// ---------------------------------------------------------------------------
// Replay

const REPLAY_PAYLOAD_CHARS: usize = 120;

fn replay_episode(manifest_path: &Path, out: &mut String) -> Result<(), HarnessError> {
    let manifest: EpisodeManifest = read_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mismatch = |reason: String| HarnessError::Manifest { path: manifest_path.to_path_buf(), reason };
    if manifest.status == EpisodeStatus::Failed {
        out.push_str(&format!("{}: failed ({})\n", manifest.query_id, manifest.error.as_deref().unwrap_or("unknown")));
        return Ok(());
    }
    let mut selected = None;
    for v in &manifest.variants {
        let path = dir.join(&v.log);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let trajectory = parse_log(&text)?;
        if trajectory.steps.len() != v.steps {
            return Err(mismatch(format!("{} has {} steps, manifest says {}", v.log, trajectory.steps.len(), v.steps)));
        }
        let answer = parse_answer(&trajectory.final_text);
        if answer != v.answer {
            return Err(mismatch(format!("{} answers {:?}, manifest says {:?}", v.log, answer, v.answer)));
        }
        if Some(v.index) == manifest.selected_variant {
            selected = Some(trajectory);
        }
    }
    let trajectory = selected.ok_or_else(|| mismatch("selected variant has no log".into()))?;
    out.push_str(&format!(
        "{}: variant {} selected, answer {}, {} steps, {} logs verified\n",
        manifest.query_id,
        manifest.selected_variant.unwrap_or_default(),
        manifest.answer.as_deref().unwrap_or("(none)"),
        trajectory.steps.len(),
        manifest.variants.len()
    ));
    for (i, step) in trajectory.steps.iter().enumerate() {
        let payload: String = step.observation.payload.chars().take(REPLAY_PAYLOAD_CHARS).collect();
        out.push_str(&format!(
            "  {:>3}. [executor {}] {} -> {}: {}\n",
            i + 1,
            step.action.issued_by,
            step.action.tool_name,
            step.observation.status,
            payload.replace('\n', " ")
        ));
    }
    Ok(())
}

/// Re-reads the logs named by a run or episode manifest, checks them against
/// the recorded step counts and answers, and renders the selected traces.
pub fn replay(manifest_path: &Path) -> Result<String, HarnessError> {
    let value: serde_json::Value = read_json(manifest_path)?;
    let mut out = String::new();
    if value.get("episodes").is_some() {
        let run: RunManifest = serde_json::from_value(value)
            .map_err(|e| HarnessError::Manifest { path: manifest_path.to_path_buf(), reason: e.to_string() })?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        out.push_str(&format!("run {} over {} ({} episodes)\n", run.run_id, run.dataset, run.episodes.len()));
        for e in &run.episodes {
            replay_episode(&dir.join(&e.manifest), &mut out)?;
        }
    } else {
        replay_episode(manifest_path, &mut out)?;
    }
    Ok(out)
}
