//! K-way exploration: diversified variants run concurrently, each scored with
//! the reward `α·s + β·γ − λ·len`, and one candidate is selected.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding::fnv1a64;
use crate::error::PipelineError;
use crate::memory::{MemoryBank, Retrieved, StrategyContext};
use crate::model::{answers_match, parse_answer, Query, Trajectory};
use crate::pipeline::{retrieve, run_variant, Agents, VariantRun};
use crate::provider::Sampling;
use crate::tools::SimulatedWorkspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    /// 1-based.
    pub index: usize,
    pub diversity_hint: String,
    pub seed: u64,
    pub temperature: f64,
    /// Overrides the pipeline's retry budget for this variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retries: Option<u32>,
}

impl VariantConfig {
    pub fn sampling(&self) -> Sampling {
        Sampling { seed: self.seed, temperature: self.temperature }
    }
}

/// Strategy-orientation lines handed to variants 2, 3, ... in turn.
pub const DIVERSITY_HINTS: &[&str] = &[
    "Strategy orientation: prefer batch tools over repeated per-file calls.",
    "Strategy orientation: verify intermediate artifacts before aggregating.",
    "Strategy orientation: enumerate and check all input files before computing.",
    "Strategy orientation: keep the tool chain as short as the question allows.",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityConfig {
    pub seed: u64,
    pub temperature_base: f64,
    pub temperature_delta: f64,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self { seed: 0, temperature_base: 0.7, temperature_delta: 0.2 }
    }
}

/// Variant `i` of a query. Deterministic in `(query.id, i)` for a fixed
/// configuration.
pub fn diversify(query: &Query, i: usize, config: &DiversityConfig) -> VariantConfig {
    assert!(i >= 1, "variant indices start at 1");
    let base = config.seed.wrapping_add(fnv1a64(query.id.as_bytes()));
    if i == 1 {
        return VariantConfig {
            index: 1,
            diversity_hint: String::new(),
            seed: base,
            temperature: config.temperature_base.max(0.0),
            retries: None,
        };
    }
    VariantConfig {
        index: i,
        diversity_hint: DIVERSITY_HINTS[(i - 2) % DIVERSITY_HINTS.len()].to_string(),
        seed: base.wrapping_add(i as u64),
        temperature: (config.temperature_base + (i - 1) as f64 * config.temperature_delta).max(0.0),
        retries: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.1, lambda: 0.001 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.alpha, self.beta, self.lambda].iter().all(|w| w.is_finite());
        if !finite || !(self.alpha > self.beta && self.beta >= 0.0 && self.lambda >= 0.0) {
            return Err(format!(
                "reward weights need alpha > beta >= 0 and lambda >= 0, got alpha={} beta={} lambda={}",
                self.alpha, self.beta, self.lambda
            ));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { alpha: self.alpha * factor, beta: self.beta * factor, lambda: self.lambda * factor }
    }
}

pub fn reward(weights: &RewardWeights, success: bool, gamma: f64, length: usize) -> f64 {
    let s = if success { 1.0 } else { 0.0 };
    weights.alpha * s + weights.beta * gamma - weights.lambda * length as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Success is the parsed answer matching gold.
    Evolve,
    /// Success is the judge's verdict.
    Inference,
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "evolve" => Ok(Self::Evolve),
            "inference" => Ok(Self::Inference),
            other => Err(format!("unknown mode {other:?} (expected evolve or inference)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub variant: VariantConfig,
    pub run: VariantRun,
    pub parsed_answer: Option<String>,
    /// Judge verdict Y.
    pub judge_success: bool,
    /// Success label s used by the reward.
    pub success: bool,
    pub confidence: f64,
    pub reward: f64,
}

impl CandidateSolution {
    pub fn index(&self) -> usize {
        self.variant.index
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.run.trajectory
    }

    pub fn step_count(&self) -> usize {
        self.run.trajectory.steps.len()
    }

    pub fn final_text(&self) -> &str {
        &self.run.trajectory.final_text
    }

    pub fn aborted(&self) -> bool {
        self.run.aborted.is_some()
    }
}

/// Scores a finished variant run.
pub fn score(
    query: &Query,
    variant: VariantConfig,
    run: VariantRun,
    mode: RunMode,
    weights: &RewardWeights,
) -> CandidateSolution {
    let parsed_answer = parse_answer(&run.trajectory.final_text);
    let judge_success = run.outcome.success;
    let aborted = run.aborted.is_some();
    let success = !aborted
        && match mode {
            RunMode::Inference => judge_success,
            RunMode::Evolve => match (&parsed_answer, &query.gold_answer) {
                (Some(a), Some(g)) => answers_match(a, g, query.answer_mode()),
                _ => false,
            },
        };
    let confidence = if aborted { 0.0 } else { run.outcome.validity.confidence };
    let reward = reward(weights, success, confidence, run.trajectory.steps.len());
    CandidateSolution { variant, run, parsed_answer, judge_success, success, confidence, reward }
}

/// Orders candidates by (Y, r, γ, −steps, −index); the greatest is best.
pub fn selection_order(a: &CandidateSolution, b: &CandidateSolution) -> Ordering {
    a.judge_success
        .cmp(&b.judge_success)
        .then(a.reward.total_cmp(&b.reward))
        .then(a.confidence.total_cmp(&b.confidence))
        .then(b.step_count().cmp(&a.step_count()))
        .then(b.index().cmp(&a.index()))
}

/// Position of the best candidate.
pub fn select_best(candidates: &[CandidateSolution]) -> Result<usize, PipelineError> {
    candidates
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| selection_order(a, b))
        .map(|(i, _)| i)
        .ok_or(PipelineError::NoCandidates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    pub k_variants: usize,
    pub top_k: usize,
    pub mode: RunMode,
    pub weights: RewardWeights,
    pub diversity: DiversityConfig,
    /// Per-variant retry budgets, indexed by variant - 1.
    #[serde(default)]
    pub variant_retries: Vec<Option<u32>>,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            k_variants: 2,
            top_k: 1,
            mode: RunMode::Evolve,
            weights: RewardWeights::default(),
            diversity: DiversityConfig::default(),
            variant_retries: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exploration {
    pub context: StrategyContext,
    pub retrieved: Vec<Retrieved>,
    pub candidates: Vec<CandidateSolution>,
    /// Position of the selected candidate in `candidates`.
    pub best: usize,
}

impl Exploration {
    pub fn best(&self) -> &CandidateSolution {
        &self.candidates[self.best]
    }

    /// Candidates with s = 1.
    pub fn successes(&self) -> impl Iterator<Item = &CandidateSolution> {
        self.candidates.iter().filter(|c| c.success)
    }

    /// Candidates with s = 0.
    pub fn failures(&self) -> impl Iterator<Item = &CandidateSolution> {
        self.candidates.iter().filter(|c| !c.success)
    }
}

/// Retrieves once, then runs every variant concurrently against its own copy
/// of `workspace`. The bank is only read.
pub fn run_exploration(
    agents: &Agents<'_>,
    query: &Query,
    bank: &MemoryBank,
    workspace: &SimulatedWorkspace,
    config: &ExplorationConfig,
) -> Result<Exploration, PipelineError> {
    if config.k_variants == 0 {
        return Err(PipelineError::Config("k_variants must be at least 1".into()));
    }
    if config.mode == RunMode::Evolve && query.gold_answer.is_none() {
        return Err(PipelineError::Config(format!("evolve mode needs a gold answer for query {}", query.id)));
    }
    let (context, retrieved) = retrieve(bank, query, config.top_k, query.gold_answer.as_deref())?;

    let variants: Vec<VariantConfig> = (1..=config.k_variants)
        .map(|i| {
            let mut v = diversify(query, i, &config.diversity);
            v.retries = config.variant_retries.get(i - 1).copied().flatten();
            v
        })
        .collect();

    let runs: Vec<VariantRun> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|v| {
                let ws = workspace.clone();
                let context = &context;
                scope.spawn(move || run_variant(agents, query, context, v, ws))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("variant thread panicked")).collect()
    });

    let candidates: Vec<CandidateSolution> = variants
        .into_iter()
        .zip(runs)
        .map(|(v, run)| score(query, v, run, config.mode, &config.weights))
        .collect();
    for c in candidates.iter().filter(|c| c.aborted()) {
        tracing::warn!(query = %query.id, variant = c.index(), reason = ?c.run.aborted, "variant aborted");
    }
    if candidates.iter().all(CandidateSolution::aborted) {
        return Err(PipelineError::AllVariantsAborted(candidates.len()));
    }
    let best = select_best(&candidates)?;
    Ok(Exploration { context, retrieved, candidates, best })
}
