//! The retrieve → plan → execute → judge loop for one exploration variant.
//!
//! The orchestrator turns the query (plus retrieved strategy context) into a
//! list of sub-goals, each with an interface contract. Each sub-goal goes to
//! its own executor, which sees only that sub-goal and a bounded working
//! memory (summary of older steps plus the last `L` raw steps). The
//! orchestrator then writes the final answer and the judge scores it without
//! seeing any gold data.

use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{MemoryError, ProviderError};
use crate::exploration::VariantConfig;
use crate::memory::{aggregate_context, MemoryBank, Retrieved, StrategyContext};
use crate::model::{
    parse_answer, parse_diagnostics, Diagnostics, Outcome, Query, Step, ToolAction, Trajectory, ValiditySignals,
};
use crate::prompts;
use crate::provider::{ChatMessage, FinishReason, LanguageModel, Sampling};
use crate::tools::{invoke, ExecutorLocal, SimulatedWorkspace, ToolRegistry, ToolSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_executors_max: usize,
    /// Corrective retries per executor.
    pub retries_a: u32,
    pub s_max_steps: usize,
    pub tail_l: usize,
    /// Run sub-goals concurrently instead of in plan order.
    pub parallel_subgoals: bool,
    /// Use the model to compress evicted working-memory steps; otherwise the
    /// deterministic one-line-per-step summary is used.
    pub model_summarizer: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_executors_max: 3,
            retries_a: 1,
            s_max_steps: 200,
            tail_l: 6,
            parallel_subgoals: false,
            model_summarizer: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    #[serde(default)]
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub success_criteria: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGoal {
    /// 1-based.
    pub index: usize,
    pub instruction: String,
    pub contract: Contract,
}

impl SubGoal {
    pub fn render(&self) -> String {
        let list = |items: &[String]| if items.is_empty() { "(none)".to_string() } else { items.join("; ") };
        format!(
            "Sub-goal {}: {}\nInputs: {}\nOutputs: {}\nSuccess criteria: {}",
            self.index,
            self.instruction,
            list(&self.contract.inputs),
            list(&self.contract.outputs),
            list(&self.contract.success_criteria)
        )
    }
}

/// Role tags for one variant, e.g. `variant-2/executor-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roles {
    prefix: String,
}

impl Roles {
    pub fn for_variant(index: usize) -> Self {
        Self { prefix: format!("variant-{index}") }
    }

    pub fn orchestrator(&self) -> String {
        format!("{}/orchestrator", self.prefix)
    }

    pub fn executor(&self, n: usize) -> String {
        format!("{}/executor-{n}", self.prefix)
    }

    pub fn summarizer(&self, n: usize) -> String {
        format!("{}/summarizer-{n}", self.prefix)
    }

    pub fn judge(&self) -> String {
        format!("{}/judge", self.prefix)
    }
}

// ---------------------------------------------------------------------------
// Retrieval

pub fn retrieve(
    bank: &MemoryBank,
    query: &Query,
    k: usize,
    leakage_context: Option<&str>,
) -> Result<(StrategyContext, Vec<Retrieved>), MemoryError> {
    let hits = bank.retrieve_top_k(&query.render(), k.max(1), leakage_context)?;
    let items: Vec<_> = hits.iter().map(|h| h.item.clone()).collect();
    Ok((aggregate_context(&items), hits))
}

// ---------------------------------------------------------------------------
// Planning

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub text: String,
    pub subgoals: Vec<SubGoal>,
    /// The plan could not be parsed and wraps the whole query.
    pub degenerate: bool,
}

#[derive(Deserialize)]
struct PlanGoal {
    instruction: String,
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    outputs: Vec<String>,
    #[serde(default)]
    success_criteria: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PlanBody {
    Wrapped { subgoals: Vec<PlanGoal> },
    Bare(Vec<PlanGoal>),
}

/// Content of the first fenced block tagged with one of `tags` (or untagged).
pub(crate) fn fenced_block<'a>(text: &'a str, tags: &[&str]) -> Option<&'a str> {
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let line_end = after.find('\n')?;
        let tag = after[..line_end].trim();
        let body = &after[line_end + 1..];
        let end = body.find("```")?;
        if tag.is_empty() || tags.contains(&tag) {
            return Some(&body[..end]);
        }
        rest = &body[end + 3..];
    }
    None
}

/// Slice from the first opening bracket to the matching last closing one.
pub(crate) fn json_span(text: &str) -> Option<&str> {
    let start = text.find(['{', '['])?;
    let close = if text[start..].starts_with('{') { '}' } else { ']' };
    let end = text.rfind(close)?;
    (end > start).then(|| &text[start..=end])
}

pub fn parse_plan(text: &str) -> Option<Vec<SubGoal>> {
    let candidate = fenced_block(text, &["plan", "json"]).unwrap_or(text);
    let body: PlanBody = serde_json::from_str(json_span(candidate)?).ok()?;
    let goals = match body {
        PlanBody::Wrapped { subgoals } | PlanBody::Bare(subgoals) => subgoals,
    };
    if goals.is_empty() {
        return None;
    }
    let mut out = Vec::with_capacity(goals.len());
    for (i, g) in goals.into_iter().enumerate() {
        let outputs: Vec<String> = g.outputs.into_iter().filter(|o| !o.trim().is_empty()).collect();
        if g.instruction.trim().is_empty() || outputs.is_empty() {
            return None;
        }
        out.push(SubGoal {
            index: i + 1,
            instruction: g.instruction.trim().to_string(),
            contract: Contract { inputs: g.inputs, outputs, success_criteria: g.success_criteria },
        });
    }
    Some(out)
}

/// Keeps at most `n_max` sub-goals; the overflow is folded into the last
/// kept goal.
pub fn clamp_plan(mut goals: Vec<SubGoal>, n_max: usize) -> Vec<SubGoal> {
    let n_max = n_max.max(1);
    if goals.len() <= n_max {
        return goals;
    }
    let overflow = goals.split_off(n_max);
    let last = goals.last_mut().expect("n_max >= 1");
    for extra in overflow {
        last.instruction.push_str(&format!("\nThen: {}", extra.instruction));
        for input in extra.contract.inputs {
            if !last.contract.inputs.contains(&input) {
                last.contract.inputs.push(input);
            }
        }
        last.contract.outputs.extend(extra.contract.outputs);
        last.contract.success_criteria.extend(extra.contract.success_criteria);
    }
    goals
}

pub fn degenerate_plan(query: &Query) -> Vec<SubGoal> {
    vec![SubGoal {
        index: 1,
        instruction: query.render(),
        contract: Contract {
            inputs: Vec::new(),
            outputs: vec!["final answer".into()],
            success_criteria: vec!["the question is answered from tool outputs".into()],
        },
    }]
}

fn orchestrator_opening(query: &Query, context: &StrategyContext, diversity_hint: &str) -> Vec<ChatMessage> {
    let memory_block = if context.is_empty() {
        String::new()
    } else {
        format!("Strategy memories:\n{}", context.rendered)
    };
    let hint = if diversity_hint.is_empty() { String::new() } else { format!("{diversity_hint}\n") };
    let user = prompts::fill(
        prompts::VARIANTS,
        &[("memory_block", &memory_block), ("diversity_hint", &hint), ("query", &query.render())],
    );
    vec![ChatMessage::system(prompts::ORCHESTRATOR), ChatMessage::user(format!("{user}\n{}", prompts::PLAN_ENVELOPE))]
}

/// Asks the orchestrator for a plan, re-asking once before falling back to a
/// single sub-goal covering the whole query.
pub fn orchestrate(
    provider: &dyn LanguageModel,
    roles: &Roles,
    query: &Query,
    context: &StrategyContext,
    variant: &VariantConfig,
    n_max: usize,
) -> Result<(Plan, Vec<ChatMessage>), ProviderError> {
    let mut messages = orchestrator_opening(query, context, &variant.diversity_hint);
    let tag = roles.orchestrator();
    let first = provider.complete(&tag, &messages, &[], variant.sampling())?;
    messages.push(ChatMessage::assistant(first.text.clone()));
    if let Some(goals) = parse_plan(&first.text) {
        let plan = Plan { text: first.text, subgoals: clamp_plan(goals, n_max), degenerate: false };
        return Ok((plan, messages));
    }
    messages.push(ChatMessage::user(prompts::PLAN_REASK));
    let second = provider.complete(&tag, &messages, &[], variant.sampling())?;
    messages.push(ChatMessage::assistant(second.text.clone()));
    let plan = match parse_plan(&second.text) {
        Some(goals) => Plan { text: second.text, subgoals: clamp_plan(goals, n_max), degenerate: false },
        None => {
            tracing::warn!(query = %query.id, "unparseable plan after re-ask, using a single sub-goal");
            Plan { text: second.text, subgoals: degenerate_plan(query), degenerate: true }
        }
    };
    Ok((plan, messages))
}

// ---------------------------------------------------------------------------
// Working memory

pub const FALLBACK_PAYLOAD_CHARS: usize = 80;
const RECENT_PAYLOAD_CHARS: usize = 1500;

fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((idx, _)) => format!("{}…", &text[..idx]),
        None => text.to_string(),
    }
}

fn render_step(number: usize, step: &Step) -> String {
    format!(
        "[{number}] {}({}) -> {}: {}",
        step.action.tool_name,
        step.action.arguments_text(),
        step.observation.status,
        truncate_chars(&step.observation.payload, RECENT_PAYLOAD_CHARS)
    )
}

/// The deterministic summary line for an evicted step.
pub fn fallback_summary_line(step: &Step) -> String {
    let head: String = step.observation.payload.chars().take(FALLBACK_PAYLOAD_CHARS).collect();
    format!("{} → {}: {}", step.action.tool_name, step.observation.status, head)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkingMemory {
    pub summary: String,
    recent: VecDeque<(usize, Step)>,
    tail: usize,
    seen: usize,
}

pub enum Summarizer<'a> {
    Fallback,
    Model { provider: &'a dyn LanguageModel, role_tag: String, sampling: Sampling },
}

impl WorkingMemory {
    pub fn new(tail: usize) -> Self {
        Self { summary: String::new(), recent: VecDeque::new(), tail, seen: 0 }
    }

    pub fn tail_len(&self) -> usize {
        self.tail
    }

    pub fn recent(&self) -> impl Iterator<Item = &Step> {
        self.recent.iter().map(|(_, s)| s)
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty() && self.summary.is_empty()
    }

    /// Appends steps, keeping at most `tail` raw and folding the evicted ones
    /// into the summary.
    pub fn update(&mut self, new_steps: &[Step], summarizer: &Summarizer<'_>) {
        let mut evicted = Vec::new();
        for step in new_steps {
            self.seen += 1;
            self.recent.push_back((self.seen, step.clone()));
            while self.recent.len() > self.tail {
                evicted.push(self.recent.pop_front().expect("non-empty"));
            }
        }
        if evicted.is_empty() {
            return;
        }
        if let Summarizer::Model { provider, role_tag, sampling } = summarizer {
            let mut body = String::new();
            if !self.summary.is_empty() {
                body.push_str(&format!("Progress so far:\n{}\n\n", self.summary));
            }
            body.push_str("Earlier steps:\n");
            for (n, step) in &evicted {
                body.push_str(&render_step(*n, step));
                body.push('\n');
            }
            let messages = [ChatMessage::system(prompts::SUMMARIZER), ChatMessage::user(body)];
            match provider.complete(role_tag, &messages, &[], *sampling) {
                Ok(r) if r.finish != FinishReason::Error && !r.text.trim().is_empty() => {
                    self.summary = r.text.trim().to_string();
                    return;
                }
                Ok(_) => tracing::debug!("summarizer returned nothing usable, using fallback"),
                Err(e) => tracing::debug!(error = %e, "summarizer failed, using fallback"),
            }
        }
        for (_, step) in &evicted {
            if !self.summary.is_empty() {
                self.summary.push('\n');
            }
            self.summary.push_str(&fallback_summary_line(step));
        }
    }

    pub fn render(&self) -> String {
        if self.summary.is_empty() && self.recent.is_empty() {
            return "(empty)".into();
        }
        let mut out = String::new();
        if !self.summary.is_empty() {
            out.push_str(&format!("Summary of earlier steps:\n{}\n", self.summary));
        }
        if !self.recent.is_empty() {
            out.push_str("Recent steps:\n");
            for (n, step) in &self.recent {
                out.push_str(&render_step(*n, step));
                out.push('\n');
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Execution

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResult {
    pub subgoal: SubGoal,
    pub trajectory: Trajectory,
    /// Y_n: contract outputs exist and the executor asserted success.
    pub success: bool,
    pub completion: String,
    pub retries_used: u32,
    pub skipped: bool,
    pub stop_reason: Option<String>,
}

/// Conjunction over segment outcomes: the variant's plan succeeded only if
/// every sub-goal did.
pub fn all_segments_success(outcomes: &[bool]) -> bool {
    outcomes.iter().all(|y| *y)
}

/// The `STATUS:` line of an executor completion.
pub fn completion_status(text: &str) -> Option<bool> {
    text.lines().rev().find_map(|line| {
        let rest = line.trim().strip_prefix("STATUS:")?.trim().trim_end_matches('.');
        match rest.to_ascii_uppercase().as_str() {
            "SUCCESS" => Some(true),
            "FAILURE" => Some(false),
            _ => None,
        }
    })
}

fn is_path_like(artifact: &str) -> bool {
    artifact.contains('/') || artifact.contains('*')
}

/// Whether a contract output is satisfied: path-like outputs must exist in the
/// workspace (glob patterns need a match); named outputs must be reported in
/// the completion text.
pub fn output_satisfied(workspace: &SimulatedWorkspace, completion: &str, artifact: &str) -> bool {
    let artifact = artifact.trim();
    if !is_path_like(artifact) {
        return completion.to_lowercase().contains(&artifact.to_lowercase());
    }
    let path = if artifact.starts_with('/') {
        artifact.to_string()
    } else {
        format!("{}/{}", workspace.sandbox_root, artifact)
    };
    if path.contains(['*', '?', '[']) {
        return glob::Pattern::new(&path).is_ok_and(|p| workspace.files.keys().any(|f| p.matches(f)));
    }
    workspace.exists(&path) || workspace.files.keys().any(|f| f.starts_with(&format!("{path}/")))
}

pub struct Agents<'a> {
    pub provider: &'a dyn LanguageModel,
    pub registry: &'a ToolRegistry,
    pub config: &'a PipelineConfig,
}

/// Runs one executor over one sub-goal.
pub fn execute_subgoal(
    agents: &Agents<'_>,
    roles: &Roles,
    variant: &VariantConfig,
    workspace: &Mutex<SimulatedWorkspace>,
    subgoal: &SubGoal,
) -> SegmentResult {
    let n = subgoal.index;
    let tag = roles.executor(n);
    let retries_allowed = variant.retries.unwrap_or(agents.config.retries_a);
    let tools: Vec<ToolSpec> = agents.registry.specs();
    let summarizer = if agents.config.model_summarizer {
        Summarizer::Model { provider: agents.provider, role_tag: roles.summarizer(n), sampling: variant.sampling() }
    } else {
        Summarizer::Fallback
    };
    let mut memory = WorkingMemory::new(agents.config.tail_l);
    let mut local = ExecutorLocal::default();
    let mut error_streak = 0;
    let mut result = SegmentResult {
        subgoal: subgoal.clone(),
        trajectory: Trajectory::default(),
        success: false,
        completion: String::new(),
        retries_used: 0,
        skipped: false,
        stop_reason: None,
    };

    loop {
        if result.trajectory.steps.len() >= agents.config.s_max_steps {
            result.stop_reason = Some(format!("step budget of {} exhausted", agents.config.s_max_steps));
            break;
        }
        let messages = [
            ChatMessage::system(prompts::EXECUTOR),
            ChatMessage::user(format!(
                "{}\n\n{}\n\nWorking memory:\n{}",
                subgoal.render(),
                prompts::EXECUTOR_COMPLETION,
                memory.render()
            )),
        ];
        let response = match agents.provider.complete(&tag, &messages, &tools, variant.sampling()) {
            Ok(r) if r.finish == FinishReason::Error => {
                result.stop_reason = Some(format!("provider error: {}", r.text));
                break;
            }
            Ok(r) => r,
            Err(e) => {
                result.stop_reason = Some(format!("provider error: {e}"));
                break;
            }
        };

        if response.tool_calls.is_empty() {
            result.completion = response.text;
            let asserted = completion_status(&result.completion) == Some(true);
            let ws = workspace.lock().expect("workspace lock");
            let missing: Vec<&String> = subgoal
                .contract
                .outputs
                .iter()
                .filter(|o| !output_satisfied(&ws, &result.completion, o))
                .collect();
            result.success = asserted && missing.is_empty();
            if !asserted {
                result.stop_reason = Some("executor did not assert success".into());
            } else if !missing.is_empty() {
                result.stop_reason = Some(format!("contract outputs missing: {missing:?}"));
            }
            break;
        }

        let room = agents.config.s_max_steps - result.trajectory.steps.len();
        let mut batch = Vec::new();
        {
            let mut ws = workspace.lock().expect("workspace lock");
            for call in response.tool_calls.iter().take(room) {
                let action = ToolAction::new(call.tool_name.clone(), call.arguments.clone(), n);
                let observation = invoke(agents.registry, &mut ws, &mut local, &action);
                batch.push(Step { action, observation });
            }
        }
        for step in &batch {
            result.trajectory.push(step.action.clone(), step.observation.clone());
        }
        memory.update(&batch, &summarizer);

        // The budget covers consecutive failures; a successful call resets it.
        let mut exhausted = None;
        for step in &batch {
            if !step.observation.is_error() {
                error_streak = 0;
            } else if error_streak < retries_allowed {
                error_streak += 1;
                result.retries_used += 1;
            } else {
                exhausted = Some(step.observation.payload.clone());
                break;
            }
        }
        if let Some(error) = exhausted {
            result.stop_reason = Some(format!("retry budget ({retries_allowed}) exhausted after error: {error}"));
            break;
        }
    }
    result
}

fn skipped_segment(subgoal: &SubGoal, reason: String) -> SegmentResult {
    SegmentResult {
        subgoal: subgoal.clone(),
        trajectory: Trajectory::default(),
        success: false,
        completion: String::new(),
        retries_used: 0,
        skipped: true,
        stop_reason: Some(reason),
    }
}

/// Executes a plan. In plan order (the default) execution stops at the first
/// failed sub-goal and the rest are marked skipped; in parallel mode every
/// sub-goal runs on its own thread.
pub fn execute_plan(
    agents: &Agents<'_>,
    roles: &Roles,
    variant: &VariantConfig,
    workspace: &Mutex<SimulatedWorkspace>,
    subgoals: &[SubGoal],
) -> Vec<SegmentResult> {
    if agents.config.parallel_subgoals {
        return std::thread::scope(|scope| {
            let handles: Vec<_> = subgoals
                .iter()
                .map(|g| scope.spawn(move || execute_subgoal(agents, roles, variant, workspace, g)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("executor thread panicked")).collect()
        });
    }
    let mut segments = Vec::with_capacity(subgoals.len());
    let mut failed_at = None;
    for goal in subgoals {
        if let Some(prev) = failed_at {
            segments.push(skipped_segment(goal, format!("sub-goal {prev} failed")));
            continue;
        }
        let segment = execute_subgoal(agents, roles, variant, workspace, goal);
        if !segment.success {
            failed_at = Some(goal.index);
        }
        segments.push(segment);
    }
    segments
}

const REPORT_PAYLOAD_CHARS: usize = 400;

fn segment_report(segments: &[SegmentResult]) -> String {
    let mut out = String::new();
    for s in segments {
        let status = if s.skipped {
            "skipped"
        } else if s.success {
            "success"
        } else {
            "failure"
        };
        out.push_str(&format!("{}\nStatus: {status}\n", s.subgoal.render()));
        if let Some(reason) = &s.stop_reason {
            out.push_str(&format!("Stop reason: {reason}\n"));
        }
        if !s.completion.is_empty() {
            out.push_str(&format!("Executor report: {}\n", s.completion.trim()));
        }
        if !s.trajectory.steps.is_empty() {
            out.push_str("Tool results:\n");
            for (i, step) in s.trajectory.steps.iter().enumerate() {
                out.push_str(&format!(
                    "  [{}] {} -> {}: {}\n",
                    i + 1,
                    step.action.tool_name,
                    step.observation.status,
                    truncate_chars(&step.observation.payload, REPORT_PAYLOAD_CHARS)
                ));
            }
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Judge

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub decision: Decision,
    pub confidence: f64,
    pub justification: String,
}

/// Parses the judge's JSON verdict, accepting bare or fenced JSON.
pub fn parse_verdict(text: &str) -> Option<JudgeVerdict> {
    let candidate = fenced_block(text, &["json"]).unwrap_or(text);
    let value: Value = serde_json::from_str(json_span(candidate)?).ok()?;
    let decision = match value.get("decision")?.as_str()?.trim().to_ascii_uppercase().as_str() {
        "SUCCESS" => Decision::Success,
        "FAILURE" => Decision::Failure,
        _ => return None,
    };
    let confidence = match value.get("confidence")? {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse().ok()?,
        _ => return None,
    };
    if !(0.0..=1.0).contains(&confidence) {
        return None;
    }
    let justification = value.get("justification").and_then(Value::as_str).unwrap_or_default().to_string();
    Some(JudgeVerdict { decision, confidence, justification })
}

const TRACE_PAYLOAD_CHARS: usize = 300;

pub fn render_tool_trace(trajectories: &[&Trajectory]) -> String {
    let mut out = String::new();
    let mut n = 0;
    for t in trajectories {
        for step in &t.steps {
            n += 1;
            out.push_str(&format!(
                "{n}. [executor {}] {}({}) -> {}: {}\n",
                step.action.issued_by,
                step.action.tool_name,
                step.action.arguments_text(),
                step.observation.status,
                truncate_chars(&step.observation.payload, TRACE_PAYLOAD_CHARS)
            ));
        }
    }
    if out.is_empty() {
        out.push_str("(no tool calls)\n");
    }
    out
}

fn render_diagnostics(diag: Option<&Diagnostics>) -> String {
    match diag {
        None => "N/A".into(),
        Some(d) => {
            let mut out = String::from("Tool summary:\n");
            for line in &d.tool_summary {
                out.push_str(&format!("- {line}\n"));
            }
            out.push_str(&format!("Failure reason: {}", d.failure_reason));
            out
        }
    }
}

/// Scores a candidate without access to gold data. A missing answer tag is a
/// failure without consulting the model.
pub fn judge(
    provider: &dyn LanguageModel,
    roles: &Roles,
    query: &Query,
    trajectories: &[&Trajectory],
    final_text: &str,
    reasoning_text: &str,
    diagnostics: Option<&Diagnostics>,
    sampling: Sampling,
) -> Result<Outcome, ProviderError> {
    let step_count = trajectories.iter().map(|t| t.steps.len()).sum();
    if parse_answer(final_text).is_none() {
        return Ok(Outcome {
            success: false,
            validity: ValiditySignals {
                format_compliant: false,
                numeric_match: None,
                step_count,
                confidence: 0.0,
                justification: "response lacks an explicit final answer tag".into(),
            },
        });
    }
    let system = prompts::fill(
        prompts::JUDGE,
        &[
            ("query_text", &query.render()),
            ("final_text", final_text),
            ("reasoning_text", reasoning_text),
            ("tool_trace", &render_tool_trace(trajectories)),
            ("diag_text", &render_diagnostics(diagnostics)),
        ],
    );
    let tag = roles.judge();
    let mut messages = vec![ChatMessage::system(system), ChatMessage::user(prompts::JUDGE_REQUEST)];
    let mut verdict = None;
    for attempt in 0..2 {
        let response = provider.complete(&tag, &messages, &[], sampling)?;
        verdict = parse_verdict(&response.text);
        if verdict.is_some() || attempt == 1 {
            break;
        }
        messages.push(ChatMessage::assistant(response.text));
        messages.push(ChatMessage::user(prompts::JUDGE_REASK));
    }
    let (success, confidence, justification) = match verdict {
        Some(v) => (v.decision == Decision::Success, v.confidence, v.justification),
        None => (false, 0.0, "judge parse failure".to_string()),
    };
    Ok(Outcome {
        success,
        validity: ValiditySignals { format_compliant: true, numeric_match: None, step_count, confidence, justification },
    })
}

// ---------------------------------------------------------------------------
// One full variant

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub plan: Option<Plan>,
    pub segments: Vec<SegmentResult>,
    /// All segment steps in order, with the final text and diagnostics.
    pub trajectory: Trajectory,
    pub outcome: Outcome,
    /// Set when a provider failure stopped the variant before judging.
    pub aborted: Option<String>,
}

impl VariantRun {
    pub fn segment_outcomes(&self) -> Vec<bool> {
        self.segments.iter().map(|s| s.success).collect()
    }

    pub fn segments_succeeded(&self) -> bool {
        !self.segments.is_empty() && all_segments_success(&self.segment_outcomes())
    }
}

fn failed_outcome(step_count: usize, justification: String) -> Outcome {
    Outcome {
        success: false,
        validity: ValiditySignals {
            format_compliant: false,
            numeric_match: None,
            step_count,
            confidence: 0.0,
            justification,
        },
    }
}

/// Plan, execute, synthesize and judge one variant against its own
/// workspace. Provider failures abort the variant but keep whatever
/// trajectory was produced.
pub fn run_variant(
    agents: &Agents<'_>,
    query: &Query,
    context: &StrategyContext,
    variant: &VariantConfig,
    workspace: SimulatedWorkspace,
) -> VariantRun {
    let roles = Roles::for_variant(variant.index);
    let mut run = VariantRun {
        plan: None,
        segments: Vec::new(),
        trajectory: Trajectory::default(),
        outcome: failed_outcome(0, String::new()),
        aborted: None,
    };

    let (plan, mut messages) =
        match orchestrate(agents.provider, &roles, query, context, variant, agents.config.n_executors_max) {
            Ok(p) => p,
            Err(e) => {
                run.aborted = Some(format!("orchestrator: {e}"));
                run.outcome = failed_outcome(0, format!("aborted: {e}"));
                return run;
            }
        };
    let workspace = Mutex::new(workspace);
    run.segments = execute_plan(agents, &roles, variant, &workspace, &plan.subgoals);
    run.plan = Some(plan);
    for s in &run.segments {
        run.trajectory.extend_steps(&s.trajectory);
    }
    let step_count = run.trajectory.steps.len();

    messages.push(ChatMessage::user(format!("{}\n{}", segment_report(&run.segments), prompts::SYNTHESIS_REQUEST)));
    let synthesis = match agents.provider.complete(&roles.orchestrator(), &messages, &[], variant.sampling()) {
        Ok(r) if r.finish != FinishReason::Error => r,
        Ok(r) => {
            run.aborted = Some(format!("orchestrator synthesis: provider error: {}", r.text));
            run.outcome = failed_outcome(step_count, "aborted during synthesis".into());
            return run;
        }
        Err(e) => {
            run.aborted = Some(format!("orchestrator synthesis: {e}"));
            run.outcome = failed_outcome(step_count, format!("aborted: {e}"));
            return run;
        }
    };
    let final_text = synthesis.text;
    let reasoning_text = match final_text.find("<Diag>") {
        Some(idx) => final_text[..idx].trim().to_string(),
        None => final_text.trim().to_string(),
    };
    run.trajectory.diagnostics = parse_diagnostics(&final_text);
    run.trajectory.final_text = final_text;
    run.trajectory.reasoning_text = reasoning_text;

    let segment_trajectories: Vec<&Trajectory> = run.segments.iter().map(|s| &s.trajectory).collect();
    match judge(
        agents.provider,
        &roles,
        query,
        &segment_trajectories,
        &run.trajectory.final_text,
        &run.trajectory.reasoning_text,
        run.trajectory.diagnostics.as_ref(),
        variant.sampling(),
    ) {
        Ok(outcome) => run.outcome = outcome,
        Err(e) => {
            run.aborted = Some(format!("judge: {e}"));
            run.outcome = failed_outcome(step_count, format!("aborted: {e}"));
        }
    }
    run
}
