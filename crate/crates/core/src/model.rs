//! Shared data types for queries, tool actions, observations and trajectories,
//! plus the parsers for the `<Answer>` and `<Diag>` conventions the role
//! prompts rely on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::LogError;

/// Tool arguments. A `BTreeMap` keeps the serialized form canonical.
pub type Arguments = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub choices: Vec<Choice>,
    /// Harness-only. Never rendered into a judge prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_tool_sequence: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_ref: Option<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            choices: Vec::new(),
            gold_answer: None,
            gold_tool_sequence: None,
            fixture_ref: None,
        }
    }

    /// Checks the per-record invariants. Id uniqueness across a dataset is
    /// checked by the dataset loader.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("query id is empty".into());
        }
        let mut labels = BTreeSet::new();
        for choice in &self.choices {
            if !labels.insert(choice.label.as_str()) {
                return Err(format!("query {}: duplicate choice label {:?}", self.id, choice.label));
            }
        }
        if let Some(gold) = &self.gold_answer {
            if !self.choices.is_empty() && !labels.contains(gold.as_str()) {
                return Err(format!("query {}: gold answer {gold:?} is not a choice label", self.id));
            }
        }
        Ok(())
    }

    /// Multiple-choice queries compare answers case-sensitively on labels.
    pub fn answer_mode(&self) -> AnswerMode {
        if self.choices.is_empty() {
            AnswerMode::FreeText
        } else {
            AnswerMode::Label
        }
    }

    /// Question text followed by one line per choice, as shown to agents.
    pub fn render(&self) -> String {
        let mut out = self.text.clone();
        if !self.choices.is_empty() {
            out.push_str("\nChoices:");
            for choice in &self.choices {
                out.push_str(&format!("\n{}. {}", choice.label, choice.body));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentState {
    pub workspace_root: String,
    pub tool_names: BTreeSet<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolAction {
    pub tool_name: String,
    #[serde(default)]
    pub arguments: Arguments,
    /// 1-based executor index.
    pub issued_by: usize,
}

impl ToolAction {
    pub fn new(tool_name: impl Into<String>, arguments: Arguments, issued_by: usize) -> Self {
        Self { tool_name: tool_name.into(), arguments, issued_by }
    }

    /// Canonical JSON text of the arguments (keys sorted).
    pub fn arguments_text(&self) -> String {
        serde_json::to_string(&self.arguments).expect("arguments are plain JSON")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub status: Status,
    pub payload: String,
    pub tool_name: String,
}

impl Observation {
    pub fn ok(tool_name: impl Into<String>, payload: impl Into<String>) -> Self {
        Self { status: Status::Ok, payload: payload.into(), tool_name: tool_name.into() }
    }

    /// An empty message is replaced so error payloads always carry a diagnostic.
    pub fn error(tool_name: impl Into<String>, message: impl Into<String>) -> Self {
        let mut payload = message.into();
        if payload.trim().is_empty() {
            payload = "unspecified tool error".into();
        }
        Self { status: Status::Error, payload, tool_name: tool_name.into() }
    }

    pub fn is_error(&self) -> bool {
        self.status == Status::Error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: ToolAction,
    pub observation: Observation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub tool_summary: Vec<String>,
    pub failure_reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_text: String,
    pub reasoning_text: String,
    pub diagnostics: Option<Diagnostics>,
}

impl Trajectory {
    pub fn push(&mut self, action: ToolAction, observation: Observation) {
        self.steps.push(Step { action, observation });
    }

    /// Appends another trajectory's steps. Text fields of `self` are kept.
    pub fn extend_steps(&mut self, other: &Trajectory) {
        self.steps.extend(other.steps.iter().cloned());
    }

    pub fn error_count(&self) -> usize {
        self.steps.iter().filter(|s| s.observation.is_error()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValiditySignals {
    pub format_compliant: bool,
    pub numeric_match: Option<bool>,
    pub step_count: usize,
    /// Judge confidence, always within [0, 1].
    pub confidence: f64,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub validity: ValiditySignals,
}

/// How predicted answers are compared against gold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerMode {
    /// Choice labels: case-sensitive.
    Label,
    /// Free text: case-insensitive.
    FreeText,
}

/// Strips surrounding whitespace and one trailing period.
pub fn normalize_answer(answer: &str) -> String {
    let trimmed = answer.trim();
    trimmed.strip_suffix('.').unwrap_or(trimmed).trim_end().to_string()
}

pub fn answers_match(predicted: &str, gold: &str, mode: AnswerMode) -> bool {
    let (p, g) = (normalize_answer(predicted), normalize_answer(gold));
    match mode {
        AnswerMode::Label => p == g,
        AnswerMode::FreeText => p.to_lowercase() == g.to_lowercase(),
    }
}

const ANSWER_OPEN: &str = "<Answer>";
const ANSWER_CLOSE: &str = "</Answer>";

/// Reads the final answer from agent output.
///
/// The last well-formed `<Answer>…</Answer>` tag wins and its innermost
/// content is returned trimmed. Without a tag, the remainder of the last line
/// starting with `ANSWER:` is used.
pub fn parse_answer(text: &str) -> Option<String> {
    let mut search_end = text.len();
    while let Some(close) = text[..search_end].rfind(ANSWER_CLOSE) {
        if let Some(open) = text[..close].rfind(ANSWER_OPEN) {
            let inner = text[open + ANSWER_OPEN.len()..close].trim();
            return Some(inner.to_string());
        }
        search_end = close;
    }
    text.lines()
        .rev()
        .find_map(|line| line.trim_start().strip_prefix("ANSWER:"))
        .map(str::trim)
        .filter(|rest| !rest.is_empty())
        .map(str::to_string)
}

/// Extracts the `<Diag>` block written at the end of an orchestrator turn.
pub fn parse_diagnostics(text: &str) -> Option<Diagnostics> {
    let open = text.rfind("<Diag>")?;
    let body_start = open + "<Diag>".len();
    let close = text[body_start..].find("</Diag>")? + body_start;
    let body = &text[body_start..close];

    let mut tool_summary = Vec::new();
    let mut failure_reason = None;
    let mut in_summary = false;
    for line in body.lines().map(str::trim) {
        if let Some(rest) = line.strip_prefix("Tool summary:") {
            in_summary = true;
            let rest = rest.trim();
            if !rest.is_empty() {
                tool_summary.push(strip_bullet(rest).to_string());
            }
        } else if let Some(rest) = line.strip_prefix("Failure reason:") {
            in_summary = false;
            let rest = rest.trim().trim_end_matches('.').trim();
            failure_reason = Some(if rest.is_empty() { "None".to_string() } else { rest.to_string() });
        } else if in_summary && is_bullet(line) {
            tool_summary.push(strip_bullet(line).to_string());
        }
    }
    Some(Diagnostics {
        tool_summary,
        failure_reason: failure_reason.unwrap_or_else(|| "None".to_string()),
    })
}

fn is_bullet(line: &str) -> bool {
    line.starts_with("- ") || line.starts_with("* ") || line.starts_with("• ")
}

fn strip_bullet(line: &str) -> &str {
    for marker in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(marker) {
            return rest.trim();
        }
    }
    line
}

/// Tool names of each step, in order, duplicates preserved.
pub fn tool_sequence(trajectory: &Trajectory) -> Vec<String> {
    trajectory.steps.iter().map(|s| s.action.tool_name.clone()).collect()
}

/// Like [`tool_sequence`] but dropping tools for which `exclude` returns true.
pub fn filtered_tool_sequence(trajectory: &Trajectory, exclude: impl Fn(&str) -> bool) -> Vec<String> {
    trajectory
        .steps
        .iter()
        .map(|s| s.action.tool_name.as_str())
        .filter(|name| !exclude(name))
        .map(str::to_string)
        .collect()
}

pub fn trajectory_length(trajectory: &Trajectory) -> usize {
    trajectory.steps.len()
}

// ---------------------------------------------------------------------------
// Trajectory log format

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    ToolCall,
    ToolResult,
    Diagnostics,
    FinalAnswer,
}

/// One line of a trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub step: usize,
    pub kind: RecordKind,
    pub executor: usize,
    pub payload: Value,
}

#[derive(Serialize, Deserialize)]
struct CallPayload {
    tool_name: String,
    arguments: Arguments,
}

#[derive(Serialize, Deserialize)]
struct FinalPayload {
    final_text: String,
    reasoning_text: String,
}

/// Flattens a trajectory into log records. Each tool step yields a call and a
/// result record; the final answer record is always last.
pub fn to_log_records(trajectory: &Trajectory) -> Vec<LogRecord> {
    let mut records = Vec::with_capacity(trajectory.steps.len() * 2 + 2);
    let mut step = 0;
    let mut next = || {
        step += 1;
        step
    };
    for s in &trajectory.steps {
        let call = CallPayload { tool_name: s.action.tool_name.clone(), arguments: s.action.arguments.clone() };
        records.push(LogRecord {
            step: next(),
            kind: RecordKind::ToolCall,
            executor: s.action.issued_by,
            payload: serde_json::to_value(call).expect("serializable"),
        });
        records.push(LogRecord {
            step: next(),
            kind: RecordKind::ToolResult,
            executor: s.action.issued_by,
            payload: serde_json::to_value(&s.observation).expect("serializable"),
        });
    }
    if let Some(diag) = &trajectory.diagnostics {
        records.push(LogRecord {
            step: next(),
            kind: RecordKind::Diagnostics,
            executor: 0,
            payload: serde_json::to_value(diag).expect("serializable"),
        });
    }
    let fin = FinalPayload {
        final_text: trajectory.final_text.clone(),
        reasoning_text: trajectory.reasoning_text.clone(),
    };
    records.push(LogRecord {
        step: next(),
        kind: RecordKind::FinalAnswer,
        executor: 0,
        payload: serde_json::to_value(fin).expect("serializable"),
    });
    records
}

/// Renders the line-delimited log, one record per line with a trailing newline.
pub fn render_log(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    for record in to_log_records(trajectory) {
        out.push_str(&serde_json::to_string(&record).expect("serializable"));
        out.push('\n');
    }
    out
}

/// Parses a log produced by [`render_log`].
pub fn parse_log(text: &str) -> Result<Trajectory, LogError> {
    let mut trajectory = Trajectory::default();
    let mut pending: Option<(usize, ToolAction)> = None;
    let mut expected_step = 1;
    let mut saw_final = false;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| LogError::Malformed { line: line_no, reason };
        let record: LogRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if record.step != expected_step {
            return Err(malformed(format!("expected step {expected_step}, found {}", record.step)));
        }
        expected_step += 1;
        if saw_final {
            return Err(malformed("record after final_answer".into()));
        }
        match record.kind {
            RecordKind::ToolCall => {
                if pending.is_some() {
                    return Err(malformed("tool_call without a matching tool_result".into()));
                }
                let call: CallPayload =
                    serde_json::from_value(record.payload).map_err(|e| malformed(e.to_string()))?;
                pending = Some((line_no, ToolAction::new(call.tool_name, call.arguments, record.executor)));
            }
            RecordKind::ToolResult => {
                let Some((_, action)) = pending.take() else {
                    return Err(malformed("tool_result without a preceding tool_call".into()));
                };
                let observation: Observation =
                    serde_json::from_value(record.payload).map_err(|e| malformed(e.to_string()))?;
                trajectory.push(action, observation);
            }
            RecordKind::Diagnostics => {
                let diag: Diagnostics =
                    serde_json::from_value(record.payload).map_err(|e| malformed(e.to_string()))?;
                trajectory.diagnostics = Some(diag);
            }
            RecordKind::FinalAnswer => {
                let fin: FinalPayload =
                    serde_json::from_value(record.payload).map_err(|e| malformed(e.to_string()))?;
                trajectory.final_text = fin.final_text;
                trajectory.reasoning_text = fin.reasoning_text;
                saw_final = true;
            }
        }
    }
    if let Some((line, _)) = pending {
        return Err(LogError::Malformed { line, reason: "tool_call without a matching tool_result".into() });
    }
    if !saw_final {
        return Err(LogError::MissingFinalAnswer);
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn step(tool: &str) -> Step {
        Step {
            action: ToolAction::new(tool, Arguments::new(), 1),
            observation: Observation::ok(tool, "done"),
        }
    }

    fn trajectory_of(tools: &[&str]) -> Trajectory {
        Trajectory { steps: tools.iter().map(|t| step(t)).collect(), ..Default::default() }
    }

    #[test]
    fn answer_tag_read() {
        assert_eq!(parse_answer("reasoning...<Answer>A</Answer>").as_deref(), Some("A"));
        assert_eq!(parse_answer("no tags here"), None);
    }

    #[test]
    fn last_answer_tag_wins() {
        let text = "<Answer>B</Answer> then I reconsidered <Answer>A</Answer>";
        // scan every well-formed tag in order and keep the last
        let mut found = Vec::new();
        let mut rest = text;
        while let Some(open) = rest.find("<Answer>") {
            let after = &rest[open + 8..];
            let close = after.find("</Answer>").unwrap();
            found.push(after[..close].to_string());
            rest = &after[close + 9..];
        }
        assert_eq!(found, vec!["B", "A"]);
        assert_eq!(parse_answer(text), found.last().cloned());
    }

    #[test]
    fn innermost_content_and_unclosed_tags() {
        assert_eq!(parse_answer("<Answer>x <Answer> C </Answer>").as_deref(), Some("C"));
        assert_eq!(parse_answer("<Answer>A</Answer> <Answer>B").as_deref(), Some("A"));
        assert_eq!(parse_answer("</Answer><Answer>").as_deref(), None);
    }

    #[test]
    fn answer_prefix_fallback() {
        let text = "step one\nANSWER: B\nmore\n  ANSWER:  0.75 K  \n";
        assert_eq!(parse_answer(text).as_deref(), Some("0.75 K"));
        assert_eq!(parse_answer("ANSWER:   \n"), None);
    }

    #[test]
    fn normalization_modes() {
        assert!(answers_match(" A. ", "A", AnswerMode::Label));
        assert!(!answers_match("a.", "A", AnswerMode::Label));
        assert!(answers_match("a.", "A", AnswerMode::FreeText));
    }

    #[test]
    fn diagnostics_from_q157_block() {
        let text = "final computation\n<Diag>\nTool summary:\n- write_todos: Created and updated 4-step todo list\n- ls: Listed 24 input sur_refl_b01 files\n- calc_batch_image_sum: Computed sums for all 24 turbidity images\n\nFailure reason: None\n</Diag>\n<Answer>A</Answer>";
        let diag = parse_diagnostics(text).unwrap();
        assert_eq!(diag.failure_reason, "None");
        assert_eq!(diag.tool_summary.len(), 3);
        assert_eq!(diag.tool_summary[1], "ls: Listed 24 input sur_refl_b01 files");
    }

    #[test]
    fn diagnostics_absent_or_malformed() {
        assert_eq!(parse_diagnostics("nothing"), None);
        assert_eq!(parse_diagnostics("<Diag> Tool summary: - a"), None);
        let diag = parse_diagnostics("<Diag>Tool summary:\n- ls\n</Diag>").unwrap();
        assert_eq!(diag.failure_reason, "None");
    }

    #[test]
    fn sequences_and_lengths() {
        let t = trajectory_of(&["ls", "glob", "difference"]);
        assert_eq!(tool_sequence(&t), vec!["ls", "glob", "difference"]);
        assert!(tool_sequence(&Trajectory::default()).is_empty());
        assert_eq!(trajectory_length(&Trajectory::default()), 0);

        let mut joined = t.clone();
        joined.extend_steps(&trajectory_of(&["a", "b"]));
        assert_eq!(trajectory_length(&joined), trajectory_length(&t) + 2);
    }

    #[test]
    fn q27_core_trace_after_filtering_bookkeeping() {
        let t = trajectory_of(&[
            "write_todos",
            "glob",
            "temperature_emissivity_separation",
            "temperature_emissivity_separation",
            "calculate_band_mean_by_condition",
            "calculate_band_mean_by_condition",
            "difference",
            "write_todos",
        ]);
        assert_eq!(trajectory_length(&t), 8);
        let core = filtered_tool_sequence(&t, |name| name == "write_todos");
        assert_eq!(
            core,
            vec![
                "glob",
                "temperature_emissivity_separation",
                "temperature_emissivity_separation",
                "calculate_band_mean_by_condition",
                "calculate_band_mean_by_condition",
                "difference",
            ]
        );
    }

    #[test]
    fn q34_call_counts() {
        let mut tools = Vec::new();
        tools.extend(std::iter::repeat("write_todos").take(2));
        tools.extend(std::iter::repeat("ls").take(2));
        tools.extend(std::iter::repeat("glob").take(7));
        tools.extend(std::iter::repeat("split_window").take(149));
        tools.extend(std::iter::repeat("calc_batch_image_mean_mean").take(6));
        let t = trajectory_of(&tools);
        assert_eq!(trajectory_length(&t), 166);
        let non_os = filtered_tool_sequence(&t, |n| matches!(n, "write_todos" | "ls" | "glob"));
        assert_eq!(non_os.len(), 155);
    }

    #[test]
    fn query_validation() {
        let mut q = Query::new("q1", "pick one");
        q.choices = vec![
            Choice { label: "A".into(), body: "x".into() },
            Choice { label: "B".into(), body: "y".into() },
        ];
        q.gold_answer = Some("A".into());
        assert!(q.validate().is_ok());
        q.gold_answer = Some("C".into());
        assert!(q.validate().is_err());
        q.choices.push(Choice { label: "A".into(), body: "dup".into() });
        assert!(q.validate().is_err());
        assert!(Query::new(" ", "t").validate().is_err());
    }

    #[test]
    fn error_observation_keeps_a_message() {
        let obs = Observation::error("ls", "  ");
        assert!(obs.is_error());
        assert!(!obs.payload.trim().is_empty());
    }

    #[test]
    fn log_parse_errors_name_the_line() {
        let t = trajectory_of(&["ls"]);
        let log = render_log(&t);
        let truncated: String = log.lines().take(1).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_log(&truncated), Err(LogError::Malformed { line: 1, .. })));
        let broken = log.replacen("\"tool_result\"", "\"tool_resu", 1);
        assert!(matches!(parse_log(&broken), Err(LogError::Malformed { line: 2, .. })));
        assert!(matches!(parse_log(""), Err(LogError::MissingFinalAnswer)));
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i64>().prop_map(|v| json!(v)),
            (-1.0e6f64..1.0e6).prop_map(|v| json!(v)),
            "[a-z0-9_/.]{0,12}".prop_map(|s| json!(s)),
            any::<bool>().prop_map(|b| json!(b)),
            prop::collection::vec("[a-z/._0-9]{1,10}", 0..4).prop_map(|v| json!(v)),
        ]
    }

    fn arb_trajectory() -> impl Strategy<Value = Trajectory> {
        let step = (
            "[a-z_]{1,12}",
            prop::collection::btree_map("[a-z_]{1,8}", arb_value(), 0..4),
            1usize..4,
            any::<bool>(),
            "\\PC{0,40}",
        )
            .prop_map(|(tool, args, exec, ok, payload)| Step {
                observation: if ok { Observation::ok(&tool, payload) } else { Observation::error(&tool, payload) },
                action: ToolAction::new(tool, args, exec),
            });
        (
            prop::collection::vec(step, 0..6),
            "\\PC{0,60}",
            "\\PC{0,60}",
            prop::option::of((prop::collection::vec("[a-z :]{1,20}", 0..3), "[A-Za-z ]{1,20}")),
        )
            .prop_map(|(steps, final_text, reasoning_text, diag)| Trajectory {
                steps,
                final_text,
                reasoning_text,
                diagnostics: diag.map(|(tool_summary, failure_reason)| Diagnostics { tool_summary, failure_reason }),
            })
    }

    proptest! {
        #[test]
        fn answer_tag_wrap_round_trips(x in "[^<>\\s][^<>]{0,20}[^<>\\s]|[^<>\\s]") {
            prop_assert_eq!(parse_answer(&format!("<Answer>{x}</Answer>")), Some(x));
        }

        #[test]
        fn log_round_trips(t in arb_trajectory()) {
            let text = render_log(&t);
            let parsed = parse_log(&text).unwrap();
            prop_assert_eq!(&parsed, &t);
            prop_assert_eq!(render_log(&parsed), text);
            prop_assert_eq!(tool_sequence(&t).len(), trajectory_length(&t));
        }
    }
}
