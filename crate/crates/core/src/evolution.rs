//! Experience distillation after an exploration: one item from the selected
//! candidate, up to four from a contrastive pass over every candidate, and
//! consolidation into the bank.

use serde::Deserialize;
use serde_json::Value;

use crate::embedding::{EmbeddingVector, Encoder};
use crate::error::MemoryError;
use crate::exploration::CandidateSolution;
use crate::memory::{CanonicalKey, MemoryBank, MemoryItem, PatternType};
use crate::model::Query;
use crate::pipeline::{fenced_block, json_span};
use crate::prompts;
use crate::provider::{ChatMessage, LanguageModel, Sampling};

pub const EXTRACTOR_ROLE: &str = "extractor";
pub const DIGEST_PAYLOAD_CHARS: usize = 400;
pub const MAX_CONTRASTIVE_ITEMS: usize = 4;

/// One trajectory block of an extraction request.
#[derive(Debug, Clone, PartialEq)]
pub struct DigestBlock {
    pub variant: usize,
    pub success: bool,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionRequest {
    pub query_text: String,
    pub blocks: Vec<DigestBlock>,
}

impl ExtractionRequest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            let label = if b.success { "SUCCESS" } else { "FAILURE" };
            out.push_str(&format!("=== Trajectory from variant {} [{label}] ===\n{}\n", b.variant, b.digest));
        }
        out
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        let system = prompts::fill(
            prompts::EXTRACTOR,
            &[("query", &self.query_text), ("trajectories_block", &self.render())],
        );
        vec![ChatMessage::system(system), ChatMessage::user("Return the JSON now.")]
    }
}

/// Text digest of a candidate: each step's tool, arguments and observation.
/// Ok payloads are cut to [`DIGEST_PAYLOAD_CHARS`]; error messages are kept
/// whole.
pub fn digest(candidate: &CandidateSolution) -> String {
    let t = candidate.trajectory();
    let mut out = String::from("Steps:\n");
    if t.steps.is_empty() {
        out.push_str("  (no tool calls)\n");
    }
    for (i, step) in t.steps.iter().enumerate() {
        let payload = if step.observation.is_error() {
            step.observation.payload.clone()
        } else {
            let cut: String = step.observation.payload.chars().take(DIGEST_PAYLOAD_CHARS).collect();
            if cut.len() < step.observation.payload.len() { format!("{cut}…") } else { cut }
        };
        out.push_str(&format!(
            "  {}. [executor {}] {}({}) -> {}: {}\n",
            i + 1,
            step.action.issued_by,
            step.action.tool_name,
            step.action.arguments_text(),
            step.observation.status,
            payload
        ));
    }
    if let Some(reason) = &candidate.run.aborted {
        out.push_str(&format!("Aborted: {reason}\n"));
    }
    if let Some(d) = &t.diagnostics {
        out.push_str(&format!("Failure reason: {}\n", d.failure_reason));
    }
    match &candidate.parsed_answer {
        Some(a) => out.push_str(&format!("Final answer: {a}\n")),
        None => out.push_str("Final answer: (none)\n"),
    }
    out
}

pub fn request_for(query: &Query, candidates: &[&CandidateSolution]) -> ExtractionRequest {
    ExtractionRequest {
        query_text: query.render(),
        blocks: candidates
            .iter()
            .map(|c| DigestBlock { variant: c.index(), success: c.success, digest: digest(c) })
            .collect(),
    }
}

#[derive(Deserialize)]
struct RawItem {
    #[serde(default)]
    title: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    content: String,
    #[serde(default)]
    pattern_type: String,
    #[serde(default)]
    action_items: Vec<String>,
    #[serde(default)]
    detection_cues: Vec<String>,
    #[serde(default)]
    failure_cause: Option<String>,
}

/// Parses the extractor's `{"memories": [...]}` object (bare or fenced). A
/// bare array is also accepted. Entries that are not objects are skipped.
fn parse_memories(text: &str) -> Option<Vec<RawItem>> {
    let candidate = fenced_block(text, &["json"]).unwrap_or(text);
    let value: Value = serde_json::from_str(json_span(candidate)?).ok()?;
    let array = match value {
        Value::Object(mut map) => match map.remove("memories")? {
            Value::Array(a) => a,
            _ => return None,
        },
        Value::Array(a) => a,
        _ => return None,
    };
    Some(array.into_iter().filter_map(|v| serde_json::from_value(v).ok()).collect())
}

fn build_item(raw: RawItem, query: &Query, forced: Option<PatternType>) -> Result<MemoryItem, MemoryError> {
    let declared = raw.pattern_type.parse::<PatternType>().map_err(MemoryError::InvalidItem);
    let pattern_type = match (forced, declared) {
        (Some(p), _) => p,
        (None, Ok(p)) => p,
        (None, Err(e)) => return Err(e),
    };
    let mut failure_cause = raw.failure_cause.filter(|c| {
        let c = c.trim();
        !c.is_empty() && !c.eq_ignore_ascii_case("none")
    });
    if forced == Some(PatternType::AnalysisPattern) {
        failure_cause = None;
    }
    let item = MemoryItem {
        source_id: query.id.clone(),
        pattern_type,
        title: raw.title.trim().to_string(),
        description: raw.description,
        content: raw.content,
        action_items: raw.action_items,
        detection_cues: raw.detection_cues,
        failure_cause,
        embedding: EmbeddingVector::zeros(0),
        sequence: 0,
    };
    item.validate()?;
    Ok(item)
}

fn finish(raws: Vec<RawItem>, query: &Query, forced: Option<PatternType>, encoder: &Encoder) -> Vec<MemoryItem> {
    let mut out = Vec::new();
    for raw in raws {
        let built = build_item(raw, query, forced).and_then(|mut item| {
            item.embed_with(encoder)?;
            Ok(item)
        });
        match built {
            Ok(item) => out.push(item),
            Err(e) => tracing::info!(query = %query.id, error = %e, "dropping extracted item"),
        }
    }
    out
}

/// Extracts at most one item from the selected candidate. Its pattern type
/// follows the candidate's success label regardless of what the model says.
pub fn extract_single(
    provider: &dyn LanguageModel,
    encoder: &Encoder,
    query: &Query,
    best: &CandidateSolution,
    sampling: Sampling,
) -> Vec<MemoryItem> {
    let mut messages = request_for(query, &[best]).messages();
    let mut parsed = None;
    for attempt in 0..2 {
        let text = match provider.complete(EXTRACTOR_ROLE, &messages, &[], sampling) {
            Ok(r) => r.text,
            Err(e) => {
                tracing::warn!(query = %query.id, error = %e, "extractor call failed");
                return Vec::new();
            }
        };
        parsed = parse_memories(&text);
        if parsed.is_some() || attempt == 1 {
            break;
        }
        messages.push(ChatMessage::assistant(text));
        messages.push(ChatMessage::user(prompts::EXTRACTOR_REASK));
    }
    let Some(raws) = parsed else {
        tracing::warn!(query = %query.id, "extractor output was not valid JSON after a re-ask");
        return Vec::new();
    };
    let forced = if best.success { PatternType::AnalysisPattern } else { PatternType::ErrorAttribution };
    let mut items = finish(raws.into_iter().take(1).collect(), query, Some(forced), encoder);
    items.truncate(1);
    items
}

/// One pass over every candidate with its success label. Keeps at most
/// [`MAX_CONTRASTIVE_ITEMS`] and drops items that break the schema.
pub fn distill_contrastive(
    provider: &dyn LanguageModel,
    encoder: &Encoder,
    query: &Query,
    candidates: &[CandidateSolution],
    sampling: Sampling,
) -> Vec<MemoryItem> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let refs: Vec<&CandidateSolution> = candidates.iter().collect();
    let messages = request_for(query, &refs).messages();
    let text = match provider.complete(EXTRACTOR_ROLE, &messages, &[], sampling) {
        Ok(r) => r.text,
        Err(e) => {
            tracing::warn!(query = %query.id, error = %e, "contrastive extractor call failed");
            return Vec::new();
        }
    };
    let Some(mut raws) = parse_memories(&text) else {
        tracing::warn!(query = %query.id, "contrastive extractor output was not valid JSON");
        return Vec::new();
    };
    raws.truncate(MAX_CONTRASTIVE_ITEMS);
    finish(raws, query, None, encoder)
}

/// Inserts the union of both extraction passes; duplicates collapse on their
/// canonical key. Returns the inserted keys.
pub fn consolidate(
    bank: &mut MemoryBank,
    single: Vec<MemoryItem>,
    contrastive: Vec<MemoryItem>,
) -> Result<Vec<CanonicalKey>, MemoryError> {
    let mut all = single;
    all.extend(contrastive);
    bank.insert(all)
}
