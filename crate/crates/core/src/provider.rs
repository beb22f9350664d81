//! Language-model backends.
//!
//! [`ScriptedProvider`] replays per-role response queues and is what every
//! offline test and fixture run uses. [`OpenAiCompatible`] speaks the
//! chat-completions and embeddings JSON wire format over HTTP.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::embedding::EmbeddingVector;
use crate::error::ProviderError;
use crate::model::Arguments;
use crate::tools::ToolSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub tool_name: String,
    #[serde(default)]
    pub arguments: Arguments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_result_for: Option<String>,
}

impl ChatMessage {
    fn plain(role: ChatRole, content: impl Into<String>) -> Self {
        Self { role, content: content.into(), tool_calls: Vec::new(), tool_result_for: None }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(ChatRole::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(ChatRole::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(ChatRole::Assistant, content)
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self { tool_result_for: Some(call_id.into()), ..Self::plain(ChatRole::Tool, content) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    ToolCalls,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
    pub tool_calls: Vec<ToolCall>,
    pub finish: FinishReason,
}

impl ProviderResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), tool_calls: Vec::new(), finish: FinishReason::Stop }
    }

    pub fn calls(tool_calls: Vec<ToolCall>) -> Self {
        let finish = if tool_calls.is_empty() { FinishReason::Stop } else { FinishReason::ToolCalls };
        Self { text: String::new(), tool_calls, finish }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub seed: u64,
    pub temperature: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { seed: 0, temperature: 0.0 }
    }
}

pub trait LanguageModel: Send + Sync {
    /// `role_tag` names the calling role (for example `variant-1/executor-2`).
    /// Remote backends ignore it; the scripted backend routes on it.
    fn complete(
        &self,
        role_tag: &str,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        sampling: Sampling,
    ) -> Result<ProviderResponse, ProviderError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), ProviderError> {
    match messages.first() {
        None => Err(ProviderError::InvalidRequest("messages must not be empty".into())),
        Some(m) if m.role != ChatRole::System => {
            Err(ProviderError::InvalidRequest("first message must have role=system".into()))
        }
        Some(_) => {
            if let Some(m) = messages.iter().find(|m| m.role == ChatRole::Tool && m.tool_result_for.is_none()) {
                return Err(ProviderError::InvalidRequest(format!(
                    "tool message without tool_result_for: {:?}",
                    m.content
                )));
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Scripted provider

pub const REFUSAL_TEXT: &str = "I'm sorry, I can't help with that request.";

/// Response queues keyed by role tag. Turn indices are the queue positions,
/// so they are contiguous from 0 by construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    pub entries: BTreeMap<String, Vec<ProviderResponse>>,
    pub strict: bool,
}

#[derive(Deserialize)]
struct ScriptFile {
    #[serde(default = "yes")]
    strict: bool,
    roles: BTreeMap<String, Vec<ScriptEntry>>,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptEntry {
    #[serde(default)]
    text: String,
    #[serde(default)]
    tool_calls: Vec<ScriptCall>,
    #[serde(default)]
    finish: Option<FinishReason>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptCall {
    #[serde(default)]
    id: Option<String>,
    tool_name: String,
    #[serde(default)]
    arguments: Arguments,
}

impl Script {
    pub fn new(strict: bool) -> Self {
        Self { entries: BTreeMap::new(), strict }
    }

    pub fn push(&mut self, role_tag: impl Into<String>, response: ProviderResponse) -> &mut Self {
        self.entries.entry(role_tag.into()).or_default().push(response);
        self
    }

    /// Parses the JSON fixture form:
    /// `{"strict": true, "roles": {"<role_tag>": [{"text": …, "tool_calls": […], "finish": …}]}}`.
    /// `finish` defaults from the presence of tool calls; call ids default to
    /// `<role_tag>#<turn>.<n>`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: ScriptFile = serde_json::from_str(text)?;
        let mut script = Script::new(file.strict);
        for (role, entries) in file.roles {
            for (turn, entry) in entries.into_iter().enumerate() {
                let tool_calls: Vec<ToolCall> = entry
                    .tool_calls
                    .into_iter()
                    .enumerate()
                    .map(|(n, c)| ToolCall {
                        id: c.id.unwrap_or_else(|| format!("{role}#{turn}.{n}")),
                        tool_name: c.tool_name,
                        arguments: c.arguments,
                    })
                    .collect();
                let finish = entry.finish.unwrap_or(if tool_calls.is_empty() {
                    FinishReason::Stop
                } else {
                    FinishReason::ToolCalls
                });
                script.push(role.clone(), ProviderResponse { text: entry.text, tool_calls, finish });
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// A request observed by the scripted provider.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedRequest {
    pub role_tag: String,
    pub turn: usize,
    pub messages: Vec<ChatMessage>,
}

pub struct ScriptedProvider {
    script: Script,
    turns: Mutex<HashMap<String, usize>>,
    captured: Option<Mutex<Vec<CapturedRequest>>>,
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        Self { script, turns: Mutex::new(HashMap::new()), captured: None }
    }

    /// Records every request so tests can inspect what each role was sent.
    pub fn capturing(script: Script) -> Self {
        Self { captured: Some(Mutex::new(Vec::new())), ..Self::new(script) }
    }

    pub fn captured(&self) -> Vec<CapturedRequest> {
        self.captured.as_ref().map(|c| c.lock().expect("capture lock").clone()).unwrap_or_default()
    }

    pub fn turn(&self, role_tag: &str) -> usize {
        self.turns.lock().expect("turn lock").get(role_tag).copied().unwrap_or(0)
    }
}

impl LanguageModel for ScriptedProvider {
    fn complete(
        &self,
        role_tag: &str,
        messages: &[ChatMessage],
        _tools: &[ToolSpec],
        _sampling: Sampling,
    ) -> Result<ProviderResponse, ProviderError> {
        check_messages(messages)?;
        let turn = {
            let mut turns = self.turns.lock().expect("turn lock");
            let counter = turns.entry(role_tag.to_string()).or_insert(0);
            let turn = *counter;
            *counter += 1;
            turn
        };
        if let Some(captured) = &self.captured {
            captured.lock().expect("capture lock").push(CapturedRequest {
                role_tag: role_tag.to_string(),
                turn,
                messages: messages.to_vec(),
            });
        }
        match self.script.entries.get(role_tag).and_then(|q| q.get(turn)) {
            Some(response) => Ok(response.clone()),
            None if self.script.strict => {
                Err(ProviderError::ScriptExhausted { role_tag: role_tag.to_string(), turn })
            }
            None => Ok(ProviderResponse::text(REFUSAL_TEXT)),
        }
    }

    fn embed(&self, _text: &str) -> Result<EmbeddingVector, ProviderError> {
        Err(ProviderError::Unsupported("embeddings"))
    }
}

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP provider

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Delay before each retry; its length is the retry budget.
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { backoff: vec![Duration::from_millis(500), Duration::from_secs(2)] }
    }
}

#[derive(Clone)]
pub struct RemoteConfig {
    /// Base URL, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    pub model: String,
    pub embedding_model: String,
    pub embedding_dimension: usize,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl fmt::Debug for RemoteConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteConfig")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("embedding_model", &self.embedding_model)
            .field("embedding_dimension", &self.embedding_dimension)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("retry", &self.retry)
            .finish()
    }
}

pub struct OpenAiCompatible {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl fmt::Debug for OpenAiCompatible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiCompatible").field("config", &self.config).finish()
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<Value>,
    tools: Vec<Value>,
    temperature: f64,
    seed: u64,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a str,
}

fn wire_message(message: &ChatMessage) -> Value {
    let mut obj = serde_json::Map::new();
    obj.insert("role".into(), serde_json::to_value(message.role).expect("role"));
    obj.insert("content".into(), Value::String(message.content.clone()));
    if !message.tool_calls.is_empty() {
        let calls: Vec<Value> = message
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": {
                        "name": c.tool_name,
                        "arguments": serde_json::to_string(&c.arguments).expect("arguments"),
                    }
                })
            })
            .collect();
        obj.insert("tool_calls".into(), Value::Array(calls));
    }
    if let Some(id) = &message.tool_result_for {
        obj.insert("tool_call_id".into(), Value::String(id.clone()));
    }
    Value::Object(obj)
}

fn wire_tool(spec: &ToolSpec) -> Value {
    json!({
        "type": "function",
        "function": {
            "name": spec.name,
            "description": spec.description,
            "parameters": spec.json_schema(),
        }
    })
}

/// Serializes a chat-completions request body. Top-level keys are always
/// `model, messages, tools, temperature, seed` in that order and nested maps
/// are key-sorted, so identical inputs give identical bytes.
pub fn chat_request_body(model: &str, messages: &[ChatMessage], tools: &[ToolSpec], sampling: Sampling) -> String {
    let request = ChatRequest {
        model,
        messages: messages.iter().map(wire_message).collect(),
        tools: tools.iter().map(wire_tool).collect(),
        temperature: sampling.temperature,
        seed: sampling.seed,
    };
    serde_json::to_string(&request).expect("request serializes")
}

/// Parses the first choice of a chat-completions response body.
pub fn parse_chat_response(body: &str) -> Result<ProviderResponse, ProviderError> {
    let parse_err = |reason: &str| ProviderError::Parse { reason: reason.to_string(), body: body.to_string() };
    let value: Value = serde_json::from_str(body).map_err(|e| parse_err(&e.to_string()))?;
    let choice = value.get("choices").and_then(|c| c.get(0)).ok_or_else(|| parse_err("missing choices[0]"))?;
    let message = choice.get("message").ok_or_else(|| parse_err("missing message"))?;
    let text = message.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
    let mut tool_calls = Vec::new();
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for call in calls {
            let id = call.get("id").and_then(Value::as_str).ok_or_else(|| parse_err("tool call without id"))?;
            let function = call.get("function").ok_or_else(|| parse_err("tool call without function"))?;
            let name = function.get("name").and_then(Value::as_str).ok_or_else(|| parse_err("tool call without name"))?;
            let arguments = match function.get("arguments") {
                None | Some(Value::Null) => Arguments::new(),
                Some(Value::String(s)) if s.trim().is_empty() => Arguments::new(),
                Some(Value::String(s)) => serde_json::from_str(s).map_err(|e| parse_err(&format!("tool arguments: {e}")))?,
                Some(Value::Object(map)) => map.clone().into_iter().collect(),
                Some(_) => return Err(parse_err("tool arguments must be an object")),
            };
            tool_calls.push(ToolCall { id: id.to_string(), tool_name: name.to_string(), arguments });
        }
    }
    let finish = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("tool_calls") | Some("function_call") => FinishReason::ToolCalls,
        Some("length") => FinishReason::Length,
        Some("stop") | None => {
            if tool_calls.is_empty() {
                FinishReason::Stop
            } else {
                FinishReason::ToolCalls
            }
        }
        Some(_) => FinishReason::Error,
    };
    if finish == FinishReason::ToolCalls && tool_calls.is_empty() {
        return Err(parse_err("finish_reason=tool_calls without tool calls"));
    }
    Ok(ProviderResponse { text, tool_calls, finish })
}

pub fn parse_embedding_response(body: &str) -> Result<Vec<f64>, ProviderError> {
    let parse_err = |reason: &str| ProviderError::Parse { reason: reason.to_string(), body: body.to_string() };
    let value: Value = serde_json::from_str(body).map_err(|e| parse_err(&e.to_string()))?;
    let values = value
        .get("data")
        .and_then(|d| d.get(0))
        .and_then(|d| d.get("embedding"))
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("missing data[0].embedding"))?;
    values.iter().map(|v| v.as_f64().ok_or_else(|| parse_err("non-numeric embedding value"))).collect()
}

enum Attempt {
    Done(String),
    Transient(String),
    Fatal(String),
}

impl OpenAiCompatible {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Transport { attempts: 0, message: e.to_string() })?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn attempt(&self, url: &str, body: &str) -> Attempt {
        let mut request = self
            .client
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        match request.send() {
            Err(e) => Attempt::Transient(e.to_string()),
            Ok(response) => {
                let status = response.status();
                let text = match response.text() {
                    Ok(t) => t,
                    Err(e) => return Attempt::Transient(e.to_string()),
                };
                if status.is_success() {
                    Attempt::Done(text)
                } else if status.is_server_error() || status.as_u16() == 429 {
                    Attempt::Transient(format!("HTTP {status}: {text}"))
                } else {
                    Attempt::Fatal(format!("HTTP {status}: {text}"))
                }
            }
        }
    }

    /// POSTs `body`, retrying transient failures with the configured backoff.
    fn post(&self, path: &str, body: &str) -> Result<String, ProviderError> {
        let url = self.url(path);
        let mut attempts = 0;
        let mut delays = self.config.retry.backoff.iter();
        loop {
            attempts += 1;
            match self.attempt(&url, body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(message) => return Err(ProviderError::Transport { attempts, message }),
                Attempt::Transient(message) => match delays.next() {
                    Some(delay) => {
                        tracing::warn!(attempt = attempts, %message, "transient provider failure, retrying");
                        std::thread::sleep(*delay);
                    }
                    None => return Err(ProviderError::Transport { attempts, message }),
                },
            }
        }
    }
}

impl LanguageModel for OpenAiCompatible {
    fn complete(
        &self,
        _role_tag: &str,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        sampling: Sampling,
    ) -> Result<ProviderResponse, ProviderError> {
        check_messages(messages)?;
        let body = chat_request_body(&self.config.model, messages, tools, sampling);
        let response = self.post("chat/completions", &body)?;
        parse_chat_response(&response)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Ok(EmbeddingVector::zeros(self.config.embedding_dimension));
        }
        let body = serde_json::to_string(&EmbeddingRequest { model: &self.config.embedding_model, input: text })
            .expect("request serializes");
        let response = self.post("embeddings", &body)?;
        Ok(EmbeddingVector::normalized(parse_embedding_response(&response)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::{ParamKind, ParamSpec, ToolCategory};

    fn system_and_user() -> Vec<ChatMessage> {
        vec![ChatMessage::system("sys"), ChatMessage::user("hi")]
    }

    #[test]
    fn scripted_turns_advance_per_role() {
        let mut script = Script::new(true);
        script.push("judge", ProviderResponse::text("first")).push("judge", ProviderResponse::text("second"));
        let provider = ScriptedProvider::new(script);
        let msgs = system_and_user();
        assert_eq!(provider.complete("judge", &msgs, &[], Sampling::default()).unwrap().text, "first");
        assert_eq!(provider.turn("judge"), 1);
        assert_eq!(provider.complete("judge", &msgs, &[], Sampling::default()).unwrap().text, "second");
        let err = provider.complete("judge", &msgs, &[], Sampling::default()).unwrap_err();
        assert!(matches!(err, ProviderError::ScriptExhausted { ref role_tag, turn: 2 } if role_tag == "judge"));
    }

    #[test]
    fn non_strict_scripts_fall_back_to_refusal() {
        let provider = ScriptedProvider::new(Script::new(false));
        let r = provider.complete("anyone", &system_and_user(), &[], Sampling::default()).unwrap();
        assert_eq!(r.text, REFUSAL_TEXT);
        assert_eq!(r.finish, FinishReason::Stop);
    }

    #[test]
    fn requests_must_start_with_system() {
        let provider = ScriptedProvider::new(Script::new(false));
        assert!(provider.complete("x", &[], &[], Sampling::default()).is_err());
        assert!(provider.complete("x", &[ChatMessage::user("u")], &[], Sampling::default()).is_err());
    }

    #[test]
    fn script_json_defaults() {
        let script = Script::from_json(
            r#"{"roles": {"variant-1/executor-1": [
                {"tool_calls": [{"tool_name": "ls", "arguments": {"path": "/d"}}]},
                {"text": "done"},
                {"text": "boom", "finish": "error"}
            ]}}"#,
        )
        .unwrap();
        assert!(script.strict);
        let q = &script.entries["variant-1/executor-1"];
        assert_eq!(q[0].finish, FinishReason::ToolCalls);
        assert_eq!(q[0].tool_calls[0].id, "variant-1/executor-1#0.0");
        assert_eq!(q[1].finish, FinishReason::Stop);
        assert_eq!(q[2].finish, FinishReason::Error);
    }

    #[test]
    fn scripted_runs_are_deterministic() {
        let script = Script::from_json(r#"{"roles": {"a": [{"text": "x"}, {"text": "y"}]}}"#).unwrap();
        let run = || {
            let p = ScriptedProvider::new(script.clone());
            (0..2)
                .map(|_| serde_json::to_string(&p.complete("a", &system_and_user(), &[], Sampling::default()).unwrap()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    fn ls_spec() -> ToolSpec {
        ToolSpec {
            name: "ls".into(),
            description: "List a directory".into(),
            parameters: vec![ParamSpec::new("path", ParamKind::Path, true)],
            category: ToolCategory::Filesystem,
        }
    }

    #[test]
    fn request_body_golden() {
        let body = chat_request_body("gpt-test", &system_and_user(), &[ls_spec()], Sampling { seed: 7, temperature: 0.5 });
        let expected = concat!(
            r#"{"model":"gpt-test","messages":[{"content":"sys","role":"system"},{"content":"hi","role":"user"}],"#,
            r#""tools":[{"function":{"description":"List a directory","name":"ls","parameters":"#,
            r#"{"properties":{"path":{"type":"string"}},"required":["path"],"type":"object"}},"type":"function"}],"#,
            r#""temperature":0.5,"seed":7}"#
        );
        assert_eq!(body, expected);
        let value: Value = serde_json::from_str(&body).unwrap();
        let keys: Vec<&String> = value.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 5);
        for k in ["model", "messages", "tools", "temperature", "seed"] {
            assert!(value.get(k).is_some(), "missing {k}");
        }
    }

    #[test]
    fn tool_messages_carry_call_ids() {
        let mut assistant = ChatMessage::assistant("");
        assistant.tool_calls.push(ToolCall { id: "c1".into(), tool_name: "ls".into(), arguments: Arguments::new() });
        let msgs = vec![ChatMessage::system("s"), assistant, ChatMessage::tool_result("c1", "[]")];
        let body = chat_request_body("m", &msgs, &[], Sampling::default());
        assert!(body.contains(r#""tool_call_id":"c1""#));
        assert!(body.contains(r#""arguments":"{}""#));
    }

    #[test]
    fn response_parsing() {
        let body = r#"{"choices":[{"message":{"content":null,"tool_calls":[{"id":"a","type":"function","function":{"name":"ls","arguments":"{\"path\":\"/x\"}"}}]},"finish_reason":"tool_calls"}]}"#;
        let r = parse_chat_response(body).unwrap();
        assert_eq!(r.finish, FinishReason::ToolCalls);
        assert_eq!(r.tool_calls[0].arguments["path"], json!("/x"));

        let err = parse_chat_response("<html>bad gateway</html>").unwrap_err();
        assert!(matches!(err, ProviderError::Parse { ref body, .. } if body.contains("bad gateway")));
    }

    #[test]
    fn embedding_arithmetic() {
        let raw = parse_embedding_response(r#"{"data":[{"embedding":[3,4,0,0]}]}"#).unwrap();
        let v = EmbeddingVector::normalized(raw);
        assert_eq!(v.values(), &[0.6, 0.8, 0.0, 0.0]);
    }

    #[test]
    fn debug_output_redacts_key() {
        let config = RemoteConfig {
            endpoint: "http://localhost".into(),
            model: "m".into(),
            embedding_model: "e".into(),
            embedding_dimension: 8,
            api_key: Some("sk-secret-value".into()),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(1),
        };
        assert!(!format!("{config:?}").contains("sk-secret-value"));
    }
}
