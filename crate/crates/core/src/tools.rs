//! Tool registry and the simulated Earth-observation workspace.
//!
//! Tools are table-driven: per-file tools read a metric from the file's
//! scalar table, derivation tools materialize fixture-defined records at the
//! requested output path, and fault rules inject error observations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::model::{Arguments, Observation, ToolAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolCategory {
    /// Domain computation.
    Core,
    /// Bookkeeping such as todo lists and work-memory notes (auxiliary).
    Bookkeeping,
    /// Directory listing and globbing.
    Filesystem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    String,
    Integer,
    Number,
    Path,
    PathList,
    List,
}

impl ParamKind {
    fn schema(self) -> Value {
        match self {
            ParamKind::String | ParamKind::Path => json!({"type": "string"}),
            ParamKind::Integer => json!({"type": "integer"}),
            ParamKind::Number => json!({"type": "number"}),
            ParamKind::PathList => json!({"type": "array", "items": {"type": "string"}}),
            ParamKind::List => json!({"type": "array"}),
        }
    }

    fn accepts(self, value: &Value) -> bool {
        match self {
            ParamKind::String | ParamKind::Path => value.is_string(),
            ParamKind::Integer => value.is_i64() || value.is_u64(),
            ParamKind::Number => value.is_number() || value.as_str().is_some_and(|s| s.trim().parse::<f64>().is_ok()),
            ParamKind::PathList => value.as_array().is_some_and(|a| a.iter().all(Value::is_string)),
            ParamKind::List => value.is_array(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, kind: ParamKind, required: bool) -> Self {
        Self { name: name.into(), kind, required }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
    pub category: ToolCategory,
}

impl ToolSpec {
    pub fn auxiliary(&self) -> bool {
        self.category == ToolCategory::Bookkeeping
    }

    /// JSON-schema object describing the parameters.
    pub fn json_schema(&self) -> Value {
        let properties: serde_json::Map<String, Value> =
            self.parameters.iter().map(|p| (p.name.clone(), p.kind.schema())).collect();
        let required: Vec<&str> = self.parameters.iter().filter(|p| p.required).map(|p| p.name.as_str()).collect();
        json!({"type": "object", "properties": properties, "required": required})
    }
}

/// Signature for tools registered from outside the crate.
pub type CustomTool = Arc<dyn Fn(&mut SimulatedWorkspace, &Arguments) -> Result<String, String> + Send + Sync>;

#[derive(Clone)]
enum Behavior {
    Ls,
    Glob,
    WriteTodos,
    UpdateWorkMemory,
    ReadMetric { metric: &'static str },
    BatchMetric { metric: &'static str },
    BatchMeanOfMetric { metric: &'static str },
    Derive { inputs: &'static [&'static str] },
    Difference,
    Custom(CustomTool),
}

#[derive(Clone)]
struct Tool {
    spec: ToolSpec,
    behavior: Behavior,
}

#[derive(Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Tool>,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.tools.keys()).finish()
    }
}

fn p(name: &str, kind: ParamKind) -> ParamSpec {
    ParamSpec::new(name, kind, true)
}

fn opt(name: &str, kind: ParamKind) -> ParamSpec {
    ParamSpec::new(name, kind, false)
}

impl ToolRegistry {
    /// The tools that appear in the case-study transcripts and prompts.
    pub fn standard() -> Self {
        use ParamKind::*;
        use ToolCategory::*;
        let mut r = ToolRegistry::default();
        r.add("ls", "List a directory in pages: ls(path, offset=0, limit=50).", Filesystem,
            vec![p("path", Path), opt("offset", Integer), opt("limit", Integer)], Behavior::Ls);
        r.add("glob", "Return the sorted paths matching a shell-style wildcard pattern.", Filesystem,
            vec![p("pattern", String), opt("path", Path)], Behavior::Glob);
        r.add("write_todos", "Replace the executor's todo list and echo it.", Bookkeeping,
            vec![p("todos", List)], Behavior::WriteTodos);
        r.add("update_work_memory", "Append a note to the executor's work memory.", Bookkeeping,
            vec![p("note", String)], Behavior::UpdateWorkMemory);
        r.add("calculate_water_turbidity_ntu", "Compute water turbidity (NTU) from a red-band reflectance raster.", Core,
            vec![p("input_path", Path), p("output_path", Path)], Behavior::Derive { inputs: &["input_path"] });
        r.add("split_window", "Split-window land surface temperature from two thermal bands and emissivities.", Core,
            vec![p("bt31_path", Path), p("bt32_path", Path), p("emis31_path", Path), p("emis32_path", Path), p("output_path", Path)],
            Behavior::Derive { inputs: &["bt31_path", "bt32_path", "emis31_path", "emis32_path"] });
        r.add("temperature_emissivity_separation", "Temperature/emissivity separation over an ordered TIR band list.", Core,
            vec![p("tir_band_paths", PathList), opt("representative_band_index", Integer), p("output_path", Path)],
            Behavior::Derive { inputs: &["tir_band_paths"] });
        r.add("calc_batch_image_sum", "Sum of pixel values for each image in a list.", Core,
            vec![p("image_paths", PathList)], Behavior::BatchMetric { metric: "sum" });
        r.add("calc_batch_image_mean_mean", "Mean of the per-image means over a list of images.", Core,
            vec![p("image_paths", PathList)], Behavior::BatchMeanOfMetric { metric: "mean" });
        r.add("calculate_area", "Count of valid (water) pixels in a raster.", Core,
            vec![p("input_path", Path)], Behavior::ReadMetric { metric: "area" });
        r.add("calculate_band_mean_by_condition", "Mean of band values where a condition such as `band0 > 0` holds.", Core,
            vec![p("input_path", Path), p("condition", String)], Behavior::ReadMetric { metric: "mean" });
        r.add("difference", "Return a - b.", Core,
            vec![p("a", Number), p("b", Number)], Behavior::Difference);
        r
    }

    fn add(&mut self, name: &str, description: &str, category: ToolCategory, parameters: Vec<ParamSpec>, behavior: Behavior) {
        let spec = ToolSpec { name: name.into(), description: description.into(), parameters, category };
        self.tools.insert(name.into(), Tool { spec, behavior });
    }

    /// Registers (or replaces) a tool with caller-supplied behavior.
    pub fn register(&mut self, spec: ToolSpec, run: CustomTool) {
        self.tools.insert(spec.name.clone(), Tool { spec, behavior: Behavior::Custom(run) });
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name).map(|t| &t.spec)
    }

    pub fn specs(&self) -> Vec<ToolSpec> {
        self.tools.values().map(|t| t.spec.clone()).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    pub fn is_auxiliary(&self, name: &str) -> bool {
        self.get(name).is_some_and(ToolSpec::auxiliary)
    }

    /// The same registry without auxiliary (bookkeeping) tools.
    pub fn core_only(&self) -> Self {
        let tools = self.tools.iter().filter(|(_, t)| !t.spec.auxiliary()).map(|(k, t)| (k.clone(), t.clone())).collect();
        Self { tools }
    }
}

// ---------------------------------------------------------------------------
// Workspace

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_tag: Option<String>,
    pub kind: String,
    #[serde(default)]
    pub scalar_table: BTreeMap<String, f64>,
}

/// A fixture-defined result of running a derivation tool on given inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derivation {
    pub tool: String,
    pub inputs: Vec<String>,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_tag: Option<String>,
    pub scalar_table: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgPredicate {
    Any,
    Equals { key: String, value: Value },
    Missing { key: String },
    Present { key: String },
    Contains { key: String, text: String },
    All(Vec<ArgPredicate>),
}

impl Default for ArgPredicate {
    fn default() -> Self {
        ArgPredicate::Any
    }
}

impl ArgPredicate {
    pub fn matches(&self, args: &Arguments) -> bool {
        match self {
            ArgPredicate::Any => true,
            ArgPredicate::Equals { key, value } => args.get(key) == Some(value),
            ArgPredicate::Missing { key } => !args.contains_key(key),
            ArgPredicate::Present { key } => args.contains_key(key),
            ArgPredicate::Contains { key, text } => args.get(key).is_some_and(|v| match v {
                Value::String(s) => s.contains(text.as_str()),
                other => other.to_string().contains(text.as_str()),
            }),
            ArgPredicate::All(all) => all.iter().all(|p| p.matches(args)),
        }
    }
}

/// Fails the first `fire_count` matching invocations, then heals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRule {
    pub tool_name: String,
    #[serde(default)]
    pub predicate: ArgPredicate,
    pub message: String,
    pub fire_count: u32,
}

impl FaultRule {
    pub fn new(tool_name: impl Into<String>, fire_count: u32, message: impl Into<String>) -> Self {
        Self { tool_name: tool_name.into(), predicate: ArgPredicate::Any, message: message.into(), fire_count }
    }
}

/// Executor-local state touched by bookkeeping tools.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecutorLocal {
    pub todos: Vec<Value>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedWorkspace {
    pub sandbox_root: String,
    #[serde(default)]
    pub files: BTreeMap<String, FileRecord>,
    #[serde(default)]
    pub derivations: Vec<Derivation>,
    #[serde(default)]
    pub faults: Vec<FaultRule>,
    /// Output path -> executor that wrote it.
    #[serde(skip)]
    writers: BTreeMap<String, usize>,
}

impl SimulatedWorkspace {
    pub fn new(sandbox_root: impl Into<String>) -> Self {
        Self {
            sandbox_root: normalize_dir(&sandbox_root.into()),
            files: BTreeMap::new(),
            derivations: Vec::new(),
            faults: Vec::new(),
            writers: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut ws: SimulatedWorkspace = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        ws.sandbox_root = normalize_dir(&ws.sandbox_root);
        ws.validate().map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(ws)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.sandbox_root.starts_with('/') {
            return Err(format!("sandbox root {:?} must be absolute", self.sandbox_root));
        }
        for (path, record) in &self.files {
            if !path.starts_with('/') {
                return Err(format!("file path {path:?} must be absolute"));
            }
            if let Some((metric, _)) = record.scalar_table.iter().find(|(_, v)| !v.is_finite()) {
                return Err(format!("{path}: metric {metric} is not finite"));
            }
        }
        if let Some(rule) = self.faults.iter().find(|r| r.message.trim().is_empty() || r.fire_count == 0) {
            return Err(format!("fault rule for {} needs a message and fire_count >= 1", rule.tool_name));
        }
        Ok(())
    }

    pub fn add_file(&mut self, path: impl Into<String>, record: FileRecord) -> &mut Self {
        self.files.insert(path.into(), record);
        self
    }

    pub fn exists(&self, path: &str) -> bool {
        self.files.contains_key(path)
    }

    /// Remaining firings per fault rule, in rule order.
    pub fn fault_budget(&self) -> Vec<u32> {
        self.faults.iter().map(|r| r.fire_count).collect()
    }

    /// Resolves an output path against the sandbox, rejecting escapes.
    pub fn resolve_output(&self, requested: &str) -> Result<String, String> {
        let requested = requested.trim();
        if requested.is_empty() {
            return Err("output path is empty".into());
        }
        let path = if requested.starts_with('/') {
            requested.to_string()
        } else {
            format!("{}/{}", self.sandbox_root, requested)
        };
        if path.split('/').any(|c| c == "..") {
            return Err(format!("output path {path} must not contain '..'"));
        }
        if !path.starts_with(&format!("{}/", self.sandbox_root)) {
            return Err(format!("output path {path} is outside the sandbox {}; never invent directories", self.sandbox_root));
        }
        Ok(path)
    }

    fn record(&self, path: &str) -> Result<&FileRecord, String> {
        self.files.get(path).ok_or_else(|| format!("path not found: {path}"))
    }

    fn metric(&self, path: &str, metric: &str) -> Result<f64, String> {
        self.record(path)?
            .scalar_table
            .get(metric)
            .copied()
            .ok_or_else(|| format!("no '{metric}' value for {path}"))
    }

    fn ls(&self, path: &str, offset: usize, limit: usize) -> Result<Vec<String>, String> {
        let dir = normalize_dir(path);
        if self.files.contains_key(&dir) {
            return Err(format!("not a directory: {dir}"));
        }
        let prefix = if dir == "/" { "/".to_string() } else { format!("{dir}/") };
        let mut children: Vec<String> = self
            .files
            .keys()
            .filter_map(|p| p.strip_prefix(&prefix))
            .map(|rest| match rest.split_once('/') {
                Some((child_dir, _)) => format!("{prefix}{child_dir}"),
                None => format!("{prefix}{rest}"),
            })
            .collect();
        children.dedup();
        if children.is_empty() {
            return Err(format!("path not found: {dir}"));
        }
        Ok(children.into_iter().skip(offset).take(limit).collect())
    }

    fn glob(&self, pattern: &str, base: Option<&str>) -> Result<Vec<String>, String> {
        let full = match base {
            Some(b) if !pattern.starts_with('/') => format!("{}/{}", normalize_dir(b), pattern),
            _ => pattern.to_string(),
        };
        let compiled = glob::Pattern::new(&full).map_err(|e| format!("invalid pattern {full:?}: {e}"))?;
        Ok(self.files.keys().filter(|p| compiled.matches(p)).cloned().collect())
    }

    fn derive(&mut self, tool: &str, inputs: Vec<String>, output: &str, executor: usize) -> Result<String, String> {
        for input in &inputs {
            self.record(input)?;
        }
        let output = self.resolve_output(output)?;
        if let Some(writer) = self.writers.get(&output) {
            if *writer != executor {
                return Err(format!("output path collision: {output} was written by executor {writer}"));
            }
        }
        let derivation = self
            .derivations
            .iter()
            .find(|d| d.tool == tool && d.inputs == inputs)
            .ok_or_else(|| format!("no fixture result for {tool} over {inputs:?}"))?;
        let date_tag = derivation.date_tag.clone().or_else(|| self.files[&inputs[0]].date_tag.clone());
        let record = FileRecord { date_tag, kind: derivation.kind.clone(), scalar_table: derivation.scalar_table.clone() };
        self.files.insert(output.clone(), record);
        self.writers.insert(output.clone(), executor);
        Ok(format!("Result saved at {output}"))
    }
}

fn normalize_dir(path: &str) -> String {
    let trimmed = path.trim().trim_end_matches('/');
    if trimmed.is_empty() {
        "/".to_string()
    } else {
        trimmed.to_string()
    }
}

/// Formats a float the way the case-study transcripts print them
/// (`50568.0`, `282.9996`).
pub fn format_float(value: f64) -> String {
    format!("{value:?}")
}

fn decimals(value: f64) -> usize {
    let text = format_float(value);
    match text.split_once('.') {
        Some((_, frac)) if !frac.contains('e') => frac.len(),
        _ => 0,
    }
}

fn as_number(value: &Value) -> Option<f64> {
    match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn str_arg<'a>(args: &'a Arguments, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

fn usize_arg(args: &Arguments, key: &str, default: usize) -> Result<usize, String> {
    match args.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|n| n as usize)
            .ok_or_else(|| format!("argument '{key}' must be a non-negative integer")),
    }
}

fn path_list(args: &Arguments, key: &str) -> Vec<String> {
    args.get(key)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
        .unwrap_or_default()
}

/// Python-style rendering, matching the todo echoes in the transcripts.
fn py_repr(value: &Value) -> String {
    match value {
        Value::Null => "None".into(),
        Value::Bool(b) => if *b { "True" } else { "False" }.into(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        Value::Array(items) => format!("[{}]", items.iter().map(py_repr).collect::<Vec<_>>().join(", ")),
        Value::Object(map) => format!(
            "{{{}}}",
            map.iter().map(|(k, v)| format!("'{k}': {}", py_repr(v))).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn check_arguments(spec: &ToolSpec, args: &Arguments) -> Result<(), String> {
    for param in &spec.parameters {
        match args.get(&param.name) {
            None if param.required => return Err(format!("missing required argument '{}'", param.name)),
            Some(v) if !param.kind.accepts(v) => {
                return Err(format!("argument '{}' has the wrong type (expected {:?})", param.name, param.kind))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Executes one tool action. Failures of any kind come back as error
/// observations; this never aborts the caller.
pub fn invoke(
    registry: &ToolRegistry,
    workspace: &mut SimulatedWorkspace,
    local: &mut ExecutorLocal,
    action: &ToolAction,
) -> Observation {
    let name = action.tool_name.as_str();
    let Some(tool) = registry.tools.get(name) else {
        return Observation::error(name, format!("unknown tool: {name}"));
    };
    if let Some(rule) = workspace
        .faults
        .iter_mut()
        .find(|r| r.tool_name == name && r.fire_count > 0 && r.predicate.matches(&action.arguments))
    {
        rule.fire_count -= 1;
        return Observation::error(name, format!("Error calling tool '{name}': {}", rule.message));
    }
    let args = &action.arguments;
    let result = check_arguments(&tool.spec, args).and_then(|()| run(&tool.behavior, workspace, local, action));
    match result {
        Ok(payload) => Observation::ok(name, payload),
        Err(message) => Observation::error(name, format!("Error calling tool '{name}': {message}")),
    }
}

fn run(
    behavior: &Behavior,
    workspace: &mut SimulatedWorkspace,
    local: &mut ExecutorLocal,
    action: &ToolAction,
) -> Result<String, String> {
    let args = &action.arguments;
    match behavior {
        Behavior::Ls => {
            let path = str_arg(args, "path").unwrap_or_default();
            let offset = usize_arg(args, "offset", 0)?;
            let limit = usize_arg(args, "limit", 50)?;
            if limit == 0 {
                return Err("limit must be at least 1".into());
            }
            let listing = workspace.ls(path, offset, limit)?;
            Ok(serde_json::to_string(&listing).expect("strings serialize"))
        }
        Behavior::Glob => {
            let pattern = str_arg(args, "pattern").unwrap_or_default();
            if pattern.is_empty() {
                return Err("pattern must not be empty".into());
            }
            let matches = workspace.glob(pattern, str_arg(args, "path"))?;
            Ok(serde_json::to_string(&matches).expect("strings serialize"))
        }
        Behavior::WriteTodos => {
            local.todos = args.get("todos").and_then(Value::as_array).cloned().unwrap_or_default();
            Ok(format!("Updated todo list to {}", py_repr(&Value::Array(local.todos.clone()))))
        }
        Behavior::UpdateWorkMemory => {
            local.notes.push(str_arg(args, "note").unwrap_or_default().to_string());
            Ok(format!("Work memory updated ({} notes)", local.notes.len()))
        }
        Behavior::ReadMetric { metric } => {
            let path = str_arg(args, "input_path").unwrap_or_default();
            workspace.metric(path, metric).map(format_float)
        }
        Behavior::BatchMetric { metric } => {
            let values = path_list(args, "image_paths")
                .iter()
                .map(|p| workspace.metric(p, metric).map(format_float))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(format!("[{}]", values.join(", ")))
        }
        Behavior::BatchMeanOfMetric { metric } => {
            let paths = path_list(args, "image_paths");
            if paths.is_empty() {
                return Err("image_paths must not be empty".into());
            }
            let values = paths.iter().map(|p| workspace.metric(p, metric)).collect::<Result<Vec<_>, _>>()?;
            Ok(format_float(values.iter().sum::<f64>() / values.len() as f64))
        }
        Behavior::Derive { inputs } => {
            let mut collected = Vec::new();
            for key in inputs.iter() {
                match args.get(*key) {
                    Some(Value::Array(_)) => collected.extend(path_list(args, key)),
                    Some(Value::String(s)) => collected.push(s.clone()),
                    _ => {}
                }
            }
            if collected.is_empty() {
                return Err("no input paths given".into());
            }
            let output = str_arg(args, "output_path").unwrap_or_default().to_string();
            workspace.derive(&action.tool_name, collected, &output, action.issued_by)
        }
        Behavior::Difference => {
            let a = args.get("a").and_then(as_number).ok_or("argument 'a' must be a number")?;
            let b = args.get("b").and_then(as_number).ok_or("argument 'b' must be a number")?;
            let places = decimals(a).max(decimals(b));
            Ok(format!("{:.*}", places, a - b))
        }
        Behavior::Custom(run) => run(workspace, args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q157_DIR: &str = "/benchmark/data/question157";

    fn q157_dates() -> Vec<&'static str> {
        vec![
            "2022-01-01", "2022-01-16", "2022-01-31", "2022-02-15", "2022-03-02", "2022-03-17",
            "2022-04-01", "2022-04-16", "2022-05-01", "2022-05-16", "2022-05-31", "2022-06-15",
            "2022-06-30", "2022-07-15", "2022-07-30", "2022-08-14", "2022-08-29", "2022-09-13",
            "2022-09-28", "2022-10-25", "2022-11-09", "2022-11-24", "2022-12-09", "2022-12-24",
        ]
    }

    fn q157_workspace() -> SimulatedWorkspace {
        let mut ws = SimulatedWorkspace::new("/sandbox/question157");
        for date in q157_dates() {
            ws.add_file(
                format!("{Q157_DIR}/lakeUrmia_sur_refl_b01.tif_{date}.tif"),
                FileRecord { date_tag: Some(date.into()), kind: "sur_refl_b01".into(), scalar_table: BTreeMap::new() },
            );
        }
        ws
    }

    fn act(tool: &str, args: Value) -> ToolAction {
        let arguments = args.as_object().cloned().unwrap_or_default().into_iter().collect();
        ToolAction::new(tool, arguments, 1)
    }

    fn call(ws: &mut SimulatedWorkspace, tool: &str, args: Value) -> Observation {
        invoke(&ToolRegistry::standard(), ws, &mut ExecutorLocal::default(), &act(tool, args))
    }

    fn listing(obs: &Observation) -> Vec<String> {
        assert!(!obs.is_error(), "{}", obs.payload);
        serde_json::from_str(&obs.payload).unwrap()
    }

    #[test]
    fn unknown_tool() {
        let obs = call(&mut q157_workspace(), "frobnicate", json!({}));
        assert!(obs.is_error());
        assert_eq!(obs.payload, "unknown tool: frobnicate");
    }

    #[test]
    fn ls_pages() {
        let mut ws = q157_workspace();
        let all = listing(&call(&mut ws, "ls", json!({"path": Q157_DIR, "offset": 0, "limit": 50})));
        assert_eq!(all.len(), 24);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(all[23].ends_with("2022-12-24.tif"));
        let tail = listing(&call(&mut ws, "ls", json!({"path": Q157_DIR, "offset": 20, "limit": 50})));
        assert_eq!(tail, all[20..].to_vec());
        assert!(listing(&call(&mut ws, "ls", json!({"path": Q157_DIR, "offset": 99, "limit": 50}))).is_empty());
        assert!(call(&mut ws, "ls", json!({"path": "/nope"})).is_error());
        assert_eq!(listing(&call(&mut ws, "ls", json!({"path": "/benchmark/data"}))), vec![Q157_DIR.to_string()]);
    }

    #[test]
    fn glob_matches() {
        let mut ws = q157_workspace();
        let december = listing(&call(&mut ws, "glob", json!({"pattern": "*2022-12*"})));
        // by hand: of the 24 listed names only 12-09 and 12-24 fall in December
        let expected: Vec<String> = ["2022-12-09", "2022-12-24"]
            .iter()
            .map(|d| format!("{Q157_DIR}/lakeUrmia_sur_refl_b01.tif_{d}.tif"))
            .collect();
        assert_eq!(december, expected);
        assert_eq!(listing(&call(&mut ws, "glob", json!({"pattern": "*"}))).len(), 24);
        assert!(listing(&call(&mut ws, "glob", json!({"pattern": "*2021*"}))).is_empty());
        let relative = listing(&call(&mut ws, "glob", json!({"pattern": "*12-24*", "path": Q157_DIR})));
        assert_eq!(relative.len(), 1);
    }

    #[test]
    fn fault_fires_then_heals() {
        let mut ws = SimulatedWorkspace::new("/sandbox/q27");
        for band in ["BT_10", "BT_11", "BT_12"] {
            ws.add_file(format!("/data/{band}.tif"), FileRecord { date_tag: None, kind: "bt".into(), scalar_table: BTreeMap::new() });
        }
        let inputs: Vec<String> = ["BT_10", "BT_11", "BT_12"].iter().map(|b| format!("/data/{b}.tif")).collect();
        ws.derivations.push(Derivation {
            tool: "temperature_emissivity_separation".into(),
            inputs: inputs.clone(),
            kind: "lst".into(),
            date_tag: None,
            scalar_table: BTreeMap::from([("mean".to_string(), 282.9996)]),
        });
        ws.faults.push(FaultRule::new("temperature_emissivity_separation", 1, "list index out of range"));
        let args = json!({"tir_band_paths": inputs, "representative_band_index": 2, "output_path": "LST_TTM_Polygon1_calc.tif"});
        let first = call(&mut ws, "temperature_emissivity_separation", args.clone());
        assert!(first.is_error());
        assert_eq!(first.payload, "Error calling tool 'temperature_emissivity_separation': list index out of range");
        assert_eq!(ws.fault_budget(), vec![0]);
        let second = call(&mut ws, "temperature_emissivity_separation", args.clone());
        assert_eq!(second.payload, "Result saved at /sandbox/q27/LST_TTM_Polygon1_calc.tif");
        let mean = call(&mut ws, "calculate_band_mean_by_condition",
            json!({"input_path": "/sandbox/q27/LST_TTM_Polygon1_calc.tif", "condition": "band0 > 0"}));
        assert_eq!(mean.payload, "282.9996");
        // re-running a derivation leaves an identical record
        let before = ws.files.clone();
        call(&mut ws, "temperature_emissivity_separation", args);
        assert_eq!(before, ws.files);
    }

    #[test]
    fn fault_predicates_select_invocations() {
        let mut ws = SimulatedWorkspace::new("/sandbox/x");
        ws.faults.push(FaultRule {
            predicate: ArgPredicate::Missing { key: "b".into() },
            ..FaultRule::new("difference", 5, "bad b")
        });
        assert!(!call(&mut ws, "difference", json!({"a": 1.5, "b": 0.5})).is_error());
        assert!(call(&mut ws, "difference", json!({"a": 1.5})).is_error());
        assert_eq!(ws.fault_budget(), vec![4]);
    }

    #[test]
    fn difference_formatting() {
        let mut ws = SimulatedWorkspace::new("/sandbox/x");
        assert_eq!(call(&mut ws, "difference", json!({"a": 283.7492, "b": 282.9996})).payload, "0.7496");
        assert_eq!(call(&mut ws, "difference", json!({"a": 5.0, "b": 2})).payload, "3.0");
        assert_eq!(call(&mut ws, "difference", json!({"a": "1.25", "b": 1})).payload, "0.25");
    }

    #[test]
    fn missing_paths_and_metrics_name_both() {
        let mut ws = q157_workspace();
        let obs = call(&mut ws, "calculate_area", json!({"input_path": "/nowhere.tif"}));
        assert!(obs.is_error() && obs.payload.contains("/nowhere.tif"));
        let path = format!("{Q157_DIR}/lakeUrmia_sur_refl_b01.tif_2022-01-01.tif");
        let obs = call(&mut ws, "calculate_area", json!({"input_path": path}));
        assert!(obs.is_error() && obs.payload.contains("area") && obs.payload.contains("2022-01-01"));
        let obs = call(&mut ws, "calculate_area", json!({}));
        assert!(obs.payload.contains("missing required argument 'input_path'"));
    }

    #[test]
    fn sandbox_escapes_are_rejected() {
        let ws = SimulatedWorkspace::new("/sandbox/q");
        assert_eq!(ws.resolve_output("out.tif").unwrap(), "/sandbox/q/out.tif");
        assert!(ws.resolve_output("/etc/out.tif").is_err());
        assert!(ws.resolve_output("/sandbox/q/../x.tif").is_err());
        assert!(ws.resolve_output("/sandbox/qq/x.tif").is_err());
    }

    #[test]
    fn output_collisions_between_executors() {
        let mut ws = q157_workspace();
        let input = format!("{Q157_DIR}/lakeUrmia_sur_refl_b01.tif_2022-01-01.tif");
        ws.derivations.push(Derivation {
            tool: "calculate_water_turbidity_ntu".into(),
            inputs: vec![input.clone()],
            kind: "turbidity".into(),
            date_tag: None,
            scalar_table: BTreeMap::from([("sum".to_string(), 392065568.0), ("area".to_string(), 50568.0)]),
        });
        let registry = ToolRegistry::standard();
        let args = json!({"input_path": input, "output_path": "t.tif"});
        let mut a = act("calculate_water_turbidity_ntu", args.clone());
        assert!(!invoke(&registry, &mut ws, &mut ExecutorLocal::default(), &a).is_error());
        a.issued_by = 2;
        let clash = invoke(&registry, &mut ws, &mut ExecutorLocal::default(), &a);
        assert!(clash.is_error() && clash.payload.contains("collision"));
        let sum = call(&mut ws, "calc_batch_image_sum", json!({"image_paths": ["/sandbox/question157/t.tif"]}));
        assert_eq!(sum.payload, "[392065568.0]");
    }

    #[test]
    fn write_todos_echoes_python_style() {
        let registry = ToolRegistry::standard();
        let mut ws = q157_workspace();
        let mut local = ExecutorLocal::default();
        let todos = json!({"todos": [{"content": "Enumerate files", "status": "in_progress"}]});
        let obs = invoke(&registry, &mut ws, &mut local, &act("write_todos", todos));
        assert_eq!(obs.payload, "Updated todo list to [{'content': 'Enumerate files', 'status': 'in_progress'}]");
        assert_eq!(local.todos.len(), 1);
        assert!(registry.is_auxiliary("write_todos"));
        assert!(!registry.is_auxiliary("ls"));
    }

    #[test]
    fn invocation_is_deterministic() {
        let run = || {
            let mut ws = q157_workspace();
            let obs = call(&mut ws, "ls", json!({"path": Q157_DIR}));
            serde_json::to_string(&obs).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn schema_lists_required_parameters() {
        let spec = ToolRegistry::standard().get("ls").cloned().unwrap();
        assert_eq!(
            spec.json_schema(),
            json!({"type": "object", "properties": {"path": {"type": "string"}, "offset": {"type": "integer"}, "limit": {"type": "integer"}}, "required": ["path"]})
        );
    }
}
