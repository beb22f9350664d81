//! Role prompt templates and slot interpolation.
//!
//! Templates live under `prompts/` as text assets. Slots are written
//! `{name}`; only the names listed in [`SLOTS`] are interpolated, so literal
//! braces (the JSON schemas in the judge and extractor templates) are left
//! untouched.

/// Bumped whenever a template asset changes.
pub const PROMPT_VERSION: &str = "1";

pub const ORCHESTRATOR: &str = include_str!("../prompts/orchestrator.txt");
pub const VARIANTS: &str = include_str!("../prompts/variants.txt");
pub const EXECUTOR: &str = include_str!("../prompts/executor.txt");
pub const JUDGE: &str = include_str!("../prompts/judge.txt");
pub const EXTRACTOR: &str = include_str!("../prompts/extractor.txt");

pub const SLOTS: &[&str] = &[
    "memory_block",
    "diversity_hint",
    "query",
    "query_text",
    "final_text",
    "reasoning_text",
    "tool_trace",
    "diag_text",
    "trajectories_block",
];

/// Replaces `{slot}` markers with the given values. Unknown slot names in
/// `values` are a programming error.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        assert!(SLOTS.contains(name), "unknown prompt slot {name}");
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// Slot names present in a template.
pub fn slots_in(template: &str) -> Vec<&'static str> {
    SLOTS.iter().copied().filter(|s| template.contains(&format!("{{{s}}}"))).collect()
}

/// Appended to the variants prompt so the orchestrator's plan can be parsed.
pub const PLAN_ENVELOPE: &str = r#"Before any tool work, reply with the plan as a fenced block:
```plan
{"subgoals": [{"instruction": "...", "inputs": ["..."], "outputs": ["..."], "success_criteria": ["..."]}]}
```
List sub-goals in execution order. Each needs at least one output; outputs that are file paths must be written under the sandbox."#;

pub const PLAN_REASK: &str = "The plan could not be parsed. Reply with only the ```plan``` block described above.";

pub const EXECUTOR_COMPLETION: &str = "When every contract output is produced, reply without tool calls, name each contract output, and end with the line `STATUS: SUCCESS`. If the sub-goal cannot be completed, end with `STATUS: FAILURE` instead.";

pub const SYNTHESIS_REQUEST: &str =
    "All sub-goals have reported. Narrate the final computation, then write the <Diag> block and finish with the <Answer> line.";

pub const JUDGE_REQUEST: &str = "Return the JSON verdict now.";

pub const JUDGE_REASK: &str = "Your verdict was not valid JSON. Respond with only the JSON object.";

pub const EXTRACTOR_REASK: &str = "That was not valid JSON. Return ONLY the JSON object with the \"memories\" array.";

pub const SUMMARIZER: &str = "Summarize the earlier tool interactions below into a compact progress description. Keep paths, tool names and error messages; drop raw listings.";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_expose_their_slots() {
        assert_eq!(slots_in(VARIANTS), vec!["memory_block", "diversity_hint", "query"]);
        assert_eq!(slots_in(JUDGE), vec!["query_text", "final_text", "reasoning_text", "tool_trace", "diag_text"]);
        assert_eq!(slots_in(EXTRACTOR), vec!["query", "trajectories_block"]);
        assert!(slots_in(ORCHESTRATOR).is_empty());
        assert!(slots_in(EXECUTOR).is_empty());
    }

    #[test]
    fn fill_leaves_literal_json_alone() {
        let filled = fill(JUDGE, &[("query_text", "Q?"), ("final_text", "<Answer>A</Answer>")]);
        assert!(filled.contains("Question:\nQ?\n"));
        assert!(filled.contains(r#"{"decision": "SUCCESS" | "FAILURE""#));
        assert!(filled.contains("{tool_trace}"));
    }

    #[test]
    fn key_phrases_are_verbatim() {
        assert!(JUDGE.contains("You do NOT know the gold answer."));
        assert!(JUDGE.contains("If the response lacks an explicit final answer tag, mark FAILURE."));
        assert!(EXTRACTOR.contains("Extract 2-4 total entries across successes and failures."));
        assert!(EXECUTOR.contains("ls(path=..., offset=0, limit=50)"));
        assert!(ORCHESTRATOR.contains("`<Answer>Your choice</Answer>`"));
    }
}
