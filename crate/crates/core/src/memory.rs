//! The persistent experience bank.
//!
//! Items are deduplicated on their canonical key `(source_id, pattern_type,
//! title)`, retrieved by inner-product similarity over their indexing text
//! (title, description and detection cues), and filtered at retrieval time so
//! that entries quoting a query's expected output never reach the prompt.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{similarity, Encoder, EmbeddingVector};
use crate::error::MemoryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternType {
    AnalysisPattern,
    ErrorAttribution,
}

impl PatternType {
    pub fn as_str(self) -> &'static str {
        match self {
            PatternType::AnalysisPattern => "analysis_pattern",
            PatternType::ErrorAttribution => "error_attribution",
        }
    }

    /// Card heading form ("Analysis Pattern").
    pub fn label(self) -> &'static str {
        match self {
            PatternType::AnalysisPattern => "Analysis Pattern",
            PatternType::ErrorAttribution => "Error Attribution",
        }
    }
}

impl fmt::Display for PatternType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PatternType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "analysis_pattern" => Ok(PatternType::AnalysisPattern),
            "error_attribution" => Ok(PatternType::ErrorAttribution),
            other => Err(format!("unknown pattern type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryItem {
    pub source_id: String,
    pub pattern_type: PatternType,
    pub title: String,
    pub description: String,
    pub content: String,
    pub action_items: Vec<String>,
    pub detection_cues: Vec<String>,
    pub failure_cause: Option<String>,
    pub embedding: EmbeddingVector,
    /// Assigned by the bank on insertion.
    pub sequence: u64,
}

fn is_none_marker(text: &str) -> bool {
    let t = text.trim();
    t.is_empty() || t.eq_ignore_ascii_case("none")
}

impl MemoryItem {
    pub fn key(&self) -> CanonicalKey {
        CanonicalKey::new(&self.source_id, self.pattern_type, &self.title)
    }

    /// Text fed to the encoder for retrieval.
    pub fn indexing_text(&self) -> String {
        let mut text = format!("{}\n{}", self.title, self.description);
        for cue in &self.detection_cues {
            text.push('\n');
            text.push_str(cue);
        }
        text
    }

    pub fn has_failure_cause(&self) -> bool {
        self.failure_cause.as_deref().is_some_and(|c| !is_none_marker(c))
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.title.trim().is_empty() {
            return Err(MemoryError::InvalidItem("title is empty".into()));
        }
        match self.pattern_type {
            PatternType::ErrorAttribution if !self.has_failure_cause() => Err(MemoryError::InvalidItem(format!(
                "error_attribution {:?} has no failure_cause",
                self.title
            ))),
            PatternType::AnalysisPattern if self.has_failure_cause() => Err(MemoryError::InvalidItem(format!(
                "analysis_pattern {:?} carries a failure_cause",
                self.title
            ))),
            _ => Ok(()),
        }
    }

    /// Computes and stores the embedding of [`Self::indexing_text`].
    pub fn embed_with(&mut self, encoder: &Encoder) -> Result<(), MemoryError> {
        self.embedding = encoder.encode(&self.indexing_text())?;
        Ok(())
    }

    /// Renders the item as a memory card.
    pub fn card(&self) -> String {
        let success = match self.pattern_type {
            PatternType::AnalysisPattern => "True",
            PatternType::ErrorAttribution => "False",
        };
        let mut out = format!(
            "Title: {}\nPattern Type: {} | Source Problem ID: {} | Success: {}\n\nDescription: {}\n\nContent: {}\n",
            self.title,
            self.pattern_type.label(),
            self.source_id,
            success,
            self.description,
            self.content
        );
        out.push_str("\nAction Items:\n");
        for (i, item) in self.action_items.iter().enumerate() {
            out.push_str(&format!("  {}. {}\n", i + 1, item));
        }
        out.push_str("\nDetection Cues:\n");
        for cue in &self.detection_cues {
            out.push_str(&format!("  - {cue}\n"));
        }
        match (&self.failure_cause, self.has_failure_cause()) {
            (Some(cause), true) => out.push_str(&format!("\nFailure Cause:\n  {cause}\n")),
            _ => out.push_str("\nFailure Cause: None (successful pattern).\n"),
        }
        out
    }
}

/// Dedup identity of a memory item. The title is stored lowercased with
/// whitespace runs collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalKey {
    pub source_id: String,
    pub pattern_type: PatternType,
    pub title: String,
}

impl CanonicalKey {
    pub fn new(source_id: &str, pattern_type: PatternType, title: &str) -> Self {
        Self { source_id: source_id.to_string(), pattern_type, title: normalize_text(title) }
    }

    /// Parses the `source_id::pattern_type::title` form printed by `Display`.
    pub fn parse(text: &str) -> Option<Self> {
        let mut parts = text.splitn(3, "::");
        let source = parts.next()?;
        let pattern = parts.next()?.parse().ok()?;
        let title = parts.next()?;
        Some(Self::new(source, pattern, title))
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}::{}", self.source_id, self.pattern_type, self.title)
    }
}

/// Lowercases and collapses whitespace runs to single spaces.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyContext {
    pub rendered: String,
    pub item_keys: Vec<CanonicalKey>,
}

impl StrategyContext {
    pub fn is_empty(&self) -> bool {
        self.item_keys.is_empty()
    }
}

/// A retrieval hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub item: MemoryItem,
    pub score: f64,
}

/// Short golds (choice letters) would match nearly any text as substrings, so
/// below this length only explicit answer patterns count as leakage.
pub const LEAKAGE_MIN_GOLD_CHARS: usize = 3;

/// True when `item` would leak `gold` into a prompt.
pub fn leakage_check(item: &MemoryItem, gold: &str) -> bool {
    let normalized_gold = normalize_text(gold);
    if normalized_gold.is_empty() {
        return false;
    }
    if normalized_gold.chars().count() >= LEAKAGE_MIN_GOLD_CHARS {
        let mut haystack = item.content.clone();
        for action in &item.action_items {
            haystack.push(' ');
            haystack.push_str(action);
        }
        return normalize_text(&haystack).contains(&normalized_gold);
    }
    let gold = gold.trim();
    let patterns = [format!("ANSWER: {gold}"), format!("<Answer>{gold}</Answer>")];
    let fields = [&item.title, &item.description, &item.content]
        .into_iter()
        .chain(item.action_items.iter())
        .chain(item.detection_cues.iter())
        .chain(item.failure_cause.iter());
    fields.into_iter().any(|field| patterns.iter().any(|p| field.contains(p.as_str())))
}

const BLOCK_DELIMITER: &str = "---";

/// Renders ranked items into the strategy context block.
pub fn aggregate_context(items: &[MemoryItem]) -> StrategyContext {
    let mut blocks = Vec::with_capacity(items.len());
    for (rank, item) in items.iter().enumerate() {
        let mut block = format!(
            "Strategy Hint {}: {}\nPattern Type: {}\nContent: {}\n",
            rank + 1,
            item.title,
            item.pattern_type,
            item.content
        );
        if !item.action_items.is_empty() {
            block.push_str("Action Items:\n");
            for (i, action) in item.action_items.iter().enumerate() {
                block.push_str(&format!("{}. {}\n", i + 1, action));
            }
        }
        if !item.detection_cues.is_empty() {
            block.push_str("Detection Cues:\n");
            for cue in &item.detection_cues {
                block.push_str(&format!("- {cue}\n"));
            }
        }
        if let (Some(cause), true) = (&item.failure_cause, item.has_failure_cause()) {
            block.push_str(&format!("Failure Cause: {cause}\n"));
        }
        blocks.push(block);
    }
    StrategyContext {
        rendered: blocks.join(&format!("{BLOCK_DELIMITER}\n")),
        item_keys: items.iter().map(MemoryItem::key).collect(),
    }
}

/// Ranking used by retrieval: similarity descending, then older items first.
pub fn rank_order(a: &Retrieved, b: &Retrieved) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.item.sequence.cmp(&b.item.sequence))
}

#[derive(Debug, Clone)]
pub struct MemoryBank {
    items: Vec<MemoryItem>,
    keys: HashSet<CanonicalKey>,
    next_sequence: u64,
    encoder: Encoder,
    /// When set, every insert is appended here before it is committed.
    journal: Option<PathBuf>,
}

impl PartialEq for MemoryBank {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items && self.next_sequence == other.next_sequence
    }
}

impl MemoryBank {
    pub fn new(encoder: Encoder) -> Self {
        Self { items: Vec::new(), keys: HashSet::new(), next_sequence: 1, encoder, journal: None }
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    pub fn contains_key(&self, key: &CanonicalKey) -> bool {
        self.keys.contains(key)
    }

    pub fn get(&self, key: &CanonicalKey) -> Option<&MemoryItem> {
        self.items.iter().find(|i| &i.key() == key)
    }

    pub fn journal(&self) -> Option<&Path> {
        self.journal.as_deref()
    }

    pub fn counts_by_type(&self) -> BTreeMap<PatternType, usize> {
        let mut counts = BTreeMap::from([(PatternType::AnalysisPattern, 0), (PatternType::ErrorAttribution, 0)]);
        for item in &self.items {
            *counts.entry(item.pattern_type).or_default() += 1;
        }
        counts
    }

    /// Inserts items whose canonical key is new (to the bank and to the batch).
    /// Survivors get consecutive sequence numbers. Returns the inserted keys.
    pub fn insert(&mut self, items: Vec<MemoryItem>) -> Result<Vec<CanonicalKey>, MemoryError> {
        let mut batch_keys = HashSet::new();
        let mut survivors = Vec::new();
        for item in items {
            item.validate()?;
            let key = item.key();
            if self.keys.contains(&key) || !batch_keys.insert(key) {
                continue;
            }
            survivors.push(item);
        }
        for (offset, item) in survivors.iter_mut().enumerate() {
            item.sequence = self.next_sequence + offset as u64;
        }
        if let Some(path) = &self.journal {
            append_records(path, &survivors)?;
        }
        let keys: Vec<CanonicalKey> = survivors.iter().map(MemoryItem::key).collect();
        self.next_sequence += survivors.len() as u64;
        self.keys.extend(keys.iter().cloned());
        self.items.extend(survivors);
        Ok(keys)
    }

    /// Top-`k` items for `query_text`, after dropping items that would leak
    /// `leakage_context`.
    pub fn retrieve_top_k(
        &self,
        query_text: &str,
        k: usize,
        leakage_context: Option<&str>,
    ) -> Result<Vec<Retrieved>, MemoryError> {
        if k == 0 || self.items.is_empty() {
            return Ok(Vec::new());
        }
        let query = self.encoder.encode(query_text)?;
        let gold = leakage_context.filter(|g| !g.trim().is_empty());
        let mut hits = Vec::new();
        for item in &self.items {
            if gold.is_some_and(|g| leakage_check(item, g)) {
                continue;
            }
            let score = similarity(&query, &item.embedding)?;
            hits.push(Retrieved { item: item.clone(), score });
        }
        hits.sort_by(rank_order);
        hits.truncate(k);
        Ok(hits)
    }

    /// Writes a full snapshot, one item per line.
    pub fn persist(&self, path: &Path) -> Result<(), MemoryError> {
        let io = |source| MemoryError::Io { path: path.to_path_buf(), source };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        for item in &self.items {
            let line = serde_json::to_string(item).expect("memory items serialize");
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn load(path: &Path, encoder: Encoder) -> Result<Self, MemoryError> {
        let text = std::fs::read_to_string(path).map_err(|source| MemoryError::Io { path: path.to_path_buf(), source })?;
        let mut bank = MemoryBank::new(encoder);
        for (idx, line) in text.split_inclusive('\n').enumerate() {
            let malformed = |reason: String| MemoryError::Malformed { path: path.to_path_buf(), line: idx + 1, reason };
            if line.trim().is_empty() {
                continue;
            }
            if !line.ends_with('\n') {
                return Err(malformed("truncated record (no trailing newline)".into()));
            }
            let item: MemoryItem = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
            item.validate().map_err(|e| malformed(e.to_string()))?;
            if item.sequence < bank.next_sequence {
                return Err(malformed(format!("sequence {} is not increasing", item.sequence)));
            }
            if !bank.keys.insert(item.key()) {
                return Err(malformed(format!("duplicate key {}", item.key())));
            }
            bank.next_sequence = item.sequence + 1;
            bank.items.push(item);
        }
        Ok(bank)
    }

    /// Loads `path` (an absent file is an empty bank) and journals future
    /// inserts to it.
    pub fn open(path: &Path, encoder: Encoder) -> Result<Self, MemoryError> {
        let mut bank = if path.exists() { Self::load(path, encoder)? } else { MemoryBank::new(encoder) };
        if !path.exists() {
            File::create(path).map_err(|source| MemoryError::Io { path: path.to_path_buf(), source })?;
        }
        bank.journal = Some(path.to_path_buf());
        Ok(bank)
    }

    pub fn detach_journal(&mut self) {
        self.journal = None;
    }
}

fn append_records(path: &Path, items: &[MemoryItem]) -> Result<(), MemoryError> {
    if items.is_empty() {
        return Ok(());
    }
    let io = |source| MemoryError::Io { path: path.to_path_buf(), source };
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("memory items serialize"));
        text.push('\n');
    }
    let mut file = OpenOptions::new().append(true).create(true).open(path).map_err(io)?;
    file.write_all(text.as_bytes()).map_err(io)?;
    file.flush().map_err(io)
}
