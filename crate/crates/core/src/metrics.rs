//! Evaluation metrics over a predicted trajectory and an expert one.
//!
//! `m` is the gold tool-sequence length and `n` the predicted one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::model::{answers_match, AnswerMode};

pub fn accuracy(predicted: Option<&str>, gold: &str, mode: AnswerMode) -> u8 {
    match predicted {
        Some(p) if answers_match(p, gold, mode) => 1,
        _ => 0,
    }
}

/// `n / m`; lower is better.
pub fn efficiency(pred_len: usize, gold_len: usize) -> Result<f64, MetricError> {
    if gold_len == 0 {
        return Err(MetricError::InvalidGroundTruth("gold trajectory is empty"));
    }
    Ok(pred_len as f64 / gold_len as f64)
}

fn check<S>(t_star: &[S]) -> Result<(), MetricError> {
    if t_star.is_empty() {
        return Err(MetricError::InvalidGroundTruth("gold tool sequence is empty"));
    }
    Ok(())
}

/// Tool-Any-Order: share of distinct gold tools that appear anywhere.
pub fn tool_any_order<S: AsRef<str>>(t_star: &[S], t: &[S]) -> Result<f64, MetricError> {
    check(t_star)?;
    let gold: BTreeSet<&str> = t_star.iter().map(AsRef::as_ref).collect();
    let pred: BTreeSet<&str> = t.iter().map(AsRef::as_ref).collect();
    Ok(gold.intersection(&pred).count() as f64 / gold.len() as f64)
}

/// Length of the longest gold prefix that is a subsequence of `t`. Greedy
/// matching is exact here: taking the earliest match never hurts later ones.
pub fn in_order_prefix<S: AsRef<str>>(t_star: &[S], t: &[S]) -> usize {
    let mut k = 0;
    for tool in t {
        if k < t_star.len() && tool.as_ref() == t_star[k].as_ref() {
            k += 1;
        }
    }
    k
}

/// Tool-In-Order: `k* / m`.
pub fn tool_in_order<S: AsRef<str>>(t_star: &[S], t: &[S]) -> Result<f64, MetricError> {
    check(t_star)?;
    Ok(in_order_prefix(t_star, t) as f64 / t_star.len() as f64)
}

pub fn common_prefix<S: AsRef<str>>(t_star: &[S], t: &[S]) -> usize {
    t_star.iter().zip(t).take_while(|(a, b)| a.as_ref() == b.as_ref()).count()
}

/// Tool-Exact-Match: longest common prefix over `m`.
pub fn tool_exact_match<S: AsRef<str>>(t_star: &[S], t: &[S]) -> Result<f64, MetricError> {
    check(t_star)?;
    Ok(common_prefix(t_star, t) as f64 / t_star.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub query_id: String,
    pub accuracy: u8,
    /// Absent when the episode has no gold tool sequence.
    pub efficiency: Option<f64>,
    pub tao: Option<f64>,
    pub tio: Option<f64>,
    pub tem: Option<f64>,
    pub m: Option<usize>,
    pub n: usize,
}

/// Scores one episode. Trajectory metrics are left empty without gold tools.
pub fn episode_report(
    query_id: &str,
    predicted_answer: Option<&str>,
    gold_answer: &str,
    mode: AnswerMode,
    gold_tools: Option<&[String]>,
    predicted_tools: &[String],
) -> MetricReport {
    let mut report = MetricReport {
        query_id: query_id.to_string(),
        accuracy: accuracy(predicted_answer, gold_answer, mode),
        efficiency: None,
        tao: None,
        tio: None,
        tem: None,
        m: None,
        n: predicted_tools.len(),
    };
    if let Some(gold) = gold_tools.filter(|g| !g.is_empty()) {
        report.m = Some(gold.len());
        report.efficiency = efficiency(predicted_tools.len(), gold.len()).ok();
        report.tao = tool_any_order(gold, predicted_tools).ok();
        report.tio = tool_in_order(gold, predicted_tools).ok();
        report.tem = tool_exact_match(gold, predicted_tools).ok();
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub episodes: usize,
    pub accuracy: Option<f64>,
    pub efficiency: Option<f64>,
    pub tao: Option<f64>,
    pub tio: Option<f64>,
    pub tem: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Unweighted means; each trajectory metric averages only episodes that
/// have it.
pub fn summarize(reports: &[MetricReport]) -> MetricSummary {
    MetricSummary {
        episodes: reports.len(),
        accuracy: mean(reports.iter().map(|r| r.accuracy as f64)),
        efficiency: mean(reports.iter().filter_map(|r| r.efficiency)),
        tao: mean(reports.iter().filter_map(|r| r.tao)),
        tio: mean(reports.iter().filter_map(|r| r.tio)),
        tem: mean(reports.iter().filter_map(|r| r.tem)),
    }
}

pub const TABLE_COLUMNS: [&str; 5] = ["Tool-A-O", "Tool-I-O", "Tool-E-M", "Efficiency", "Accuracy"];

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.2}", v * 100.0))
}

fn ratio(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}

/// Plain-text table: one row per episode and a final mean row. Percentages
/// except Efficiency, which stays a ratio.
pub fn render_table(reports: &[MetricReport]) -> String {
    let mut rows = vec![{
        let mut header = vec!["Query".to_string()];
        header.extend(TABLE_COLUMNS.iter().map(|c| c.to_string()));
        header
    }];
    for r in reports {
        rows.push(vec![
            r.query_id.clone(),
            percent(r.tao),
            percent(r.tio),
            percent(r.tem),
            ratio(r.efficiency),
            percent(Some(r.accuracy as f64)),
        ]);
    }
    let s = summarize(reports);
    rows.push(vec![
        "mean".into(),
        percent(s.tao),
        percent(s.tio),
        percent(s.tem),
        ratio(s.efficiency),
        percent(s.accuracy),
    ]);
    let widths: Vec<usize> = (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| if i == 0 { format!("{cell:<w$}", w = widths[i]) } else { format!("{cell:>w$}", w = widths[i]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
