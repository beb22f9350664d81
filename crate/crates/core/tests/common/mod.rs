//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use geoevolver::harness::{self, Config, EpisodeManifest, RunOutcome};
use geoevolver::model::{parse_log, Trajectory};

pub fn casebook() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../datasets/casebook")
}

pub fn dataset(name: &str) -> PathBuf {
    casebook().join(name)
}

/// Scripted config writing under `out`, with the bank at `bank`.
pub fn config(out: &Path, bank: Option<&Path>) -> Config {
    Config {
        output_dir: out.to_path_buf(),
        memory_path: bank.map(Path::to_path_buf),
        run_id: "run".into(),
        ..Config::default()
    }
}

pub fn run(dataset_name: &str, out: &Path) -> Result<RunOutcome, String> {
    let cfg = config(out, Some(&out.join("bank.jsonl")));
    harness::run_benchmark(&cfg, &dataset(dataset_name)).map_err(|e| e.to_string())
}

pub fn episode<'a>(outcome: &'a RunOutcome, id: &str) -> Result<&'a EpisodeManifest, String> {
    outcome.episodes.iter().find(|e| e.query_id == id).ok_or_else(|| format!("no episode {id}"))
}

/// Parses the log of `variant` in an episode directory.
pub fn variant_log(outcome: &RunOutcome, id: &str, variant: usize) -> Result<Trajectory, String> {
    let path = outcome.run_dir.join(id).join(format!("variant-{variant}.log"));
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_log(&text).map_err(|e| e.to_string())
}

/// Every file below `root`, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Turbidity sums and water areas for the 24 Lake Urmia dates.
pub const Q157_DATES: [&str; 24] = [
    "2022-01-01", "2022-01-16", "2022-01-31", "2022-02-15", "2022-03-02", "2022-03-17",
    "2022-04-01", "2022-04-16", "2022-05-01", "2022-05-16", "2022-05-31", "2022-06-15",
    "2022-06-30", "2022-07-15", "2022-07-30", "2022-08-14", "2022-08-29", "2022-09-13",
    "2022-09-28", "2022-10-25", "2022-11-09", "2022-11-24", "2022-12-09", "2022-12-24",
];

pub const Q157_SUMS: [f64; 24] = [
    392065568.0, 416365280.0, 219604864.0, 129923824.0, 301486400.0, 238540544.0,
    217505424.0, 104889288.0, 292429280.0, 148286080.0, 112012264.0, 127280272.0,
    123388280.0, 153240192.0, 146451488.0, 166537264.0, 155292112.0, 170321376.0,
    154315408.0, 135877632.0, 183978176.0, 152578496.0, 125695640.0, 429716032.0,
];

pub const Q157_AREAS: [f64; 24] = [
    50568.0, 50568.0, 50568.0, 50553.0, 50557.0, 50568.0, 50568.0, 50476.0, 50568.0, 50568.0, 50547.0, 50512.0,
    50526.0, 50568.0, 50568.0, 50568.0, 50559.0, 50568.0, 50560.0, 50568.0, 50568.0, 50568.0, 50568.0, 50568.0,
];

/// Pulls `YYYY-MM-DD` out of a raster path.
pub fn date_of(path: &str) -> Option<String> {
    let bytes = path.as_bytes();
    (0..bytes.len().saturating_sub(9)).rev().find_map(|i| {
        let s = path.get(i..i + 10)?;
        let ok = s.chars().enumerate().all(|(j, c)| if j == 4 || j == 7 { c == '-' } else { c.is_ascii_digit() });
        ok.then(|| s.to_string())
    })
}

/// Recomputes the per-date sums, areas and turbidity per unit area from the
/// observations of a Q157 trajectory.
pub fn q157_table(t: &Trajectory) -> Result<Vec<(String, f64, f64)>, String> {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    let mut areas: BTreeMap<String, f64> = BTreeMap::new();
    for step in &t.steps {
        if step.observation.is_error() {
            continue;
        }
        match step.action.tool_name.as_str() {
            "calc_batch_image_sum" => {
                let paths = step.action.arguments.get("image_paths").and_then(|v| v.as_array()).ok_or("batch sum without image_paths")?;
                let values: Vec<f64> = serde_json::from_str(&step.observation.payload).map_err(|e| format!("batch sum payload: {e}"))?;
                if paths.len() != values.len() {
                    return Err(format!("{} paths but {} sums", paths.len(), values.len()));
                }
                for (p, v) in paths.iter().zip(values) {
                    let date = date_of(p.as_str().unwrap_or_default()).ok_or("sum path without date")?;
                    sums.insert(date, v);
                }
            }
            "calculate_area" => {
                let p = step.action.arguments.get("input_path").and_then(|v| v.as_str()).ok_or("area without input_path")?;
                let v: f64 = step.observation.payload.trim().parse().map_err(|e| format!("area payload: {e}"))?;
                areas.insert(date_of(p).ok_or("area path without date")?, v);
            }
            _ => {}
        }
    }
    sums.into_iter()
        .map(|(d, s)| {
            let a = *areas.get(&d).ok_or_else(|| format!("no area for {d}"))?;
            Ok((d, s, a))
        })
        .collect()
}
