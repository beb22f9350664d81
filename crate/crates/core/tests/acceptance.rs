//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p geoevolver --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use geoevolver::embedding::{similarity, EmbeddingVector, Encoder, DEFAULT_DIMENSION};
use geoevolver::exploration::{reward, select_best, CandidateSolution, RewardWeights, VariantConfig};
use geoevolver::harness::{self, EpisodeStatus};
use geoevolver::memory::{leakage_check, normalize_text, rank_order, MemoryBank, MemoryItem, PatternType, Retrieved};
use geoevolver::metrics::{efficiency, tool_any_order, tool_exact_match, tool_in_order};
use geoevolver::model::{Observation, Outcome, ToolAction, Trajectory, ValiditySignals};
use geoevolver::pipeline::{all_segments_success, Contract, SegmentResult, SubGoal, VariantRun};
use geoevolver::tools::SimulatedWorkspace;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tempdir() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Metrics

fn random_seq(r: &mut ChaCha8Rng, alphabet: usize, min: usize) -> Vec<String> {
    let len = r.gen_range(min..=8);
    (0..len).map(|_| ((b'a' + r.gen_range(0..alphabet) as u8) as char).to_string()).collect()
}

/// Longest gold prefix that equals some subsequence of `t`, by trying every
/// subset of positions.
fn brute_force_prefix(gold: &[String], t: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << t.len()) {
        let picked: Vec<&String> = (0..t.len()).filter(|i| mask & (1 << i) != 0).map(|i| &t[i]).collect();
        if picked.len() > gold.len() || picked.len() <= best {
            continue;
        }
        if picked.iter().zip(gold).all(|(a, b)| *a == b) {
            best = picked.len();
        }
    }
    best
}

fn metric_oracle() -> Result<(), String> {
    let mut r = rng(1);
    for case in 0..1000 {
        let alphabet = r.gen_range(1..=6);
        let gold = random_seq(&mut r, alphabet, 1);
        let pred = random_seq(&mut r, alphabet, 0);
        let expected = brute_force_prefix(&gold, &pred) as f64 / gold.len() as f64;
        let tio = tool_in_order(&gold, &pred).map_err(|e| e.to_string())?;
        let tem = tool_exact_match(&gold, &pred).map_err(|e| e.to_string())?;
        ensure(tio == expected, || format!("case {case}: TIO {tio} != oracle {expected} for {gold:?} / {pred:?}"))?;
        ensure(tem <= tio, || format!("case {case}: TEM {tem} > TIO {tio}"))?;
    }
    Ok(())
}

fn metric_hand_cases() -> Result<(), String> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let err = |e: geoevolver::error::MetricError| e.to_string();
    let cases = [
        ("TAO", tool_any_order(&s(&["a", "b", "c"]), &s(&["c", "a"])).map_err(err)?, 2.0 / 3.0),
        ("TIO", tool_in_order(&s(&["a", "b", "c"]), &s(&["a", "x", "b"])).map_err(err)?, 2.0 / 3.0),
        ("TEM", tool_exact_match(&s(&["a", "b", "c"]), &s(&["a", "b", "d", "c"])).map_err(err)?, 2.0 / 3.0),
        ("Efficiency", efficiency(4, 2).map_err(err)?, 2.0),
    ];
    for (name, got, want) in cases {
        ensure(got == want, || format!("{name}: {got} != {want}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Casebook replays

fn q157_replay() -> Result<(), String> {
    let dir = tempdir()?;
    let outcome = common::run("q157.jsonl", dir.path())?;
    let ep = common::episode(&outcome, "q157")?;
    ensure(ep.status == EpisodeStatus::Ok, || format!("episode failed: {:?}", ep.error))?;
    ensure(ep.answer.as_deref() == Some("A"), || format!("answer {:?}", ep.answer))?;
    let best = ep.selected_variant.ok_or("no selected variant")?;
    let table = common::q157_table(&common::variant_log(&outcome, "q157", best)?)?;
    ensure(table.len() == 24, || format!("{} dates recomputed", table.len()))?;
    for (i, (date, sum, area)) in table.iter().enumerate() {
        ensure(date == common::Q157_DATES[i], || format!("date {i}: {date}"))?;
        ensure(*sum == common::Q157_SUMS[i], || format!("{date}: sum {sum}"))?;
        ensure(*area == common::Q157_AREAS[i], || format!("{date}: area {area}"))?;
    }
    let (date, ratio) = table
        .iter()
        .map(|(d, s, a)| (d.as_str(), s / a))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or("empty table")?;
    ensure((ratio - 8497.79).abs() <= 0.01, || format!("max ratio {ratio}"))?;
    ensure(date == "2022-12-24", || format!("max on {date}"))
}

fn q27_fault_recovery() -> Result<(), String> {
    let workspace = SimulatedWorkspace::load(&common::casebook().join("q27/workspace.json"))?;
    let rule = workspace
        .faults
        .iter()
        .find(|f| f.tool_name == "temperature_emissivity_separation")
        .ok_or("fixture has no TES fault rule")?;
    ensure(rule.fire_count == 1 && rule.message == "list index out of range", || format!("fault rule {rule:?}"))?;

    let dir = tempdir()?;
    let outcome = common::run("aster_pair.jsonl", dir.path())?;
    let ep = common::episode(&outcome, "q27")?;
    let v = |i: usize| ep.variants.iter().find(|v| v.index == i).ok_or(format!("no variant {i}"));
    let (v1, v2) = (v(1)?, v(2)?);
    ensure(!v1.success && v1.tool_errors >= 1, || format!("variant 1: {v1:?}"))?;
    ensure(v2.success && v2.answer.as_deref() == Some("A"), || format!("variant 2: {v2:?}"))?;
    ensure(ep.selected_variant == Some(2), || format!("selected {:?}", ep.selected_variant))?;

    let t2 = common::variant_log(&outcome, "q27", 2)?;
    let diff = t2
        .steps
        .iter()
        .rfind(|s| s.action.tool_name == "difference" && !s.observation.is_error())
        .ok_or("variant 2 never computed the difference")?;
    let value: f64 = diff.observation.payload.trim().parse().map_err(|e| format!("difference payload: {e}"))?;
    ensure((value - 0.7496).abs() < 1e-4, || format!("difference {value}"))?;

    let bank = harness::open_bank_file(&outcome.run_dir.join(harness::BANK_SNAPSHOT)).map_err(|e| e.to_string())?;
    let q27: Vec<&MemoryItem> = bank.items().iter().filter(|i| i.source_id == "q27").collect();
    ensure(q27.iter().any(|i| i.pattern_type == PatternType::AnalysisPattern), || "no q27 analysis_pattern".into())?;
    ensure(
        q27.iter().any(|i| {
            i.pattern_type == PatternType::ErrorAttribution
                && i.failure_cause.as_deref().is_some_and(|c| c.contains("list index out of range"))
        }),
        || "no q27 error_attribution quoting the injected message".into(),
    )
}

fn cross_episode_retrieval() -> Result<(), String> {
    let dir = tempdir()?;
    let outcome = common::run("aster_pair.jsonl", dir.path())?;
    let first = common::episode(&outcome, "q27")?;
    let second = common::episode(&outcome, "q28")?;
    ensure(first.retrieved.is_empty(), || "first episode retrieved from an empty bank".into())?;
    let top = second.retrieved.first().ok_or("second episode retrieved nothing")?;
    ensure(first.inserted_keys.contains(&top.key), || format!("top-1 {} was not stored by q27", top.key))?;
    ensure(second.strategy_context.contains(&top.title), || "strategy context lacks the item title".into())
}

// ---------------------------------------------------------------------------
// Memory

const WORDS: &[&str] = &[
    "band", "raster", "mean", "polygon", "turbidity", "area", "sum", "ttm", "emissivity", "lst", "ndvi", "date",
    "batch", "index", "clip", "mask", "kelvin", "ratio", "reflectance", "water",
];

fn phrase(r: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let n = r.gen_range(min..=max);
    (0..n).map(|_| *WORDS.choose(r).unwrap()).collect::<Vec<_>>().join(" ")
}

fn random_item(r: &mut ChaCha8Rng, encoder: &Encoder, title_pool: usize) -> MemoryItem {
    let error = r.gen_bool(0.3);
    let mut item = MemoryItem {
        source_id: format!("q{}", r.gen_range(0..3)),
        pattern_type: if error { PatternType::ErrorAttribution } else { PatternType::AnalysisPattern },
        title: format!("Title {}", r.gen_range(0..title_pool)),
        description: phrase(r, 6, 6),
        content: phrase(r, 10, 10),
        action_items: vec![phrase(r, 4, 4)],
        detection_cues: vec![phrase(r, 3, 3)],
        failure_cause: error.then(|| phrase(r, 5, 5)),
        embedding: EmbeddingVector::zeros(DEFAULT_DIMENSION),
        sequence: 0,
    };
    item.embed_with(encoder).unwrap();
    item
}

fn memory_properties() -> Result<(), String> {
    let encoder = Encoder::default();
    let mut r = rng(2);
    let e = |e: geoevolver::error::MemoryError| e.to_string();

    for batch_no in 0..200 {
        let mut bank = MemoryBank::new(encoder.clone());
        let batch: Vec<MemoryItem> = (0..r.gen_range(1..=12)).map(|_| random_item(&mut r, &encoder, 5)).collect();
        let distinct: BTreeSet<String> = batch.iter().map(|i| i.key().to_string()).collect();
        let inserted = bank.insert(batch.clone()).map_err(e)?;
        ensure(inserted.len() == distinct.len() && bank.len() == distinct.len(), || {
            format!("batch {batch_no}: {} inserted, {} distinct keys", inserted.len(), distinct.len())
        })?;
        let snapshot = bank.clone();
        let again = bank.insert(batch).map_err(e)?;
        ensure(again.is_empty() && bank == snapshot, || format!("batch {batch_no}: re-insert changed the bank"))?;
    }

    for size in [1, 7, 50, 200, 1000] {
        let mut bank = MemoryBank::new(encoder.clone());
        let items: Vec<MemoryItem> = (0..size).map(|_| random_item(&mut r, &encoder, 1_000_000)).collect();
        bank.insert(items).map_err(e)?;
        for _ in 0..5 {
            let query = phrase(&mut r, 8, 8);
            let k = r.gen_range(1..=12);
            let got = bank.retrieve_top_k(&query, k, None).map_err(e)?;
            let q = encoder.encode(&query).map_err(|e| e.to_string())?;
            let mut all: Vec<Retrieved> = bank
                .items()
                .iter()
                .map(|i| Retrieved { item: i.clone(), score: similarity(&q, &i.embedding).unwrap() })
                .collect();
            all.sort_by(rank_order);
            all.truncate(k);
            ensure(got == all, || format!("bank of {}: top-{k} differs from brute force", bank.len()))?;
        }
    }

    for case in 0..100 {
        let gold = loop {
            let g = phrase(&mut r, 1, 3);
            if normalize_text(&g).chars().count() >= 3 {
                break g;
            }
        };
        let mut bank = MemoryBank::new(encoder.clone());
        let mut items: Vec<MemoryItem> = (0..r.gen_range(5..=30)).map(|_| random_item(&mut r, &encoder, 1_000_000)).collect();
        for item in items.iter_mut() {
            if !r.gen_bool(0.4) {
                continue;
            }
            let spaced = gold.split(' ').map(|w| if r.gen_bool(0.5) { w.to_uppercase() } else { w.to_string() }).collect::<Vec<_>>();
            let planted = format!("result was {}  today", spaced.join("   "));
            if r.gen_bool(0.5) {
                item.content = planted;
            } else {
                item.action_items.push(planted);
            }
        }
        bank.insert(items).map_err(e)?;
        let needle = normalize_text(&gold);
        let leaking = bank
            .items()
            .iter()
            .filter(|i| normalize_text(&format!("{} {}", i.content, i.action_items.join(" "))).contains(&needle))
            .count();
        let hits = bank.retrieve_top_k(&gold, bank.len(), Some(&gold)).map_err(e)?;
        for h in &hits {
            ensure(!leaking_item(&h.item, &needle), || format!("case {case}: {} leaks {gold:?}", h.item.key()))?;
        }
        ensure(hits.len() + leaking == bank.len(), || format!("case {case}: clean items were dropped"))?;
        ensure(bank.items().iter().all(|i| leakage_check(i, &gold) == leaking_item(i, &needle)), || {
            format!("case {case}: leakage_check disagrees with the substring rule")
        })?;
    }
    Ok(())
}

fn leaking_item(item: &MemoryItem, needle: &str) -> bool {
    normalize_text(&format!("{} {}", item.content, item.action_items.join(" "))).contains(needle)
}

// ---------------------------------------------------------------------------
// Embedding

fn embedding_contract() -> Result<(), String> {
    let encoder = Encoder::default();
    let mut r = rng(3);
    for _ in 0..100 {
        let (a, b) = (phrase(&mut r, 1, 12), phrase(&mut r, 1, 12));
        let ea = encoder.encode(&a).map_err(|e| e.to_string())?;
        let eb = encoder.encode(&b).map_err(|e| e.to_string())?;
        ensure((ea.norm() - 1.0).abs() <= 1e-9, || format!("norm {} for {a:?}", ea.norm()))?;
        ensure(encoder.encode(&a).map_err(|e| e.to_string())? == ea, || format!("{a:?} encoded differently twice"))?;
        let ab = similarity(&ea, &eb).map_err(|e| e.to_string())?;
        let ba = similarity(&eb, &ea).map_err(|e| e.to_string())?;
        ensure(ab.to_bits() == ba.to_bits(), || format!("sim({a:?}, {b:?}) asymmetric: {ab} vs {ba}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Selection

fn candidate(index: usize, y: bool, s: bool, gamma: f64, steps: usize, w: &RewardWeights) -> CandidateSolution {
    let mut trajectory = Trajectory::default();
    for _ in 0..steps {
        trajectory.push(ToolAction::new("ls", Default::default(), 1), Observation::ok("ls", "[]"));
    }
    CandidateSolution {
        variant: VariantConfig { index, diversity_hint: String::new(), seed: 0, temperature: 0.0, retries: None },
        run: VariantRun {
            plan: None,
            segments: Vec::new(),
            trajectory,
            outcome: Outcome {
                success: y,
                validity: ValiditySignals {
                    format_compliant: true,
                    numeric_match: None,
                    step_count: steps,
                    confidence: gamma,
                    justification: String::new(),
                },
            },
            aborted: None,
        },
        parsed_answer: None,
        judge_success: y,
        success: s,
        confidence: gamma,
        reward: reward(w, s, gamma, steps),
    }
}

fn selection_properties() -> Result<(), String> {
    let mut r = rng(4);
    for set in 0..500 {
        let beta = r.gen_range(0.0..1.0);
        let w = RewardWeights { alpha: beta + r.gen_range(0.01..2.0), beta, lambda: r.gen_range(0.0..0.01) };
        let specs: Vec<(bool, bool, f64, usize)> = (0..r.gen_range(1..=6))
            .map(|_| (r.gen_bool(0.4), r.gen_bool(0.5), r.gen_range(0.0..=1.0), r.gen_range(0..=250)))
            .collect();
        let build = |w: &RewardWeights| -> Vec<CandidateSolution> {
            specs.iter().enumerate().map(|(i, &(y, s, g, n))| candidate(i + 1, y, s, g, n, w)).collect()
        };
        let cands = build(&w);
        let best = select_best(&cands).map_err(|e| e.to_string())?;
        if cands.iter().any(|c| c.judge_success) {
            ensure(cands[best].judge_success, || format!("set {set}: a Y=false candidate beat a Y=true one"))?;
        }
        let factor = r.gen_range(0.01..100.0);
        let rescaled = select_best(&build(&w.scaled(factor))).map_err(|e| e.to_string())?;
        ensure(rescaled == best, || format!("set {set}: scaling by {factor} moved the argmax {best} -> {rescaled}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Conjunction

fn segment(success: bool) -> SegmentResult {
    SegmentResult {
        subgoal: SubGoal {
            index: 1,
            instruction: String::new(),
            contract: Contract { inputs: Vec::new(), outputs: vec!["x".into()], success_criteria: Vec::new() },
        },
        trajectory: Trajectory::default(),
        success,
        completion: String::new(),
        retries_used: 0,
        skipped: false,
        stop_reason: None,
    }
}

fn conjunction_law() -> Result<(), String> {
    let mut r = rng(5);
    for case in 0..500 {
        let ys: Vec<bool> = (0..r.gen_range(1..=8)).map(|_| r.gen_bool(0.8)).collect();
        let and = ys.iter().all(|y| *y);
        ensure(all_segments_success(&ys) == and, || format!("case {case}: {ys:?}"))?;
        let run = VariantRun {
            plan: None,
            segments: ys.iter().map(|&y| segment(y)).collect(),
            trajectory: Trajectory::default(),
            outcome: Outcome {
                success: false,
                validity: ValiditySignals {
                    format_compliant: true,
                    numeric_match: None,
                    step_count: 0,
                    confidence: 0.0,
                    justification: String::new(),
                },
            },
            aborted: None,
        };
        ensure(run.segments_succeeded() == and, || format!("case {case}: run disagrees for {ys:?}"))?;
        if and {
            for n in 0..ys.len() {
                let mut flipped = ys.clone();
                flipped[n] = false;
                ensure(!all_segments_success(&flipped), || format!("case {case}: flipping Y_{} kept success", n + 1))?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Determinism

fn seed_bank(path: &Path) -> Result<(), String> {
    let encoder = Encoder::default();
    let mut item = MemoryItem {
        source_id: "seed".into(),
        pattern_type: PatternType::AnalysisPattern,
        title: "List Inputs Before Batch Processing".into(),
        description: "Enumerate the input rasters first so every date or band is covered.".into(),
        content: "ls -> per-file processing -> batch statistics".into(),
        action_items: vec!["Step 1: ls the data directory".into()],
        detection_cues: vec!["many dated rasters".into()],
        failure_cause: None,
        embedding: EmbeddingVector::zeros(DEFAULT_DIMENSION),
        sequence: 0,
    };
    item.embed_with(&encoder).map_err(|e| e.to_string())?;
    let mut bank = MemoryBank::new(encoder);
    bank.insert(vec![item]).map_err(|e| e.to_string())?;
    bank.persist(path).map_err(|e| e.to_string())
}

fn determinism(suite_start: Instant) -> Result<(), String> {
    let dir = tempdir()?;
    let initial = dir.path().join("initial.jsonl");
    seed_bank(&initial)?;
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let root = dir.path().join(name);
        std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
        let bank = root.join("bank.jsonl");
        std::fs::copy(&initial, &bank).map_err(|e| e.to_string())?;
        let cfg = common::config(&root.join("out"), Some(&bank));
        let outcome = harness::run_benchmark(&cfg, &common::dataset("dataset.jsonl")).map_err(|e| e.to_string())?;
        ensure(outcome.episodes.len() == 3, || format!("{} episodes", outcome.episodes.len()))?;
        trees.push(common::tree(&root));
    }
    let (a, b) = (&trees[0], &trees[1]);
    ensure(a.keys().eq(b.keys()), || "runs wrote different file sets".into())?;
    for (path, bytes) in a {
        ensure(b[path] == *bytes, || format!("{path} differs between runs"))?;
    }
    ensure(a.keys().any(|p| p.ends_with(".log")) && a.contains_key("bank.jsonl"), || "missing logs or bank".into())?;
    let elapsed = suite_start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("suite took {elapsed:?}"))
}

fn main() -> ExitCode {
    let suite_start = Instant::now();
    let checks: [(&str, Check, Duration); 9] = [
        ("metric oracle equivalence", metric_oracle, Duration::from_secs(5)),
        ("metric hand-cases", metric_hand_cases, Duration::from_secs(5)),
        ("Q157 fixture replay", q157_replay, Duration::from_secs(10)),
        ("Q27 fault-recovery replay", q27_fault_recovery, Duration::from_secs(10)),
        ("cross-episode retrieval", cross_episode_retrieval, Duration::from_secs(10)),
        ("memory properties", memory_properties, Duration::from_secs(60)),
        ("embedding contract", embedding_contract, Duration::from_secs(5)),
        ("selection properties", selection_properties, Duration::from_secs(5)),
        ("conjunction law", conjunction_law, Duration::from_secs(5)),
    ];
    let mut failed = 0;
    let mut report = |name: &str, result: std::thread::Result<Result<(), String>>, elapsed: Duration, limit: Duration| {
        let verdict = match result {
            Ok(Ok(())) if elapsed <= limit => Ok(()),
            Ok(Ok(())) => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            Ok(Err(e)) => Err(e),
            Err(_) => Err("panicked".to_string()),
        };
        match verdict {
            Ok(()) => println!("PASS  {name} ({elapsed:.2?})"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e}");
            }
        }
    };
    for (name, check, limit) in checks {
        let start = Instant::now();
        let result = catch_unwind(check);
        report(name, result, start.elapsed(), limit);
    }
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| determinism(suite_start)));
    report("determinism", result, start.elapsed(), Duration::from_secs(120));

    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
