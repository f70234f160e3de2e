//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.
//!
//! Criteria 9 and 10 train full-budget policies and are ignored by default:
//!
//! ```text
//! cargo test --release -p flipper-core --test acceptance -- --ignored --nocapture
//! ```
//!
//! Their runs go to `FLIPPER_ACCEPTANCE_DIR` (default `target/acceptance`) and
//! are reused when a finished run with an identical resolved config exists.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use flipper_core::check::{run_suite, CheckOptions};
use flipper_core::learn::checkpoint::Checkpoint;
use flipper_core::learn::eval::{evaluate, EvalSummary};
use flipper_core::learn::train::{CONFIG_FILE, FINAL_CHECKPOINT, METRICS_FILE};
use flipper_core::learn::{train, ResolvedConfig, RunConfig};
use flipper_core::HopperModel;

fn report(criterion: u32, passed: bool, detail: &str) {
    println!("criterion {criterion}: {} {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {criterion} failed: {detail}");
}

fn suites(criterion: u32, names: &[&str], budget_s: f64) {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut passed = true;
    for name in names {
        let o = run_suite(name, &CheckOptions::default()).expect("suite exists");
        passed &= o.passed;
        details.push(format!("[{}] {}", o.name, o.detail));
    }
    let elapsed = start.elapsed().as_secs_f64();
    passed &= elapsed < budget_s;
    details.push(format!("({elapsed:.1} s, budget {budget_s} s)"));
    report(criterion, passed, &details.join(" "));
}

#[test]
fn criterion_1_dynamics_oracles() {
    suites(1, &["dynamics"], 60.0);
}

#[test]
fn criterion_2_cmm_identity() {
    suites(2, &["centroidal"], 300.0);
}

#[test]
fn criterion_3_counter_rotation_mechanism() {
    suites(3, &["counter-rotation"], 300.0);
}

#[test]
fn criterion_4_barrier_function() {
    suites(4, &["barrier"], 300.0);
}

#[test]
fn criterion_5_mor_containment() {
    suites(5, &["mor"], 300.0);
}

#[test]
fn criterion_6_transmission_load() {
    suites(6, &["transmission"], 300.0);
}

#[test]
fn criterion_7_learner_numerics() {
    suites(7, &["gradients", "gae", "dual-head"], 300.0);
}

fn smoke_config(output_dir: &Path) -> RunConfig {
    let mut run = RunConfig::default();
    run.learner.num_envs = 8;
    run.learner.rollout_len = 50;
    run.learner.iterations = 5;
    run.learner.checkpoint_interval = 0;
    run.output_dir = output_dir.to_path_buf();
    run.seed = 11;
    run
}

#[test]
fn criterion_8_reproducibility() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let model = HopperModel::default();
    let mut files = Vec::new();
    for d in &dirs {
        // Same logical output directory so the resolved configs agree.
        let run = smoke_config(Path::new("runs/repro"));
        let resolved = ResolvedConfig::new(run, &model);
        let out = train(resolved, model.clone(), d.path(), |_| {}).unwrap();
        files.push(std::fs::read(out.metrics_path).unwrap());
    }
    let identical = files[0] == files[1];
    let rows = String::from_utf8_lossy(&files[0]).lines().count() - 1;
    report(8, identical && rows == 5, &format!("{rows} metric rows, byte-identical: {identical}"));
}

fn acceptance_dir() -> PathBuf {
    std::env::var_os("FLIPPER_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance"))
}

fn default_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    RunConfig::from_json_file(path).expect("shipped default config loads")
}

const WALL_TIME_FILE: &str = "train_seconds.txt";

/// Trains `run` into `dir` unless a finished run with the same resolved
/// config is already there. Also returns the training wall time in seconds.
fn ensure_trained(run: RunConfig, dir: &Path) -> (ResolvedConfig, PathBuf, f64) {
    let model = run.load_model().unwrap();
    let resolved = ResolvedConfig::new(run, &model);
    let iterations = resolved.run.learner.iterations;
    let finished = std::fs::read_to_string(dir.join(CONFIG_FILE))
        .ok()
        .and_then(|t| serde_json::from_str::<ResolvedConfig>(&t).ok())
        .is_some_and(|c| c == resolved)
        && dir.join(FINAL_CHECKPOINT).exists()
        && std::fs::read_to_string(dir.join(METRICS_FILE)).map_or(0, |t| t.lines().count()) == iterations + 1;
    let recorded = std::fs::read_to_string(dir.join(WALL_TIME_FILE))
        .ok()
        .and_then(|t| t.trim().parse::<f64>().ok());
    let seconds = if let (true, Some(s)) = (finished, recorded) {
        println!("reusing finished run in {}", dir.display());
        s
    } else {
        println!("training {} ({iterations} iterations)", dir.display());
        let start = Instant::now();
        train(resolved.clone(), model, dir, |m| {
            if m.iteration % 50 == 0 {
                println!("  iteration {} ({:.0} s)", m.iteration, start.elapsed().as_secs_f64());
            }
        })
        .unwrap();
        let s = start.elapsed().as_secs_f64();
        std::fs::write(dir.join(WALL_TIME_FILE), format!("{s:.1}\n")).unwrap();
        s
    };
    (resolved, dir.join(FINAL_CHECKPOINT), seconds)
}

fn column(text: &str, name: &str) -> Vec<Option<f64>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let idx = reader.headers().unwrap().iter().position(|h| h == name).unwrap();
    reader
        .records()
        .map(|r| r.unwrap()[idx].parse::<f64>().ok())
        .collect()
}

/// Raw aerial rewards are clipped below at this value, so an untrained
/// policy sits at or near it; the improvement ratio is taken against its
/// magnitude when the initial mean is smaller.
const AERIAL_FLOOR: f64 = 0.1;

#[test]
#[ignore = "trains three full-budget policies"]
fn criterion_9_training_smoke() {
    let root = acceptance_dir().join("criterion_9");
    let mut successes = 0;
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let dir = root.join(format!("seed_{seed}"));
        let mut run = default_config();
        run.seed = seed;
        run.output_dir = PathBuf::from(format!("criterion_9/seed_{seed}"));
        let (resolved, _, seconds) = ensure_trained(run, &dir);
        assert_eq!(resolved.run.learner.eval_interval, 1);
        let in_budget = seconds <= 2.0 * 3600.0;
        let text = std::fs::read_to_string(dir.join(METRICS_FILE)).unwrap();
        let cav: Vec<f64> = column(&text, "eval_aerial_cav").into_iter().flatten().collect();
        let flight = column(&text, "eval_max_flight");
        let pitch = column(&text, "eval_net_pitch");
        let first = cav[..10].iter().sum::<f64>() / 10.0;
        let last = cav[cav.len() - 10..].iter().sum::<f64>() / 10.0;
        let ratio_ok = last >= 5.0 * first.max(AERIAL_FLOOR);
        let flip = flight
            .iter()
            .zip(&pitch)
            .filter_map(|(f, p)| Some((f.as_ref()?, p.as_ref()?)))
            .filter(|(f, p)| **f >= 0.3 && **p >= std::f64::consts::PI)
            .count();
        let ok = in_budget && ratio_ok && flip > 0;
        successes += usize::from(ok);
        lines.push(format!(
            "seed {seed}: {seconds:.0} s, aerial r_cav first10 {first:.3} last10 {last:.3} ({}), evals with flight >= 0.3 s and pitch >= 180 deg: {flip}",
            if ratio_ok { "ok" } else { "short" }
        ));
    }
    for l in &lines {
        println!("  {l}");
    }
    report(9, successes >= 2, &format!("{successes} of 3 seeds meet both conditions"));
}

#[test]
#[ignore = "trains three full-budget policies with the envelope disabled"]
fn criterion_10_mor_ablation() {
    let root = acceptance_dir().join("criterion_10");
    let mut lower = 0;
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let dir = root.join(format!("seed_{seed}"));
        let mut run = default_config();
        run.seed = seed;
        run.env.use_mor = false;
        run.output_dir = PathBuf::from(format!("criterion_10/seed_{seed}"));
        let (resolved, ckpt, _) = ensure_trained(run, &dir);
        let agent = Checkpoint::load(&ckpt).unwrap().to_agent(&resolved.run.learner.networks).unwrap();
        let model = Arc::new(HopperModel::new(resolved.model.clone()).unwrap());
        let peak = |use_mor: bool| -> f64 {
            let mut env = resolved.run.env.clone();
            env.use_mor = use_mor;
            let eps = evaluate(&agent, &model, &env, 1).unwrap();
            EvalSummary::mean(&eps.iter().map(|e| e.summary).collect::<Vec<_>>()).peak_cav
        };
        let (clipped, free) = (peak(true), peak(false));
        lower += usize::from(clipped < free);
        lines.push(format!("seed {seed}: peak CAV clipping on {clipped:.3} rad/s, off {free:.3} rad/s"));
    }
    for l in &lines {
        println!("  {l}");
    }
    // With three seeds a one-sided sign test needs all three in the same direction.
    report(10, lower == 3, &format!("{lower} of 3 seeds lower with clipping on"));
}
