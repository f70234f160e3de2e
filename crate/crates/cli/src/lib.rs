//! Entry points behind the `flipper` binary. Each command returns a
//! [`Failure`] that maps onto the process exit code.

use std::path::{Path, PathBuf};

use anyhow::Context;
use flipper_core::learn::checkpoint::Checkpoint;
use flipper_core::learn::eval::{evaluate, write_eval_csv, EvalSummary};
use flipper_core::learn::{train, IterationMetrics, ResolvedConfig, RunConfig};
use flipper_core::{Error, HopperModel};

pub mod sweep;

/// Overrides where relative output directories are rooted.
pub const OUTPUT_ROOT_VAR: &str = "FLIPPER_OUTPUT_ROOT";

#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Check,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Check => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {e:#}"),
            Failure::Runtime(e) => write!(f, "runtime failure: {e:#}"),
            Failure::Check => write!(f, "check suite failed"),
        }
    }
}

/// Sorts a core error into the exit-code classes: bad input is a config
/// error, anything that went wrong while running is a runtime failure.
pub fn classify(e: Error) -> Failure {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::Checkpoint(_) | Error::Json { .. } => {
            Failure::Config(e.into())
        }
        other => Failure::Runtime(other.into()),
    }
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;

pub fn output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_VAR).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Relative paths land under the output root when one is set.
pub fn resolve_output(dir: &Path) -> PathBuf {
    match output_root() {
        Some(root) if dir.is_relative() => root.join(dir),
        _ => dir.to_path_buf(),
    }
}

pub fn load_config(path: &Path) -> CmdResult<(RunConfig, HopperModel)> {
    if !path.exists() {
        return Err(Failure::Config(anyhow::anyhow!("config file {} does not exist", path.display())));
    }
    let run = RunConfig::from_json_file(path).map_err(classify)?;
    let model = run.load_model().map_err(|e| Failure::Config(e.into()))?;
    Ok((run, model))
}

pub(crate) fn log_progress(m: &IterationMetrics) {
    let mut line = format!(
        "iter {:>5} steps {:>9} return [{:.2} {:.2}] len {:.1} kl {:.4} std {:.3}",
        m.iteration,
        m.env_steps,
        m.mean_return[0],
        m.mean_return[1],
        m.mean_episode_length,
        m.update.approx_kl,
        m.mean_std,
    );
    if let Some(e) = &m.eval {
        line += &format!(
            " | eval cav {:.3} peak {:.2} pitch {:.2} flight {:.2}",
            e.aerial_cav_mean, e.peak_cav, e.net_pitch, e.max_flight
        );
    }
    log::info!("{line}");
}

/// Trains with `run` and returns the output directory actually used.
pub fn run_training(run: RunConfig, model: HopperModel) -> CmdResult<PathBuf> {
    let out = resolve_output(&run.output_dir);
    let resolved = ResolvedConfig::new(run, &model);
    let outcome = train(resolved, model, &out, log_progress).map_err(classify)?;
    log::info!(
        "finished {} iterations; metrics in {}, checkpoint {}",
        outcome.iterations,
        outcome.metrics_path.display(),
        outcome.final_checkpoint.display()
    );
    Ok(out)
}

pub fn cmd_train(config: &Path) -> CmdResult {
    let (run, model) = load_config(config)?;
    run_training(run, model).map(|_| ())
}

pub fn summary_line(label: &str, s: &EvalSummary, termination: &str) -> String {
    format!(
        "{label}: return {:.3} length {} net_pitch {:.2} deg peak_cav {:.3} rad/s aerial_cav {:.3} max_flight {:.3} s peak_load {:.2} N*m termination {termination}",
        s.total_return,
        s.length,
        s.net_pitch.to_degrees(),
        s.peak_cav,
        s.aerial_cav_mean,
        s.max_flight,
        s.peak_load,
    )
}

/// Deterministic rollouts of a checkpoint; writes the per-step CSV to `out`
/// (default `<output_dir>/eval.csv`) and prints one summary line per episode.
pub fn cmd_eval(ckpt: &Path, config: &Path, episodes: usize, out: Option<&Path>) -> CmdResult {
    if episodes == 0 {
        return Err(Failure::Config(anyhow::anyhow!("--episodes must be at least 1")));
    }
    let (run, model) = load_config(config)?;
    if !ckpt.exists() {
        return Err(Failure::Config(anyhow::anyhow!("checkpoint {} does not exist", ckpt.display())));
    }
    let checkpoint = Checkpoint::load(ckpt).map_err(classify)?;
    let agent = checkpoint.to_agent(&run.learner.networks).map_err(classify)?;
    let resolved = ResolvedConfig::new(run.clone(), &model);
    let model = std::sync::Arc::new(model);
    let results = evaluate(&agent, &model, &run.env, episodes).map_err(classify)?;

    let path = match out {
        Some(p) => p.to_path_buf(),
        None => resolve_output(&run.output_dir).join("eval.csv"),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Runtime)?;
    }
    write_eval_csv(&path, &results, run.seed, &resolved.hash()).map_err(classify)?;
    for (k, ep) in results.iter().enumerate() {
        let term = flipper_core::learn::eval::termination_name(ep.termination);
        println!("{}", summary_line(&format!("episode {k}"), &ep.summary, term));
    }
    if results.len() > 1 {
        let mean = EvalSummary::mean(&results.iter().map(|e| e.summary).collect::<Vec<_>>());
        println!("{}", summary_line("mean", &mean, "-"));
    }
    println!("per-step trace written to {}", path.display());
    Ok(())
}

pub fn cmd_check(suite: Option<&str>, corrupt_barrier: bool) -> CmdResult {
    use flipper_core::check::{run_all, run_suite, CheckOptions};
    let opts = CheckOptions { corrupt_barrier };
    let outcomes = match suite {
        Some(name) => vec![run_suite(name, &opts)
            .ok_or_else(|| Failure::Config(anyhow::anyhow!("unknown suite `{name}`")))?],
        None => run_all(&opts),
    };
    let mut all = true;
    for o in &outcomes {
        all &= o.passed;
        println!(
            "{} {:<18} {:>7.2}s  {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.seconds,
            o.detail
        );
    }
    if all {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}
