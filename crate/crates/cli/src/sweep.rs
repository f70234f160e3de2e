//! Ablation grids: every (variant, seed) cell is trained, evaluated under
//! nominal conditions and summarized in one comparison CSV.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use flipper_core::learn::checkpoint::Checkpoint;
use flipper_core::learn::eval::{evaluate, EvalSummary};
use flipper_core::learn::train::fmt_float;
use flipper_core::learn::{train, ResolvedConfig, RunConfig};
use flipper_core::rewards::AerialRewardMode;
use flipper_core::{EnvConfig, HopperModel};

use crate::{resolve_output, CmdResult, Failure};

pub const SWEEP_SCHEMA_VERSION: u32 = 1;

pub const SWEEP_COLUMNS: [&str; 15] = [
    "schema_version",
    "axis",
    "variant",
    "eval_variant",
    "seed",
    "config_hash",
    "status",
    "total_return",
    "length",
    "aerial_cav_mean",
    "peak_cav",
    "net_pitch",
    "max_flight",
    "peak_abs_tau_load",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    RewardMode,
    Mor,
    LoadReg,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::RewardMode => "reward-mode",
            Axis::Mor => "mor",
            Axis::LoadReg => "load-reg",
        }
    }

    /// Training variants with the env config each one trains under.
    fn variants(self, base: &EnvConfig) -> Vec<(&'static str, EnvConfig)> {
        let with = |f: &dyn Fn(&mut EnvConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            Axis::RewardMode => vec![
                ("cav", with(&|c| c.aerial_reward_mode = AerialRewardMode::Cav)),
                ("cam", with(&|c| c.aerial_reward_mode = AerialRewardMode::Cam)),
                ("bav", with(&|c| c.aerial_reward_mode = AerialRewardMode::Bav)),
            ],
            Axis::Mor => vec![
                ("trained_mor_on", with(&|c| c.use_mor = true)),
                ("trained_mor_off", with(&|c| c.use_mor = false)),
            ],
            Axis::LoadReg => vec![
                ("load_reg_on", with(&|c| c.use_load_reg = true)),
                ("load_reg_off", with(&|c| c.use_load_reg = false)),
            ],
        }
    }

    /// Evaluation conditions applied to a policy trained under `trained`.
    fn evaluations(self, trained: &EnvConfig) -> Vec<(&'static str, EnvConfig)> {
        match self {
            Axis::Mor => [("eval_mor_on", true), ("eval_mor_off", false)]
                .into_iter()
                .map(|(name, on)| {
                    let mut c = trained.clone();
                    c.use_mor = on;
                    (name, c)
                })
                .collect(),
            _ => vec![("nominal", trained.clone())],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub variant: &'static str,
    pub eval_variant: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub result: std::result::Result<EvalSummary, String>,
}

impl Cell {
    fn record(&self, axis: Axis) -> Vec<String> {
        let mut row = vec![
            SWEEP_SCHEMA_VERSION.to_string(),
            axis.name().to_string(),
            self.variant.to_string(),
            self.eval_variant.to_string(),
            self.seed.to_string(),
            self.config_hash.clone(),
        ];
        match &self.result {
            Ok(s) => {
                row.push("ok".into());
                row.push(fmt_float(s.total_return));
                row.push(s.length.to_string());
                for x in [s.aerial_cav_mean, s.peak_cav, s.net_pitch, s.max_flight, s.peak_load] {
                    row.push(fmt_float(x));
                }
                row.push(String::new());
            }
            Err(e) => {
                row.push("aborted".into());
                row.extend(vec![String::new(); 7]);
                row.push(e.clone());
            }
        }
        row
    }
}

fn train_and_evaluate(
    axis: Axis,
    run: RunConfig,
    model: &HopperModel,
    out: &Path,
) -> std::result::Result<Vec<(&'static str, EvalSummary)>, String> {
    let episodes = run.learner.eval_episodes.max(1);
    let networks = run.learner.networks.clone();
    let trained_env = run.env.clone();
    let resolved = ResolvedConfig::new(run, model);
    let outcome = train(resolved, model.clone(), out, crate::log_progress).map_err(|e| e.to_string())?;
    let agent = Checkpoint::load(&outcome.final_checkpoint)
        .and_then(|c| c.to_agent(&networks))
        .map_err(|e| e.to_string())?;
    let model = Arc::new(model.clone());
    axis.evaluations(&trained_env)
        .into_iter()
        .map(|(name, env)| {
            let eps = evaluate(&agent, &model, &env, episodes).map_err(|e| e.to_string())?;
            Ok((name, EvalSummary::mean(&eps.iter().map(|e| e.summary).collect::<Vec<_>>())))
        })
        .collect()
}

/// Runs the grid for `seeds` consecutive seeds starting at the base seed.
/// Returns the comparison CSV path and the cells; a failed cell is recorded
/// and the remaining cells still run.
pub fn run_sweep(
    base: &RunConfig,
    model: &HopperModel,
    axis: Axis,
    seeds: u64,
) -> CmdResult<(PathBuf, Vec<Cell>)> {
    let root = resolve_output(&base.output_dir);
    let mut cells = Vec::new();
    for (variant, env) in axis.variants(&base.env) {
        for k in 0..seeds {
            let seed = base.seed + k;
            let run = RunConfig {
                env: env.clone(),
                seed,
                output_dir: root.join(format!("sweep_{}", axis.name())).join(variant).join(format!("seed_{seed}")),
                ..base.clone()
            };
            let config_hash = ResolvedConfig::new(run.clone(), model).hash();
            log::info!("sweep {} cell {variant} seed {seed}", axis.name());
            let out = run.output_dir.clone();
            match train_and_evaluate(axis, run, model, &out) {
                Ok(results) => {
                    for (eval_variant, summary) in results {
                        cells.push(Cell {
                            variant,
                            eval_variant,
                            seed,
                            config_hash: config_hash.clone(),
                            result: Ok(summary),
                        });
                    }
                }
                Err(e) => {
                    log::error!("cell {variant} seed {seed} aborted: {e}");
                    for (eval_variant, _) in axis.evaluations(&env) {
                        cells.push(Cell {
                            variant,
                            eval_variant,
                            seed,
                            config_hash: config_hash.clone(),
                            result: Err(e.clone()),
                        });
                    }
                }
            }
        }
    }

    std::fs::create_dir_all(&root).map_err(|e| Failure::Runtime(e.into()))?;
    let path = root.join(format!("sweep_{}.csv", axis.name()));
    let write = || -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(SWEEP_COLUMNS)?;
        for c in &cells {
            w.write_record(c.record(axis))?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(Failure::Runtime)?;
    Ok((path, cells))
}

pub fn cmd_sweep(config: Option<&Path>, axis: Axis, seeds: u64) -> CmdResult {
    if seeds == 0 {
        return Err(Failure::Config(anyhow::anyhow!("--seeds must be at least 1")));
    }
    let (base, model) = match config {
        Some(path) => crate::load_config(path)?,
        None => {
            let base = RunConfig::default();
            let model = base.load_model().map_err(crate::classify)?;
            (base, model)
        }
    };
    let (path, cells) = run_sweep(&base, &model, axis, seeds)?;
    for c in &cells {
        let label = format!("{} / {} / seed {}", c.variant, c.eval_variant, c.seed);
        match &c.result {
            Ok(s) => println!("{}", crate::summary_line(&label, s, "-")),
            Err(e) => println!("{label}: aborted: {e}"),
        }
    }
    println!("comparison written to {}", path.display());
    let aborted = cells.iter().filter(|c| c.result.is_err()).count();
    if aborted > 0 {
        return Err(Failure::Runtime(anyhow::anyhow!("{aborted} sweep cells aborted")));
    }
    Ok(())
}
