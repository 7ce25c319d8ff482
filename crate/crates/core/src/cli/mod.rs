//! Command-line front end: configuration schema, subcommands and run
//! directory layout.
//!
//! ```text
//! run_dir/
//!   config.toml                      resolved configuration, hash in the first line
//!   seed_<s>/train_log.jsonl         one record per PPO update
//!   seed_<s>/eval_log.jsonl          greedy evaluation at each checkpoint
//!   seed_<s>/checkpoints/step_<n>/   policy archive + trainer state
//!   eval/summary.json, eval/trajectories/*.csv
//!   sweep.json, simulate/*.{csv,json}, gradcheck.json, oracle.json
//! ```

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::{parse_config, EvalSection, PathsSection, RunConfig, SweepSection, RUN_ROOT_ENV};

use crate::eval::{brute_force_oracle, efficiency_sweep, mean_aoi, peak_aoi, run_episode, write_trajectory};
use crate::par::Exec;
use crate::policy::{network_gradchecks, Algorithm, PolicyCheckpoint, GRADCHECK_TOLERANCE};
use crate::sim::{SimError, WorldConfig, WorldState};
use crate::trainer::{evaluate, train_world, TrainPaths};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "wlpt", version, about = "Multi-UAV data collection with laser charging: simulate, train, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration (defaults when omitted).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub algo: Option<Algorithm>,
    /// Feed-forward actor instead of the LSTM.
    #[arg(long)]
    pub no_lstm: bool,
    /// MLP critic instead of dual attention.
    #[arg(long)]
    pub no_dual_attention: bool,
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Use checkpoints whose world hash does not match.
    #[arg(long)]
    pub force: bool,
    /// Single worker.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 40 m square, one UAV, two corner sensors, horizon 6.
    Tiny,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one policy per configured seed.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint directory written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Greedy evaluation episodes with per-episode trajectory CSVs.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Peak AoI across laser-to-electricity efficiencies.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// One episode with a scripted, random or saved policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Finite-difference check of every network block over five seeds.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Exhaustive search for the best action sequence of a one-UAV world.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Sweep { common, .. }
            | Command::Simulate { common, .. }
            | Command::Gradcheck { common }
            | Command::Oracle { common, .. } => common,
        }
    }
}

/// Configuration after applying command-line overrides.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub hash: String,
    pub run_dir: PathBuf,
    pub exec: Exec,
    pub force: bool,
}

/// Load the config file (if any) and apply flags. Disabling both the LSTM
/// and the attention critic of a learned algorithm yields plain MAPPO.
pub fn resolve(common: &Common) -> Result<Resolved> {
    let mut cfg = match &common.config {
        Some(p) => {
            let doc = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config(&doc)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.world.seed = s;
        cfg.train.seeds = vec![s];
        cfg.eval.seeds = vec![s];
        cfg.sweep.seeds = vec![s];
    }
    if let Some(a) = common.algo {
        cfg.algorithm = a;
    }
    if cfg.algorithm == Algorithm::Mappo {
        cfg.train.use_lstm = false;
        cfg.train.dual_attention = false;
    }
    if common.no_lstm {
        cfg.train.use_lstm = false;
    }
    if common.no_dual_attention {
        cfg.train.dual_attention = false;
    }
    if cfg.algorithm.is_learned() && !cfg.train.use_lstm && !cfg.train.dual_attention {
        cfg.algorithm = Algorithm::Mappo;
    }
    if let Some(d) = &common.run_dir {
        cfg.paths.run_dir = d.clone();
    }
    cfg.validate()?;
    Ok(Resolved {
        hash: cfg.hash(),
        run_dir: cfg.resolved_run_dir(),
        exec: if common.sequential { Exec::Sequential } else { Exec::Parallel },
        force: common.force,
        config: cfg,
    })
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"))
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: T,
}

fn policy_for(r: &Resolved, checkpoint: Option<&PathBuf>, world: &WorldConfig) -> Result<PolicyCheckpoint> {
    let alg = r.config.algorithm;
    let path = checkpoint.or(r.config.paths.checkpoint_in.as_ref());
    match path {
        Some(p) => {
            let ck = PolicyCheckpoint::load(p)?;
            ck.check_compatible(world, r.force)?;
            Ok(ck)
        }
        None if alg.is_learned() => Err(Error::Argument(format!(
            "{} needs a checkpoint (--checkpoint or paths.checkpoint_in)",
            alg.name()
        ))),
        None => Ok(PolicyCheckpoint::scripted(alg, world, &r.hash, world.seed)),
    }
}

fn cmd_train(r: &Resolved, resume: Option<&PathBuf>) -> Result<()> {
    let cfg = &r.config;
    if !cfg.algorithm.is_learned() {
        return Err(Error::Argument(format!("{} is scripted; nothing to train", cfg.algorithm.name())));
    }
    if resume.is_some() && cfg.train.seeds.len() != 1 {
        return Err(Error::Argument("--resume needs exactly one training seed (use --seed)".into()));
    }
    #[derive(Serialize)]
    struct RunSummary {
        seed: u64,
        env_steps: u64,
        final_checkpoint: PathBuf,
        best_checkpoint: PathBuf,
        final_eval_reward: f64,
    }
    let mut runs = Vec::new();
    for &seed in &cfg.train.seeds {
        let world = WorldConfig { seed, ..cfg.world.clone() };
        let paths = TrainPaths {
            run_dir: r.run_dir.join(format!("seed_{seed}")),
            resume_from: resume.cloned(),
        };
        let out = train_world(&world, &cfg.train, cfg.algorithm, seed, &r.hash, &paths, None, r.exec)?;
        let last = out.evals.last().expect("training writes a final checkpoint");
        println!(
            "seed {seed}: {} env steps, final greedy reward {:.4}, peak AoI {:.0} s, checkpoint {}",
            last.env_steps,
            last.episode_reward,
            last.peak_aoi,
            out.final_checkpoint.display()
        );
        runs.push(RunSummary {
            seed,
            env_steps: last.env_steps,
            final_checkpoint: out.final_checkpoint,
            best_checkpoint: out.best_checkpoint,
            final_eval_reward: last.episode_reward,
        });
    }
    write_json(&r.run_dir.join("train_summary.json"), &Stamped { config_hash: &r.hash, body: serde_json::json!({ "runs": runs }) })
}

fn cmd_eval(r: &Resolved, checkpoint: Option<&PathBuf>) -> Result<()> {
    let cfg = &r.config;
    let policy = policy_for(r, checkpoint, &cfg.world)?;
    let (summary, logs) = evaluate(&policy, &cfg.world, cfg.eval.n_episodes, &cfg.eval.seeds, r.force, r.exec)?;
    let dir = r.run_dir.join("eval");
    for (m, log) in summary.episodes.iter().zip(&logs) {
        write_trajectory(
            &dir.join("trajectories").join(format!("seed_{}_ep_{}.csv", m.seed, m.episode)),
            log,
            &r.hash,
        )?;
    }
    write_json(&dir.join("summary.json"), &Stamped { config_hash: &r.hash, body: &summary })?;
    println!(
        "{}: reward {:.4} ± {:.4}, peak AoI {:.1} ± {:.1} s (median {:.1}), mean AoI {:.1} s, depletions {:.2}",
        summary.algorithm.name(),
        summary.mean_reward,
        summary.std_reward,
        summary.mean_peak_aoi,
        summary.std_peak_aoi,
        summary.median_peak_aoi,
        summary.mean_aoi,
        summary.mean_depletions
    );
    Ok(())
}

fn cmd_sweep(r: &Resolved, checkpoint: Option<&PathBuf>) -> Result<()> {
    let cfg = &r.config;
    let policy = policy_for(r, checkpoint, &cfg.world)?;
    let res = efficiency_sweep(&policy, &cfg.sweep.etas, &cfg.sweep.seeds, &cfg.world, &r.hash, r.force, r.exec)?;
    write_json(&r.run_dir.join("sweep.json"), &res)?;
    for p in &res.points {
        println!("eta {:.3}: median peak AoI {:.1} s", p.eta_pv, p.median_peak_aoi);
    }
    println!("spearman rho {:.4}", res.spearman_rho);
    Ok(())
}

fn cmd_simulate(r: &Resolved, checkpoint: Option<&PathBuf>) -> Result<()> {
    let world = &r.config.world;
    let policy = policy_for(r, checkpoint, world)?;
    let mut ctl = policy.controller(world.seed)?;
    let log = run_episode(WorldState::new(world.clone())?, ctl.as_mut())?;
    let dir = r.run_dir.join("simulate");
    write_trajectory(&dir.join("trajectory.csv"), &log, &r.hash)?;
    let metrics = serde_json::json!({
        "algorithm": policy.manifest.algorithm,
        "seed": world.seed,
        "steps": log.len(),
        "episode_reward": log.episode_reward(),
        "peak_aoi": peak_aoi(&log)?,
        "mean_aoi": mean_aoi(&log)?,
        "depletions": log.depletions(),
    });
    write_json(&dir.join("episode.json"), &Stamped { config_hash: &r.hash, body: &metrics })?;
    println!("{}", serde_json::to_string(&metrics).expect("metrics serialize"));
    Ok(())
}

/// Returns whether every block passed.
fn cmd_gradcheck(r: &Resolved) -> Result<bool> {
    let base = r.config.world.seed;
    let seeds: Vec<u64> = (0..5).map(|i| base.wrapping_add(i)).collect();
    let checks = network_gradchecks(&seeds, r.exec)?;
    let mut blocks: Vec<(String, f64)> = Vec::new();
    for c in &checks {
        match blocks.iter_mut().find(|(b, _)| *b == c.block) {
            Some((_, m)) => *m = m.max(c.max_rel_err),
            None => blocks.push((c.block.clone(), c.max_rel_err)),
        }
    }
    let ok = blocks.iter().all(|(_, e)| *e <= GRADCHECK_TOLERANCE);
    for (b, e) in &blocks {
        let verdict = if *e <= GRADCHECK_TOLERANCE { "ok" } else { "FAIL" };
        println!("{b:<24} max relative error {e:.3e} {verdict}");
    }
    write_json(
        &r.run_dir.join("gradcheck.json"),
        &Stamped { config_hash: &r.hash, body: serde_json::json!({ "tolerance": GRADCHECK_TOLERANCE, "checks": checks }) },
    )?;
    Ok(ok)
}

fn cmd_oracle(r: &Resolved, preset: Option<Preset>, horizon: Option<usize>) -> Result<()> {
    let world = match preset {
        Some(Preset::Tiny) => WorldConfig::tiny(),
        None => r.config.world.clone(),
    };
    let h = horizon.unwrap_or(world.horizon_steps);
    let res = brute_force_oracle(&world, h, r.exec)?;
    println!("best return {}", res.best_return);
    let names: Vec<String> = res
        .best_actions
        .iter()
        .map(|&a| crate::sim::Direction::from_index(a).map_or_else(|| "?".into(), |d| format!("{d:?}")))
        .collect();
    println!("best sequence {:?} ({})", res.best_actions, names.join(" "));
    write_json(&r.run_dir.join("oracle.json"), &Stamped { config_hash: &r.hash, body: &res })
}

/// Exit code for an error: 3 for invalid configuration, 4 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Sim(SimError::Config { .. }) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config { .. } | Error::Sim(SimError::Config { .. }) => "validation",
        Error::Compatibility(_) => "compatibility",
        Error::Io { .. } => "io",
        Error::Numeric(_) | Error::Tensor(_) => "numeric",
        Error::Format { .. } => "format",
        _ => "runtime",
    }
}

/// Execute a parsed command. Returns the process exit status.
pub fn execute(cli: Cli) -> i32 {
    let result = (|| -> Result<i32> {
        let r = resolve(cli.command.common())?;
        fs::create_dir_all(&r.run_dir).map_err(|e| Error::io(&r.run_dir, e))?;
        write(&r.run_dir.join("config.toml"), &r.config.echo())?;
        log::info!("config hash {} run dir {}", r.hash, r.run_dir.display());
        match &cli.command {
            Command::Train { resume, .. } => cmd_train(&r, resume.as_ref())?,
            Command::Eval { checkpoint, .. } => cmd_eval(&r, checkpoint.as_ref())?,
            Command::Sweep { checkpoint, .. } => cmd_sweep(&r, checkpoint.as_ref())?,
            Command::Simulate { checkpoint, .. } => cmd_simulate(&r, checkpoint.as_ref())?,
            Command::Gradcheck { .. } => return Ok(if cmd_gradcheck(&r)? { EXIT_OK } else { EXIT_RUNTIME }),
            Command::Oracle { preset, horizon, .. } => cmd_oracle(&r, *preset, *horizon)?,
        }
        Ok(EXIT_OK)
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", error_kind(&e));
            exit_code(&e)
        }
    }
}

/// Parse `argv` and run. Usage errors print clap's message and exit 2.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}
