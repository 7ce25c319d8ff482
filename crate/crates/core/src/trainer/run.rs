use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Trainer, TrainerState, TrainConfig, TrainLogRecord, WorldEnv};
use crate::par::Exec;
use crate::eval::{mean_aoi, peak_aoi, run_episode};
use crate::policy::{ActorController, Algorithm, PolicyCheckpoint};
use crate::sim::{WorldConfig, WorldState};
use crate::{Error, Result};

pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const EVAL_LOG: &str = "eval_log.jsonl";
pub const TRAINER_STATE: &str = "trainer_state.json";

/// Greedy evaluation episode run at a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub config_hash: String,
    pub update: u64,
    pub env_steps: u64,
    pub episode_reward: f64,
    pub peak_aoi: f64,
    pub mean_aoi: f64,
    pub depletions: usize,
    /// Checkpoint directory relative to the run directory.
    pub checkpoint: String,
}

#[derive(Debug, Clone)]
pub struct TrainPaths {
    pub run_dir: PathBuf,
    /// Checkpoint directory to resume from.
    pub resume_from: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<TrainLogRecord>,
    pub evals: Vec<EvalRecord>,
    pub final_checkpoint: PathBuf,
    /// Checkpoint with the highest evaluation reward (earliest on ties).
    pub best_checkpoint: PathBuf,
}

fn append_jsonl<T: Serialize>(path: &Path, rec: &T) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(rec).expect("record serializes");
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

fn rewrite_jsonl<T: Serialize>(path: &Path, recs: &[T]) -> Result<()> {
    File::create(path).map_err(|e| Error::io(path, e))?;
    recs.iter().try_for_each(|r| append_jsonl(path, r))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format(path, e)))
        .collect()
}

fn checkpoint(
    trainer: &Trainer<WorldEnv>,
    world: &WorldConfig,
    algorithm: Algorithm,
    run_dir: &Path,
) -> Result<EvalRecord> {
    let rel = format!("checkpoints/step_{:010}", trainer.env_steps);
    let dir = run_dir.join(&rel);
    let l = &trainer.learner;
    PolicyCheckpoint::learned(
        algorithm,
        world,
        &trainer.config_hash,
        trainer.env_steps,
        trainer.seed,
        l.actor.clone(),
        l.critic.clone(),
    )
    .save(&dir)?;
    let state_path = dir.join(TRAINER_STATE);
    let doc = serde_json::to_string(&trainer.to_state()).expect("trainer state serializes");
    fs::write(&state_path, doc).map_err(|e| Error::io(&state_path, e))?;

    let mut ctl = ActorController::new(l.actor.clone(), true, trainer.seed);
    let log = run_episode(WorldState::new(world.clone())?, &mut ctl)?;
    Ok(EvalRecord {
        config_hash: trainer.config_hash.clone(),
        update: trainer.updates,
        env_steps: trainer.env_steps,
        episode_reward: log.episode_reward(),
        peak_aoi: peak_aoi(&log)?,
        mean_aoi: mean_aoi(&log)?,
        depletions: log.depletions(),
        checkpoint: rel,
    })
}

/// Train on the UAV world, logging every update to `train_log.jsonl` and
/// writing a checkpoint plus a greedy evaluation episode every `eval_every`
/// environment steps and at the end. `stop_after` ends the run early (for
/// interruption tests); resuming from any written checkpoint continues the
/// run as if it had never stopped.
pub fn train_world(
    world: &WorldConfig,
    train: &TrainConfig,
    algorithm: Algorithm,
    seed: u64,
    config_hash: &str,
    paths: &TrainPaths,
    stop_after: Option<u64>,
    exec: Exec,
) -> Result<TrainOutcome> {
    if !algorithm.is_learned() {
        return Err(Error::Argument(format!("{} is not a trainable algorithm", algorithm.name())));
    }
    let run_dir = &paths.run_dir;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let (train_log, eval_log) = (run_dir.join(TRAIN_LOG), run_dir.join(EVAL_LOG));

    let (mut trainer, mut evals) = match &paths.resume_from {
        Some(dir) => {
            let p = dir.join(TRAINER_STATE);
            let doc = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let state: TrainerState<WorldEnv> = serde_json::from_str(&doc).map_err(|e| Error::format(&p, e))?;
            if state.config_hash != config_hash {
                return Err(Error::Compatibility(format!(
                    "checkpoint config hash {} does not match run config hash {config_hash}",
                    state.config_hash
                )));
            }
            let trainer = Trainer::from_state(state)?;
            let evals: Vec<EvalRecord> = if eval_log.exists() {
                read_jsonl(&eval_log)?
            } else {
                Vec::new()
            };
            let evals: Vec<EvalRecord> = evals.into_iter().filter(|e| e.env_steps <= trainer.env_steps).collect();
            rewrite_jsonl(&train_log, &trainer.log)?;
            rewrite_jsonl(&eval_log, &evals)?;
            (trainer, evals)
        }
        None => {
            let trainer = Trainer::new(WorldEnv::new(world.clone())?, train.clone(), seed, config_hash)?;
            rewrite_jsonl::<TrainLogRecord>(&train_log, &[])?;
            rewrite_jsonl::<EvalRecord>(&eval_log, &[])?;
            (trainer, Vec::new())
        }
    };

    trainer.exec = exec;
    let every = trainer.config.eval_every;
    while !trainer.finished() {
        if stop_after.is_some_and(|s| trainer.env_steps >= s) {
            break;
        }
        let before = trainer.env_steps;
        let rec = trainer.update()?;
        append_jsonl(&train_log, &rec)?;
        log::info!(
            "update {} env_steps {} reward {:?} entropy {:.3}",
            rec.update,
            rec.env_steps,
            rec.mean_episode_reward,
            rec.entropy
        );
        let at_eval = every > 0 && trainer.env_steps / every > before / every;
        if at_eval || trainer.finished() {
            let e = checkpoint(&trainer, world, algorithm, run_dir)?;
            append_jsonl(&eval_log, &e)?;
            evals.push(e);
        }
    }

    let last = evals
        .last()
        .ok_or_else(|| Error::Argument("training stopped before the first checkpoint".into()))?;
    let best = evals
        .iter()
        .fold(last, |b, e| if e.episode_reward > b.episode_reward || (e.episode_reward == b.episode_reward && e.env_steps < b.env_steps) { e } else { b });
    Ok(TrainOutcome {
        final_checkpoint: run_dir.join(&last.checkpoint),
        best_checkpoint: run_dir.join(&best.checkpoint),
        log: trainer.log,
        evals,
    })
}
