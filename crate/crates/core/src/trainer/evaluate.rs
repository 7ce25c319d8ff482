use serde::{Deserialize, Serialize};

use crate::eval::{mean, mean_aoi, median, peak_aoi, run_episode, std_dev, EpisodeLog};
use crate::par::Exec;
use crate::policy::{Algorithm, PolicyCheckpoint};
use crate::sim::{WorldConfig, WorldState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub episode: usize,
    pub reward: f64,
    pub peak_aoi: f64,
    pub mean_aoi: f64,
    pub depletions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub algorithm: Algorithm,
    pub episodes: Vec<EpisodeMetrics>,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_peak_aoi: f64,
    pub std_peak_aoi: f64,
    pub median_peak_aoi: f64,
    pub mean_aoi: f64,
    pub std_mean_aoi: f64,
    pub mean_depletions: f64,
    pub std_depletions: f64,
}

impl EvalSummary {
    fn from_episodes(algorithm: Algorithm, episodes: Vec<EpisodeMetrics>) -> Self {
        let col = |f: fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).collect::<Vec<_>>();
        let (r, p, m, d) = (
            col(|e| e.reward),
            col(|e| e.peak_aoi),
            col(|e| e.mean_aoi),
            col(|e| e.depletions as f64),
        );
        EvalSummary {
            algorithm,
            mean_reward: mean(&r),
            std_reward: std_dev(&r),
            mean_peak_aoi: mean(&p),
            std_peak_aoi: std_dev(&p),
            median_peak_aoi: median(&p),
            mean_aoi: mean(&m),
            std_mean_aoi: std_dev(&m),
            mean_depletions: mean(&d),
            std_depletions: std_dev(&d),
            episodes,
        }
    }
}

/// Deterministic-action episodes of a checkpoint. Each seed sets the world
/// seed; `n_episodes` episodes run per seed, each with its own controller
/// stream (only the random policy makes use of it).
pub fn evaluate(
    checkpoint: &PolicyCheckpoint,
    world: &WorldConfig,
    n_episodes: usize,
    seeds: &[u64],
    force: bool,
    exec: Exec,
) -> Result<(EvalSummary, Vec<EpisodeLog>)> {
    checkpoint.check_compatible(world, force)?;
    if n_episodes == 0 || seeds.is_empty() {
        return Err(Error::Argument("evaluate needs at least one episode and one seed".into()));
    }
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| (0..n_episodes).map(move |j| (s, j)))
        .collect();
    let results = exec.map(jobs, |(seed, j)| -> Result<(EpisodeMetrics, EpisodeLog)> {
        let cfg = WorldConfig { seed, ..world.clone() };
        let mut ctl = checkpoint.controller(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ j as u64)?;
        let log = run_episode(WorldState::new(cfg)?, ctl.as_mut())?;
        let m = EpisodeMetrics {
            seed,
            episode: j,
            reward: log.episode_reward(),
            peak_aoi: peak_aoi(&log)?,
            mean_aoi: mean_aoi(&log)?,
            depletions: log.depletions(),
        };
        Ok((m, log))
    });
    let (metrics, logs): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok((EvalSummary::from_episodes(checkpoint.manifest.algorithm, metrics), logs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(alg: Algorithm, w: &WorldConfig) -> PolicyCheckpoint {
        PolicyCheckpoint::scripted(alg, w, "test", 0)
    }

    #[test]
    fn repeat_is_identical() {
        let w = WorldConfig { horizon_steps: 50, ..Default::default() };
        let a = evaluate(&ckpt(Algorithm::Random, &w), &w, 1, &[3], false, Exec::Sequential).unwrap();
        let b = evaluate(&ckpt(Algorithm::Random, &w), &w, 1, &[3], false, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depleted_at_start() {
        let w = WorldConfig {
            battery_capacity_j: 1.0,
            laser_tx_power_w: 0.0,
            horizon_steps: 10,
            ..Default::default()
        };
        let (s, _) = evaluate(&ckpt(Algorithm::Greedy, &w), &w, 1, &[0], false, Exec::Sequential).unwrap();
        assert_eq!(s.episodes[0].depletions, 4);
    }

    #[test]
    fn mismatched_world_refused() {
        let w = WorldConfig { num_sensors: 20, ..Default::default() };
        let c = ckpt(Algorithm::Greedy, &WorldConfig::default());
        assert!(matches!(
            evaluate(&c, &w, 1, &[0], false, Exec::Sequential),
            Err(Error::Compatibility(_))
        ));
        assert!(evaluate(&c, &WorldConfig { horizon_steps: 5, ..w }, 1, &[0], true, Exec::Sequential).is_ok());
    }
}
