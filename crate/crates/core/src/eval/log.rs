use serde::{Deserialize, Serialize};

use crate::policy::Controller;
use crate::sim::WorldState;
use crate::{Error, Result};

/// Snapshot taken after one world step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Number of steps executed so far (1 for the first step).
    pub step: usize,
    pub actions: Vec<usize>,
    pub positions: Vec<[f64; 2]>,
    pub energies: Vec<f64>,
    pub active: Vec<bool>,
    /// The UAV held an LBD during this step.
    pub charging: Vec<bool>,
    /// Sensor ids collected by each UAV.
    pub collected: Vec<Vec<usize>>,
    /// AoI after the step.
    pub aoi: Vec<f64>,
    /// Age reached during the step: the pre-reset age for collected sensors.
    pub aoi_peak: Vec<f64>,
    pub rewards: Vec<f64>,
    pub team_reward: f64,
    pub depleted: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub num_uavs: usize,
    pub num_sensors: usize,
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Sum over steps of the agent-mean reward.
    pub fn episode_reward(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.rewards.iter().sum::<f64>() / s.rewards.len().max(1) as f64)
            .sum()
    }

    /// UAVs inactive at the end of the episode.
    pub fn depletions(&self) -> usize {
        self.steps
            .last()
            .map_or(0, |s| s.active.iter().filter(|a| !**a).count())
    }
}

/// Run `controller` from the world's current state until the episode ends.
pub fn run_episode(mut world: WorldState, controller: &mut dyn Controller) -> Result<EpisodeLog> {
    controller.reset(&world);
    let dt = world.config().dt_s;
    let mut log = EpisodeLog {
        seed: world.config().seed,
        num_uavs: world.uavs.len(),
        num_sensors: world.sensors.len(),
        steps: Vec::with_capacity(world.config().horizon_steps),
    };
    while !world.is_done() {
        let before: Vec<f64> = world.sensors.iter().map(|s| s.aoi_s + dt).collect();
        let actions = controller.act(&world)?;
        let out = world.step(&actions)?;
        let mut collected = vec![Vec::new(); world.uavs.len()];
        for &(u, s) in &out.collections {
            collected[u].push(s);
        }
        log.steps.push(StepRecord {
            step: world.step,
            actions,
            positions: world.uavs.iter().map(|u| u.xy).collect(),
            energies: world.uavs.iter().map(|u| u.energy_j).collect(),
            active: world.uavs.iter().map(|u| u.active).collect(),
            charging: world.uavs.iter().map(|u| u.charging_lbd.is_some()).collect(),
            collected,
            aoi: world.sensors.iter().map(|s| s.aoi_s).collect(),
            aoi_peak: before,
            rewards: out.rewards,
            team_reward: out.team_reward,
            depleted: out.depleted,
        });
    }
    Ok(log)
}

/// Largest age any sensor reached during the episode, in seconds.
pub fn peak_aoi(log: &EpisodeLog) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::Argument("peak_aoi of an empty log".into()));
    }
    Ok(log
        .steps
        .iter()
        .flat_map(|s| s.aoi_peak.iter().chain(&s.aoi))
        .fold(f64::NEG_INFINITY, |m, &a| m.max(a)))
}

/// Mean post-step AoI over steps and sensors.
pub fn mean_aoi(log: &EpisodeLog) -> Result<f64> {
    if log.is_empty() || log.num_sensors == 0 {
        return Err(Error::Argument("mean_aoi of an empty log".into()));
    }
    let total: f64 = log.steps.iter().flat_map(|s| &s.aoi).sum();
    Ok(total / (log.steps.len() * log.num_sensors) as f64)
}
