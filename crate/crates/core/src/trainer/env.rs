use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::policy::StateLayout;
use crate::sim::{WorldConfig, WorldState};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    /// Training reward per agent.
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// Cooperative environment with decentralized observations and a
/// centralized state whose layout the critic understands.
pub trait MultiAgentEnv: Clone + Send + Sync + Serialize + DeserializeOwned {
    fn num_agents(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn layout(&self) -> StateLayout;
    fn observe(&self, agent: usize) -> Result<Vec<f64>>;
    fn global_state(&self) -> Vec<f64>;
    fn step(&mut self, actions: &[usize]) -> Result<EnvStep>;
    /// Start a fresh episode.
    fn reset(&mut self);
    /// Give a cloned environment its own stream of episode starts.
    fn reseed(&mut self, _seed: u64) {}
}

/// The UAV world as a training environment. Every episode restarts from the
/// same initial state (same sensor field).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldEnv {
    pub world: WorldState,
    initial: WorldState,
}

impl WorldEnv {
    pub fn new(config: WorldConfig) -> Result<Self> {
        let world = WorldState::new(config)?;
        Ok(WorldEnv {
            initial: world.clone(),
            world,
        })
    }
}

impl MultiAgentEnv for WorldEnv {
    fn num_agents(&self) -> usize {
        self.world.uavs.len()
    }

    fn obs_dim(&self) -> usize {
        self.world.config().obs_dim()
    }

    fn layout(&self) -> StateLayout {
        StateLayout {
            uav_tokens: self.world.uavs.len(),
            scalar_tokens: self.world.sensors.len(),
        }
    }

    fn observe(&self, agent: usize) -> Result<Vec<f64>> {
        Ok(self.world.observe(agent)?.to_vec())
    }

    fn global_state(&self) -> Vec<f64> {
        self.world.global_state()
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        let out = self.world.step(actions)?;
        Ok(EnvStep {
            rewards: out.rewards,
            done: out.done,
        })
    }

    fn reset(&mut self) {
        self.world = self.initial.clone();
    }
}
