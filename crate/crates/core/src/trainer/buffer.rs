use serde::{Deserialize, Serialize};

/// Time-major rollout storage. Per-agent arrays are laid out
/// `[t][env][agent][..]`, per-env arrays `[t][env][..]`, and hidden snapshots
/// `[chunk][env][agent][hidden]`, taken at the start of every chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub rollout_len: usize,
    pub num_envs: usize,
    pub num_agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub hidden_dim: usize,
    pub chunk_len: usize,
    pub obs: Vec<f64>,
    pub hidden_h: Vec<f64>,
    pub hidden_c: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// The episode ended with this step (the env was reset afterwards).
    pub dones: Vec<bool>,
    pub states: Vec<f64>,
    /// Critic values of the state following the last step, `[env][agent]`.
    pub bootstrap: Vec<f64>,
    /// Returns of episodes that finished during collection (agent-mean reward summed over steps).
    pub episode_returns: Vec<f64>,
}

impl RolloutBuffer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rollout_len: usize,
        num_envs: usize,
        num_agents: usize,
        obs_dim: usize,
        state_dim: usize,
        hidden_dim: usize,
        chunk_len: usize,
    ) -> Self {
        let n = rollout_len * num_envs * num_agents;
        let chunks = rollout_len / chunk_len.max(1);
        RolloutBuffer {
            rollout_len,
            num_envs,
            num_agents,
            obs_dim,
            state_dim,
            hidden_dim,
            chunk_len,
            obs: vec![0.0; n * obs_dim],
            hidden_h: vec![0.0; chunks * num_envs * num_agents * hidden_dim],
            hidden_c: vec![0.0; chunks * num_envs * num_agents * hidden_dim],
            actions: vec![0; n],
            log_probs: vec![0.0; n],
            rewards: vec![0.0; n],
            values: vec![0.0; n],
            dones: vec![false; rollout_len * num_envs],
            states: vec![0.0; rollout_len * num_envs * state_dim],
            bootstrap: vec![0.0; num_envs * num_agents],
            episode_returns: Vec::new(),
        }
    }

    /// `(rollout_len, num_envs, num_agents)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rollout_len, self.num_envs, self.num_agents)
    }

    pub fn num_chunks(&self) -> usize {
        self.rollout_len / self.chunk_len
    }

    /// Flat index of `(t, env, agent)` in per-agent arrays.
    pub fn at(&self, t: usize, env: usize, agent: usize) -> usize {
        (t * self.num_envs + env) * self.num_agents + agent
    }

    pub fn obs_row(&self, t: usize, env: usize, agent: usize) -> &[f64] {
        let i = self.at(t, env, agent) * self.obs_dim;
        &self.obs[i..i + self.obs_dim]
    }

    pub fn state_row(&self, t: usize, env: usize) -> &[f64] {
        let i = (t * self.num_envs + env) * self.state_dim;
        &self.states[i..i + self.state_dim]
    }

    pub fn done(&self, t: usize, env: usize) -> bool {
        self.dones[t * self.num_envs + env]
    }

    /// Hidden snapshot `(h, c)` for the start of `chunk`.
    pub fn hidden(&self, chunk: usize, env: usize, agent: usize) -> (&[f64], &[f64]) {
        let i = ((chunk * self.num_envs + env) * self.num_agents + agent) * self.hidden_dim;
        (&self.hidden_h[i..i + self.hidden_dim], &self.hidden_c[i..i + self.hidden_dim])
    }

    /// Per-agent series for one env and agent over time.
    pub fn series(&self, data: &[f64], env: usize, agent: usize) -> Vec<f64> {
        (0..self.rollout_len).map(|t| data[self.at(t, env, agent)]).collect()
    }
}
