use serde::{Deserialize, Serialize};

use crate::autograd::AdamConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub ppo_epochs: usize,
    /// Truncated-BPTT length; hidden states are snapshotted at chunk starts.
    pub chunk_len: usize,
    /// Number of `(env, chunk)` groups per minibatch.
    pub minibatch_chunks: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub grad_clip_norm: f64,
    pub rollout_len: usize,
    pub num_parallel_envs: usize,
    pub total_env_steps: u64,
    /// Greedy evaluation and checkpoint cadence in environment steps (0 disables).
    pub eval_every: u64,
    pub seeds: Vec<u64>,
    /// LSTM actor (false: feed-forward actor).
    pub use_lstm: bool,
    /// Dual-attention critic (false: MLP critic).
    pub dual_attention: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            ppo_epochs: 4,
            chunk_len: 16,
            minibatch_chunks: 16,
            entropy_coef: 0.01,
            value_coef: 0.5,
            lr: 3e-4,
            grad_clip_norm: 0.5,
            rollout_len: 128,
            num_parallel_envs: 8,
            total_env_steps: 200_000,
            eval_every: 20_000,
            seeds: vec![0],
            use_lstm: true,
            dual_attention: true,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            clip_norm: Some(self.grad_clip_norm),
            ..AdamConfig::default()
        }
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.rollout_len * self.num_parallel_envs) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |f: &str, m: &str| Err(Error::config(f, m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma", "gamma must lie in (0,1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda", "gae_lambda must lie in [0,1]");
        }
        if !(self.clip_eps > 0.0) {
            return fail("clip_eps", "clip_eps must be > 0");
        }
        if self.ppo_epochs == 0 {
            return fail("ppo_epochs", "ppo_epochs must be >= 1");
        }
        if self.chunk_len == 0 || self.rollout_len == 0 || self.rollout_len % self.chunk_len != 0 {
            return fail("chunk_len", "chunk_len must divide rollout_len");
        }
        if self.minibatch_chunks == 0 {
            return fail("minibatch_chunks", "minibatch_chunks must be >= 1");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return fail("entropy_coef", "loss coefficients must be >= 0");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail("lr", "lr must be >= 0");
        }
        if !(self.grad_clip_norm > 0.0) {
            return fail("grad_clip_norm", "grad_clip_norm must be > 0");
        }
        if self.num_parallel_envs == 0 {
            return fail("num_parallel_envs", "num_parallel_envs must be >= 1");
        }
        if self.total_env_steps == 0 {
            return fail("total_env_steps", "total_env_steps must be >= 1");
        }
        if self.seeds.is_empty() {
            return fail("seeds", "seeds must not be empty");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn chunk_must_divide_rollout() {
        let c = TrainConfig { rollout_len: 100, chunk_len: 16, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "chunk_len"));
        let c = TrainConfig { gamma: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = TrainConfig { gae_lambda: 1.1, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
