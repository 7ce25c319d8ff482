use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{collect_rollout, ppo_update, EnvSlot, Learner, MultiAgentEnv, TrainConfig};
use crate::autograd::{Adam, ParamStore};
use crate::par::Exec;
use crate::policy::{ActorConfig, ActorParams, CriticConfig, CriticKind, CriticParams};
use crate::{Error, Result};

pub const TRAINER_STATE_FORMAT: &str = "wlpt-trainer";
pub const TRAINER_STATE_VERSION: u32 = 1;

/// One line of the training log, written after every update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub config_hash: String,
    pub update: u64,
    pub env_steps: u64,
    /// Mean return of the episodes that ended during this rollout.
    pub mean_episode_reward: Option<f64>,
    pub episodes: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    pub alpha: Option<f64>,
    /// Seconds since training started, including time before a resume.
    pub wall_clock_s: f64,
}

/// Rollout workers plus learner. All randomness comes from `seed`: stream 0
/// initializes parameters, stream 1 shuffles minibatches and stream `2 + e`
/// drives env `e`.
pub struct Trainer<E> {
    pub config: TrainConfig,
    pub config_hash: String,
    pub seed: u64,
    pub learner: Learner,
    pub slots: Vec<EnvSlot<E>>,
    pub rng: ChaCha8Rng,
    pub env_steps: u64,
    pub updates: u64,
    pub log: Vec<TrainLogRecord>,
    /// Rollout fan-out. Results do not depend on it.
    pub exec: Exec,
    elapsed_before: f64,
    started: Instant,
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s);
    r
}

impl<E: MultiAgentEnv> Trainer<E> {
    pub fn new(env: E, config: TrainConfig, seed: u64, config_hash: &str) -> Result<Self> {
        config.validate()?;
        let mut init = stream(seed, 0);
        let actor = ActorParams::init(ActorConfig::new(env.obs_dim(), config.use_lstm), &mut init);
        let kind = if config.dual_attention {
            CriticKind::DualAttention
        } else {
            CriticKind::Mlp
        };
        let critic = CriticParams::init(CriticConfig::new(env.layout(), kind), &mut init);
        let hd = actor.config.hidden_dim;
        let slots = (0..config.num_parallel_envs)
            .map(|e| {
                let mut env = env.clone();
                env.reseed(seed ^ (e as u64 + 1).wrapping_mul(0xA076_1D64_78BD_642F));
                env.reset();
                EnvSlot::new(env, hd, stream(seed, 2 + e as u64))
            })
            .collect();
        Ok(Trainer {
            learner: Learner::new(actor, critic, &config),
            config,
            config_hash: config_hash.to_string(),
            seed,
            slots,
            rng: stream(seed, 1),
            env_steps: 0,
            updates: 0,
            log: Vec::new(),
            exec: Exec::default(),
            elapsed_before: 0.0,
            started: Instant::now(),
        })
    }

    pub fn finished(&self) -> bool {
        self.env_steps >= self.config.total_env_steps
    }

    /// One rollout and one PPO update.
    pub fn update(&mut self) -> Result<TrainLogRecord> {
        let exec = self.exec;
        let buf = collect_rollout(&mut self.slots, &self.learner, &self.config, exec)?;
        let stats = ppo_update(&buf, &mut self.learner, &self.config, &mut self.rng)?;
        self.env_steps += self.config.steps_per_update();
        self.updates += 1;
        let episodes = buf.episode_returns.len();
        let rec = TrainLogRecord {
            config_hash: self.config_hash.clone(),
            update: self.updates,
            env_steps: self.env_steps,
            mean_episode_reward: (episodes > 0)
                .then(|| buf.episode_returns.iter().sum::<f64>() / episodes as f64),
            episodes,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
            grad_norm: stats.grad_norm,
            alpha: stats.alpha,
            wall_clock_s: self.elapsed_before + self.started.elapsed().as_secs_f64(),
        };
        self.log.push(rec.clone());
        Ok(rec)
    }

    pub fn to_state(&self) -> TrainerState<E> {
        TrainerState {
            format: TRAINER_STATE_FORMAT.into(),
            version: TRAINER_STATE_VERSION,
            config: self.config.clone(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            actor_config: self.learner.actor.config,
            actor: self.learner.actor.store.to_json(),
            critic_config: self.learner.critic.config,
            critic: self.learner.critic.store.to_json(),
            actor_opt: self.learner.actor_opt.clone(),
            critic_opt: self.learner.critic_opt.clone(),
            slots: self.slots.clone(),
            rng: self.rng.clone(),
            env_steps: self.env_steps,
            updates: self.updates,
            log: self.log.clone(),
            elapsed_s: self.elapsed_before + self.started.elapsed().as_secs_f64(),
        }
    }

    pub fn from_state(state: TrainerState<E>) -> Result<Self> {
        if state.format != TRAINER_STATE_FORMAT || state.version != TRAINER_STATE_VERSION {
            return Err(Error::Argument(format!(
                "unsupported trainer state {} v{}",
                state.format, state.version
            )));
        }
        state.config.validate()?;
        let actor = ActorParams {
            config: state.actor_config,
            store: ParamStore::from_json(&state.actor)?,
        };
        let critic = CriticParams {
            config: state.critic_config,
            store: ParamStore::from_json(&state.critic)?,
        };
        Ok(Trainer {
            config: state.config,
            config_hash: state.config_hash,
            seed: state.seed,
            learner: Learner {
                actor,
                critic,
                actor_opt: state.actor_opt,
                critic_opt: state.critic_opt,
            },
            slots: state.slots,
            rng: state.rng,
            env_steps: state.env_steps,
            updates: state.updates,
            log: state.log,
            exec: Exec::default(),
            elapsed_before: state.elapsed_s,
            started: Instant::now(),
        })
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "E: Serialize + DeserializeOwned")]
pub struct TrainerState<E> {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub config_hash: String,
    pub seed: u64,
    pub actor_config: ActorConfig,
    pub actor: String,
    pub critic_config: CriticConfig,
    pub critic: String,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub slots: Vec<EnvSlot<E>>,
    pub rng: ChaCha8Rng,
    pub env_steps: u64,
    pub updates: u64,
    pub log: Vec<TrainLogRecord>,
    pub elapsed_s: f64,
}
