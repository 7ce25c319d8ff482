//! Recurrent multi-agent PPO: vectorized rollouts that carry per-agent LSTM
//! state, generalized advantage estimation, clipped-surrogate updates with
//! truncated BPTT over fixed-length chunks, and the training loop.

mod buffer;
mod config;
mod corridor;
mod env;
mod evaluate;
mod gae;
mod ppo;
mod run;
mod state;

pub use buffer::RolloutBuffer;
pub use config::TrainConfig;
pub use corridor::{corridor_greedy_optimality, Corridor};
pub use env::{EnvStep, MultiAgentEnv, WorldEnv};
pub use evaluate::{evaluate, EpisodeMetrics, EvalSummary};
pub use gae::{compute_gae, normalize_advantages};
pub use ppo::{advantages_and_returns, collect_rollout, minibatch_graph, ppo_update, EnvSlot, Learner, MinibatchGraph, UpdateStats};
pub use run::{read_jsonl, train_world, EvalRecord, TrainOutcome, TrainPaths, EVAL_LOG, TRAINER_STATE, TRAIN_LOG};
pub use state::{TrainLogRecord, Trainer, TrainerState, TRAINER_STATE_FORMAT, TRAINER_STATE_VERSION};
