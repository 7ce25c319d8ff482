//! Learned and scripted controllers.
//!
//! The actor is shared by every UAV: an input MLP, an LSTM cell carrying a
//! per-agent hidden state across steps, and a softmax head over the eight
//! headings. The centralized critic embeds UAVs and sensors as a token set
//! and produces a per-agent local value and one global value from two
//! attention heads, blended by a learnable scalar.

mod actor;
mod checkpoint;
mod controller;
mod critic;
mod gradcheck;
mod sampling;
mod scripted;

pub use actor::{actor_forward, actor_forward_batch, actor_step, ActorConfig, ActorOut, ActorParams, HiddenState};
pub use checkpoint::{Algorithm, CheckpointManifest, PolicyCheckpoint, POLICY_FORMAT, POLICY_VERSION};
pub use controller::{ActorController, Controller, GreedyController, RandomController};
pub use critic::{
    critic_forward, critic_values, CriticConfig, CriticGraph, CriticKind, CriticOutput, CriticParams,
    StateLayout,
};
pub use gradcheck::{
    actor_gradcheck, critic_gradcheck, gradcheck_actor_config, gradcheck_critic_config, network_gradchecks, BlockCheck,
    GRADCHECK_LAYOUT, GRADCHECK_TOLERANCE, GRADCHECK_WIDTH,
};
pub use sampling::{greedy_action, sample_action};
pub use scripted::{random_policy, scripted_greedy, ScriptedPolicyConfig};
