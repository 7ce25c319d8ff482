//! Laser-charged UAV data collection: a deterministic multi-agent world,
//! a small reverse-mode autograd engine, recurrent MAPPO with a
//! dual-attention centralized critic, baselines, and evaluation tooling.
//!
//! Module map:
//! - [`sim`]: world model (motion, energy, laser charging, AoI bookkeeping)
//! - [`autograd`]: dense tensors, tape-based gradients, Adam, checkpoints
//! - [`policy`]: LSTM actor, dual-attention critic, scripted baselines
//! - [`trainer`]: rollouts, GAE, clipped PPO with chunked BPTT, training loop
//! - [`eval`]: metrics, efficiency sweeps, trajectory export, brute-force oracle
//! - [`cli`]: run configuration and subcommands

pub mod autograd;
pub mod cli;
pub mod error;
pub mod eval;
pub mod hash;
pub mod par;
pub mod policy;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};
