use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::par::Exec;
use crate::sim::{WorldConfig, WorldState, NUM_ACTIONS};
use crate::{Error, Result};

/// Largest search space the oracle accepts.
pub const ORACLE_MAX_SEQUENCES: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Maximum undiscounted episode reward.
    pub best_return: f64,
    /// Lexicographically smallest sequence attaining it.
    pub best_actions: Vec<usize>,
    pub sequences: u64,
}

fn agent_mean(rewards: &[f64]) -> f64 {
    rewards.iter().sum::<f64>() / rewards.len() as f64
}

/// Undiscounted episode reward of a fixed action sequence for a one-UAV world.
pub fn replay_return(config: &WorldConfig, actions: &[usize]) -> Result<f64> {
    let mut w = WorldState::new(config.clone())?;
    let mut total = 0.0;
    for &a in actions {
        total += agent_mean(&w.step(&[a])?.rewards);
    }
    Ok(total)
}

fn search(world: &WorldState, depth: usize, acc: f64, path: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) -> Result<()> {
    if depth == 0 {
        if acc > best.0 {
            *best = (acc, path.clone());
        }
        return Ok(());
    }
    for a in 0..NUM_ACTIONS {
        let mut w = world.clone();
        let r = agent_mean(&w.step(&[a])?.rewards);
        path.push(a);
        search(&w, depth - 1, acc + r, path, best)?;
        path.pop();
    }
    Ok(())
}

/// Exhaustive search over every action sequence of length `horizon`, one
/// subtree per first action.
pub fn brute_force_oracle(config: &WorldConfig, horizon: usize, exec: Exec) -> Result<OracleResult> {
    if config.num_uavs != 1 {
        return Err(Error::Argument(format!(
            "oracle needs exactly one UAV, got {}",
            config.num_uavs
        )));
    }
    if horizon > config.horizon_steps {
        return Err(Error::Argument(format!(
            "oracle horizon {horizon} exceeds episode horizon {}",
            config.horizon_steps
        )));
    }
    let sequences = (NUM_ACTIONS as u64)
        .checked_pow(horizon as u32)
        .filter(|&n| n <= ORACLE_MAX_SEQUENCES)
        .ok_or_else(|| Error::Argument(format!("8^{horizon} sequences exceed the oracle bound")))?;
    let root = WorldState::new(config.clone())?;
    if horizon == 0 {
        return Ok(OracleResult { best_return: 0.0, best_actions: vec![], sequences });
    }
    let subtrees = exec.map((0..NUM_ACTIONS).collect(), |a| -> Result<(f64, Vec<usize>)> {
        let mut w = root.clone();
        let r = agent_mean(&w.step(&[a])?.rewards);
        let mut path = vec![a];
        let mut best = (f64::NEG_INFINITY, Vec::new());
        search(&w, horizon - 1, r, &mut path, &mut best)?;
        Ok(best)
    });
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for sub in subtrees {
        let sub = sub?;
        if sub.0 > best.0 {
            best = sub;
        }
    }
    Ok(OracleResult { best_return: best.0, best_actions: best.1, sequences })
}

/// Replays the reported sequence and `samples` random ones; fails if the
/// replay disagrees or any sample beats the reported maximum.
pub fn verify_oracle<R: Rng + ?Sized>(config: &WorldConfig, result: &OracleResult, samples: usize, rng: &mut R) -> Result<()> {
    let replay = replay_return(config, &result.best_actions)?;
    if replay != result.best_return {
        return Err(Error::Numeric(format!(
            "oracle replay {replay} differs from reported {}",
            result.best_return
        )));
    }
    let h = result.best_actions.len();
    for _ in 0..samples {
        let seq: Vec<usize> = (0..h).map(|_| rng.gen_range(0..NUM_ACTIONS)).collect();
        let r = replay_return(config, &seq)?;
        if r > result.best_return {
            return Err(Error::Numeric(format!("sequence {seq:?} returns {r} above the oracle maximum")));
        }
    }
    Ok(())
}
