use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvStep, MultiAgentEnv};
use crate::policy::{actor_forward_batch, greedy_action, ActorParams, HiddenState, StateLayout};
use crate::{Error, Result};

/// Five-cell corridor sanity task. The goal is the west end (cell 0) and pays
/// +1 on arrival, ending the episode. Action 4 (W) moves toward it, action 0
/// (E) moves away, every other heading stays put. Episodes start in a random
/// non-goal cell and time out after `max_steps`. Putting the goal behind a
/// non-zero action keeps a uniform policy (arg-max ties go to action 0) from
/// looking optimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub pos: usize,
    pub t: usize,
    pub max_steps: usize,
    rng: ChaCha8Rng,
}

impl Corridor {
    pub const CELLS: usize = 5;
    pub const GOAL: usize = 0;
    pub const OPTIMAL_ACTION: usize = 4;

    pub fn new(seed: u64) -> Self {
        let mut c = Corridor {
            pos: 0,
            t: 0,
            max_steps: 12,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        c.reset();
        c
    }

    /// Observation for an arbitrary cell (used to probe the greedy policy).
    pub fn obs_for(pos: usize) -> Vec<f64> {
        (0..Self::CELLS).map(|i| if i == pos { 1.0 } else { 0.0 }).collect()
    }
}

impl MultiAgentEnv for Corridor {
    fn num_agents(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        Self::CELLS
    }

    fn layout(&self) -> StateLayout {
        StateLayout {
            uav_tokens: 1,
            scalar_tokens: 1,
        }
    }

    fn observe(&self, agent: usize) -> Result<Vec<f64>> {
        if agent != 0 {
            return Err(Error::Argument(format!("corridor has one agent, got {agent}")));
        }
        Ok(Self::obs_for(self.pos))
    }

    fn global_state(&self) -> Vec<f64> {
        vec![
            self.pos as f64 / (Self::CELLS - 1) as f64,
            0.0,
            1.0,
            self.t as f64 / self.max_steps as f64,
        ]
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        match actions.first() {
            Some(0) => self.pos = (self.pos + 1).min(Self::CELLS - 1),
            Some(4) => self.pos = self.pos.saturating_sub(1),
            Some(a) if *a < 8 => {}
            _ => return Err(Error::Argument(format!("bad corridor action {actions:?}"))),
        }
        self.t += 1;
        let reached = self.pos == Self::GOAL;
        Ok(EnvStep {
            rewards: vec![if reached { 1.0 } else { 0.0 }],
            done: reached || self.t >= self.max_steps,
        })
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset();
    }

    fn reset(&mut self) {
        self.pos = self.rng.gen_range(1..Self::CELLS);
        self.t = 0;
    }
}

/// Fraction of greedy decisions that move toward the goal, over one greedy
/// episode from every non-goal start cell.
pub fn corridor_greedy_optimality(actor: &ActorParams) -> Result<f64> {
    let mut good = 0usize;
    let mut total = 0usize;
    for start in 1..Corridor::CELLS {
        let mut env = Corridor::new(0);
        env.pos = start;
        let mut hidden = vec![HiddenState::zeros(actor.config.hidden_dim)];
        loop {
            let out = actor_forward_batch(actor, &[env.observe(0)?], &hidden)?;
            let (probs, h) = out.into_iter().next().expect("one agent");
            let a = greedy_action(&probs);
            total += 1;
            good += usize::from(a == Corridor::OPTIMAL_ACTION);
            hidden[0] = h;
            if env.step(&[a])?.done {
                break;
            }
        }
    }
    Ok(good as f64 / total as f64)
}
