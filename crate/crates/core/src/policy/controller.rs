use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    actor_forward_batch, greedy_action, random_policy, sample_action, scripted_greedy, ActorParams,
    HiddenState, ScriptedPolicyConfig,
};
use crate::sim::WorldState;
use crate::Result;

/// Anything that can drive every UAV of a world for an episode.
pub trait Controller: Send {
    fn reset(&mut self, world: &WorldState);
    fn act(&mut self, world: &WorldState) -> Result<Vec<usize>>;
}

#[derive(Debug, Clone)]
pub struct GreedyController(pub ScriptedPolicyConfig);

impl Controller for GreedyController {
    fn reset(&mut self, _world: &WorldState) {}

    fn act(&mut self, world: &WorldState) -> Result<Vec<usize>> {
        Ok((0..world.uavs.len())
            .map(|i| scripted_greedy(world, i, &self.0))
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct RandomController {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(seed: u64) -> Self {
        RandomController {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for RandomController {
    fn reset(&mut self, world: &WorldState) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed ^ world.config().seed.rotate_left(17));
    }

    fn act(&mut self, world: &WorldState) -> Result<Vec<usize>> {
        Ok((0..world.uavs.len()).map(|_| random_policy(&mut self.rng)).collect())
    }
}

/// Runs the shared actor for every UAV, each with its own hidden state.
#[derive(Debug, Clone)]
pub struct ActorController {
    pub params: ActorParams,
    pub hidden: Vec<HiddenState>,
    /// Arg-max actions when true, sampled otherwise.
    pub greedy: bool,
    rng: ChaCha8Rng,
}

impl ActorController {
    pub fn new(params: ActorParams, greedy: bool, seed: u64) -> Self {
        ActorController {
            params,
            hidden: Vec::new(),
            greedy,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for ActorController {
    fn reset(&mut self, world: &WorldState) {
        self.hidden = vec![HiddenState::zeros(self.params.config.hidden_dim); world.uavs.len()];
    }

    fn act(&mut self, world: &WorldState) -> Result<Vec<usize>> {
        if self.hidden.len() != world.uavs.len() {
            self.reset(world);
        }
        let obs = (0..world.uavs.len())
            .map(|i| world.observe(i).map(|o| o.to_vec()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let out = actor_forward_batch(&self.params, &obs, &self.hidden)?;
        let mut actions = Vec::with_capacity(out.len());
        for (i, (probs, hidden)) in out.into_iter().enumerate() {
            let a = if self.greedy {
                greedy_action(&probs)
            } else {
                sample_action(&probs, &mut self.rng)?.0
            };
            actions.push(a);
            self.hidden[i] = hidden;
        }
        Ok(actions)
    }
}
