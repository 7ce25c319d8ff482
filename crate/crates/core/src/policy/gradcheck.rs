use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{actor_step, critic_values, ActorConfig, ActorParams, CriticConfig, CriticKind, CriticParams, StateLayout};
use crate::autograd::{grad_check, Tensor};
use crate::par::Exec;
use crate::Result;

/// Largest accepted relative error between analytic and numeric gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: String,
    pub seed: u64,
    pub max_rel_err: f64,
}

/// Actor (input MLP, LSTM or feed-forward core, head) unrolled for two steps
/// on a small batch. The loss weights log-probabilities so every
/// logit receives gradient.
pub fn actor_gradcheck(seed: u64, cfg: ActorConfig) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs_dim = cfg.obs_dim;
    let mut p = ActorParams::init(cfg, &mut rng);
    // the initial head is near zero; widen it so the check is not vacuous
    let (hw, _) = p.head_indices();
    p.store.tensors_mut()[hw] = Tensor::randn(cfg.hidden_dim, cfg.num_actions, 0.5, &mut rng);
    let obs = Tensor::randn(2, obs_dim, 1.0, &mut rng);
    let h0 = Tensor::randn(2, cfg.hidden_dim, 0.5, &mut rng);
    let c0 = Tensor::randn(2, cfg.hidden_dim, 0.5, &mut rng);
    let w = Tensor::randn(2, cfg.num_actions, 1.0, &mut rng);
    Ok(grad_check(
        |tape, v| {
            let o = tape.constant(obs.clone());
            let h = tape.constant(h0.clone());
            let c = tape.constant(c0.clone());
            let out = actor_step(tape, v, &cfg, o, h, c)?;
            let out = actor_step(tape, v, &cfg, o, out.h, out.c)?;
            let lp = tape.log_softmax_rows(out.logits)?;
            let w = tape.constant(w.clone());
            let s = tape.mul(lp, w)?;
            tape.sum(s)
        },
        p.store.tensors(),
        STEP,
    )?)
}

/// Critic on two random global states with a non-trivial blend logit; the
/// loss is the sum of the blended per-agent values.
pub fn critic_gradcheck(seed: u64, cfg: CriticConfig) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = cfg.layout;
    let mut p = CriticParams::init(cfg, &mut rng);
    p.set_blend_logit(rng.gen_range(-1.0..1.0));
    let states: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..layout.state_dim()).map(|_| rng.gen::<f64>()).collect())
        .collect();
    Ok(grad_check(
        |tape, v| {
            let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
            let g = critic_values(tape, v, &cfg, &refs)?;
            tape.sum(g.values)
        },
        p.store.tensors(),
        STEP,
    )?)
}

/// Layer widths used by [`network_gradchecks`]. The networks are the
/// production code paths at reduced width: at full width many coordinates
/// have gradients near 1e-8, where central-difference roundoff (about 1e-11)
/// alone exceeds the relative tolerance.
pub const GRADCHECK_WIDTH: usize = 8;
/// Token counts used by [`network_gradchecks`].
pub const GRADCHECK_LAYOUT: StateLayout = StateLayout { uav_tokens: 2, scalar_tokens: 3 };

pub fn gradcheck_actor_config(recurrent: bool) -> ActorConfig {
    ActorConfig {
        embed_dim: GRADCHECK_WIDTH,
        hidden_dim: GRADCHECK_WIDTH,
        ..ActorConfig::new(5 + GRADCHECK_LAYOUT.scalar_tokens, recurrent)
    }
}

pub fn gradcheck_critic_config(kind: CriticKind) -> CriticConfig {
    CriticConfig {
        embed_dim: GRADCHECK_WIDTH,
        value_hidden: GRADCHECK_WIDTH,
        mlp_hidden: GRADCHECK_WIDTH,
        ..CriticConfig::new(GRADCHECK_LAYOUT, kind)
    }
}

/// Every network block for every seed: the LSTM actor, the feed-forward
/// actor, the dual-attention critic and the MLP critic.
pub fn network_gradchecks(seeds: &[u64], exec: Exec) -> Result<Vec<BlockCheck>> {
    let jobs: Vec<(&'static str, u64)> = seeds
        .iter()
        .flat_map(|&s| {
            ["actor.lstm", "actor.feedforward", "critic.dual_attention", "critic.mlp"]
                .into_iter()
                .map(move |b| (b, s))
        })
        .collect();
    exec.map(jobs, |(block, seed)| {
        let err = match block {
            "actor.lstm" => actor_gradcheck(seed, gradcheck_actor_config(true)),
            "actor.feedforward" => actor_gradcheck(seed, gradcheck_actor_config(false)),
            "critic.dual_attention" => critic_gradcheck(seed, gradcheck_critic_config(CriticKind::DualAttention)),
            _ => critic_gradcheck(seed, gradcheck_critic_config(CriticKind::Mlp)),
        }?;
        Ok(BlockCheck { block: block.to_string(), seed, max_rel_err: err })
    })
    .into_iter()
    .collect()
}
