use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{linear, lstm_cell, LstmParams, ParamStore, Tape, Tensor, TensorError, Var};
use crate::sim::NUM_ACTIONS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorConfig {
    pub obs_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_actions: usize,
    /// LSTM core when true; a feed-forward tanh layer of the same width
    /// otherwise (the vanilla MAPPO ablation).
    pub recurrent: bool,
}

impl ActorConfig {
    pub fn new(obs_dim: usize, recurrent: bool) -> Self {
        ActorConfig {
            obs_dim,
            embed_dim: 64,
            hidden_dim: 64,
            num_actions: NUM_ACTIONS,
            recurrent,
        }
    }
}

/// Per-agent recurrent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(dim: usize) -> Self {
        HiddenState {
            h: vec![0.0; dim],
            c: vec![0.0; dim],
        }
    }

    pub fn reset(&mut self) {
        self.h.iter_mut().for_each(|x| *x = 0.0);
        self.c.iter_mut().for_each(|x| *x = 0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorParams {
    pub config: ActorConfig,
    pub store: ParamStore,
}

const W_IN: usize = 0;
const B_IN: usize = 1;
const CORE_W: usize = 2;
const CORE_U: usize = 3;
const CORE_B: usize = 4;

impl ActorParams {
    /// LeCun-normal weights, forget-gate bias 1, and a near-zero policy head
    /// so the initial policy is close to uniform.
    pub fn init<R: Rng + ?Sized>(config: ActorConfig, rng: &mut R) -> Self {
        let ActorConfig { obs_dim, embed_dim: e, hidden_dim: h, num_actions: a, recurrent } = config;
        let lecun = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let mut store = ParamStore::new();
        store.push("actor.in.w", Tensor::randn(obs_dim, e, lecun(obs_dim), rng));
        store.push("actor.in.b", Tensor::zeros(1, e));
        if recurrent {
            store.push("actor.lstm.w_x", Tensor::randn(e, 4 * h, lecun(e), rng));
            store.push("actor.lstm.w_h", Tensor::randn(h, 4 * h, lecun(h), rng));
            let mut b = Tensor::zeros(1, 4 * h);
            b.data_mut()[h..2 * h].iter_mut().for_each(|x| *x = 1.0);
            store.push("actor.lstm.b", b);
        } else {
            store.push("actor.mid.w", Tensor::randn(e, h, lecun(e), rng));
            store.push("actor.mid.b", Tensor::zeros(1, h));
        }
        store.push("actor.head.w", Tensor::randn(h, a, 0.01 * lecun(h), rng));
        store.push("actor.head.b", Tensor::zeros(1, a));
        ActorParams { config, store }
    }

    /// All parameters zero: logits are zero and the policy is uniform.
    pub fn zeros(config: ActorConfig) -> Self {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut p = Self::init(config, &mut rng);
        for t in p.store.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        p
    }

    pub fn head_indices(&self) -> (usize, usize) {
        let n = self.store.len();
        (n - 2, n - 1)
    }
}

/// Graph outputs of one actor step over a batch of rows.
#[derive(Debug, Clone, Copy)]
pub struct ActorOut {
    pub logits: Var,
    pub h: Var,
    pub c: Var,
}

/// One actor step on the tape. `vars` are the actor parameters bound in
/// store order; `obs` is `(B, obs_dim)`, `h`/`c` are `(B, hidden_dim)`.
pub fn actor_step(
    tape: &mut Tape,
    vars: &[Var],
    config: &ActorConfig,
    obs: Var,
    h: Var,
    c: Var,
) -> Result<ActorOut, TensorError> {
    let x = linear(tape, obs, vars[W_IN], vars[B_IN])?;
    let x = tape.tanh(x)?;
    let (h, c) = if config.recurrent {
        let p = LstmParams {
            w_x: vars[CORE_W],
            w_h: vars[CORE_U],
            b: vars[CORE_B],
        };
        lstm_cell(tape, x, h, c, &p)?
    } else {
        let z = linear(tape, x, vars[CORE_W], vars[CORE_U])?;
        (tape.tanh(z)?, c)
    };
    let n = vars.len();
    let logits = linear(tape, h, vars[n - 2], vars[n - 1])?;
    Ok(ActorOut { logits, h, c })
}

/// Batched forward without gradients: one row per agent.
pub fn actor_forward_batch(
    params: &ActorParams,
    obs: &[Vec<f64>],
    hidden: &[HiddenState],
) -> Result<Vec<(Vec<f64>, HiddenState)>, TensorError> {
    let cfg = &params.config;
    let b = obs.len();
    if hidden.len() != b {
        return Err(TensorError::Shape {
            op: "actor_forward",
            lhs: vec![b],
            rhs: vec![hidden.len()],
        });
    }
    if let Some(bad) = obs.iter().find(|o| o.len() != cfg.obs_dim) {
        return Err(TensorError::Shape {
            op: "actor_forward",
            lhs: vec![cfg.obs_dim],
            rhs: vec![bad.len()],
        });
    }
    let hd = cfg.hidden_dim;
    let mut tape = Tape::new();
    let vars = params.store.bind_frozen(&mut tape);
    let o = tape.constant(Tensor::matrix(b, cfg.obs_dim, obs.concat())?);
    let h = tape.constant(Tensor::matrix(b, hd, hidden.iter().flat_map(|s| s.h.clone()).collect())?);
    let c = tape.constant(Tensor::matrix(b, hd, hidden.iter().flat_map(|s| s.c.clone()).collect())?);
    let out = actor_step(&mut tape, &vars, cfg, o, h, c)?;
    let probs = tape.softmax_rows(out.logits)?;
    let (p, h, c) = (tape.value(probs), tape.value(out.h), tape.value(out.c));
    Ok((0..b)
        .map(|i| {
            (
                p.row_slice(i).to_vec(),
                HiddenState {
                    h: h.row_slice(i).to_vec(),
                    c: c.row_slice(i).to_vec(),
                },
            )
        })
        .collect())
}

/// Action distribution for one observation and the next hidden state.
pub fn actor_forward(
    params: &ActorParams,
    obs: &[f64],
    hidden: &HiddenState,
) -> Result<(Vec<f64>, HiddenState), TensorError> {
    let mut out = actor_forward_batch(params, &[obs.to_vec()], std::slice::from_ref(hidden))?;
    Ok(out.pop().expect("one row"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_are_uniform() {
        let p = ActorParams::zeros(ActorConfig::new(7, true));
        let (probs, _) = actor_forward(&p, &[0.3, -1.0, 2.0, 0.0, 1.0, 0.5, 0.9], &HiddenState::zeros(64)).unwrap();
        assert!(probs.iter().all(|&x| (x - 0.125).abs() < 1e-15));
    }

    #[test]
    fn hidden_state_matters_and_forward_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ActorParams::init(ActorConfig::new(6, true), &mut rng);
        // a larger head makes the dependence visible
        let (hw, _) = p.head_indices();
        p.store.tensors_mut()[hw] = Tensor::randn(64, 8, 0.5, &mut rng);
        let obs = vec![0.1, 0.2, 0.9, -1.0, 0.0, 0.4];
        let h0 = HiddenState::zeros(64);
        let h1 = HiddenState {
            h: (0..64).map(|i| (i as f64 * 0.1).sin()).collect(),
            c: (0..64).map(|i| (i as f64 * 0.3).cos()).collect(),
        };
        let (a, _) = actor_forward(&p, &obs, &h0).unwrap();
        let (b, _) = actor_forward(&p, &obs, &h1).unwrap();
        assert_ne!(a, b);
        let (a2, _) = actor_forward(&p, &obs, &h0).unwrap();
        assert_eq!(a, a2);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn obs_length_checked() {
        let p = ActorParams::zeros(ActorConfig::new(6, true));
        assert!(actor_forward(&p, &[0.0; 5], &HiddenState::zeros(64)).is_err());
    }

    #[test]
    fn actor_gradients_match_finite_differences() {
        for recurrent in [true, false] {
            for seed in 0..3 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let cfg = ActorConfig { obs_dim: 5, embed_dim: 6, hidden_dim: 4, num_actions: 8, recurrent };
                let mut p = ActorParams::init(cfg, &mut rng);
                let (hw, _) = p.head_indices();
                p.store.tensors_mut()[hw] = Tensor::randn(4, 8, 0.5, &mut rng);
                let obs = Tensor::randn(3, 5, 1.0, &mut rng);
                let h0 = Tensor::randn(3, 4, 0.5, &mut rng);
                let c0 = Tensor::randn(3, 4, 0.5, &mut rng);
                let w = Tensor::randn(3, 8, 1.0, &mut rng);
                let err = grad_check(
                    |tape, v| {
                        let o = tape.constant(obs.clone());
                        let h = tape.constant(h0.clone());
                        let c = tape.constant(c0.clone());
                        let out = actor_step(tape, v, &cfg, o, h, c)?;
                        // second step exercises the recurrence
                        let out = actor_step(tape, v, &cfg, o, out.h, out.c)?;
                        let lp = tape.log_softmax_rows(out.logits)?;
                        let w = tape.constant(w.clone());
                        let s = tape.mul(lp, w)?;
                        tape.sum(s)
                    },
                    p.store.tensors(),
                    1e-5,
                )
                .unwrap();
                assert!(err <= 1e-4, "recurrent={recurrent} seed={seed}: {err}");
            }
        }
    }
}
