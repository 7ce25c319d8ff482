use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{linear, ParamStore, Tape, Tensor, TensorError, Var};

/// How a global state vector splits into tokens: `uav_tokens` triples
/// `(x, y, energy)` followed by `scalar_tokens` single values (sensor AoI).
/// Each UAV token is one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub uav_tokens: usize,
    pub scalar_tokens: usize,
}

impl StateLayout {
    pub fn state_dim(&self) -> usize {
        3 * self.uav_tokens + self.scalar_tokens
    }

    pub fn tokens(&self) -> usize {
        self.uav_tokens + self.scalar_tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    /// Token embeddings, a local and a global attention head, blended by
    /// `α = σ(w)`.
    DualAttention,
    /// Vanilla centralized critic: MLP over the global state concatenated
    /// with a one-hot agent id.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticConfig {
    pub layout: StateLayout,
    pub kind: CriticKind,
    pub embed_dim: usize,
    pub value_hidden: usize,
    /// Width of the vanilla MLP critic.
    pub mlp_hidden: usize,
}

impl CriticConfig {
    pub fn new(layout: StateLayout, kind: CriticKind) -> Self {
        CriticConfig {
            layout,
            kind,
            embed_dim: 32,
            value_hidden: 32,
            mlp_hidden: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams {
    pub config: CriticConfig,
    pub store: ParamStore,
}

mod idx {
    pub const W_UAV: usize = 0;
    pub const W_SCALAR: usize = 1;
    pub const TAG_UAV: usize = 2;
    pub const TAG_SCALAR: usize = 3;
    pub const LOC_Q: usize = 4;
    pub const LOC_K: usize = 5;
    pub const LOC_V: usize = 6;
    pub const GLOB_Q: usize = 7;
    pub const GLOB_K: usize = 8;
    pub const GLOB_V: usize = 9;
    pub const LOC_W1: usize = 10;
    pub const GLOB_W1: usize = 14;
    pub const BLEND: usize = 18;
}

impl CriticParams {
    pub fn init<R: Rng + ?Sized>(config: CriticConfig, rng: &mut R) -> Self {
        let lecun = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let mut s = ParamStore::new();
        match config.kind {
            CriticKind::DualAttention => {
                let (d, vh) = (config.embed_dim, config.value_hidden);
                s.push("critic.embed.uav", Tensor::randn(3, d, 1.0, rng));
                s.push("critic.embed.scalar", Tensor::randn(1, d, 1.0, rng));
                s.push("critic.tag.uav", Tensor::randn(1, d, 0.5, rng));
                s.push("critic.tag.scalar", Tensor::randn(1, d, 0.5, rng));
                for head in ["local", "global"] {
                    for m in ["q", "k", "v"] {
                        s.push(format!("critic.{head}.{m}"), Tensor::randn(d, d, lecun(d), rng));
                    }
                }
                for head in ["local", "global"] {
                    s.push(format!("critic.{head}.value.w1"), Tensor::randn(d, vh, lecun(d), rng));
                    s.push(format!("critic.{head}.value.b1"), Tensor::zeros(1, vh));
                    s.push(format!("critic.{head}.value.w2"), Tensor::randn(vh, 1, lecun(vh), rng));
                    s.push(format!("critic.{head}.value.b2"), Tensor::zeros(1, 1));
                }
                s.push("critic.blend", Tensor::scalar(0.0));
            }
            CriticKind::Mlp => {
                let n_in = config.layout.state_dim() + config.layout.uav_tokens;
                let h = config.mlp_hidden;
                s.push("critic.mlp.w1", Tensor::randn(n_in, h, lecun(n_in), rng));
                s.push("critic.mlp.b1", Tensor::zeros(1, h));
                s.push("critic.mlp.w2", Tensor::randn(h, h, lecun(h), rng));
                s.push("critic.mlp.b2", Tensor::zeros(1, h));
                s.push("critic.mlp.w3", Tensor::randn(h, 1, lecun(h), rng));
                s.push("critic.mlp.b3", Tensor::zeros(1, 1));
            }
        }
        CriticParams { config, store: s }
    }

    /// Raw blend logit `w` (dual-attention critics only).
    pub fn blend_logit(&self) -> Option<f64> {
        match self.config.kind {
            CriticKind::DualAttention => Some(self.store.tensors()[idx::BLEND].item()),
            CriticKind::Mlp => None,
        }
    }

    pub fn set_blend_logit(&mut self, w: f64) {
        if self.config.kind == CriticKind::DualAttention {
            self.store.tensors_mut()[idx::BLEND] = Tensor::scalar(w);
        }
    }
}

/// Graph outputs for a batch of `B` states with `U` agents each. `values`
/// is `(B*U, 1)`, sample-major.
#[derive(Debug, Clone, Copy)]
pub struct CriticGraph {
    pub values: Var,
    pub v_loc: Option<Var>,
    pub v_glob: Option<Var>,
    pub alpha: Option<Var>,
}

fn value_mlp(tape: &mut Tape, x: Var, v: &[Var], base: usize) -> Result<Var, TensorError> {
    let h = linear(tape, x, v[base], v[base + 1])?;
    let h = tape.tanh(h)?;
    linear(tape, h, v[base + 2], v[base + 3])
}

/// Critic forward on the tape for a batch of global states.
pub fn critic_values(
    tape: &mut Tape,
    vars: &[Var],
    config: &CriticConfig,
    states: &[&[f64]],
) -> Result<CriticGraph, TensorError> {
    let layout = config.layout;
    let b = states.len();
    let u = layout.uav_tokens;
    let s = layout.scalar_tokens;
    if b == 0 {
        return Err(TensorError::Argument("critic called on an empty batch".into()));
    }
    if let Some(bad) = states.iter().find(|x| x.len() != layout.state_dim()) {
        return Err(TensorError::Shape {
            op: "critic_forward",
            lhs: vec![layout.state_dim()],
            rhs: vec![bad.len()],
        });
    }

    if config.kind == CriticKind::Mlp {
        let width = layout.state_dim() + u;
        let mut rows = Vec::with_capacity(b * u * width);
        for st in states {
            for i in 0..u {
                rows.extend_from_slice(st);
                rows.extend((0..u).map(|j| if i == j { 1.0 } else { 0.0 }));
            }
        }
        let x = tape.constant(Tensor::matrix(b * u, width, rows)?);
        let h = linear(tape, x, vars[0], vars[1])?;
        let h = tape.tanh(h)?;
        let h = linear(tape, h, vars[2], vars[3])?;
        let h = tape.tanh(h)?;
        let values = linear(tape, h, vars[4], vars[5])?;
        return Ok(CriticGraph {
            values,
            v_loc: None,
            v_glob: None,
            alpha: None,
        });
    }

    use idx::*;
    let n = u + s;
    let mut uav_in = Vec::with_capacity(b * u * 3);
    let mut scalar_in = Vec::with_capacity(b * s);
    for st in states {
        uav_in.extend_from_slice(&st[..3 * u]);
        scalar_in.extend_from_slice(&st[3 * u..]);
    }
    let uav_in = tape.constant(Tensor::matrix(b * u, 3, uav_in)?);
    let eu = linear(tape, uav_in, vars[W_UAV], vars[TAG_UAV])?;
    let eu = tape.tanh(eu)?;

    // tokens laid out sample-major: [uav_0..uav_{u-1}, scalar_0..scalar_{s-1}] per state
    let tokens = if s > 0 {
        let scalar_in = tape.constant(Tensor::matrix(b * s, 1, scalar_in)?);
        let es = linear(tape, scalar_in, vars[W_SCALAR], vars[TAG_SCALAR])?;
        let es = tape.tanh(es)?;
        let stacked = tape.concat_rows(&[eu, es])?;
        let order: Vec<usize> = (0..b)
            .flat_map(|i| (0..u).map(move |j| i * u + j).chain((0..s).map(move |j| b * u + i * s + j)))
            .collect();
        tape.gather_rows(stacked, &order)?
    } else {
        eu
    };

    let k_loc = tape.matmul(tokens, vars[LOC_K])?;
    let v_loc_proj = tape.matmul(tokens, vars[LOC_V])?;
    let q_loc = tape.matmul(eu, vars[LOC_Q])?;
    let a_loc = tape.attention(q_loc, k_loc, v_loc_proj, b)?;
    let h_loc = tape.add(eu, a_loc)?;
    let v_loc = value_mlp(tape, h_loc, vars, LOC_W1)?;

    let pooled = tape.segment_mean_rows(tokens, n)?;
    let k_glob = tape.matmul(tokens, vars[GLOB_K])?;
    let v_glob_proj = tape.matmul(tokens, vars[GLOB_V])?;
    let q_glob = tape.matmul(pooled, vars[GLOB_Q])?;
    let a_glob = tape.attention(q_glob, k_glob, v_glob_proj, b)?;
    let h_glob = tape.add(pooled, a_glob)?;
    let v_glob = value_mlp(tape, h_glob, vars, GLOB_W1)?;

    let alpha = tape.sigmoid(vars[BLEND])?;
    let spread: Vec<usize> = (0..b).flat_map(|i| std::iter::repeat(i).take(u)).collect();
    let v_glob_rows = tape.gather_rows(v_glob, &spread)?;
    let diff = tape.sub(v_loc, v_glob_rows)?;
    let mixed = tape.mul(diff, alpha)?;
    let values = tape.add(v_glob_rows, mixed)?;
    Ok(CriticGraph {
        values,
        v_loc: Some(v_loc),
        v_glob: Some(v_glob),
        alpha: Some(alpha),
    })
}

/// Values for a single global state.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticOutput {
    /// Blended per-agent values `V_i = α V_loc^i + (1 - α) V_glob`.
    pub values: Vec<f64>,
    pub v_loc: Option<Vec<f64>>,
    pub v_glob: Option<f64>,
    pub alpha: Option<f64>,
}

pub fn critic_forward(params: &CriticParams, state: &[f64]) -> Result<CriticOutput, TensorError> {
    let mut tape = Tape::new();
    let vars = params.store.bind_frozen(&mut tape);
    let g = critic_values(&mut tape, &vars, &params.config, &[state])?;
    Ok(CriticOutput {
        values: tape.value(g.values).data().to_vec(),
        v_loc: g.v_loc.map(|v| tape.value(v).data().to_vec()),
        v_glob: g.v_glob.map(|v| tape.value(v).item()),
        alpha: g.alpha.map(|v| tape.value(v).item()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::grad_check;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(layout: StateLayout, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..layout.state_dim()).map(|_| rng.gen::<f64>()).collect()
    }

    const LAYOUT: StateLayout = StateLayout { uav_tokens: 3, scalar_tokens: 5 };

    #[test]
    fn zero_blend_averages_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = CriticParams::init(CriticConfig::new(LAYOUT, CriticKind::DualAttention), &mut rng);
        let out = critic_forward(&p, &random_state(LAYOUT, &mut rng)).unwrap();
        assert_eq!(out.alpha, Some(0.5));
        let vl = out.v_loc.unwrap();
        for (v, l) in out.values.iter().zip(vl) {
            assert!((v - (l + out.v_glob.unwrap()) / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sensor_permutation_invariance_and_uav_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = CriticParams::init(CriticConfig::new(LAYOUT, CriticKind::DualAttention), &mut rng);
        let st = random_state(LAYOUT, &mut rng);
        let base = critic_forward(&p, &st).unwrap();

        let mut perm: Vec<usize> = (0..5).collect();
        perm.shuffle(&mut rng);
        let mut shuffled = st[..9].to_vec();
        shuffled.extend(perm.iter().map(|&k| st[9 + k]));
        let out = critic_forward(&p, &shuffled).unwrap();
        for (a, b) in base.values.iter().zip(&out.values) {
            assert!((a - b).abs() < 1e-12);
        }

        // swap UAV 0 and 2: local values permute, global value unchanged
        let mut swapped = st.clone();
        for k in 0..3 {
            swapped.swap(k, 6 + k);
        }
        let out = critic_forward(&p, &swapped).unwrap();
        assert!((out.v_glob.unwrap() - base.v_glob.unwrap()).abs() < 1e-12);
        let (bl, ol) = (base.v_loc.unwrap(), out.v_loc.unwrap());
        assert!((bl[0] - ol[2]).abs() < 1e-12 && (bl[2] - ol[0]).abs() < 1e-12 && (bl[1] - ol[1]).abs() < 1e-12);
    }

    #[test]
    fn blend_extremes_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = CriticParams::init(CriticConfig::new(LAYOUT, CriticKind::DualAttention), &mut rng);
        let st = random_state(LAYOUT, &mut rng);
        let mut prev_gap = f64::INFINITY;
        for w in [-2.0, 0.0, 2.0, 6.0, 12.0, 30.0] {
            p.set_blend_logit(w);
            let out = critic_forward(&p, &st).unwrap();
            let a = out.alpha.unwrap();
            assert!(a > 0.0 && a < 1.0 || w >= 30.0);
            let gap: f64 = out
                .values
                .iter()
                .zip(out.v_loc.as_ref().unwrap())
                .map(|(v, l)| (v - l).abs())
                .sum();
            assert!(gap <= prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-10);
        p.set_blend_logit(-40.0);
        let out = critic_forward(&p, &st).unwrap();
        assert!(out.values.iter().all(|v| (v - out.v_glob.unwrap()).abs() < 1e-12));
    }

    #[test]
    fn wrong_state_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = CriticParams::init(CriticConfig::new(LAYOUT, CriticKind::DualAttention), &mut rng);
        assert!(critic_forward(&p, &[0.0; 13]).is_err());
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        for kind in [CriticKind::DualAttention, CriticKind::Mlp] {
            for seed in 0..3 {
                let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
                let mut cfg = CriticConfig::new(LAYOUT, kind);
                cfg.embed_dim = 6;
                cfg.value_hidden = 5;
                cfg.mlp_hidden = 7;
                let mut p = CriticParams::init(cfg, &mut rng);
                p.set_blend_logit(0.3);
                let states: Vec<Vec<f64>> = (0..2).map(|_| random_state(LAYOUT, &mut rng)).collect();
                let err = grad_check(
                    |tape, v| {
                        let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
                        let g = critic_values(tape, v, &cfg, &refs)?;
                        tape.sum(g.values)
                    },
                    p.store.tensors(),
                    1e-5,
                )
                .unwrap();
                assert!(err <= 1e-4, "{kind:?} seed {seed}: {err}");
            }
        }
    }
}
