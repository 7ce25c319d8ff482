use super::{Tape, Tensor, TensorError, Var};

/// Compare reverse-mode gradients of a scalar function against central
/// differences `(f(θ+h) - f(θ-h)) / 2h`, coordinate by coordinate.
///
/// `f` receives a fresh tape with every entry of `params` bound as a leaf,
/// in order. Returns the maximum over coordinates of
/// `|a - g| / max(1e-8, |a| + |g|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |ps: &[Tensor]| -> Result<(Tape, Vec<Var>, Var), TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };

    let (tape, vars, out) = eval(params)?;
    let grads = tape.backward(out)?;
    let analytic = grads.collect(&vars, &tape);

    let mut worst: f64 = 0.0;
    let mut probe = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for j in 0..p.len() {
            let base = p.data()[j];
            probe[pi].data_mut()[j] = base + h;
            let (t, _, o) = eval(&probe)?;
            let plus = t.value(o).item();
            probe[pi].data_mut()[j] = base - h;
            let (t, _, o) = eval(&probe)?;
            let minus = t.value(o).item();
            probe[pi].data_mut()[j] = base;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi].data()[j];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let theta = Tensor::row(vec![0.3, -1.2, 2.5, 0.0, 7.0]);
        let err = grad_check(
            |tape, v| {
                let sq = tape.mul(v[0], v[0])?;
                tape.sum(sq)
            },
            &[theta],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn composite_mlp_loss() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let params = vec![
            Tensor::randn(4, 6, 0.5, &mut rng),
            Tensor::randn(1, 6, 0.5, &mut rng),
            Tensor::randn(6, 3, 0.5, &mut rng),
            Tensor::randn(1, 3, 0.5, &mut rng),
        ];
        let x = Tensor::randn(5, 4, 1.0, &mut rng);
        let err = grad_check(
            |tape, v| {
                let x = tape.constant(x.clone());
                let h = crate::autograd::linear(tape, x, v[0], v[1])?;
                let h = tape.tanh(h)?;
                let y = crate::autograd::linear(tape, h, v[2], v[3])?;
                let y = tape.log_softmax_rows(y)?;
                let e = tape.exp(y)?;
                let s = tape.mul(e, y)?;
                tape.mean(s)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }
}
