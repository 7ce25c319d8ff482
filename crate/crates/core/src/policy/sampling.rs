use rand::Rng;

use crate::{Error, Result};

fn check(probs: &[f64]) -> Result<()> {
    let total: f64 = probs.iter().sum();
    if probs.is_empty() || (total - 1.0).abs() > 1e-9 || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Numeric(format!(
            "action probabilities do not form a distribution (sum = {total})"
        )));
    }
    Ok(())
}

/// Categorical draw. Returns the action and its log-probability.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<(usize, f64)> {
    check(probs)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut pick = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            pick = i;
            break;
        }
    }
    // never return a zero-probability tail index because of rounding
    while probs[pick] == 0.0 && pick > 0 {
        pick -= 1;
    }
    Ok((pick, probs[pick].ln()))
}

/// Arg-max, lowest index on ties.
pub fn greedy_action(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_hot_is_certain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = vec![0.0; 8];
        p[3] = 1.0;
        for _ in 0..1000 {
            assert_eq!(sample_action(&p, &mut rng).unwrap(), (3, 0.0));
        }
    }

    #[test]
    fn uniform_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = vec![0.125; 8];
        let mut counts = [0usize; 8];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_action(&p, &mut rng).unwrap().0] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.125).abs() <= 0.01);
        }
    }

    #[test]
    fn greedy_argmax() {
        assert_eq!(greedy_action(&[0.2, 0.2, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0]), 2);
        assert_eq!(greedy_action(&[0.125; 8]), 0);
    }

    #[test]
    fn rejects_unnormalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_action(&[0.5, 0.4], &mut rng), Err(Error::Numeric(_))));
        assert!(sample_action(&[0.5, 0.5 + 1e-12], &mut rng).is_ok());
    }
}
