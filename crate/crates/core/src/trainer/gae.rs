use crate::{Error, Result};

/// Generalized advantage estimation over one sequence.
///
/// `δ_t = r_t + γ (1 - done_t) V_{t+1} - V_t`,
/// `A_t = δ_t + γ λ (1 - done_t) A_{t+1}`, with `V_T = bootstrap`.
/// `done_t` marks that the episode ended with step `t`. Returns
/// `(advantages, returns = A + V)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Argument(format!(
            "gae: rewards {n}, values {}, dones {} must align",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shift to mean 0 and scale to unit (population) standard deviation. A
/// constant batch maps to exact zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    if adv.iter().all(|&a| a == adv[0]) {
        adv.iter_mut().for_each(|a| *a = 0.0);
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}
