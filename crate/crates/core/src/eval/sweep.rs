use serde::{Deserialize, Serialize};

use super::{median, spearman};
use crate::par::Exec;
use crate::policy::{Algorithm, PolicyCheckpoint};
use crate::sim::WorldConfig;
use crate::trainer::evaluate;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eta_pv: f64,
    /// Peak AoI per seed, in seed order.
    pub peak_aoi: Vec<f64>,
    pub median_peak_aoi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
    /// Spearman correlation between η and the median peak AoI.
    pub spearman_rho: f64,
}

/// Evaluate `policy` for every η and seed (one episode each), pairing worlds
/// across η so only the conversion efficiency changes.
pub fn efficiency_sweep(
    policy: &PolicyCheckpoint,
    etas: &[f64],
    seeds: &[u64],
    world: &WorldConfig,
    config_hash: &str,
    force: bool,
    exec: Exec,
) -> Result<SweepResult> {
    if etas.is_empty() || seeds.is_empty() {
        return Err(Error::config("sweep", "etas and seeds must be non-empty"));
    }
    if etas.iter().any(|&eta| !(eta > 0.0 && eta <= 1.0)) {
        return Err(Error::config("eta_pv", "eta_pv must lie in (0,1]"));
    }
    for w in etas.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::config("sweep.etas", "etas must be strictly increasing"));
        }
    }
    let mut points = Vec::with_capacity(etas.len());
    for &eta in etas {
        let cfg = WorldConfig { eta_pv: eta, ..world.clone() };
        cfg.validate()?;
        let (summary, _) = evaluate(policy, &cfg, 1, seeds, force, exec)?;
        let peak: Vec<f64> = summary.episodes.iter().map(|e| e.peak_aoi).collect();
        points.push(SweepPoint {
            eta_pv: eta,
            median_peak_aoi: median(&peak),
            peak_aoi: peak,
        });
    }
    let medians: Vec<f64> = points.iter().map(|p| p.median_peak_aoi).collect();
    Ok(SweepResult {
        config_hash: config_hash.to_string(),
        algorithm: policy.manifest.algorithm,
        seeds: seeds.to_vec(),
        spearman_rho: spearman(etas, &medians),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn greedy() -> PolicyCheckpoint {
        PolicyCheckpoint::scripted(Algorithm::Greedy, &WorldConfig { horizon_steps: 120, ..Default::default() }, "t", 0)
    }

    #[test]
    fn invalid_eta_is_a_config_error() {
        let w = WorldConfig::default();
        let r = efficiency_sweep(&greedy(), &[0.1, 1.5], &[0], &w, "t", false, Exec::Sequential);
        assert!(matches!(r, Err(Error::Config { field, .. }) if field == "eta_pv"));
        let r = efficiency_sweep(&greedy(), &[0.2, 0.1], &[0], &w, "t", false, Exec::Sequential);
        assert!(r.is_err());
    }

    #[test]
    fn single_default_eta_matches_evaluate() {
        let w = WorldConfig { horizon_steps: 120, ..Default::default() };
        let seeds = [1, 2, 3];
        let s = efficiency_sweep(&greedy(), &[0.15], &seeds, &w, "t", false, Exec::Parallel).unwrap();
        let (e, _) = evaluate(&greedy(), &w, 1, &seeds, false, Exec::Sequential).unwrap();
        let want: Vec<f64> = e.episodes.iter().map(|m| m.peak_aoi).collect();
        assert_eq!(s.points[0].peak_aoi, want);
        assert_eq!(s.points[0].median_peak_aoi, e.median_peak_aoi);
    }
}
