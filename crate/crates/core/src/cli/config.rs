use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::hash::stable_hash;
use crate::policy::Algorithm;
use crate::sim::{SimError, WorldConfig};
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// Environment variable that roots relative run directories.
pub const RUN_ROOT_ENV: &str = "WLPT_RUN_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_episodes: usize,
    pub seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { n_episodes: 1, seeds: vec![0, 1, 2, 3, 4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub etas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            etas: vec![0.10, 0.15, 0.20, 0.25],
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub run_dir: PathBuf,
    pub checkpoint_in: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection { run_dir: PathBuf::from("runs/default"), checkpoint_in: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::MappoTm,
            world: WorldConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
            paths: PathsSection::default(),
        }
    }
}

fn lift(e: SimError) -> Error {
    match e {
        SimError::Config { field, message } => Error::Config { field, message },
        other => other.into(),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate().map_err(lift)?;
        self.train.validate()?;
        if self.eval.n_episodes == 0 {
            return Err(Error::config("eval.n_episodes", "n_episodes must be >= 1"));
        }
        if self.eval.seeds.is_empty() {
            return Err(Error::config("eval.seeds", "seeds must not be empty"));
        }
        if self.sweep.seeds.is_empty() || self.sweep.etas.is_empty() {
            return Err(Error::config("sweep", "etas and seeds must not be empty"));
        }
        if self.sweep.etas.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::config("sweep.etas", "eta_pv must lie in (0,1]"));
        }
        if self.sweep.etas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("sweep.etas", "etas must be strictly increasing"));
        }
        Ok(())
    }

    /// Digest of everything that affects results (paths excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = PathsSection::default();
        stable_hash(&c)
    }

    /// The config as TOML, headed by its hash.
    pub fn echo(&self) -> String {
        let body = toml::to_string(self).expect("run config serializes to toml");
        format!("# config_hash={}\n{body}", self.hash())
    }

    /// `run_dir`, rooted at `$WLPT_RUN_ROOT` when relative and the variable is set.
    pub fn resolved_run_dir(&self) -> PathBuf {
        let dir = &self.paths.run_dir;
        match std::env::var_os(RUN_ROOT_ENV) {
            Some(root) if dir.is_relative() => Path::new(&root).join(dir),
            _ => dir.clone(),
        }
    }
}

/// Parse a TOML run configuration. Missing keys take their defaults, unknown
/// keys are rejected, and the result is validated.
pub fn parse_config(doc: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(doc).map_err(|e| Error::config("config", e.to_string().trim_end()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.world.eta_pv, 0.15);
        assert_eq!(cfg.world.num_lbds, 10);
    }

    #[test]
    fn eta_range_checked() {
        let err = parse_config("[world]\neta_pv = 1.5\n").unwrap_err();
        match err {
            Error::Config { field, message } => {
                assert_eq!(field, "eta_pv");
                assert_eq!(message, "eta_pv must lie in (0,1]");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_named_with_location() {
        let err = parse_config("[world]\ncharg_radius_m = 100.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("charg_radius_m"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn syntax_error_has_position() {
        let msg = parse_config("[world\n").unwrap_err().to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.world.seed = 9;
        cfg.algorithm = Algorithm::Greedy;
        let echoed = cfg.echo();
        assert!(echoed.starts_with(&format!("# config_hash={}", cfg.hash())));
        assert_eq!(parse_config(&echoed).unwrap(), cfg);
    }

    #[test]
    fn hash_ignores_paths() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.run_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.train.lr = 1e-3;
        assert_ne!(a.hash(), b.hash());
    }
}
