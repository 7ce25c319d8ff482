use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActorConfig, ActorController, ActorParams, Controller, CriticConfig, CriticParams};
use super::{GreedyController, RandomController, ScriptedPolicyConfig};
use crate::autograd::ParamStore;
use crate::hash::world_hash;
use crate::sim::WorldConfig;
use crate::{Error, Result};

pub const POLICY_FORMAT: &str = "wlpt-policy";
pub const POLICY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Algorithm {
    /// LSTM actor with the dual-attention critic.
    MappoTm,
    /// Feed-forward actor with an MLP critic.
    Mappo,
    Greedy,
    Random,
}

impl Algorithm {
    pub fn is_learned(self) -> bool {
        matches!(self, Algorithm::MappoTm | Algorithm::Mappo)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MappoTm => "mappo_tm",
            Algorithm::Mappo => "mappo",
            Algorithm::Greedy => "greedy",
            Algorithm::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub algorithm: Algorithm,
    /// Compatibility digest of the world the policy was trained for.
    pub world_hash: String,
    /// Digest of the full run configuration that produced this checkpoint.
    pub config_hash: String,
    /// Environment steps consumed when the checkpoint was written.
    pub train_step: u64,
    pub seed: u64,
    pub actor: Option<ActorConfig>,
    pub critic: Option<CriticConfig>,
    pub scripted: Option<ScriptedPolicyConfig>,
}

/// A policy on disk: `manifest.json` plus `actor.json` / `critic.json`
/// parameter archives for learned algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCheckpoint {
    pub manifest: CheckpointManifest,
    pub actor: Option<ActorParams>,
    pub critic: Option<CriticParams>,
}

impl PolicyCheckpoint {
    pub fn scripted(algorithm: Algorithm, world: &WorldConfig, config_hash: &str, seed: u64) -> Self {
        PolicyCheckpoint {
            manifest: CheckpointManifest {
                format: POLICY_FORMAT.into(),
                version: POLICY_VERSION,
                algorithm,
                world_hash: world_hash(world),
                config_hash: config_hash.into(),
                train_step: 0,
                seed,
                actor: None,
                critic: None,
                scripted: (algorithm == Algorithm::Greedy).then(ScriptedPolicyConfig::default),
            },
            actor: None,
            critic: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn learned(
        algorithm: Algorithm,
        world: &WorldConfig,
        config_hash: &str,
        train_step: u64,
        seed: u64,
        actor: ActorParams,
        critic: CriticParams,
    ) -> Self {
        PolicyCheckpoint {
            manifest: CheckpointManifest {
                format: POLICY_FORMAT.into(),
                version: POLICY_VERSION,
                algorithm,
                world_hash: world_hash(world),
                config_hash: config_hash.into(),
                train_step,
                seed,
                actor: Some(actor.config),
                critic: Some(critic.config),
                scripted: None,
            },
            actor: Some(actor),
            critic: Some(critic),
        }
    }

    /// Refuse to run against a world with a different structure.
    pub fn check_compatible(&self, world: &WorldConfig, force: bool) -> Result<()> {
        let want = world_hash(world);
        if self.manifest.world_hash != want && !force {
            return Err(Error::Compatibility(format!(
                "checkpoint world hash {} does not match world config hash {want}",
                self.manifest.world_hash
            )));
        }
        Ok(())
    }

    /// Deterministic controller for evaluation.
    pub fn controller(&self, seed: u64) -> Result<Box<dyn Controller>> {
        Ok(match self.manifest.algorithm {
            Algorithm::Greedy => Box::new(GreedyController(self.manifest.scripted.unwrap_or_default())),
            Algorithm::Random => Box::new(RandomController::new(seed)),
            Algorithm::MappoTm | Algorithm::Mappo => {
                let actor = self
                    .actor
                    .clone()
                    .ok_or_else(|| Error::Argument("learned checkpoint has no actor".into()))?;
                Box::new(ActorController::new(actor, true, seed))
            }
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        write(
            "manifest.json",
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes"),
        )?;
        if let Some(a) = &self.actor {
            write("actor.json", a.store.to_json())?;
        }
        if let Some(c) = &self.critic {
            write("critic.json", c.store.to_json())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(p, e))
        };
        let mpath = dir.join("manifest.json");
        let manifest: CheckpointManifest =
            serde_json::from_str(&read("manifest.json")?).map_err(|e| Error::format(&mpath, e))?;
        if manifest.format != POLICY_FORMAT || manifest.version != POLICY_VERSION {
            return Err(Error::format(
                &mpath,
                format!("unsupported policy format {} v{}", manifest.format, manifest.version),
            ));
        }
        let load_store = |name: &str| -> Result<ParamStore> {
            ParamStore::from_json(&read(name)?).map_err(|e| Error::format(dir.join(name), e))
        };
        let actor = match manifest.actor {
            Some(config) => Some(ActorParams { config, store: load_store("actor.json")? }),
            None => None,
        };
        let critic = match manifest.critic {
            Some(config) => Some(CriticParams { config, store: load_store("critic.json")? }),
            None => None,
        };
        Ok(PolicyCheckpoint { manifest, actor, critic })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{CriticKind, StateLayout};
    use rand::SeedableRng;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let world = WorldConfig::scaled(500.0, 10, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let actor = ActorParams::init(ActorConfig::new(world.obs_dim(), true), &mut rng);
        let layout = StateLayout { uav_tokens: 2, scalar_tokens: 10 };
        let critic = CriticParams::init(CriticConfig::new(layout, CriticKind::DualAttention), &mut rng);
        let ck = PolicyCheckpoint::learned(Algorithm::MappoTm, &world, "abc", 1234, 5, actor, critic);
        ck.save(dir.path()).unwrap();
        let back = PolicyCheckpoint::load(dir.path()).unwrap();
        assert_eq!(back, ck);
        back.check_compatible(&world, false).unwrap();
        let other = WorldConfig::default();
        assert!(matches!(back.check_compatible(&other, false), Err(Error::Compatibility(_))));
        back.check_compatible(&other, true).unwrap();
    }
}
