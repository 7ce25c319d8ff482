use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::sim::WorldConfig;

/// Hex SHA-256 of the canonical JSON encoding of `value` (struct field
/// order, shortest round-trip floats).
pub fn stable_hash<T: Serialize>(value: &T) -> String {
    let doc = serde_json::to_vec(value).expect("hashable value serializes");
    Sha256::digest(&doc).iter().map(|b| format!("{b:02x}")).collect()
}

/// Compatibility digest of a world: every field except the ones that are
/// swept at evaluation time (`seed`, `eta_pv`).
pub fn world_hash(config: &WorldConfig) -> String {
    let mut c = config.clone();
    c.seed = 0;
    c.eta_pv = 1.0;
    stable_hash(&c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ignores_seed_and_eta_only() {
        let a = WorldConfig::default();
        let b = WorldConfig { seed: 99, eta_pv: 0.2, ..a.clone() };
        let c = WorldConfig { num_sensors: 49, ..a.clone() };
        assert_eq!(world_hash(&a), world_hash(&b));
        assert_ne!(world_hash(&a), world_hash(&c));
        assert_eq!(stable_hash(&a).len(), 64);
    }
}
