use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{distance, SimError, WorldConfig};

pub const NUM_ACTIONS: usize = 8;
pub const SNAPSHOT_VERSION: u32 = 1;

/// Movement directions, counter-clockwise from east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    E = 0,
    NE = 1,
    N = 2,
    NW = 3,
    W = 4,
    SW = 5,
    S = 6,
    SE = 7,
}

impl Direction {
    pub const ALL: [Direction; NUM_ACTIONS] = [
        Direction::E,
        Direction::NE,
        Direction::N,
        Direction::NW,
        Direction::W,
        Direction::SW,
        Direction::S,
        Direction::SE,
    ];

    pub fn from_index(a: usize) -> Option<Direction> {
        Self::ALL.get(a).copied()
    }

    /// Unit vector of the heading. Diagonals use exactly 1/sqrt(2) per axis.
    pub fn unit(self) -> [f64; 2] {
        let d = FRAC_1_SQRT_2;
        match self {
            Direction::E => [1.0, 0.0],
            Direction::NE => [d, d],
            Direction::N => [0.0, 1.0],
            Direction::NW => [-d, d],
            Direction::W => [-1.0, 0.0],
            Direction::SW => [-d, -d],
            Direction::S => [0.0, -1.0],
            Direction::SE => [d, -d],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub xy: [f64; 2],
    pub energy_j: f64,
    pub active: bool,
    pub charging_lbd: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorState {
    pub xy: [f64; 2],
    pub aoi_s: f64,
}

/// Local view of one UAV. Sensor entries are `aoi / aoi_cap` clipped to
/// `[0, 1]` when the sensor is within collection range and exactly `-1`
/// otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub own_xy: [f64; 2],
    pub own_energy: f64,
    pub masked_aoi: Vec<f64>,
    pub station_offset: [f64; 2],
}

impl Observation {
    pub const OUT_OF_RANGE: f64 = -1.0;

    /// Flat layout: `[x, y, energy, aoi_0 .. aoi_{n-1}, dx_station, dy_station]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(5 + self.masked_aoi.len());
        v.extend_from_slice(&self.own_xy);
        v.push(self.own_energy);
        v.extend_from_slice(&self.masked_aoi);
        v.extend_from_slice(&self.station_offset);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Training reward per agent: team reward plus the agent's local term.
    pub rewards: Vec<f64>,
    pub team_reward: f64,
    pub local_rewards: Vec<f64>,
    /// `(uav, sensor)` pairs credited this step.
    pub collections: Vec<(usize, usize)>,
    pub charged_j: Vec<f64>,
    pub consumed_j: Vec<f64>,
    /// UAVs whose battery hit zero during this step.
    pub depleted: Vec<usize>,
    pub done: bool,
}

/// Full simulation truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub config: Arc<WorldConfig>,
    pub uavs: Vec<UavState>,
    pub sensors: Vec<SensorState>,
    pub lbd_busy: Vec<bool>,
    pub step: usize,
    pub rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    config: Arc<WorldConfig>,
    uavs: Vec<UavState>,
    sensors: Vec<SensorState>,
    lbd_busy: Vec<bool>,
    step: usize,
    rng_state: ChaCha8Rng,
}

/// Displace `xy` by one step along `action` and clamp to the area.
pub fn move_uav(xy: [f64; 2], action: Direction, config: &WorldConfig) -> [f64; 2] {
    let d = config.step_length_m();
    let u = action.unit();
    [
        (xy[0] + d * u[0]).clamp(0.0, config.width_m),
        (xy[1] + d * u[1]).clamp(0.0, config.height_m),
    ]
}

/// Release every LBD, then hand idle ones to active UAVs inside the charging
/// disk, lowest energy first (ties by UAV index). Returns the number of
/// assignments made.
pub fn assign_lbds(world: &mut WorldState) -> usize {
    let cfg = world.config.clone();
    world.lbd_busy.iter_mut().for_each(|b| *b = false);
    for u in &mut world.uavs {
        u.charging_lbd = None;
    }
    let mut eligible: Vec<usize> = world
        .uavs
        .iter()
        .enumerate()
        .filter(|(_, u)| u.active && distance(u.xy, cfg.station_xy) <= cfg.charge_radius_m)
        .map(|(i, _)| i)
        .collect();
    eligible.sort_by(|&a, &b| {
        world.uavs[a]
            .energy_j
            .total_cmp(&world.uavs[b].energy_j)
            .then(a.cmp(&b))
    });
    let n = eligible.len().min(cfg.num_lbds);
    for (lbd, &uav) in eligible.iter().take(n).enumerate() {
        world.lbd_busy[lbd] = true;
        world.uavs[uav].charging_lbd = Some(lbd);
    }
    n
}

/// Team reward and per-agent local rewards for a post-transition world.
///
/// `team = -mean(aoi / aoi_cap) + c_collect * |collections| / num_sensors`,
/// `local_i = -c_dead` if UAV `i` depleted this step, else 0.
pub fn reward(
    world: &WorldState,
    collections: &[(usize, usize)],
    depleted: &[usize],
) -> (f64, Vec<f64>) {
    let cfg = &world.config;
    let n = world.sensors.len() as f64;
    let mean_age = world.sensors.iter().map(|s| s.aoi_s / cfg.aoi_cap_s).sum::<f64>() / n;
    let team = -mean_age + cfg.c_collect * collections.len() as f64 / n;
    let mut local = vec![0.0; world.uavs.len()];
    for &i in depleted {
        local[i] = -cfg.c_dead;
    }
    (team, local)
}

impl WorldState {
    pub fn new(config: WorldConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let sensors = match &config.sensor_layout {
            Some(layout) => layout.iter().map(|&xy| SensorState { xy, aoi_s: 0.0 }).collect(),
            None => (0..config.num_sensors)
                .map(|_| {
                    let x = rng.gen_range(0.0..=config.width_m);
                    let y = rng.gen_range(0.0..=config.height_m);
                    SensorState { xy: [x, y], aoi_s: 0.0 }
                })
                .collect(),
        };
        let uavs = (0..config.num_uavs)
            .map(|_| UavState {
                xy: config.station_xy,
                energy_j: config.battery_capacity_j,
                active: true,
                charging_lbd: None,
            })
            .collect();
        Ok(WorldState {
            lbd_busy: vec![false; config.num_lbds],
            config: Arc::new(config),
            uavs,
            sensors,
            step: 0,
            rng,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.horizon_steps
    }

    /// Advance one decision step.
    ///
    /// Sub-phases, in order: move active UAVs; drain `p_move_w * dt`; assign
    /// LBDs and credit `eta_pv * laser_tx_power_w * dt` to holders; clamp
    /// energy to `[0, capacity]` and ground depleted UAVs; collect from every
    /// sensor in range of an active UAV and age the rest by `dt`; compute
    /// rewards; advance the step counter.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepOutcome, SimError> {
        if self.is_done() {
            return Err(SimError::State(format!(
                "episode finished at step {}",
                self.step
            )));
        }
        if actions.len() != self.uavs.len() {
            return Err(SimError::Argument(format!(
                "expected {} actions, got {}",
                self.uavs.len(),
                actions.len()
            )));
        }
        let dirs = actions
            .iter()
            .map(|&a| {
                Direction::from_index(a)
                    .ok_or_else(|| SimError::Argument(format!("action {a} not in 0..8")))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let cfg = self.config.clone();
        for (u, dir) in self.uavs.iter_mut().zip(&dirs) {
            if u.active {
                u.xy = move_uav(u.xy, *dir, &cfg);
            }
        }

        let consumed: Vec<f64> = self
            .uavs
            .iter()
            .map(|u| if u.active { cfg.p_move_w * cfg.dt_s } else { 0.0 })
            .collect();

        assign_lbds(self);
        let charge = cfg.eta_pv * cfg.laser_tx_power_w * cfg.dt_s;
        let charged: Vec<f64> = self
            .uavs
            .iter()
            .map(|u| if u.charging_lbd.is_some() { charge } else { 0.0 })
            .collect();

        let mut depleted = Vec::new();
        for (i, u) in self.uavs.iter_mut().enumerate() {
            if !u.active {
                continue;
            }
            u.energy_j =
                (u.energy_j - consumed[i] + charged[i]).clamp(0.0, cfg.battery_capacity_j);
            if u.energy_j <= 0.0 {
                u.active = false;
                depleted.push(i);
            }
        }

        let mut collections = Vec::new();
        for (k, s) in self.sensors.iter_mut().enumerate() {
            let before = collections.len();
            for (i, u) in self.uavs.iter().enumerate() {
                if u.active && distance(u.xy, s.xy) <= cfg.comm_range_m {
                    collections.push((i, k));
                }
            }
            if collections.len() > before {
                s.aoi_s = 0.0;
            } else {
                s.aoi_s += cfg.dt_s;
            }
        }

        let (team, local) = reward(self, &collections, &depleted);
        self.step += 1;
        Ok(StepOutcome {
            rewards: local.iter().map(|l| team + l).collect(),
            team_reward: team,
            local_rewards: local,
            collections,
            charged_j: charged,
            consumed_j: consumed,
            depleted,
            done: self.is_done(),
        })
    }

    pub fn observe(&self, agent: usize) -> Result<Observation, SimError> {
        let cfg = &self.config;
        let u = self.uavs.get(agent).ok_or_else(|| {
            SimError::Argument(format!("agent {agent} out of range (num_uavs = {})", self.uavs.len()))
        })?;
        let masked_aoi = self
            .sensors
            .iter()
            .map(|s| {
                if distance(u.xy, s.xy) <= cfg.comm_range_m {
                    (s.aoi_s / cfg.aoi_cap_s).clamp(0.0, 1.0)
                } else {
                    Observation::OUT_OF_RANGE
                }
            })
            .collect();
        Ok(Observation {
            own_xy: [u.xy[0] / cfg.width_m, u.xy[1] / cfg.height_m],
            own_energy: u.energy_j / cfg.battery_capacity_j,
            masked_aoi,
            station_offset: [
                (cfg.station_xy[0] - u.xy[0]) / cfg.width_m,
                (cfg.station_xy[1] - u.xy[1]) / cfg.height_m,
            ],
        })
    }

    /// `[x, y, energy]` per UAV (normalized) followed by normalized AoI per sensor.
    pub fn global_state(&self) -> Vec<f64> {
        let cfg = &self.config;
        let mut v = Vec::with_capacity(cfg.state_dim());
        for u in &self.uavs {
            v.push(u.xy[0] / cfg.width_m);
            v.push(u.xy[1] / cfg.height_m);
            v.push(u.energy_j / cfg.battery_capacity_j);
        }
        v.extend(self.sensors.iter().map(|s| (s.aoi_s / cfg.aoi_cap_s).clamp(0.0, 1.0)));
        v
    }

    /// Versioned JSON snapshot of the complete state, generator included.
    pub fn to_json(&self) -> String {
        let snap = Snapshot {
            version: SNAPSHOT_VERSION,
            config: self.config.clone(),
            uavs: self.uavs.clone(),
            sensors: self.sensors.clone(),
            lbd_busy: self.lbd_busy.clone(),
            step: self.step,
            rng_state: self.rng.clone(),
        };
        serde_json::to_string_pretty(&snap).expect("world snapshot serializes")
    }

    pub fn from_json(doc: &str) -> Result<Self, SimError> {
        let snap: Snapshot = serde_json::from_str(doc)
            .map_err(|e| SimError::Argument(format!("malformed world snapshot: {e}")))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(SimError::Argument(format!(
                "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
                snap.version
            )));
        }
        snap.config.validate()?;
        Ok(WorldState {
            config: snap.config,
            uavs: snap.uavs,
            sensors: snap.sensors,
            lbd_busy: snap.lbd_busy,
            step: snap.step,
            rng: snap.rng_state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn world(cfg: WorldConfig) -> WorldState {
        WorldState::new(cfg).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = WorldConfig { seed: 7, ..Default::default() };
        let a = world(cfg.clone());
        let b = world(cfg);
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn init_places_sensors_inside_with_full_batteries() {
        let w = world(WorldConfig::default());
        assert_eq!(w.sensors.len(), 50);
        for s in &w.sensors {
            assert!((0.0..=1000.0).contains(&s.xy[0]) && (0.0..=1000.0).contains(&s.xy[1]));
            assert_eq!(s.aoi_s, 0.0);
        }
        for u in &w.uavs {
            assert_eq!(u.energy_j, 500_000.0);
            assert_eq!(u.xy, [500.0, 500.0]);
            assert!(u.active);
        }
        assert!(w.lbd_busy.iter().all(|b| !b));
        assert_eq!(w.step, 0);
    }

    #[test]
    fn init_rejects_zero_sensors() {
        let err = WorldState::new(WorldConfig { num_sensors: 0, ..Default::default() }).unwrap_err();
        assert!(matches!(err, SimError::Config { ref field, .. } if field == "num_sensors"));
    }

    #[test]
    fn move_examples() {
        let cfg = WorldConfig::default();
        assert_eq!(move_uav([500.0, 500.0], Direction::E, &cfg), [520.0, 500.0]);
        let ne = move_uav([500.0, 500.0], Direction::NE, &cfg);
        assert_relative_eq!(ne[0], 514.142135623730951, epsilon = 1e-12);
        assert_relative_eq!(ne[1], 514.142135623730951, epsilon = 1e-12);
        assert_eq!(move_uav([995.0, 500.0], Direction::E, &cfg), [1000.0, 500.0]);
        assert_eq!(move_uav([0.0, 0.0], Direction::SW, &cfg), [0.0, 0.0]);
    }

    #[test]
    fn lbds_all_four_in_zone() {
        let mut w = world(WorldConfig::default());
        assert_eq!(assign_lbds(&mut w), 4);
        assert_eq!(w.lbd_busy.iter().filter(|&&b| b).count(), 4);
    }

    #[test]
    fn lbd_radius_is_inclusive_only() {
        let mut w = world(WorldConfig::default());
        w.uavs[0].xy = [750.01, 500.0];
        w.uavs[1].xy = [750.0, 500.0];
        assign_lbds(&mut w);
        assert_eq!(w.uavs[0].charging_lbd, None);
        assert!(w.uavs[1].charging_lbd.is_some());
    }

    #[test]
    fn lbd_lowest_energy_first() {
        let cfg = WorldConfig { num_uavs: 3, num_lbds: 2, ..Default::default() };
        let mut w = world(cfg);
        for (u, e) in w.uavs.iter_mut().zip([10_000.0, 5_000.0, 7_000.0]) {
            u.energy_j = e;
        }
        assert_eq!(assign_lbds(&mut w), 2);
        assert_eq!(w.uavs[0].charging_lbd, None);
        assert_eq!(w.uavs[1].charging_lbd, Some(0));
        assert_eq!(w.uavs[2].charging_lbd, Some(1));
    }

    #[test]
    fn in_zone_energy_delta() {
        let mut w = world(WorldConfig::default());
        for u in &mut w.uavs {
            u.energy_j = 100_000.0;
        }
        let out = w.step(&[0, 0, 0, 0]).unwrap();
        for (i, u) in w.uavs.iter().enumerate() {
            assert_eq!(out.consumed_j[i], 1400.0);
            assert_eq!(out.charged_j[i], 6000.0);
            assert_eq!(u.energy_j, 104_600.0);
        }
    }

    #[test]
    fn collection_resets_near_and_ages_far() {
        let cfg = WorldConfig {
            num_uavs: 1,
            num_sensors: 2,
            sensor_layout: Some(vec![[550.0, 500.0], [900.0, 900.0]]),
            ..Default::default()
        };
        let mut w = world(cfg);
        w.sensors[0].aoi_s = 40.0;
        w.sensors[1].aoi_s = 40.0;
        // east: uav at (520, 500), sensor 0 at 30 m
        let out = w.step(&[0]).unwrap();
        assert_eq!(w.sensors[0].aoi_s, 0.0);
        assert_eq!(w.sensors[1].aoi_s, 44.0);
        assert_eq!(out.collections, vec![(0, 0)]);
    }

    #[test]
    fn stepping_done_world_fails() {
        let mut w = world(WorldConfig { horizon_steps: 1, num_uavs: 1, ..Default::default() });
        assert!(w.step(&[0]).unwrap().done);
        assert!(matches!(w.step(&[0]), Err(SimError::State(_))));
    }

    #[test]
    fn bad_actions_rejected() {
        let mut w = world(WorldConfig { num_uavs: 2, ..Default::default() });
        assert!(matches!(w.step(&[0]), Err(SimError::Argument(_))));
        assert!(matches!(w.step(&[0, 8]), Err(SimError::Argument(_))));
    }

    #[test]
    fn observe_fresh_world() {
        let w = world(WorldConfig::default());
        let o = w.observe(0).unwrap();
        assert_eq!(o.own_xy, [0.5, 0.5]);
        assert_eq!(o.own_energy, 1.0);
        assert_eq!(o.station_offset, [0.0, 0.0]);
        assert_eq!(o.to_vec().len(), 55);
        assert!(matches!(w.observe(4), Err(SimError::Argument(_))));
    }

    #[test]
    fn observe_masks_and_normalizes() {
        let cfg = WorldConfig {
            num_uavs: 1,
            num_sensors: 2,
            sensor_layout: Some(vec![[650.0, 500.0], [560.0, 500.0]]),
            ..Default::default()
        };
        let mut w = world(cfg);
        w.sensors[1].aoi_s = 1000.0;
        let o = w.observe(0).unwrap();
        assert_eq!(o.masked_aoi, vec![-1.0, 0.5]);
    }

    #[test]
    fn global_state_layout() {
        let mut w = world(WorldConfig::default());
        assert_eq!(w.global_state().len(), 62);
        assert!(w.global_state()[12..].iter().all(|&a| a == 0.0));
        // park the UAVs in a corner out of range of every sensor
        for s in &mut w.sensors {
            s.xy = [1000.0, 1000.0];
        }
        for u in &mut w.uavs {
            u.xy = [0.0, 0.0];
        }
        for _ in 0..10 {
            w.step(&[5, 5, 5, 5]).unwrap();
        }
        for a in &w.global_state()[12..] {
            assert_relative_eq!(*a, 0.02, epsilon = 1e-15);
        }
    }

    #[test]
    fn reward_examples() {
        let mut w = world(WorldConfig::default());
        let (team, local) = reward(&w, &[], &[]);
        assert_eq!(team, 0.0);
        assert_eq!(local, vec![0.0; 4]);
        for s in &mut w.sensors {
            s.aoi_s = 2000.0;
        }
        assert_eq!(reward(&w, &[], &[]).0, -1.0);
        let (_, local) = reward(&w, &[], &[2]);
        assert_eq!(local, vec![0.0, 0.0, -10.0, 0.0]);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut w = world(WorldConfig { seed: 3, ..Default::default() });
        for _ in 0..5 {
            w.step(&[1, 2, 3, 4]).unwrap();
        }
        let back = WorldState::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);
        let bad = w.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(WorldState::from_json(&bad).is_err());
    }
}
