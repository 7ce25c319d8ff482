use serde::{Deserialize, Serialize};

use super::SimError;

/// Static description of a scenario. Defaults reproduce the reference
/// deployment: a 1000 m square field with 50 sensors, 4 UAVs at 80 m
/// altitude cruising at 5 m/s, and a central station with 10 laser beam
/// directors (LBDs) covering a 250 m charging disk at 15% laser-to-electricity
/// efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub num_sensors: usize,
    pub num_uavs: usize,
    pub altitude_m: f64,
    pub cruise_speed_mps: f64,
    /// Seconds per decision step.
    pub dt_s: f64,
    pub horizon_steps: usize,
    /// Horizontal collection radius.
    pub comm_range_m: f64,
    pub station_xy: [f64; 2],
    pub charge_radius_m: f64,
    pub num_lbds: usize,
    pub laser_tx_power_w: f64,
    /// Photovoltaic laser-to-electricity efficiency, in (0, 1].
    pub eta_pv: f64,
    pub battery_capacity_j: f64,
    pub p_move_w: f64,
    pub p_hover_w: f64,
    /// AoI normalization cap for observations and rewards.
    pub aoi_cap_s: f64,
    pub c_collect: f64,
    pub c_dead: f64,
    pub seed: u64,
    /// Explicit sensor positions; when absent sensors are drawn uniformly
    /// from the area with the seeded generator.
    pub sensor_layout: Option<Vec<[f64; 2]>>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            width_m: 1000.0,
            height_m: 1000.0,
            num_sensors: 50,
            num_uavs: 4,
            altitude_m: 80.0,
            cruise_speed_mps: 5.0,
            dt_s: 4.0,
            horizon_steps: 500,
            comm_range_m: 100.0,
            station_xy: [500.0, 500.0],
            charge_radius_m: 250.0,
            num_lbds: 10,
            laser_tx_power_w: 10_000.0,
            eta_pv: 0.15,
            battery_capacity_j: 500_000.0,
            p_move_w: 350.0,
            p_hover_w: 300.0,
            aoi_cap_s: 2000.0,
            c_collect: 0.5,
            c_dead: 10.0,
            seed: 0,
            sensor_layout: None,
        }
    }
}

impl WorldConfig {
    /// Square field of side `side_m` with the station at its centre; every
    /// other field keeps its default.
    pub fn scaled(side_m: f64, num_sensors: usize, num_uavs: usize) -> Self {
        WorldConfig {
            width_m: side_m,
            height_m: side_m,
            num_sensors,
            num_uavs,
            station_xy: [side_m / 2.0, side_m / 2.0],
            ..WorldConfig::default()
        }
    }

    /// Canonical tiny instance for exhaustive search: a 40 m square whose
    /// cardinal moves walk a 3x3 lattice with 20 m spacing, one UAV, two
    /// sensors and a six-step horizon.
    pub fn tiny() -> Self {
        WorldConfig {
            width_m: 40.0,
            height_m: 40.0,
            num_sensors: 2,
            num_uavs: 1,
            horizon_steps: 6,
            comm_range_m: 10.0,
            station_xy: [20.0, 20.0],
            charge_radius_m: 10.0,
            num_lbds: 1,
            aoi_cap_s: 24.0,
            seed: 7,
            sensor_layout: Some(vec![[40.0, 0.0], [0.0, 40.0]]),
            ..WorldConfig::default()
        }
    }

    /// Length of a per-agent observation vector.
    pub fn obs_dim(&self) -> usize {
        5 + self.num_sensors
    }

    /// Length of the global state vector.
    pub fn state_dim(&self) -> usize {
        3 * self.num_uavs + self.num_sensors
    }

    pub fn step_length_m(&self) -> f64 {
        self.cruise_speed_mps * self.dt_s
    }

    pub fn validate(&self) -> Result<(), SimError> {
        fn positive(field: &str, v: f64) -> Result<(), SimError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::config(field, format!("{field} must be > 0 (got {v})")))
            }
        }
        fn non_negative(field: &str, v: f64) -> Result<(), SimError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(SimError::config(field, format!("{field} must be >= 0 (got {v})")))
            }
        }

        positive("width_m", self.width_m)?;
        positive("height_m", self.height_m)?;
        if self.num_sensors == 0 {
            return Err(SimError::config("num_sensors", "num_sensors must be >= 1"));
        }
        if self.num_uavs == 0 {
            return Err(SimError::config("num_uavs", "num_uavs must be >= 1"));
        }
        non_negative("altitude_m", self.altitude_m)?;
        positive("cruise_speed_mps", self.cruise_speed_mps)?;
        positive("dt_s", self.dt_s)?;
        if self.horizon_steps == 0 {
            return Err(SimError::config("horizon_steps", "horizon_steps must be >= 1"));
        }
        positive("comm_range_m", self.comm_range_m)?;
        for (axis, (v, hi)) in ["x", "y"]
            .iter()
            .zip(self.station_xy.iter().zip([self.width_m, self.height_m]))
        {
            if !(v.is_finite() && (0.0..=hi).contains(v)) {
                return Err(SimError::config(
                    "station_xy",
                    format!("station {axis} = {v} lies outside the area"),
                ));
            }
        }
        positive("charge_radius_m", self.charge_radius_m)?;
        if self.num_lbds == 0 {
            return Err(SimError::config("num_lbds", "num_lbds must be >= 1"));
        }
        non_negative("laser_tx_power_w", self.laser_tx_power_w)?;
        if !(self.eta_pv > 0.0 && self.eta_pv <= 1.0) {
            return Err(SimError::config("eta_pv", "eta_pv must lie in (0,1]"));
        }
        positive("battery_capacity_j", self.battery_capacity_j)?;
        non_negative("p_move_w", self.p_move_w)?;
        non_negative("p_hover_w", self.p_hover_w)?;
        positive("aoi_cap_s", self.aoi_cap_s)?;
        non_negative("c_collect", self.c_collect)?;
        non_negative("c_dead", self.c_dead)?;
        if let Some(layout) = &self.sensor_layout {
            if layout.len() != self.num_sensors {
                return Err(SimError::config(
                    "sensor_layout",
                    format!(
                        "sensor_layout has {} entries but num_sensors = {}",
                        layout.len(),
                        self.num_sensors
                    ),
                ));
            }
            for (k, p) in layout.iter().enumerate() {
                let inside = p[0].is_finite()
                    && p[1].is_finite()
                    && (0.0..=self.width_m).contains(&p[0])
                    && (0.0..=self.height_m).contains(&p[1]);
                if !inside {
                    return Err(SimError::config(
                        "sensor_layout",
                        format!("sensor {k} at {p:?} lies outside the area"),
                    ));
                }
            }
        }
        Ok(())
    }
}
