//! Discrete-time world model: UAV motion on a bounded plane, constant-power
//! energy drain, laser charging from a central station, sensor data
//! collection and age-of-information bookkeeping.

mod config;
mod world;

pub use config::WorldConfig;
pub use world::{
    assign_lbds, move_uav, reward, Direction, Observation, SensorState, StepOutcome, UavState,
    WorldState, NUM_ACTIONS, SNAPSHOT_VERSION,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {field}: {message}")]
    Config { field: String, message: String },

    #[error("state error: {0}")]
    State(String),

    #[error("invalid argument: {0}")]
    Argument(String),
}

impl SimError {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        SimError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Horizontal Euclidean distance.
#[inline]
pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
