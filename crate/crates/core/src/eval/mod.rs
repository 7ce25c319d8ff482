//! Episode metrics, the conversion-efficiency sweep, trajectory export and
//! the exhaustive oracle for tiny worlds.

mod log;
mod oracle;
mod stats;
mod sweep;
mod trajectory;

pub use log::{mean_aoi, peak_aoi, run_episode, EpisodeLog, StepRecord};
pub use oracle::{brute_force_oracle, replay_return, verify_oracle, OracleResult, ORACLE_MAX_SEQUENCES};
pub use stats::{mean, median, spearman, std_dev};
pub use sweep::{efficiency_sweep, SweepPoint, SweepResult};
pub use trajectory::{export_trajectory, import_trajectory, write_trajectory, Trajectory, TrajectoryRow, TRAJECTORY_HEADER};
