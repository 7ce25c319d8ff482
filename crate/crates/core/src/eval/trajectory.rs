use std::fs;
use std::path::Path;

use super::EpisodeLog;
use crate::{Error, Result};

pub const TRAJECTORY_HEADER: [&str; 7] = ["step", "uav_id", "x", "y", "energy_j", "charging", "collected_ids"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub uav_id: usize,
    pub x: f64,
    pub y: f64,
    pub energy_j: f64,
    pub charging: bool,
    pub collected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config_hash: String,
    pub rows: Vec<TrajectoryRow>,
}

/// CSV with a `# config_hash=` comment line, the fixed header, and one row per
/// (step, UAV). Floats use the shortest representation that parses back to
/// the same value.
pub fn export_trajectory(log: &EpisodeLog, config_hash: &str) -> Result<String> {
    if log.is_empty() {
        return Err(Error::Argument("cannot export an empty episode".into()));
    }
    let mut out = format!("# config_hash={config_hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let csv_err = |e: csv::Error| Error::Argument(format!("csv: {e}"));
        w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
        for s in &log.steps {
            for u in 0..log.num_uavs {
                let ids: Vec<String> = s.collected[u].iter().map(usize::to_string).collect();
                w.write_record([
                    s.step.to_string(),
                    u.to_string(),
                    s.positions[u][0].to_string(),
                    s.positions[u][1].to_string(),
                    s.energies[u].to_string(),
                    u8::from(s.charging[u]).to_string(),
                    ids.join(";"),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Argument(format!("csv: {e}")))?;
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

pub fn write_trajectory(path: &Path, log: &EpisodeLog, config_hash: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, export_trajectory(log, config_hash)?).map_err(|e| Error::io(path, e))
}

pub fn import_trajectory(doc: &str) -> Result<Trajectory> {
    let bad = |m: String| Error::Argument(format!("trajectory csv: {m}"));
    let first = doc.lines().next().unwrap_or("");
    let config_hash = first
        .strip_prefix("# config_hash=")
        .ok_or_else(|| bad("missing config_hash comment".into()))?
        .to_string();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(doc.as_bytes());
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| f(i).parse::<f64>().map_err(|e| bad(format!("{}: {e}", TRAJECTORY_HEADER[i])));
        let int = |i: usize| f(i).parse::<usize>().map_err(|e| bad(format!("{}: {e}", TRAJECTORY_HEADER[i])));
        let collected = if f(6).is_empty() {
            Vec::new()
        } else {
            f(6).split(';')
                .map(|s| s.parse::<usize>().map_err(|e| bad(format!("collected_ids: {e}"))))
                .collect::<Result<_>>()?
        };
        rows.push(TrajectoryRow {
            step: int(0)?,
            uav_id: int(1)?,
            x: num(2)?,
            y: num(3)?,
            energy_j: num(4)?,
            charging: match f(5) {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("charging flag {other:?}"))),
            },
            collected,
        });
    }
    Ok(Trajectory { config_hash, rows })
}
