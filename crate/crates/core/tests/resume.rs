use std::fs;
use std::path::Path;

use serde_json::Value;
use wlpt::par::Exec;
use wlpt::policy::{Algorithm, PolicyCheckpoint};
use wlpt::sim::WorldConfig;
use wlpt::trainer::{train_world, TrainConfig, TrainPaths, EVAL_LOG, TRAIN_LOG};

fn world() -> WorldConfig {
    WorldConfig { horizon_steps: 40, ..WorldConfig::scaled(200.0, 3, 2) }
}

fn train_cfg() -> TrainConfig {
    TrainConfig {
        rollout_len: 16,
        chunk_len: 4,
        num_parallel_envs: 2,
        minibatch_chunks: 4,
        total_env_steps: 320,
        eval_every: 64,
        ..TrainConfig::default()
    }
}

/// Log lines with the wall-clock field removed.
fn stable_lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_clock_s");
            v
        })
        .collect()
}

#[test]
fn interrupted_run_resumes_bit_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (w, t) = (world(), train_cfg());
    let full = train_world(&w, &t, Algorithm::MappoTm, 5, "h", &TrainPaths { run_dir: a.clone(), resume_from: None }, None, Exec::Parallel).unwrap();

    let cut = TrainPaths { run_dir: b.clone(), resume_from: None };
    let partial = train_world(&w, &t, Algorithm::MappoTm, 5, "h", &cut, Some(130), Exec::Parallel).unwrap();
    assert_eq!(partial.log.len(), 5);
    // resume from the step-128 checkpoint even though step 160 was logged after it
    let from = b.join(&partial.evals[1].checkpoint);
    assert!(from.ends_with("step_0000000128"));
    let resumed = TrainPaths { run_dir: b.clone(), resume_from: Some(from) };
    let rest = train_world(&w, &t, Algorithm::MappoTm, 5, "h", &resumed, None, Exec::Sequential).unwrap();

    assert_eq!(stable_lines(&a.join(TRAIN_LOG)), stable_lines(&b.join(TRAIN_LOG)));
    assert_eq!(fs::read_to_string(a.join(EVAL_LOG)).unwrap(), fs::read_to_string(b.join(EVAL_LOG)).unwrap());
    let (pa, pb) = (PolicyCheckpoint::load(&full.final_checkpoint).unwrap(), PolicyCheckpoint::load(&rest.final_checkpoint).unwrap());
    assert_eq!(pa, pb);
}

#[test]
fn resume_refuses_other_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("r");
    let out = train_world(&world(), &train_cfg(), Algorithm::MappoTm, 1, "h", &TrainPaths { run_dir: dir.clone(), resume_from: None }, Some(64), Exec::Parallel).unwrap();
    let paths = TrainPaths { run_dir: dir, resume_from: Some(out.final_checkpoint) };
    let err = train_world(&world(), &train_cfg(), Algorithm::MappoTm, 1, "other", &paths, None, Exec::Parallel).unwrap_err();
    assert!(err.to_string().contains("config hash"), "{err}");
}

#[test]
fn training_is_deterministic_across_worker_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str, exec| {
        let paths = TrainPaths { run_dir: tmp.path().join(dir), resume_from: None };
        let t = TrainConfig { total_env_steps: 96, ..train_cfg() };
        train_world(&world(), &t, Algorithm::Mappo, 9, "h", &paths, None, exec).unwrap()
    };
    let (x, y) = (run("x", Exec::Parallel), run("y", Exec::Sequential));
    assert_eq!(stable_lines(&tmp.path().join("x").join(TRAIN_LOG)), stable_lines(&tmp.path().join("y").join(TRAIN_LOG)));
    assert_eq!(PolicyCheckpoint::load(&x.final_checkpoint).unwrap(), PolicyCheckpoint::load(&y.final_checkpoint).unwrap());
}
