//! Shared fixtures for the benchmarks.

use bfftrack::harness::{Experiment, ExperimentConfig};
use bfftrack::trajectory::{InputMode, MotionKind, SequenceSample};

/// A small experiment on the default scene and its first `n` pedestrian
/// training windows.
pub fn windows(mode: InputMode, n: usize, t_obs: usize) -> (Experiment, Vec<SequenceSample>) {
    let exp = Experiment::build(ExperimentConfig {
        seed: 7,
        traj_count: 100,
        input_mode: mode,
        profiles: vec![MotionKind::Pedestrian],
        ..ExperimentConfig::default()
    })
    .expect("fixture experiment");
    let mut w = exp.windows(MotionKind::Pedestrian, t_obs).expect("fixture windows").train;
    w.truncate(n);
    (exp, w)
}
