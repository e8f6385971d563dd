//! Sliding-window sequence samples for the estimators.

use std::fmt;
use std::str::FromStr;

use super::generate::Trajectory;
use super::grid::snap_point;
use crate::channel::{Environment, FingerprintSource, Point};
use crate::error::{Error, Result};
use crate::seed::{self, Domain};

/// What the estimator observes at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputMode {
    Position,
    Fingerprint,
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::Position => "position",
            InputMode::Fingerprint => "fingerprint",
        })
    }
}

impl FromStr for InputMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(InputMode::Position),
            "fingerprint" => Ok(InputMode::Fingerprint),
            other => Err(Error::Config(format!("unknown input mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub traj_id: usize,
    pub group_id: usize,
    /// Index of the first observed step within the trajectory.
    pub start: usize,
    pub observed: Vec<Point>,
    /// One flattened `M·N_s` bit vector per observed step (fingerprint mode).
    pub fingerprints: Option<Vec<Vec<u8>>>,
    pub target: Point,
    /// Remaining positions of the trajectory; the first row is `target`.
    pub rollout_targets: Vec<Point>,
}

impl SequenceSample {
    pub fn t_obs(&self) -> usize {
        self.observed.len()
    }

    pub fn last_observed(&self) -> Point {
        *self.observed.last().expect("samples are never empty")
    }
}

/// Noise realization key for step `step` of trajectory `traj_id`: overlapping
/// windows see the same observation at the same step.
pub fn realization_key(kind_tag: u64, traj_id: usize, step: usize) -> u64 {
    seed::derive(0, Domain::Realization, &[kind_tag, traj_id as u64, step as u64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Windowed {
    pub samples: Vec<SequenceSample>,
    /// Trajectories shorter than `t_obs + 1`.
    pub skipped: usize,
}

/// Stride-1 windows of `t_obs` observed steps plus the following position.
pub fn make_sequences(
    trajs: &[Trajectory],
    t_obs: usize,
    mode: InputMode,
    source: Option<(&Environment, &dyn FingerprintSource)>,
) -> Result<Windowed> {
    if t_obs == 0 {
        return Err(Error::Domain("observation window must be at least one step".into()));
    }
    if mode == InputMode::Fingerprint && source.is_none() {
        return Err(Error::Config("fingerprint mode needs a fingerprint source".into()));
    }
    let mut samples = Vec::new();
    let mut skipped = 0;
    for t in trajs {
        let l = t.len();
        if l < t_obs + 1 {
            skipped += 1;
            continue;
        }
        let step_bits: Option<Vec<Vec<u8>>> = match (mode, source) {
            (InputMode::Fingerprint, Some((env, src))) => Some(
                t.positions[..l - 1]
                    .iter()
                    .enumerate()
                    .map(|(step, &p)| {
                        let node = env.linear_index(snap_point(env, p));
                        src.bits(node, realization_key(t.kind as u64, t.traj_id, step))
                    })
                    .collect::<Result<_>>()?,
            ),
            _ => None,
        };
        for start in 0..l - t_obs {
            let end = start + t_obs;
            samples.push(SequenceSample {
                traj_id: t.traj_id,
                group_id: t.group_id,
                start,
                observed: t.positions[start..end].to_vec(),
                fingerprints: step_bits.as_ref().map(|b| b[start..end].to_vec()),
                target: t.positions[end],
                rollout_targets: t.positions[end..].to_vec(),
            });
        }
    }
    Ok(Windowed { samples, skipped })
}
