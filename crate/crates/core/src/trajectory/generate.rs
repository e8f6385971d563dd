//! Kinematically constrained random trajectories sampled at 1 Hz.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rayon::prelude::*;

use super::profile::{KinematicProfile, MotionKind};
use crate::channel::{Environment, Point};
use crate::error::{Error, Result};
use crate::seed::{self, Domain};

/// Seconds between samples.
pub const DT: f64 = 1.0;

const STEP_RETRIES: usize = 32;
const RESTARTS: usize = 200;
const START_TRIES: usize = 10_000;
/// Mean reversion of the vehicle speed random walk.
const SPEED_REVERSION: f64 = 0.3;
/// Half-width of the pedestrian per-step speed jitter.
const WALK_JITTER: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub traj_id: usize,
    pub group_id: usize,
    pub kind: MotionKind,
    pub positions: Vec<Point>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Per-step displacement magnitudes (m/s at 1 Hz).
    pub fn speeds(&self) -> Vec<f64> {
        self.positions
            .windows(2)
            .map(|w| w[0].distance(w[1]) / DT)
            .collect()
    }
}

fn step_is_free(env: &Environment, from: Point, to: Point) -> bool {
    env.is_free(to) && !env.segment_blocked(from, to)
}

fn random_free_point<R: Rng>(env: &Environment, rng: &mut R) -> Result<Point> {
    let b = env.bounds();
    for _ in 0..START_TRIES {
        let p = Point::new(
            rng.random_range(b.min.x..=b.max.x),
            rng.random_range(b.min.y..=b.max.y),
        );
        if env.is_free(p) {
            return Ok(p);
        }
    }
    Err(Error::Generation("no collision-free start point found".into()))
}

fn turn<R: Rng>(max_turn: f64, rng: &mut R) -> f64 {
    if max_turn > 0.0 {
        rng.random_range(-max_turn..=max_turn)
    } else {
        0.0
    }
}

fn heading_step(heading: f64, speed: f64) -> Point {
    Point::new(heading.cos(), heading.sin()) * (speed * DT)
}

/// One attempt at a full trajectory; `None` means a vehicle got boxed in.
fn try_generate<R: Rng>(
    env: &Environment,
    p: &KinematicProfile,
    len: usize,
    rng: &mut R,
) -> Result<Option<Vec<Point>>> {
    let start = random_free_point(env, rng)?;
    let mut positions = Vec::with_capacity(len);
    positions.push(start);
    let mut heading = rng.random_range(0.0..TAU);

    match p.kind {
        MotionKind::Pedestrian => {
            // walking speed that yields the requested mean once stops are
            // accounted for
            let moving = (p.mean_speed / (1.0 - p.stop_probability))
                .clamp(WALK_JITTER, p.max_speed - WALK_JITTER.min(p.max_speed / 2.0));
            let mut resumed = false;
            while positions.len() < len {
                let here = *positions.last().unwrap();
                if rng.random_bool(p.stop_probability) {
                    positions.push(here);
                    resumed = true;
                    continue;
                }
                let speed = (moving + rng.random_range(-WALK_JITTER..=WALK_JITTER)).clamp(0.0, p.max_speed);
                if resumed {
                    heading = rng.random_range(0.0..TAU);
                    resumed = false;
                } else {
                    heading += turn(p.max_turn_per_step, rng);
                }
                let mut next = None;
                for attempt in 0..=STEP_RETRIES {
                    let h = if attempt == STEP_RETRIES {
                        heading + PI
                    } else if attempt == 0 {
                        heading
                    } else {
                        heading + turn(p.max_turn_per_step, rng)
                    };
                    let cand = here + heading_step(h, speed);
                    if step_is_free(env, here, cand) {
                        heading = h;
                        next = Some(cand);
                        break;
                    }
                }
                positions.push(next.unwrap_or(here));
            }
        }
        MotionKind::Vehicle => {
            let mut speed = (p.mean_speed + rng.random_range(-1.5..=1.5)).clamp(p.max_accel.min(1.0), p.max_speed);
            let min_speed = p.max_accel.min(1.0).min(p.mean_speed);
            while positions.len() < len {
                let here = *positions.last().unwrap();
                if positions.len() > 1 {
                    let dv = (SPEED_REVERSION * (p.mean_speed - speed)
                        + rng.random_range(-p.max_accel..=p.max_accel))
                    .clamp(-p.max_accel * DT, p.max_accel * DT);
                    speed = (speed + dv).clamp(min_speed, p.max_speed);
                }
                // the first leg fixes the initial heading; later legs turn
                let base = heading;
                let mut next = None;
                for _ in 0..STEP_RETRIES {
                    let h = if positions.len() > 1 {
                        base + turn(p.max_turn_per_step, rng)
                    } else {
                        rng.random_range(0.0..TAU)
                    };
                    let cand = here + heading_step(h, speed);
                    if step_is_free(env, here, cand) {
                        heading = h;
                        next = Some(cand);
                        break;
                    }
                }
                match next {
                    Some(n) => positions.push(n),
                    None => return Ok(None),
                }
            }
        }
    }
    Ok(Some(positions))
}

/// Generates one trajectory of `len` positions. Vehicles that run into an
/// obstacle they cannot steer around restart from a fresh start point.
pub fn generate_trajectory<R: Rng>(
    env: &Environment,
    profile: &KinematicProfile,
    len: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    profile.validate()?;
    if len < 2 {
        return Err(Error::Config(format!("trajectory length must be >= 2, got {len}")));
    }
    for _ in 0..RESTARTS {
        if let Some(positions) = try_generate(env, profile, len, rng)? {
            return Ok(Trajectory {
                traj_id: 0,
                group_id: 0,
                kind: profile.kind,
                positions,
            });
        }
    }
    Err(Error::Generation(format!(
        "{}: no feasible trajectory after {RESTARTS} restarts",
        profile.kind
    )))
}

/// Generates `count` trajectories with ids `0..count` and group ids
/// `id / group_size`. Each trajectory draws from its own seed stream, so the
/// result does not depend on scheduling.
pub fn generate_set(
    env: &Environment,
    profile: &KinematicProfile,
    count: usize,
    len: usize,
    group_size: usize,
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    if group_size == 0 {
        return Err(Error::Config("group size must be positive".into()));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(
                master_seed,
                Domain::Trajectory,
                &[profile.kind as u64, i as u64],
            );
            let mut t = generate_trajectory(env, profile, len, &mut rng)?;
            t.traj_id = i;
            t.group_id = i / group_size;
            Ok(t)
        })
        .collect()
}

/// A breached kinematic or containment constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub traj_id: usize,
    pub step: usize,
    pub what: String,
}

/// Checks every invariant a generated trajectory must satisfy.
pub fn check_trajectory(env: &Environment, p: &KinematicProfile, t: &Trajectory) -> Vec<Violation> {
    const TOL: f64 = 1e-9;
    let mut out = Vec::new();
    let mut flag = |step: usize, what: String| {
        out.push(Violation {
            traj_id: t.traj_id,
            step,
            what,
        })
    };
    for (i, &q) in t.positions.iter().enumerate() {
        if !env.is_free(q) {
            flag(i, format!("position {q:?} not free"));
        }
    }
    let speeds = t.speeds();
    for (i, w) in t.positions.windows(2).enumerate() {
        if env.segment_blocked(w[0], w[1]) {
            flag(i, "step crosses an obstacle".into());
        }
        if speeds[i] > p.max_speed * DT + TOL {
            flag(i, format!("speed {} above {}", speeds[i], p.max_speed));
        }
    }
    if p.kind == MotionKind::Vehicle {
        for (i, &s) in speeds.iter().enumerate() {
            if s <= 0.0 {
                flag(i, "vehicle stood still".into());
            }
        }
        for i in 1..speeds.len() {
            if (speeds[i] - speeds[i - 1]).abs() > p.max_accel * DT + TOL {
                flag(i, format!("speed change {} above limit", speeds[i] - speeds[i - 1]));
            }
            let a = t.positions[i] - t.positions[i - 1];
            let b = t.positions[i + 1] - t.positions[i];
            let cross = a.x * b.y - a.y * b.x;
            let dot = a.x * b.x + a.y * b.y;
            let dtheta = cross.atan2(dot).abs();
            if dtheta > p.max_turn_per_step + 1e-7 {
                flag(i, format!("turn {dtheta} above {}", p.max_turn_per_step));
            }
        }
    }
    out
}
