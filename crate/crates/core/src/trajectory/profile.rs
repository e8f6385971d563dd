use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const KMH: f64 = 1000.0 / 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MotionKind {
    Pedestrian,
    Vehicle,
}

impl MotionKind {
    pub const ALL: [MotionKind; 2] = [MotionKind::Pedestrian, MotionKind::Vehicle];

    pub fn as_str(self) -> &'static str {
        match self {
            MotionKind::Pedestrian => "pedestrian",
            MotionKind::Vehicle => "vehicle",
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pedestrian" => Ok(MotionKind::Pedestrian),
            "vehicle" => Ok(MotionKind::Vehicle),
            other => Err(Error::Config(format!("unknown motion kind {other:?}"))),
        }
    }
}

/// Kinematic limits for one class of mover. Speeds in m/s, time step 1 s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicProfile {
    pub kind: MotionKind,
    pub mean_speed: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    /// Radians per step.
    pub max_turn_per_step: f64,
    /// Per-step probability of standing still (pedestrians only).
    pub stop_probability: f64,
}

impl KinematicProfile {
    /// 5 km/h walkers that stop now and then and turn sharply.
    pub fn pedestrian() -> Self {
        Self {
            kind: MotionKind::Pedestrian,
            mean_speed: 5.0 * KMH,
            max_speed: 2.5,
            max_accel: 2.5,
            max_turn_per_step: PI / 4.0,
            stop_probability: 0.05,
        }
    }

    /// 30 km/h vehicles with limited steering and acceleration.
    pub fn vehicle() -> Self {
        Self {
            kind: MotionKind::Vehicle,
            mean_speed: 30.0 * KMH,
            max_speed: 50.0 * KMH,
            max_accel: 2.0,
            max_turn_per_step: 15f64.to_radians(),
            stop_probability: 0.0,
        }
    }

    pub fn for_kind(kind: MotionKind) -> Self {
        match kind {
            MotionKind::Pedestrian => Self::pedestrian(),
            MotionKind::Vehicle => Self::vehicle(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_speed > 0.0 && self.mean_speed <= self.max_speed) {
            return Err(Error::Config(format!(
                "{}: need 0 < mean_speed <= max_speed, got {} / {}",
                self.kind, self.mean_speed, self.max_speed
            )));
        }
        if !(self.max_turn_per_step >= 0.0 && self.max_turn_per_step <= PI) {
            return Err(Error::Config(format!(
                "{}: max_turn_per_step must lie in [0, pi]",
                self.kind
            )));
        }
        if !(self.max_accel > 0.0) {
            return Err(Error::Config(format!("{}: max_accel must be positive", self.kind)));
        }
        if !(0.0..1.0).contains(&self.stop_probability) {
            return Err(Error::Config(format!(
                "{}: stop_probability must lie in [0, 1)",
                self.kind
            )));
        }
        if self.kind == MotionKind::Vehicle && self.stop_probability != 0.0 {
            return Err(Error::Config("vehicles never stop".into()));
        }
        Ok(())
    }
}
