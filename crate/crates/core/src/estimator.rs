//! Interface shared by the trainable sequence estimators.
//!
//! Every estimator works in a normalized coordinate frame `u = (p - a) / s`.
//! In position mode the anchor `a` is the last observed position, so inputs
//! are displacements; in fingerprint mode `a` is a fixed offset (normally
//! the environment center) because the model never sees a position.

use crate::channel::Point;
use crate::error::{Error, Result};
use crate::kv::KvBlock;
use crate::seed::Rng;
use crate::tensor::{Graph, ParamStore, Tensor, Var};
use crate::trajectory::{InputMode, SequenceSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoSpec {
    pub mode: InputMode,
    /// Width of one observed step: 2, or `M·N_s` fingerprint bits.
    pub input_dim: usize,
    /// Meters per normalized unit.
    pub coord_scale: f64,
    /// Anchor used in fingerprint mode.
    pub offset: Point,
}

impl IoSpec {
    pub fn position() -> Self {
        Self {
            mode: InputMode::Position,
            input_dim: 2,
            coord_scale: 10.0,
            offset: Point::new(0.0, 0.0),
        }
    }

    pub fn fingerprint(input_dim: usize, offset: Point, coord_scale: f64) -> Self {
        Self {
            mode: InputMode::Fingerprint,
            input_dim,
            coord_scale,
            offset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coord_scale > 0.0 && self.coord_scale.is_finite()) {
            return Err(Error::Config(format!("coord_scale must be positive, got {}", self.coord_scale)));
        }
        if !(self.offset.x.is_finite() && self.offset.y.is_finite()) {
            return Err(Error::Config("offset must be finite".into()));
        }
        match self.mode {
            InputMode::Position if self.input_dim != 2 => Err(Error::Config(format!(
                "position mode needs input_dim = 2, got {}",
                self.input_dim
            ))),
            InputMode::Fingerprint if self.input_dim == 0 => {
                Err(Error::Config("fingerprint mode needs input_dim > 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn anchor(&self, s: &SequenceSample) -> Point {
        match self.mode {
            InputMode::Position => s.last_observed(),
            InputMode::Fingerprint => self.offset,
        }
    }

    pub fn normalize(&self, s: &SequenceSample, p: Point) -> [f64; 2] {
        let a = self.anchor(s);
        [(p.x - a.x) / self.coord_scale, (p.y - a.y) / self.coord_scale]
    }

    pub fn denormalize(&self, s: &SequenceSample, u: [f64; 2]) -> Point {
        let a = self.anchor(s);
        Point::new(a.x + self.coord_scale * u[0], a.y + self.coord_scale * u[1])
    }

    /// Observed windows as a `[B, T, input_dim]` tensor.
    pub fn inputs(&self, batch: &[&SequenceSample]) -> Result<Tensor> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::Config("empty batch".into()));
        }
        let t = batch[0].t_obs();
        let mut data = Vec::with_capacity(b * t * self.input_dim);
        for s in batch {
            if s.t_obs() != t {
                return Err(Error::shape("batch windows", &[t], &[s.t_obs()]));
            }
            match self.mode {
                InputMode::Position => {
                    for &p in &s.observed {
                        data.extend(self.normalize(s, p));
                    }
                }
                InputMode::Fingerprint => {
                    let fps = s.fingerprints.as_ref().ok_or_else(|| {
                        Error::Config("fingerprint-mode model given a sample without fingerprints".into())
                    })?;
                    for f in fps {
                        if f.len() != self.input_dim {
                            return Err(Error::shape("fingerprint width", &[self.input_dim], &[f.len()]));
                        }
                        data.extend(f.iter().map(|&bit| bit as f64));
                    }
                }
            }
        }
        Tensor::new(&[b, t, self.input_dim], data)
    }

    /// Normalized targets `[B, horizon, 2]` from each sample's rollout.
    pub fn targets(&self, batch: &[&SequenceSample], horizon: usize) -> Result<Tensor> {
        let mut data = Vec::with_capacity(batch.len() * horizon * 2);
        for s in batch {
            if s.rollout_targets.len() < horizon {
                return Err(Error::Config(format!(
                    "sample needs {horizon} future steps, has {}",
                    s.rollout_targets.len()
                )));
            }
            for &p in &s.rollout_targets[..horizon] {
                data.extend(self.normalize(s, p));
            }
        }
        Tensor::new(&[batch.len(), horizon, 2], data)
    }

    pub fn write_kv(&self, kv: &mut KvBlock) {
        kv.push("input_mode", self.mode);
        kv.push("input_dim", self.input_dim);
        kv.push("coord_scale", self.coord_scale);
        kv.push("offset_x", self.offset.x);
        kv.push("offset_y", self.offset.y);
    }

    pub fn read_kv(kv: &KvBlock) -> Result<Self> {
        let mut io = Self::position();
        if let Some(m) = kv.parse_value::<InputMode>("input_mode")? {
            io.mode = m;
        }
        if let Some(v) = kv.parse_value("input_dim")? {
            io.input_dim = v;
        }
        if let Some(v) = kv.parse_value("coord_scale")? {
            io.coord_scale = v;
        }
        if let Some(v) = kv.parse_value("offset_x")? {
            io.offset.x = v;
        }
        if let Some(v) = kv.parse_value("offset_y")? {
            io.offset.y = v;
        }
        Ok(io)
    }

    pub const KEYS: [&'static str; 5] = ["input_mode", "input_dim", "coord_scale", "offset_x", "offset_y"];
}

/// Mean squared Euclidean error in meters² between normalized predictions
/// and targets of identical shape `[B, H, 2]`.
pub fn mse_meters<'g>(pred: Var<'g>, target: Var<'g>, coord_scale: f64) -> Result<Var<'g>> {
    let shape = pred.shape();
    let n = shape.iter().product::<usize>() / 2;
    let d = pred.sub(target)?;
    Ok(d.mul(d)?.sum().scale(coord_scale * coord_scale / n.max(1) as f64))
}

/// A trainable model that maps observed windows to the next position.
pub trait Estimator: Send + Sync {
    /// Model family tag stored in checkpoints.
    fn kind(&self) -> &'static str;
    fn io(&self) -> &IoSpec;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Configuration as key=value text; its digest keys checkpoints.
    fn config_text(&self) -> String;
    /// Training loss on a batch; dropout is active when `rng` is given.
    fn loss<'g>(&self, g: &'g Graph, batch: &[&SequenceSample], rng: Option<&mut Rng>) -> Result<Var<'g>>;
    /// Next-position predictions in meters, dropout off.
    fn predict(&self, batch: &[&SequenceSample]) -> Result<Vec<Point>>;

    fn count_params(&self) -> usize {
        self.params().num_elements()
    }
}

/// Converts normalized `[B, 2]` head outputs to absolute positions.
pub(crate) fn to_points(io: &IoSpec, batch: &[&SequenceSample], out: &Tensor) -> Result<Vec<Point>> {
    if !out.all_finite() {
        return Err(Error::Model("prediction is not finite".into()));
    }
    Ok(batch
        .iter()
        .zip(out.data().chunks(2))
        .map(|(s, u)| io.denormalize(s, [u[0], u[1]]))
        .collect())
}
