//! The single key=value configuration shared by every pipeline step.

use std::fmt;
use std::str::FromStr;

use super::train::TrainConfig;
use crate::channel::{Codebook, Environment, Obstacle, Point, SounderConfig};
use crate::error::{Error, Result};
use crate::kv::{parse_list, KvBlock};
use crate::tensor::{hex, sha256};
use crate::trajectory::{InputMode, MotionKind};

/// Estimators compared by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Transformer,
    Lstm,
    Rnn,
    Persistence,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [Self::Transformer, Self::Lstm, Self::Rnn, Self::Persistence];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Transformer => "transformer",
            Self::Lstm => "lstm",
            Self::Rnn => "rnn",
            Self::Persistence => "persistence",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub env: Environment,
    pub sounder: SounderConfig,
    pub n_beams: usize,
    pub sidelobe_db: f64,
    pub traj_count: usize,
    pub traj_len: usize,
    pub group_size: usize,
    pub profiles: Vec<MotionKind>,
    pub split: [f64; 3],
    pub input_mode: InputMode,
    pub t_obs_list: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub horizon: usize,
    /// Meters per normalized unit in position mode.
    pub position_scale: f64,
    pub train: TrainConfig,
    /// Cap on training windows per cell, 0 for no cap.
    pub max_train_windows: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            env: Environment::default(),
            sounder: SounderConfig::default(),
            n_beams: 8,
            sidelobe_db: -20.0,
            traj_count: 2000,
            traj_len: 12,
            group_size: 10,
            profiles: MotionKind::ALL.to_vec(),
            split: [0.8, 0.1, 0.1],
            input_mode: InputMode::Fingerprint,
            t_obs_list: (3..=11).collect(),
            models: ModelKind::ALL.to_vec(),
            d_model: 64,
            heads: 4,
            d_ff: 256,
            n_enc_layers: 2,
            n_dec_layers: 2,
            horizon: 1,
            position_scale: 10.0,
            train: TrainConfig::default(),
            max_train_windows: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "grid",
    "grid_nx",
    "grid_ny",
    "origin_x",
    "origin_y",
    "extent_x",
    "extent_y",
    "tx_x",
    "tx_y",
    "carrier_freq",
    "env_seed",
    "obstacle",
    "bandwidth",
    "sample_interval",
    "max_excess_delay",
    "sounding_amplitude",
    "max_rx_power_dbm",
    "threshold_dbm",
    "shadowing_sigma_db",
    "n_beams",
    "sidelobe_db",
    "traj_count",
    "traj_len",
    "group_size",
    "profiles",
    "split",
    "input_mode",
    "t_obs_list",
    "models",
    "d_model",
    "heads",
    "d_ff",
    "n_enc_layers",
    "n_dec_layers",
    "horizon",
    "position_scale",
    "epochs_max",
    "batch_size",
    "learning_rate",
    "dropout",
    "patience",
    "max_train_windows",
];

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn known_keys() -> &'static [&'static str] {
        KEYS
    }

    pub fn codebook(&self) -> Result<Codebook> {
        Codebook::uniform(
            self.n_beams,
            std::f64::consts::TAU / self.n_beams.max(1) as f64,
            0.0,
            self.sidelobe_db,
        )
    }

    pub fn fingerprint_len(&self) -> usize {
        self.n_beams * self.sounder.n_samples()
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sounder.validate()?;
        self.codebook()?;
        self.train.validate()?;
        if self.traj_count == 0 || self.group_size == 0 || self.traj_len < 2 {
            return Err(Error::Config("traj_count and group_size must be positive, traj_len ≥ 2".into()));
        }
        if self.profiles.is_empty() || self.models.is_empty() || self.t_obs_list.is_empty() {
            return Err(Error::Config("profiles, models and t_obs_list must be nonempty".into()));
        }
        if let Some(&t) = self.t_obs_list.iter().find(|&&t| t == 0 || t >= self.traj_len) {
            return Err(Error::Config(format!(
                "t_obs {t} must satisfy 0 < t_obs < traj_len = {}",
                self.traj_len
            )));
        }
        if self.traj_len < self.t_obs_list.iter().max().unwrap() + self.horizon {
            return Err(Error::Config("traj_len too short for the largest t_obs plus horizon".into()));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("d_model {} not divisible by heads {}", self.d_model, self.heads)));
        }
        if !(self.position_scale > 0.0) {
            return Err(Error::Config("position_scale must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text covering every field; its digest identifies runs.
    pub fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        let e = &self.env;
        let s = &self.sounder;
        kv.push("seed", self.seed);
        kv.push("grid_nx", e.grid_nx);
        kv.push("grid_ny", e.grid_ny);
        kv.push("origin_x", e.origin.x);
        kv.push("origin_y", e.origin.y);
        kv.push("extent_x", e.extent_x);
        kv.push("extent_y", e.extent_y);
        kv.push("tx_x", e.tx_position.x);
        kv.push("tx_y", e.tx_position.y);
        kv.push("carrier_freq", e.carrier_freq);
        kv.push("env_seed", e.rng_seed);
        for o in &e.obstacles {
            kv.push(
                "obstacle",
                format!("{},{},{},{},{}", o.rect.min.x, o.rect.min.y, o.rect.max.x, o.rect.max.y, o.reflection_loss_db),
            );
        }
        kv.push("bandwidth", s.bandwidth);
        kv.push("sample_interval", s.sample_interval);
        kv.push("max_excess_delay", s.max_excess_delay);
        kv.push("sounding_amplitude", s.sounding_amplitude);
        kv.push("max_rx_power_dbm", s.max_rx_power_dbm);
        kv.push("threshold_dbm", s.threshold_dbm);
        kv.push("shadowing_sigma_db", s.shadowing_sigma_db);
        kv.push("n_beams", self.n_beams);
        kv.push("sidelobe_db", self.sidelobe_db);
        kv.push("traj_count", self.traj_count);
        kv.push("traj_len", self.traj_len);
        kv.push("group_size", self.group_size);
        kv.push("profiles", join(&self.profiles));
        kv.push("split", join(&self.split));
        kv.push("input_mode", self.input_mode);
        kv.push("t_obs_list", join(&self.t_obs_list));
        kv.push("models", join(&self.models));
        kv.push("d_model", self.d_model);
        kv.push("heads", self.heads);
        kv.push("d_ff", self.d_ff);
        kv.push("n_enc_layers", self.n_enc_layers);
        kv.push("n_dec_layers", self.n_dec_layers);
        kv.push("horizon", self.horizon);
        kv.push("position_scale", self.position_scale);
        kv.push("epochs_max", self.train.epochs_max);
        kv.push("batch_size", self.train.batch_size);
        kv.push("learning_rate", self.train.learning_rate);
        kv.push("dropout", self.train.dropout);
        kv.push("patience", self.train.patience);
        kv.push("max_train_windows", self.max_train_windows);
        kv
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    pub fn digest(&self) -> String {
        hex(&sha256(self.to_text()))
    }

    /// Defaults overridden by `kv`; unknown keys are rejected.
    pub fn from_kv(kv: &KvBlock) -> Result<Self> {
        kv.check_keys(KEYS)?;
        let mut c = Self::default();
        c.apply(kv)?;
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvBlock::parse(text)?)
    }

    fn apply(&mut self, kv: &KvBlock) -> Result<()> {
        macro_rules! set {
            ($key:literal => $($place:tt)+) => {
                if let Some(v) = kv.parse_value($key)? {
                    $($place)+ = v;
                }
            };
        }
        set!("seed" => self.seed);
        if let Some(n) = kv.parse_value::<usize>("grid")? {
            self.env.grid_nx = n;
            self.env.grid_ny = n;
        }
        set!("grid_nx" => self.env.grid_nx);
        set!("grid_ny" => self.env.grid_ny);
        set!("origin_x" => self.env.origin.x);
        set!("origin_y" => self.env.origin.y);
        set!("extent_x" => self.env.extent_x);
        set!("extent_y" => self.env.extent_y);
        set!("tx_x" => self.env.tx_position.x);
        set!("tx_y" => self.env.tx_position.y);
        set!("carrier_freq" => self.env.carrier_freq);
        set!("env_seed" => self.env.rng_seed);
        let obstacles: Vec<&str> = kv.get_all("obstacle").collect();
        if !obstacles.is_empty() {
            self.env.obstacles = obstacles
                .iter()
                .filter(|v| !v.trim().is_empty())
                .map(|v| {
                    let f: Vec<f64> = parse_list("obstacle", v)?;
                    if f.len() != 5 {
                        return Err(Error::Config(format!("obstacle needs x0,y0,x1,y1,loss_db, got {v:?}")));
                    }
                    Ok(Obstacle::new(Point::new(f[0], f[1]), Point::new(f[2], f[3]), f[4]))
                })
                .collect::<Result<_>>()?;
        }
        set!("bandwidth" => self.sounder.bandwidth);
        set!("sample_interval" => self.sounder.sample_interval);
        set!("max_excess_delay" => self.sounder.max_excess_delay);
        set!("sounding_amplitude" => self.sounder.sounding_amplitude);
        set!("max_rx_power_dbm" => self.sounder.max_rx_power_dbm);
        set!("threshold_dbm" => self.sounder.threshold_dbm);
        set!("shadowing_sigma_db" => self.sounder.shadowing_sigma_db);
        set!("n_beams" => self.n_beams);
        set!("sidelobe_db" => self.sidelobe_db);
        set!("traj_count" => self.traj_count);
        set!("traj_len" => self.traj_len);
        set!("group_size" => self.group_size);
        if let Some(v) = kv.get("profiles") {
            self.profiles = parse_list("profiles", v)?;
        }
        if let Some(v) = kv.get("split") {
            let s: Vec<f64> = parse_list("split", v)?;
            self.split = s
                .try_into()
                .map_err(|_| Error::Config("split needs three ratios".into()))?;
        }
        set!("input_mode" => self.input_mode);
        if let Some(v) = kv.get("t_obs_list") {
            self.t_obs_list = parse_list("t_obs_list", v)?;
        }
        if let Some(v) = kv.get("models") {
            self.models = parse_list("models", v)?;
        }
        set!("d_model" => self.d_model);
        set!("heads" => self.heads);
        set!("d_ff" => self.d_ff);
        set!("n_enc_layers" => self.n_enc_layers);
        set!("n_dec_layers" => self.n_dec_layers);
        set!("horizon" => self.horizon);
        set!("position_scale" => self.position_scale);
        set!("epochs_max" => self.train.epochs_max);
        set!("batch_size" => self.train.batch_size);
        set!("learning_rate" => self.train.learning_rate);
        set!("dropout" => self.train.dropout);
        set!("patience" => self.train.patience);
        set!("max_train_windows" => self.max_train_windows);
        Ok(())
    }
}
