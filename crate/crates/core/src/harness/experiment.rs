//! Data preparation, per-cell training/evaluation and the sequence-length
//! sweep.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::config::{ExperimentConfig, ModelKind};
use super::metrics::{check_split_hygiene, persistence_baseline, summarize};
use super::report::{MetricsReport, MetricsRow, RawError, RawErrors};
use super::train::{prediction_errors, train, TrainConfig, TrainReport};
use crate::baselines::{RecurrentConfig, RecurrentKind, RecurrentModel};
use crate::channel::{ChannelModel, FingerprintSimulator, FingerprintSource};
use crate::error::{Error, Result};
use crate::estimator::{Estimator, IoSpec};
use crate::kv::KvBlock;
use crate::seed::{self, Domain};
use crate::tensor::Checkpoint;
use crate::trajectory::{
    generate_set, make_sequences, split_groups, InputMode, KinematicProfile, MotionKind, SequenceSample, Split,
    Trajectory,
};
use crate::transformer::{ModelConfig, TransformerModel};

pub struct ProfileData {
    pub kind: MotionKind,
    pub trajectories: Vec<Trajectory>,
    pub split: Split,
}

pub struct Windows {
    pub train: Vec<SequenceSample>,
    pub val: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
}

/// Everything a sweep cell needs: configuration, fingerprint simulator
/// (fingerprint mode only) and split trajectories per profile.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub simulator: Option<FingerprintSimulator>,
    pub data: Vec<ProfileData>,
}

pub struct CellOutcome {
    pub row: MetricsRow,
    pub errors: Vec<f64>,
    pub model: Option<Box<dyn Estimator>>,
    pub train_report: Option<TrainReport>,
}

pub fn channel_model(config: &ExperimentConfig) -> Result<ChannelModel> {
    ChannelModel::new(config.env.clone(), config.sounder.clone(), config.codebook()?)
}

/// Trajectories of one profile as configured.
pub fn generate_profile(config: &ExperimentConfig, kind: MotionKind) -> Result<Vec<Trajectory>> {
    generate_set(
        &config.env,
        &KinematicProfile::for_kind(kind),
        config.traj_count,
        config.traj_len,
        config.group_size,
        config.seed,
    )
}

fn kind_tag(k: MotionKind) -> u64 {
    k as u64
}

fn model_tag(m: ModelKind) -> u64 {
    m as u64
}

impl Experiment {
    /// Generates trajectories for every configured profile.
    pub fn build(config: ExperimentConfig) -> Result<Self> {
        let trajs = config
            .profiles
            .iter()
            .map(|&k| generate_profile(&config, k))
            .collect::<Result<Vec<_>>>()?
            .concat();
        Self::from_trajectories(config, trajs)
    }

    /// Uses existing trajectories (e.g. read back from CSV).
    pub fn from_trajectories(config: ExperimentConfig, trajs: Vec<Trajectory>) -> Result<Self> {
        config.validate()?;
        let simulator = match config.input_mode {
            InputMode::Fingerprint => Some(FingerprintSimulator::new(channel_model(&config)?)?),
            InputMode::Position => None,
        };
        let mut data = Vec::new();
        for &kind in &config.profiles {
            let trajectories: Vec<Trajectory> = trajs.iter().filter(|t| t.kind == kind).cloned().collect();
            if trajectories.is_empty() {
                return Err(Error::Config(format!("no {kind} trajectories")));
            }
            let split = split_groups(
                &trajectories,
                config.split,
                seed::derive(config.seed, Domain::Split, &[kind_tag(kind)]),
            )?;
            data.push(ProfileData {
                kind,
                trajectories,
                split,
            });
        }
        Ok(Self {
            config,
            simulator,
            data,
        })
    }

    pub fn profile(&self, kind: MotionKind) -> Result<&ProfileData> {
        self.data
            .iter()
            .find(|d| d.kind == kind)
            .ok_or_else(|| Error::Config(format!("profile {kind} not configured")))
    }

    pub fn io_spec(&self) -> IoSpec {
        let c = &self.config;
        match c.input_mode {
            InputMode::Position => IoSpec {
                coord_scale: c.position_scale,
                ..IoSpec::position()
            },
            InputMode::Fingerprint => IoSpec::fingerprint(
                c.fingerprint_len(),
                c.env.center(),
                c.env.extent_x.max(c.env.extent_y) / 2.0,
            ),
        }
    }

    fn sequences(&self, trajs: &[Trajectory], t_obs: usize) -> Result<Vec<SequenceSample>> {
        let source = self
            .simulator
            .as_ref()
            .map(|s| (&self.config.env, s as &dyn FingerprintSource));
        Ok(make_sequences(trajs, t_obs, self.config.input_mode, source)?.samples)
    }

    /// Stride-1 windows for each split; training windows are capped at
    /// `max_train_windows` by a seeded subsample.
    pub fn windows(&self, kind: MotionKind, t_obs: usize) -> Result<Windows> {
        let d = self.profile(kind)?;
        let mut train = self.sequences(&d.split.train, t_obs)?;
        let cap = self.config.max_train_windows;
        if cap > 0 && train.len() > cap {
            train.shuffle(&mut seed::rng(self.config.seed, Domain::Split, &[kind_tag(kind), t_obs as u64, 1]));
            train.truncate(cap);
        }
        Ok(Windows {
            train,
            val: self.sequences(&d.split.val, t_obs)?,
            test: self.sequences(&d.split.test, t_obs)?,
        })
    }

    pub fn transformer_config(&self, t_obs: usize) -> ModelConfig {
        let c = &self.config;
        ModelConfig {
            d_model: c.d_model,
            h: c.heads,
            d_ff: c.d_ff,
            n_enc_layers: c.n_enc_layers,
            n_dec_layers: c.n_dec_layers,
            dropout: c.train.dropout,
            t_obs,
            io: self.io_spec(),
            horizon: c.horizon,
            ..ModelConfig::default()
        }
    }

    pub fn recurrent_config(&self, kind: RecurrentKind, t_obs: usize) -> RecurrentConfig {
        let target = self.transformer_config(t_obs).param_count();
        RecurrentConfig::matched(kind, self.io_spec(), t_obs, target)
    }

    /// Freshly initialized estimator for a cell; `None` for persistence.
    pub fn new_model(&self, profile: MotionKind, model: ModelKind, t_obs: usize) -> Result<Option<Box<dyn Estimator>>> {
        let init = seed::derive(
            self.config.seed,
            Domain::Init,
            &[kind_tag(profile), model_tag(model), t_obs as u64],
        );
        Ok(match model {
            ModelKind::Transformer => Some(Box::new(TransformerModel::new(self.transformer_config(t_obs), init)?)),
            ModelKind::Lstm => Some(Box::new(RecurrentModel::new(
                self.recurrent_config(RecurrentKind::Lstm, t_obs),
                init,
            )?)),
            ModelKind::Rnn => Some(Box::new(RecurrentModel::new(
                self.recurrent_config(RecurrentKind::Rnn, t_obs),
                init,
            )?)),
            ModelKind::Persistence => None,
        })
    }

    pub fn train_config(&self, profile: MotionKind, model: ModelKind, t_obs: usize) -> TrainConfig {
        TrainConfig {
            seed: seed::derive(
                self.config.seed,
                Domain::Cell,
                &[kind_tag(profile), model_tag(model), t_obs as u64],
            ),
            ..self.config.train.clone()
        }
    }

    /// Trains one cell's model (if any).
    pub fn train_cell(
        &self,
        profile: MotionKind,
        model: ModelKind,
        t_obs: usize,
        w: &Windows,
    ) -> Result<Option<(Box<dyn Estimator>, TrainReport)>> {
        let Some(mut m) = self.new_model(profile, model, t_obs)? else {
            return Ok(None);
        };
        let report = train(m.as_mut(), &w.train, &w.val, &self.train_config(profile, model, t_obs))?;
        Ok(Some((m, report)))
    }

    /// Trains (where applicable) and evaluates one (profile, model, T_obs)
    /// cell.
    pub fn run_cell(&self, profile: MotionKind, model: ModelKind, t_obs: usize) -> Result<CellOutcome> {
        let w = self.windows(profile, t_obs)?;
        let trained = self.train_cell(profile, model, t_obs, &w)?;
        let train_groups: BTreeSet<usize> = w.train.iter().map(|s| s.group_id).collect();
        let (model_box, report) = match trained {
            Some((m, r)) => (Some(m), Some(r)),
            None => (None, None),
        };
        let (errors, predict_s) = evaluate(model_box.as_deref(), &w.test, &train_groups)?;
        let row = metrics_row(model, profile, t_obs, &errors, model_box.as_deref(), report.as_ref(), predict_s)?;
        Ok(CellOutcome {
            row,
            errors,
            model: model_box,
            train_report: report,
        })
    }

    /// Rebuilds a trained estimator from a checkpoint, refusing checkpoints
    /// written for a different model kind or configuration.
    pub fn load_model(&self, ck: &Checkpoint, profile: MotionKind, model: ModelKind, t_obs: usize) -> Result<Box<dyn Estimator>> {
        let fresh = self
            .new_model(profile, model, t_obs)?
            .ok_or_else(|| Error::Config("persistence has no checkpoint".into()))?;
        ck.expect(fresh.kind(), &fresh.config_text())?;
        Ok(match model {
            ModelKind::Transformer => Box::new(TransformerModel::from_params(
                self.transformer_config(t_obs),
                &ck.params,
            )?),
            ModelKind::Lstm => Box::new(RecurrentModel::from_params(
                self.recurrent_config(RecurrentKind::Lstm, t_obs),
                &ck.params,
            )?),
            ModelKind::Rnn => Box::new(RecurrentModel::from_params(
                self.recurrent_config(RecurrentKind::Rnn, t_obs),
                &ck.params,
            )?),
            ModelKind::Persistence => unreachable!(),
        })
    }
}

/// Checkpoint of a trained estimator; `meta` records the training groups.
pub fn checkpoint_of(model: &dyn Estimator, train_groups: &BTreeSet<usize>, extra: &KvBlock) -> Checkpoint {
    let mut meta = extra.clone();
    meta.push(
        "train_groups",
        train_groups.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(","),
    );
    Checkpoint {
        kind: model.kind().to_string(),
        config: model.config_text(),
        meta: meta.to_text(),
        params: model.params().clone(),
    }
}

/// Training groups recorded in a checkpoint.
pub fn checkpoint_train_groups(ck: &Checkpoint) -> Result<BTreeSet<usize>> {
    let kv = KvBlock::parse(&ck.meta)?;
    match kv.get("train_groups") {
        Some(v) => Ok(crate::kv::parse_list::<usize>("train_groups", v)?.into_iter().collect()),
        None => Err(Error::Format("checkpoint does not record its training groups".into())),
    }
}

/// Per-sample errors of `model` (persistence when `None`) on `test`, plus
/// prediction wall-clock seconds.
pub fn evaluate(
    model: Option<&dyn Estimator>,
    test: &[SequenceSample],
    train_groups: &BTreeSet<usize>,
) -> Result<(Vec<f64>, f64)> {
    check_split_hygiene(test, train_groups)?;
    let clock = Instant::now();
    let errors = match model {
        Some(m) => prediction_errors(m, test, 256)?,
        None => test
            .iter()
            .map(|s| Ok(persistence_baseline(&s.observed)?.distance(s.target)))
            .collect::<Result<_>>()?,
    };
    Ok((errors, clock.elapsed().as_secs_f64()))
}

pub fn metrics_row(
    model: ModelKind,
    profile: MotionKind,
    t_obs: usize,
    errors: &[f64],
    est: Option<&dyn Estimator>,
    report: Option<&TrainReport>,
    predict_s: f64,
) -> Result<MetricsRow> {
    let (avg, p95) = summarize(errors)?;
    Ok(MetricsRow {
        model: model.to_string(),
        profile: profile.to_string(),
        t_obs,
        avg_error_m: avg,
        p95_error_m: p95,
        n_eval: errors.len(),
        param_count: est.map_or(0, |m| m.count_params()),
        train_s: report.map_or(0.0, |r| r.seconds),
        predict_s,
    })
}

/// One report row per (model, profile, T_obs), with the raw errors behind
/// each row.
pub fn sweep_sequence_lengths(exp: &Experiment) -> Result<(MetricsReport, RawErrors)> {
    let mut report = MetricsReport::default();
    let mut raw = RawErrors::default();
    for &profile in &exp.config.profiles {
        for &t_obs in &exp.config.t_obs_list {
            for &model in &exp.config.models {
                let out = exp.run_cell(profile, model, t_obs)?;
                push_cell(&mut report, &mut raw, out.row, &out.errors);
            }
        }
    }
    Ok((report, raw))
}

pub fn push_cell(report: &mut MetricsReport, raw: &mut RawErrors, row: MetricsRow, errors: &[f64]) {
    for (i, &e) in errors.iter().enumerate() {
        raw.rows.push(RawError {
            model: row.model.clone(),
            profile: row.profile.clone(),
            t_obs: row.t_obs,
            sample_id: i,
            error_m: e,
        });
    }
    report.rows.push(row);
}

