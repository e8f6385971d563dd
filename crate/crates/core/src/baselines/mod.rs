//! Vanilla RNN and LSTM next-position regressors.

use std::fmt;
use std::str::FromStr;

use crate::channel::Point;
use crate::error::{Error, Result};
use crate::estimator::{mse_meters, to_points, Estimator, IoSpec};
use crate::kv::KvBlock;
use crate::seed::{self, Domain, Rng};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::trajectory::SequenceSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecurrentKind {
    Rnn,
    Lstm,
}

impl RecurrentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecurrentKind::Rnn => "rnn",
            RecurrentKind::Lstm => "lstm",
        }
    }

    fn gates(self) -> usize {
        match self {
            RecurrentKind::Rnn => 1,
            RecurrentKind::Lstm => 4,
        }
    }
}

impl fmt::Display for RecurrentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecurrentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnn" => Ok(Self::Rnn),
            "lstm" => Ok(Self::Lstm),
            other => Err(Error::Config(format!("unknown recurrent kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentConfig {
    pub kind: RecurrentKind,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub t_obs: usize,
    pub io: IoSpec,
}

impl RecurrentConfig {
    pub const KEYS: [&'static str; 9] = [
        "kind",
        "hidden_dim",
        "n_layers",
        "t_obs",
        "input_mode",
        "input_dim",
        "coord_scale",
        "offset_x",
        "offset_y",
    ];

    pub fn new(kind: RecurrentKind, hidden_dim: usize, io: IoSpec, t_obs: usize) -> Self {
        Self {
            kind,
            hidden_dim,
            n_layers: 1,
            t_obs,
            io,
        }
    }

    /// Single-layer config whose parameter count is closest (in ratio) to
    /// `target`.
    pub fn matched(kind: RecurrentKind, io: IoSpec, t_obs: usize, target: usize) -> Self {
        let mut best = Self::new(kind, 1, io, t_obs);
        let mut best_gap = f64::INFINITY;
        for h in 1..=2048 {
            let c = Self::new(kind, h, io, t_obs);
            let gap = (c.param_count() as f64 / target as f64).ln().abs();
            if gap < best_gap {
                best_gap = gap;
                best = c;
            }
        }
        best
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.n_layers == 0 || self.t_obs == 0 {
            return Err(Error::Config("hidden_dim, n_layers and t_obs must be positive".into()));
        }
        self.io.validate()
    }

    /// Closed-form count: `g·h(h + d + 1)` per layer plus the `2h + 2` head,
    /// with `g` = 1 (rnn) or 4 (lstm).
    pub fn param_count(&self) -> usize {
        let h = self.hidden_dim;
        let g = self.kind.gates();
        (0..self.n_layers)
            .map(|l| {
                let d = if l == 0 { self.io.input_dim } else { h };
                g * h * (h + d + 1)
            })
            .sum::<usize>()
            + 2 * h
            + 2
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.push("kind", self.kind);
        kv.push("hidden_dim", self.hidden_dim);
        kv.push("n_layers", self.n_layers);
        kv.push("t_obs", self.t_obs);
        self.io.write_kv(&mut kv);
        kv
    }

    pub fn from_kv(kv: &KvBlock) -> Result<Self> {
        kv.check_keys(&Self::KEYS)?;
        let kind = kv
            .parse_value("kind")?
            .ok_or_else(|| Error::Config("recurrent config needs kind".into()))?;
        let mut c = Self::new(kind, 64, IoSpec::read_kv(kv)?, 7);
        if let Some(v) = kv.parse_value("hidden_dim")? {
            c.hidden_dim = v;
        }
        if let Some(v) = kv.parse_value("n_layers")? {
            c.n_layers = v;
        }
        if let Some(v) = kv.parse_value("t_obs")? {
            c.t_obs = v;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Weights of one recurrent layer. For the LSTM the columns hold the gates
/// in order i, f, g, o.
#[derive(Clone, Copy)]
pub struct CellWeights<'g> {
    pub w_x: Var<'g>,
    pub w_h: Var<'g>,
    pub b: Var<'g>,
}

/// `h_t = tanh(x_t·W_x + h_prev·W_h + b)`.
pub fn rnn_step<'g>(x: Var<'g>, h_prev: Var<'g>, w: CellWeights<'g>) -> Result<Var<'g>> {
    Ok(x.matmul(w.w_x)?
        .add(h_prev.matmul(w.w_h)?)?
        .add_broadcast(w.b)?
        .tanh())
}

/// One LSTM step; returns `(h_t, c_t)`.
pub fn lstm_step<'g>(x: Var<'g>, h_prev: Var<'g>, c_prev: Var<'g>, w: CellWeights<'g>) -> Result<(Var<'g>, Var<'g>)> {
    let h = *h_prev.shape().last().unwrap_or(&0);
    let z = x.matmul(w.w_x)?.add(h_prev.matmul(w.w_h)?)?.add_broadcast(w.b)?;
    let i = z.slice_last(0, h)?.sigmoid();
    let f = z.slice_last(h, h)?.sigmoid();
    let g = z.slice_last(2 * h, h)?.tanh();
    let o = z.slice_last(3 * h, h)?.sigmoid();
    let c = f.mul(c_prev)?.add(i.mul(g)?)?;
    let h_t = o.mul(c.tanh())?;
    Ok((h_t, c))
}

#[derive(Debug, Clone, Copy)]
struct LayerIds {
    w_x: ParamId,
    w_h: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
pub struct RecurrentModel {
    config: RecurrentConfig,
    params: ParamStore,
    layers: Vec<LayerIds>,
    head_w: ParamId,
    head_b: ParamId,
}

impl RecurrentModel {
    pub fn new(config: RecurrentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed, Domain::Init, &[]);
        let mut params = ParamStore::new();
        let h = config.hidden_dim;
        let width = config.kind.gates() * h;
        let mut layers = Vec::new();
        for l in 0..config.n_layers {
            let d = if l == 0 { config.io.input_dim } else { h };
            let w_x = Tensor::uniform(&[d, width], (1.0 / d as f64).sqrt(), &mut rng);
            let w_h = Tensor::uniform(&[h, width], (1.0 / h as f64).sqrt(), &mut rng);
            layers.push(LayerIds {
                w_x: params.add(format!("layer.{l}.w_x"), w_x)?,
                w_h: params.add(format!("layer.{l}.w_h"), w_h)?,
                b: params.add(format!("layer.{l}.b"), Tensor::zeros(&[width]))?,
            });
        }
        let head_w = params.add("head.w", Tensor::uniform(&[h, 2], (1.0 / h as f64).sqrt(), &mut rng))?;
        let head_b = params.add("head.b", Tensor::zeros(&[2]))?;
        Ok(Self {
            config,
            params,
            layers,
            head_w,
            head_b,
        })
    }

    pub fn from_params(config: RecurrentConfig, params: &ParamStore) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        m.params.load_from(params)?;
        Ok(m)
    }

    pub fn config(&self) -> &RecurrentConfig {
        &self.config
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.id_of(name)
    }

    /// Final hidden state `[B, h]` after unrolling over `x: [B, T, d]`.
    fn unroll<'g>(&self, g: &'g Graph, x: Var<'g>) -> Result<Var<'g>> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.config.io.input_dim || s[1] != self.config.t_obs {
            return Err(Error::shape(
                "recurrent input",
                &s,
                &[0, self.config.t_obs, self.config.io.input_dim],
            ));
        }
        let (b, t) = (s[0], s[1]);
        let h = self.config.hidden_dim;
        let mut seq: Vec<Var<'g>> = (0..t)
            .map(|k| x.slice_rows(k, 1)?.reshape(&[b, s[2]]))
            .collect::<Result<_>>()?;
        for l in &self.layers {
            let w = CellWeights {
                w_x: g.param(&self.params, l.w_x),
                w_h: g.param(&self.params, l.w_h),
                b: g.param(&self.params, l.b),
            };
            let mut hs = g.constant(Tensor::zeros(&[b, h]));
            let mut cs = g.constant(Tensor::zeros(&[b, h]));
            let mut out = Vec::with_capacity(t);
            for xt in &seq {
                match self.config.kind {
                    RecurrentKind::Rnn => hs = rnn_step(*xt, hs, w)?,
                    RecurrentKind::Lstm => (hs, cs) = lstm_step(*xt, hs, cs, w)?,
                }
                out.push(hs);
            }
            seq = out;
        }
        Ok(*seq.last().expect("t_obs > 0"))
    }

    fn head<'g>(&self, g: &'g Graph, h: Var<'g>) -> Result<Var<'g>> {
        h.matmul(g.param(&self.params, self.head_w))?
            .add_broadcast(g.param(&self.params, self.head_b))
    }

    /// Normalized predictions `[B, 2]` for inputs `[B, T, d]`.
    pub fn predict_normalized(&self, inputs: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let h = self.unroll(&g, g.constant(inputs.clone()))?;
        Ok((*self.head(&g, h)?.value()).clone())
    }

    pub fn recurrent_predict(&self, sample: &SequenceSample) -> Result<Point> {
        Ok(self.predict(&[sample])?[0])
    }

    pub fn loss_on<'g>(&self, g: &'g Graph, inputs: &Tensor, targets: &Tensor) -> Result<Var<'g>> {
        let h = self.unroll(g, g.constant(inputs.clone()))?;
        let b = inputs.shape()[0];
        let pred = self.head(g, h)?.reshape(&[b, 1, 2])?;
        mse_meters(pred, g.constant(targets.clone()), self.config.io.coord_scale)
    }
}

impl Estimator for RecurrentModel {
    fn kind(&self) -> &'static str {
        self.config.kind.as_str()
    }

    fn io(&self) -> &IoSpec {
        &self.config.io
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn config_text(&self) -> String {
        self.config.to_kv().to_text()
    }

    fn loss<'g>(&self, g: &'g Graph, batch: &[&SequenceSample], _rng: Option<&mut Rng>) -> Result<Var<'g>> {
        let x = self.config.io.inputs(batch)?;
        let y = self.config.io.targets(batch, 1)?;
        self.loss_on(g, &x, &y)
    }

    fn predict(&self, batch: &[&SequenceSample]) -> Result<Vec<Point>> {
        let x = self.config.io.inputs(batch)?;
        let out = self.predict_normalized(&x)?;
        to_points(&self.config.io, batch, &out)
    }
}
