use std::fmt;
use std::str::FromStr;

use crate::channel::Point;
use crate::error::{Error, Result};
use crate::estimator::IoSpec;
use crate::kv::KvBlock;

/// Which width divides the positional-encoding exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeDenominator {
    DModel,
    TObs,
}

impl fmt::Display for PeDenominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeDenominator::DModel => "d_model",
            PeDenominator::TObs => "t_obs",
        })
    }
}

impl FromStr for PeDenominator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d_model" => Ok(Self::DModel),
            "t_obs" => Ok(Self::TObs),
            other => Err(Error::Config(format!("unknown pe_denominator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub h: usize,
    pub d_ff: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub dropout: f64,
    pub t_obs: usize,
    pub io: IoSpec,
    /// Encoder and decoder share one input embedding (position mode only).
    pub share_embeddings: bool,
    pub use_pe: bool,
    pub pe_denominator: PeDenominator,
    /// Future steps supervised per sample during training.
    pub horizon: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            h: 4,
            d_ff: 256,
            n_enc_layers: 2,
            n_dec_layers: 2,
            dropout: 0.01,
            t_obs: 7,
            io: IoSpec::fingerprint(8 * 64, Point::new(0.0, 0.0), 100.0),
            share_embeddings: true,
            use_pe: true,
            pe_denominator: PeDenominator::DModel,
            horizon: 1,
        }
    }
}

impl ModelConfig {
    pub const KEYS: [&'static str; 16] = [
        "d_model",
        "h",
        "d_ff",
        "n_enc_layers",
        "n_dec_layers",
        "dropout",
        "t_obs",
        "share_embeddings",
        "use_pe",
        "pe_denominator",
        "horizon",
        "input_mode",
        "input_dim",
        "coord_scale",
        "offset_x",
        "offset_y",
    ];

    pub fn d_k(&self) -> usize {
        self.d_model / self.h
    }

    /// Whether encoder and decoder embeddings are one tensor.
    pub fn shares_embedding(&self) -> bool {
        self.share_embeddings && self.io.input_dim == 2
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("h", self.h),
            ("d_ff", self.d_ff),
            ("n_enc_layers", self.n_enc_layers),
            ("n_dec_layers", self.n_dec_layers),
            ("t_obs", self.t_obs),
            ("horizon", self.horizon),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.h) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by h {}",
                self.d_model, self.h
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        self.io.validate()
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let attn = 4 * d * d;
        let norm = 2 * d;
        let ff = d * self.d_ff + self.d_ff + self.d_ff * d + d;
        let enc_embed = self.io.input_dim * d + d;
        let dec_embed = if self.shares_embedding() { 0 } else { 2 * d + d };
        enc_embed
            + dec_embed
            + d
            + self.n_enc_layers * (attn + 2 * norm + ff)
            + self.n_dec_layers * (2 * attn + 3 * norm + ff)
            + 2 * d
            + 2
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.push("d_model", self.d_model);
        kv.push("h", self.h);
        kv.push("d_ff", self.d_ff);
        kv.push("n_enc_layers", self.n_enc_layers);
        kv.push("n_dec_layers", self.n_dec_layers);
        kv.push("dropout", self.dropout);
        kv.push("t_obs", self.t_obs);
        kv.push("share_embeddings", self.share_embeddings);
        kv.push("use_pe", self.use_pe);
        kv.push("pe_denominator", self.pe_denominator);
        kv.push("horizon", self.horizon);
        self.io.write_kv(&mut kv);
        kv
    }

    pub fn from_kv(kv: &KvBlock) -> Result<Self> {
        kv.check_keys(&Self::KEYS)?;
        let mut c = Self {
            io: IoSpec::read_kv(kv)?,
            ..Self::default()
        };
        macro_rules! take {
            ($($f:ident),*) => {$(
                if let Some(v) = kv.parse_value(stringify!($f))? {
                    c.$f = v;
                }
            )*};
        }
        take!(d_model, h, d_ff, n_enc_layers, n_dec_layers, dropout, t_obs, share_embeddings, use_pe, pe_denominator, horizon);
        c.validate()?;
        Ok(c)
    }
}
