use std::cell::RefCell;
use std::sync::Arc;

use super::attention::{feedforward, multi_head, AttnWeights, Mask};
use super::config::{ModelConfig, PeDenominator};
use super::pe::PositionalEncodingTable;
use crate::channel::Point;
use crate::error::{Error, Result};
use crate::estimator::{mse_meters, to_points, Estimator, IoSpec};
use crate::seed::{self, Domain, Rng};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::trajectory::SequenceSample;

#[derive(Debug, Clone, Copy)]
struct AttnIds {
    q: ParamId,
    k: ParamId,
    v: ParamId,
    o: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct NormIds {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct FfIds {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct EncIds {
    attn: AttnIds,
    norm1: NormIds,
    ff: FfIds,
    norm2: NormIds,
}

#[derive(Debug, Clone, Copy)]
struct DecIds {
    self_attn: AttnIds,
    norm1: NormIds,
    cross: AttnIds,
    norm2: NormIds,
    ff: FfIds,
    norm3: NormIds,
}

#[derive(Debug, Clone)]
struct Ids {
    embed_w: ParamId,
    embed_b: ParamId,
    dec_w: ParamId,
    dec_b: ParamId,
    start: ParamId,
    enc: Vec<EncIds>,
    dec: Vec<DecIds>,
    head_w: ParamId,
    head_b: ParamId,
}

/// Encoder-decoder transformer regressing the next 2D position.
#[derive(Debug, Clone)]
pub struct TransformerModel {
    config: ModelConfig,
    params: ParamStore,
    ids: Ids,
}

struct Builder<'a> {
    store: ParamStore,
    rng: &'a mut Rng,
}

impl Builder<'_> {
    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        let bound = (1.0 / rows as f64).sqrt();
        let t = Tensor::uniform(&[rows, cols], bound, self.rng);
        self.store.add(name, t)
    }

    fn vector(&mut self, name: &str, n: usize, v: f64) -> Result<ParamId> {
        self.store.add(name, Tensor::full(&[n], v))
    }

    fn attn(&mut self, p: &str, d: usize) -> Result<AttnIds> {
        Ok(AttnIds {
            q: self.matrix(&format!("{p}.w_q"), d, d)?,
            k: self.matrix(&format!("{p}.w_k"), d, d)?,
            v: self.matrix(&format!("{p}.w_v"), d, d)?,
            o: self.matrix(&format!("{p}.w_o"), d, d)?,
        })
    }

    fn norm(&mut self, p: &str, d: usize) -> Result<NormIds> {
        Ok(NormIds {
            gain: self.vector(&format!("{p}.gain"), d, 1.0)?,
            bias: self.vector(&format!("{p}.bias"), d, 0.0)?,
        })
    }

    fn ff(&mut self, p: &str, d: usize, d_ff: usize) -> Result<FfIds> {
        Ok(FfIds {
            w1: self.matrix(&format!("{p}.w1"), d, d_ff)?,
            b1: self.vector(&format!("{p}.b1"), d_ff, 0.0)?,
            w2: self.matrix(&format!("{p}.w2"), d_ff, d)?,
            b2: self.vector(&format!("{p}.b2"), d, 0.0)?,
        })
    }
}

/// One forward pass: the graph, an optional dropout stream and an optional
/// sink for attention maps.
struct Pass<'g, 'r> {
    g: &'g Graph,
    rng: Option<RefCell<&'r mut Rng>>,
    maps: Option<RefCell<Vec<Arc<Tensor>>>>,
}

impl<'g> Pass<'g, '_> {
    fn dropout(&self, v: Var<'g>, p: f64) -> Result<Var<'g>> {
        match &self.rng {
            Some(r) => v.dropout(p, Some(&mut **r.borrow_mut())),
            None => Ok(v),
        }
    }
}

impl TransformerModel {
    /// Fresh model with weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed, Domain::Init, &[]);
        let d = config.d_model;
        let mut b = Builder {
            store: ParamStore::new(),
            rng: &mut rng,
        };
        let embed_w = b.matrix("embed.w", config.io.input_dim, d)?;
        let embed_b = b.vector("embed.b", d, 0.0)?;
        let (dec_w, dec_b) = if config.shares_embedding() {
            (embed_w, embed_b)
        } else {
            (b.matrix("dec_embed.w", 2, d)?, b.vector("dec_embed.b", d, 0.0)?)
        };
        let start = b.matrix("start", 1, d)?;
        let enc = (0..config.n_enc_layers)
            .map(|i| {
                let p = format!("enc.{i}");
                Ok(EncIds {
                    attn: b.attn(&format!("{p}.attn"), d)?,
                    norm1: b.norm(&format!("{p}.norm1"), d)?,
                    ff: b.ff(&format!("{p}.ff"), d, config.d_ff)?,
                    norm2: b.norm(&format!("{p}.norm2"), d)?,
                })
            })
            .collect::<Result<_>>()?;
        let dec = (0..config.n_dec_layers)
            .map(|i| {
                let p = format!("dec.{i}");
                Ok(DecIds {
                    self_attn: b.attn(&format!("{p}.self_attn"), d)?,
                    norm1: b.norm(&format!("{p}.norm1"), d)?,
                    cross: b.attn(&format!("{p}.cross_attn"), d)?,
                    norm2: b.norm(&format!("{p}.norm2"), d)?,
                    ff: b.ff(&format!("{p}.ff"), d, config.d_ff)?,
                    norm3: b.norm(&format!("{p}.norm3"), d)?,
                })
            })
            .collect::<Result<_>>()?;
        let head_w = b.matrix("head.w", d, 2)?;
        let head_b = b.vector("head.b", 2, 0.0)?;
        Ok(Self {
            config,
            params: b.store,
            ids: Ids {
                embed_w,
                embed_b,
                dec_w,
                dec_b,
                start,
                enc,
                dec,
                head_w,
                head_b,
            },
        })
    }

    /// Model with the given configuration and stored parameters.
    pub fn from_params(config: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        m.params.load_from(params)?;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.id_of(name)
    }

    /// Encoder input embedding, `input_dim × d_model`.
    pub fn input_embedding(&self) -> ParamId {
        self.ids.embed_w
    }

    /// Decoder ("output") embedding, `2 × d_model`; the same tensor as the
    /// input embedding when embeddings are shared.
    pub fn output_embedding(&self) -> ParamId {
        self.ids.dec_w
    }

    fn pe(&self, len: usize) -> Tensor {
        let denom = match self.config.pe_denominator {
            PeDenominator::DModel => self.config.d_model,
            PeDenominator::TObs => self.config.t_obs,
        };
        PositionalEncodingTable::new(len, self.config.d_model, denom).table
    }

    fn attn_vars<'g>(&self, g: &'g Graph, a: AttnIds) -> AttnWeights<'g> {
        let p = &self.params;
        AttnWeights {
            q: g.param(p, a.q),
            k: g.param(p, a.k),
            v: g.param(p, a.v),
            o: g.param(p, a.o),
        }
    }

    fn add_norm<'g>(&self, pass: &Pass<'g, '_>, x: Var<'g>, sub: Var<'g>, n: NormIds) -> Result<Var<'g>> {
        let g = pass.g;
        let sub = pass.dropout(sub, self.config.dropout)?;
        x.add(sub)?
            .layer_norm(g.param(&self.params, n.gain), g.param(&self.params, n.bias))
    }

    fn ff<'g>(&self, g: &'g Graph, x: Var<'g>, f: FfIds) -> Result<Var<'g>> {
        let p = &self.params;
        feedforward(x, g.param(p, f.w1), g.param(p, f.b1), g.param(p, f.w2), g.param(p, f.b2))
    }

    fn with_maps<R>(pass: &Pass<'_, '_>, f: impl FnOnce(Option<&mut Vec<Arc<Tensor>>>) -> R) -> R {
        match &pass.maps {
            Some(m) => f(Some(&mut m.borrow_mut())),
            None => f(None),
        }
    }

    fn encode_var<'g>(&self, pass: &Pass<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        let g = pass.g;
        let s = x.shape();
        if s.len() != 3 || s[2] != self.config.io.input_dim {
            return Err(Error::shape("encode input", &s, &[0, self.config.t_obs, self.config.io.input_dim]));
        }
        if s[1] == 0 {
            return Err(Error::Domain("cannot encode an empty sequence".into()));
        }
        if s[1] != self.config.t_obs {
            return Err(Error::shape("encode input", &s, &[s[0], self.config.t_obs, s[2]]));
        }
        let mut e = x
            .matmul(g.param(&self.params, self.ids.embed_w))?
            .add_broadcast(g.param(&self.params, self.ids.embed_b))?;
        if self.config.use_pe {
            e = e.add_broadcast(g.constant(self.pe(s[1])))?;
        }
        e = pass.dropout(e, self.config.dropout)?;
        for l in &self.ids.enc {
            let w = self.attn_vars(g, l.attn);
            let a = Self::with_maps(pass, |m| multi_head(e, e, w, self.config.h, None, m))?;
            e = self.add_norm(pass, e, a, l.norm1)?;
            let f = self.ff(g, e, l.ff)?;
            e = self.add_norm(pass, e, f, l.norm2)?;
        }
        Ok(e)
    }

    /// Decoder states `[B, S+1, d_model]` for the start token followed by
    /// the `S` normalized positions in `dec_in` (`[B, S, 2]`).
    fn decode_var<'g>(&self, pass: &Pass<'g, '_>, z: Var<'g>, dec_in: Option<Var<'g>>) -> Result<Var<'g>> {
        let g = pass.g;
        let d = self.config.d_model;
        let b = z.shape()[0];
        let start = g
            .param(&self.params, self.ids.start)
            .expand(b)?
            .reshape(&[b, 1, d])?;
        let mut e = match dec_in {
            Some(u) if u.shape()[1] > 0 => {
                let us = u.shape();
                if us.len() != 3 || us[0] != b || us[2] != 2 {
                    return Err(Error::shape("decoder input", &us, &[b, 0, 2]));
                }
                let emb = u
                    .matmul(g.param(&self.params, self.ids.dec_w))?
                    .add_broadcast(g.param(&self.params, self.ids.dec_b))?;
                Var::concat_rows(&[start, emb])?
            }
            _ => start,
        };
        let n = e.shape()[1];
        if self.config.use_pe {
            e = e.add_broadcast(g.constant(self.pe(n)))?;
        }
        e = pass.dropout(e, self.config.dropout)?;
        let causal = Mask::causal(n);
        for l in &self.ids.dec {
            let w = self.attn_vars(g, l.self_attn);
            let a = Self::with_maps(pass, |m| multi_head(e, e, w, self.config.h, Some(&causal), m))?;
            e = self.add_norm(pass, e, a, l.norm1)?;
            let w = self.attn_vars(g, l.cross);
            let c = Self::with_maps(pass, |m| multi_head(e, z, w, self.config.h, None, m))?;
            e = self.add_norm(pass, e, c, l.norm2)?;
            let f = self.ff(g, e, l.ff)?;
            e = self.add_norm(pass, e, f, l.norm3)?;
        }
        Ok(e)
    }

    fn head<'g>(&self, g: &'g Graph, states: Var<'g>) -> Result<Var<'g>> {
        states
            .matmul(g.param(&self.params, self.ids.head_w))?
            .add_broadcast(g.param(&self.params, self.ids.head_b))
    }

    fn eval_pass(g: &Graph) -> Pass<'_, '_> {
        Pass {
            g,
            rng: None,
            maps: None,
        }
    }

    /// Latent `Z` (`[B, T_obs, d_model]`) for inputs `[B, T_obs, input_dim]`.
    pub fn encode(&self, inputs: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let pass = Self::eval_pass(&g);
        let z = self.encode_var(&pass, g.constant(inputs.clone()))?;
        Ok((*z.value()).clone())
    }

    /// Teacher-forced decoder states `[B, S+1, d_model]`.
    pub fn decode(&self, z: &Tensor, dec_in: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let pass = Self::eval_pass(&g);
        let s = self.decode_var(&pass, g.constant(z.clone()), Some(g.constant(dec_in.clone())))?;
        Ok((*s.value()).clone())
    }

    /// Same states as [`Self::decode`], computed one step at a time from
    /// growing prefixes of `dec_in`.
    pub fn decode_incremental(&self, z: &Tensor, dec_in: &Tensor) -> Result<Tensor> {
        let (b, steps) = (dec_in.shape()[0], dec_in.shape()[1]);
        let d = self.config.d_model;
        let mut rows = vec![Vec::new(); b];
        for t in 0..=steps {
            let g = Graph::new();
            let pass = Self::eval_pass(&g);
            let prefix = g.constant(dec_in.clone()).slice_rows(0, t)?;
            let s = self.decode_var(&pass, g.constant(z.clone()), Some(prefix))?;
            let last = s.slice_rows(t, 1)?.value();
            for (i, r) in rows.iter_mut().enumerate() {
                r.extend_from_slice(&last.data()[i * d..(i + 1) * d]);
            }
        }
        Tensor::new(&[b, steps + 1, d], rows.concat())
    }

    /// Normalized next-step predictions `[B, 2]` for encoded inputs.
    pub fn predict_normalized(&self, inputs: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let pass = Self::eval_pass(&g);
        let z = self.encode_var(&pass, g.constant(inputs.clone()))?;
        let s = self.decode_var(&pass, z, None)?;
        let b = s.shape()[0];
        let out = self.head(&g, s)?.reshape(&[b, 2])?.value();
        Ok((*out).clone())
    }

    pub fn predict_next(&self, sample: &SequenceSample) -> Result<Point> {
        Ok(self.predict(&[sample])?[0])
    }

    /// Autoregressive prediction of `n_steps` positions, each fed back as
    /// the next decoder input.
    pub fn rollout(&self, sample: &SequenceSample, n_steps: usize) -> Result<Vec<Point>> {
        if n_steps == 0 {
            return Err(Error::Domain("rollout needs at least one step".into()));
        }
        let io = &self.config.io;
        let x = io.inputs(&[sample])?;
        let g = Graph::new();
        let pass = Self::eval_pass(&g);
        let z = g.constant((*self.encode_var(&pass, g.constant(x))?.value()).clone());
        let mut fed: Vec<f64> = Vec::new();
        let mut out = Vec::with_capacity(n_steps);
        for t in 0..n_steps {
            let g2 = Graph::new();
            let pass = Self::eval_pass(&g2);
            let prefix = g2.constant(Tensor::new(&[1, t, 2], fed.clone())?);
            let zc = g2.constant((*z.value()).clone());
            let s = self.decode_var(&pass, zc, Some(prefix))?;
            let u = self.head(&g2, s.slice_rows(t, 1)?)?.value();
            if !u.all_finite() {
                return Err(Error::Model("rollout produced a non-finite position".into()));
            }
            let u = [u.data()[0], u.data()[1]];
            fed.extend(u);
            out.push(io.denormalize(sample, u));
        }
        Ok(out)
    }

    /// Attention weight maps of every head of every attention block, in
    /// evaluation order, for inputs `[B, T, input_dim]` and decoder inputs
    /// `[B, S, 2]`.
    pub fn attention_maps(&self, inputs: &Tensor, dec_in: &Tensor) -> Result<Vec<Arc<Tensor>>> {
        let g = Graph::new();
        let pass = Pass {
            g: &g,
            rng: None,
            maps: Some(RefCell::new(Vec::new())),
        };
        let z = self.encode_var(&pass, g.constant(inputs.clone()))?;
        self.decode_var(&pass, z, Some(g.constant(dec_in.clone())))?;
        Ok(pass.maps.unwrap().into_inner())
    }

    /// Loss graph over explicit tensors: inputs `[B, T, input_dim]`,
    /// normalized targets `[B, H, 2]`.
    pub fn loss_on<'g>(
        &self,
        g: &'g Graph,
        inputs: &Tensor,
        targets: &Tensor,
        rng: Option<&mut Rng>,
    ) -> Result<Var<'g>> {
        let pass = Pass {
            g,
            rng: rng.map(RefCell::new),
            maps: None,
        };
        let h = targets.shape()[1];
        let tv = g.constant(targets.clone());
        let z = self.encode_var(&pass, g.constant(inputs.clone()))?;
        let dec_in = if h > 1 { Some(tv.slice_rows(0, h - 1)?) } else { None };
        let s = self.decode_var(&pass, z, dec_in)?;
        let pred = self.head(g, s)?;
        mse_meters(pred, tv, self.config.io.coord_scale)
    }
}

impl Estimator for TransformerModel {
    fn kind(&self) -> &'static str {
        "transformer"
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

    fn loss<'g>(&self, g: &'g Graph, batch: &[&SequenceSample], rng: Option<&mut Rng>) -> Result<Var<'g>> {
        let io = &self.config.io;
        let x = io.inputs(batch)?;
        let y = io.targets(batch, self.config.horizon)?;
        self.loss_on(g, &x, &y, rng)
    }

    fn predict(&self, batch: &[&SequenceSample]) -> Result<Vec<Point>> {
        let x = self.config.io.inputs(batch)?;
        let out = self.predict_normalized(&x)?;
        to_points(&self.config.io, batch, &out)
    }
}
