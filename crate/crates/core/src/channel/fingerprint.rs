//! Binary beamformed fingerprints: one thresholded PDP row per codebook beam.

use rand::Rng;
use rayon::prelude::*;

use super::environment::{Environment, GridIndex};
use super::geometry::Point;
use super::pdp::{self, Codebook, PowerDelayProfile, SounderConfig};
use super::trace::trace_paths;
use crate::error::{Error, Result};
use crate::seed::{self, Domain};

/// `M × N_s` bit matrix, row-major, entries 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintMatrix {
    pub n_beams: usize,
    pub n_samples: usize,
    pub bits: Vec<u8>,
    pub position: Point,
}

impl FingerprintMatrix {
    pub fn row(&self, beam: usize) -> &[u8] {
        &self.bits[beam * self.n_samples..(beam + 1) * self.n_samples]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

/// Environment, sounder and codebook bundled together.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub env: Environment,
    pub sounder: SounderConfig,
    pub codebook: Codebook,
}

impl ChannelModel {
    pub fn new(env: Environment, sounder: SounderConfig, codebook: Codebook) -> Result<Self> {
        env.validate()?;
        sounder.validate()?;
        if codebook.is_empty() {
            return Err(Error::Config("empty codebook".into()));
        }
        Ok(Self {
            env,
            sounder,
            codebook,
        })
    }

    pub fn n_beams(&self) -> usize {
        self.codebook.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sounder.n_samples()
    }

    /// Flattened fingerprint width `M · N_s`.
    pub fn fingerprint_len(&self) -> usize {
        self.n_beams() * self.n_samples()
    }

    /// Noise-free PDP of every beam at `rx`.
    pub fn noise_free_pdps(&self, rx: Point) -> Result<Vec<PowerDelayProfile>> {
        let paths = trace_paths(&self.env, rx)?;
        Ok(self
            .codebook
            .beams
            .iter()
            .map(|b| pdp::compute_pdp(&paths, b, &self.sounder))
            .collect())
    }

    /// Shadows a noise-free realization with one draw and thresholds it.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        pdps: &[PowerDelayProfile],
        position: Point,
        rng: &mut R,
    ) -> Result<FingerprintMatrix> {
        let shadowed = pdp::add_shadowing(
            pdps,
            self.sounder.shadowing_sigma_db,
            self.sounder.max_rx_power_dbm,
            rng,
        )?;
        let bits = shadowed
            .iter()
            .flat_map(|p| pdp::binarize(p, self.sounder.threshold_dbm))
            .collect();
        Ok(FingerprintMatrix {
            n_beams: self.n_beams(),
            n_samples: self.n_samples(),
            bits,
            position,
        })
    }

    /// Row `i` is `binarize(shadow(compute_pdp(trace(rx), beam_i)))`.
    pub fn fingerprint<R: Rng + ?Sized>(&self, rx: Point, rng: &mut R) -> Result<FingerprintMatrix> {
        let pdps = self.noise_free_pdps(rx)?;
        self.realize(&pdps, rx, rng)
    }

    /// Seed for the stored realization at a grid node. Keyed by position so
    /// any evaluation order gives the same dataset.
    fn node_rng(&self, g: GridIndex) -> seed::Rng {
        seed::rng(self.env.rng_seed, Domain::Shadowing, &[g.ix as u64, g.iy as u64])
    }

    pub fn node_fingerprint(&self, g: GridIndex) -> Result<FingerprintMatrix> {
        let pos = self.env.node_position(g);
        self.fingerprint(pos, &mut self.node_rng(g))
    }

    /// Fingerprints for every grid node, in linear-index order.
    pub fn build_dataset(&self) -> Result<Vec<FingerprintMatrix>> {
        (0..self.env.n_nodes())
            .into_par_iter()
            .map(|i| self.node_fingerprint(self.env.grid_index(i)))
            .collect()
    }
}

/// Anything that can hand out the fingerprint observed at a grid node.
pub trait FingerprintSource: Sync {
    fn n_beams(&self) -> usize;
    fn n_samples(&self) -> usize;
    /// Bits observed at `node` (linear index). `realization` selects an
    /// independent noise draw where the source supports it.
    fn bits(&self, node: usize, realization: u64) -> Result<Vec<u8>>;
}

/// Regenerates a fresh shadowing realization for every observation from
/// cached noise-free profiles.
pub struct FingerprintSimulator {
    model: ChannelModel,
    /// Per node, the non-floor entries `(flat index, dBm)` of the noise-free
    /// PDPs.
    sparse: Vec<Vec<(u32, f64)>>,
}

impl FingerprintSimulator {
    pub fn new(model: ChannelModel) -> Result<Self> {
        let sparse = (0..model.env.n_nodes())
            .into_par_iter()
            .map(|i| {
                let pos = model.env.node_position(model.env.grid_index(i));
                let pdps = model.noise_free_pdps(pos)?;
                Ok(pdps
                    .iter()
                    .flat_map(|p| p.samples.iter().copied())
                    .enumerate()
                    .filter(|(_, s)| *s > pdp::FLOOR_DBM)
                    .map(|(k, s)| (k as u32, s))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, sparse })
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    fn pdps(&self, node: usize) -> Vec<PowerDelayProfile> {
        let ns = self.model.n_samples();
        let mut out = vec![PowerDelayProfile::floor(ns); self.model.n_beams()];
        for &(k, s) in &self.sparse[node] {
            let k = k as usize;
            out[k / ns].samples[k % ns] = s;
        }
        out
    }

    pub fn realization(&self, node: usize, realization: u64) -> Result<FingerprintMatrix> {
        let env = &self.model.env;
        if node >= env.n_nodes() {
            return Err(Error::Domain(format!("node {node} outside the grid")));
        }
        let g = env.grid_index(node);
        let mut rng = seed::rng(
            env.rng_seed,
            Domain::Realization,
            &[g.ix as u64, g.iy as u64, realization],
        );
        self.model.realize(&self.pdps(node), env.node_position(g), &mut rng)
    }
}

impl FingerprintSource for FingerprintSimulator {
    fn n_beams(&self) -> usize {
        self.model.n_beams()
    }
    fn n_samples(&self) -> usize {
        self.model.n_samples()
    }
    fn bits(&self, node: usize, realization: u64) -> Result<Vec<u8>> {
        Ok(self.realization(node, realization)?.bits)
    }
}
