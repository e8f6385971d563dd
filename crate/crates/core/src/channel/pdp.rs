//! Beam patterns, sampled power delay profiles, shadowing and thresholding.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::trace::PropagationPath;
use crate::error::{Error, Result};

/// Finite stand-in for "no power", always below any usable threshold.
pub const FLOOR_DBM: f64 = -200.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SounderConfig {
    /// Hz. Recorded for completeness; the delay resolution is set by the
    /// sample interval.
    pub bandwidth: f64,
    /// Seconds between PDP samples.
    pub sample_interval: f64,
    /// Seconds; paths at or beyond this excess delay are dropped.
    pub max_excess_delay: f64,
    /// Linear amplitude; `s²` is the transmitted power in milliwatts.
    pub sounding_amplitude: f64,
    pub max_rx_power_dbm: f64,
    pub threshold_dbm: f64,
    /// Standard deviation of the per-realization log-normal shadowing.
    pub shadowing_sigma_db: f64,
}

impl Default for SounderConfig {
    fn default() -> Self {
        Self {
            bandwidth: 100e6,
            sample_interval: 10e-9,
            max_excess_delay: 640e-9,
            sounding_amplitude: 10.0,
            max_rx_power_dbm: 30.0,
            threshold_dbm: -100.0,
            shadowing_sigma_db: 6.0,
        }
    }
}

impl SounderConfig {
    pub fn n_samples(&self) -> usize {
        (self.max_excess_delay / self.sample_interval).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_interval > 0.0 && self.max_excess_delay > 0.0) {
            return Err(Error::Config("sample interval and max excess delay must be positive".into()));
        }
        if self.n_samples() < 1 {
            return Err(Error::Config("sounder yields zero samples".into()));
        }
        if !(self.threshold_dbm < self.max_rx_power_dbm) {
            return Err(Error::Config(format!(
                "threshold {} dBm must be below the power cap {} dBm",
                self.threshold_dbm, self.max_rx_power_dbm
            )));
        }
        if !(self.threshold_dbm > FLOOR_DBM) {
            return Err(Error::Config(format!("threshold must exceed the {FLOOR_DBM} dBm floor")));
        }
        if !(self.sounding_amplitude > 0.0) {
            return Err(Error::Config("sounding amplitude must be positive".into()));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(Error::Config("shadowing sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Transmit power `s²` in milliwatts.
    pub fn tx_power_mw(&self) -> f64 {
        self.sounding_amplitude * self.sounding_amplitude
    }
}

/// Piecewise-constant sector pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamPattern {
    pub boresight: f64,
    pub beamwidth: f64,
    pub mainlobe_gain_db: f64,
    pub sidelobe_gain_db: f64,
}

impl BeamPattern {
    pub fn gain_db(&self, angle: f64) -> f64 {
        let mut diff = (angle - self.boresight).rem_euclid(TAU);
        if diff > TAU / 2.0 {
            diff = TAU - diff;
        }
        if diff <= self.beamwidth / 2.0 {
            self.mainlobe_gain_db
        } else {
            self.sidelobe_gain_db
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub beams: Vec<BeamPattern>,
}

impl Codebook {
    /// `m` beams with boresights `2πi/m`.
    pub fn uniform(m: usize, beamwidth: f64, mainlobe_gain_db: f64, sidelobe_gain_db: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("codebook needs at least one beam".into()));
        }
        if !(mainlobe_gain_db > sidelobe_gain_db) {
            return Err(Error::Config("mainlobe gain must exceed sidelobe gain".into()));
        }
        if !(beamwidth > 0.0) {
            return Err(Error::Config("beamwidth must be positive".into()));
        }
        Ok(Self {
            beams: (0..m)
                .map(|i| BeamPattern {
                    boresight: TAU * i as f64 / m as f64,
                    beamwidth,
                    mainlobe_gain_db,
                    sidelobe_gain_db,
                })
                .collect(),
        })
    }

    /// Sector beams of width `2π/m`, 0 dB mainlobe, -20 dB sidelobes.
    pub fn sectors(m: usize) -> Result<Self> {
        Self::uniform(m, TAU / m.max(1) as f64, 0.0, -20.0)
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }
}

/// One beam's sampled power delay profile in dBm.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    pub samples: Vec<f64>,
    /// Paths that fell outside the sampled delay window.
    pub dropped_paths: usize,
}

impl PowerDelayProfile {
    pub fn floor(n: usize) -> Self {
        Self {
            samples: vec![FLOOR_DBM; n],
            dropped_paths: 0,
        }
    }
}

/// Linear received power per delay bin (milliwatts) before any capping,
/// and the number of paths outside the delay window.
pub fn bin_powers_mw(
    paths: &[PropagationPath],
    beam: &BeamPattern,
    cfg: &SounderConfig,
) -> (Vec<f64>, usize) {
    let n = cfg.n_samples();
    let mut bins = vec![0.0; n];
    let mut dropped = 0;
    let p_tx = cfg.tx_power_mw();
    for p in paths {
        let j = (p.delay / cfg.sample_interval).round();
        if p.delay >= cfg.max_excess_delay || j >= n as f64 {
            dropped += 1;
            continue;
        }
        let gain = p.path_gain_db + beam.gain_db(p.departure_angle);
        bins[j as usize] += p_tx * db_to_linear(gain);
    }
    (bins, dropped)
}

pub fn compute_pdp(
    paths: &[PropagationPath],
    beam: &BeamPattern,
    cfg: &SounderConfig,
) -> PowerDelayProfile {
    let (bins, dropped_paths) = bin_powers_mw(paths, beam, cfg);
    let samples = bins
        .into_iter()
        .map(|mw| {
            if mw > 0.0 {
                linear_to_db(mw).clamp(FLOOR_DBM, cfg.max_rx_power_dbm)
            } else {
                FLOOR_DBM
            }
        })
        .collect();
    PowerDelayProfile {
        samples,
        dropped_paths,
    }
}

/// Draws one shadowing offset in dB.
pub fn draw_shadowing<R: Rng + ?Sized>(sigma_db: f64, rng: &mut R) -> Result<f64> {
    if !(sigma_db >= 0.0) {
        return Err(Error::Domain(format!("shadowing sigma must be >= 0, got {sigma_db}")));
    }
    if sigma_db == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::new(0.0, sigma_db).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(normal.sample(rng))
}

/// Shifts every non-floor bin by `offset_db`, then re-applies the cap.
pub fn apply_shadowing(pdp: &mut PowerDelayProfile, offset_db: f64, cap_dbm: f64) {
    for s in pdp.samples.iter_mut().filter(|s| **s > FLOOR_DBM) {
        *s = (*s + offset_db).clamp(FLOOR_DBM, cap_dbm);
    }
}

/// Applies a single log-normal draw to all beams of one fingerprint
/// realization.
pub fn add_shadowing<R: Rng + ?Sized>(
    realization: &[PowerDelayProfile],
    sigma_db: f64,
    cap_dbm: f64,
    rng: &mut R,
) -> Result<Vec<PowerDelayProfile>> {
    let offset = draw_shadowing(sigma_db, rng)?;
    Ok(realization
        .iter()
        .map(|p| {
            let mut p = p.clone();
            apply_shadowing(&mut p, offset, cap_dbm);
            p
        })
        .collect())
}

/// Bit `j` is set iff `samples[j] >= eta`.
pub fn binarize(pdp: &PowerDelayProfile, eta_dbm: f64) -> Vec<u8> {
    pdp.samples.iter().map(|&s| u8::from(s >= eta_dbm)).collect()
}
