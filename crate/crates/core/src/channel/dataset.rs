//! Packed fingerprint dataset file (`BFF1`).
//!
//! Layout, all little-endian:
//!
//! ```text
//! "BFF1" | version u32 | M u32 | N_s u32 | grid_nx u32 | grid_ny u32
//! origin_x f64 | origin_y f64 | extent_x f64 | extent_y f64
//! seed u64 | eta f64
//! bandwidth f64 | sample_interval f64 | max_excess_delay f64 | N_s u32
//! sounding_amplitude f64 | max_rx_power f64 | shadowing_sigma f64
//! then grid_nx·grid_ny records: x f64 | y f64 | ceil(M·N_s/8) bytes
//! ```
//!
//! Record bits are the row-major `M × N_s` matrix packed LSB-first: bit `k`
//! lives in byte `k / 8` at position `k % 8`. Records are in linear grid
//! order (`iy` major).

use std::path::Path;

use super::environment::Environment;
use super::fingerprint::{ChannelModel, FingerprintMatrix, FingerprintSource};
use super::geometry::Point;
use super::pdp::SounderConfig;
use crate::error::{Error, Result};
use crate::io::{self, ByteReader, ByteWriter};

pub const MAGIC: &[u8; 4] = b"BFF1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub n_beams: usize,
    pub n_samples: usize,
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub origin: Point,
    pub extent_x: f64,
    pub extent_y: f64,
    pub seed: u64,
    pub sounder: SounderConfig,
}

impl DatasetHeader {
    pub fn for_model(model: &ChannelModel) -> Self {
        let env = &model.env;
        Self {
            n_beams: model.n_beams(),
            n_samples: model.n_samples(),
            grid_nx: env.grid_nx,
            grid_ny: env.grid_ny,
            origin: env.origin,
            extent_x: env.extent_x,
            extent_y: env.extent_y,
            seed: env.rng_seed,
            sounder: model.sounder.clone(),
        }
    }

    pub fn packed_len(&self) -> usize {
        (self.n_beams * self.n_samples).div_ceil(8)
    }

    pub fn n_records(&self) -> usize {
        self.grid_nx * self.grid_ny
    }
}

pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (k, &b) in bits.iter().enumerate() {
        if b != 0 {
            out[k / 8] |= 1 << (k % 8);
        }
    }
    out
}

pub fn unpack_bits(packed: &[u8], n: usize) -> Vec<u8> {
    (0..n).map(|k| (packed[k / 8] >> (k % 8)) & 1).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintDataset {
    pub header: DatasetHeader,
    pub records: Vec<FingerprintMatrix>,
}

impl FingerprintDataset {
    /// Fingerprints every grid node of `model`.
    pub fn build(model: &ChannelModel) -> Result<Self> {
        Ok(Self {
            header: DatasetHeader::for_model(model),
            records: model.build_dataset()?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let s = &h.sounder;
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u32(h.n_beams as u32);
        w.u32(h.n_samples as u32);
        w.u32(h.grid_nx as u32);
        w.u32(h.grid_ny as u32);
        w.f64(h.origin.x);
        w.f64(h.origin.y);
        w.f64(h.extent_x);
        w.f64(h.extent_y);
        w.u64(h.seed);
        w.f64(s.threshold_dbm);
        w.f64(s.bandwidth);
        w.f64(s.sample_interval);
        w.f64(s.max_excess_delay);
        w.u32(h.n_samples as u32);
        w.f64(s.sounding_amplitude);
        w.f64(s.max_rx_power_dbm);
        w.f64(s.shadowing_sigma_db);
        for r in &self.records {
            w.f64(r.position.x);
            w.f64(r.position.y);
            w.bytes(&pack_bits(&r.bits));
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        if r.bytes(4)? != MAGIC {
            return Err(Error::Format("not a fingerprint dataset (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version(format!("dataset version {version}, expected {VERSION}")));
        }
        let n_beams = r.u32()? as usize;
        let n_samples = r.u32()? as usize;
        let grid_nx = r.u32()? as usize;
        let grid_ny = r.u32()? as usize;
        let origin = Point::new(r.f64()?, r.f64()?);
        let extent_x = r.f64()?;
        let extent_y = r.f64()?;
        let seed = r.u64()?;
        let threshold_dbm = r.f64()?;
        let bandwidth = r.f64()?;
        let sample_interval = r.f64()?;
        let max_excess_delay = r.f64()?;
        let ns_again = r.u32()? as usize;
        if ns_again != n_samples {
            return Err(Error::Format(format!(
                "sample count mismatch in header: {n_samples} vs {ns_again}"
            )));
        }
        let sounder = SounderConfig {
            bandwidth,
            sample_interval,
            max_excess_delay,
            sounding_amplitude: r.f64()?,
            max_rx_power_dbm: r.f64()?,
            threshold_dbm,
            shadowing_sigma_db: r.f64()?,
        };
        let header = DatasetHeader {
            n_beams,
            n_samples,
            grid_nx,
            grid_ny,
            origin,
            extent_x,
            extent_y,
            seed,
            sounder,
        };
        let n_bits = n_beams * n_samples;
        let rec_len = 16 + header.packed_len();
        if r.remaining() != header.n_records() * rec_len {
            return Err(Error::Format(format!(
                "expected {} records of {rec_len} bytes, found {} bytes",
                header.n_records(),
                r.remaining()
            )));
        }
        let mut records = Vec::with_capacity(header.n_records());
        for _ in 0..header.n_records() {
            let position = Point::new(r.f64()?, r.f64()?);
            let bits = unpack_bits(r.bytes(header.packed_len())?, n_bits);
            records.push(FingerprintMatrix {
                n_beams,
                n_samples,
                bits,
                position,
            });
        }
        Ok(Self { header, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&io::read(path)?)
    }

    /// Checks that the dataset was produced for this environment's grid.
    pub fn check_grid(&self, env: &Environment) -> Result<()> {
        let h = &self.header;
        if h.grid_nx != env.grid_nx
            || h.grid_ny != env.grid_ny
            || h.origin != env.origin
            || h.extent_x != env.extent_x
            || h.extent_y != env.extent_y
        {
            return Err(Error::Version(
                "dataset grid does not match the configured environment".into(),
            ));
        }
        Ok(())
    }
}

impl FingerprintSource for FingerprintDataset {
    fn n_beams(&self) -> usize {
        self.header.n_beams
    }
    fn n_samples(&self) -> usize {
        self.header.n_samples
    }
    /// The stored realization; `realization` is ignored.
    fn bits(&self, node: usize, _realization: u64) -> Result<Vec<u8>> {
        self.records
            .get(node)
            .map(|r| r.bits.clone())
            .ok_or_else(|| Error::Domain(format!("node {node} outside the dataset")))
    }
}
