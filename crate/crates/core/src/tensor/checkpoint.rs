//! TNP1 parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "TNP1" | version u32 | kind str | config str | sha256(config) [32]
//! | meta str | n_blocks u32
//! | n_blocks × (name str | rank u32 | dims u64 × rank | f64 × numel)
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::io::{self, ByteReader, ByteWriter};

pub const MAGIC: &[u8; 4] = b"TNP1";
pub const VERSION: u32 = 1;

pub fn sha256(data: impl AsRef<[u8]>) -> [u8; 32] {
    Sha256::digest(data.as_ref()).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Model family tag, e.g. `transformer` or `lstm`.
    pub kind: String,
    /// Model configuration as a key=value block.
    pub config: String,
    /// Free-form key=value block (training groups, seeds, ...).
    pub meta: String,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn digest(&self) -> [u8; 32] {
        sha256(&self.config)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.str(&self.kind);
        w.str(&self.config);
        w.bytes(&self.digest());
        w.str(&self.meta);
        w.u32(self.params.len() as u32);
        for (_, name, t) in self.params.iter() {
            w.str(name);
            w.u32(t.rank() as u32);
            for &d in t.shape() {
                w.u64(d as u64);
            }
            for &x in t.data() {
                w.f64(x);
            }
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        if r.bytes(4)? != MAGIC {
            return Err(Error::Format("not a TNP1 checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version(format!("checkpoint version {version}, expected {VERSION}")));
        }
        let kind = r.str()?;
        let config = r.str()?;
        let digest = r.bytes(32)?;
        if digest != sha256(&config) {
            return Err(Error::Format("checkpoint config digest does not match its config".into()));
        }
        let meta = r.str()?;
        let n = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(Error::Format(format!("block {name:?} has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            match numel {
                Some(k) if k.saturating_mul(8) <= r.remaining() => {}
                _ => return Err(Error::Format(format!("block {name:?} is truncated"))),
            }
            let numel = numel.unwrap();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(r.f64()?);
            }
            params
                .add(name, Tensor::new(&shape, data)?)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        if r.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self {
            kind,
            config,
            meta,
            params,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&io::read(path)?)
    }

    /// Fails with a version error unless this checkpoint was written for
    /// exactly `kind` and `config`.
    pub fn expect(&self, kind: &str, config: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Version(format!(
                "checkpoint holds a {} model, configuration asks for {kind}",
                self.kind
            )));
        }
        if self.digest() != sha256(config) {
            return Err(Error::Version(format!(
                "checkpoint config digest {} differs from {}",
                hex(&self.digest()),
                hex(&sha256(config))
            )));
        }
        Ok(())
    }
}
