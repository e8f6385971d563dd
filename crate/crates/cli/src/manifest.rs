use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use bfftrack::harness::ExperimentConfig;
use bfftrack::io;
use bfftrack::kv::KvBlock;
use bfftrack::tensor::{hex, sha256};
use bfftrack::Result;

/// Run record written next to every command's outputs.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    /// `(path relative to the output directory, sha256 of its bytes)`
    pub artifacts: Vec<(String, String)>,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Wall-clock measurements; like the timestamps, never part of a digest.
    pub timings: Vec<(String, f64)>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl Manifest {
    pub fn start(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            config_digest: config.digest(),
            seed: config.seed,
            artifacts: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0,
            timings: Vec::new(),
        }
    }

    /// Writes `bytes` atomically to `out/rel` and records its digest.
    pub fn write_artifact(&mut self, out: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
        self.write_artifact_digesting(out, rel, bytes, bytes)
    }

    /// Like `write_artifact`, but records the digest of `digested`, a
    /// rendering of the same artifact without wall-clock fields.
    pub fn write_artifact_digesting(&mut self, out: &Path, rel: &str, bytes: &[u8], digested: &[u8]) -> Result<()> {
        io::write_atomic(&out.join(rel), bytes)?;
        self.artifacts.push((rel.to_string(), hex(&sha256(digested))));
        Ok(())
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.push("tool", "bfftrack");
        kv.push("version", env!("CARGO_PKG_VERSION"));
        kv.push("command", &self.command);
        kv.push("config_digest", &self.config_digest);
        kv.push("seed", self.seed);
        for (path, digest) in &self.artifacts {
            kv.push("artifact", format!("{path} {digest}"));
        }
        for (name, secs) in &self.timings {
            kv.push("seconds", format!("{name} {secs:.3}"));
        }
        kv.push("started_unix", self.started_unix);
        kv.push("finished_unix", self.finished_unix);
        kv
    }

    pub fn finish(mut self, out: &Path) -> Result<()> {
        self.finished_unix = unix_now();
        let path = out.join(format!("{}.manifest", self.command));
        io::write_atomic(&path, self.to_kv().to_text().as_bytes())
    }

    /// Timing entry `name` from a manifest file, if present.
    pub fn read_timing(path: &Path, name: &str) -> Option<f64> {
        let text = io::read_string(path).ok()?;
        let kv = KvBlock::parse(&text).ok()?;
        let found = kv.get_all("seconds").find_map(|v| {
            let (n, s) = v.split_once(' ')?;
            (n == name).then(|| s.parse().ok()).flatten()
        });
        found
    }
}
