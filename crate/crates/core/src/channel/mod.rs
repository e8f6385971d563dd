//! Synthetic mmWave channel: obstacle environment, multipath tracing,
//! power delay profiles and binarized beamformed fingerprints.

pub mod dataset;
pub mod environment;
pub mod fingerprint;
pub mod geometry;
pub mod pdp;
pub mod trace;

pub use dataset::{DatasetHeader, FingerprintDataset};
pub use environment::{Environment, GridIndex, Obstacle};
pub use fingerprint::{ChannelModel, FingerprintMatrix, FingerprintSimulator, FingerprintSource};
pub use geometry::{Point, Rect};
pub use pdp::{
    add_shadowing, binarize, compute_pdp, BeamPattern, Codebook, PowerDelayProfile, SounderConfig,
    FLOOR_DBM,
};
pub use trace::{trace_paths, PropagationPath, SPEED_OF_LIGHT};
