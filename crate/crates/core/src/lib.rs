//! Beamformed-fingerprint trajectory estimation toolkit.
//!
//! The crate covers the whole pipeline: a synthetic multipath channel that
//! produces binary fingerprints on a grid ([`channel`]), kinematic trajectory
//! generation ([`trajectory`]), a small reverse-mode tensor library
//! ([`tensor`]), an encoder-decoder transformer ([`transformer`]) with
//! recurrent baselines ([`baselines`]), and the training/evaluation harness
//! ([`harness`]).

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod estimator;
pub mod io;
pub mod kv;
pub mod seed;
pub mod tensor;
pub mod trajectory;
pub mod transformer;

pub use channel::Point;
pub use error::{Error, Result};
pub use estimator::{Estimator, IoSpec};
pub use harness::{ExperimentConfig, ModelKind};
pub use trajectory::{InputMode, MotionKind, SequenceSample};
