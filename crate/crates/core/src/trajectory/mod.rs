//! Pedestrian and vehicle trajectories, grid snapping, group splits and
//! sequence windowing.

pub mod csv;
pub mod generate;
pub mod grid;
pub mod profile;
pub mod sequence;
pub mod split;

pub use generate::{check_trajectory, generate_set, generate_trajectory, Trajectory, Violation, DT};
pub use grid::{snap_point, snap_to_grid};
pub use profile::{KinematicProfile, MotionKind, KMH};
pub use sequence::{make_sequences, InputMode, SequenceSample, Windowed};
pub use split::{group_ids, split_groups, Split};
