use super::generate::Trajectory;
use crate::channel::{Environment, GridIndex, Point};

fn nearest(coord: f64, origin: f64, pitch: f64, n: usize) -> usize {
    // ceil(f - 0.5) rounds halves down, so ties go to the lower index
    let f = (coord - origin) / pitch;
    ((f - 0.5).ceil().max(0.0) as usize).min(n - 1)
}

/// Nearest grid node; exact ties resolve to the lower index on each axis.
pub fn snap_point(env: &Environment, p: Point) -> GridIndex {
    let (px, py) = env.pitch();
    GridIndex {
        ix: nearest(p.x, env.origin.x, px, env.grid_nx),
        iy: nearest(p.y, env.origin.y, py, env.grid_ny),
    }
}

pub fn snap_to_grid(traj: &Trajectory, env: &Environment) -> Vec<GridIndex> {
    traj.positions.iter().map(|&p| snap_point(env, p)).collect()
}
