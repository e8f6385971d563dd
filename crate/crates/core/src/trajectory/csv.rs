//! Trajectory CSV: `traj_id,group_id,kind,step,x,y`, one row per step.

use std::fmt::Write as _;
use std::path::Path;

use super::generate::Trajectory;
use super::profile::MotionKind;
use crate::channel::Point;
use crate::error::{Error, Result};
use crate::io;

pub const HEADER: &str = "traj_id,group_id,kind,step,x,y";

pub fn to_csv(trajs: &[Trajectory]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for t in trajs {
        for (step, p) in t.positions.iter().enumerate() {
            // `{}` prints the shortest representation that parses back exactly
            let _ = writeln!(out, "{},{},{},{},{},{}", t.traj_id, t.group_id, t.kind, step, p.x, p.y);
        }
    }
    out
}

pub fn from_csv(text: &str) -> Result<Vec<Trajectory>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        other => {
            return Err(Error::Format(format!("expected header {HEADER:?}, got {other:?}")));
        }
    }
    let mut out: Vec<Trajectory> = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("line {}: {what}: {line:?}", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let traj_id: usize = f[0].parse().map_err(|_| bad("traj_id"))?;
        let group_id: usize = f[1].parse().map_err(|_| bad("group_id"))?;
        let kind: MotionKind = f[2].parse().map_err(|_| bad("kind"))?;
        let step: usize = f[3].parse().map_err(|_| bad("step"))?;
        let p = Point::new(
            f[4].parse().map_err(|_| bad("x"))?,
            f[5].parse().map_err(|_| bad("y"))?,
        );
        let continues = matches!(out.last(), Some(t) if t.traj_id == traj_id && t.kind == kind);
        if continues {
            let t = out.last_mut().unwrap();
            if step != t.positions.len() || group_id != t.group_id {
                return Err(bad("out-of-order step"));
            }
            t.positions.push(p);
        } else {
            if step != 0 {
                return Err(bad("trajectory does not start at step 0"));
            }
            out.push(Trajectory {
                traj_id,
                group_id,
                kind,
                positions: vec![p],
            });
        }
    }
    Ok(out)
}

pub fn write(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    io::write_atomic(path, to_csv(trajs).as_bytes())
}

pub fn read(path: &Path) -> Result<Vec<Trajectory>> {
    from_csv(&io::read_string(path)?)
}
