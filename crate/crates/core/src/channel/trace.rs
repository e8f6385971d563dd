//! Image-method path tracer: direct path plus first- and second-order
//! specular reflections off obstacle faces.

use super::environment::Environment;
use super::geometry::{Face, Point};
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationPath {
    /// Seconds.
    pub delay: f64,
    /// Direction of the first leg at the transmitter, in `[0, 2π)`.
    pub departure_angle: f64,
    /// Free-space loss plus reflection losses, negated (dB).
    pub path_gain_db: f64,
    pub bounce_count: u8,
}

impl PropagationPath {
    pub fn length(&self) -> f64 {
        self.delay * SPEED_OF_LIGHT
    }
}

/// Free-space path loss in dB at distance `d` meters.
pub fn free_space_loss_db(d: f64, carrier_freq: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * d * carrier_freq / SPEED_OF_LIGHT).log10()
}

struct Reflector {
    face: Face,
    loss_db: f64,
}

fn reflectors(env: &Environment) -> Vec<Reflector> {
    env.obstacles
        .iter()
        .flat_map(|o| {
            o.rect.faces().into_iter().map(move |face| Reflector {
                face,
                loss_db: o.reflection_loss_db,
            })
        })
        .collect()
}

fn legs_clear(env: &Environment, pts: &[Point]) -> bool {
    pts.windows(2).all(|w| !env.segment_blocked(w[0], w[1]))
}

/// All propagation paths from the transmitter to `rx`, sorted by delay.
///
/// Receivers strictly inside an obstacle get no paths. Receivers outside the
/// area, or on top of the transmitter, are a domain error.
pub fn trace_paths(env: &Environment, rx: Point) -> Result<Vec<PropagationPath>> {
    if !env.contains(rx) {
        return Err(Error::Domain(format!("receiver {rx:?} outside the area")));
    }
    let tx = env.tx_position;
    if rx == tx {
        return Err(Error::Domain("receiver coincides with the transmitter".into()));
    }
    if env.inside_obstacle(rx) {
        return Ok(Vec::new());
    }

    let mut paths = Vec::new();
    let mut push = |first_hop: Point, length: f64, loss_db: f64, bounces: u8| {
        let gain = -free_space_loss_db(length, env.carrier_freq) - loss_db;
        if gain.is_finite() {
            paths.push(PropagationPath {
                delay: length / SPEED_OF_LIGHT,
                departure_angle: (first_hop - tx).angle(),
                path_gain_db: gain,
                bounce_count: bounces,
            });
        }
    };

    if legs_clear(env, &[tx, rx]) {
        push(rx, tx.distance(rx), 0.0, 0);
    }

    let refl = reflectors(env);
    for r in &refl {
        let f = &r.face;
        if !f.faces_toward(tx) || !f.faces_toward(rx) {
            continue;
        }
        let image = f.mirror(tx);
        let Some(p) = f.intersect(image, rx) else {
            continue;
        };
        if legs_clear(env, &[tx, p, rx]) {
            push(p, image.distance(rx), r.loss_db, 1);
        }
    }

    for (i, r1) in refl.iter().enumerate() {
        let f1 = &r1.face;
        if !f1.faces_toward(tx) {
            continue;
        }
        let image1 = f1.mirror(tx);
        for (j, r2) in refl.iter().enumerate() {
            if i == j {
                continue;
            }
            let f2 = &r2.face;
            if !f2.faces_toward(rx) || !f2.faces_toward(image1) {
                continue;
            }
            let image2 = f2.mirror(image1);
            let Some(p2) = f2.intersect(image2, rx) else {
                continue;
            };
            if !f1.faces_toward(p2) {
                continue;
            }
            let Some(p1) = f1.intersect(image1, p2) else {
                continue;
            };
            if !f2.faces_toward(p1) {
                continue;
            }
            if legs_clear(env, &[tx, p1, p2, rx]) {
                push(p1, image2.distance(rx), r1.loss_db + r2.loss_db, 2);
            }
        }
    }

    paths.sort_by(|a, b| {
        a.delay
            .total_cmp(&b.delay)
            .then(a.bounce_count.cmp(&b.bounce_count))
            .then(a.departure_angle.total_cmp(&b.departure_angle))
    });
    Ok(paths)
}
