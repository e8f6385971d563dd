use super::geometry::{Point, Rect};
use crate::error::{Error, Result};

/// A building or wall. Every face reflects with the same loss; an infinite
/// loss makes the obstacle a pure absorber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub rect: Rect,
    pub reflection_loss_db: f64,
}

impl Obstacle {
    pub fn new(a: Point, b: Point, reflection_loss_db: f64) -> Self {
        Self {
            rect: Rect::from_corners(a, b),
            reflection_loss_db,
        }
    }
}

/// Index of a grid node; `ix` runs along x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridIndex {
    pub ix: usize,
    pub iy: usize,
}

/// Rectangular area with a regular receiver grid, a single transmitter and
/// rectangular obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    /// Lower-left corner of the area.
    pub origin: Point,
    pub extent_x: f64,
    pub extent_y: f64,
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub tx_position: Point,
    pub obstacles: Vec<Obstacle>,
    pub carrier_freq: f64,
    pub rng_seed: u64,
}

impl Default for Environment {
    /// A 200 m × 200 m block with eight buildings, facades just outside each
    /// edge and the transmitter at the origin. The grid is offset by a
    /// quarter meter so no node lands on the transmitter at 2 m or 0.5 m
    /// pitch (101 or 401 nodes a side).
    fn default() -> Self {
        let b = |x0: f64, y0: f64, x1: f64, y1: f64| {
            Obstacle::new(Point::new(x0, y0), Point::new(x1, y1), 6.0)
        };
        Self {
            origin: Point::new(-100.75, -100.75),
            extent_x: 200.0,
            extent_y: 200.0,
            grid_nx: 101,
            grid_ny: 101,
            tx_position: Point::new(0.0, 0.0),
            obstacles: vec![
                b(-70.0, -80.0, -40.0, -50.0),
                b(20.0, -85.0, 60.0, -60.0),
                b(-85.0, 10.0, -55.0, 55.0),
                b(30.0, 25.0, 55.0, 70.0),
                b(-25.0, 60.0, 5.0, 85.0),
                b(70.0, -30.0, 90.0, 10.0),
                b(-40.0, -30.0, -20.0, -15.0),
                b(15.0, -35.0, 35.0, -20.0),
                b(-110.0, -110.0, 100.0, -101.0),
                b(-110.0, 99.5, 100.0, 110.0),
                b(-110.0, -110.0, -101.0, 110.0),
                b(99.5, -110.0, 110.0, 110.0),
            ],
            carrier_freq: 28e9,
            rng_seed: 0,
        }
    }
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        if self.grid_nx < 2 || self.grid_ny < 2 {
            return Err(Error::Config(format!(
                "grid must be at least 2x2, got {}x{}",
                self.grid_nx, self.grid_ny
            )));
        }
        if !(self.extent_x > 0.0 && self.extent_y > 0.0) {
            return Err(Error::Config("extent must be positive".into()));
        }
        if !(self.carrier_freq > 0.0) {
            return Err(Error::Config("carrier frequency must be positive".into()));
        }
        if !self.bounds().contains(self.tx_position) {
            return Err(Error::Config(format!(
                "transmitter {:?} outside the area",
                self.tx_position
            )));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.rect.area() > 0.0) {
                return Err(Error::Config(format!("obstacle {i} has zero area")));
            }
            if o.rect.contains(self.tx_position) {
                return Err(Error::Config(format!("obstacle {i} contains the transmitter")));
            }
            if o.reflection_loss_db.is_nan() || o.reflection_loss_db < 0.0 {
                return Err(Error::Config(format!("obstacle {i}: reflection loss must be >= 0 dB")));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> Rect {
        Rect::from_corners(
            self.origin,
            Point::new(self.origin.x + self.extent_x, self.origin.y + self.extent_y),
        )
    }

    pub fn center(&self) -> Point {
        Point::new(
            self.origin.x + 0.5 * self.extent_x,
            self.origin.y + 0.5 * self.extent_y,
        )
    }

    /// Grid spacing along (x, y).
    pub fn pitch(&self) -> (f64, f64) {
        (
            self.extent_x / (self.grid_nx - 1) as f64,
            self.extent_y / (self.grid_ny - 1) as f64,
        )
    }

    pub fn n_nodes(&self) -> usize {
        self.grid_nx * self.grid_ny
    }

    pub fn node_position(&self, g: GridIndex) -> Point {
        let (px, py) = self.pitch();
        Point::new(
            self.origin.x + g.ix as f64 * px,
            self.origin.y + g.iy as f64 * py,
        )
    }

    /// Row-major linear index (`iy` major).
    pub fn linear_index(&self, g: GridIndex) -> usize {
        g.iy * self.grid_nx + g.ix
    }

    pub fn grid_index(&self, linear: usize) -> GridIndex {
        GridIndex {
            ix: linear % self.grid_nx,
            iy: linear / self.grid_nx,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bounds().contains(p)
    }

    pub fn inside_obstacle(&self, p: Point) -> bool {
        self.obstacles.iter().any(|o| o.rect.contains_strict(p))
    }

    /// True if any obstacle blocks the segment.
    pub fn segment_blocked(&self, a: Point, b: Point) -> bool {
        self.obstacles.iter().any(|o| o.rect.blocks(a, b))
    }

    /// A point is free when it is inside the area and outside every obstacle.
    pub fn is_free(&self, p: Point) -> bool {
        self.contains(p) && !self.inside_obstacle(p)
    }
}
