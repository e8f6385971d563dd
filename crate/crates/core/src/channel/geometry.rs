//! 2D points, axis-aligned rectangles and the segment tests the path
//! tracer needs.

use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Angle of the vector in `[0, 2π)`.
    pub fn angle(self) -> f64 {
        let a = self.y.atan2(self.x);
        if a < 0.0 {
            a + std::f64::consts::TAU
        } else {
            a
        }
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Closed axis-aligned rectangle with `min < max` on both axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    /// Builds a rectangle from any two opposite corners.
    pub fn from_corners(a: Point, b: Point) -> Self {
        Self {
            min: Point::new(a.x.min(b.x), a.y.min(b.y)),
            max: Point::new(a.x.max(b.x), a.y.max(b.y)),
        }
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Strict interior test; boundary points are outside.
    pub fn contains_strict(&self, p: Point) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    /// Length of the part of segment `a..b` lying inside the closed rectangle
    /// (Liang–Barsky clipping).
    pub fn clipped_length(&self, a: Point, b: Point) -> f64 {
        let d = b - a;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        let checks = [
            (-d.x, a.x - self.min.x),
            (d.x, self.max.x - a.x),
            (-d.y, a.y - self.min.y),
            (d.y, self.max.y - a.y),
        ];
        for (p, q) in checks {
            if p == 0.0 {
                if q < 0.0 {
                    return 0.0;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return 0.0;
                }
            }
        }
        (t1 - t0) * d.norm()
    }

    /// True if the segment runs through the rectangle for a positive
    /// length. Segments that only touch a face or corner are not blocked.
    pub fn blocks(&self, a: Point, b: Point) -> bool {
        self.clipped_length(a, b) > 1e-9
    }

    pub fn faces(&self) -> [Face; 4] {
        [
            Face {
                axis: Axis::X,
                coord: self.min.x,
                lo: self.min.y,
                hi: self.max.y,
                outward: -1.0,
            },
            Face {
                axis: Axis::X,
                coord: self.max.x,
                lo: self.min.y,
                hi: self.max.y,
                outward: 1.0,
            },
            Face {
                axis: Axis::Y,
                coord: self.min.y,
                lo: self.min.x,
                hi: self.max.x,
                outward: -1.0,
            },
            Face {
                axis: Axis::Y,
                coord: self.max.y,
                lo: self.min.x,
                hi: self.max.x,
                outward: 1.0,
            },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Face lies on a line `x = coord`.
    X,
    /// Face lies on a line `y = coord`.
    Y,
}

/// One side of a rectangle, usable as a specular reflector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub axis: Axis,
    pub coord: f64,
    pub lo: f64,
    pub hi: f64,
    /// +1 or -1: direction of the outward normal along the face axis.
    pub outward: f64,
}

impl Face {
    fn along(&self, p: Point) -> f64 {
        match self.axis {
            Axis::X => p.x,
            Axis::Y => p.y,
        }
    }

    fn across(&self, p: Point) -> f64 {
        match self.axis {
            Axis::X => p.y,
            Axis::Y => p.x,
        }
    }

    /// Strictly on the reflecting (outer) side of the face line.
    pub fn faces_toward(&self, p: Point) -> bool {
        (self.along(p) - self.coord) * self.outward > 0.0
    }

    pub fn mirror(&self, p: Point) -> Point {
        match self.axis {
            Axis::X => Point::new(2.0 * self.coord - p.x, p.y),
            Axis::Y => Point::new(p.x, 2.0 * self.coord - p.y),
        }
    }

    /// Point where segment `a..b` crosses the face, if it crosses the face
    /// line strictly between its endpoints and within the face extent.
    pub fn intersect(&self, a: Point, b: Point) -> Option<Point> {
        let (pa, pb) = (self.along(a), self.along(b));
        let denom = pb - pa;
        if denom == 0.0 {
            return None;
        }
        let t = (self.coord - pa) / denom;
        if t <= 0.0 || t >= 1.0 {
            return None;
        }
        let hit = a + (b - a) * t;
        let c = self.across(hit);
        if c < self.lo || c > self.hi {
            return None;
        }
        Some(match self.axis {
            Axis::X => Point::new(self.coord, hit.y),
            Axis::Y => Point::new(hit.x, self.coord),
        })
    }
}
