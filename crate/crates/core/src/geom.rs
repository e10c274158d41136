//! Small 2D helpers shared across the pipeline: points, convex quads and
//! circular (angular) statistics.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// A point (or vector) in scene/pattern pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl std::ops::Add for Point {
    type Output = Point;

    fn add(self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;

    fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn scale(self, factor: f64) -> Point {
        Point::new(self.x * factor, self.y * factor)
    }

    /// Rotation about the origin by `angle` radians.
    pub fn rotate(self, angle: f64) -> Point {
        let (sin, cos) = angle.sin_cos();
        Point::new(self.x * cos - self.y * sin, self.x * sin + self.y * cos)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A convex quadrilateral in scene pixels, e.g. a pattern rectangle mapped
/// into the scene by a similarity transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quad(pub [Point; 4]);

impl Quad {
    pub fn corners(&self) -> &[Point; 4] {
        &self.0
    }

    /// Boundary-inclusive point-in-convex-polygon test. Orientation of the
    /// corner ordering does not matter: the point is inside iff the cross
    /// products against all four edges share a sign (zeros allowed).
    pub fn contains(&self, p: Point) -> bool {
        let mut positive = false;
        let mut negative = false;
        for i in 0..4 {
            let a = self.0[i];
            let b = self.0[(i + 1) % 4];
            let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            if cross > 0.0 {
                positive = true;
            } else if cross < 0.0 {
                negative = true;
            }
        }
        !(positive && negative)
    }

    /// The quad scaled by `factor` about `center` (corner-wise).
    pub fn scaled_about(&self, center: Point, factor: f64) -> Quad {
        Quad(self.0.map(|c| center + (c - center).scale(factor)))
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bbox(&self) -> (Point, Point) {
        let xs = self.0.map(|c| c.x);
        let ys = self.0.map(|c| c.y);
        let min = Point::new(xs.iter().copied().fold(f64::INFINITY, f64::min), ys.iter().copied().fold(f64::INFINITY, f64::min));
        let max = Point::new(xs.iter().copied().fold(f64::NEG_INFINITY, f64::max), ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        (min, max)
    }
}

/// Normalizes an angle in radians into `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r == TAU {
        0.0
    } else {
        r
    }
}

/// Circular mean of angles in radians: the direction of the resultant
/// vector, normalized into `[0, 2π)`. Undefined (returns 0) when the
/// resultant vanishes.
pub fn circular_mean(angles: &[f64]) -> f64 {
    let mut sin_sum = 0.0;
    let mut cos_sum = 0.0;
    for &a in angles {
        sin_sum += a.sin();
        cos_sum += a.cos();
    }
    if sin_sum == 0.0 && cos_sum == 0.0 {
        return 0.0;
    }
    normalize_angle(sin_sum.atan2(cos_sum))
}

/// Circular difference between two angles in degrees over a 360° circle,
/// always in `[0, 180]`.
pub fn circular_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}
