//! Planar geometry shared by the simulator, the expert and the graph encoder.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point or displacement in the world frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Counterclockwise rotation by `theta` radians.
    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn centered(half_extent: f64) -> Self {
        Self { min: Vec2::new(-half_extent, -half_extent), max: Vec2::new(half_extent, half_extent) }
    }

    pub fn inflate(self, margin: f64) -> Self {
        Self {
            min: Vec2::new(self.min.x - margin, self.min.y - margin),
            max: Vec2::new(self.max.x + margin, self.max.y + margin),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Entry and exit times of the ray `origin + t * velocity`, `t >= 0`,
    /// through the box (slab method). `None` when the ray never enters.
    pub fn ray_interval(&self, origin: Vec2, velocity: Vec2) -> Option<(f64, f64)> {
        let mut t_enter = 0.0_f64;
        let mut t_exit = f64::INFINITY;
        for (o, v, lo, hi) in [
            (origin.x, velocity.x, self.min.x, self.max.x),
            (origin.y, velocity.y, self.min.y, self.max.y),
        ] {
            if v.abs() < 1e-12 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let (a, b) = ((lo - o) / v, (hi - o) / v);
                let (near, far) = if a < b { (a, b) } else { (b, a) };
                t_enter = t_enter.max(near);
                t_exit = t_exit.min(far);
            }
        }
        (t_enter <= t_exit).then_some((t_enter, t_exit))
    }
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point.
    pub s: f64,
    /// Unsigned distance to the closest point.
    pub distance: f64,
    /// Positive when the point lies to the left of the direction of travel.
    pub lateral: f64,
}

/// Piecewise-linear path parameterized by arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    /// Builds a polyline; consecutive duplicate points are dropped.
    ///
    /// Panics when fewer than two distinct points remain.
    pub fn new(points: Vec<Vec2>) -> Self {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().map_or(true, |q: &Vec2| q.distance(p) > 1e-9) {
                pts.push(p);
            }
        }
        assert!(pts.len() >= 2, "polyline needs at least two distinct points");
        let mut cumulative = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in pts.windows(2) {
            acc += w[0].distance(w[1]);
            cumulative.push(acc);
        }
        Self { points: pts, cumulative }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment_at(&self, s: f64) -> usize {
        match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        }
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let t = if seg_len > 0.0 { (s - self.cumulative[i]) / seg_len } else { 0.0 };
        self.points[i] + (self.points[i + 1] - self.points[i]) * t
    }

    /// Direction of travel at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_at(s.clamp(0.0, self.length()));
        let d = self.points[i + 1] - self.points[i];
        d.y.atan2(d.x)
    }

    pub fn project(&self, p: Vec2) -> Projection {
        let mut best = Projection { s: 0.0, distance: f64::INFINITY, lateral: 0.0 };
        for (i, w) in self.points.windows(2).enumerate() {
            let d = w[1] - w[0];
            let len_sq = d.norm_sq();
            let t = ((p - w[0]).dot(d) / len_sq).clamp(0.0, 1.0);
            let q = w[0] + d * t;
            let dist = p.distance(q);
            if dist < best.distance {
                let lateral = d.cross(p - w[0]) / len_sq.sqrt();
                best = Projection {
                    s: self.cumulative[i] + t * len_sq.sqrt(),
                    distance: dist,
                    lateral: if dist == 0.0 { 0.0 } else { lateral },
                };
            }
        }
        best
    }

    /// First and last arc lengths (at vertex resolution, refined linearly)
    /// where the path lies inside `region`.
    pub fn interval_inside(&self, region: &Aabb) -> Option<(f64, f64)> {
        let step = 0.05;
        let n = (self.length() / step).ceil() as usize;
        let mut first = None;
        let mut last = None;
        for k in 0..=n {
            let s = (k as f64 * step).min(self.length());
            if region.contains(self.point_at(s)) {
                first.get_or_insert(s);
                last = Some(s);
            }
        }
        first.zip(last)
    }

    /// Smallest distance between sample points of two paths, skipping
    /// samples outside `region`.
    pub fn min_distance_within(&self, other: &Polyline, region: &Aabb, step: f64) -> f64 {
        let sample = |p: &Polyline| -> Vec<Vec2> {
            let n = (p.length() / step).ceil() as usize;
            (0..=n)
                .map(|k| p.point_at(k as f64 * step))
                .filter(|q| region.contains(*q))
                .collect()
        };
        let a = sample(self);
        let b = sample(other);
        let mut best = f64::INFINITY;
        for p in &a {
            for q in &b {
                best = best.min(p.distance(*q));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5 - 4.0 * PI) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn polyline_projection_and_lateral_sign() {
        let line = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]);
        let p = line.project(Vec2::new(3.0, 0.5));
        assert!((p.s - 3.0).abs() < 1e-12);
        assert!((p.distance - 0.5).abs() < 1e-12);
        assert!(p.lateral > 0.0);
        assert!(line.project(Vec2::new(3.0, -0.5)).lateral < 0.0);
        assert_eq!(line.point_at(20.0), Vec2::new(10.0, 0.0));
        assert_eq!(line.point_at(2.5), Vec2::new(2.5, 0.0));
    }

    #[test]
    fn ray_box_interval() {
        let b = Aabb::centered(2.0);
        let (t0, t1) = b.ray_interval(Vec2::new(-10.0, 0.0), Vec2::new(2.0, 0.0)).unwrap();
        assert!((t0 - 4.0).abs() < 1e-12 && (t1 - 6.0).abs() < 1e-12);
        assert!(b.ray_interval(Vec2::new(-10.0, 5.0), Vec2::new(2.0, 0.0)).is_none());
        assert!(b.ray_interval(Vec2::new(10.0, 0.0), Vec2::new(2.0, 0.0)).is_none());
        let (t0, _) = b.ray_interval(Vec2::ZERO, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(t0, 0.0);
    }
}
