//! Oriented-rectangle overlap by the separating axis theorem.

use crate::geometry::Vec2;

use super::VehicleState;

/// The four corners of a vehicle footprint.
pub fn corners(v: &VehicleState) -> [Vec2; 4] {
    let f = Vec2::from_angle(v.heading) * (v.length / 2.0);
    let s = Vec2::from_angle(v.heading).perp() * (v.width / 2.0);
    let c = v.position;
    [c + f + s, c + f - s, c - f - s, c - f + s]
}

fn project(points: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(axis);
        (lo.min(d), hi.max(d))
    })
}

/// True iff the two footprints overlap (touching edges count as overlap).
pub fn detect_collision(a: &VehicleState, b: &VehicleState) -> bool {
    let ca = corners(a);
    let cb = corners(b);
    let axes = [
        Vec2::from_angle(a.heading),
        Vec2::from_angle(a.heading).perp(),
        Vec2::from_angle(b.heading),
        Vec2::from_angle(b.heading).perp(),
    ];
    axes.iter().all(|&axis| {
        let (amin, amax) = project(&ca, axis);
        let (bmin, bmax) = project(&cb, axis);
        amax >= bmin && bmax >= amin
    })
}
