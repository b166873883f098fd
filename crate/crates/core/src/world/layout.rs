//! Four-arm crossing with one inbound and one outbound lane per arm,
//! right-hand traffic. Arms are generated from the south arm by rotation.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Polyline, Vec2};
use crate::policy::Command;

/// Approach arm, named by the side of the junction the vehicle arrives from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    South,
    East,
    North,
    West,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::South, Arm::East, Arm::North, Arm::West];

    fn quarter_turns(self) -> u8 {
        match self {
            Arm::South => 0,
            Arm::East => 1,
            Arm::North => 2,
            Arm::West => 3,
        }
    }
}

/// A reference path: which arm it starts on and which way it turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Route {
    pub arm: Arm,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionLayout {
    pub lane_width: f64,
    pub arm_length: f64,
    paths: BTreeMap<Route, Arc<Polyline>>,
}

const ARC_STEP: f64 = 0.5;

fn arc(center: Vec2, radius: f64, from: f64, to: f64) -> Vec<Vec2> {
    let n = ((radius * (to - from).abs()) / ARC_STEP).ceil().max(2.0) as usize;
    (0..=n)
        .map(|i| {
            let a = from + (to - from) * i as f64 / n as f64;
            center + Vec2::new(radius * a.cos(), radius * a.sin())
        })
        .collect()
}

impl IntersectionLayout {
    pub fn new(lane_width: f64, arm_length: f64) -> Self {
        let mut layout = Self { lane_width, arm_length, paths: BTreeMap::new() };
        for arm in Arm::ALL {
            for command in Command::ALL {
                let south = layout.south_path(command);
                let theta = arm.quarter_turns() as f64 * FRAC_PI_2;
                let rotated: Vec<Vec2> = south.into_iter().map(|p| p.rotate(theta)).collect();
                layout.paths.insert(Route { arm, command }, Arc::new(Polyline::new(rotated)));
            }
        }
        layout
    }

    /// Half-size of the square junction box.
    pub fn junction_half(&self) -> f64 {
        2.0 * self.lane_width
    }

    pub fn junction_box(&self) -> Aabb {
        Aabb::centered(self.junction_half())
    }

    /// Length of the straight approach segment before the junction box.
    pub fn approach_length(&self) -> f64 {
        self.arm_length - self.junction_half()
    }

    fn south_path(&self, command: Command) -> Vec<Vec2> {
        let w = self.lane_width;
        let b = self.junction_half();
        let l = self.arm_length;
        let lane = w / 2.0;
        let mut pts = vec![Vec2::new(lane, -l), Vec2::new(lane, -b)];
        match command {
            Command::Forward => pts.push(Vec2::new(lane, l)),
            Command::TurnRight => {
                pts.extend(arc(Vec2::new(b, -b), b - lane, PI, FRAC_PI_2));
                pts.push(Vec2::new(l, -lane));
            }
            Command::TurnLeft => {
                pts.extend(arc(Vec2::new(-b, -b), b + lane, 0.0, FRAC_PI_2));
                pts.push(Vec2::new(-l, lane));
            }
        }
        pts
    }

    pub fn path(&self, route: Route) -> Arc<Polyline> {
        Arc::clone(&self.paths[&route])
    }

    pub fn routes(&self) -> impl Iterator<Item = Route> + '_ {
        self.paths.keys().copied()
    }

    /// Arc length along a route where its approach segment meets the box.
    pub fn entry_arc_length(&self) -> f64 {
        self.approach_length()
    }

    /// Arc length where `route` leaves the junction box.
    pub fn exit_arc_length(&self, route: Route) -> f64 {
        let path = self.path(route);
        path.interval_inside(&self.junction_box()).map(|(_, hi)| hi).unwrap_or(path.length())
    }

    /// Whether two routes pass within `clearance` of each other inside the
    /// (slightly inflated) junction box.
    pub fn routes_conflict(&self, a: Route, b: Route, clearance: f64) -> bool {
        if a.arm == b.arm {
            return true;
        }
        let region = self.junction_box().inflate(self.lane_width);
        self.path(a).min_distance_within(&self.path(b), &region, 0.25) < clearance
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_are_connected_and_monotone() {
        let layout = IntersectionLayout::new(3.5, 50.0);
        for route in layout.routes() {
            let path = layout.path(route);
            for w in path.points().windows(2) {
                assert!(w[0].distance(w[1]) <= 20.0 * layout.arm_length);
                assert!(w[0].distance(w[1]) > 0.0);
            }
            let start = path.point_at(0.0);
            assert!((start.norm() - (50.0f64.powi(2) + 1.75f64.powi(2)).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn south_turns_end_on_correct_lanes() {
        let layout = IntersectionLayout::new(3.5, 50.0);
        let right = layout.path(Route { arm: Arm::South, command: Command::TurnRight });
        let end = right.point_at(right.length());
        assert!((end.x - 50.0).abs() < 1e-9 && (end.y + 1.75).abs() < 1e-9);
        let left = layout.path(Route { arm: Arm::South, command: Command::TurnLeft });
        let end = left.point_at(left.length());
        assert!((end.x + 50.0).abs() < 1e-9 && (end.y - 1.75).abs() < 1e-9);
    }

    #[test]
    fn east_arm_is_rotated_south() {
        let layout = IntersectionLayout::new(3.5, 50.0);
        let east = layout.path(Route { arm: Arm::East, command: Command::Forward });
        let start = east.point_at(0.0);
        assert!((start.x - 50.0).abs() < 1e-9 && (start.y - 1.75).abs() < 1e-9);
        assert!((east.heading_at(1.0).abs() - PI).abs() < 1e-9);
    }

    #[test]
    fn conflict_classification() {
        let layout = IntersectionLayout::new(3.5, 50.0);
        let ego = Route { arm: Arm::South, command: Command::Forward };
        let cross = Route { arm: Arm::West, command: Command::Forward };
        let oncoming = Route { arm: Arm::North, command: Command::Forward };
        assert!(layout.routes_conflict(ego, cross, 3.0));
        assert!(!layout.routes_conflict(ego, oncoming, 3.0));
    }
}
