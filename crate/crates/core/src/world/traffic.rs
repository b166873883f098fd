//! Path tracking shared by scripted traffic and the expert.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{Polyline, Vec2};
use crate::policy::Action;

use super::{Dynamics, VehicleState};

/// Geometry of one pure-pursuit evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pursuit {
    /// Lookahead point on the path.
    pub target: Vec2,
    /// Angle from the heading to the lookahead point.
    pub alpha: f64,
    /// Straight-line distance to the lookahead point.
    pub distance: f64,
    pub curvature: f64,
    /// Normalized steering command.
    pub delta: f64,
}

pub fn pure_pursuit(vehicle: &VehicleState, path: &Polyline, lookahead: f64, dynamics: &Dynamics) -> Pursuit {
    let proj = path.project(vehicle.position);
    let target = path.point_at(proj.s + lookahead);
    let to_target = target - vehicle.position;
    let distance = to_target.norm();
    if distance < 1e-9 {
        return Pursuit { target, alpha: 0.0, distance, curvature: 0.0, delta: 0.0 };
    }
    let alpha = crate::geometry::normalize_angle(to_target.y.atan2(to_target.x) - vehicle.heading);
    let curvature = 2.0 * alpha.sin() / distance;
    let phi = (curvature * dynamics.wheelbase).atan();
    Pursuit { target, alpha, distance, curvature, delta: (phi / dynamics.phi_max).clamp(-1.0, 1.0) }
}

/// Per-agent driving plan.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlan {
    pub path: Arc<Polyline>,
    pub cruise_speed: f64,
    pub off_path: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingParams {
    pub lookahead: f64,
    pub speed_gain: f64,
    pub capture_distance: f64,
    /// Leader within this distance ahead slows the follower.
    pub following_gap: f64,
    /// Standstill distance behind a leader.
    pub standstill_gap: f64,
}

impl Default for TrackingParams {
    fn default() -> Self {
        Self { lookahead: 4.0, speed_gain: 1.0, capture_distance: 5.0, following_gap: 10.0, standstill_gap: 5.0 }
    }
}

/// Speed cap imposed by `leader` if it is directly ahead of `follower` and
/// travelling the same way. Crossing traffic is ignored, which keeps two
/// vehicles meeting inside the junction from blocking each other forever.
pub fn following_speed(follower: &VehicleState, leader: &VehicleState, params: &TrackingParams) -> Option<f64> {
    if leader.forward().dot(follower.forward()) < FRAC_1_SQRT_2 {
        return None;
    }
    let rel = leader.position - follower.position;
    let fwd = follower.forward();
    let along = rel.dot(fwd);
    let lateral = rel.dot(fwd.perp()).abs();
    if along <= 0.0 || along >= params.following_gap || lateral >= 0.5 * (follower.width + leader.width) + 0.5 {
        return None;
    }
    let span = (params.following_gap - params.standstill_gap).max(1e-6);
    let scale = ((along - params.standstill_gap) / span).clamp(0.0, 1.0);
    Some(leader.speed.max(0.0) * scale)
}

/// [`following_speed`] with merges resolved: when each vehicle sees the
/// other as its leader, the lower id keeps going.
pub fn yielding_speed(follower: &VehicleState, leader: &VehicleState, params: &TrackingParams) -> Option<f64> {
    let cap = following_speed(follower, leader, params)?;
    if follower.id < leader.id && following_speed(leader, follower, params).is_some() {
        return None;
    }
    Some(cap)
}

/// Control for a scripted surrounding vehicle: pure pursuit on its path and
/// proportional speed tracking toward its cruise speed, slowed only by a
/// leader directly ahead among `leaders`.
///
/// Returns zero action and flags the plan when the vehicle is farther than
/// the capture distance from its path.
pub fn surrounding_control<'a>(
    vehicle: &VehicleState,
    plan: &mut AgentPlan,
    params: &TrackingParams,
    dynamics: &Dynamics,
    leaders: impl IntoIterator<Item = &'a VehicleState>,
) -> Action {
    if plan.off_path || plan.path.project(vehicle.position).distance > params.capture_distance {
        plan.off_path = true;
        return Action::ZERO;
    }
    let pursuit = pure_pursuit(vehicle, &plan.path, params.lookahead, dynamics);
    let mut target = plan.cruise_speed;
    for leader in leaders {
        if leader.id == vehicle.id {
            continue;
        }
        if let Some(cap) = yielding_speed(vehicle, leader, params) {
            target = target.min(cap);
        }
    }
    let tau = (params.speed_gain * (target - vehicle.speed)).clamp(-1.0, 1.0);
    Action::new(pursuit.delta, tau)
}
