//! Scripted demonstrator: pure-pursuit steering with time-to-collision gap
//! acceptance at the junction.

use serde::{Deserialize, Serialize};

use crate::geometry::{Polyline, Vec2};
use crate::policy::Action;
use crate::world::{pure_pursuit, yielding_speed, Dynamics, TrackingParams, VehicleState, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertParams {
    pub lookahead_m: f64,
    pub ttc_threshold_s: f64,
    pub creep_speed: f64,
    pub v_pref: f64,
    /// Inflation of the junction box forming the yield zone.
    pub yield_margin_m: f64,
    /// Extra time kept clear before and after the ego's zone occupancy.
    pub gap_buffer_s: f64,
    /// Acceleration assumed when predicting the ego's own crossing.
    pub planning_accel: f64,
    /// Comfortable deceleration used to stop before the zone.
    pub stop_decel: f64,
    pub speed_gain: f64,
    pub capture_distance_m: f64,
    /// Separation below which two vehicles are treated as colliding by the
    /// pairwise time-to-collision check.
    pub collision_radius_m: f64,
    pub following_gap_m: f64,
    pub standstill_gap_m: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            lookahead_m: 4.0,
            ttc_threshold_s: 2.5,
            creep_speed: 1.5,
            v_pref: 6.0,
            yield_margin_m: 1.0,
            gap_buffer_s: 1.0,
            planning_accel: 2.0,
            stop_decel: 3.0,
            speed_gain: 1.0,
            capture_distance_m: 5.0,
            collision_radius_m: 3.0,
            following_gap_m: 12.0,
            standstill_gap_m: 6.0,
        }
    }
}

impl ExpertParams {
    pub fn validate(&self) -> crate::Result<()> {
        let fields = [
            ("expert.lookahead_m", self.lookahead_m),
            ("expert.ttc_threshold_s", self.ttc_threshold_s),
            ("expert.creep_speed", self.creep_speed),
            ("expert.v_pref", self.v_pref),
            ("expert.yield_margin_m", self.yield_margin_m),
            ("expert.planning_accel", self.planning_accel),
            ("expert.stop_decel", self.stop_decel),
            ("expert.speed_gain", self.speed_gain),
            ("expert.capture_distance_m", self.capture_distance_m),
            ("expert.collision_radius_m", self.collision_radius_m),
            ("expert.following_gap_m", self.following_gap_m),
            ("expert.standstill_gap_m", self.standstill_gap_m),
        ];
        for (key, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(crate::Error::invalid(key, "must be positive"));
            }
        }
        if !(self.gap_buffer_s.is_finite() && self.gap_buffer_s >= 0.0) {
            return Err(crate::Error::invalid("expert.gap_buffer_s", "must be non-negative"));
        }
        Ok(())
    }
}

/// Time until two discs of combined radius `radius` moving at constant
/// velocity first touch: the smallest `t >= 0` with `|dp + dv t| = radius`.
/// Zero when already overlapping, `None` when they never meet.
pub fn time_to_collision(dp: Vec2, dv: Vec2, radius: f64) -> Option<f64> {
    let c = dp.norm_sq() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let a = dv.norm_sq();
    let b = 2.0 * dp.dot(dv);
    if a < 1e-12 || b >= 0.0 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    // Numerically stable smaller root of a t² + b t + c with b < 0.
    let q = -0.5 * (b - disc.sqrt());
    Some(c / q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertDecision {
    pub action: Action,
    /// The ego is too far from its reference path to track it.
    pub off_path: bool,
    pub yielding: bool,
}

/// Time to cover `distance` starting at `speed`, accelerating at `accel`
/// up to `cruise`.
fn travel_time(distance: f64, speed: f64, accel: f64, cruise: f64) -> f64 {
    if distance <= 0.0 {
        return 0.0;
    }
    let v0 = speed.min(cruise);
    let ramp = (cruise * cruise - v0 * v0) / (2.0 * accel);
    if distance <= ramp {
        ((v0 * v0 + 2.0 * accel * distance).sqrt() - v0) / accel
    } else {
        (cruise - v0) / accel + (distance - ramp) / cruise
    }
}

/// Interval during which `agent`, moving at constant velocity, overlaps the
/// yield zone (inflated by its own half-diagonal).
fn agent_occupancy(agent: &VehicleState, zone: &crate::geometry::Aabb) -> Option<(f64, f64)> {
    let half_diag = 0.5 * agent.length.hypot(agent.width);
    let zone = zone.inflate(half_diag);
    if agent.speed < 0.1 {
        return zone.contains(agent.position).then_some((0.0, f64::INFINITY));
    }
    zone.ray_interval(agent.position, agent.velocity())
}

/// One expert control step for the ego following `path`.
pub fn expert_control(world: &WorldState, path: &Polyline, params: &ExpertParams, dynamics: &Dynamics) -> ExpertDecision {
    let ego = &world.ego;
    let proj = path.project(ego.position);
    if proj.distance > params.capture_distance_m {
        return ExpertDecision { action: Action::ZERO, off_path: true, yielding: false };
    }
    let steer = pure_pursuit(ego, path, params.lookahead_m, dynamics).delta;

    let zone = world.layout.junction_box().inflate(params.yield_margin_m);
    let front = proj.s + 0.5 * ego.length;
    let rear = proj.s - 0.5 * ego.length;
    let span = path.interval_inside(&zone);
    let committed = span.is_some_and(|(zone_in, zone_out)| front >= zone_in && rear <= zone_out);
    let mut target = params.v_pref;
    let mut yielding = false;

    if let Some((zone_in, zone_out)) = span.filter(|(zone_in, _)| front < *zone_in) {
        let accel = params.planning_accel;
        let t_in = travel_time(zone_in - front, ego.speed, accel, params.v_pref);
        let t_out = travel_time(zone_out - rear, ego.speed, accel, params.v_pref);
        let (lo, hi) = (t_in - params.gap_buffer_s, t_out + params.gap_buffer_s);
        let blocked = world.surrounding.iter().any(|agent| match agent_occupancy(agent, &zone) {
            Some((a_in, a_out)) => a_in < params.ttc_threshold_s || (a_in < hi && a_out > lo),
            None => false,
        });
        if blocked {
            yielding = true;
            let to_line = (zone_in - front - 0.5).max(0.0);
            let stop_profile = (2.0 * params.stop_decel * to_line).sqrt();
            target = if to_line < 0.3 { 0.0 } else { params.creep_speed.min(stop_profile) };
        }
    }

    let tracking = TrackingParams {
        following_gap: params.following_gap_m,
        standstill_gap: params.standstill_gap_m,
        ..TrackingParams::default()
    };
    for agent in &world.surrounding {
        if let Some(cap) = yielding_speed(ego, agent, &tracking) {
            target = target.min(cap);
        }
        let dp = agent.position - ego.position;
        if committed || dp.dot(ego.forward()) <= 0.0 {
            continue;
        }
        if let Some(t) = time_to_collision(dp, agent.velocity() - ego.velocity(), params.collision_radius_m) {
            if t < params.ttc_threshold_s {
                target = 0.0;
            }
        }
    }

    let tau = (params.speed_gain * (target - ego.speed)).clamp(-1.0, 1.0);
    ExpertDecision { action: Action::new(steer, tau).clamped(), off_path: false, yielding }
}
