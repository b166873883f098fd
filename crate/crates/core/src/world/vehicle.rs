use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Vec2};
use crate::policy::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ego,
    Surrounding,
}

/// Kinematic limits of the bicycle model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub wheelbase: f64,
    /// Maximum front-wheel angle in radians.
    pub phi_max: f64,
    pub a_max: f64,
    pub b_max: f64,
    pub v_max: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            phi_max: 35f64.to_radians(),
            a_max: 3.0,
            b_max: 6.0,
            v_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub position: Vec2,
    /// Radians in (-π, π], counterclockwise from +x.
    pub heading: f64,
    /// m/s, never negative.
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub role: Role,
}

impl VehicleState {
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

/// Advances one vehicle by `dt` under `action`.
///
/// Speed integrates the commanded acceleration and is clamped to
/// `[0, v_max]`; the distance covered is the trapezoid of old and new speed.
/// The reference point then moves along the circular arc of curvature
/// `tan(φ) / wheelbase`.
pub fn step_vehicle(state: &VehicleState, action: Action, dt: f64, dynamics: &Dynamics) -> Result<VehicleState> {
    let inputs = [
        state.position.x,
        state.position.y,
        state.heading,
        state.speed,
        action.delta,
        action.tau,
        dt,
    ];
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("step_vehicle(id={}, action={action:?}, dt={dt})", state.id)));
    }
    if dt <= 0.0 {
        return Err(Error::invalid("episode.dt", "time step must be positive"));
    }
    let action = action.clamped();
    let phi = action.delta * dynamics.phi_max;
    let accel = if action.tau >= 0.0 { action.tau * dynamics.a_max } else { action.tau * dynamics.b_max };
    let new_speed = (state.speed + accel * dt).clamp(0.0, dynamics.v_max);
    let ds = 0.5 * (state.speed + new_speed) * dt;
    let dtheta = ds * phi.tan() / dynamics.wheelbase;

    let theta = state.heading;
    let position = if dtheta.abs() < 1e-12 {
        state.position + Vec2::from_angle(theta) * ds
    } else {
        let radius = ds / dtheta;
        state.position
            + Vec2::new(
                radius * ((theta + dtheta).sin() - theta.sin()),
                radius * (theta.cos() - (theta + dtheta).cos()),
            )
    };

    Ok(VehicleState {
        position,
        heading: normalize_angle(theta + dtheta),
        speed: new_speed,
        ..*state
    })
}
