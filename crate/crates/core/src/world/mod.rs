//! Deterministic 2D intersection world.

mod collision;
mod layout;
mod outcome;
mod scenario;
mod sim;
mod traffic;
mod vehicle;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

pub use collision::{corners, detect_collision};
pub use layout::{Arm, IntersectionLayout, Route};
pub use outcome::{check_outcome, EpisodeOutcome, OutcomeLimits, OutcomeMonitor, OutcomeTag, Status};
pub use scenario::{
    conflict_clearance, spawn_scenario, training_density, EpisodeConfig, LayoutConfig, Scenario, ScenarioConfig,
    TrafficConfig, VehicleConfig, MAX_DENSITY,
};
pub use sim::{write_trajectory_csv, Simulation, TrajectoryRow};
pub use traffic::{
    following_speed, pure_pursuit, surrounding_control, yielding_speed, AgentPlan, Pursuit, TrackingParams,
};
pub use vehicle::{step_vehicle, Dynamics, Role, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub target: Vec2,
    pub success_radius: f64,
}

/// Snapshot of the world at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub time: f64,
    pub dt: f64,
    pub ego: VehicleState,
    /// Ordered by ascending id.
    pub surrounding: Vec<VehicleState>,
    pub layout: Arc<IntersectionLayout>,
}

impl WorldState {
    /// Ego first, then surrounding vehicles in id order.
    pub fn vehicles(&self) -> impl Iterator<Item = &VehicleState> {
        std::iter::once(&self.ego).chain(self.surrounding.iter())
    }

    pub fn vehicle_count(&self) -> usize {
        1 + self.surrounding.len()
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.vehicles().map(|v| v.position).collect()
    }
}
