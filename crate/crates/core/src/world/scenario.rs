//! Seeded scenario generation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polyline;
use crate::policy::Command;

use super::layout::{Arm, IntersectionLayout, Route};
use super::traffic::{AgentPlan, TrackingParams};
use super::{Dynamics, GoalSpec, Role, VehicleState, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    pub lane_width: f64,
    pub arm_length: f64,
    /// Distance past the junction exit, along the ego route, of the goal.
    pub goal_offset_m: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self { lane_width: 3.5, arm_length: 50.0, goal_offset_m: 15.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub dt: f64,
    pub timeout_s: f64,
    pub success_radius_m: f64,
    /// How long the ego must recede outside the junction before the goal
    /// counts as missed.
    pub recede_s: f64,
    pub ego_initial_speed: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { dt: 0.1, timeout_s: 30.0, success_radius_m: 2.0, recede_s: 2.0, ego_initial_speed: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    /// Number of surrounding vehicles; unset means the per-command training
    /// density (Forward 5, TurnLeft 3, TurnRight 3).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<usize>,
    /// Fixed ego command; unset means drawn from the seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub min_separation_m: f64,
    pub cruise_speed_range: [f64; 2],
    /// Spawn distances before the junction box for surrounding vehicles.
    pub agent_spawn_intervals: Vec<[f64; 2]>,
    /// Spawn distances before the junction box for the ego.
    pub ego_spawn_intervals: Vec<[f64; 2]>,
    /// Fraction of agents placed on routes that never meet the ego route.
    pub non_conflicting_fraction: f64,
    /// Fraction of agents using the small (bicycle-like) footprint.
    pub small_agent_fraction: f64,
    /// Let surrounding vehicles slow down for an ego directly ahead.
    pub follow_ego: bool,
    pub lookahead_m: f64,
    pub speed_gain: f64,
    pub capture_distance_m: f64,
    pub following_gap_m: f64,
    pub standstill_gap_m: f64,
    pub max_spawn_retries: usize,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            density: None,
            command: None,
            min_separation_m: 8.0,
            cruise_speed_range: [4.0, 7.0],
            agent_spawn_intervals: vec![[4.0, 8.0], [12.0, 16.0], [20.0, 24.0], [28.0, 32.0], [36.0, 40.0]],
            ego_spawn_intervals: vec![[10.0, 13.0], [16.0, 19.0]],
            non_conflicting_fraction: 0.0,
            small_agent_fraction: 0.0,
            follow_ego: false,
            lookahead_m: 4.0,
            speed_gain: 1.0,
            capture_distance_m: 5.0,
            following_gap_m: 10.0,
            standstill_gap_m: 5.0,
            max_spawn_retries: 200,
        }
    }
}

impl TrafficConfig {
    pub fn tracking(&self) -> TrackingParams {
        TrackingParams {
            lookahead: self.lookahead_m,
            speed_gain: self.speed_gain,
            capture_distance: self.capture_distance_m,
            following_gap: self.following_gap_m,
            standstill_gap: self.standstill_gap_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleConfig {
    pub wheelbase: f64,
    pub phi_max_deg: f64,
    pub a_max: f64,
    pub b_max: f64,
    pub v_max: f64,
    pub length: f64,
    pub width: f64,
    pub small_length: f64,
    pub small_width: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            phi_max_deg: 35.0,
            a_max: 3.0,
            b_max: 6.0,
            v_max: 10.0,
            length: 4.0,
            width: 2.0,
            small_length: 1.8,
            small_width: 0.6,
        }
    }
}

impl VehicleConfig {
    pub fn dynamics(&self) -> Dynamics {
        Dynamics {
            wheelbase: self.wheelbase,
            phi_max: self.phi_max_deg.to_radians(),
            a_max: self.a_max,
            b_max: self.b_max,
            v_max: self.v_max,
        }
    }
}

/// Everything needed to generate and simulate one episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub layout: LayoutConfig,
    pub episode: EpisodeConfig,
    pub traffic: TrafficConfig,
    pub vehicle: VehicleConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layout.lane_width", self.layout.lane_width),
            ("layout.arm_length", self.layout.arm_length),
            ("episode.dt", self.episode.dt),
            ("episode.timeout_s", self.episode.timeout_s),
            ("episode.success_radius_m", self.episode.success_radius_m),
            ("vehicle.wheelbase", self.vehicle.wheelbase),
            ("vehicle.phi_max_deg", self.vehicle.phi_max_deg),
            ("vehicle.a_max", self.vehicle.a_max),
            ("vehicle.b_max", self.vehicle.b_max),
            ("vehicle.v_max", self.vehicle.v_max),
            ("vehicle.length", self.vehicle.length),
            ("vehicle.width", self.vehicle.width),
            ("vehicle.small_length", self.vehicle.small_length),
            ("vehicle.small_width", self.vehicle.small_width),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(key, format!("must be positive and finite, got {v}")));
            }
        }
        if self.layout.arm_length <= 2.0 * self.layout.junction_half() {
            return Err(Error::invalid("layout.arm_length", "arms must extend beyond the junction box"));
        }
        let [lo, hi] = self.traffic.cruise_speed_range;
        if !(lo > 0.0 && lo <= hi && hi <= self.vehicle.v_max) {
            return Err(Error::invalid("traffic.cruise_speed_range", "need 0 < lo <= hi <= v_max"));
        }
        let approach = self.layout.arm_length - self.layout.junction_half();
        for (key, intervals) in
            [("traffic.agent_spawn_intervals", &self.traffic.agent_spawn_intervals), ("traffic.ego_spawn_intervals", &self.traffic.ego_spawn_intervals)]
        {
            if intervals.is_empty() {
                return Err(Error::invalid(key, "at least one interval required"));
            }
            for &[a, b] in intervals {
                if !(a >= 0.0 && a <= b && b <= approach) {
                    return Err(Error::invalid(key, format!("interval [{a}, {b}] must lie on the approach lane [0, {approach}]")));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.traffic.non_conflicting_fraction) {
            return Err(Error::invalid("traffic.non_conflicting_fraction", "must be within [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.traffic.small_agent_fraction) {
            return Err(Error::invalid("traffic.small_agent_fraction", "must be within [0, 1]"));
        }
        if let Some(d) = self.traffic.density {
            if d > MAX_DENSITY {
                return Err(Error::invalid("traffic.density", format!("at most {MAX_DENSITY} surrounding vehicles")));
            }
        }
        Ok(())
    }
}

impl LayoutConfig {
    pub fn junction_half(&self) -> f64 {
        2.0 * self.lane_width
    }
}

pub const MAX_DENSITY: usize = 12;

/// Two routes conflict when they pass closer than this inside the junction.
pub fn conflict_clearance(vehicle: &VehicleConfig) -> f64 {
    vehicle.width + 0.5
}

/// Surrounding-vehicle count used for training episodes of each command.
pub fn training_density(command: Command) -> usize {
    match command {
        Command::Forward => 5,
        Command::TurnLeft | Command::TurnRight => 3,
    }
}

/// A freshly spawned episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub world: WorldState,
    pub goal: GoalSpec,
    pub command: Command,
    pub ego_route: Route,
    pub ego_path: Arc<Polyline>,
    pub plans: Vec<AgentPlan>,
}

fn sample_intervals(rng: &mut ChaCha8Rng, intervals: &[[f64; 2]]) -> f64 {
    let total: f64 = intervals.iter().map(|[a, b]| b - a).sum();
    if total <= 0.0 {
        return intervals[rng.gen_range(0..intervals.len())][0];
    }
    let mut u = rng.gen::<f64>() * total;
    for &[a, b] in intervals {
        if u <= b - a {
            return a + u;
        }
        u -= b - a;
    }
    intervals.last().unwrap()[1]
}

/// Generates a scenario; a pure function of `(config, seed)`.
pub fn spawn_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let command = match config.traffic.command {
        Some(c) => c,
        None => Command::ALL[rng.gen_range(0..3)],
    };
    let density = config.traffic.density.unwrap_or_else(|| training_density(command));

    let layout = Arc::new(IntersectionLayout::new(config.layout.lane_width, config.layout.arm_length));
    let approach = layout.approach_length();
    let ego_route = Route { arm: Arm::South, command };
    let ego_path = layout.path(ego_route);

    let ego_s = approach - sample_intervals(&mut rng, &config.traffic.ego_spawn_intervals);
    let ego = VehicleState {
        id: 0,
        position: ego_path.point_at(ego_s),
        heading: ego_path.heading_at(ego_s),
        speed: config.episode.ego_initial_speed.min(config.vehicle.v_max),
        length: config.vehicle.length,
        width: config.vehicle.width,
        role: Role::Ego,
    };
    let goal = GoalSpec {
        target: ego_path.point_at(layout.exit_arc_length(ego_route) + config.layout.goal_offset_m),
        success_radius: config.episode.success_radius_m,
    };

    let clearance = conflict_clearance(&config.vehicle);
    let (conflicting, free): (Vec<Route>, Vec<Route>) = layout
        .routes()
        .filter(|r| r.arm != Arm::South)
        .partition(|r| layout.routes_conflict(ego_route, *r, clearance));
    let any: Vec<Route> = conflicting.iter().chain(&free).copied().collect();

    let mut surrounding: Vec<VehicleState> = Vec::with_capacity(density);
    let mut plans = Vec::with_capacity(density);
    for i in 0..density {
        let mut placed = false;
        let retries = config.traffic.max_spawn_retries.max(1);
        for attempt in 0..retries {
            // Crowded conflicting lanes fall back to any inbound lane.
            let pool = if attempt >= retries / 2 {
                if config.traffic.non_conflicting_fraction >= 1.0 && !free.is_empty() {
                    &free
                } else {
                    &any
                }
            } else if !free.is_empty() && rng.gen::<f64>() < config.traffic.non_conflicting_fraction {
                &free
            } else {
                &conflicting
            };
            let route = pool[rng.gen_range(0..pool.len())];
            let path = layout.path(route);
            let s = approach - sample_intervals(&mut rng, &config.traffic.agent_spawn_intervals);
            let position = path.point_at(s);
            let separated = std::iter::once(&ego)
                .chain(surrounding.iter())
                .all(|v| v.position.distance(position) >= config.traffic.min_separation_m);
            let small = rng.gen::<f64>() < config.traffic.small_agent_fraction;
            let [lo, hi] = config.traffic.cruise_speed_range;
            let cruise = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            if !separated {
                continue;
            }
            let (length, width) = if small {
                (config.vehicle.small_length, config.vehicle.small_width)
            } else {
                (config.vehicle.length, config.vehicle.width)
            };
            surrounding.push(VehicleState {
                id: (i + 1) as u32,
                position,
                heading: path.heading_at(s),
                speed: cruise,
                length,
                width,
                role: Role::Surrounding,
            });
            plans.push(AgentPlan { path, cruise_speed: cruise, off_path: false });
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Scenario(format!(
                "could not place vehicle {} of {density} with minimum separation {} m after {} attempts (seed {seed})",
                i + 1,
                config.traffic.min_separation_m,
                config.traffic.max_spawn_retries
            )));
        }
    }

    Ok(Scenario {
        seed,
        world: WorldState { time: 0.0, dt: config.episode.dt, ego, surrounding, layout },
        goal,
        command,
        ego_route,
        ego_path,
        plans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(density: usize) -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.traffic.density = Some(density);
        c
    }

    #[test]
    fn easy_density_has_four_vehicles() {
        let s = spawn_scenario(&config(3), 7).unwrap();
        assert_eq!(s.world.vehicle_count(), 4);
    }

    #[test]
    fn spawning_is_deterministic() {
        let a = spawn_scenario(&config(5), 99).unwrap();
        let b = spawn_scenario(&config(5), 99).unwrap();
        assert_eq!(a, b);
        let c = spawn_scenario(&config(5), 100).unwrap();
        assert_ne!(a.world, c.world);
    }

    #[test]
    fn training_density_follows_command() {
        let mut c = ScenarioConfig::default();
        c.traffic.command = Some(Command::Forward);
        assert_eq!(spawn_scenario(&c, 1).unwrap().world.surrounding.len(), 5);
        c.traffic.command = Some(Command::TurnLeft);
        assert_eq!(spawn_scenario(&c, 1).unwrap().world.surrounding.len(), 3);
    }

    #[test]
    fn unsatisfiable_separation_is_an_error() {
        let mut c = config(7);
        c.traffic.min_separation_m = 200.0;
        c.traffic.max_spawn_retries = 10;
        assert!(matches!(spawn_scenario(&c, 3), Err(Error::Scenario(_))));
    }

    #[test]
    fn thousand_seeds_respect_min_separation() {
        let c = config(7);
        for seed in 0..1000 {
            let s = spawn_scenario(&c, seed).unwrap();
            let all = s.world.vehicles().collect::<Vec<_>>();
            for i in 0..all.len() {
                for j in i + 1..all.len() {
                    assert!(all[i].position.distance(all[j].position) >= c.traffic.min_separation_m);
                }
            }
        }
    }

    #[test]
    fn non_conflicting_agents_are_used_when_requested() {
        let mut c = config(7);
        c.traffic.non_conflicting_fraction = 1.0;
        c.traffic.command = Some(Command::Forward);
        let s = spawn_scenario(&c, 11).unwrap();
        let layout = &s.world.layout;
        for plan in &s.plans {
            let route = layout.routes().find(|r| layout.path(*r) == plan.path).unwrap();
            assert!(!layout.routes_conflict(s.ego_route, route, conflict_clearance(&c.vehicle)));
        }
    }
}
