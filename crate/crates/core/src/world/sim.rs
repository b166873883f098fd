//! Episode stepping and trajectory dumps.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::policy::Action;

use super::{
    step_vehicle, surrounding_control, Dynamics, EpisodeOutcome, OutcomeLimits, OutcomeMonitor, Scenario,
    ScenarioConfig, Status, TrackingParams, VehicleState,
};

/// One row of a trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub vehicle_id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub delta: f64,
    pub tau: f64,
}

/// A running episode: the scenario plus the scripted-traffic machinery.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub scenario: Scenario,
    dynamics: Dynamics,
    tracking: TrackingParams,
    follow_ego: bool,
    limits: OutcomeLimits,
    monitor: OutcomeMonitor,
    steps: usize,
    outcome: Option<EpisodeOutcome>,
    trajectory: Option<Vec<TrajectoryRow>>,
}

impl Simulation {
    pub fn new(scenario: Scenario, config: &ScenarioConfig) -> Self {
        Self {
            scenario,
            dynamics: config.vehicle.dynamics(),
            tracking: config.traffic.tracking(),
            follow_ego: config.traffic.follow_ego,
            limits: OutcomeLimits {
                timeout_s: config.episode.timeout_s,
                miss_distance: config.layout.arm_length,
                recede_s: config.episode.recede_s,
            },
            monitor: OutcomeMonitor::default(),
            steps: 0,
            outcome: None,
            trajectory: None,
        }
    }

    /// Start recording per-vehicle rows on every step.
    pub fn record_trajectory(&mut self) {
        self.trajectory.get_or_insert_with(Vec::new);
    }

    pub fn trajectory(&self) -> Option<&[TrajectoryRow]> {
        self.trajectory.as_deref()
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn outcome(&self) -> Option<EpisodeOutcome> {
        self.outcome
    }

    /// Advances every vehicle by one step; surrounding vehicles are driven by
    /// their scripted controllers. Returns the terminal outcome once reached.
    pub fn step(&mut self, ego_action: Action) -> Result<Option<EpisodeOutcome>> {
        if let Some(done) = self.outcome {
            return Ok(Some(done));
        }
        let world = &self.scenario.world;
        let dt = world.dt;

        let mut agent_actions = Vec::with_capacity(world.surrounding.len());
        for (vehicle, plan) in world.surrounding.iter().zip(self.scenario.plans.iter_mut()) {
            let ego_leader = self.follow_ego.then_some(&world.ego);
            let leaders = world.surrounding.iter().chain(ego_leader);
            agent_actions.push(surrounding_control(vehicle, plan, &self.tracking, &self.dynamics, leaders));
        }

        if let Some(rows) = self.trajectory.as_mut() {
            let ego_row = std::iter::once((&world.ego, ego_action));
            for (v, a) in ego_row.chain(world.surrounding.iter().zip(agent_actions.iter().copied())) {
                rows.push(row(self.steps, v, a));
            }
        }

        let ego = step_vehicle(&world.ego, ego_action, dt, &self.dynamics)?;
        let mut surrounding = Vec::with_capacity(world.surrounding.len());
        let mut plans = Vec::with_capacity(world.surrounding.len());
        for ((vehicle, plan), action) in world.surrounding.iter().zip(self.scenario.plans.iter()).zip(agent_actions) {
            let next = step_vehicle(vehicle, action, dt, &self.dynamics)?;
            // Vehicles that reach the end of their route leave the map.
            if plan.path.project(next.position).s >= plan.path.length() - 0.5 {
                continue;
            }
            surrounding.push(next);
            plans.push(plan.clone());
        }

        let world = &mut self.scenario.world;
        world.ego = ego;
        world.surrounding = surrounding;
        world.time += dt;
        self.scenario.plans = plans;
        self.steps += 1;

        if let Status::Done(tag) = self.monitor.observe(world, &self.scenario.goal, &self.limits) {
            let outcome = EpisodeOutcome { tag, elapsed: world.time, steps: self.steps };
            self.outcome = Some(outcome);
            if let Some(rows) = self.trajectory.as_mut() {
                for v in world.vehicles() {
                    rows.push(row(self.steps, v, Action::ZERO));
                }
            }
            return Ok(Some(outcome));
        }
        Ok(None)
    }

    /// Drives the episode to completion with `policy` choosing ego actions.
    pub fn run<F>(&mut self, mut policy: F) -> Result<EpisodeOutcome>
    where
        F: FnMut(&Simulation) -> Result<Action>,
    {
        loop {
            let action = policy(self)?;
            if let Some(outcome) = self.step(action)? {
                return Ok(outcome);
            }
        }
    }
}

fn row(step: usize, v: &VehicleState, a: Action) -> TrajectoryRow {
    TrajectoryRow {
        step,
        vehicle_id: v.id,
        x: v.position.x,
        y: v.position.y,
        heading: v.heading,
        speed: v.speed,
        delta: a.delta,
        tau: a.tau,
    }
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let mut out = String::from("step,vehicle_id,x,y,heading,speed,delta,tau\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.step, r.vehicle_id, r.x, r.y, r.heading, r.speed, r.delta, r.tau
        ));
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Command;
    use crate::world::{spawn_scenario, OutcomeTag};

    fn config() -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.traffic.density = Some(3);
        c.traffic.command = Some(Command::Forward);
        c
    }

    #[test]
    fn replay_is_bit_identical() {
        let c = config();
        let run = || {
            let mut sim = Simulation::new(spawn_scenario(&c, 5).unwrap(), &c);
            sim.record_trajectory();
            let outcome = sim.run(|_| Ok(Action::new(0.05, 0.3))).unwrap();
            (outcome, sim.trajectory().unwrap().to_vec())
        };
        let (a, ta) = run();
        let (b, tb) = run();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn displacement_is_kinematically_bounded() {
        let c = config();
        let dynamics = c.vehicle.dynamics();
        let bound = dynamics.v_max * c.episode.dt + 0.5 * dynamics.a_max * c.episode.dt.powi(2);
        for seed in 0..20 {
            let rows = {
                let mut s = Simulation::new(spawn_scenario(&c, seed).unwrap(), &c);
                s.record_trajectory();
                let _ = s.run(|_| Ok(Action::new(0.3, 1.0)));
                s.trajectory().unwrap().to_vec()
            };
            for id in 0..4u32 {
                let path: Vec<_> = rows.iter().filter(|r| r.vehicle_id == id).collect();
                for w in path.windows(2) {
                    let d = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt();
                    assert!(d <= bound + 1e-12, "vehicle {id} moved {d} > {bound}");
                }
            }
        }
    }

    #[test]
    fn braking_ego_terminates_once() {
        let c = config();
        let mut sim = Simulation::new(spawn_scenario(&c, 9).unwrap(), &c);
        let outcome = sim.run(|_| Ok(Action::new(0.0, -1.0))).unwrap();
        assert_ne!(outcome.tag, OutcomeTag::Success);
        assert_eq!(sim.step(Action::ZERO).unwrap(), Some(outcome));
        assert_eq!(sim.steps(), outcome.steps);
    }
}
