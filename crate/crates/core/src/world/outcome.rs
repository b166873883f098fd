use serde::{Deserialize, Serialize};

use super::{detect_collision, GoalSpec, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeTag {
    Success,
    Collision,
    Timeout,
    GoalMissed,
}

impl OutcomeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeTag::Success => "success",
            OutcomeTag::Collision => "collision",
            OutcomeTag::Timeout => "timeout",
            OutcomeTag::GoalMissed => "goal_missed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "success" => OutcomeTag::Success,
            "collision" => OutcomeTag::Collision,
            "timeout" => OutcomeTag::Timeout,
            "goal_missed" => OutcomeTag::GoalMissed,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub tag: OutcomeTag,
    pub elapsed: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLimits {
    pub timeout_s: f64,
    /// Distance from the target beyond which a receding ego may miss.
    pub miss_distance: f64,
    pub recede_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Status {
    Ongoing,
    Done(OutcomeTag),
}

/// Terminal classification of one world snapshot.
///
/// `receding_for` is how long the ego has been moving away from the goal
/// while outside the junction; see [`OutcomeMonitor`]. Collision wins over
/// success within the same step; the timeout boundary is inclusive.
pub fn check_outcome(world: &WorldState, goal: &GoalSpec, limits: &OutcomeLimits, receding_for: f64) -> Status {
    if world.surrounding.iter().any(|v| detect_collision(&world.ego, v)) {
        return Status::Done(OutcomeTag::Collision);
    }
    let distance = world.ego.position.distance(goal.target);
    if distance < goal.success_radius {
        return Status::Done(OutcomeTag::Success);
    }
    if world.time >= limits.timeout_s - 1e-9 {
        return Status::Done(OutcomeTag::Timeout);
    }
    let outside = !world.layout.junction_box().contains(world.ego.position);
    if outside && distance > limits.miss_distance && receding_for >= limits.recede_s - 1e-9 {
        return Status::Done(OutcomeTag::GoalMissed);
    }
    Status::Ongoing
}

/// Tracks the receding timer across steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutcomeMonitor {
    last_distance: Option<f64>,
    receding_for: f64,
}

impl OutcomeMonitor {
    pub fn observe(&mut self, world: &WorldState, goal: &GoalSpec, limits: &OutcomeLimits) -> Status {
        let distance = world.ego.position.distance(goal.target);
        let outside = !world.layout.junction_box().contains(world.ego.position);
        match self.last_distance {
            Some(prev) if outside && distance > prev => self.receding_for += world.dt,
            _ => self.receding_for = 0.0,
        }
        self.last_distance = Some(distance);
        check_outcome(world, goal, limits, self.receding_for)
    }
}
