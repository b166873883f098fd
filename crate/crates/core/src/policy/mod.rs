//! Command-conditional driving policies: the graph-based network and the two
//! vector/set baselines, all sharing one branched control head.

mod baselines;
mod gcil;
mod head;
mod network;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use baselines::{
    nncil_input, nncil_input_from_features, set_elements, NnCilCache, NnCilNetwork, SetCilCache, SetCilNetwork,
    NNCIL_INPUT_DIM,
};
pub use gcil::{GcilCache, GcilNetwork, PERCEPTION_DIM};
pub use head::{BranchedHead, HeadCache, HeadGrads};
pub use network::{BatchCache, CheckBatch, NetInput, NetworkBody, NetworkKind, PolicyNetwork, Topology};

/// High-level navigation command selecting a control branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Forward,
    TurnLeft,
    TurnRight,
}

impl Command {
    pub const ALL: [Command; 3] = [Command::Forward, Command::TurnLeft, Command::TurnRight];

    pub fn index(self) -> usize {
        match self {
            Command::Forward => 0,
            Command::TurnLeft => 1,
            Command::TurnRight => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::TurnLeft => "turn_left",
            Command::TurnRight => "turn_right",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Command::Forward),
            "turn_left" | "left" => Ok(Command::TurnLeft),
            "turn_right" | "right" => Ok(Command::TurnRight),
            other => Err(format!("unknown command `{other}`")),
        }
    }
}

/// Normalized control: steering `delta` (positive turns left) and throttle
/// `tau` (negative brakes), both in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub delta: f64,
    pub tau: f64,
}

impl Action {
    pub const ZERO: Action = Action { delta: 0.0, tau: 0.0 };

    pub fn new(delta: f64, tau: f64) -> Self {
        Self { delta, tau }
    }

    pub fn clamped(self) -> Self {
        Self { delta: self.delta.clamp(-1.0, 1.0), tau: self.tau.clamp(-1.0, 1.0) }
    }

    pub fn in_box(self) -> bool {
        (-1.0..=1.0).contains(&self.delta) && (-1.0..=1.0).contains(&self.tau)
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.delta, self.tau]
    }
}

/// One value per command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerCommand<T> {
    pub forward: T,
    pub turn_left: T,
    pub turn_right: T,
}

impl<T> PerCommand<T> {
    pub fn from_fn(mut f: impl FnMut(Command) -> T) -> Self {
        Self { forward: f(Command::Forward), turn_left: f(Command::TurnLeft), turn_right: f(Command::TurnRight) }
    }

    pub fn get(&self, c: Command) -> &T {
        match c {
            Command::Forward => &self.forward,
            Command::TurnLeft => &self.turn_left,
            Command::TurnRight => &self.turn_right,
        }
    }

    pub fn get_mut(&mut self, c: Command) -> &mut T {
        match c {
            Command::Forward => &mut self.forward,
            Command::TurnLeft => &mut self.turn_left,
            Command::TurnRight => &mut self.turn_right,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Command, &T)> {
        Command::ALL.into_iter().map(move |c| (c, self.get(c)))
    }
}
