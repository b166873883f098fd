//! Scene-to-graph encoding: per-node features and the row-normalized,
//! distance-weighted adjacency matrix.
//!
//! Node 0 is always the ego vehicle; nodes `1..N` are the surrounding
//! vehicles in ascending id order. Each node row concatenates the shared
//! ego/goal block with that vehicle's state relative to the ego.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::nn::Tensor2;
use crate::world::{GoalSpec, VehicleState, WorldState};

pub const EGO_DIM: usize = 6;
pub const REL_DIM: usize = 6;
pub const NODE_DIM: usize = EGO_DIM + REL_DIM;

/// Ego/goal block: distance to goal and its components, the shortfall from
/// the preferred speed, and the ego velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoFeature {
    pub d_goal: f64,
    pub dx_goal: f64,
    pub dy_goal: f64,
    pub v_err: f64,
    pub vx: f64,
    pub vy: f64,
}

impl EgoFeature {
    pub fn to_array(&self) -> [f64; EGO_DIM] {
        [self.d_goal, self.dx_goal, self.dy_goal, self.v_err, self.vx, self.vy]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self { d_goal: s[0], dx_goal: s[1], dy_goal: s[2], v_err: s[3], vx: s[4], vy: s[5] }
    }
}

/// State of one vehicle relative to the ego.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelativeFeature {
    pub d_rel: f64,
    pub dx_rel: f64,
    pub dy_rel: f64,
    pub v_rel: f64,
    pub vx_rel: f64,
    pub vy_rel: f64,
}

impl RelativeFeature {
    pub fn to_array(&self) -> [f64; REL_DIM] {
        [self.d_rel, self.dx_rel, self.dy_rel, self.v_rel, self.vx_rel, self.vy_rel]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStrategy {
    /// Ego linked to every node, every other node to its k nearest, all
    /// edges weighted by distance.
    NCloseWeighted,
    /// Every pair linked with unit weight.
    FullyConnected,
    /// Weighted ego-to-all edges; other nodes link only to the ego.
    StarConnected,
    /// The n-close sparsity pattern with unit weights.
    NonWeighted,
}

impl EdgeStrategy {
    pub const ALL: [EdgeStrategy; 4] =
        [EdgeStrategy::NCloseWeighted, EdgeStrategy::FullyConnected, EdgeStrategy::StarConnected, EdgeStrategy::NonWeighted];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeStrategy::NCloseWeighted => "n_close_weighted",
            EdgeStrategy::FullyConnected => "fully_connected",
            EdgeStrategy::StarConnected => "star_connected",
            EdgeStrategy::NonWeighted => "non_weighted",
        }
    }
}

impl fmt::Display for EdgeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        EdgeStrategy::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown edge strategy `{s}`"))
    }
}

/// Graph construction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub strategy: EdgeStrategy,
    pub alpha_m: f64,
    pub k: usize,
    /// Whether the ego counts as a candidate neighbor for non-ego nodes.
    pub ego_as_neighbor: bool,
    /// Express relative features in the ego heading frame instead of the
    /// world frame.
    pub ego_frame: bool,
    /// Preferred ego speed used for the speed-error feature.
    pub v_pref: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            strategy: EdgeStrategy::NCloseWeighted,
            alpha_m: 10.0,
            k: 3,
            ego_as_neighbor: true,
            ego_frame: false,
            v_pref: 6.0,
        }
    }
}

impl GraphConfig {
    pub fn with_strategy(mut self, strategy: EdgeStrategy) -> Self {
        self.strategy = strategy;
        self
    }
}

/// Distance-decayed edge weight `exp(-d² / α²)`.
pub fn edge_weight(d: f64, alpha: f64) -> f64 {
    (-(d * d) / (alpha * alpha)).exp()
}

fn frame(v: Vec2, ego_heading: f64, ego_frame: bool) -> Vec2 {
    if ego_frame {
        v.rotate(-ego_heading)
    } else {
        v
    }
}

pub fn ego_feature(ego: &VehicleState, goal: &GoalSpec, config: &GraphConfig) -> EgoFeature {
    let to_goal = frame(goal.target - ego.position, ego.heading, config.ego_frame);
    let vel = frame(ego.velocity(), ego.heading, config.ego_frame);
    EgoFeature {
        d_goal: to_goal.norm(),
        dx_goal: to_goal.x,
        dy_goal: to_goal.y,
        v_err: config.v_pref - ego.speed,
        vx: vel.x,
        vy: vel.y,
    }
}

pub fn relative_feature(ego: &VehicleState, other: &VehicleState, config: &GraphConfig) -> RelativeFeature {
    let dp = frame(other.position - ego.position, ego.heading, config.ego_frame);
    let dv = frame(other.velocity() - ego.velocity(), ego.heading, config.ego_frame);
    RelativeFeature { d_rel: dp.norm(), dx_rel: dp.x, dy_rel: dp.y, v_rel: dv.norm(), vx_rel: dv.x, vy_rel: dv.y }
}

/// Node-feature matrix, `N × 12`.
pub fn build_features(world: &WorldState, goal: &GoalSpec, config: &GraphConfig) -> Tensor2 {
    let ego = ego_feature(&world.ego, goal, config).to_array();
    let mut s = Tensor2::zeros(world.vehicle_count(), NODE_DIM);
    for (i, v) in world.vehicles().enumerate() {
        let row = s.row_mut(i);
        row[..EGO_DIM].copy_from_slice(&ego);
        if i > 0 {
            row[EGO_DIM..].copy_from_slice(&relative_feature(&world.ego, v, config).to_array());
        }
    }
    s
}

/// Node positions relative to the ego recovered from a feature matrix.
/// Only valid for world-frame features.
pub fn positions_from_features(s: &Tensor2) -> Vec<Vec2> {
    (0..s.rows())
        .map(|i| {
            let r = s.row(i);
            Vec2::new(r[EGO_DIM + 1], r[EGO_DIM + 2])
        })
        .collect()
}

/// Indices of the `k` nearest other nodes to node `i`, ties broken by lower
/// index.
fn nearest(positions: &[Vec2], i: usize, k: usize, ego_as_neighbor: bool) -> Vec<usize> {
    let mut candidates: Vec<(f64, usize)> = (0..positions.len())
        .filter(|&j| j != i && (ego_as_neighbor || j != 0))
        .map(|j| (positions[i].distance(positions[j]), j))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Unnormalized adjacency (self-loops included) for `strategy`.
pub fn raw_adjacency(positions: &[Vec2], config: &GraphConfig) -> Tensor2 {
    let n = positions.len();
    let mut a = Tensor2::zeros(n, n);
    let w = |i: usize, j: usize| edge_weight(positions[i].distance(positions[j]), config.alpha_m);
    for i in 0..n {
        a.set(i, i, 1.0);
    }
    match config.strategy {
        EdgeStrategy::FullyConnected => a.data_mut().fill(1.0),
        EdgeStrategy::NCloseWeighted | EdgeStrategy::NonWeighted => {
            let weighted = config.strategy == EdgeStrategy::NCloseWeighted;
            for j in 1..n {
                a.set(0, j, if weighted { w(0, j) } else { 1.0 });
            }
            for i in 1..n {
                for j in nearest(positions, i, config.k, config.ego_as_neighbor) {
                    a.set(i, j, if weighted { w(i, j) } else { 1.0 });
                }
            }
        }
        EdgeStrategy::StarConnected => {
            for j in 1..n {
                a.set(0, j, w(0, j));
                a.set(j, 0, w(j, 0));
            }
        }
    }
    a
}

/// Row-stochastic adjacency matrix, `N × N`.
pub fn build_adjacency(positions: &[Vec2], config: &GraphConfig) -> Tensor2 {
    let mut a = raw_adjacency(positions, config);
    for i in 0..a.rows() {
        let row = a.row_mut(i);
        let mut terms = row.to_vec();
        terms.sort_by(f64::total_cmp);
        let total: f64 = terms.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
    }
    a
}
