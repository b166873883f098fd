use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_adjacency, build_features, positions_from_features, GraphConfig, NODE_DIM};
use crate::nn::{batch_loss, finite_diff_check, GradCheckOptions, GradCheckReport, Gradients, ParamSet, Tensor2};
use crate::world::{spawn_scenario, GoalSpec, ScenarioConfig, WorldState};

use super::baselines::{nncil_input_from_features, set_elements, NnCilCache, SetCilCache, NNCIL_INPUT_DIM};
use super::gcil::GcilCache;
use super::{Action, Command, GcilNetwork, NnCilNetwork, SetCilNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Gcil,
    Nncil,
    Setcil,
}

impl NetworkKind {
    pub const ALL: [NetworkKind; 3] = [NetworkKind::Gcil, NetworkKind::Nncil, NetworkKind::Setcil];

    pub fn as_str(self) -> &'static str {
        match self {
            NetworkKind::Gcil => "gcil",
            NetworkKind::Nncil => "nncil",
            NetworkKind::Setcil => "setcil",
        }
    }

    /// Report label.
    pub fn method_name(self) -> &'static str {
        match self {
            NetworkKind::Gcil => "G-CIL",
            NetworkKind::Nncil => "NN-CIL",
            NetworkKind::Setcil => "Set-CIL",
        }
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NetworkKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        NetworkKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown network kind `{s}`"))
    }
}

/// Layer widths of every network family, plus the fixed divisors applied
/// to distance and speed feature columns before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    pub gcn_widths: Vec<usize>,
    pub encoder_widths: Vec<usize>,
    pub trunk_widths: Vec<usize>,
    pub branch_hidden: usize,
    pub distance_scale_m: f64,
    pub speed_scale_mps: f64,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            gcn_widths: vec![32, 32, 10],
            encoder_widths: vec![64, 64, 64],
            trunk_widths: vec![128, 256, 64, 64],
            branch_hidden: 64,
            distance_scale_m: 20.0,
            speed_scale_mps: 5.0,
        }
    }
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        for (key, widths) in [("gcn_widths", &self.gcn_widths), ("encoder_widths", &self.encoder_widths), ("trunk_widths", &self.trunk_widths)] {
            if widths.is_empty() || widths.contains(&0) {
                return Err(Error::invalid(format!("train.topology.{key}"), "needs at least one nonzero width"));
            }
        }
        if self.branch_hidden == 0 {
            return Err(Error::invalid("train.topology.branch_hidden", "must be positive"));
        }
        for (key, v) in [("distance_scale_m", self.distance_scale_m), ("speed_scale_mps", self.speed_scale_mps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("train.topology.{key}"), "must be positive"));
            }
        }
        Ok(())
    }

    /// Node features with distance columns divided by `distance_scale_m`
    /// and speed columns by `speed_scale_mps`.
    pub fn scale_features(&self, features: &Tensor2) -> Tensor2 {
        let mut out = features.clone();
        let (d, v) = (1.0 / self.distance_scale_m, 1.0 / self.speed_scale_mps);
        let factors: [f64; NODE_DIM] = [d, d, d, v, v, v, d, d, d, v, v, v];
        for r in 0..out.rows() {
            out.row_mut(r).iter_mut().zip(factors).for_each(|(x, k)| *x *= k);
        }
        out
    }
}

/// One encoded observation: node features and the adjacency built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub features: Tensor2,
    pub adjacency: Tensor2,
}

impl NetInput {
    pub fn from_world(world: &WorldState, goal: &GoalSpec, graph: &GraphConfig) -> Self {
        let features = build_features(world, goal, graph);
        let adjacency = build_adjacency(&world.positions(), graph);
        Self { features, adjacency }
    }

    /// Rebuilds the adjacency from world-frame node features, so a stored
    /// observation can be re-encoded under a different edge strategy.
    pub fn from_features(features: Tensor2, graph: &GraphConfig) -> Result<Self> {
        if features.rows() == 0 || features.cols() != NODE_DIM {
            return Err(Error::shape("NetInput", format!("node features {:?}", features.shape())));
        }
        let adjacency = build_adjacency(&positions_from_features(&features), graph);
        Ok(Self { features, adjacency })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkBody {
    Gcil(GcilNetwork),
    Nncil(NnCilNetwork),
    Setcil(SetCilNetwork),
}

#[derive(Debug, Clone)]
pub enum BatchCache {
    Gcil(GcilCache),
    Nncil(NnCilCache),
    Setcil(SetCilCache),
}

impl BatchCache {
    pub fn relu_masks(&self) -> Vec<bool> {
        let mut out = Vec::new();
        match self {
            BatchCache::Gcil(c) => c.relu_masks(&mut out),
            BatchCache::Nncil(c) => c.relu_masks(&mut out),
            BatchCache::Setcil(c) => c.relu_masks(&mut out),
        }
        out
    }
}

/// A policy of any family together with the graph settings used to encode
/// its observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    pub graph: GraphConfig,
    pub topology: Topology,
    pub body: NetworkBody,
}

impl PolicyNetwork {
    pub fn new(kind: NetworkKind, topology: &Topology, graph: GraphConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = topology;
        let body = match kind {
            NetworkKind::Gcil => NetworkBody::Gcil(GcilNetwork::new(&mut rng, &t.gcn_widths, &t.trunk_widths, t.branch_hidden)),
            NetworkKind::Nncil => {
                NetworkBody::Nncil(NnCilNetwork::new(&mut rng, &t.encoder_widths, &t.trunk_widths, t.branch_hidden))
            }
            NetworkKind::Setcil => {
                NetworkBody::Setcil(SetCilNetwork::new(&mut rng, &t.encoder_widths, &t.trunk_widths, t.branch_hidden))
            }
        };
        Self { graph, topology: topology.clone(), body }
    }

    pub fn kind(&self) -> NetworkKind {
        match self.body {
            NetworkBody::Gcil(_) => NetworkKind::Gcil,
            NetworkBody::Nncil(_) => NetworkKind::Nncil,
            NetworkBody::Setcil(_) => NetworkKind::Setcil,
        }
    }

    /// Batched forward pass; output is `B × 2`, one action per row.
    pub fn forward_batch(&self, inputs: &[&NetInput], commands: &[Command]) -> Result<(Tensor2, BatchCache)> {
        if inputs.len() != commands.len() {
            return Err(Error::shape("forward_batch", format!("{} inputs for {} commands", inputs.len(), commands.len())));
        }
        let scaled: Vec<Tensor2> = inputs.iter().map(|i| self.topology.scale_features(&i.features)).collect();
        match &self.body {
            NetworkBody::Gcil(net) => {
                let samples: Vec<(&Tensor2, &Tensor2)> = scaled.iter().zip(inputs).map(|(s, i)| (s, &i.adjacency)).collect();
                let (out, cache) = net.forward(&samples, commands)?;
                Ok((out, BatchCache::Gcil(cache)))
            }
            NetworkBody::Nncil(net) => {
                let mut x = Tensor2::zeros(inputs.len(), NNCIL_INPUT_DIM);
                for (r, s) in scaled.iter().enumerate() {
                    x.row_mut(r).copy_from_slice(&nncil_input_from_features(s));
                }
                let (out, cache) = net.forward(&x, commands)?;
                Ok((out, BatchCache::Nncil(cache)))
            }
            NetworkBody::Setcil(net) => {
                let sets: Vec<Tensor2> = scaled.iter().map(set_elements).collect();
                let refs: Vec<&Tensor2> = sets.iter().collect();
                let (out, cache) = net.forward(&refs, commands)?;
                Ok((out, BatchCache::Setcil(cache)))
            }
        }
    }

    /// Parameter gradients for `∂L/∂output = upstream`.
    pub fn backward(&self, cache: &BatchCache, upstream: &Tensor2) -> Result<Gradients> {
        let grads = match (&self.body, cache) {
            (NetworkBody::Gcil(net), BatchCache::Gcil(c)) => net.backward(c, upstream)?,
            (NetworkBody::Nncil(net), BatchCache::Nncil(c)) => net.backward(c, upstream)?,
            (NetworkBody::Setcil(net), BatchCache::Setcil(c)) => net.backward(c, upstream)?,
            _ => return Err(Error::shape("backward", "cache from a different network family")),
        };
        let grads = Gradients(grads);
        grads.check_mirrors(self)?;
        Ok(grads)
    }

    pub fn act(&self, input: &NetInput, command: Command) -> Result<Action> {
        let (out, _) = self.forward_batch(&[input], &[command])?;
        let action = Action::new(out.get(0, 0), out.get(0, 1));
        if !action.delta.is_finite() || !action.tau.is_finite() {
            return Err(Error::NonFinite("policy output".into()));
        }
        Ok(action)
    }

    pub fn act_in_world(&self, world: &WorldState, goal: &GoalSpec, command: Command) -> Result<Action> {
        self.act(&NetInput::from_world(world, goal, &self.graph), command)
    }
}

/// Observations, commands and random targets for gradient checking.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckBatch {
    pub inputs: Vec<NetInput>,
    pub commands: Vec<Command>,
    pub targets: Tensor2,
}

impl CheckBatch {
    /// Initial observations of `count` seeded scenarios, with every command
    /// represented and targets drawn uniformly from the action box.
    pub fn from_scenarios(config: &ScenarioConfig, graph: &GraphConfig, count: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(count);
        let mut commands = Vec::with_capacity(count);
        for i in 0..count {
            let mut c = config.clone();
            let command = Command::ALL[i % 3];
            c.traffic.command = Some(command);
            let scenario = spawn_scenario(&c, seed.wrapping_add(i as u64))?;
            inputs.push(NetInput::from_world(&scenario.world, &scenario.goal, graph));
            commands.push(command);
        }
        let targets = Tensor2::from_vec(count, 2, (0..2 * count).map(|_| rng.gen_range(-1.0..=1.0)).collect())?;
        Ok(Self { inputs, commands, targets })
    }

    fn refs(&self) -> Vec<&NetInput> {
        self.inputs.iter().collect()
    }
}

impl PolicyNetwork {
    pub fn batch_loss_on(&self, batch: &CheckBatch) -> Result<f64> {
        let (out, _) = self.forward_batch(&batch.refs(), &batch.commands)?;
        Ok(batch_loss(&out, &batch.targets)?.0)
    }

    /// Analytic batch-loss gradients against central differences.
    pub fn gradient_check(&self, batch: &CheckBatch, options: GradCheckOptions) -> Result<GradCheckReport> {
        let refs = batch.refs();
        let (out, cache) = self.forward_batch(&refs, &batch.commands)?;
        let (_, upstream, _) = batch_loss(&out, &batch.targets)?;
        let analytic = self.backward(&cache, &upstream)?;
        finite_diff_check(
            self,
            &analytic,
            |m| m.batch_loss_on(batch),
            |m| Ok(m.forward_batch(&refs, &batch.commands)?.1.relu_masks()),
            options,
        )
    }
}

impl ParamSet for PolicyNetwork {
    fn named_params(&self) -> Vec<(String, &Tensor2)> {
        match &self.body {
            NetworkBody::Gcil(n) => n.named_params(),
            NetworkBody::Nncil(n) => n.named_params(),
            NetworkBody::Setcil(n) => n.named_params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        match &mut self.body {
            NetworkBody::Gcil(n) => n.params_mut(),
            NetworkBody::Nncil(n) => n.params_mut(),
            NetworkBody::Setcil(n) => n.params_mut(),
        }
    }
}
