//! JSON checkpoints: topology, named parameter arrays, optimizer state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demo::write_file;
use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::nn::{AdamConfig, AdamState, ParamSet, Tensor2};
use crate::policy::{NetworkKind, PolicyNetwork, Topology};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<Vec<f64>>,
}

impl NamedArray {
    fn new(name: &str, t: &Tensor2) -> Self {
        Self { name: name.to_string(), rows: t.rows(), cols: t.cols(), values: t.to_rows() }
    }

    fn to_tensor(&self, expected: &str, shape: (usize, usize)) -> Result<Tensor2> {
        let bad = |message: String| Error::Checkpoint { field: expected.to_string(), message };
        if self.name != expected {
            return Err(bad(format!("found parameter `{}` where `{expected}` was expected", self.name)));
        }
        if (self.rows, self.cols) != shape {
            return Err(bad(format!("declared shape {}x{} but the topology needs {}x{}", self.rows, self.cols, shape.0, shape.1)));
        }
        if self.values.len() != self.rows {
            return Err(bad(format!("{} rows listed, {} declared", self.values.len(), self.rows)));
        }
        if let Some((i, r)) = self.values.iter().enumerate().find(|(_, r)| r.len() != self.cols) {
            return Err(bad(format!("row {i} has {} values, {} declared", r.len(), self.cols)));
        }
        if self.values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        Tensor2::from_rows(&self.values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub t: u64,
    pub config: AdamConfig,
    pub m: Vec<NamedArray>,
    pub v: Vec<NamedArray>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub network_kind: NetworkKind,
    pub topology: Topology,
    pub graph: GraphConfig,
    /// Optimizer steps taken when the checkpoint was written.
    pub step: u64,
    pub params: Vec<NamedArray>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn capture(network: &PolicyNetwork, adam: Option<&AdamState>, step: u64) -> Self {
        let named = network.named_params();
        let params = named.iter().map(|(n, t)| NamedArray::new(n, t)).collect();
        let optimizer = adam.map(|a| OptimizerState {
            t: a.t,
            config: a.config,
            m: named.iter().zip(&a.m).map(|((n, _), t)| NamedArray::new(n, t)).collect(),
            v: named.iter().zip(&a.v).map(|((n, _), t)| NamedArray::new(n, t)).collect(),
        });
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            network_kind: network.kind(),
            topology: network.topology.clone(),
            graph: network.graph,
            step,
            params,
            optimizer,
        }
    }

    /// Rebuilds the network (and optimizer, when present). A mismatching
    /// `expected` kind is rejected.
    pub fn restore(&self, expected: Option<NetworkKind>) -> Result<(PolicyNetwork, Option<AdamState>)> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint {
                field: "format_version".into(),
                message: format!("version {} is not supported (expected {CHECKPOINT_FORMAT_VERSION})", self.format_version),
            });
        }
        if let Some(kind) = expected.filter(|k| *k != self.network_kind) {
            return Err(Error::Checkpoint {
                field: "network_kind".into(),
                message: format!("checkpoint holds a {} network, {kind} was requested", self.network_kind),
            });
        }
        self.topology.validate()?;
        let mut network = PolicyNetwork::new(self.network_kind, &self.topology, self.graph, 0);
        let layout: Vec<(String, (usize, usize))> =
            network.named_params().into_iter().map(|(n, t)| (n, t.shape())).collect();
        let load = |arrays: &[NamedArray], section: &str| -> Result<Vec<Tensor2>> {
            if arrays.len() != layout.len() {
                return Err(Error::Checkpoint {
                    field: section.to_string(),
                    message: format!("{} arrays, the topology has {}", arrays.len(), layout.len()),
                });
            }
            arrays.iter().zip(&layout).map(|(a, (name, shape))| a.to_tensor(name, *shape)).collect()
        };
        for (slot, t) in network.params_mut().into_iter().zip(load(&self.params, "params")?) {
            *slot = t;
        }
        let adam = match &self.optimizer {
            None => None,
            Some(o) => Some(AdamState { config: o.config, t: o.t, m: load(&o.m, "optimizer.m")?, v: load(&o.v, "optimizer.v")? }),
        };
        Ok((network, adam))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_save_is_byte_identical() {
        for kind in NetworkKind::ALL {
            let net = PolicyNetwork::new(kind, &Topology::default(), GraphConfig::default(), 3);
            let mut adam = AdamState::new(&net, AdamConfig::default());
            adam.t = 7;
            adam.m[0].data_mut()[0] = 0.1234567890123;
            let ck = Checkpoint::capture(&net, Some(&adam), 7);
            let json = ck.to_json().unwrap();
            let back: Checkpoint = serde_json::from_str(&json).unwrap();
            assert_eq!(back.to_json().unwrap(), json);
            let (net2, adam2) = back.restore(Some(kind)).unwrap();
            assert_eq!(net2, net);
            assert_eq!(adam2.unwrap(), adam);
        }
    }

    #[test]
    fn wrong_kind_rejected() {
        let net = PolicyNetwork::new(NetworkKind::Gcil, &Topology::default(), GraphConfig::default(), 3);
        let ck = Checkpoint::capture(&net, None, 0);
        assert!(matches!(ck.restore(Some(NetworkKind::Nncil)), Err(Error::Checkpoint { field, .. }) if field == "network_kind"));
    }

    #[test]
    fn corrupted_array_names_its_field() {
        let net = PolicyNetwork::new(NetworkKind::Gcil, &Topology::default(), GraphConfig::default(), 3);
        let mut ck = Checkpoint::capture(&net, None, 0);
        ck.params[2].values[1].pop();
        match ck.restore(None) {
            Err(Error::Checkpoint { field, .. }) => assert_eq!(field, ck.params[2].name),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
        let mut ck = Checkpoint::capture(&net, None, 0);
        ck.format_version = 99;
        assert!(matches!(ck.restore(None), Err(Error::Checkpoint { field, .. }) if field == "format_version"));
    }
}
