use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseCache, DenseLayer, Tensor2};

use super::Command;

/// Shared trunk followed by one two-layer branch per command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchedHead {
    pub trunk: Vec<DenseLayer>,
    pub branches: Vec<[DenseLayer; 2]>,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    trunk: Vec<DenseCache>,
    /// Per command: the batch rows routed to it and the branch caches.
    routes: Vec<Option<(Vec<usize>, [DenseCache; 2])>>,
    rows: usize,
}

impl HeadCache {
    /// Every ReLU on/off bit of the pass, in a fixed order.
    pub fn relu_masks(&self, out: &mut Vec<bool>) {
        for c in &self.trunk {
            out.extend(c.pre.data().iter().map(|z| *z > 0.0));
        }
        for (_, [hidden, _]) in self.routes.iter().flatten() {
            out.extend(hidden.pre.data().iter().map(|z| *z > 0.0));
        }
    }
}

/// Gradients of a head, in [`BranchedHead::params`] order.
pub type HeadGrads = Vec<Tensor2>;

impl BranchedHead {
    /// `trunk_widths` excludes the input width; every trunk layer is ReLU.
    pub fn new(rng: &mut impl Rng, input: usize, trunk_widths: &[usize], branch_hidden: usize) -> Self {
        let mut trunk = Vec::with_capacity(trunk_widths.len());
        let mut width = input;
        for &w in trunk_widths {
            trunk.push(DenseLayer::new(rng, width, w, Activation::Relu));
            width = w;
        }
        let branches = Command::ALL
            .iter()
            .map(|_| {
                [
                    DenseLayer::new(rng, width, branch_hidden, Activation::Relu),
                    DenseLayer::new(rng, branch_hidden, 2, Activation::Tanh),
                ]
            })
            .collect();
        Self { trunk, branches }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk[0].input_dim()
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor2)> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter().enumerate() {
            out.push((format!("trunk.{i}.weight"), &l.weight));
            out.push((format!("trunk.{i}.bias"), &l.bias));
        }
        for (c, layers) in Command::ALL.iter().zip(&self.branches) {
            for (i, l) in layers.iter().enumerate() {
                out.push((format!("branch.{c}.{i}.weight"), &l.weight));
                out.push((format!("branch.{c}.{i}.bias"), &l.bias));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out = Vec::new();
        for l in &mut self.trunk {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for layers in &mut self.branches {
            for l in layers.iter_mut() {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        out
    }

    /// Runs the trunk on every row, then each row through its command's
    /// branch only. Output is `B × 2`.
    pub fn forward(&self, x: &Tensor2, commands: &[Command]) -> Result<(Tensor2, HeadCache)> {
        if x.rows() != commands.len() {
            return Err(Error::shape("head_forward", format!("{} rows for {} commands", x.rows(), commands.len())));
        }
        let mut h = x.clone();
        let mut trunk = Vec::with_capacity(self.trunk.len());
        for layer in &self.trunk {
            let (next, cache) = layer.forward(&h)?;
            trunk.push(cache);
            h = next;
        }
        let mut out = Tensor2::zeros(x.rows(), 2);
        let mut routes = Vec::with_capacity(Command::ALL.len());
        for (c, [hidden, last]) in Command::ALL.iter().zip(&self.branches) {
            let rows: Vec<usize> = commands.iter().enumerate().filter(|(_, k)| *k == c).map(|(i, _)| i).collect();
            if rows.is_empty() {
                routes.push(None);
                continue;
            }
            let (z, hc) = hidden.forward(&h.gather_rows(&rows))?;
            let (y, lc) = last.forward(&z)?;
            for (k, &r) in rows.iter().enumerate() {
                out.row_mut(r).copy_from_slice(y.row(k));
            }
            routes.push(Some((rows, [hc, lc])));
        }
        Ok((out, HeadCache { trunk, routes, rows: x.rows() }))
    }

    /// Returns the input gradient and parameter gradients; branches that
    /// saw no rows get exact zeros.
    pub fn backward(&self, cache: &HeadCache, upstream: &Tensor2) -> Result<(Tensor2, HeadGrads)> {
        if upstream.shape() != (cache.rows, 2) {
            return Err(Error::shape("head_backward", format!("upstream {:?} for {} rows", upstream.shape(), cache.rows)));
        }
        let trunk_width = self.trunk.last().map_or(0, DenseLayer::output_dim);
        let mut d_trunk = Tensor2::zeros(cache.rows, trunk_width);
        let mut branch_grads = Vec::new();
        for ([hidden, last], route) in self.branches.iter().zip(&cache.routes) {
            match route {
                None => {
                    for l in [hidden, last] {
                        branch_grads.push(Tensor2::zeros(l.weight.rows(), l.weight.cols()));
                        branch_grads.push(Tensor2::zeros(1, l.bias.cols()));
                    }
                }
                Some((rows, [hc, lc])) => {
                    let gl = last.backward(lc, &upstream.gather_rows(rows))?;
                    let gh = hidden.backward(hc, &gl.input)?;
                    for (k, &r) in rows.iter().enumerate() {
                        d_trunk.row_mut(r).copy_from_slice(gh.input.row(k));
                    }
                    branch_grads.extend([gh.weight, gh.bias, gl.weight, gl.bias]);
                }
            }
        }
        let mut trunk_grads = Vec::with_capacity(2 * self.trunk.len());
        let mut d = d_trunk;
        for (layer, c) in self.trunk.iter().zip(&cache.trunk).rev() {
            let g = layer.backward(c, &d)?;
            trunk_grads.push(g.bias);
            trunk_grads.push(g.weight);
            d = g.input;
        }
        trunk_grads.reverse();
        trunk_grads.extend(branch_grads);
        Ok((d, trunk_grads))
    }
}
