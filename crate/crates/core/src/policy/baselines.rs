use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{build_features, GraphConfig, EGO_DIM, NODE_DIM, REL_DIM};
use crate::nn::{Activation, DenseCache, DenseLayer, Tensor2};
use crate::world::{GoalSpec, WorldState};

use super::head::{BranchedHead, HeadCache};
use super::Command;

/// Neighbors kept in the fixed-size vector input.
pub const NNCIL_NEIGHBORS: usize = 3;
pub const NNCIL_INPUT_DIM: usize = EGO_DIM + NNCIL_NEIGHBORS * REL_DIM;

/// Ego feature followed by the relative features of the three nearest
/// vehicles, nearest first, zero-padded.
pub fn nncil_input(world: &WorldState, goal: &GoalSpec, graph: &GraphConfig) -> [f64; NNCIL_INPUT_DIM] {
    nncil_input_from_features(&build_features(world, goal, graph))
}

/// Same as [`nncil_input`] from a node-feature matrix whose rows after the
/// first are in ascending vehicle id order; equal distances keep that order.
pub fn nncil_input_from_features(features: &Tensor2) -> [f64; NNCIL_INPUT_DIM] {
    let mut out = [0.0; NNCIL_INPUT_DIM];
    out[..EGO_DIM].copy_from_slice(&features.row(0)[..EGO_DIM]);
    let mut others: Vec<usize> = (1..features.rows()).collect();
    others.sort_by(|&a, &b| features.get(a, EGO_DIM).total_cmp(&features.get(b, EGO_DIM)).then(a.cmp(&b)));
    for (slot, &i) in others.iter().take(NNCIL_NEIGHBORS).enumerate() {
        let start = EGO_DIM + slot * REL_DIM;
        out[start..start + REL_DIM].copy_from_slice(&features.row(i)[EGO_DIM..NODE_DIM]);
    }
    out
}

/// The ego feature plus every vehicle's relative feature, one per row.
pub fn set_elements(features: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(features.rows(), REL_DIM);
    out.row_mut(0).copy_from_slice(&features.row(0)[..EGO_DIM]);
    for i in 1..features.rows() {
        out.row_mut(i).copy_from_slice(&features.row(i)[EGO_DIM..NODE_DIM]);
    }
    out
}

fn mlp(rng: &mut impl Rng, input: usize, widths: &[usize]) -> Vec<DenseLayer> {
    let mut layers = Vec::with_capacity(widths.len());
    let mut width = input;
    for &w in widths {
        layers.push(DenseLayer::new(rng, width, w, Activation::Relu));
        width = w;
    }
    layers
}

fn mlp_forward(layers: &[DenseLayer], x: &Tensor2) -> Result<(Tensor2, Vec<DenseCache>)> {
    let mut h = x.clone();
    let mut caches = Vec::with_capacity(layers.len());
    for l in layers {
        let (next, c) = l.forward(&h)?;
        caches.push(c);
        h = next;
    }
    Ok((h, caches))
}

/// Parameter gradients in (weight, bias) order per layer, plus the input
/// gradient.
fn mlp_backward(layers: &[DenseLayer], caches: &[DenseCache], upstream: &Tensor2) -> Result<(Tensor2, Vec<Tensor2>)> {
    let mut grads = Vec::with_capacity(2 * layers.len());
    let mut d = upstream.clone();
    for (l, c) in layers.iter().zip(caches).rev() {
        let g = l.backward(c, &d)?;
        grads.push(g.bias);
        grads.push(g.weight);
        d = g.input;
    }
    grads.reverse();
    Ok((d, grads))
}

fn mlp_named<'a>(prefix: &str, layers: &'a [DenseLayer]) -> Vec<(String, &'a Tensor2)> {
    layers
        .iter()
        .enumerate()
        .flat_map(|(i, l)| [(format!("{prefix}.{i}.weight"), &l.weight), (format!("{prefix}.{i}.bias"), &l.bias)])
        .collect()
}

fn mlp_params_mut(layers: &mut [DenseLayer]) -> Vec<&mut Tensor2> {
    layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
}

fn push_masks(caches: &[DenseCache], out: &mut Vec<bool>) {
    for c in caches {
        out.extend(c.pre.data().iter().map(|z| *z > 0.0));
    }
}

/// Fixed-size nearest-neighbor vector encoder with the branched head.
#[derive(Debug, Clone, PartialEq)]
pub struct NnCilNetwork {
    pub perception: Vec<DenseLayer>,
    pub head: BranchedHead,
}

#[derive(Debug, Clone)]
pub struct NnCilCache {
    perception: Vec<DenseCache>,
    head: HeadCache,
}

impl NnCilCache {
    pub fn relu_masks(&self, out: &mut Vec<bool>) {
        push_masks(&self.perception, out);
        self.head.relu_masks(out);
    }
}

impl NnCilNetwork {
    pub fn new(rng: &mut impl Rng, encoder_widths: &[usize], trunk_widths: &[usize], branch_hidden: usize) -> Self {
        let perception = mlp(rng, NNCIL_INPUT_DIM, encoder_widths);
        let width = encoder_widths.last().copied().unwrap_or(NNCIL_INPUT_DIM);
        Self { perception, head: BranchedHead::new(rng, width, trunk_widths, branch_hidden) }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor2)> {
        let mut out = mlp_named("perception", &self.perception);
        out.extend(self.head.named_params().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out = mlp_params_mut(&mut self.perception);
        out.extend(self.head.params_mut());
        out
    }

    /// `inputs` is `B × 24`.
    pub fn forward(&self, inputs: &Tensor2, commands: &[Command]) -> Result<(Tensor2, NnCilCache)> {
        if inputs.cols() != NNCIL_INPUT_DIM {
            return Err(Error::shape("nncil_forward", format!("input {:?}", inputs.shape())));
        }
        let (h, perception) = mlp_forward(&self.perception, inputs)?;
        let (out, head) = self.head.forward(&h, commands)?;
        Ok((out, NnCilCache { perception, head }))
    }

    pub fn backward(&self, cache: &NnCilCache, upstream: &Tensor2) -> Result<Vec<Tensor2>> {
        let (d, head_grads) = self.head.backward(&cache.head, upstream)?;
        let (_, mut grads) = mlp_backward(&self.perception, &cache.perception, &d)?;
        grads.extend(head_grads);
        Ok(grads)
    }
}

/// Per-element encoder summed over the set, with the branched head.
#[derive(Debug, Clone, PartialEq)]
pub struct SetCilNetwork {
    pub encoder: Vec<DenseLayer>,
    pub head: BranchedHead,
}

#[derive(Debug, Clone)]
pub struct SetCilCache {
    encoder: Vec<DenseCache>,
    /// Owning sample of every stacked element row.
    owners: Vec<usize>,
    pub pooled: Tensor2,
    head: HeadCache,
}

impl SetCilCache {
    pub fn relu_masks(&self, out: &mut Vec<bool>) {
        push_masks(&self.encoder, out);
        self.head.relu_masks(out);
    }
}

impl SetCilNetwork {
    pub fn new(rng: &mut impl Rng, encoder_widths: &[usize], trunk_widths: &[usize], branch_hidden: usize) -> Self {
        let encoder = mlp(rng, REL_DIM, encoder_widths);
        let width = encoder_widths.last().copied().unwrap_or(REL_DIM);
        Self { encoder, head: BranchedHead::new(rng, width, trunk_widths, branch_hidden) }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor2)> {
        let mut out = mlp_named("encoder", &self.encoder);
        out.extend(self.head.named_params().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out = mlp_params_mut(&mut self.encoder);
        out.extend(self.head.params_mut());
        out
    }

    /// Encodes each element and sums the encodings per sample.
    pub fn encode(&self, sets: &[&Tensor2]) -> Result<(Tensor2, Vec<DenseCache>, Vec<usize>)> {
        let total: usize = sets.iter().map(|s| s.rows()).sum();
        let mut stacked = Tensor2::zeros(total, REL_DIM);
        let mut owners = Vec::with_capacity(total);
        let mut r = 0;
        for (k, set) in sets.iter().enumerate() {
            if set.rows() == 0 || set.cols() != REL_DIM {
                return Err(Error::shape("setcil_forward", format!("element set {:?}", set.shape())));
            }
            for i in 0..set.rows() {
                stacked.row_mut(r).copy_from_slice(set.row(i));
                owners.push(k);
                r += 1;
            }
        }
        let (encoded, caches) = mlp_forward(&self.encoder, &stacked)?;
        let mut pooled = Tensor2::zeros(sets.len(), encoded.cols());
        let mut start = 0;
        for (k, set) in sets.iter().enumerate() {
            let rows: Vec<usize> = (start..start + set.rows()).collect();
            pooled.row_mut(k).copy_from_slice(encoded.gather_rows(&rows).sorted_column_sum().data());
            start += set.rows();
        }
        Ok((pooled, caches, owners))
    }

    pub fn forward(&self, sets: &[&Tensor2], commands: &[Command]) -> Result<(Tensor2, SetCilCache)> {
        let (pooled, encoder, owners) = self.encode(sets)?;
        let (out, head) = self.head.forward(&pooled, commands)?;
        Ok((out, SetCilCache { encoder, owners, pooled, head }))
    }

    pub fn backward(&self, cache: &SetCilCache, upstream: &Tensor2) -> Result<Vec<Tensor2>> {
        let (d_pooled, head_grads) = self.head.backward(&cache.head, upstream)?;
        let d_encoded = d_pooled.gather_rows(&cache.owners);
        let (_, mut grads) = mlp_backward(&self.encoder, &cache.encoder, &d_encoded)?;
        grads.extend(head_grads);
        Ok(grads)
    }
}
