use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{EGO_DIM, NODE_DIM};
use crate::nn::{GcnCache, GcnLayer, Tensor2};

use super::head::{BranchedHead, HeadCache, HeadGrads};
use super::Command;

/// Width of the ego perception vector with the default GCN widths.
pub const PERCEPTION_DIM: usize = 16;

/// Graph-convolutional perception over the scene graph feeding the
/// command-branched head.
#[derive(Debug, Clone, PartialEq)]
pub struct GcilNetwork {
    pub gcn: Vec<GcnLayer>,
    pub head: BranchedHead,
}

#[derive(Debug, Clone)]
pub struct GcilCache {
    gcn: Vec<Vec<GcnCache>>,
    pub perception: Tensor2,
    pub head: HeadCache,
}

impl GcilCache {
    pub fn relu_masks(&self, out: &mut Vec<bool>) {
        for sample in &self.gcn {
            for c in sample {
                out.extend(c.pre.data().iter().map(|z| *z > 0.0));
            }
        }
        self.head.relu_masks(out);
    }
}

impl GcilNetwork {
    pub fn new(rng: &mut impl Rng, gcn_widths: &[usize], trunk_widths: &[usize], branch_hidden: usize) -> Self {
        let mut gcn = Vec::with_capacity(gcn_widths.len());
        let mut width = NODE_DIM;
        for &w in gcn_widths {
            gcn.push(GcnLayer::new(rng, width, w));
            width = w;
        }
        let head = BranchedHead::new(rng, width + EGO_DIM, trunk_widths, branch_hidden);
        Self { gcn, head }
    }

    pub fn perception_dim(&self) -> usize {
        self.head.input_dim()
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor2)> {
        let mut out: Vec<(String, &Tensor2)> =
            self.gcn.iter().enumerate().map(|(i, l)| (format!("gcn.{i}.weight"), &l.weight)).collect();
        out.extend(self.head.named_params().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out: Vec<&mut Tensor2> = self.gcn.iter_mut().map(|l| &mut l.weight).collect();
        out.extend(self.head.params_mut());
        out
    }

    /// Ego perception vector: the ego node's final GCN embedding followed by
    /// the raw ego feature.
    fn perceive(&self, features: &Tensor2, adjacency: &Tensor2) -> Result<(Vec<f64>, Vec<GcnCache>)> {
        if features.rows() == 0 || features.cols() != NODE_DIM {
            return Err(Error::shape("gcil_forward", format!("node features {:?}", features.shape())));
        }
        let mut h = features.clone();
        let mut caches = Vec::with_capacity(self.gcn.len());
        for layer in &self.gcn {
            let (next, cache) = layer.forward(adjacency, &h)?;
            caches.push(cache);
            h = next;
        }
        let mut p = h.row(0).to_vec();
        p.extend_from_slice(&features.row(0)[..EGO_DIM]);
        Ok((p, caches))
    }

    pub fn forward(&self, samples: &[(&Tensor2, &Tensor2)], commands: &[Command]) -> Result<(Tensor2, GcilCache)> {
        let mut perception = Tensor2::zeros(samples.len(), self.perception_dim());
        let mut gcn = Vec::with_capacity(samples.len());
        for (r, (s, a)) in samples.iter().enumerate() {
            let (p, caches) = self.perceive(s, a)?;
            perception.row_mut(r).copy_from_slice(&p);
            gcn.push(caches);
        }
        let (out, head) = self.head.forward(&perception, commands)?;
        Ok((out, GcilCache { gcn, perception, head }))
    }

    pub fn backward(&self, cache: &GcilCache, upstream: &Tensor2) -> Result<Vec<Tensor2>> {
        let (d_perception, head_grads): (Tensor2, HeadGrads) = self.head.backward(&cache.head, upstream)?;
        let embed = self.gcn.last().map_or(0, |l| l.weight.cols());
        let mut grads: Vec<Tensor2> = self.gcn.iter().map(|l| Tensor2::zeros(l.weight.rows(), l.weight.cols())).collect();
        for (r, caches) in cache.gcn.iter().enumerate() {
            let n = caches[0].input.rows();
            // Only the ego row of the final embedding reaches the head.
            let mut d = Tensor2::zeros(n, embed);
            d.row_mut(0).copy_from_slice(&d_perception.row(r)[..embed]);
            for (l, (layer, c)) in self.gcn.iter().zip(caches).enumerate().rev() {
                let (dh, dw) = layer.backward(c, &d)?;
                grads[l].add_assign(&dw)?;
                d = dh;
            }
        }
        grads.extend(head_grads);
        Ok(grads)
    }
}
