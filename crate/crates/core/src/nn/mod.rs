//! Dense-matrix neural toolkit with hand-written backpropagation.

mod adam;
mod gradcheck;
mod layers;
mod loss;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckOptions, GradCheckReport, WorstParam};
pub use layers::{init_weight, Activation, DenseCache, DenseGrads, DenseLayer, GcnCache, GcnLayer};
pub use loss::{action_loss, batch_loss};
pub use tensor::Tensor2;

use crate::error::{Error, Result};

/// A model whose trainable tensors can be enumerated in a fixed order.
pub trait ParamSet {
    fn named_params(&self) -> Vec<(String, &Tensor2)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor2>;

    fn params(&self) -> Vec<&Tensor2> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

/// Gradient tensors mirroring a [`ParamSet`]'s parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor2>);

impl Gradients {
    pub fn zeros_like<M: ParamSet + ?Sized>(model: &M) -> Self {
        Gradients(model.params().iter().map(|t| Tensor2::zeros(t.rows(), t.cols())).collect())
    }

    pub fn tensors(&self) -> &[Tensor2] {
        &self.0
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.0.len() != other.0.len() {
            return Err(Error::shape("Gradients::add_assign", format!("{} vs {} tensors", self.0.len(), other.0.len())));
        }
        self.0.iter_mut().zip(&other.0).try_for_each(|(a, b)| a.add_assign(b))
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().for_each(|t| t.scale(k));
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Tensor2::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flat_map(|t| t.data().iter()).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Checks that every tensor matches the corresponding model parameter.
    pub fn check_mirrors<M: ParamSet + ?Sized>(&self, model: &M) -> Result<()> {
        let params = model.params();
        if params.len() != self.0.len() || params.iter().zip(&self.0).any(|(p, g)| p.shape() != g.shape()) {
            return Err(Error::shape("gradients", "gradient tensors do not mirror the parameters"));
        }
        Ok(())
    }
}
