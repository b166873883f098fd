use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Gradients, ParamSet, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam moments for every parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Tensor2>,
    pub v: Vec<Tensor2>,
}

impl AdamState {
    pub fn new<M: ParamSet + ?Sized>(model: &M, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor2> = model.params().iter().map(|t| Tensor2::zeros(t.rows(), t.cols())).collect();
        Self { config, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step<M: ParamSet + ?Sized>(&mut self, model: &mut M, grads: &Gradients) -> Result<()> {
        grads.check_mirrors(model)?;
        if self.m.len() != grads.0.len() || self.m.iter().zip(&grads.0).any(|(m, g)| m.shape() != g.shape()) {
            return Err(Error::shape("adam_step", "optimizer state does not mirror the parameters"));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in model.params_mut().into_iter().zip(&grads.0).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Scalar(Tensor2);

    impl ParamSet for Scalar {
        fn named_params(&self) -> Vec<(String, &Tensor2)> {
            vec![("p".into(), &self.0)]
        }
        fn params_mut(&mut self) -> Vec<&mut Tensor2> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut model = Scalar(Tensor2::row_vector(&[0.7, -0.2]));
        let mut adam = AdamState::new(&model, AdamConfig::default());
        adam.step(&mut model, &Gradients(vec![Tensor2::zeros(1, 2)])).unwrap();
        assert_eq!(model.0.data(), &[0.7, -0.2]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut model = Scalar(Tensor2::row_vector(&[0.0]));
        let mut adam = AdamState::new(&model, AdamConfig::default());
        adam.step(&mut model, &Gradients(vec![Tensor2::row_vector(&[1.0])])).unwrap();
        assert!((model.0.data()[0] + 0.001).abs() < 1e-6);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut model = Scalar(Tensor2::row_vector(&[0.3, 0.1]));
            let mut adam = AdamState::new(&model, AdamConfig::default());
            let mut trace = Vec::new();
            for k in 0..50 {
                let g = Tensor2::row_vector(&[(k as f64).sin(), model.0.data()[0]]);
                adam.step(&mut model, &Gradients(vec![g])).unwrap();
                trace.push(model.0.clone());
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut model = Scalar(Tensor2::row_vector(&[0.0]));
        let mut adam = AdamState::new(&model, AdamConfig::default());
        assert!(adam.step(&mut model, &Gradients(vec![Tensor2::zeros(1, 2)])).is_err());
    }
}
