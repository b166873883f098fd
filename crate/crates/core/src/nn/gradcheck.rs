use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{Gradients, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
    /// Gradients below this magnitude are compared in absolute terms; the
    /// central difference cannot resolve them any better.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, samples: 200, seed: 0, abs_floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation flipped a ReLU mask.
    pub skipped: usize,
    pub worst: Option<WorstParam>,
}

/// The parameter with the largest relative error.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstParam {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `loss` on a random
/// subsample of scalar parameters.
///
/// `masks` reports every ReLU on/off state of a forward pass; a parameter is
/// skipped when either perturbed evaluation changes it, since the difference
/// quotient is then straddling a kink.
pub fn finite_diff_check<M, L, K>(
    model: &M,
    analytic: &Gradients,
    loss: L,
    masks: K,
    options: GradCheckOptions,
) -> Result<GradCheckReport>
where
    M: ParamSet + Clone,
    L: Fn(&M) -> Result<f64>,
    K: Fn(&M) -> Result<Vec<bool>>,
{
    if !(1e-7..=1e-3).contains(&options.eps) {
        return Err(Error::invalid("eps", format!("{} is outside [1e-7, 1e-3]", options.eps)));
    }
    analytic.check_mirrors(model)?;
    let sizes: Vec<usize> = model.params().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut picks = sample(&mut rng, total, options.samples.min(total)).into_vec();
    picks.sort_unstable();

    let base_masks = masks(model)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, skipped: 0, worst: None };
    for flat in picks {
        let (tensor, index) = locate(&sizes, flat);
        let perturbed = |delta: f64| {
            let mut m = model.clone();
            m.params_mut()[tensor].data_mut()[index] += delta;
            m
        };
        let plus = perturbed(options.eps);
        let minus = perturbed(-options.eps);
        if masks(&plus)? != base_masks || masks(&minus)? != base_masks {
            report.skipped += 1;
            continue;
        }
        let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * options.eps);
        let a = analytic.0[tensor].data()[index];
        let err = relative_error(a, numeric, options.abs_floor);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            let name = model.named_params()[tensor].0.clone();
            report.worst = Some(WorstParam { name, index, analytic: a, numeric });
        }
        report.checked += 1;
    }
    Ok(report)
}

fn locate(sizes: &[usize], mut flat: usize) -> (usize, usize) {
    for (t, &n) in sizes.iter().enumerate() {
        if flat < n {
            return (t, flat);
        }
        flat -= n;
    }
    unreachable!("index within total parameter count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, Tensor2};

    #[derive(Clone)]
    struct Linear(DenseLayer, DenseLayer);

    impl ParamSet for Linear {
        fn named_params(&self) -> Vec<(String, &Tensor2)> {
            vec![
                ("w0".into(), &self.0.weight),
                ("b0".into(), &self.0.bias),
                ("w1".into(), &self.1.weight),
                ("b1".into(), &self.1.bias),
            ]
        }
        fn params_mut(&mut self) -> Vec<&mut Tensor2> {
            vec![&mut self.0.weight, &mut self.0.bias, &mut self.1.weight, &mut self.1.bias]
        }
    }

    #[test]
    fn linear_network_is_exact_to_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Linear(
            DenseLayer::new(&mut rng, 3, 4, Activation::Identity),
            DenseLayer::new(&mut rng, 4, 2, Activation::Identity),
        );
        net.0.bias = Tensor2::row_vector(&[0.1, -0.2, 0.3, 0.05]);
        let x = Tensor2::from_rows(&[vec![0.3, -0.7, 1.1], vec![0.2, 0.4, -0.5]]).unwrap();
        let r = Tensor2::from_rows(&[vec![0.9, -0.4], vec![0.25, 0.6]]).unwrap();
        let loss = |n: &Linear| -> Result<f64> {
            let (h, _) = n.0.forward(&x)?;
            let (y, _) = n.1.forward(&h)?;
            Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
        };
        let (h, c0) = net.0.forward(&x).unwrap();
        let (_, c1) = net.1.forward(&h).unwrap();
        let g1 = net.1.backward(&c1, &r).unwrap();
        let g0 = net.0.backward(&c0, &g1.input).unwrap();
        let grads = Gradients(vec![g0.weight, g0.bias, g1.weight, g1.bias]);
        let report = finite_diff_check(&net, &grads, loss, |_| Ok(Vec::new()), GradCheckOptions { samples: 1000, ..Default::default() })
            .unwrap();
        assert_eq!(report.checked, net.param_count());
        assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
    }

    #[test]
    fn eps_range_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Linear(
            DenseLayer::new(&mut rng, 1, 1, Activation::Identity),
            DenseLayer::new(&mut rng, 1, 1, Activation::Identity),
        );
        let grads = Gradients::zeros_like(&net);
        let opts = GradCheckOptions { eps: 1e-2, ..Default::default() };
        assert!(finite_diff_check(&net, &grads, |_| Ok(0.0), |_| Ok(Vec::new()), opts).is_err());
    }
}
