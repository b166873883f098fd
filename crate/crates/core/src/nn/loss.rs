use crate::error::{Error, Result};
use crate::policy::Action;

use super::Tensor2;

/// Squared error on steering plus squared error on throttle, with its
/// gradient with respect to `u`.
pub fn action_loss(u: Action, target: Action) -> (f64, [f64; 2]) {
    let dd = u.delta - target.delta;
    let dt = u.tau - target.tau;
    (dd * dd + dt * dt, [2.0 * dd, 2.0 * dt])
}

/// Mean of per-row [`action_loss`] over a `B × 2` batch; the gradient is
/// already scaled by `1/B`. Also returns the per-sample losses.
pub fn batch_loss(outputs: &Tensor2, targets: &Tensor2) -> Result<(f64, Tensor2, Vec<f64>)> {
    if outputs.shape() != targets.shape() || outputs.cols() != 2 || outputs.rows() == 0 {
        return Err(Error::shape("batch_loss", format!("outputs {:?} vs targets {:?}", outputs.shape(), targets.shape())));
    }
    let b = outputs.rows();
    let scale = 1.0 / b as f64;
    let mut grad = Tensor2::zeros(b, 2);
    let mut per_sample = Vec::with_capacity(b);
    for r in 0..b {
        let u = Action { delta: outputs.get(r, 0), tau: outputs.get(r, 1) };
        let t = Action { delta: targets.get(r, 0), tau: targets.get(r, 1) };
        let (l, g) = action_loss(u, t);
        per_sample.push(l);
        grad.set(r, 0, g[0] * scale);
        grad.set(r, 1, g[1] * scale);
    }
    let mean = per_sample.iter().sum::<f64>() * scale;
    Ok((mean, grad, per_sample))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn equal_actions_have_zero_loss() {
        let u = Action::new(0.3, -0.2);
        assert_eq!(action_loss(u, u), (0.0, [0.0, 0.0]));
    }

    #[test]
    fn steering_error_only() {
        let (l, g) = action_loss(Action::new(0.5, 0.1), Action::new(0.0, 0.1));
        assert_eq!(l, 0.25);
        assert_eq!(g, [1.0, 0.0]);
    }

    #[test]
    fn batch_is_mean_of_samples() {
        let out = Tensor2::from_rows(&[vec![0.5, 0.2], vec![-0.1, 0.9]]).unwrap();
        let tgt = Tensor2::from_rows(&[vec![0.0, 0.2], vec![0.3, 0.4]]).unwrap();
        let (mean, grad, per) = batch_loss(&out, &tgt).unwrap();
        let first = 0.5f64.powi(2);
        let second = 0.4f64.powi(2) + 0.5f64.powi(2);
        assert!((per[0] - first).abs() < 1e-15 && (per[1] - second).abs() < 1e-15);
        assert!((mean - (first + second) / 2.0).abs() < 1e-15);
        assert!((grad.get(1, 0) - (-0.4)).abs() < 1e-15);
        assert!((grad.get(1, 1) - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0) {
            let (l, _) = action_loss(Action::new(a, b), Action::new(c, d));
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, a == c && b == d);
        }
    }
}
