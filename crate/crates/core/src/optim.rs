//! Adam and the cosine learning-rate schedule.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_LR0: f64 = 3e-4;
pub const DEFAULT_LR_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if !(lr >= 0.0) {
        return Err(Error::invalid(format!("learning rate must be non-negative, got {lr}")));
    }
    if params.len() != grads.len() {
        return Err(Error::shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        p.expect_same_shape(g, "adam_step")?;
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| p.scale(0.0)).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape()) {
        return Err(Error::shape("optimizer state does not match the parameter list"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *pv -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// `lr_min + (lr0 - lr_min) (1 + cos(pi iter / total)) / 2`, with `iter`
/// clamped to `total`.
pub fn cosine_lr(iter: usize, total: usize, lr0: f64, lr_min: f64) -> Result<f64> {
    if !(lr0 >= 0.0) || !(lr_min >= 0.0) {
        return Err(Error::invalid(format!(
            "learning rates must be non-negative, got {lr0} and {lr_min}"
        )));
    }
    if lr_min > lr0 {
        return Err(Error::invalid(format!("lr_min {lr_min} exceeds lr0 {lr0}")));
    }
    if total == 0 {
        return Err(Error::invalid("schedule length must be positive"));
    }
    let frac = iter.min(total) as f64 / total as f64;
    Ok(lr_min + (lr0 - lr_min) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints_and_midpoint() {
        let (a, b) = (DEFAULT_LR0, DEFAULT_LR_MIN);
        assert_eq!(cosine_lr(0, 2000, a, b).unwrap(), a);
        assert!((cosine_lr(2000, 2000, a, b).unwrap() - b).abs() < 1e-18);
        assert!((cosine_lr(1000, 2000, a, b).unwrap() - (a + b) / 2.0).abs() < 1e-18);
        assert!((cosine_lr(5000, 2000, a, b).unwrap() - b).abs() < 1e-18);
    }

    #[test]
    fn cosine_monotone() {
        let lrs: Vec<f64> = (0..=100).map(|i| cosine_lr(i, 100, 1.0, 0.1).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn negative_lr_rejected() {
        assert!(cosine_lr(0, 10, -1.0, 0.0).is_err());
        assert!(cosine_lr(0, 10, 1.0, -1e-6).is_err());
        assert!(cosine_lr(0, 0, 1.0, 0.0).is_err());
        let mut p = vec![Tensor::zeros(&[2]).unwrap()];
        let g = vec![Tensor::zeros(&[2]).unwrap()];
        assert!(adam_step(&mut p, &g, &mut AdamState::new(), -0.1, &AdamConfig::default()).is_err());
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap()];
        let g = vec![Tensor::zeros(&[3]).unwrap()];
        let mut st = AdamState::new();
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut st, 1e-2, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p[0].data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut p = vec![Tensor::new(&[2], vec![0.0, 0.0]).unwrap()];
        let g = vec![Tensor::new(&[2], vec![4.0, -0.5]).unwrap()];
        let mut st = AdamState::new();
        adam_step(&mut p, &g, &mut st, 0.1, &AdamConfig::default()).unwrap();
        assert!((p[0].data()[0] + 0.1 * 4.0 / (4.0 + 1e-8)).abs() < 1e-15);
        assert!((p[0].data()[1] - 0.1 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }
}
