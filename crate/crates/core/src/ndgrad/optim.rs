use super::mlp::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One Adam step with decoupled weight decay. Gradients are left untouched.
pub fn adam_step(params: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    if let Some(i) = params.grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite gradient at parameter {i} ({})",
            params.grads[i]
        )));
    }
    params.step_count += 1;
    let t = params.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    for i in 0..params.values.len() {
        let g = params.grads[i];
        let m = cfg.beta1 * params.adam_m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * params.adam_v[i] + (1.0 - cfg.beta2) * g * g;
        params.adam_m[i] = m;
        params.adam_v[i] = v;
        let delta = cfg.lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
        params.values[i] = params.values[i] * decay - delta;
    }
    Ok(())
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the factor applied.
pub fn clip_grad_norm(params: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm {
        let k = max_norm / norm;
        params.grads.iter_mut().for_each(|g| *g *= k);
        k
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = ParamStore::new(vec![1.0]);
        p.grads[0] = 1.0;
        let cfg = AdamConfig {
            eps: 1e-12,
            ..AdamConfig::new(3e-4, 0.0)
        };
        adam_step(&mut p, &cfg).unwrap();
        // bias-corrected first step: lr * g / (sqrt(g^2) + eps)
        let expect = 1.0 - 3e-4 * 1.0 / (1.0 + 1e-12);
        assert!((p.values[0] - expect).abs() < 1e-15);
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = ParamStore::new(vec![0.5, -2.0]);
        adam_step(&mut p, &AdamConfig::new(3e-4, 0.0)).unwrap();
        assert_eq!(p.values, vec![0.5, -2.0]);
    }

    #[test]
    fn decoupled_decay_scales_values() {
        let mut p = ParamStore::new(vec![2.0]);
        adam_step(&mut p, &AdamConfig::new(3e-4, 1e-2)).unwrap();
        assert_eq!(p.values[0], 2.0 * (1.0 - 3e-6));
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = ParamStore::new(vec![1.0, 1.0]);
        p.grads[1] = f64::NAN;
        assert!(matches!(
            adam_step(&mut p, &AdamConfig::new(1e-3, 0.0)),
            Err(Error::Numerical(_))
        ));
        assert_eq!(p.values, vec![1.0, 1.0]);
        assert_eq!(p.step_count, 0);
    }

    #[test]
    fn clip_examples() {
        let mut p = ParamStore::new(vec![0.0; 2]);
        p.grads = vec![12.0, 16.0];
        assert_eq!(clip_grad_norm(&mut p, 10.0), 0.5);
        assert_eq!(p.grads, vec![6.0, 8.0]);
        p.grads = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut p, 10.0), 1.0);
        assert_eq!(p.grads, vec![3.0, 4.0]);
    }
}
