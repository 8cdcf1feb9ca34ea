use serde::{Deserialize, Serialize};

use super::Gradients;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Classic L2: `grad += weight_decay * param` before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

/// Adam with bias correction, one moment buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        AdamState {
            config,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Updates `params` in place. Non-finite gradients abort before any
    /// parameter is touched.
    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: &Gradients) -> Result<()> {
        if params.len() != grads.tensors.len() || params.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "{} parameter tensors, {} gradient tensors, {} moment buffers",
                params.len(),
                grads.tensors.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&grads.tensors).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::Dimension(format!(
                    "tensor {i}: {} params, {} grads",
                    p.len(),
                    g.len()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient tensor {i}")));
            }
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let step = lr / bc1;
        let inv_bc2 = 1.0 / bc2;
        for (i, p) in params.iter_mut().enumerate() {
            let g = &grads.tensors[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for (((pj, &gj), mj), vj) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gj = gj + weight_decay * *pj;
                *mj = beta1 * *mj + (1.0 - beta1) * gj;
                *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
                *pj -= step * *mj / ((*vj * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn no_decay() -> AdamConfig {
        AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = vec![1.5, -2.0];
        let mut adam = AdamState::new(no_decay(), &[2]);
        adam.step(
            vec![&mut p],
            &Gradients {
                tensors: vec![vec![0.0, 0.0]],
            },
        )
        .unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t=1: mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps)
        let mut p = vec![1.0];
        let mut adam = AdamState::new(no_decay(), &[1]);
        adam.step(
            vec![&mut p],
            &Gradients {
                tensors: vec![vec![4.0]],
            },
        )
        .unwrap();
        let expected = 1.0 - 1e-3 * 4.0 / (4.0 + 1e-8);
        assert_abs_diff_eq!(p[0], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.999, epsilon = 1e-9);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![0.3, -0.7, 2.0];
            let mut adam = AdamState::new(AdamConfig::default(), &[3]);
            for k in 0..50 {
                let g = vec![(k as f64).sin(), 0.1 * k as f64, -1.0];
                adam.step(vec![&mut p], &Gradients { tensors: vec![g] }).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut p = vec![1.0];
        let mut adam = AdamState::new(no_decay(), &[1]);
        let err = adam
            .step(
                vec![&mut p],
                &Gradients {
                    tensors: vec![vec![f64::NAN]],
                },
            )
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, vec![1.0]);
        assert_eq!(adam.t, 0);
    }

    #[test]
    fn weight_decay_shrinks_norm() {
        let mut p: Vec<f64> = (0..20).map(|i| 0.5 + 0.1 * i as f64).collect();
        let mut adam = AdamState::new(
            AdamConfig {
                weight_decay: 1e-3,
                ..AdamConfig::default()
            },
            &[20],
        );
        let mut norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..100 {
            adam.step(
                vec![&mut p],
                &Gradients {
                    tensors: vec![vec![0.0; 20]],
                },
            )
            .unwrap();
            let next = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(next < norm);
            norm = next;
        }
    }
}
