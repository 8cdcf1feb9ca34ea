use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::Mode;
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

type TrainForward = (Array2<f64>, BatchNormCache, Array1<f64>, Array1<f64>);

/// Per-column batch normalization over the documents of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Train mode normalizes with the batch's population statistics and
    /// folds them into the running averages; eval mode uses the running
    /// averages and leaves the state untouched.
    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, Option<BatchNormCache>)> {
        match mode {
            Mode::Eval => Ok((self.forward_eval(x), None)),
            Mode::Train => {
                let (out, cache, mean, var) = self.forward_train(x)?;
                let mo = self.momentum;
                self.running_mean = &self.running_mean * (1.0 - mo) + &mean * mo;
                self.running_var = &self.running_var * (1.0 - mo) + &var * mo;
                Ok((out, Some(cache)))
            }
        }
    }

    /// Output, cache, batch mean and batch variance.
    fn forward_train(&self, x: &Array2<f64>) -> Result<TrainForward> {
        let m = x.nrows();
        if m < 2 {
            return Err(Error::BatchTooSmall(m));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = x - &mean;
        let var = centered.mapv(|c| c * c).sum_axis(Axis(0)) / m as f64;
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let xhat = &centered * &inv_std;
        let out = &xhat * &self.gamma + &self.beta;
        Ok((out, BatchNormCache { xhat, inv_std }, mean, var))
    }

    pub fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        let scale = &self.gamma / &self.running_var.mapv(|v| (v + self.eps).sqrt());
        let shift = &self.beta - &(&self.running_mean * &scale);
        x * &scale + &shift
    }

    /// Returns `(d_input, d_gamma, d_beta)`.
    pub fn backward(&self, cache: &BatchNormCache, dout: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let m = dout.nrows() as f64;
        let dbeta = dout.sum_axis(Axis(0));
        let dgamma = (dout * &cache.xhat).sum_axis(Axis(0));
        let dxhat = dout * &self.gamma;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let dx = (&dxhat * m - &sum_dxhat - &(&cache.xhat * &sum_dxhat_xhat)) * &cache.inv_std / m;
        (dx, dgamma, dbeta)
    }
}
