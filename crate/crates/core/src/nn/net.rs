use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::{sample_slopes, Activation, RRELU_EVAL_SLOPE};
use super::adam::AdamState;
use super::batchnorm::{BatchNorm, BatchNormCache};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Shape and options of a [`ScoringNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    /// Number of weight matrices; `1` is a linear model.
    pub layers: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub batchnorm: bool,
    pub seed: u64,
}

impl NetConfig {
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(std::iter::repeat_n(self.hidden, self.layers.saturating_sub(1)));
        dims.push(1);
        dims
    }
}

/// Feed-forward scoring function `f: R^d -> R`, applied row-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringNet {
    pub(crate) layer_dims: Vec<usize>,
    pub(crate) activation: Activation,
    /// `in x out` weight matrix per layer.
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    /// One per hidden layer when enabled.
    pub(crate) batchnorm: Option<Vec<BatchNorm>>,
    pub(crate) mode: Mode,
    pub(crate) rng_seed: u64,
    /// Train-mode forward passes so far; keys the RReLU slope stream.
    pub(crate) forward_calls: u64,
    /// Bumped on every parameter update; caches remember the value they saw.
    pub(crate) version: u64,
}

struct HiddenCache {
    input: Array2<f64>,
    bn: Option<BatchNormCache>,
    /// Batchnorm input, kept for eval-mode passes.
    bn_input: Option<Array2<f64>>,
    pre_activation: Array2<f64>,
    slopes: Option<Array2<f64>>,
}

/// Activations recorded by [`ScoringNet::forward`] for the backward pass.
pub struct ForwardCache {
    hidden: Vec<HiddenCache>,
    last_input: Array2<f64>,
    version: u64,
    rows: usize,
}

/// Parameter gradients in [`ScoringNet::param_slices_mut`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn is_zero(&self) -> bool {
        self.tensors.iter().flatten().all(|&g| g == 0.0)
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

impl ScoringNet {
    pub fn new(config: &NetConfig) -> Result<Self> {
        if config.input_dim == 0 || config.layers == 0 {
            return Err(Error::invalid(format!(
                "net needs input_dim >= 1 and layers >= 1, got {} and {}",
                config.input_dim, config.layers
            )));
        }
        if config.layers > 1 && config.hidden == 0 {
            return Err(Error::invalid("hidden width must be >= 1"));
        }
        let dims = config.layer_dims();
        let mut rng = seed::rng(config.seed, "init", &[]);
        let mut weights = Vec::with_capacity(config.layers);
        let mut biases = Vec::with_capacity(config.layers);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((fan_in, fan_out), || {
                rng.gen_range(-bound..bound)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        let batchnorm = config
            .batchnorm
            .then(|| dims[1..dims.len() - 1].iter().map(|&h| BatchNorm::new(h)).collect());
        Ok(ScoringNet {
            layer_dims: dims,
            activation: config.activation,
            weights,
            biases,
            batchnorm,
            mode: Mode::Train,
            rng_seed: config.seed,
            forward_calls: 0,
            version: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn has_batchnorm(&self) -> bool {
        self.batchnorm.is_some()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        self.version += 1;
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        self.version += 1;
        &mut self.biases
    }

    pub fn batchnorm_mut(&mut self) -> Option<&mut [BatchNorm]> {
        self.version += 1;
        self.batchnorm.as_deref_mut()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} features, net expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Dimension("empty input".into()));
        }
        Ok(())
    }

    /// Forward pass in the net's current mode, keeping what backward needs.
    /// Train mode updates batchnorm running statistics and draws RReLU
    /// slopes from a stream keyed by the pass count.
    pub fn forward(&mut self, x: ArrayView2<f64>) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let mode = self.mode;
        if mode == Mode::Train && self.batchnorm.is_some() && x.nrows() < 2 {
            return Err(Error::BatchTooSmall(x.nrows()));
        }
        let mut rng = seed::rng(self.rng_seed, "rrelu", &[self.forward_calls]);
        if mode == Mode::Train {
            self.forward_calls += 1;
        }
        let n_layers = self.weights.len();
        let mut hidden = Vec::with_capacity(n_layers - 1);
        let mut a = x.to_owned();
        for l in 0..n_layers - 1 {
            let z = a.dot(&self.weights[l]) + &self.biases[l];
            let (pre, bn_cache, bn_input) = match self.batchnorm.as_mut() {
                Some(bns) => {
                    let (pre, c) = bns[l].forward(&z, mode)?;
                    let keep = (mode == Mode::Eval).then_some(z);
                    (pre, c, keep)
                }
                None => (z, None, None),
            };
            let kind = self.activation;
            let slopes = (kind.is_randomized() && mode == Mode::Train).then(|| sample_slopes(pre.dim(), &mut rng));
            let out = match &slopes {
                Some(s) => ndarray::Zip::from(&pre).and(s).map_collect(|&p, &sl| kind.eval(p, sl)),
                None => pre.mapv(|p| kind.eval(p, RRELU_EVAL_SLOPE)),
            };
            hidden.push(HiddenCache {
                input: a,
                bn: bn_cache,
                bn_input,
                pre_activation: pre,
                slopes,
            });
            a = out;
        }
        let scores = a.dot(&self.weights[n_layers - 1]) + &self.biases[n_layers - 1];
        let scores: Vec<f64> = scores.column(0).to_vec();
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score of row {i}")));
        }
        let rows = x.nrows();
        Ok((
            scores,
            ForwardCache {
                hidden,
                last_input: a,
                version: self.version,
                rows,
            },
        ))
    }

    /// Eval-mode scores without touching any state.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_input(&x)?;
        let n_layers = self.weights.len();
        let mut a = x.to_owned();
        for l in 0..n_layers - 1 {
            let z = a.dot(&self.weights[l]) + &self.biases[l];
            let pre = match &self.batchnorm {
                Some(bns) => bns[l].forward_eval(&z),
                None => z,
            };
            let kind = self.activation;
            a = pre.mapv(|p| kind.eval(p, RRELU_EVAL_SLOPE));
        }
        let scores = a.dot(&self.weights[n_layers - 1]) + &self.biases[n_layers - 1];
        Ok(scores.column(0).to_vec())
    }

    /// Gradients of `sum_i upstream[i] * score[i]` for every parameter.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(Error::invalid("stale forward cache: parameters changed since forward"));
        }
        if upstream.len() != cache.rows {
            return Err(Error::Dimension(format!(
                "{} upstream gradients for {} rows",
                upstream.len(),
                cache.rows
            )));
        }
        let n_layers = self.weights.len();
        let mut dw = vec![Vec::new(); n_layers];
        let mut db = vec![Vec::new(); n_layers];
        let mut dbn: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();

        let dout = Array2::from_shape_vec((cache.rows, 1), upstream.to_vec()).expect("shape checked above");
        dw[n_layers - 1] = cache.last_input.t().dot(&dout).into_raw_vec_and_offset().0;
        db[n_layers - 1] = dout.sum_axis(Axis(0)).to_vec();
        let mut da = dout.dot(&self.weights[n_layers - 1].t());

        for l in (0..n_layers - 1).rev() {
            let hc = &cache.hidden[l];
            let post = match cache.hidden.get(l + 1) {
                Some(next) => &next.input,
                None => &cache.last_input,
            };
            let kind = self.activation;
            let dpre = match &hc.slopes {
                Some(s) => ndarray::Zip::from(&da)
                    .and(&hc.pre_activation)
                    .and(s)
                    .map_collect(|&g, &p, &sl| g * kind.derivative(p, sl)),
                None => ndarray::Zip::from(&da)
                    .and(&hc.pre_activation)
                    .and(post)
                    .map_collect(|&g, &p, &y| g * kind.derivative_from_output(p, y, RRELU_EVAL_SLOPE)),
            };
            let dz = match (&self.batchnorm, &hc.bn) {
                (Some(bns), Some(bc)) => {
                    let (dz, dgamma, dbeta) = bns[l].backward(bc, &dpre);
                    dbn.push((dgamma.to_vec(), dbeta.to_vec()));
                    dz
                }
                (Some(bns), None) => {
                    // eval-mode batchnorm is a fixed per-column affine map
                    let bn = &bns[l];
                    let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
                    let scale = &bn.gamma * &inv_std;
                    let z = hc.bn_input.as_ref().expect("eval pass keeps batchnorm input");
                    let xhat = (z - &bn.running_mean) * &inv_std;
                    let dgamma = (&dpre * &xhat).sum_axis(Axis(0));
                    let dbeta = dpre.sum_axis(Axis(0));
                    dbn.push((dgamma.to_vec(), dbeta.to_vec()));
                    &dpre * &scale
                }
                _ => dpre,
            };
            dw[l] = hc.input.t().dot(&dz).into_raw_vec_and_offset().0;
            db[l] = dz.sum_axis(Axis(0)).to_vec();
            if l > 0 {
                da = dz.dot(&self.weights[l].t());
            }
        }
        dbn.reverse();

        let mut tensors = Vec::with_capacity(2 * n_layers + 2 * dbn.len());
        for (w, b) in dw.into_iter().zip(db) {
            tensors.push(w);
            tensors.push(b);
        }
        for (g, b) in dbn {
            tensors.push(g);
            tensors.push(b);
        }
        Ok(Gradients { tensors })
    }

    /// Mutable flat views of every trainable parameter: per layer the
    /// weights (row-major) and bias, then per hidden layer batchnorm gamma
    /// and beta.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        if let Some(bns) = self.batchnorm.as_mut() {
            for bn in bns {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        let mut me = self.clone();
        me.param_slices_mut().iter().map(|s| s.len()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.param_shapes().iter().sum()
    }

    /// Flattened copy of all trainable parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut me = self.clone();
        me.param_slices_mut().into_iter().flat_map(|s| s.to_vec()).collect()
    }

    pub fn param_norm(&self) -> f64 {
        self.flat_params().iter().map(|p| p * p).sum::<f64>().sqrt()
    }

    /// One optimizer step with `grads`.
    pub fn apply_gradients(&mut self, adam: &mut AdamState, grads: &Gradients) -> Result<()> {
        adam.step(self.param_slices_mut(), grads)?;
        self.version += 1;
        if self.param_slices_mut().iter().any(|s| s.iter().any(|p| !p.is_finite())) {
            return Err(Error::Divergence("parameter became non-finite".into()));
        }
        Ok(())
    }
}
