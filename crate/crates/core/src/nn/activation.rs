use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Mode;

pub const RRELU_LOWER: f64 = 1.0 / 8.0;
pub const RRELU_UPPER: f64 = 1.0 / 3.0;
/// Negative-side slope used by RReLU outside training.
pub const RRELU_EVAL_SLOPE: f64 = (RRELU_LOWER + RRELU_UPPER) / 2.0;

const LEAKY_SLOPE: f64 = 0.01;
const SELU_SCALE: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
const ELU_ALPHA: f64 = 1.0;
const CELU_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    LeakyReLU,
    RReLU,
    ELU,
    SELU,
    CELU,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 7] = [
        Activation::ReLU,
        Activation::LeakyReLU,
        Activation::RReLU,
        Activation::ELU,
        Activation::SELU,
        Activation::CELU,
        Activation::Sigmoid,
    ];

    /// Value at `x`. `slope` is the RReLU negative-side slope.
    #[inline]
    pub(crate) fn eval(self, x: f64, slope: f64) -> f64 {
        match self {
            Activation::ReLU => x.max(0.0),
            Activation::LeakyReLU => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::RReLU => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::ELU => {
                if x > 0.0 {
                    x
                } else {
                    ELU_ALPHA * x.exp_m1()
                }
            }
            Activation::SELU => {
                if x > 0.0 {
                    SELU_SCALE * x
                } else {
                    SELU_SCALE * SELU_ALPHA * x.exp_m1()
                }
            }
            Activation::CELU => {
                if x > 0.0 {
                    x
                } else {
                    CELU_ALPHA * (x / CELU_ALPHA).exp_m1()
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at pre-activation `x`.
    #[inline]
    pub(crate) fn derivative(self, x: f64, slope: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyReLU => {
                if x >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::RReLU => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::ELU => {
                if x > 0.0 {
                    1.0
                } else {
                    ELU_ALPHA * x.exp()
                }
            }
            Activation::SELU => {
                if x > 0.0 {
                    SELU_SCALE
                } else {
                    SELU_SCALE * SELU_ALPHA * x.exp()
                }
            }
            Activation::CELU => {
                if x > 0.0 {
                    1.0
                } else {
                    (x / CELU_ALPHA).exp()
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    /// Derivative given both the pre-activation `x` and the output
    /// `y = eval(x, slope)`; avoids recomputing exponentials.
    #[inline]
    pub(crate) fn derivative_from_output(self, x: f64, y: f64, slope: f64) -> f64 {
        match self {
            Activation::ELU if x <= 0.0 => y + ELU_ALPHA,
            Activation::SELU if x <= 0.0 => y + SELU_SCALE * SELU_ALPHA,
            Activation::CELU if x <= 0.0 => y / CELU_ALPHA + 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            _ => self.derivative(x, slope),
        }
    }

    pub(crate) fn is_randomized(self) -> bool {
        self == Activation::RReLU
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activation::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!(
                    "unknown activation `{s}`; expected one of {}",
                    Activation::ALL.map(|a| a.to_string()).join(", ")
                )
            })
    }
}

/// Samples RReLU slopes for a train-mode pass.
pub(crate) fn sample_slopes<R: Rng>(shape: (usize, usize), rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.gen_range(RRELU_LOWER..RRELU_UPPER))
}

/// Elementwise activation of a vector. RReLU draws a slope per element in
/// train mode and uses [`RRELU_EVAL_SLOPE`] otherwise.
pub fn apply_activation<R: Rng>(kind: Activation, pre: &[f64], mode: Mode, rng: &mut R) -> Vec<f64> {
    pre.iter()
        .map(|&x| {
            let slope = if kind.is_randomized() && mode == Mode::Train {
                rng.gen_range(RRELU_LOWER..RRELU_UPPER)
            } else {
                RRELU_EVAL_SLOPE
            };
            kind.eval(x, slope)
        })
        .collect()
}
