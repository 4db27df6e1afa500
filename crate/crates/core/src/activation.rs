//! Elementwise nonlinearities used between fully connected layers.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, ArrayViewMut2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

pub const DEFAULT_LRELU_SLOPE: f64 = 0.01;
pub const DEFAULT_ELU_ALPHA: f64 = 1.0;

/// Activation function applied after a layer's affine map.
///
/// At kinks (0 for the rectifier family, 0 and 6 for `Relu6`) the derivative
/// is the right-hand one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    /// `min(max(x, 0), 6)`
    Relu6,
    Elu {
        alpha: f64,
    },
    LRelu {
        slope: f64,
    },
    Selu,
    Linear,
}

impl Activation {
    pub const ALL_DEFAULTS: [Activation; 8] = [
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Relu,
        Activation::Relu6,
        Activation::Elu {
            alpha: DEFAULT_ELU_ALPHA,
        },
        Activation::LRelu {
            slope: DEFAULT_LRELU_SLOPE,
        },
        Activation::Selu,
        Activation::Linear,
    ];

    pub fn elu() -> Self {
        Activation::Elu {
            alpha: DEFAULT_ELU_ALPHA,
        }
    }

    pub fn lrelu() -> Self {
        Activation::LRelu {
            slope: DEFAULT_LRELU_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::Elu { alpha } if !(alpha > 0.0 && alpha.is_finite()) => Err(Error::InvalidArgument(format!(
                "elu alpha must be positive, got {alpha}"
            ))),
            Activation::LRelu { slope } if !(slope > 0.0 && slope.is_finite()) => Err(Error::InvalidArgument(format!(
                "lrelu slope must be positive, got {slope}"
            ))),
            _ => Ok(()),
        }
    }

    /// Range narrower than the rating scale; such networks keep a linear output layer.
    pub fn is_bounded(&self) -> bool {
        matches!(self, Activation::Sigmoid | Activation::Tanh)
    }

    /// Activation used on the final decoder layer when `self` is the hidden activation.
    pub fn output_activation(&self) -> Activation {
        if self.is_bounded() {
            Activation::Linear
        } else {
            *self
        }
    }

    #[inline]
    pub fn apply<T: Real>(&self, x: T) -> T {
        let zero = T::zero();
        match *self {
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(zero),
            Activation::Relu6 => x.max(zero).min(T::of(6.0)),
            Activation::Elu { alpha } => {
                if x > zero {
                    x
                } else {
                    T::of(alpha) * x.exp_m1()
                }
            }
            Activation::LRelu { slope } => {
                if x >= zero {
                    x
                } else {
                    T::of(slope) * x
                }
            }
            Activation::Selu => {
                if x > zero {
                    T::of(SELU_LAMBDA) * x
                } else {
                    T::of(SELU_LAMBDA * SELU_ALPHA) * x.exp_m1()
                }
            }
            Activation::Linear => x,
        }
    }

    #[inline]
    pub fn derivative<T: Real>(&self, x: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match *self {
            Activation::Sigmoid => {
                let s = self.apply(x);
                s * (one - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                one - t * t
            }
            Activation::Relu => {
                if x >= zero {
                    one
                } else {
                    zero
                }
            }
            Activation::Relu6 => {
                if x >= zero && x < T::of(6.0) {
                    one
                } else {
                    zero
                }
            }
            Activation::Elu { alpha } => {
                if x >= zero {
                    one
                } else {
                    T::of(alpha) * x.exp()
                }
            }
            Activation::LRelu { slope } => {
                if x >= zero {
                    one
                } else {
                    T::of(slope)
                }
            }
            Activation::Selu => {
                if x >= zero {
                    T::of(SELU_LAMBDA)
                } else {
                    T::of(SELU_LAMBDA * SELU_ALPHA) * x.exp()
                }
            }
            Activation::Linear => one,
        }
    }

    pub fn apply_inplace<T: Real>(&self, mut z: ArrayViewMut2<'_, T>) {
        if *self == Activation::Linear {
            return;
        }
        z.mapv_inplace(|v| self.apply(v));
    }

    /// `grad ← grad ⊙ f'(pre)`.
    pub fn backprop_inplace<T: Real>(&self, mut grad: ArrayViewMut2<'_, T>, pre: ArrayView2<'_, T>) {
        if *self == Activation::Linear {
            return;
        }
        Zip::from(&mut grad)
            .and(&pre)
            .for_each(|g, &p| *g *= self.derivative(p));
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Activation::Sigmoid => f.write_str("sigmoid"),
            Activation::Tanh => f.write_str("tanh"),
            Activation::Relu => f.write_str("relu"),
            Activation::Relu6 => f.write_str("relu6"),
            Activation::Elu { alpha } if alpha == DEFAULT_ELU_ALPHA => f.write_str("elu"),
            Activation::Elu { alpha } => write!(f, "elu({alpha})"),
            Activation::LRelu { slope } if slope == DEFAULT_LRELU_SLOPE => f.write_str("lrelu"),
            Activation::LRelu { slope } => write!(f, "lrelu({slope})"),
            Activation::Selu => f.write_str("selu"),
            Activation::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `selu`, `elu`, `elu(0.5)`, `lrelu`, `lrelu(0.2)`, ... (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, param) = match s.find('(') {
            Some(open) if s.ends_with(')') => {
                let raw = &s[open + 1..s.len() - 1];
                let value: f64 = raw
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad activation parameter {raw:?}")))?;
                (&s[..open], Some(value))
            }
            Some(_) => {
                return Err(Error::InvalidArgument(format!(
                    "unterminated activation parameter in {s:?}"
                )))
            }
            None => (s.as_str(), None),
        };
        let act = match (name, param) {
            ("sigmoid", None) => Activation::Sigmoid,
            ("tanh", None) => Activation::Tanh,
            ("relu", None) => Activation::Relu,
            ("relu6", None) => Activation::Relu6,
            ("elu", p) => Activation::Elu {
                alpha: p.unwrap_or(DEFAULT_ELU_ALPHA),
            },
            ("lrelu" | "leaky_relu", p) => Activation::LRelu {
                slope: p.unwrap_or(DEFAULT_LRELU_SLOPE),
            },
            ("selu", None) => Activation::Selu,
            ("linear" | "none", None) => Activation::Linear,
            _ => return Err(Error::InvalidArgument(format!("unknown activation {s:?}"))),
        };
        act.validate()?;
        Ok(act)
    }
}

impl TryFrom<String> for Activation {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<Activation> for String {
    fn from(value: Activation) -> Self {
        value.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {{
            let (a, b): (f64, f64) = ($a, $b);
            assert!((a - b).abs() <= $tol, "{a} != {b} (tol {})", $tol);
        }};
    }

    #[test]
    fn selu_reference_points() {
        assert_eq!(Activation::Selu.apply(0.0f64), 0.0);
        // lambda * alpha * (e^-1 - 1)
        assert_close!(Activation::Selu.apply(-1.0f64), -1.1113307378125625, 1e-15);
        assert_close!(Activation::Selu.derivative(0.5f64), SELU_LAMBDA, 0.0);
    }

    #[test]
    fn relu_family_reference_points() {
        assert_eq!(Activation::Relu6.apply(8.0f64), 6.0);
        assert_eq!(Activation::Relu6.apply(-8.0f64), 0.0);
        assert_close!(Activation::lrelu().apply(-2.0f64), -0.02, 1e-15);
        assert_eq!(Activation::Relu.derivative(-3.0f64), 0.0);
        assert_eq!(Activation::Linear.derivative(7.5f64), 1.0);
    }

    #[test]
    fn kinks_take_right_hand_derivative() {
        assert_eq!(Activation::Relu.derivative(0.0f64), 1.0);
        assert_eq!(Activation::Relu6.derivative(0.0f64), 1.0);
        assert_eq!(Activation::Relu6.derivative(6.0f64), 0.0);
        assert_eq!(Activation::lrelu().derivative(0.0f64), 1.0);
        assert_eq!(Activation::elu().derivative(0.0f64), 1.0);
        assert_eq!(Activation::Selu.derivative(0.0f64), SELU_LAMBDA);
    }

    #[test]
    fn negative_part_and_unbounded_positive_part() {
        for x in [0.5f64, 3.0, 50.0] {
            for act in [
                Activation::Selu,
                Activation::elu(),
                Activation::lrelu(),
                Activation::Relu,
            ] {
                assert!(act.apply(x) > 0.0);
            }
            assert!(Activation::Relu6.apply(x) <= 6.0);
        }
        // unbounded: output keeps growing past the relu6 ceiling
        assert!(Activation::Selu.apply(1e3f64) > 6.0);
        assert!(Activation::Relu.apply(1e3f64) > 6.0);
        for x in [-0.1f64, -2.0, -30.0] {
            for act in [Activation::Selu, Activation::elu(), Activation::lrelu()] {
                assert!(act.apply(x) < 0.0, "{act} at {x}");
            }
            assert_eq!(Activation::Relu.apply(x), 0.0);
            assert_eq!(Activation::Relu6.apply(x), 0.0);
        }
    }

    #[test]
    fn derivatives_match_central_differences_away_from_kinks() {
        let h = 1e-6;
        for act in Activation::ALL_DEFAULTS {
            for x in [-2.3f64, -0.7, 0.4, 1.9, 7.0] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert_close!(act.derivative(x), fd, 1e-7);
            }
        }
    }

    #[test]
    fn bounded_activations_get_linear_output() {
        assert_eq!(Activation::Sigmoid.output_activation(), Activation::Linear);
        assert_eq!(Activation::Tanh.output_activation(), Activation::Linear);
        assert_eq!(Activation::Selu.output_activation(), Activation::Selu);
        assert_eq!(Activation::Relu6.output_activation(), Activation::Relu6);
    }

    #[test]
    fn names_round_trip() {
        for act in Activation::ALL_DEFAULTS {
            assert_eq!(act.to_string().parse::<Activation>().unwrap(), act);
        }
        let custom: Activation = "LReLU(0.2)".parse().unwrap();
        assert_eq!(custom, Activation::LRelu { slope: 0.2 });
        assert_eq!(custom.to_string(), "lrelu(0.2)");
        assert!("lrelu(-1)".parse::<Activation>().is_err());
        assert!("elu(0)".parse::<Activation>().is_err());
        assert!("swish".parse::<Activation>().is_err());
    }
}
