use serde::{Deserialize, Serialize};

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
    Selu,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Selu => selu(x),
        }
    }

    /// Derivative at pre-activation `x` given the output `y = apply(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA
                } else {
                    y + SELU_LAMBDA * SELU_ALPHA
                }
            }
        }
    }
}

/// Elementwise activation of a vector.
pub fn activation(kind: Activation, x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| kind.apply(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(activation(Activation::Relu, &[-1.0, 2.0]), vec![0.0, 2.0]);
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(selu(0.0), 0.0);
        assert_eq!(selu(1.0), SELU_LAMBDA);
        assert!((selu(1.0) - 1.0507009).abs() < 1e-7);
    }

    #[test]
    fn selu_is_continuous_at_zero() {
        assert!((selu(1e-15) - selu(-1e-15)).abs() < 1e-12);
    }

    #[test]
    fn selu_constants_solve_fixed_point() {
        // zero-mean unit-variance input maps to zero mean and unit variance;
        // check by quadrature over the standard normal density
        let n = 400_000;
        let (lo, hi) = (-12.0f64, 12.0f64);
        let dx = (hi - lo) / n as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 0..n {
            let x = lo + (k as f64 + 0.5) * dx;
            let w = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt() * dx;
            let y = selu(x);
            m1 += w * y;
            m2 += w * y * y;
        }
        assert!(m1.abs() < 1e-6, "mean {m1}");
        assert!((m2 - 1.0).abs() < 1e-6, "second moment {m2}");
    }

    #[test]
    fn derivatives_match_differences() {
        for kind in [Activation::Identity, Activation::Sigmoid, Activation::Tanh, Activation::Selu, Activation::Relu] {
            for &x in &[-2.3, -0.4, 0.7, 3.1] {
                let h = 1e-6;
                let num = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                let ana = kind.derivative(x, kind.apply(x));
                assert!((num - ana).abs() < 1e-7, "{kind:?} at {x}");
            }
        }
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(x in -700.0f64..700.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        }
    }
}
