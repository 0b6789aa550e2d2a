//! Named scalar functions usable in config files.
//!
//! No runtime expression interpreter: coefficients and densities are picked
//! from a fixed set of built-ins (plus user tables). Closed-form classics
//! like Brownian motion with drift or Ornstein-Uhlenbeck are assembled from
//! these in [`crate::model`].

use serde::{Deserialize, Serialize};

use crate::{QsdError, Result};

/// A named real function on `(0, ell)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FuncSpec {
    Constant {
        value: f64,
    },
    Affine {
        slope: f64,
        intercept: f64,
    },
    /// `scale * exp(rate * x)`
    Exponential {
        scale: f64,
        rate: f64,
    },
    /// `scale * x^exponent`
    Power {
        scale: f64,
        exponent: f64,
    },
    /// Piecewise-linear interpolation of `(xs, ys)`; clamped beyond the ends.
    Tabulated {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

impl FuncSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FuncSpec::Constant { value } => *value,
            FuncSpec::Affine { slope, intercept } => slope * x + intercept,
            FuncSpec::Exponential { scale, rate } => scale * (rate * x).exp(),
            FuncSpec::Power { scale, exponent } => scale * x.powf(*exponent),
            FuncSpec::Tabulated { xs, ys } => interp(xs, ys, x),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FuncSpec::Tabulated { xs, ys } => {
                if xs.len() != ys.len() || xs.len() < 2 {
                    return Err(QsdError::Config(
                        "tabulated function needs matching xs/ys of length >= 2".into(),
                    ));
                }
                if xs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(QsdError::Config(
                        "tabulated function xs must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v < x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_evaluate() {
        assert_eq!(FuncSpec::Constant { value: 0.5 }.eval(7.0), 0.5);
        assert_eq!(
            FuncSpec::Affine { slope: -1.0, intercept: 0.0 }.eval(2.0),
            -2.0
        );
        let e = FuncSpec::Exponential { scale: 2.0, rate: -2.0 };
        assert!((e.eval(1.0) - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        let p = FuncSpec::Power { scale: 1.0, exponent: -1.5 };
        assert!((p.eval(4.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn tabulated_interpolates_and_clamps() {
        let t = FuncSpec::Tabulated {
            xs: vec![0.0, 1.0, 2.0],
            ys: vec![0.0, 2.0, 0.0],
        };
        assert_eq!(t.eval(0.5), 1.0);
        assert_eq!(t.eval(1.5), 1.0);
        assert_eq!(t.eval(-3.0), 0.0);
        assert_eq!(t.eval(9.0), 0.0);
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        let t = FuncSpec::Tabulated { xs: vec![0.0, 0.0], ys: vec![1.0, 1.0] };
        assert!(t.validate().is_err());
    }
}
