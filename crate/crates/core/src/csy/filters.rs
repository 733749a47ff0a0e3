use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type Piece = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Piecewise-continuous function given by its breakpoints and one closure
/// per interval. Piece `i` covers `[b_{i−1}, b_i)`, so a breakpoint takes
/// the right limit.
#[derive(Clone)]
pub struct PiecewiseFilter {
    breakpoints: Vec<f64>,
    pieces: Vec<Piece>,
}

impl PiecewiseFilter {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Piece>) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::invalid("a piecewise filter needs one more piece than breakpoints"));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("filter breakpoints must be finite and strictly increasing"));
        }
        Ok(PiecewiseFilter { breakpoints, pieces })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b <= x);
        (self.pieces[i])(x)
    }
}

impl fmt::Debug for PiecewiseFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseFilter").field("breakpoints", &self.breakpoints).finish_non_exhaustive()
    }
}

/// Filter applied to the running sums inside the path-dependent terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FilterSpec {
    /// `(b√(2π))^{−1}·exp(−x²/(2b²))`.
    Gaussian {
        bandwidth: f64,
    },
    Constant {
        value: f64,
    },
    #[serde(skip)]
    Piecewise(PiecewiseFilter),
}

impl FilterSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::invalid(format!("gaussian bandwidth {bandwidth} must be positive")));
        }
        Ok(FilterSpec::Gaussian { bandwidth })
    }

    pub fn constant(value: f64) -> Self {
        FilterSpec::Constant { value }
    }

    pub fn zero() -> Self {
        FilterSpec::Constant { value: 0.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FilterSpec::Gaussian { bandwidth: b } => {
                (-x * x / (2.0 * b * b)).exp() / (b * (2.0 * std::f64::consts::PI).sqrt())
            }
            FilterSpec::Constant { value } => *value,
            FilterSpec::Piecewise(p) => p.eval(x),
        }
    }

    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            FilterSpec::Gaussian { bandwidth } => Some(*bandwidth),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FilterSpec::Gaussian { bandwidth } = self {
            FilterSpec::gaussian(*bandwidth)?;
        }
        Ok(())
    }
}
