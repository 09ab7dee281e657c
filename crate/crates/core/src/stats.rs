//! Order-fixed reductions and small estimator summaries.

use serde::{Deserialize, Serialize};

/// Pairwise (cascade) summation over the slice in its given order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// `ln Σ exp(x_i)`, stable for large or very negative arguments.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            samples: 0,
        }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let m = mean(xs);
        let se = if n > 1 {
            let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
            (pairwise_sum(&dev) / (n as f64 - 1.0) / n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Self {
            value: m,
            std_error: se,
            samples: n,
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self {
            value: self.value * c,
            std_error: self.std_error * c.abs(),
            samples: self.samples,
        }
    }

    /// `|self - other| <= k` combined standard errors.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * (self.std_error + other.std_error)
    }
}
