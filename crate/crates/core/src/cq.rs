//! Backward-Euler convolution quadrature (CQ) for the Caputo derivative.
//!
//! The weights are the Taylor coefficients of the generating function
//! `(1 − ξ)^α = Σ_j b_j ξ^j`, and the discrete derivative of a sequence is
//!
//! ```text
//!     ∂̄_τ^α φⁿ = τ^{−α} Σ_{j=0}^{n} b_j φ^{n−j}.
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::powf;

/// Taylor coefficients of `(1 − ξ)^order`, first `n_terms` of them.
///
/// Uses `b_j = b_{j−1} (j − 1 − order) / j`, which never forms a Gamma
/// function and so stays accurate for thousands of terms. `order` may be any
/// real number; negative orders give the positive weights of fractional
/// integration.
pub fn generating_coefficients(order: f64, n_terms: usize) -> Vec<f64> {
    let mut b = Vec::with_capacity(n_terms);
    if n_terms == 0 {
        return b;
    }
    b.push(1.0);
    for j in 1..n_terms {
        let jf = j as f64;
        let prev = b[j - 1];
        b.push(prev * (jf - 1.0 - order) / jf);
    }
    b
}

/// CQ weights `b_0..b_{n_terms−1}` for a fixed order and time step.
#[derive(Debug, Clone, PartialEq)]
pub struct CqWeights {
    alpha: f64,
    tau: f64,
    weights: Vec<f64>,
}

impl CqWeights {
    /// Builds the weights for `0 < alpha ≤ 1`. `alpha = 1` reproduces the
    /// classical backward difference `[1, −1, 0, …]`.
    pub fn new(alpha: f64, tau: f64, n_terms: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidOrder(alpha));
        }
        if n_terms == 0 {
            return Err(Error::InvalidSize("CQ weights need at least one term"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter("time step must be positive"));
        }
        Ok(Self {
            alpha,
            tau,
            weights: generating_coefficients(alpha, n_terms),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `τ^{−α}`
    pub fn scale(&self) -> f64 {
        powf(self.tau, -self.alpha)
    }

    /// Discrete derivative at the last level of `history = [φ⁰, …, φⁿ]`.
    pub fn apply(&self, history: &[&[f64]]) -> Result<Vec<f64>> {
        let Some(first) = history.first() else {
            return Err(Error::InvalidSize("empty history"));
        };
        if history.len() > self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: history.len(),
            });
        }
        let dim = first.len();
        let n = history.len() - 1;
        let mut out = vec![0.0; dim];
        for (j, &b) in self.weights[..=n].iter().enumerate() {
            let phi = history[n - j];
            if phi.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: phi.len(),
                });
            }
            for (o, p) in out.iter_mut().zip(phi) {
                *o += b * p;
            }
        }
        let s = self.scale();
        out.iter_mut().for_each(|v| *v *= s);
        Ok(out)
    }

    /// Scalar version of [`apply`](Self::apply) evaluated at every level:
    /// returns `∂̄_τ^α φⁿ` for `n = 0..len(seq)`.
    pub fn apply_scalar_all(&self, seq: &[f64]) -> Result<Vec<f64>> {
        if seq.len() > self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: seq.len(),
            });
        }
        let s = self.scale();
        Ok((0..seq.len())
            .map(|n| {
                s * self.weights[..=n]
                    .iter()
                    .enumerate()
                    .map(|(j, b)| b * seq[n - j])
                    .sum::<f64>()
            })
            .collect())
    }

    /// Largest deviation of the running sums `Σ_{n≤m} b_n` from the
    /// independently generated order-`(α − 1)` weights `b_m^{(α−1)}`.
    pub fn partial_sum_check(&self) -> f64 {
        let shifted = generating_coefficients(self.alpha - 1.0, self.weights.len());
        let mut acc = 0.0;
        let mut worst: f64 = 0.0;
        for (b, s) in self.weights.iter().zip(&shifted) {
            acc += b;
            worst = worst.max((acc - s).abs());
        }
        worst
    }
}
