//! Cubic (order-4) B-spline basis on [0, 1] with equispaced interior knots.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPLINE_ORDER: usize = 4;
pub const MIN_BASIS_SIZE: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    n_basis: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    /// Basis of size `n_basis` (J). Boundary knots are repeated four times and
    /// J − 4 interior knots sit at i/(J − 3).
    pub fn new(n_basis: usize) -> Result<Self> {
        if n_basis < MIN_BASIS_SIZE {
            return Err(Error::Domain(format!(
                "basis size must be at least {MIN_BASIS_SIZE}, got {n_basis}"
            )));
        }
        let n_intervals = (n_basis - SPLINE_ORDER + 1) as f64;
        let mut knots = Vec::with_capacity(n_basis + SPLINE_ORDER);
        knots.extend(std::iter::repeat_n(0.0, SPLINE_ORDER));
        knots.extend((1..=n_basis - SPLINE_ORDER).map(|i| i as f64 / n_intervals));
        knots.extend(std::iter::repeat_n(1.0, SPLINE_ORDER));
        Ok(Self { n_basis, knots })
    }

    pub fn len(&self) -> usize {
        self.n_basis
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn order(&self) -> usize {
        SPLINE_ORDER
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    // Knot span s with knots[s] <= x < knots[s+1]; x = 1 maps to the last span.
    fn span(&self, x: f64) -> usize {
        let last = self.n_basis - 1;
        if x >= 1.0 {
            return last;
        }
        let mut lo = SPLINE_ORDER - 1;
        let mut hi = last + 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// The four possibly-nonzero basis values at x and the index of the first.
    pub fn eval_local(&self, x: f64) -> Result<(usize, [f64; SPLINE_ORDER])> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("spline argument {x} outside [0, 1]")));
        }
        let s = self.span(x);
        let t = &self.knots;
        let mut n = [0.0; SPLINE_ORDER];
        let mut left = [0.0; SPLINE_ORDER];
        let mut right = [0.0; SPLINE_ORDER];
        n[0] = 1.0;
        for j in 1..SPLINE_ORDER {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok((s + 1 - SPLINE_ORDER, n))
    }

    /// (B₁(x), …, B_J(x)).
    pub fn eval_basis(&self, x: f64) -> Result<DVector<f64>> {
        let (first, local) = self.eval_local(x)?;
        let mut out = DVector::zeros(self.n_basis);
        for (k, v) in local.iter().enumerate() {
            out[first + k] = *v;
        }
        Ok(out)
    }

    /// Σⱼ coeffsⱼ·Bⱼ(x).
    pub fn eval_function(&self, coeffs: &DVector<f64>, x: f64) -> Result<f64> {
        if coeffs.len() != self.n_basis {
            return Err(Error::Contract(format!(
                "expected {} spline coefficients, got {}",
                self.n_basis,
                coeffs.len()
            )));
        }
        let (first, local) = self.eval_local(x)?;
        Ok(local
            .iter()
            .enumerate()
            .map(|(k, v)| v * coeffs[first + k])
            .sum())
    }
}
