//! Per-dimension Gaussian CDF map from raw features into (0, 1).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::std_normal_cdf;

/// Mapped values are clamped to [CLAMP, 1 − CLAMP].
pub const CLAMP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessMap {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl PreprocessMap {
    /// Column means and unbiased variances of the training matrix. `names`
    /// is only used to label the error for a constant column.
    pub fn fit(x: &DMatrix<f64>, names: Option<&[String]>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 training rows, got {n}")));
        }
        let mut means = Vec::with_capacity(p);
        let mut variances = Vec::with_capacity(p);
        for d in 0..p {
            let col = x.column(d);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            if !(var > 0.0) {
                let name = names
                    .and_then(|ns| ns.get(d).cloned())
                    .unwrap_or_else(|| format!("#{}", d + 1));
                return Err(Error::Data(format!("training column {name} is constant")));
            }
            means.push(mean);
            variances.push(var);
        }
        Ok(Self { means, variances })
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.len() != self.variances.len() || self.means.is_empty() {
            return Err(Error::ModelFormat("preprocess map has mismatched lengths".into()));
        }
        if let Some(d) = self.variances.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::ModelFormat(format!("variance of column {d} is not positive")));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::ModelFormat("non-finite mean in preprocess map".into()));
        }
        Ok(())
    }

    pub fn map_value(&self, d: usize, x: f64) -> f64 {
        let z = (x - self.means[d]) / self.variances[d].sqrt();
        std_normal_cdf(z).clamp(CLAMP, 1.0 - CLAMP)
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Contract(format!(
                "data has {} columns, map expects {}",
                x.ncols(),
                self.n_features()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, d| self.map_value(d, x[(i, d)])))
    }
}
