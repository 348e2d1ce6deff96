//! Observation matrix with partially observed binary labels.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Code for an unobserved label.
pub const MISSING_LABEL: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// n×p raw features.
    pub x: DMatrix<f64>,
    /// 0, 1, or [`MISSING_LABEL`] per row.
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, labels: Vec<u8>, feature_names: Option<Vec<String>>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::Data(format!("dataset must be non-empty, got {n}x{p}")));
        }
        if labels.len() != n {
            return Err(Error::Contract(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l > MISSING_LABEL) {
            return Err(Error::Data(format!("row {i}: label code {} not in {{0,1,2}}", labels[i])));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature value at row {}, column {}",
                i % n,
                i / n
            )));
        }
        let feature_names = match feature_names {
            Some(names) if names.len() == p => names,
            Some(names) => {
                return Err(Error::Contract(format!(
                    "{} feature names for {p} columns",
                    names.len()
                )))
            }
            None => (1..=p).map(|d| format!("x{d}")).collect(),
        };
        Ok(Self {
            x,
            labels,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// (observed class 0, observed class 1, missing).
    pub fn label_counts(&self) -> (usize, usize, usize) {
        self.labels.iter().fold((0, 0, 0), |(a, b, c), &l| match l {
            0 => (a + 1, b, c),
            1 => (a, b + 1, c),
            _ => (a, b, c + 1),
        })
    }

    /// Fitting requires at least one observed label of each class.
    pub fn check_fittable(&self) -> Result<()> {
        let (n0, n1, _) = self.label_counts();
        if n0 == 0 || n1 == 0 {
            return Err(Error::Data(format!(
                "need at least one observed label per class, got {n0} of class 0 and {n1} of class 1"
            )));
        }
        Ok(())
    }

    /// True labels as 0/1, failing if any are missing.
    pub fn full_labels(&self) -> Result<Vec<u8>> {
        if let Some(i) = self.labels.iter().position(|&l| l == MISSING_LABEL) {
            return Err(Error::Data(format!("row {i} has no label")));
        }
        Ok(self.labels.clone())
    }

    /// Relabels class 0 ↔ 1, leaving missing labels alone.
    pub fn swap_classes(&self) -> Self {
        let labels = self
            .labels
            .iter()
            .map(|&l| match l {
                0 => 1,
                1 => 0,
                m => m,
            })
            .collect();
        Self {
            labels,
            ..self.clone()
        }
    }
}
