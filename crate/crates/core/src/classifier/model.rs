//! Fitted model: plug-in posterior means, prediction, and the model file.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::preprocess::PreprocessMap;
use crate::error::{Error, Result};
use crate::gibbs::{class_log_weights, prob_class1, Diagnostics, LambdaMode, WishartDf};
use crate::numeric::SpdMatrix;
use crate::prior::{PriorConfig, ReducedPrior};
use crate::splines::{SplineBasis, SPLINE_ORDER};

pub const MODEL_FORMAT: &str = "npn-model";
pub const MODEL_VERSION: u32 = 1;

/// Settings echoed into the model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub lambda_mode: LambdaMode,
    pub pilot_iterations: usize,
    pub m: f64,
    pub tmvn_sweeps: usize,
    pub wishart_df: WishartDf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub n_basis: usize,
    /// `None` when the pilot chain failed.
    pub boundary_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub m: f64,
    pub rows: Vec<SelectionRow>,
    pub selected: usize,
}

impl SelectionReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("{:>4}  {:>14}\n", "J", "boundary_count");
        for r in &self.rows {
            let count = r
                .boundary_count
                .map(|c| c.to_string())
                .unwrap_or_else(|| "failed".into());
            let mark = if r.n_basis == self.selected { "  *" } else { "" };
            s.push_str(&format!("{:>4}  {:>14}{mark}\n", r.n_basis, count));
        }
        s
    }
}

/// Everything a model is built from.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParts {
    pub n_basis: usize,
    pub prior: PriorConfig,
    pub preprocess: PreprocessMap,
    pub feature_names: Vec<String>,
    pub theta_bar: Vec<DVector<f64>>,
    pub mu: [DVector<f64>; 2],
    pub sigma: [SpdMatrix; 2],
    pub lambda0: f64,
    pub settings: FitSettings,
    pub selection: SelectionReport,
    pub diagnostics: Diagnostics,
}

/// Prediction output: hard labels and P(class 1) per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: Vec<u8>,
    pub p_class1: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FittedModel {
    parts: ModelParts,
    basis: SplineBasis,
    /// Full spline coefficients per dimension.
    theta: Vec<DVector<f64>>,
}

impl PartialEq for FittedModel {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts
    }
}

impl FittedModel {
    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        let p = parts.preprocess.n_features();
        parts.preprocess.validate()?;
        if parts.feature_names.len() != p || parts.theta_bar.len() != p {
            return Err(Error::ModelFormat(format!(
                "model has {p} features but {} names and {} coefficient vectors",
                parts.feature_names.len(),
                parts.theta_bar.len()
            )));
        }
        for k in 0..2 {
            if parts.mu[k].len() != p || parts.sigma[k].dim() != p {
                return Err(Error::ModelFormat(format!("class {k} parameters do not have dimension {p}")));
            }
        }
        if !(parts.lambda0 > 0.0 && parts.lambda0 < 1.0) {
            return Err(Error::ModelFormat(format!("lambda0 = {} outside (0, 1)", parts.lambda0)));
        }
        let basis = SplineBasis::new(parts.n_basis)?;
        let prior = ReducedPrior::build(&basis, &parts.prior)?;
        let mut theta = Vec::with_capacity(p);
        for (d, tb) in parts.theta_bar.iter().enumerate() {
            if tb.len() != prior.reduced_len() {
                return Err(Error::ModelFormat(format!(
                    "dimension {d}: {} coefficients, expected {}",
                    tb.len(),
                    prior.reduced_len()
                )));
            }
            let full = prior.reconstruct(tb);
            if (1..full.len()).any(|j| !(full[j] > full[j - 1])) {
                return Err(Error::ModelFormat(format!("transformation {d} is not increasing")));
            }
            theta.push(full);
        }
        Ok(Self { parts, basis, theta })
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn n_features(&self) -> usize {
        self.parts.preprocess.n_features()
    }

    pub fn n_basis(&self) -> usize {
        self.parts.n_basis
    }

    pub fn selection(&self) -> &SelectionReport {
        &self.parts.selection
    }

    pub fn coefficients(&self, d: usize) -> &DVector<f64> {
        &self.theta[d]
    }

    /// Maps raw features through the preprocessing CDF and the fitted
    /// transformations.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mapped = self.parts.preprocess.apply(x)?;
        self.transform_mapped(&mapped)
    }

    /// As [`FittedModel::transform`] for input already in (0, 1).
    pub fn transform_mapped(&self, mapped: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut y = DMatrix::zeros(mapped.nrows(), mapped.ncols());
        for d in 0..mapped.ncols() {
            for i in 0..mapped.nrows() {
                y[(i, d)] = self.basis.eval_function(&self.theta[d], mapped[(i, d)])?;
            }
        }
        Ok(y)
    }

    /// log λ̄_k φ(y; μ̄_k, Σ̄_k) for a transformed row.
    pub fn log_weights(&self, y: &DVector<f64>) -> [f64; 2] {
        class_log_weights(y, &self.parts.mu, &self.parts.sigma, self.parts.lambda0)
    }

    /// Class 0 iff λ̄₀φ₀ > λ̄₁φ₁ strictly; ties go to class 1.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        let y = self.transform(x)?;
        let mut labels = Vec::with_capacity(y.nrows());
        let mut p_class1 = Vec::with_capacity(y.nrows());
        for i in 0..y.nrows() {
            let lw = self.log_weights(&y.row(i).transpose());
            labels.push(decide(lw));
            p_class1.push(prob_class1(lw));
        }
        Ok(Prediction { labels, p_class1 })
    }

    /// Number of rows of raw `x` inside the low-density boundary set for `m`.
    pub fn boundary_count(&self, x: &DMatrix<f64>, m: f64) -> Result<usize> {
        let y = self.transform(x)?;
        Ok(boundary_count(
            (0..y.nrows()).map(|i| self.log_weights(&y.row(i).transpose())),
            m,
        ))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile::from_parts(&self.parts);
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text)
            .map_err(|e| Error::ModelFormat(format!("cannot parse model file: {e}")))?;
        if header.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("not a model file (format {:?})", header.format)));
        }
        if header.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "model file version {} is not supported (expected {MODEL_VERSION})",
                header.version
            )));
        }
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::ModelFormat(format!("cannot parse model file: {e}")))?;
        Self::from_parts(file.into_parts()?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// The decision rule on a pair of log weights.
pub fn decide(log_weights: [f64; 2]) -> u8 {
    if log_weights[0] > log_weights[1] {
        0
    } else {
        1
    }
}

/// Count of rows with |log λ₀φ₀ − log λ₁φ₁| < log m.
pub fn boundary_count(log_weights: impl Iterator<Item = [f64; 2]>, m: f64) -> usize {
    let bound = m.ln();
    log_weights
        .filter(|[a, b]| {
            if a == b {
                // equal, including both −∞
                return bound > 0.0;
            }
            (a - b).abs() < bound
        })
        .count()
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct ClassFile {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    n_basis: usize,
    spline_order: usize,
    feature_names: Vec<String>,
    preprocess: PreprocessMap,
    prior: PriorConfig,
    theta_bar: Vec<Vec<f64>>,
    class0: ClassFile,
    class1: ClassFile,
    lambda0: f64,
    fit: FitSettings,
    selection: SelectionReport,
    diagnostics: Diagnostics,
}

impl ModelFile {
    fn from_parts(parts: &ModelParts) -> Self {
        let class = |k: usize| ClassFile {
            mean: parts.mu[k].iter().copied().collect(),
            covariance: parts.sigma[k]
                .matrix()
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        };
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            n_basis: parts.n_basis,
            spline_order: SPLINE_ORDER,
            feature_names: parts.feature_names.clone(),
            preprocess: parts.preprocess.clone(),
            prior: parts.prior,
            theta_bar: parts.theta_bar.iter().map(|t| t.iter().copied().collect()).collect(),
            class0: class(0),
            class1: class(1),
            lambda0: parts.lambda0,
            fit: parts.settings.clone(),
            selection: parts.selection.clone(),
            diagnostics: parts.diagnostics.clone(),
        }
    }

    fn into_parts(self) -> Result<ModelParts> {
        if self.spline_order != SPLINE_ORDER {
            return Err(Error::ModelFormat(format!(
                "spline order {} is not supported",
                self.spline_order
            )));
        }
        let class = |c: ClassFile, k: usize| -> Result<(DVector<f64>, SpdMatrix)> {
            let p = c.mean.len();
            if c.covariance.len() != p || c.covariance.iter().any(|r| r.len() != p) {
                return Err(Error::ModelFormat(format!("class {k} covariance is not {p}x{p}")));
            }
            let flat: Vec<f64> = c.covariance.into_iter().flatten().collect();
            let sigma = SpdMatrix::new(DMatrix::from_row_slice(p, p, &flat))
                .map_err(|e| Error::ModelFormat(format!("class {k} covariance: {e}")))?;
            Ok((DVector::from_vec(c.mean), sigma))
        };
        let (mu0, sigma0) = class(self.class0, 0)?;
        let (mu1, sigma1) = class(self.class1, 1)?;
        Ok(ModelParts {
            n_basis: self.n_basis,
            prior: self.prior,
            preprocess: self.preprocess,
            feature_names: self.feature_names,
            theta_bar: self.theta_bar.into_iter().map(DVector::from_vec).collect(),
            mu: [mu0, mu1],
            sigma: [sigma0, sigma1],
            lambda0: self.lambda0,
            settings: self.fit,
            selection: self.selection,
            diagnostics: self.diagnostics,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::gibbs::initial_theta;
    use crate::numeric::{mvn_ln_pdf, sample_uniform, RngStream};

    pub(crate) fn toy_model(mu0: Vec<f64>, mu1: Vec<f64>, lambda0: f64) -> FittedModel {
        let p = mu0.len();
        let basis = SplineBasis::new(8).unwrap();
        let prior = ReducedPrior::build(&basis, &PriorConfig::default()).unwrap();
        let tb = initial_theta(&basis, &prior).unwrap();
        FittedModel::from_parts(ModelParts {
            n_basis: 8,
            prior: PriorConfig::default(),
            preprocess: PreprocessMap { means: vec![0.0; p], variances: vec![1.0; p] },
            feature_names: (1..=p).map(|d| format!("x{d}")).collect(),
            theta_bar: vec![tb; p],
            mu: [DVector::from_vec(mu0), DVector::from_vec(mu1)],
            sigma: [SpdMatrix::identity(p), SpdMatrix::identity(p)],
            lambda0,
            settings: FitSettings {
                iterations: 10,
                burn_in: 5,
                seed: 0,
                lambda_mode: LambdaMode::default(),
                pilot_iterations: 0,
                m: 3.0,
                tmvn_sweeps: 1,
                wishart_df: WishartDf::default(),
            },
            selection: SelectionReport {
                m: 3.0,
                rows: vec![SelectionRow { n_basis: 8, boundary_count: Some(0), failure: None }],
                selected: 8,
            },
            diagnostics: Diagnostics::default(),
        })
        .unwrap()
    }

    #[test]
    fn symmetric_tie_goes_to_class_one() {
        let m = toy_model(vec![0.5, -0.25], vec![-0.5, 0.25], 0.5);
        // raw 0 maps to 1/2, which every fitted transform sends to 0
        let x = DMatrix::zeros(1, 2);
        let y = m.transform(&x).unwrap();
        assert!(y.amax() < 1e-12);
        let y0 = DVector::zeros(2);
        let lw = m.log_weights(&y0);
        assert_eq!(lw[0], lw[1]);
        assert_eq!(decide(lw), 1);
    }

    #[test]
    fn point_at_class_zero_mean() {
        let m = toy_model(vec![-2.0, -2.0], vec![2.0, 2.0], 0.5);
        let lw = m.log_weights(&DVector::from_vec(vec![-2.0, -2.0]));
        assert_eq!(decide(lw), 0);
    }

    #[test]
    fn prediction_matches_independent_densities() {
        let m = toy_model(vec![-0.4, 0.1, 0.3], vec![0.5, -0.2, 0.0], 0.4);
        let mut rng = RngStream::new(3, 0);
        let x = DMatrix::from_fn(50, 3, |_, _| sample_uniform(-3.0, 3.0, &mut rng).unwrap());
        let pred = m.predict(&x).unwrap();
        let y = m.transform(&x).unwrap();
        for i in 0..50 {
            let yi = y.row(i).transpose();
            // brute force: explicit inverse and quadratic form
            let dens = |k: usize, lam: f64| {
                let s = m.parts().sigma[k].matrix();
                let inv = s.clone().try_inverse().unwrap();
                let r = &yi - &m.parts().mu[k];
                lam.ln() - 0.5 * (r.transpose() * inv * &r)[(0, 0)]
                    - 0.5 * s.determinant().ln()
                    - 1.5 * (2.0 * std::f64::consts::PI).ln()
            };
            let want = if dens(0, 0.4) > dens(1, 0.6) { 0 } else { 1 };
            assert_eq!(pred.labels[i], want, "row {i}");
            let mv = mvn_ln_pdf(&yi, &m.parts().mu[0], &m.parts().sigma[0]);
            assert!((mv - dens(0, 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn boundary_monotone_in_m() {
        let m = toy_model(vec![-0.3, 0.0], vec![0.3, 0.1], 0.5);
        let mut rng = RngStream::new(4, 0);
        let x = DMatrix::from_fn(200, 2, |_, _| sample_uniform(-2.0, 2.0, &mut rng).unwrap());
        let mut prev = 0;
        for &mm in &[1.0 + 1e-9, 1.5, 3.0, 10.0, 100.0] {
            let c = m.boundary_count(&x, mm).unwrap();
            assert!(c >= prev);
            prev = c;
        }
        assert_eq!(m.boundary_count(&x, 1.0).unwrap(), 0);
    }

    #[test]
    fn separated_classes_have_empty_boundary() {
        let lw: Vec<[f64; 2]> = (0..10).map(|i| [-(i as f64) - 20.0, 0.0]).collect();
        assert_eq!(boundary_count(lw.into_iter(), 3.0), 0);
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let m = toy_model(vec![-0.1234567890123, 0.3], vec![0.7, 1.0 / 3.0], 0.3141592653589793);
        let a = m.to_json();
        let back = FittedModel::from_json(&a).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), a);
    }

    #[test]
    fn truncated_and_wrong_version_rejected() {
        let m = toy_model(vec![0.0], vec![1.0], 0.5);
        let text = m.to_json();
        let cut = &text[..text.len() / 2];
        assert!(matches!(FittedModel::from_json(cut), Err(Error::ModelFormat(_))));
        let bumped = text.replace("\"version\": 1", "\"version\": 99");
        let err = FittedModel::from_json(&bumped).unwrap_err();
        assert!(err.to_string().contains("version 99"), "{err}");
    }
}
