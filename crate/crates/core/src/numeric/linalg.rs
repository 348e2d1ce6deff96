//! Small dense linear algebra on top of `nalgebra` storage.
//!
//! Dimensions here are tiny (p up to a few dozen, J up to ~20) so everything is
//! dense and factor-on-demand. Cholesky is hand-rolled so a failure can report
//! the offending pivot.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower-triangular L with L·Lᵀ = m. Only the lower triangle of `m` is read.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Contract(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Factorization { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves L·x = b for lower-triangular L.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves Lᵀ·x = b for lower-triangular L.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Inverse of L·Lᵀ from its factor.
pub fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::<f64>::zeros(n);
        e[j] = 1.0;
        let y = solve_lower(l, &e);
        let x = solve_lower_transpose(l, &y);
        inv.set_column(j, &x);
    }
    symmetrize(&mut inv);
    inv
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// A symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DMatrix<f64>", into = "DMatrix<f64>")]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates symmetry (1e-12 relative) and factorizes.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n || n == 0 {
            return Err(Error::Contract(format!(
                "SPD matrix must be square and non-empty, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Domain(format!(
                        "matrix not symmetric at ({i},{j}): {} vs {}",
                        matrix[(i, j)],
                        matrix[(j, i)]
                    )));
                }
            }
        }
        let chol = cholesky(&matrix)?;
        Ok(Self { matrix, chol })
    }

    /// Symmetrizes `m` before validating; for matrices assembled by arithmetic
    /// that is symmetric only up to rounding.
    pub fn from_symmetrized(mut m: DMatrix<f64>) -> Result<Self> {
        symmetrize(&mut m);
        Self::new(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            chol: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        cholesky_inverse(&self.chol)
    }

    pub fn inverse_spd(&self) -> Result<SpdMatrix> {
        SpdMatrix::from_symmetrized(self.inverse())
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves M·x = b.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        solve_lower_transpose(&self.chol, &solve_lower(&self.chol, b))
    }

    /// xᵀ M⁻¹ x.
    pub fn inv_quad_form(&self, x: &DVector<f64>) -> f64 {
        solve_lower(&self.chol, x).norm_squared()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

impl TryFrom<DMatrix<f64>> for SpdMatrix {
    type Error = Error;
    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        SpdMatrix::new(m)
    }
}

impl From<SpdMatrix> for DMatrix<f64> {
    fn from(s: SpdMatrix) -> Self {
        s.matrix
    }
}

/// Log density of N(mean, cov) at x.
pub fn mvn_ln_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &SpdMatrix) -> f64 {
    let diff = x - mean;
    let k = x.len() as f64;
    -0.5 * (k * LN_2PI + cov.ln_det() + cov.inv_quad_form(&diff))
}

/// Sample mean and unbiased covariance of the given rows. Needs at least 2 rows.
pub fn mean_and_covariance(rows: &[DVector<f64>]) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let p = rows[0].len();
    let mut mean = DVector::zeros(p);
    for r in rows {
        mean += r;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(p, p);
    for r in rows {
        let d = r - &mean;
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    Some((mean, cov))
}
