//! Identifiability-constrained, monotone prior on spline coefficients.
//!
//! Each transformation f(x) = Σⱼ θⱼ Bⱼ(x) gets a N(ζ, σ²I) prior conditioned on
//! the location/scale constraints f(1/2) = 0 and f(3/4) − f(1/4) = 1, written
//! Aθ = c. Two coefficients (indices `j1`, `j2`) are then eliminated through the
//! constraints, leaving a free vector θ̄ of length J − 2 with a nonsingular
//! Gaussian prior. Monotonicity θ₁ < … < θ_J becomes F̄θ̄ + ḡ > 0.
//!
//! Indices are zero-based throughout.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{linalg, std_normal_quantile, SpdMatrix};
use crate::splines::SplineBasis;

/// Hyperparameters of the unconstrained N(ζ, σ²I) prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub sigma2: f64,
    pub nu: f64,
    pub tau: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma2: 1.0,
            nu: 0.0,
            tau: 1.0,
        }
    }
}

/// ζⱼ = ν + τ·Φ⁻¹((j − 0.375)/(J + 0.25)), j = 1..J (Blom scores).
pub fn zeta_vector(n_basis: usize, nu: f64, tau: f64) -> Result<DVector<f64>> {
    if n_basis < crate::splines::MIN_BASIS_SIZE {
        return Err(Error::Domain(format!("zeta needs J >= 5, got {n_basis}")));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("zeta needs tau > 0, got {tau}")));
    }
    let denom = n_basis as f64 - 0.75 + 1.0;
    let mut z = DVector::zeros(n_basis);
    for j in 1..=n_basis {
        z[j - 1] = nu + tau * std_normal_quantile((j as f64 - 0.375) / denom)?;
    }
    Ok(z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSystem {
    /// 2×J: row 0 is B(1/2), row 1 is B(3/4) − B(1/4).
    pub a: DMatrix<f64>,
    pub c: Vector2<f64>,
}

impl ConstraintSystem {
    pub fn n_basis(&self) -> usize {
        self.a.ncols()
    }

    /// Aθ − c.
    pub fn residual(&self, theta: &DVector<f64>) -> Vector2<f64> {
        let r = &self.a * theta;
        Vector2::new(r[0] - self.c[0], r[1] - self.c[1])
    }
}

pub fn build_constraints(basis: &SplineBasis) -> ConstraintSystem {
    let n = basis.len();
    let mid = basis.eval_basis(0.5).expect("1/2 is in the domain");
    let lo = basis.eval_basis(0.25).expect("1/4 is in the domain");
    let hi = basis.eval_basis(0.75).expect("3/4 is in the domain");
    let mut a = DMatrix::zeros(2, n);
    a.set_row(0, &mid.transpose());
    a.set_row(1, &(hi - lo).transpose());
    ConstraintSystem {
        a,
        c: Vector2::new(0.0, 1.0),
    }
}

// Indices sorted by descending value; near-ties (1e-12 relative) keep the
// smaller index first.
fn ranked_columns(row: &[f64]) -> Vec<usize> {
    let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&i, &j| {
        let d = row[j] - row[i];
        if d.abs() <= 1e-12 * scale {
            i.cmp(&j)
        } else if d > 0.0 {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Less
        }
    });
    idx
}

/// (j1, j2): j1 maximizes B(1/2), j2 maximizes B(3/4) − B(1/4) over j ≠ j1.
/// If the 2×2 block of A at (j1, j2) is singular, the next-largest j2 is tried.
pub fn choose_removed_indices(cs: &ConstraintSystem) -> Result<(usize, usize)> {
    let row0: Vec<f64> = cs.a.row(0).iter().copied().collect();
    let row1: Vec<f64> = cs.a.row(1).iter().copied().collect();
    let j1 = ranked_columns(&row0)[0];
    let scale = cs.a.amax();
    for j2 in ranked_columns(&row1).into_iter().filter(|&j| j != j1) {
        let block = Matrix2::new(row0[j1], row0[j2], row1[j1], row1[j2]);
        if block.determinant().abs() > 1e-10 * scale * scale {
            return Ok((j1, j2));
        }
    }
    Err(Error::Construction(
        "no invertible 2x2 constraint block found".into(),
    ))
}

/// Conditions N(ζ, σ²I) on Aθ = c: returns (ξ, Γ).
pub fn condition_prior(
    zeta: &DVector<f64>,
    sigma2: f64,
    cs: &ConstraintSystem,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = cs.n_basis();
    if zeta.len() != n {
        return Err(Error::Contract(format!(
            "zeta has length {} but the basis has {n} functions",
            zeta.len()
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("prior variance must be positive, got {sigma2}")));
    }
    let aat = &cs.a * cs.a.transpose();
    let aat_inv = aat
        .clone()
        .try_inverse()
        .filter(|_| aat.determinant().abs() > 1e-14)
        .ok_or_else(|| Error::Construction("A·Aᵀ is singular".into()))?;
    let c = DVector::from_column_slice(cs.c.as_slice());
    let xi = zeta + cs.a.transpose() * (&aat_inv * (c - &cs.a * zeta));
    let proj = cs.a.transpose() * &aat_inv * &cs.a;
    let mut gamma = (DMatrix::identity(n, n) - proj) * sigma2;
    linalg::symmetrize(&mut gamma);
    Ok((xi, gamma))
}

/// Reduced prior for one dimension's coefficients.
#[derive(Clone, Debug)]
pub struct ReducedPrior {
    n_basis: usize,
    j1: usize,
    j2: usize,
    kept: Vec<usize>,
    /// (θ_{j1}, θ_{j2}) = W·θ̄ + q.
    w: DMatrix<f64>,
    q: Vector2<f64>,
    xi_bar: DVector<f64>,
    gamma_bar: SpdMatrix,
    gamma_bar_inv: DMatrix<f64>,
    /// Γ̄⁻¹ξ̄, the prior's linear term in canonical form.
    prior_shift: DVector<f64>,
    f_bar: DMatrix<f64>,
    g_bar: DVector<f64>,
    /// θ = expand·θ̄ + offset.
    expand: DMatrix<f64>,
    offset: DVector<f64>,
    constraints: ConstraintSystem,
}

/// Eliminates θ_{j1}, θ_{j2} through the constraints.
pub fn reduce(
    xi: &DVector<f64>,
    gamma: &DMatrix<f64>,
    cs: &ConstraintSystem,
    j1: usize,
    j2: usize,
) -> Result<ReducedPrior> {
    let n = cs.n_basis();
    if j1 == j2 || j1 >= n || j2 >= n {
        return Err(Error::Contract(format!("bad removed indices ({j1}, {j2}) for J={n}")));
    }
    let kept: Vec<usize> = (0..n).filter(|&j| j != j1 && j != j2).collect();
    let k = kept.len();

    let a_r = Matrix2::new(cs.a[(0, j1)], cs.a[(0, j2)], cs.a[(1, j1)], cs.a[(1, j2)]);
    let a_r_inv = a_r
        .try_inverse()
        .ok_or_else(|| Error::Construction(format!("constraint block at ({j1}, {j2}) is singular")))?;
    let mut a_s = DMatrix::zeros(2, k);
    for (col, &j) in kept.iter().enumerate() {
        a_s[(0, col)] = cs.a[(0, j)];
        a_s[(1, col)] = cs.a[(1, j)];
    }
    let a_r_inv_dyn = DMatrix::from_column_slice(2, 2, a_r_inv.as_slice());
    let w = -(&a_r_inv_dyn * &a_s);
    let q = a_r_inv * cs.c;

    let mut expand = DMatrix::zeros(n, k);
    let mut offset = DVector::zeros(n);
    for (col, &j) in kept.iter().enumerate() {
        expand[(j, col)] = 1.0;
    }
    expand.set_row(j1, &w.row(0));
    expand.set_row(j2, &w.row(1));
    offset[j1] = q[0];
    offset[j2] = q[1];

    // First differences θ_{j+1} − θ_j, rewritten in θ̄.
    let mut f_bar = DMatrix::zeros(n - 1, k);
    let mut g_bar = DVector::zeros(n - 1);
    for r in 0..n - 1 {
        f_bar.set_row(r, &(expand.row(r + 1) - expand.row(r)));
        g_bar[r] = offset[r + 1] - offset[r];
    }

    let xi_bar = DVector::from_iterator(k, kept.iter().map(|&j| xi[j]));
    let mut gamma_bar = DMatrix::from_fn(k, k, |r, c| gamma[(kept[r], kept[c])]);
    linalg::symmetrize(&mut gamma_bar);
    let gamma_bar = match SpdMatrix::new(gamma_bar.clone()) {
        Ok(g) => g,
        Err(_) => {
            let jitter = 1e-10 * gamma.trace() / n as f64;
            log::warn!("reduced prior covariance not SPD at J={n}; adding jitter {jitter:e}");
            SpdMatrix::new(gamma_bar + DMatrix::identity(k, k) * jitter)?
        }
    };
    let gamma_bar_inv = gamma_bar.inverse();
    let prior_shift = &gamma_bar_inv * &xi_bar;

    Ok(ReducedPrior {
        n_basis: n,
        j1,
        j2,
        kept,
        w,
        q,
        xi_bar,
        gamma_bar,
        gamma_bar_inv,
        prior_shift,
        f_bar,
        g_bar,
        expand,
        offset,
        constraints: cs.clone(),
    })
}

impl ReducedPrior {
    /// Full construction for a basis: constraints, index choice, conditioning, reduction.
    pub fn build(basis: &SplineBasis, config: &PriorConfig) -> Result<Self> {
        let cs = build_constraints(basis);
        let (j1, j2) = choose_removed_indices(&cs)?;
        let zeta = zeta_vector(basis.len(), config.nu, config.tau)?;
        let (xi, gamma) = condition_prior(&zeta, config.sigma2, &cs)?;
        reduce(&xi, &gamma, &cs, j1, j2)
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Length of θ̄ (J − 2).
    pub fn reduced_len(&self) -> usize {
        self.n_basis - 2
    }

    pub fn removed_indices(&self) -> (usize, usize) {
        (self.j1, self.j2)
    }

    pub fn kept_indices(&self) -> &[usize] {
        &self.kept
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn q(&self) -> &Vector2<f64> {
        &self.q
    }

    pub fn xi_bar(&self) -> &DVector<f64> {
        &self.xi_bar
    }

    pub fn gamma_bar(&self) -> &SpdMatrix {
        &self.gamma_bar
    }

    pub fn gamma_bar_inv(&self) -> &DMatrix<f64> {
        &self.gamma_bar_inv
    }

    pub fn prior_shift(&self) -> &DVector<f64> {
        &self.prior_shift
    }

    pub fn f_bar(&self) -> &DMatrix<f64> {
        &self.f_bar
    }

    pub fn g_bar(&self) -> &DVector<f64> {
        &self.g_bar
    }

    pub fn constraints(&self) -> &ConstraintSystem {
        &self.constraints
    }

    /// Full θ from θ̄.
    pub fn reconstruct(&self, theta_bar: &DVector<f64>) -> DVector<f64> {
        &self.expand * theta_bar + &self.offset
    }

    /// θ̄ from a full θ (drops the two eliminated entries).
    pub fn reduce_theta(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.kept.len(), self.kept.iter().map(|&j| theta[j]))
    }

    /// F̄θ̄ + ḡ, the successive differences of the reconstructed θ.
    pub fn monotone_slack(&self, theta_bar: &DVector<f64>) -> DVector<f64> {
        &self.f_bar * theta_bar + &self.g_bar
    }

    pub fn is_monotone(&self, theta_bar: &DVector<f64>) -> bool {
        self.monotone_slack(theta_bar).iter().all(|&s| s > 0.0)
    }

    /// For a basis row B(x), the pair (B̄ + B*·W, B*·q) so that
    /// f(x) = (B̄ + B*·W)·θ̄ + B*·q.
    pub fn design_row(&self, basis_row: &DVector<f64>) -> (DVector<f64>, f64) {
        (self.expand.tr_mul(basis_row), basis_row.dot(&self.offset))
    }
}
