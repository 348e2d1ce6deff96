//! Truncated multivariate normal on a polyhedron {x : F·x + g > 0}.
//!
//! The sampler whitens the Gaussian (x = μ + M·z with M·Mᵀ = Σ) and runs a
//! coordinate-wise Gibbs sweep on z, where every full conditional is a
//! standard normal restricted to an interval cut out by the rows of F·M.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::linalg::solve_lower;
use crate::numeric::{normal, sample_std_normal, std_normal_quantile, RngStream, SpdMatrix};

/// Standardized bound beyond which the exponential-proposal tail sampler is used.
const TAIL_THRESHOLD: f64 = 4.0;

/// Coordinate intervals narrower than this are left untouched.
pub const DEGENERATE_WIDTH: f64 = 1e-14;

/// One draw from N(mean, var) conditioned on (lower, upper). Either bound may
/// be infinite; the result lies strictly inside the interval.
pub fn sample_univariate_tn(
    mean: f64,
    var: f64,
    lower: f64,
    upper: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
        return Err(Error::Domain(format!(
            "truncated normal needs finite mean and var > 0, got mean={mean} var={var}"
        )));
    }
    if lower.is_nan() || upper.is_nan() || !(lower < upper) {
        return Err(Error::Domain(format!(
            "truncated normal needs lower < upper, got ({lower}, {upper})"
        )));
    }
    let sd = var.sqrt();
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    if !(a < b) {
        return Err(Error::Domain(format!(
            "interval ({lower}, {upper}) collapses after standardization"
        )));
    }
    for _ in 0..8 {
        let x = mean + sd * std_truncated(a, b, rng);
        if x > lower && x < upper {
            return Ok(x);
        }
    }
    // rounding keeps landing on an endpoint; the interval is a few ulps wide
    Ok(0.5 * (lower + upper))
}

// Standard normal restricted to (a, b), a < b.
fn std_truncated(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    if b <= 0.0 {
        return -std_truncated(-b, -a, rng);
    }
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return sample_std_normal(rng);
    }
    if a >= TAIL_THRESHOLD {
        return tail_truncated(a, b, rng);
    }
    // inverse CDF, using the upper tail when the interval is right of zero
    let z = if a >= 0.0 {
        let (qa, qb) = (normal::std_normal_sf(a), normal::std_normal_sf(b));
        let u = qb + rng.open01() * (qa - qb);
        std_normal_quantile(u).map(|v| -v).unwrap_or(f64::NAN)
    } else {
        let (pa, pb) = (normal::std_normal_cdf(a), normal::std_normal_cdf(b));
        let u = pa + rng.open01() * (pb - pa);
        std_normal_quantile(u).unwrap_or(f64::NAN)
    };
    if z > a && z < b {
        z
    } else {
        rejection_fallback(a, b, rng)
    }
}

// a >= TAIL_THRESHOLD.
fn tail_truncated(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    if b.is_finite() && (b - a) * (b + a) < 2.0 {
        return uniform_rejection(a, b, a, rng);
    }
    // Robert (1995) translated-exponential proposal
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - rng.open01().ln() / alpha;
        if z >= b {
            continue;
        }
        let d = z - alpha;
        if rng.open01() <= (-0.5 * d * d).exp() {
            return z;
        }
    }
}

fn rejection_fallback(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    if a.is_finite() && b.is_finite() {
        let mode = if a > 0.0 {
            a
        } else if b < 0.0 {
            b
        } else {
            0.0
        };
        uniform_rejection(a, b, mode, rng)
    } else {
        loop {
            let z = sample_std_normal(rng);
            if z > a && z < b {
                return z;
            }
        }
    }
}

// Uniform proposal on (a, b), accepted with φ(z)/φ(mode).
fn uniform_rejection(a: f64, b: f64, mode: f64, rng: &mut RngStream) -> f64 {
    loop {
        let z = a + rng.open01() * (b - a);
        if !(z > a && z < b) {
            continue;
        }
        if rng.open01() <= (0.5 * (mode * mode - z * z)).exp() {
            return z;
        }
    }
}

/// Gaussian truncated to {x : F·x + g > 0} with a Markov state.
#[derive(Clone, Debug)]
pub struct TruncatedNormal {
    mean: DVector<f64>,
    /// x = mean + whiten·z
    whiten: DMatrix<f64>,
    /// recovers z from x − mean
    unwhiten: DMatrix<f64>,
    f: DMatrix<f64>,
    g: DVector<f64>,
    /// F·whiten
    fw: DMatrix<f64>,
    current: DVector<f64>,
    degenerate: usize,
}

impl TruncatedNormal {
    /// From mean and covariance.
    pub fn new(
        mean: DVector<f64>,
        cov: &SpdMatrix,
        f: DMatrix<f64>,
        g: DVector<f64>,
        current: DVector<f64>,
    ) -> Result<Self> {
        let l = cov.cholesky_factor().clone();
        let l_inv = lower_inverse(&l);
        Self::assemble(mean, l, l_inv, f, g, current)
    }

    /// From canonical form: precision Λ and linear term η, so mean = Λ⁻¹η.
    pub fn from_canonical(
        precision: &SpdMatrix,
        linear: &DVector<f64>,
        f: DMatrix<f64>,
        g: DVector<f64>,
        current: DVector<f64>,
    ) -> Result<Self> {
        let mean = precision.solve(linear);
        let lp = precision.cholesky_factor();
        // Σ = L⁻ᵀL⁻¹, so x = μ + L⁻ᵀz and z = Lᵀ(x − μ)
        let whiten = lower_inverse(lp).transpose();
        let unwhiten = lp.transpose();
        Self::assemble(mean, whiten, unwhiten, f, g, current)
    }

    fn assemble(
        mean: DVector<f64>,
        whiten: DMatrix<f64>,
        unwhiten: DMatrix<f64>,
        f: DMatrix<f64>,
        g: DVector<f64>,
        current: DVector<f64>,
    ) -> Result<Self> {
        let k = mean.len();
        if whiten.nrows() != k || f.ncols() != k || f.nrows() != g.len() || current.len() != k {
            return Err(Error::Contract(format!(
                "truncated normal shapes disagree: mean {k}, cov {}, F {}x{}, g {}, current {}",
                whiten.nrows(),
                f.nrows(),
                f.ncols(),
                g.len(),
                current.len()
            )));
        }
        let slack = &f * &current + &g;
        if let Some((r, s)) = slack.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
            return Err(Error::Domain(format!(
                "starting point violates constraint {r} (slack {s:e})"
            )));
        }
        let fw = &f * &whiten;
        Ok(Self {
            mean,
            whiten,
            unwhiten,
            f,
            g,
            fw,
            current,
            degenerate: 0,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn current(&self) -> &DVector<f64> {
        &self.current
    }

    pub fn into_current(self) -> DVector<f64> {
        self.current
    }

    /// Number of coordinate updates skipped because the feasible interval
    /// collapsed, plus sweeps rejected for rounding-level constraint violation.
    pub fn degenerate_count(&self) -> usize {
        self.degenerate
    }

    pub fn slack(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.f * x + &self.g
    }

    /// One full coordinate sweep. The new state replaces `current`.
    pub fn sweep(&mut self, rng: &mut RngStream) -> &DVector<f64> {
        let k = self.mean.len();
        let m = self.f.nrows();
        let mut z = &self.unwhiten * (&self.current - &self.mean);
        let mut slack = self.slack(&self.current);

        for j in 0..k {
            let zj = z[j];
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for r in 0..m {
                let coef = self.fw[(r, j)];
                if coef == 0.0 {
                    continue;
                }
                // coef·z_j + rest > 0
                let rest = slack[r] - coef * zj;
                let bound = -rest / coef;
                if coef > 0.0 {
                    lo = lo.max(bound);
                } else {
                    hi = hi.min(bound);
                }
            }
            if !(hi - lo > DEGENERATE_WIDTH) {
                self.degenerate += 1;
                continue;
            }
            let new = match sample_univariate_tn(0.0, 1.0, lo, hi, rng) {
                Ok(v) => v,
                Err(_) => {
                    self.degenerate += 1;
                    continue;
                }
            };
            let delta = new - zj;
            for r in 0..m {
                slack[r] += self.fw[(r, j)] * delta;
            }
            z[j] = new;
        }

        let proposal = &self.mean + &self.whiten * z;
        if self.slack(&proposal).iter().all(|&s| s > 0.0) {
            self.current = proposal;
        } else {
            self.degenerate += 1;
        }
        &self.current
    }
}

fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        inv.set_column(j, &solve_lower(l, &e));
    }
    inv
}
