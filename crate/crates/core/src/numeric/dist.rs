//! Random draws used by the sampler and the simulation generator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, StandardNormal};

use super::linalg::SpdMatrix;
use super::rng::RngStream;
use crate::error::{Error, Result};

pub fn sample_std_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_uniform(lo: f64, hi: f64, rng: &mut RngStream) -> Result<f64> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("uniform needs finite lo < hi, got [{lo}, {hi}]")));
    }
    Ok(rng.random_range(lo..hi))
}

pub fn sample_mvn(mean: &DVector<f64>, cov: &SpdMatrix, rng: &mut RngStream) -> Result<DVector<f64>> {
    if mean.len() != cov.dim() {
        return Err(Error::Contract(format!(
            "mvn mean has length {} but covariance is {}x{}",
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let z = DVector::from_fn(mean.len(), |_, _| sample_std_normal(rng));
    Ok(mean + cov.cholesky_factor() * z)
}

pub fn sample_beta(a: f64, b: f64, rng: &mut RngStream) -> Result<f64> {
    let dist = Beta::new(a, b).map_err(|e| Error::Domain(format!("beta({a}, {b}): {e}")))?;
    Ok(dist.sample(rng))
}

pub fn sample_bernoulli(prob: f64, rng: &mut RngStream) -> Result<u8> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::Domain(format!("bernoulli probability {prob} outside [0, 1]")));
    }
    if prob == 0.0 {
        return Ok(0);
    }
    Ok(u8::from(rng.open01() < prob))
}

pub fn sample_chi_squared(df: f64, rng: &mut RngStream) -> Result<f64> {
    let dist = ChiSquared::new(df).map_err(|e| Error::Domain(format!("chi-squared({df}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Wishart W(df, scale) by the Bartlett decomposition: with scale = L·Lᵀ and
/// A lower triangular holding √χ²(df − i) on the diagonal and N(0,1) below it,
/// the draw is (L·A)(L·A)ᵀ.
pub fn sample_wishart(df: f64, scale: &SpdMatrix, rng: &mut RngStream) -> Result<SpdMatrix> {
    let p = scale.dim();
    if !(df > (p as f64) - 1.0) {
        return Err(Error::Domain(format!(
            "wishart needs df > dim - 1, got df={df} with dim={p}"
        )));
    }
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        a[(i, i)] = sample_chi_squared(df - i as f64, rng)?.sqrt();
        for j in 0..i {
            a[(i, j)] = sample_std_normal(rng);
        }
    }
    let la = scale.cholesky_factor() * a;
    SpdMatrix::from_symmetrized(&la * la.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wishart_mean_identity_scale() {
        let mut rng = RngStream::new(3, 0);
        let scale = SpdMatrix::identity(3);
        let n = 10_000;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for _ in 0..n {
            acc += sample_wishart(10.0, &scale, &mut rng).unwrap().matrix();
        }
        acc /= n as f64;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 10.0 } else { 0.0 };
                // off-diagonals judged against the diagonal scale
                assert!((acc[(i, j)] - want).abs() < 0.05 * 10.0, "({i},{j}) = {}", acc[(i, j)]);
            }
        }
    }

    #[test]
    fn wishart_scalar_is_chi_squared() {
        let mut rng = RngStream::new(4, 0);
        let scale = SpdMatrix::identity(1);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| sample_wishart(6.0, &scale, &mut rng).unwrap().matrix()[(0, 0)])
            .sum::<f64>()
            / n as f64;
        // sd of χ²₆ is √12; 3 standard errors
        assert!((mean - 6.0).abs() < 3.0 * 12f64.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn wishart_rejects_small_df() {
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            sample_wishart(2.0, &SpdMatrix::identity(3), &mut rng),
            Err(Error::Domain(_))
        ));
        assert!(sample_wishart(1.5, &SpdMatrix::identity(3), &mut rng).is_err());
        // df = 2.5 > dim - 1 is a valid real-df Wishart
        assert!(sample_wishart(2.5, &SpdMatrix::identity(3), &mut rng).is_ok());
    }

    #[test]
    fn wishart_draws_are_spd() {
        let mut rng = RngStream::new(5, 0);
        let scale = SpdMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 0.9, 0.9, 1.0],
        ))
        .unwrap();
        for _ in 0..200 {
            let w = sample_wishart(2.1, &scale, &mut rng).unwrap();
            assert!(w.ln_det().is_finite());
        }
    }

    #[test]
    fn mvn_covariance_recovers_identity() {
        let mut rng = RngStream::new(6, 0);
        let mean = DVector::zeros(2);
        let cov = SpdMatrix::identity(2);
        let n = 10_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let x = sample_mvn(&mean, &cov, &mut rng).unwrap();
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((acc[(i, j)] - want).abs() < 0.05);
            }
        }
    }

    #[test]
    fn beta_uniform_mean() {
        let mut rng = RngStream::new(7, 0);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| sample_beta(1.0, 1.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * (1.0 / 12f64).sqrt() / (n as f64).sqrt());
        assert!(sample_beta(0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_degenerate() {
        let mut rng = RngStream::new(8, 0);
        assert!((0..1000).all(|_| sample_bernoulli(0.0, &mut rng).unwrap() == 0));
        assert!((0..1000).all(|_| sample_bernoulli(1.0, &mut rng).unwrap() == 1));
        assert!(sample_bernoulli(1.5, &mut rng).is_err());
    }
}
