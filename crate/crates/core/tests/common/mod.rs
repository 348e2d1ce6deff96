//! Independent oracles shared by the integration tests. Nothing here calls the
//! library code it is meant to check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use npn_core::classifier::FittedModel;
use npn_core::dataset::Dataset;
use npn_core::numeric::{std_normal_cdf, RngStream};
use npn_core::simgen::{gen_dataset, scenario_params, SimScenario, TransformKind};

/// B-spline basis values at `x` by the Cox-de Boor recursion on `knots`,
/// with the right end of [0, 1] closed.
pub fn cox_de_boor(knots: &[f64], order: usize, x: f64) -> Vec<f64> {
    let n = knots.len() - order;
    let last = knots[knots.len() - 1];
    // degree-0 indicators
    let mut b: Vec<f64> = (0..knots.len() - 1)
        .map(|j| {
            let (lo, hi) = (knots[j], knots[j + 1]);
            let inside = if x == last { lo < hi && hi == last } else { lo <= x && x < hi };
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for k in 2..=order {
        let mut next = vec![0.0; knots.len() - k];
        for j in 0..next.len() {
            let left = knots[j + k - 1] - knots[j];
            let right = knots[j + k] - knots[j + 1];
            let mut v = 0.0;
            if left > 0.0 {
                v += (x - knots[j]) / left * b[j];
            }
            if right > 0.0 {
                v += (knots[j + k] - x) / right * b[j + 1];
            }
            next[j] = v;
        }
        b = next;
    }
    b.truncate(n);
    b
}

/// Gaussian log density up to the common −p/2·ln 2π, from an explicit inverse
/// and determinant.
pub fn gauss_log_density(y: &DVector<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let r = y - mu;
    -0.5 * (r.transpose() * inv * &r)[(0, 0)] - 0.5 * cov.determinant().ln()
}

/// Brute-force class decision for raw rows of `x` from the model's stored
/// parameters: CDF map, spline evaluation by Cox-de Boor, explicit densities.
pub fn brute_force_predict(model: &FittedModel, x: &DMatrix<f64>) -> Vec<u8> {
    let parts = model.parts();
    let knots = npn_core::splines::SplineBasis::new(parts.n_basis).unwrap().knots().to_vec();
    let p = x.ncols();
    let cov: Vec<DMatrix<f64>> = parts.sigma.iter().map(|s| s.matrix().clone()).collect();
    (0..x.nrows())
        .map(|i| {
            let y = DVector::from_fn(p, |d, _| {
                let z = (x[(i, d)] - parts.preprocess.means[d]) / parts.preprocess.variances[d].sqrt();
                let u = std_normal_cdf(z).clamp(1e-6, 1.0 - 1e-6);
                let b = cox_de_boor(&knots, 4, u);
                b.iter().zip(model.coefficients(d).iter()).map(|(b, t)| b * t).sum()
            });
            let l0 = parts.lambda0.ln() + gauss_log_density(&y, &parts.mu[0], &cov[0]);
            let l1 = (1.0 - parts.lambda0).ln() + gauss_log_density(&y, &parts.mu[1], &cov[1]);
            if l0 > l1 {
                0
            } else {
                1
            }
        })
        .collect()
}

/// Training set of replication `rep` of a simulated scenario.
pub fn sim_train(p: usize, n_star: usize, n_l_star: usize, kind: TransformKind, seed: u64, rep: usize) -> Dataset {
    let mut s = SimScenario::new(p, n_star, n_l_star, kind);
    s.seed = seed;
    s.n_test_per_class = 10;
    let params = scenario_params(&s).unwrap();
    gen_dataset(&s, &params, rep).unwrap().train
}

/// Standard-normal draw by Box-Muller on the library's uniform source.
pub fn normal(rng: &mut RngStream) -> f64 {
    let (u, v) = (rng.open01(), rng.open01());
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Multivariate normal draw through a Cholesky factor from nalgebra.
pub fn mvn(mu: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut RngStream) -> DVector<f64> {
    let l = cov.clone().cholesky().expect("SPD covariance").l();
    let z = DVector::from_fn(mu.len(), |_, _| normal(rng));
    mu + l * z
}

/// Mean and batch-means standard error of a correlated series.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let size = n / batches;
    let bm: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let var = bm.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Mean and standard error of an independent sample.
pub fn iid_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
