//! Numeric primitives shared across the crate.

pub mod dist;
pub mod linalg;
pub mod normal;
pub mod rng;

pub use dist::{
    sample_bernoulli, sample_beta, sample_chi_squared, sample_mvn, sample_std_normal,
    sample_uniform, sample_wishart,
};
pub use linalg::{cholesky, mvn_ln_pdf, SpdMatrix};
pub use normal::{std_normal_cdf, std_normal_quantile, std_normal_sf};
pub use rng::RngStream;
