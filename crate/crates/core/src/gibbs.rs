//! Gibbs sampler for the semi-supervised nonparanormal model.
//!
//! State per iteration: reduced spline coefficients θ̄_d for every dimension,
//! the transformed data Y, class parameters (μ_k, Σ_k), the current labels and
//! the class-0 weight λ₀. One iteration runs, in order:
//!
//! 1. for each d, θ̄_d from its truncated-normal full conditional, then the
//!    Y column d is refreshed;
//! 2. Σ_k⁻¹ ~ Wishart(n_k − 1, S_k⁻¹) and μ_k ~ N(Ȳ_k, Σ_k/n_k);
//! 3. missing labels from their class posterior, and λ₀ ~ Beta when learned.
//!
//! Posterior means are accumulated after burn-in without storing draws.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::MISSING_LABEL;
use crate::error::{Error, Result};
use crate::numeric::linalg::{self, mean_and_covariance};
use crate::numeric::{
    mvn_ln_pdf, sample_bernoulli, sample_beta, sample_mvn, sample_wishart, std_normal_quantile,
    RngStream, SpdMatrix,
};
use crate::prior::ReducedPrior;
use crate::splines::SplineBasis;
use crate::tmvn::TruncatedNormal;

/// How the class weights λ₀, λ₁ = 1 − λ₀ are handled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaMode {
    /// λ₀ ~ Beta(l0, l1) a priori, updated every iteration.
    Learn { l0: f64, l1: f64 },
    /// λ₀ held at the given value.
    Fixed { lambda0: f64 },
}

impl Default for LambdaMode {
    fn default() -> Self {
        LambdaMode::Learn { l0: 1.0, l1: 1.0 }
    }
}

impl LambdaMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LambdaMode::Learn { l0, l1 } if l0 > 0.0 && l1 > 0.0 => Ok(()),
            LambdaMode::Fixed { lambda0 } if lambda0 > 0.0 && lambda0 < 1.0 => Ok(()),
            other => Err(Error::Usage(format!("invalid lambda mode {other:?}"))),
        }
    }
}

/// Degrees of freedom used for the precision draw.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WishartDf {
    /// n_k − 1, the conjugate result under the flat prior.
    #[default]
    CountMinusOne,
    /// n_k.
    Count,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    /// Defaults to `iterations / 2` when `None`.
    pub burn_in: Option<usize>,
    pub lambda_mode: LambdaMode,
    pub seed: u64,
    pub stream: u64,
    /// Coordinate sweeps of the truncated-normal sampler per θ̄_d update.
    pub tmvn_sweeps: usize,
    pub wishart_df: WishartDf,
    /// When false the spline coefficients stay at their initial values.
    pub update_theta: bool,
    pub trace: Option<TraceConfig>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            burn_in: None,
            lambda_mode: LambdaMode::default(),
            seed: 0,
            stream: 0,
            tmvn_sweeps: 1,
            wishart_df: WishartDf::default(),
            update_theta: true,
            trace: None,
        }
    }
}

impl ChainConfig {
    pub fn effective_burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.effective_burn_in() >= self.iterations {
            return Err(Error::Usage(format!(
                "need iterations > burn-in, got {} and {}",
                self.iterations,
                self.effective_burn_in()
            )));
        }
        if self.tmvn_sweeps == 0 {
            return Err(Error::Usage("tmvn_sweeps must be at least 1".into()));
        }
        self.lambda_mode.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    /// Record every `every`-th iteration.
    pub every: usize,
    /// Boundary-set ratio bound used for the per-record boundary size.
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub log_joint: f64,
    pub n0: usize,
    pub lambda0: f64,
    pub boundary_size: usize,
}

/// Plain-text trace, one whitespace-separated record per line.
pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut s = String::from("# iteration log_joint n0 lambda0 boundary_size\n");
    for r in records {
        let _ = writeln!(
            s,
            "{} {:e} {} {:e} {}",
            r.iteration, r.log_joint, r.n0, r.lambda0, r.boundary_size
        );
    }
    s
}

/// Training inputs for a chain: features already mapped into [0, 1].
#[derive(Clone, Copy, Debug)]
pub struct ChainData<'a> {
    pub mapped: &'a DMatrix<f64>,
    pub labels_obs: &'a [u8],
}

/// Per-dimension design rows of the Y reconstruction: Y_{id} = rows_d[i]·θ̄_d + offsets_d[i].
#[derive(Clone, Debug)]
pub struct DesignCache {
    rows: Vec<DMatrix<f64>>,
    offsets: Vec<DVector<f64>>,
}

impl DesignCache {
    pub fn new(mapped: &DMatrix<f64>, basis: &SplineBasis, priors: &[ReducedPrior]) -> Result<Self> {
        let (n, p) = mapped.shape();
        if priors.len() != p {
            return Err(Error::Contract(format!("{} priors for {p} dimensions", priors.len())));
        }
        let mut rows = Vec::with_capacity(p);
        let mut offsets = Vec::with_capacity(p);
        for (d, prior) in priors.iter().enumerate() {
            let k = prior.reduced_len();
            let mut r = DMatrix::zeros(n, k);
            let mut o = DVector::zeros(n);
            for i in 0..n {
                let b = basis.eval_basis(mapped[(i, d)])?;
                let (row, off) = prior.design_row(&b);
                r.set_row(i, &row.transpose());
                o[i] = off;
            }
            rows.push(r);
            offsets.push(o);
        }
        Ok(Self { rows, offsets })
    }

    pub fn rows(&self, d: usize) -> &DMatrix<f64> {
        &self.rows[d]
    }

    pub fn offsets(&self, d: usize) -> &DVector<f64> {
        &self.offsets[d]
    }

    /// Y column d for the given θ̄_d.
    pub fn column(&self, d: usize, theta_bar: &DVector<f64>) -> DVector<f64> {
        &self.rows[d] * theta_bar + &self.offsets[d]
    }
}

#[derive(Clone, Debug)]
pub struct ChainState {
    pub theta_bar: Vec<DVector<f64>>,
    /// n×p transformed observations.
    pub y: DMatrix<f64>,
    pub mu: [DVector<f64>; 2],
    pub sigma: [SpdMatrix; 2],
    pub labels: Vec<u8>,
    pub lambda0: f64,
}

impl ChainState {
    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - n1, n1)
    }

    pub fn y_row(&self, i: usize) -> DVector<f64> {
        self.y.row(i).transpose()
    }
}

/// Log of λ_k·φ(y; μ_k, Σ_k) for both classes.
pub fn class_log_weights(
    y: &DVector<f64>,
    mu: &[DVector<f64>; 2],
    sigma: &[SpdMatrix; 2],
    lambda0: f64,
) -> [f64; 2] {
    [
        lambda0.ln() + mvn_ln_pdf(y, &mu[0], &sigma[0]),
        (1.0 - lambda0).ln() + mvn_ln_pdf(y, &mu[1], &sigma[1]),
    ]
}

/// P(class 1) from the two log weights, stable for any magnitudes. Both
/// weights −∞ resolves by comparing them directly (ties give 1/2).
pub fn prob_class1(log_weights: [f64; 2]) -> f64 {
    let [a, b] = log_weights;
    if a == b {
        return 0.5;
    }
    if !a.is_finite() || !b.is_finite() {
        return if b > a { 1.0 } else { 0.0 };
    }
    let d = a - b;
    if d > 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

/// Posterior means over the kept iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_basis: usize,
    pub theta_bar: Vec<DVector<f64>>,
    pub mu: [DVector<f64>; 2],
    pub sigma: [DMatrix<f64>; 2],
    pub lambda0: f64,
    /// Posterior variances of the class means, entrywise.
    pub mu_var: [DVector<f64>; 2],
    pub kept: usize,
    pub total: usize,
    pub boundary_count: Option<usize>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Coordinate updates skipped by the truncated-normal sampler.
    pub tmvn_degenerate: usize,
    /// Scatter matrices that needed a ridge before inversion.
    pub ridge_repairs: usize,
    /// Class parameter updates skipped because a class was (nearly) empty.
    pub skipped_class_updates: usize,
}

#[derive(Clone, Debug)]
struct Accumulator {
    count: usize,
    theta_bar: Vec<DVector<f64>>,
    mu: [DVector<f64>; 2],
    mu_sq: [DVector<f64>; 2],
    sigma: [DMatrix<f64>; 2],
    lambda0: f64,
}

impl Accumulator {
    fn new(state: &ChainState) -> Self {
        let p = state.mu[0].len();
        Self {
            count: 0,
            theta_bar: state.theta_bar.iter().map(|t| DVector::zeros(t.len())).collect(),
            mu: [DVector::zeros(p), DVector::zeros(p)],
            mu_sq: [DVector::zeros(p), DVector::zeros(p)],
            sigma: [DMatrix::zeros(p, p), DMatrix::zeros(p, p)],
            lambda0: 0.0,
        }
    }

    // running means: m += (x - m) / k
    fn push(&mut self, state: &ChainState) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (acc, t) in self.theta_bar.iter_mut().zip(&state.theta_bar) {
            *acc += (t - &*acc) * w;
        }
        for k in 0..2 {
            let m = &state.mu[k];
            self.mu[k] += (m - &self.mu[k]) * w;
            let sq = m.component_mul(m);
            self.mu_sq[k] += (sq - &self.mu_sq[k]) * w;
            self.sigma[k] += (state.sigma[k].matrix() - &self.sigma[k]) * w;
        }
        self.lambda0 += (state.lambda0 - self.lambda0) * w;
    }
}

/// Spline coefficients approximating Φ⁻¹(x)/(Φ⁻¹(3/4) − Φ⁻¹(1/4)) by least
/// squares within the constraint set, made strictly increasing if needed.
pub fn initial_theta(basis: &SplineBasis, prior: &ReducedPrior) -> Result<DVector<f64>> {
    const GRID: usize = 200;
    let iqr = std_normal_quantile(0.75)? - std_normal_quantile(0.25)?;
    let k = prior.reduced_len();
    let mut gram = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for g in 0..GRID {
        let x = (g as f64 + 0.5) / GRID as f64;
        let target = std_normal_quantile(x)? / iqr;
        let (row, off) = prior.design_row(&basis.eval_basis(x)?);
        gram += &row * row.transpose();
        rhs += &row * (target - off);
    }
    let gram = SpdMatrix::from_symmetrized(gram)?;
    let mut theta = prior.reconstruct(&gram.solve(&rhs));

    let cs = prior.constraints();
    let aat_inv = (&cs.a * cs.a.transpose())
        .try_inverse()
        .ok_or_else(|| Error::Init("constraint Gram matrix is singular".into()))?;
    for _ in 0..10 {
        let tb = prior.reduce_theta(&theta);
        if prior.is_monotone(&tb) {
            return Ok(tb);
        }
        theta = strictly_increasing(&isotonic(&theta), 1e-3);
        let c = DVector::from_column_slice(cs.c.as_slice());
        theta += cs.a.transpose() * (&aat_inv * (c - &cs.a * &theta));
    }
    Err(Error::Init(format!(
        "could not find a strictly increasing start for J={}",
        basis.len()
    )))
}

// Pool-adjacent-violators, unit weights.
fn isotonic(v: &DVector<f64>) -> DVector<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &x in v.iter() {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    DVector::from_iterator(v.len(), blocks.into_iter().flat_map(|(m, n)| std::iter::repeat_n(m, n)))
}

fn strictly_increasing(v: &DVector<f64>, gap: f64) -> DVector<f64> {
    let mut out = v.clone();
    for i in 1..out.len() {
        if out[i] < out[i - 1] + gap {
            out[i] = out[i - 1] + gap;
        }
    }
    out
}

/// The running chain: state, cached design, priors and RNG.
pub struct Sampler {
    cache: DesignCache,
    priors: Vec<ReducedPrior>,
    labels_obs: Vec<u8>,
    state: ChainState,
    precision: [DMatrix<f64>; 2],
    config: ChainConfig,
    rng: RngStream,
    diagnostics: Diagnostics,
    iteration: usize,
}

impl Sampler {
    /// Builds the design cache and the initial state.
    pub fn new(
        data: ChainData<'_>,
        basis: &SplineBasis,
        priors: Vec<ReducedPrior>,
        config: ChainConfig,
    ) -> Result<Self> {
        let theta_bar = priors
            .iter()
            .map(|p| initial_theta(basis, p))
            .collect::<Result<Vec<_>>>()?;
        Self::with_theta(data, basis, priors, theta_bar, config)
    }

    /// As [`Sampler::new`] but starting from the given θ̄'s, which must be
    /// strictly monotone.
    pub fn with_theta(
        data: ChainData<'_>,
        basis: &SplineBasis,
        priors: Vec<ReducedPrior>,
        theta_bar: Vec<DVector<f64>>,
        config: ChainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let (n, p) = data.mapped.shape();
        if data.labels_obs.len() != n {
            return Err(Error::Contract(format!("{} labels for {n} rows", data.labels_obs.len())));
        }
        if theta_bar.len() != p {
            return Err(Error::Contract(format!("{} coefficient vectors for {p} dimensions", theta_bar.len())));
        }
        for (d, (tb, pr)) in theta_bar.iter().zip(&priors).enumerate() {
            if tb.len() != pr.reduced_len() || !pr.is_monotone(tb) {
                return Err(Error::Init(format!("starting coefficients for dimension {d} are not strictly monotone")));
            }
        }
        let cache = DesignCache::new(data.mapped, basis, &priors)?;
        let mut rng = RngStream::new(config.seed, config.stream);
        let state = initial_state(&cache, data.labels_obs, theta_bar, &config.lambda_mode)?;
        let precision = [state.sigma[0].inverse(), state.sigma[1].inverse()];
        // touch the stream so that streams differing only in seed diverge at once
        let _ = rand::RngCore::next_u64(&mut rng);
        Ok(Self {
            cache,
            priors,
            labels_obs: data.labels_obs.to_vec(),
            state,
            precision,
            config,
            rng,
            diagnostics: Diagnostics::default(),
            iteration: 0,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn priors(&self) -> &[ReducedPrior] {
        &self.priors
    }

    pub fn cache(&self) -> &DesignCache {
        &self.cache
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Replaces the class parameters (and cached precisions). For tests and
    /// for callers that hold the transformation fixed.
    pub fn set_class_params(&mut self, mu: [DVector<f64>; 2], sigma: [SpdMatrix; 2]) {
        self.precision = [sigma[0].inverse(), sigma[1].inverse()];
        self.state.mu = mu;
        self.state.sigma = sigma;
    }

    pub fn set_labels(&mut self, labels: Vec<u8>) -> Result<()> {
        if labels.len() != self.labels_obs.len() {
            return Err(Error::Contract("label vector has the wrong length".into()));
        }
        for (i, (&l, &o)) in labels.iter().zip(&self.labels_obs).enumerate() {
            if l > 1 || (o != MISSING_LABEL && o != l) {
                return Err(Error::Contract(format!("label {l} at row {i} conflicts with observed {o}")));
            }
        }
        self.state.labels = labels;
        Ok(())
    }

    /// Full conditional of θ̄_d in canonical form (precision, linear term):
    /// density ∝ exp(−½ θ̄ᵀΛθ̄ + θ̄ᵀη) on {F̄θ̄ + ḡ > 0}.
    pub fn theta_full_conditional(&self, d: usize) -> Result<(SpdMatrix, DVector<f64>)> {
        let prior = &self.priors[d];
        let rows = self.cache.rows(d);
        let offsets = self.cache.offsets(d);
        let st = &self.state;
        let p = st.y.ncols();
        let k = prior.reduced_len();

        let mut lambda = prior.gamma_bar_inv().clone();
        let mut eta = prior.prior_shift().clone();
        let mut row = DVector::zeros(k);
        for (i, &label) in st.labels.iter().enumerate() {
            let c = label as usize;
            let q = &self.precision[c];
            let mu = &st.mu[c];
            let qdd = q[(d, d)];
            let mut cross = 0.0;
            for e in 0..p {
                if e != d {
                    cross += q[(d, e)] * (st.y[(i, e)] - mu[e]);
                }
            }
            let resid = qdd * (offsets[i] - mu[d]) + cross;
            row.copy_from(&rows.row(i).transpose());
            lambda.ger(qdd, &row, &row, 1.0);
            eta.axpy(-resid, &row, 1.0);
        }
        let lambda = SpdMatrix::from_symmetrized(lambda).map_err(|e| Error::Numeric {
            iteration: self.iteration,
            reason: format!("full-conditional precision for dimension {d} not SPD: {e}"),
        })?;
        Ok((lambda, eta))
    }

    /// Step 1: all θ̄_d in turn, each followed by its Y column refresh.
    pub fn step_theta(&mut self) -> Result<()> {
        let p = self.state.y.ncols();
        for d in 0..p {
            let (precision, linear) = self.theta_full_conditional(d)?;
            let prior = &self.priors[d];
            let mut tn = TruncatedNormal::from_canonical(
                &precision,
                &linear,
                prior.f_bar().clone(),
                prior.g_bar().clone(),
                self.state.theta_bar[d].clone(),
            )
            .map_err(|e| Error::Numeric {
                iteration: self.iteration,
                reason: format!("dimension {d}: {e}"),
            })?;
            for _ in 0..self.config.tmvn_sweeps {
                tn.sweep(&mut self.rng);
            }
            self.diagnostics.tmvn_degenerate += tn.degenerate_count();
            let tb = tn.into_current();
            let col = self.cache.column(d, &tb);
            self.state.y.set_column(d, &col);
            self.state.theta_bar[d] = tb;
        }
        Ok(())
    }

    /// Step 2: class precision and mean draws.
    pub fn step_params(&mut self) -> Result<()> {
        let p = self.state.y.ncols();
        for class in 0..2u8 {
            let rows: Vec<DVector<f64>> = self
                .state
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == class)
                .map(|(i, _)| self.state.y_row(i))
                .collect();
            let n_k = rows.len();
            if n_k < 2 {
                log::warn!(
                    "iteration {}: class {class} has {n_k} members, keeping previous parameters",
                    self.iteration
                );
                self.diagnostics.skipped_class_updates += 1;
                continue;
            }
            let (ybar, cov) = mean_and_covariance(&rows).expect("at least two rows");
            let scatter = cov * (n_k - 1) as f64;
            let mut df = match self.config.wishart_df {
                WishartDf::CountMinusOne => (n_k - 1) as f64,
                WishartDf::Count => n_k as f64,
            };
            let scatter = match SpdMatrix::from_symmetrized(scatter.clone()) {
                Ok(s) if n_k >= p + 2 => s,
                _ => {
                    let eps = 1e-6 * (scatter.trace() / p as f64).max(1e-12);
                    log::warn!(
                        "iteration {}: ridge {eps:e} on class {class} scatter (n_k = {n_k}, p = {p})",
                        self.iteration
                    );
                    self.diagnostics.ridge_repairs += 1;
                    df = df.max(p as f64);
                    SpdMatrix::from_symmetrized(scatter + DMatrix::identity(p, p) * eps)
                        .map_err(|e| self.numeric(format!("class {class} scatter: {e}")))?
                }
            };
            let scale = scatter
                .inverse_spd()
                .map_err(|e| self.numeric(format!("class {class} inverse scatter: {e}")))?;
            let prec = sample_wishart(df, &scale, &mut self.rng)?;
            let sigma = prec
                .inverse_spd()
                .map_err(|e| self.numeric(format!("class {class} covariance: {e}")))?;
            let mean_cov = SpdMatrix::from_symmetrized(sigma.matrix() / n_k as f64)
                .map_err(|e| self.numeric(format!("class {class} mean covariance: {e}")))?;
            let mu = sample_mvn(&ybar, &mean_cov, &mut self.rng)?;
            let c = class as usize;
            self.precision[c] = prec.into_matrix();
            self.state.sigma[c] = sigma;
            self.state.mu[c] = mu;
        }
        Ok(())
    }

    /// Step 3: impute missing labels, then update λ₀ when learned.
    pub fn step_labels(&mut self) -> Result<()> {
        let n = self.state.labels.len();
        for i in 0..n {
            if self.labels_obs[i] != MISSING_LABEL {
                continue;
            }
            let lw = class_log_weights(
                &self.state.y_row(i),
                &self.state.mu,
                &self.state.sigma,
                self.state.lambda0,
            );
            self.state.labels[i] = sample_bernoulli(prob_class1(lw), &mut self.rng)?;
        }
        if let LambdaMode::Learn { l0, l1 } = self.config.lambda_mode {
            let (n0, n1) = self.state.class_counts();
            let draw = sample_beta(l0 + n0 as f64, l1 + n1 as f64, &mut self.rng)?;
            self.state.lambda0 = draw.clamp(1e-12, 1.0 - 1e-12);
        }
        Ok(())
    }

    /// One full iteration (θ, class parameters, labels).
    pub fn iterate(&mut self) -> Result<()> {
        if self.config.update_theta {
            self.step_theta()?;
        }
        self.step_params()?;
        self.step_labels()?;
        self.iteration += 1;
        Ok(())
    }

    /// Log joint density of the current state, up to a constant: labels and
    /// Gaussian likelihood of Y, untruncated prior of every θ̄_d, and the Beta
    /// prior of λ₀ when learned.
    pub fn log_joint(&self) -> f64 {
        let st = &self.state;
        let mut lp = 0.0;
        for (i, &l) in st.labels.iter().enumerate() {
            lp += class_log_weights(&st.y_row(i), &st.mu, &st.sigma, st.lambda0)[l as usize];
        }
        for (tb, prior) in st.theta_bar.iter().zip(&self.priors) {
            lp += mvn_ln_pdf(tb, prior.xi_bar(), prior.gamma_bar());
        }
        if let LambdaMode::Learn { l0, l1 } = self.config.lambda_mode {
            lp += (l0 - 1.0) * st.lambda0.ln() + (l1 - 1.0) * (1.0 - st.lambda0).ln();
        }
        lp
    }

    fn boundary_size(&self, m: f64) -> usize {
        let st = &self.state;
        let bound = m.ln();
        (0..st.labels.len())
            .filter(|&i| {
                let [a, b] = class_log_weights(&st.y_row(i), &st.mu, &st.sigma, st.lambda0);
                (a - b).abs() < bound
            })
            .count()
    }

    fn numeric(&self, reason: String) -> Error {
        Error::Numeric {
            iteration: self.iteration,
            reason,
        }
    }

    /// Runs the configured number of iterations and returns posterior means
    /// plus the trace when one was requested.
    pub fn run(mut self) -> Result<(PosteriorSummary, Vec<TraceRecord>)> {
        let total = self.config.iterations;
        let burn_in = self.config.effective_burn_in();
        let mut acc = Accumulator::new(&self.state);
        let mut trace = Vec::new();
        for it in 0..total {
            self.iterate()?;
            if it >= burn_in {
                acc.push(&self.state);
            }
            if let Some(tc) = self.config.trace {
                if tc.every > 0 && (it + 1) % tc.every == 0 {
                    trace.push(TraceRecord {
                        iteration: it + 1,
                        log_joint: self.log_joint(),
                        n0: self.state.class_counts().0,
                        lambda0: self.state.lambda0,
                        boundary_size: self.boundary_size(tc.m),
                    });
                }
            }
        }
        let mu_var = [0, 1].map(|k| {
            let m = &acc.mu[k];
            (&acc.mu_sq[k] - m.component_mul(m)).map(|v| v.max(0.0))
        });
        let mut sigma = acc.sigma.clone();
        for s in &mut sigma {
            linalg::symmetrize(s);
        }
        let summary = PosteriorSummary {
            n_basis: self.priors[0].n_basis(),
            theta_bar: acc.theta_bar,
            mu: acc.mu,
            sigma,
            lambda0: acc.lambda0,
            mu_var,
            kept: acc.count,
            total,
            boundary_count: None,
            diagnostics: self.diagnostics,
        };
        Ok((summary, trace))
    }
}

fn initial_state(
    cache: &DesignCache,
    labels_obs: &[u8],
    theta_bar: Vec<DVector<f64>>,
    lambda_mode: &LambdaMode,
) -> Result<ChainState> {
    let n = labels_obs.len();
    let p = theta_bar.len();
    let mut y = DMatrix::zeros(n, p);
    for (d, tb) in theta_bar.iter().enumerate() {
        y.set_column(d, &cache.column(d, tb));
    }
    let rows_of = |class: u8| -> Vec<DVector<f64>> {
        (0..n)
            .filter(|&i| labels_obs[i] == class)
            .map(|i| y.row(i).transpose())
            .collect()
    };
    let all_rows: Vec<DVector<f64>> = (0..n).map(|i| y.row(i).transpose()).collect();
    let pooled = mean_and_covariance(&all_rows)
        .map(|(_, c)| c)
        .unwrap_or_else(|| DMatrix::identity(p, p));

    let mut mu = Vec::with_capacity(2);
    let mut sigma = Vec::with_capacity(2);
    for class in 0..2u8 {
        let rows = rows_of(class);
        if rows.is_empty() {
            return Err(Error::Init(format!("no observed label for class {class}")));
        }
        let mean = rows.iter().fold(DVector::zeros(p), |a, r| a + r) / rows.len() as f64;
        let cov = if rows.len() > p {
            mean_and_covariance(&rows).and_then(|(_, c)| SpdMatrix::from_symmetrized(c).ok())
        } else {
            None
        };
        let cov = match cov {
            Some(c) => c,
            None => spd_with_ridge(pooled.clone())?,
        };
        mu.push(mean);
        sigma.push(cov);
    }
    let mu: [DVector<f64>; 2] = [mu[0].clone(), mu[1].clone()];
    let sigma: [SpdMatrix; 2] = [sigma[0].clone(), sigma[1].clone()];

    let labels: Vec<u8> = (0..n)
        .map(|i| {
            if labels_obs[i] != MISSING_LABEL {
                return labels_obs[i];
            }
            let yi = y.row(i).transpose();
            // equidistant points go to class 0
            if (&yi - &mu[1]).norm() < (&yi - &mu[0]).norm() {
                1
            } else {
                0
            }
        })
        .collect();
    let lambda0 = match *lambda_mode {
        LambdaMode::Fixed { lambda0 } => lambda0,
        LambdaMode::Learn { .. } => {
            let n0 = labels.iter().filter(|&&l| l == 0).count();
            n0 as f64 / n as f64
        }
    };
    Ok(ChainState {
        theta_bar,
        y,
        mu,
        sigma,
        labels,
        lambda0,
    })
}

fn spd_with_ridge(m: DMatrix<f64>) -> Result<SpdMatrix> {
    let p = m.nrows();
    let eps = 1e-6 * (m.trace() / p as f64).max(1e-6);
    SpdMatrix::from_symmetrized(m.clone())
        .or_else(|_| SpdMatrix::from_symmetrized(m.clone() + DMatrix::identity(p, p) * eps))
        .or_else(|_| SpdMatrix::from_symmetrized(DMatrix::identity(p, p)))
}

/// Builds a sampler and runs it to completion.
pub fn run_chain(
    data: ChainData<'_>,
    basis: &SplineBasis,
    priors: Vec<ReducedPrior>,
    config: ChainConfig,
) -> Result<(PosteriorSummary, Vec<TraceRecord>)> {
    Sampler::new(data, basis, priors, config)?.run()
}
