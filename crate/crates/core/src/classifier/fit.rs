//! Fitting: basis-size selection by the boundary criterion, then a final chain.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::model::{FitSettings, FittedModel, ModelParts, SelectionReport, SelectionRow};
use super::preprocess::PreprocessMap;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainConfig, ChainData, LambdaMode, PosteriorSummary, TraceConfig, TraceRecord, WishartDf};
use crate::numeric::rng::stream_key;
use crate::numeric::SpdMatrix;
use crate::prior::{PriorConfig, ReducedPrior};
use crate::splines::SplineBasis;

const PILOT_STREAM: u64 = 1;
const FINAL_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub j_candidates: Vec<usize>,
    pub pilot_iterations: usize,
    pub final_iterations: usize,
    /// Burn-in of the final chain; half of it when `None`. Pilot chains
    /// always discard their first half.
    pub burn_in: Option<usize>,
    pub m: f64,
    pub lambda_mode: LambdaMode,
    pub seed: u64,
    pub prior: PriorConfig,
    pub tmvn_sweeps: usize,
    pub wishart_df: WishartDf,
    /// Run pilot chains on the rayon pool.
    pub parallel: bool,
    /// Trace of the final chain.
    pub trace: Option<TraceConfig>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            j_candidates: (8..=15).collect(),
            pilot_iterations: 500,
            final_iterations: 10_000,
            burn_in: None,
            m: 3.0,
            lambda_mode: LambdaMode::default(),
            seed: 0,
            prior: PriorConfig::default(),
            tmvn_sweeps: 1,
            wishart_df: WishartDf::default(),
            parallel: true,
            trace: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.j_candidates.is_empty() {
            return Err(Error::Usage("empty basis-size range".into()));
        }
        if let Some(&j) = self.j_candidates.iter().find(|&&j| j < crate::splines::MIN_BASIS_SIZE) {
            return Err(Error::Usage(format!("basis size {j} is below the minimum of {}", crate::splines::MIN_BASIS_SIZE)));
        }
        if !(self.m > 1.0) {
            return Err(Error::Usage(format!("boundary ratio m must exceed 1, got {}", self.m)));
        }
        if self.j_candidates.len() > 1 && self.pilot_iterations < 2 {
            return Err(Error::Usage("pilot chains need at least 2 iterations".into()));
        }
        self.lambda_mode.validate()
    }

    fn chain(&self, iterations: usize, burn_in: Option<usize>, stream: u64) -> ChainConfig {
        ChainConfig {
            iterations,
            burn_in,
            lambda_mode: self.lambda_mode,
            seed: self.seed,
            stream,
            tmvn_sweeps: self.tmvn_sweeps,
            wishart_df: self.wishart_df,
            update_theta: true,
            trace: None,
        }
    }
}

/// A fitted model together with the final chain's trace.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: FittedModel,
    pub trace: Vec<TraceRecord>,
}

struct Prepared<'a> {
    data: &'a Dataset,
    map: PreprocessMap,
    mapped: DMatrix<f64>,
    prior: PriorConfig,
}

impl Prepared<'_> {
    fn run(&self, n_basis: usize, chain: ChainConfig) -> Result<(PosteriorSummary, Vec<TraceRecord>)> {
        let basis = SplineBasis::new(n_basis)?;
        let prior = ReducedPrior::build(&basis, &self.prior)?;
        run_chain(
            ChainData { mapped: &self.mapped, labels_obs: &self.data.labels },
            &basis,
            vec![prior; self.data.n_features()],
            chain,
        )
    }
}

fn model_from_summary(
    prep: &Prepared<'_>,
    config: &FitConfig,
    summary: PosteriorSummary,
    iterations: usize,
    burn_in: usize,
    selection: SelectionReport,
) -> Result<FittedModel> {
    let [s0, s1] = summary.sigma;
    let sigma = [SpdMatrix::from_symmetrized(s0)?, SpdMatrix::from_symmetrized(s1)?];
    FittedModel::from_parts(ModelParts {
        n_basis: summary.n_basis,
        prior: config.prior,
        preprocess: prep.map.clone(),
        feature_names: prep.data.feature_names.clone(),
        theta_bar: summary.theta_bar,
        mu: summary.mu,
        sigma,
        lambda0: summary.lambda0,
        settings: FitSettings {
            iterations,
            burn_in,
            seed: config.seed,
            lambda_mode: config.lambda_mode,
            pilot_iterations: config.pilot_iterations,
            m: config.m,
            tmvn_sweeps: config.tmvn_sweeps,
            wishart_df: config.wishart_df,
        },
        selection,
        diagnostics: summary.diagnostics,
    })
}

/// Boundary count of one pilot chain at basis size `n_basis`.
fn pilot(prep: &Prepared<'_>, config: &FitConfig, n_basis: usize) -> Result<usize> {
    let chain = config.chain(config.pilot_iterations, None, stream_key(&[PILOT_STREAM, n_basis as u64]));
    let burn_in = chain.effective_burn_in();
    let (summary, _) = prep.run(n_basis, chain)?;
    let placeholder = SelectionReport { m: config.m, rows: Vec::new(), selected: n_basis };
    let model = model_from_summary(prep, config, summary, config.pilot_iterations, burn_in, placeholder)?;
    model.boundary_count(&prep.data.x, config.m)
}

fn prepare<'a>(data: &'a Dataset, config: &FitConfig) -> Result<Prepared<'a>> {
    config.validate()?;
    data.check_fittable()?;
    let map = PreprocessMap::fit(&data.x, Some(&data.feature_names))?;
    let mapped = map.apply(&data.x)?;
    Ok(Prepared { data, map, mapped, prior: config.prior })
}

fn run_pilots(prep: &Prepared<'_>, config: &FitConfig, candidates: &[usize]) -> Result<SelectionReport> {
    let results: Vec<Result<usize>> = if config.parallel {
        candidates.par_iter().map(|&j| pilot(prep, config, j)).collect()
    } else {
        candidates.iter().map(|&j| pilot(prep, config, j)).collect()
    };
    let mut rows = Vec::with_capacity(candidates.len());
    let mut first_err = None;
    let mut best: Option<(usize, usize)> = None;
    for (&j, r) in candidates.iter().zip(results) {
        match r {
            Ok(count) => {
                log::info!("J = {j}: boundary count {count}");
                if best.is_none_or(|(_, c)| count < c) {
                    best = Some((j, count));
                }
                rows.push(SelectionRow { n_basis: j, boundary_count: Some(count), failure: None });
            }
            Err(e) => {
                log::warn!("pilot chain for J = {j} failed: {e}");
                rows.push(SelectionRow { n_basis: j, boundary_count: None, failure: Some(e.to_string()) });
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((selected, _)) => Ok(SelectionReport { m: config.m, rows, selected }),
        None => Err(first_err.expect("at least one candidate")),
    }
}

fn sorted_candidates(config: &FitConfig) -> Vec<usize> {
    let mut c = config.j_candidates.clone();
    c.sort_unstable();
    c.dedup();
    c
}

/// Pilot stage only: one chain per candidate J and its boundary count. The
/// selected J has the fewest training points in the boundary set, ties going
/// to the smaller J.
pub fn select_basis(data: &Dataset, config: &FitConfig) -> Result<SelectionReport> {
    let prep = prepare(data, config)?;
    run_pilots(&prep, config, &sorted_candidates(config))
}

/// Pilot stage followed by the final chain at the selected J. A single
/// candidate skips the pilot stage; its report row then holds the boundary
/// count of the final model.
pub fn select_and_fit(data: &Dataset, config: &FitConfig) -> Result<FitOutcome> {
    let prep = prepare(data, config)?;
    let candidates = sorted_candidates(config);
    let report = if candidates.len() == 1 {
        None
    } else {
        Some(run_pilots(&prep, config, &candidates)?)
    };
    let selected = report.as_ref().map_or(candidates[0], |r| r.selected);

    let mut chain = config.chain(
        config.final_iterations,
        config.burn_in,
        stream_key(&[FINAL_STREAM, selected as u64]),
    );
    chain.trace = config.trace;
    let burn_in = chain.effective_burn_in();
    let (summary, trace) = prep.run(selected, chain)?;
    let placeholder = SelectionReport { m: config.m, rows: Vec::new(), selected };
    let model = model_from_summary(&prep, config, summary, config.final_iterations, burn_in, placeholder)?;

    let report = match report {
        Some(r) => r,
        None => {
            let count = model.boundary_count(&data.x, config.m)?;
            SelectionReport {
                m: config.m,
                rows: vec![SelectionRow { n_basis: selected, boundary_count: Some(count), failure: None }],
                selected,
            }
        }
    };
    let mut parts = model.parts().clone();
    parts.selection = report;
    Ok(FitOutcome { model: FittedModel::from_parts(parts)?, trace })
}
