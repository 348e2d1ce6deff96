//! Replication harness for the simulation tables and the real-data recipe.

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{select_and_fit, FitConfig};
use crate::dataset::{Dataset, MISSING_LABEL};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, confusion, rates, AggregateRates, Rates};
use crate::numeric::rng::stream_key;
use crate::numeric::RngStream;
use crate::simgen::{gen_dataset, scenario_params, SimScenario, TransformKind};

const SPLIT_STREAM: u64 = 21;

/// Run budget for a table replication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Scale {
    pub reps: usize,
    pub pilot_iterations: usize,
    pub final_iterations: usize,
    pub test_per_class: usize,
}

impl Scale {
    pub const DESK: Scale = Scale { reps: 5, pilot_iterations: 300, final_iterations: 1500, test_per_class: 1000 };
    pub const FULL: Scale = Scale { reps: 30, pilot_iterations: 500, final_iterations: 10_000, test_per_class: 5000 };
}

pub const SAMPLE_SIZES: [(usize, usize); 6] = [(50, 3), (50, 5), (50, 10), (100, 3), (100, 5), (100, 10)];

/// Scenario grid of simulation table 1 (logistic), 2 (probit) or 3 (mixed).
pub fn table_scenarios(table: u8, dims: Option<&[usize]>, seed: u64, scale: Scale) -> Result<Vec<SimScenario>> {
    let (transform, default_dims): (TransformKind, &[usize]) = match table {
        1 => (TransformKind::Logistic, &[5, 10, 15]),
        2 => (TransformKind::Probit, &[5, 10, 15]),
        3 => (TransformKind::Mixed, &[5]),
        t => return Err(Error::Usage(format!("table must be 1, 2 or 3, got {t}"))),
    };
    let dims = dims.unwrap_or(default_dims);
    let mut out = Vec::new();
    for &p in dims {
        for &(n_star, n_l_star) in &SAMPLE_SIZES {
            let mut s = SimScenario::new(p, n_star, n_l_star, transform);
            s.n_test_per_class = scale.test_per_class;
            s.replications = scale.reps;
            s.seed = seed;
            out.push(s);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CellResult {
    pub scenario: SimScenario,
    /// Per-replication rates; `None` where the fit failed.
    pub runs: Vec<Option<Rates>>,
    pub failures: Vec<String>,
    pub aggregate: Option<AggregateRates>,
}

impl CellResult {
    pub fn mean_error(&self) -> Option<f64> {
        self.aggregate.map(|a| a.error)
    }
}

/// Test-set rates of one simulated replication.
pub fn run_replication(scenario: &SimScenario, fit: &FitConfig, rep: usize) -> Result<Rates> {
    let params = scenario_params(scenario)?;
    let sim = gen_dataset(scenario, &params, rep)?;
    let mut cfg = fit.clone();
    cfg.seed = stream_key(&[fit.seed, rep as u64]);
    let outcome = select_and_fit(&sim.train, &cfg)?;
    let pred = outcome.model.predict(&sim.test.x)?;
    rates(&confusion(&sim.test.labels, &pred.labels)?)
}

/// All replications of one cell, in parallel when `fit.parallel` is set.
pub fn run_cell(scenario: &SimScenario, fit: &FitConfig) -> CellResult {
    let reps: Vec<usize> = (0..scenario.replications).collect();
    let results: Vec<Result<Rates>> = if fit.parallel {
        reps.par_iter().map(|&r| run_replication(scenario, fit, r)).collect()
    } else {
        reps.iter().map(|&r| run_replication(scenario, fit, r)).collect()
    };
    let (runs, failures, aggregate) = collect(results);
    CellResult { scenario: scenario.clone(), runs, failures, aggregate }
}

type Collected = (Vec<Option<Rates>>, Vec<String>, Option<AggregateRates>);

fn collect(results: Vec<Result<Rates>>) -> Collected {
    let mut runs = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(rt) => runs.push(Some(rt)),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failures.push(format!("rep {rep}: {e}"));
                runs.push(None);
            }
        }
    }
    let ok: Vec<Rates> = runs.iter().flatten().copied().collect();
    let agg = aggregate(&ok);
    (runs, failures, agg)
}

/// Mean error ×100 per cell, one row per (n*, nl*) grouped by p.
pub fn format_table(cells: &[CellResult]) -> String {
    let mut s = format!("{:>3}  {:>10}  {:>8}  {:>6}\n", "p", "(n*, nl*)", "error%", "fails");
    let mut last_p = None;
    for c in cells {
        let sc = &c.scenario;
        let p = if last_p == Some(sc.p) { String::new() } else { sc.p.to_string() };
        last_p = Some(sc.p);
        let err = c.mean_error().map(|e| format!("{:.2}", 100.0 * e)).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{p:>3}  {:>10}  {err:>8}  {:>6}\n",
            format!("({},{})", sc.n_star, sc.n_l_star),
            c.failures.len()
        ));
    }
    s
}

pub const TABLE_CSV_HEADER: &str = "p,n_star,n_l_star,transform,runs,failures,mean_error,mean_fpr,mean_fnr,mean_mcc";

pub fn format_table_csv(cells: &[CellResult]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into());
    let mut s = format!("{TABLE_CSV_HEADER}\n");
    for c in cells {
        let sc = &c.scenario;
        let a = c.aggregate;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            sc.p,
            sc.n_star,
            sc.n_l_star,
            sc.transform,
            a.map_or(0, |a| a.runs),
            c.failures.len(),
            opt(a.map(|a| a.error)),
            opt(a.and_then(|a| a.fpr)),
            opt(a.and_then(|a| a.fnr)),
            opt(a.map(|a| a.mcc)),
        ));
    }
    s
}

/// The real-data recipe: random train/test split, a random fraction of the
/// training labels kept, repeated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RealRecipe {
    pub train_fraction: f64,
    pub label_fraction: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for RealRecipe {
    fn default() -> Self {
        Self { train_fraction: 0.7, label_fraction: 0.15, reps: 10, seed: 0 }
    }
}

/// One split of a fully labeled dataset: (train with masked labels, test).
pub fn split_real(data: &Dataset, recipe: &RealRecipe, rep: usize) -> Result<(Dataset, Dataset)> {
    let truth = data.full_labels()?;
    let n = data.n_rows();
    if n < 4 {
        return Err(Error::Data(format!("need at least 4 rows to split, got {n}")));
    }
    if !(recipe.train_fraction > 0.0 && recipe.train_fraction < 1.0)
        || !(recipe.label_fraction > 0.0 && recipe.label_fraction <= 1.0)
    {
        return Err(Error::Usage("train and label fractions must lie in (0, 1)".into()));
    }
    let n_train = ((n as f64 * recipe.train_fraction).round() as usize).clamp(1, n - 1);
    let n_lab = ((n_train as f64 * recipe.label_fraction).round() as usize).clamp(2, n_train);
    let mut rng = RngStream::new(recipe.seed, stream_key(&[SPLIT_STREAM, rep as u64]));
    let perm = rand::seq::index::sample(&mut rng, n, n).into_vec();
    let (train_idx, test_idx) = perm.split_at(n_train);
    let labeled: std::collections::HashSet<usize> =
        rand::seq::index::sample(&mut rng, n_train, n_lab).into_iter().collect();

    let rows = |idx: &[usize]| data.x.select_rows(idx);
    let train_labels = (0..n_train)
        .map(|k| if labeled.contains(&k) { truth[train_idx[k]] } else { MISSING_LABEL })
        .collect();
    let test_labels = test_idx.iter().map(|&i| truth[i]).collect();
    Ok((
        Dataset::new(rows(train_idx), train_labels, Some(data.feature_names.clone()))?,
        Dataset::new(rows(test_idx), test_labels, Some(data.feature_names.clone()))?,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct RealResult {
    pub recipe: RealRecipe,
    pub runs: Vec<Option<Rates>>,
    pub failures: Vec<String>,
    pub aggregate: Option<AggregateRates>,
}

pub fn run_real(data: &Dataset, recipe: &RealRecipe, fit: &FitConfig) -> Result<RealResult> {
    data.full_labels()?;
    let one = |rep: usize| -> Result<Rates> {
        let (train, test) = split_real(data, recipe, rep)?;
        let mut cfg = fit.clone();
        cfg.seed = stream_key(&[fit.seed, rep as u64]);
        let model = select_and_fit(&train, &cfg)?.model;
        let pred = model.predict(&test.x)?;
        rates(&confusion(&test.labels, &pred.labels)?)
    };
    let reps: Vec<usize> = (0..recipe.reps).collect();
    let results: Vec<Result<Rates>> = if fit.parallel {
        reps.par_iter().map(|&r| one(r)).collect()
    } else {
        reps.iter().map(|&r| one(r)).collect()
    };
    let (runs, failures, aggregate) = collect(results);
    Ok(RealResult { recipe: *recipe, runs, failures, aggregate })
}
