//! Command-line interface of the `npn` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classifier::{select_and_fit, select_basis, FitConfig, FittedModel};
use crate::csvio;
use crate::error::{Error, Result};
use crate::gibbs::{format_trace, LambdaMode, TraceConfig, WishartDf};
use crate::harness::{format_table, format_table_csv, run_cell, run_real, table_scenarios, RealRecipe, Scale};
use crate::metrics::{aggregate, confusion, rates, rates_csv, rates_table};
use crate::prior::PriorConfig;
use crate::simgen::{gen_dataset, scenario_params, SimScenario};

#[derive(Debug, Parser)]
#[command(name = "npn", version, about = "Nonparanormal semi-supervised binary classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one replication of a simulated scenario.
    Simulate(SimulateArgs),
    /// Select the basis size and fit a model.
    Fit(FitArgs),
    /// Run the pilot chains only and print the selection report.
    SelectBasis(SelectArgs),
    /// Classify the rows of a CSV with a saved model.
    Predict(PredictArgs),
    /// Compare predictions with true labels.
    Evaluate(EvaluateArgs),
    /// Reproduce a simulation table, or run the real-data recipe.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario manifest (key = value lines).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for train.csv, test.csv and params.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Replication index.
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
}

/// Lambda handling: `learn`, `learn:a,b` or `fixed:v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaArg(pub LambdaMode);

impl FromStr for LambdaArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad number {v:?} in lambda spec"));
        let mode = match s.split_once(':') {
            None if s == "learn" => LambdaMode::default(),
            Some(("learn", ab)) => {
                let (a, b) = ab.split_once(',').ok_or("expected learn:a,b")?;
                LambdaMode::Learn { l0: num(a)?, l1: num(b)? }
            }
            Some(("fixed", v)) => LambdaMode::Fixed { lambda0: num(v)? },
            _ => return Err(format!("expected learn, learn:a,b or fixed:v, got {s:?}")),
        };
        mode.validate().map_err(|e| e.to_string())?;
        Ok(LambdaArg(mode))
    }
}

/// Basis sizes: `a..b` (inclusive), a single value, or a comma list.
#[derive(Clone, Debug, PartialEq)]
pub struct JRange(pub Vec<usize>);

impl FromStr for JRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad basis size {v:?}"));
        let js: Vec<usize> = match s.split_once("..") {
            Some((a, b)) => {
                let b = b.strip_prefix('=').unwrap_or(b);
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty range {s}"));
                }
                (a..=b).collect()
            }
            None => s.split(',').map(num).collect::<std::result::Result<_, _>>()?,
        };
        Ok(JRange(js))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WishartDfArg {
    /// n_k - 1
    CountMinusOne,
    /// n_k
    Count,
}

impl From<WishartDfArg> for WishartDf {
    fn from(a: WishartDfArg) -> Self {
        match a {
            WishartDfArg::CountMinusOne => WishartDf::CountMinusOne,
            WishartDfArg::Count => WishartDf::Count,
        }
    }
}

/// Sampler and selection flags shared by every fitting command.
#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Candidate basis sizes, e.g. 8..15, 10..10 or 8,10,12.
    #[arg(long, default_value = "8..15")]
    pub j_range: JRange,
    #[arg(long, default_value_t = 500)]
    pub pilot_iters: usize,
    /// Boundary ratio bound of the selection criterion.
    #[arg(long, default_value_t = 3.0)]
    pub m: f64,
    /// learn, learn:a,b (Beta prior) or fixed:v.
    #[arg(long, default_value = "learn")]
    pub lambda: LambdaArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Prior variance scale of the spline coefficients.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Location of the prior mean transformation.
    #[arg(long, default_value_t = 0.0)]
    pub nu: f64,
    /// Scale of the prior mean transformation.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, value_enum, default_value_t = WishartDfArg::CountMinusOne)]
    pub wishart_df: WishartDfArg,
    /// Coordinate sweeps of the truncated-normal sampler per update.
    #[arg(long, default_value_t = 1)]
    pub tmvn_sweeps: usize,
    /// Run chains one after another instead of on the thread pool.
    #[arg(long)]
    pub sequential: bool,
}

impl ChainArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            j_candidates: self.j_range.0.clone(),
            pilot_iterations: self.pilot_iters,
            m: self.m,
            lambda_mode: self.lambda.0,
            seed: self.seed,
            prior: PriorConfig { sigma2: self.sigma2, nu: self.nu, tau: self.tau },
            tmvn_sweeps: self.tmvn_sweeps,
            wishart_df: self.wishart_df.into(),
            parallel: !self.sequential,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training CSV.
    pub train: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, default_value_t = 10_000)]
    pub final_iters: usize,
    /// Burn-in of the final chain (default: half of it).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Write a trace of the final chain to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub trace_every: usize,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Training CSV.
    pub train: PathBuf,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Data CSV; a label column, if present, is ignored.
    pub data: PathBuf,
    /// Predictions CSV to write (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions CSV.
    pub preds: PathBuf,
    /// CSV with a fully observed label column.
    pub truth: PathBuf,
    /// Print CSV instead of an aligned table.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Full,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// Simulation table: 1 logistic, 2 probit, 3 mixed.
    #[arg(long, required_unless_present = "real", conflicts_with = "real", value_parser = clap::value_parser!(u8).range(1..=3))]
    pub table: Option<u8>,
    /// Fully labeled CSV for the real-data recipe.
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
    pub scale: ScaleArg,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated dimensions to run (default: all of the table).
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Override the scale's pilot iterations.
    #[arg(long)]
    pub pilot_iters: Option<usize>,
    #[arg(long)]
    pub final_iters: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long, default_value = "8..15")]
    pub j_range: JRange,
    #[arg(long, default_value_t = 3.0)]
    pub m: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for table.txt and table.csv (or real.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
    /// Print the run configuration and exit.
    #[arg(long)]
    pub dry_run: bool,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("npn: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::SelectBasis(a) => cmd_select(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Replicate(a) => cmd_replicate(&a),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.manifest).map_err(|e| Error::io(&a.manifest, e))?;
    let scenario = SimScenario::parse_manifest(&text)?;
    if a.rep >= scenario.replications {
        return Err(Error::Usage(format!(
            "rep {} out of range for {} replications",
            a.rep, scenario.replications
        )));
    }
    let params = scenario_params(&scenario)?;
    let sim = gen_dataset(&scenario, &params, a.rep)?;
    create_dir(&a.out)?;
    csvio::write_dataset(a.out.join("train.csv"), &sim.train)?;
    csvio::write_dataset(a.out.join("test.csv"), &sim.test)?;
    write(&a.out.join("params.txt"), &params.to_text(scenario.seed))?;
    let (n0, n1, missing) = sim.train.label_counts();
    println!(
        "wrote {} training rows ({} labeled, {missing} unlabeled) and {} test rows to {}",
        sim.train.n_rows(),
        n0 + n1,
        sim.test.n_rows(),
        a.out.display()
    );
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let mut cfg = a.chain.config();
    cfg.final_iterations = a.final_iters;
    cfg.burn_in = a.burn_in;
    if a.trace.is_some() {
        if a.trace_every == 0 {
            return Err(Error::Usage("--trace-every must be positive".into()));
        }
        cfg.trace = Some(TraceConfig { every: a.trace_every, m: cfg.m });
    }
    cfg.validate()?;
    let data = csvio::read_dataset(&a.train)?;
    let outcome = select_and_fit(&data, &cfg)?;
    outcome.model.save(&a.out)?;
    if let Some(path) = &a.trace {
        write(path, &format_trace(&outcome.trace))?;
    }
    print!("{}", outcome.model.selection().to_text());
    Ok(())
}

fn cmd_select(a: &SelectArgs) -> Result<()> {
    let cfg = a.chain.config();
    cfg.validate()?;
    let data = csvio::read_dataset(&a.train)?;
    print!("{}", select_basis(&data, &cfg)?.to_text());
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = FittedModel::load(&a.model)?;
    let data = csvio::read_dataset(&a.data)?;
    if data.n_features() != model.n_features() {
        return Err(Error::Data(format!(
            "{} has {} feature columns, the model expects {}",
            a.data.display(),
            data.n_features(),
            model.n_features()
        )));
    }
    let pred = model.predict(&data.x)?;
    match &a.out {
        Some(path) => csvio::write_predictions(path, &pred),
        None => {
            print!("{}", csvio::predictions_to_csv(&pred));
            Ok(())
        }
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let pred = csvio::read_predictions(&a.preds)?;
    let truth = csvio::read_truth(&a.truth)?;
    if truth.len() != pred.labels.len() {
        return Err(Error::Data(format!(
            "{} predictions but {} true labels",
            pred.labels.len(),
            truth.len()
        )));
    }
    let r = rates(&confusion(&truth, &pred.labels)?)?;
    let rows = vec![(a.preds.display().to_string(), aggregate(&[r]).expect("one run"))];
    print!("{}", if a.csv { rates_csv(&rows) } else { rates_table(&rows) });
    Ok(())
}

fn print_plan(a: &ReplicateArgs, scale: &Scale) {
    let what = match (&a.real, a.table) {
        (Some(path), _) => format!("real data {}", path.display()),
        (None, Some(t)) => format!("table {t}"),
        (None, None) => unreachable!("clap requires --table or --real"),
    };
    println!(
        "{what}: reps {}, pilot {}, final {}, test {}/class, seed {}",
        a.reps.unwrap_or(if a.real.is_some() { RealRecipe::default().reps } else { scale.reps }),
        scale.pilot_iterations,
        scale.final_iterations,
        scale.test_per_class,
        a.seed
    );
}

fn cmd_replicate(a: &ReplicateArgs) -> Result<()> {
    let mut scale = match a.scale {
        ScaleArg::Desk => Scale::DESK,
        ScaleArg::Full => Scale::FULL,
    };
    if let Some(r) = a.reps {
        scale.reps = r;
    }
    if let Some(v) = a.pilot_iters {
        scale.pilot_iterations = v;
    }
    if let Some(v) = a.final_iters {
        scale.final_iterations = v;
    }
    if let Some(v) = a.test_per_class {
        scale.test_per_class = v;
    }
    let fit = FitConfig {
        j_candidates: a.j_range.0.clone(),
        pilot_iterations: scale.pilot_iterations,
        final_iterations: scale.final_iterations,
        m: a.m,
        seed: a.seed,
        parallel: !a.sequential,
        ..FitConfig::default()
    };
    fit.validate()?;
    if a.dry_run {
        print_plan(a, &scale);
        return Ok(());
    }
    if let Some(out) = &a.out {
        create_dir(out)?;
    }

    if let Some(path) = &a.real {
        let data = csvio::read_dataset(path)?;
        let recipe = RealRecipe { reps: a.reps.unwrap_or(RealRecipe::default().reps), seed: a.seed, ..Default::default() };
        let res = run_real(&data, &recipe, &fit)?;
        for f in &res.failures {
            eprintln!("npn: {f}");
        }
        let agg = res
            .aggregate
            .ok_or_else(|| Error::Data(format!("all {} repetitions failed", recipe.reps)))?;
        let rows = vec![(path.display().to_string(), agg)];
        print!("{}", rates_table(&rows));
        if let Some(out) = &a.out {
            write(&out.join("real.csv"), &rates_csv(&rows))?;
        }
        return Ok(());
    }

    let table = a.table.expect("clap requires --table without --real");
    let scenarios = table_scenarios(table, a.dims.as_deref(), a.seed, scale)?;
    print_plan(a, &scale);
    let mut cells = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        log::info!("cell p={} ({},{}) {}", s.p, s.n_star, s.n_l_star, s.transform);
        let cell = run_cell(s, &fit);
        for f in &cell.failures {
            eprintln!("npn: p={} ({},{}): {f}", s.p, s.n_star, s.n_l_star);
        }
        cells.push(cell);
    }
    let text = format_table(&cells);
    print!("{text}");
    if let Some(out) = &a.out {
        write(&out.join("table.txt"), &text)?;
        write(&out.join("table.csv"), &format_table_csv(&cells))?;
    }
    Ok(())
}
