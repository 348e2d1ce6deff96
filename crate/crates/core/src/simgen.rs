//! Simulation-study generators: random Gaussian classes pushed through a
//! monotone per-dimension map, with partial label masking.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, MISSING_LABEL};
use crate::error::{Error, Result};
use crate::numeric::rng::stream_key;
use crate::numeric::{sample_mvn, sample_uniform, std_normal_cdf, std_normal_quantile, RngStream, SpdMatrix};

const PARAMS_STREAM: u64 = 11;
const DATA_STREAM: u64 = 12;
const MIN_EIGENVALUE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Logistic,
    Probit,
    /// Logistic on class-0 rows, probit on class-1 rows.
    Mixed,
}

impl FromStr for TransformKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Self::Logistic),
            "probit" => Ok(Self::Probit),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::Usage(format!("unknown transform {other:?} (logistic, probit, mixed)"))),
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Logistic => "logistic",
            Self::Probit => "probit",
            Self::Mixed => "mixed",
        })
    }
}

/// How training labels are hidden.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Masking {
    /// Exactly `n_l_star` labeled rows per class.
    #[default]
    PerClass,
    /// `2 · n_l_star` labeled rows drawn from all training rows at once.
    Uniform,
}

impl FromStr for Masking {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_class" => Ok(Self::PerClass),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Usage(format!("unknown masking {other:?} (per_class, uniform)"))),
        }
    }
}

impl fmt::Display for Masking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerClass => "per_class",
            Self::Uniform => "uniform",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub p: usize,
    pub n_star: usize,
    pub n_l_star: usize,
    pub transform: TransformKind,
    pub n_test_per_class: usize,
    pub replications: usize,
    pub seed: u64,
    pub masking: Masking,
}

impl SimScenario {
    pub fn new(p: usize, n_star: usize, n_l_star: usize, transform: TransformKind) -> Self {
        Self {
            p,
            n_star,
            n_l_star,
            transform,
            n_test_per_class: 5000,
            replications: 30,
            seed: 0,
            masking: Masking::PerClass,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Usage("p must be at least 1".into()));
        }
        if self.n_star == 0 {
            return Err(Error::Usage("n_star must be at least 1".into()));
        }
        if self.n_l_star > self.n_star {
            return Err(Error::Usage(format!(
                "n_l_star = {} exceeds n_star = {}",
                self.n_l_star, self.n_star
            )));
        }
        Ok(())
    }

    /// Parses a `key = value` manifest. `#` starts a comment.
    pub fn parse_manifest(text: &str) -> Result<Self> {
        let mut p = None;
        let mut n_star = None;
        let mut n_l_star = None;
        let mut transform = None;
        let mut s = SimScenario::new(0, 0, 0, TransformKind::Logistic);
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Usage(format!("manifest line {line_no}: {msg}"));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| -> Result<u64> {
                v.parse::<u64>().map_err(|_| bad(format!("{key}: {v:?} is not a non-negative integer")))
            };
            match key {
                "p" => p = Some(int(value)? as usize),
                "n_star" => n_star = Some(int(value)? as usize),
                "n_l_star" => n_l_star = Some(int(value)? as usize),
                "transform" => transform = Some(value.parse().map_err(|e: Error| bad(e.to_string()))?),
                "n_test_per_class" => s.n_test_per_class = int(value)? as usize,
                "replications" => s.replications = int(value)? as usize,
                "seed" => s.seed = int(value)?,
                "masking" => s.masking = value.parse().map_err(|e: Error| bad(e.to_string()))?,
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        let need = |v: Option<usize>, k: &str| v.ok_or_else(|| Error::Usage(format!("manifest is missing {k}")));
        s.p = need(p, "p")?;
        s.n_star = need(n_star, "n_star")?;
        s.n_l_star = need(n_l_star, "n_l_star")?;
        s.transform = transform.ok_or_else(|| Error::Usage("manifest is missing transform".into()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_manifest(&self) -> String {
        format!(
            "p = {}\nn_star = {}\nn_l_star = {}\ntransform = {}\nn_test_per_class = {}\nreplications = {}\nseed = {}\nmasking = {}\n",
            self.p,
            self.n_star,
            self.n_l_star,
            self.transform,
            self.n_test_per_class,
            self.replications,
            self.seed,
            self.masking
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassParams {
    pub mu: [DVector<f64>; 2],
    pub sigma: [SpdMatrix; 2],
}

impl ClassParams {
    /// Per-dimension centre (μ₀d + μ₁d)/2.
    pub fn centre(&self, d: usize) -> f64 {
        0.5 * (self.mu[0][d] + self.mu[1][d])
    }

    /// Per-dimension scale (√Σ₀dd + √Σ₁dd)/2.
    pub fn scale(&self, d: usize) -> f64 {
        0.5 * (self.sigma[0].matrix()[(d, d)].sqrt() + self.sigma[1].matrix()[(d, d)].sqrt())
    }

    pub fn to_text(&self, seed: u64) -> String {
        let mut s = format!("seed = {seed}\np = {}\n", self.mu[0].len());
        for k in 0..2 {
            let mu: Vec<String> = self.mu[k].iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&format!("mu{k} = {}\n", mu.join(" ")));
            for (r, row) in self.sigma[k].matrix().row_iter().enumerate() {
                let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                s.push_str(&format!("sigma{k}[{r}] = {}\n", vals.join(" ")));
            }
        }
        s
    }
}

/// μ entries iid U[0, 4]; Σ = AᵀA with A entries iid U[−1, 1]. Matrices
/// with smallest eigenvalue below 1e-10 are redrawn.
pub fn gen_class_params(p: usize, rng: &mut RngStream) -> Result<ClassParams> {
    if p == 0 {
        return Err(Error::Usage("p must be at least 1".into()));
    }
    let mut mus = Vec::with_capacity(2);
    for _ in 0..2 {
        let mu = (0..p).map(|_| sample_uniform(0.0, 4.0, rng)).collect::<Result<Vec<_>>>()?;
        mus.push(DVector::from_vec(mu));
    }
    let mut sigmas = Vec::with_capacity(2);
    for k in 0..2 {
        loop {
            let a = DMatrix::from_iterator(
                p,
                p,
                (0..p * p).map(|_| sample_uniform(-1.0, 1.0, rng)).collect::<Result<Vec<_>>>()?,
            );
            let s = a.transpose() * &a;
            let min_eig = SymmetricEigen::new(s.clone()).eigenvalues.min();
            if min_eig < MIN_EIGENVALUE {
                log::warn!("class {k} covariance nearly singular (min eigenvalue {min_eig:e}), redrawing");
                continue;
            }
            if let Ok(spd) = SpdMatrix::from_symmetrized(s) {
                sigmas.push(spd);
                break;
            }
        }
    }
    Ok(ClassParams {
        mu: [mus[0].clone(), mus[1].clone()],
        sigma: [sigmas[0].clone(), sigmas[1].clone()],
    })
}

/// Class parameters for a scenario; depend only on (seed, p), so the mixed
/// and shared-transform scenarios with equal p share them.
pub fn scenario_params(scenario: &SimScenario) -> Result<ClassParams> {
    let mut rng = RngStream::new(scenario.seed, stream_key(&[PARAMS_STREAM, scenario.p as u64]));
    gen_class_params(scenario.p, &mut rng)
}

pub fn logistic(z: f64, centre: f64, scale: f64) -> f64 {
    1.0 / (1.0 + (-(z - centre) / scale).exp())
}

pub fn probit(z: f64, centre: f64, scale: f64) -> f64 {
    std_normal_cdf((z - centre) / scale)
}

/// Observation for latent value `z` in dimension `d` of a class-`class` row.
pub fn apply_transform(z: f64, kind: TransformKind, class: u8, d: usize, params: &ClassParams) -> f64 {
    let (c, s) = (params.centre(d), params.scale(d));
    match (kind, class) {
        (TransformKind::Logistic, _) | (TransformKind::Mixed, 0) => logistic(z, c, s),
        _ => probit(z, c, s),
    }
}

/// Inverse of [`apply_transform`].
pub fn invert_transform(x: f64, kind: TransformKind, class: u8, d: usize, params: &ClassParams) -> Result<f64> {
    let (c, s) = (params.centre(d), params.scale(d));
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("cannot invert {x}, outside (0, 1)")));
    }
    Ok(match (kind, class) {
        (TransformKind::Logistic, _) | (TransformKind::Mixed, 0) => c + s * (x / (1.0 - x)).ln(),
        _ => c + s * std_normal_quantile(x)?,
    })
}

#[derive(Clone, Debug)]
pub struct SimDataset {
    pub train: Dataset,
    /// Full labels of the training rows.
    pub train_truth: Vec<u8>,
    pub test: Dataset,
    /// Latent Gaussian rows behind `train.x`.
    pub train_latent: DMatrix<f64>,
}

fn draw_rows(
    params: &ClassParams,
    kind: TransformKind,
    per_class: usize,
    rng: &mut RngStream,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<u8>)> {
    let p = params.mu[0].len();
    let n = 2 * per_class;
    let mut z = DMatrix::zeros(n, p);
    let mut x = DMatrix::zeros(n, p);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2u8 {
        for r in 0..per_class {
            let i = class as usize * per_class + r;
            let zi = sample_mvn(&params.mu[class as usize], &params.sigma[class as usize], rng)?;
            for d in 0..p {
                z[(i, d)] = zi[d];
                x[(i, d)] = apply_transform(zi[d], kind, class, d, params);
            }
            labels.push(class);
        }
    }
    Ok((z, x, labels))
}

/// Training and test sets for replication `rep` of the scenario.
pub fn gen_dataset(scenario: &SimScenario, params: &ClassParams, rep: usize) -> Result<SimDataset> {
    scenario.validate()?;
    if params.mu[0].len() != scenario.p {
        return Err(Error::Contract("class parameters do not match scenario dimension".into()));
    }
    let key = stream_key(&[
        DATA_STREAM,
        scenario.p as u64,
        scenario.n_star as u64,
        scenario.n_l_star as u64,
        rep as u64,
    ]);
    let mut rng = RngStream::new(scenario.seed, key);
    let (z, x, truth) = draw_rows(params, scenario.transform, scenario.n_star, &mut rng)?;

    let n = truth.len();
    let mut observed = vec![MISSING_LABEL; n];
    match scenario.masking {
        Masking::PerClass => {
            for class in 0..2 {
                let base = class * scenario.n_star;
                for i in sample(&mut rng, scenario.n_star, scenario.n_l_star) {
                    observed[base + i] = truth[base + i];
                }
            }
        }
        Masking::Uniform => {
            for i in sample(&mut rng, n, (2 * scenario.n_l_star).min(n)) {
                observed[i] = truth[i];
            }
        }
    }
    let train = Dataset::new(x, observed, None)?;

    let (_, x_test, test_labels) = draw_rows(params, scenario.transform, scenario.n_test_per_class, &mut rng)?;
    let test = if x_test.nrows() == 0 {
        Dataset { x: x_test, labels: test_labels, feature_names: train.feature_names.clone() }
    } else {
        Dataset::new(x_test, test_labels, None)?
    };
    Ok(SimDataset { train, train_truth: truth, test, train_latent: z })
}
