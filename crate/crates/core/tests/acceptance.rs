//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use npn_core::classifier::{select_and_fit, FitConfig, FittedModel, PreprocessMap};
use npn_core::gibbs::{ChainConfig, ChainData, Sampler};
use npn_core::harness::{run_cell, Scale};
use npn_core::metrics::{confusion, rates, ConfusionCounts, Rates};
use npn_core::numeric::{sample_wishart, RngStream, SpdMatrix};
use npn_core::prior::{PriorConfig, ReducedPrior};
use npn_core::simgen::{SimScenario, TransformKind};
use npn_core::splines::SplineBasis;
use npn_core::tmvn::TruncatedNormal;

use common::*;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn priors(basis: &SplineBasis, p: usize) -> Vec<ReducedPrior> {
    vec![ReducedPrior::build(basis, &PriorConfig::default()).unwrap(); p]
}

fn mapped_sim(p: usize, kind: TransformKind, seed: u64) -> (DMatrix<f64>, Vec<u8>) {
    let train = sim_train(p, 50, 10, kind, seed, 0);
    let map = PreprocessMap::fit(&train.x, None).unwrap();
    (map.apply(&train.x).unwrap(), train.labels)
}

fn splines_and_constraints() -> Outcome {
    let mut worst: f64 = 0.0;
    for j in 5..=15 {
        let b = SplineBasis::new(j).unwrap();
        for g in 0..1000 {
            let v = b.eval_basis(g as f64 / 999.0).unwrap();
            worst = worst.max((v.sum() - 1.0).abs());
        }
    }
    check(worst < 1e-12, format!("partition of unity off by {worst:e}"))?;

    let basis = SplineBasis::new(8).unwrap();
    let (mapped, labels) = mapped_sim(2, TransformKind::Logistic, 3);
    let config = ChainConfig { iterations: 200, seed: 11, ..ChainConfig::default() };
    let mut s = Sampler::new(ChainData { mapped: &mapped, labels_obs: &labels }, &basis, priors(&basis, 2), config)
        .map_err(|e| e.to_string())?;
    let (mut loc, mut scale): (f64, f64) = (0.0, 0.0);
    for it in 0..200 {
        s.iterate().map_err(|e| e.to_string())?;
        for d in 0..2 {
            let theta = s.priors()[d].reconstruct(&s.state().theta_bar[d]);
            let f = |x: f64| basis.eval_function(&theta, x).unwrap();
            loc = loc.max(f(0.5).abs());
            scale = scale.max((f(0.75) - f(0.25) - 1.0).abs());
            check(
                (1..8).all(|j| theta[j] > theta[j - 1]),
                format!("iteration {it}, dimension {d}: coefficients not increasing"),
            )?;
        }
    }
    check(loc < 1e-8 && scale < 1e-8, format!("constraint residuals {loc:e}, {scale:e}"))?;
    Ok(format!("unity dev {worst:.1e}; 200 draws: |f(1/2)| <= {loc:.1e}, scale dev <= {scale:.1e}"))
}

struct TnCase {
    mean: Vec<f64>,
    cov: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    start: Vec<f64>,
}

fn tmvn_cases() -> Vec<TnCase> {
    vec![
        // interval in one dimension
        TnCase { mean: vec![0.3], cov: vec![1.0], f: vec![1.0, -1.0], g: vec![0.5, 1.5], start: vec![0.0] },
        // upper tail
        TnCase { mean: vec![0.0], cov: vec![1.0], f: vec![1.0], g: vec![-1.5], start: vec![2.0] },
        // correlated pair in a wedge
        TnCase {
            mean: vec![0.5, -0.2],
            cov: vec![1.0, 0.6, 0.6, 2.0],
            f: vec![1.0, 0.0, -1.0, 1.0, 0.0, -1.0],
            g: vec![0.0, 0.5, 2.0],
            start: vec![0.5, 0.5],
        },
        // ordered triple with a cap, as in monotone coefficients
        TnCase {
            mean: vec![0.0, 0.2, 0.1],
            cov: vec![1.0, 0.3, -0.2, 0.3, 0.8, 0.1, -0.2, 0.1, 1.5],
            f: vec![-1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0],
            g: vec![0.0, 0.0, 2.0, 1.0],
            start: vec![-0.5, 0.0, 0.5],
        },
    ]
}

fn tmvn_oracle() -> Outcome {
    let started = Instant::now();
    let (kept, thin, oracle_n) = (10_000, 5, 40_000);
    let mut worst: f64 = 0.0;
    for (c, case) in tmvn_cases().into_iter().enumerate() {
        let k = case.mean.len();
        let m = case.g.len();
        let mean = DVector::from_vec(case.mean);
        let cov = DMatrix::from_row_slice(k, k, &case.cov);
        let f = DMatrix::from_row_slice(m, k, &case.f);
        let g = DVector::from_vec(case.g);
        let spd = SpdMatrix::new(cov.clone()).unwrap();
        let mut tn = TruncatedNormal::new(mean.clone(), &spd, f.clone(), g.clone(), DVector::from_vec(case.start))
            .map_err(|e| e.to_string())?;
        let mut rng = RngStream::new(1, c as u64);
        let mut gibbs: Vec<DVector<f64>> = Vec::with_capacity(kept);
        for _ in 0..500 {
            tn.sweep(&mut rng);
        }
        for _ in 0..kept {
            for _ in 0..thin {
                tn.sweep(&mut rng);
            }
            gibbs.push(tn.current().clone());
        }
        let mut orng = RngStream::new(2, c as u64);
        let mut oracle = Vec::with_capacity(oracle_n);
        while oracle.len() < oracle_n {
            let x = mvn(&mean, &cov, &mut orng);
            if (&f * &x + &g).iter().all(|&s| s > 0.0) {
                oracle.push(x);
            }
        }
        for j in 0..k {
            let gx: Vec<f64> = gibbs.iter().map(|x| x[j]).collect();
            let ox: Vec<f64> = oracle.iter().map(|x| x[j]).collect();
            let (gm, gse) = batch_mean_se(&gx, 50);
            let (om, ose) = iid_mean_se(&ox);
            let z = (gm - om).abs() / (gse * gse + ose * ose).sqrt();
            worst = worst.max(z);
            check(z < 3.0, format!("case {c}, coordinate {j}: mean z = {z:.2}"))?;
            let gsq: Vec<f64> = gx.iter().map(|x| (x - gm).powi(2)).collect();
            let osq: Vec<f64> = ox.iter().map(|x| (x - om).powi(2)).collect();
            let (gv, gvse) = batch_mean_se(&gsq, 50);
            let (ov, ovse) = iid_mean_se(&osq);
            let z = (gv - ov).abs() / (gvse * gvse + ovse * ovse).sqrt();
            worst = worst.max(z);
            check(z < 3.0, format!("case {c}, coordinate {j}: variance z = {z:.2}"))?;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 30.0, format!("took {secs:.1} s"))?;
    Ok(format!("4 instances, worst |z| = {worst:.2}, {secs:.1} s"))
}

fn full_conditional_oracle() -> Outcome {
    let basis = SplineBasis::new(6).unwrap();
    let train = sim_train(2, 10, 3, TransformKind::Logistic, 4, 0);
    let map = PreprocessMap::fit(&train.x, None).unwrap();
    let mapped = map.apply(&train.x).unwrap();
    check(mapped.nrows() == 20, "expected 20 rows")?;
    let config = ChainConfig { iterations: 10, seed: 2, ..ChainConfig::default() };
    let mut s = Sampler::new(ChainData { mapped: &mapped, labels_obs: &train.labels }, &basis, priors(&basis, 2), config)
        .map_err(|e| e.to_string())?;
    for _ in 0..5 {
        s.iterate().map_err(|e| e.to_string())?;
    }
    let st = s.state().clone();
    let cov: Vec<DMatrix<f64>> = st.sigma.iter().map(|m| m.matrix().clone()).collect();
    let knots = basis.knots().to_vec();
    let mut worst: f64 = 0.0;
    for d in 0..2 {
        let prior = &s.priors()[d];
        let (lambda, eta) = s.theta_full_conditional(d).map_err(|e| e.to_string())?;
        let claimed = |tb: &DVector<f64>| -0.5 * (tb.transpose() * lambda.matrix() * tb)[(0, 0)] + tb.dot(&eta);
        // joint log posterior as a function of θ̄_d, everything else fixed
        let prior_inv = prior.gamma_bar().matrix().clone().try_inverse().unwrap();
        let joint = |tb: &DVector<f64>| {
            let theta = prior.reconstruct(tb);
            let r = tb - prior.xi_bar();
            let mut lp = -0.5 * (r.transpose() * &prior_inv * &r)[(0, 0)];
            for i in 0..20 {
                let mut y = st.y_row(i);
                let b = cox_de_boor(&knots, 4, mapped[(i, d)]);
                y[d] = b.iter().zip(theta.iter()).map(|(b, t)| b * t).sum();
                let c = st.labels[i] as usize;
                lp += gauss_log_density(&y, &st.mu[c], &cov[c]);
            }
            lp
        };
        let base = st.theta_bar[d].clone();
        let mut rng = RngStream::new(9, d as u64);
        let dir = DVector::from_fn(base.len(), |_, _| normal(&mut rng));
        let (c0, j0) = (claimed(&base), joint(&base));
        for g in 0..50 {
            let t = -1.0 + 2.0 * g as f64 / 49.0;
            let tb = &base + &dir * t;
            let diff = ((claimed(&tb) - c0) - (joint(&tb) - j0)).abs();
            worst = worst.max(diff);
        }
    }
    check(worst < 1e-6, format!("max log-difference discrepancy {worst:e}"))?;
    Ok(format!("p=2, J=6, n=20, 50 points per dimension: max discrepancy {worst:.1e}"))
}

fn wishart_mean() -> Outcome {
    let scale = DMatrix::from_row_slice(3, 3, &[2.0, 0.8, -0.6, 0.8, 1.0, 0.5, -0.6, 0.5, 1.5]);
    let df = 7.0;
    let spd = SpdMatrix::new(scale.clone()).unwrap();
    let mut rng = RngStream::new(4, 0);
    let mut sum = DMatrix::zeros(3, 3);
    for _ in 0..10_000 {
        sum += sample_wishart(df, &spd, &mut rng).map_err(|e| e.to_string())?.matrix();
    }
    let emp = sum / 10_000.0;
    let target = &scale * df;
    let worst = (0..9).map(|k| ((emp[k] - target[k]) / target[k]).abs()).fold(0.0, f64::max);
    check(worst < 0.05, format!("worst relative entry error {worst:.4}"))?;

    // precision draws of the class update at a frozen state: mean (n_k − 1)·S⁻¹
    let n = 30;
    let basis = SplineBasis::new(8).unwrap();
    let mut drng = RngStream::new(5, 1);
    let mapped = DMatrix::from_fn(2 * n, 3, |_, _| 0.05 + 0.9 * drng.open01());
    let labels: Vec<u8> = (0..2 * n).map(|i| (i >= n) as u8).collect();
    let config = ChainConfig { iterations: 10, seed: 6, update_theta: false, ..ChainConfig::default() };
    let mut s = Sampler::new(ChainData { mapped: &mapped, labels_obs: &labels }, &basis, priors(&basis, 3), config)
        .map_err(|e| e.to_string())?;
    let y0: Vec<DVector<f64>> = (0..n).map(|i| s.state().y_row(i)).collect();
    let ybar = y0.iter().fold(DVector::zeros(3), |a, r| a + r) / n as f64;
    let scatter = y0.iter().fold(DMatrix::zeros(3, 3), |a, r| a + (r - &ybar) * (r - &ybar).transpose());
    let expect = scatter.try_inverse().unwrap() * (n - 1) as f64;
    let mut acc = DMatrix::zeros(3, 3);
    let draws = 10_000;
    for _ in 0..draws {
        s.step_params().map_err(|e| e.to_string())?;
        acc += s.state().sigma[0].inverse();
    }
    let emp = acc / draws as f64;
    // off-diagonal entries can be near zero, so errors are measured against
    // sqrt(E_ii E_jj)
    let mut worst_step: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let denom = (expect[(i, i)] * expect[(j, j)]).sqrt();
            worst_step = worst_step.max((emp[(i, j)] - expect[(i, j)]).abs() / denom);
        }
    }
    check(worst_step < 0.05, format!("class update precision mean off by {worst_step:.4}"))?;
    Ok(format!("direct draws: worst entry {worst:.4}; class update: worst scaled entry {worst_step:.4}"))
}

fn conjugate_recovery() -> Outcome {
    let basis = SplineBasis::new(8).unwrap();
    let prior = ReducedPrior::build(&basis, &PriorConfig::default()).unwrap();
    // Greville abscissae reproduce the identity; f(u) = 2(u − 1/2) meets both constraints
    let knots = basis.knots();
    let theta = DVector::from_fn(8, |j, _| 2.0 * ((knots[j + 1] + knots[j + 2] + knots[j + 3]) / 3.0 - 0.5));
    check(prior.constraints().residual(&theta).norm() < 1e-12, "linear coefficients violate constraints")?;
    let theta_bar = prior.reduce_theta(&theta);

    let mu = [DVector::from_vec(vec![-0.2, 0.1, 0.0]), DVector::from_vec(vec![0.15, -0.1, 0.2])];
    let cov = [
        DMatrix::from_row_slice(3, 3, &[0.010, 0.004, 0.0, 0.004, 0.008, -0.002, 0.0, -0.002, 0.012]),
        DMatrix::from_row_slice(3, 3, &[0.009, -0.003, 0.002, -0.003, 0.010, 0.0, 0.002, 0.0, 0.007]),
    ];
    let mut covered = 0;
    let mut worst: f64 = 0.0;
    for run in 0..20u64 {
        let mut rng = RngStream::new(100 + run, 0);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2u8 {
            while rows.len() < 200 * (class as usize + 1) {
                let y = mvn(&mu[class as usize], &cov[class as usize], &mut rng);
                if y.iter().all(|v| v.abs() < 0.999) {
                    rows.push(y.map(|v| 0.5 + 0.5 * v));
                    labels.push(class);
                }
            }
        }
        let mapped = DMatrix::from_fn(400, 3, |i, d| rows[i][d]);
        let config = ChainConfig {
            iterations: 2000,
            burn_in: Some(500),
            seed: run,
            update_theta: false,
            ..ChainConfig::default()
        };
        let mut s = Sampler::with_theta(
            ChainData { mapped: &mapped, labels_obs: &labels },
            &basis,
            vec![prior.clone(); 3],
            vec![theta_bar.clone(); 3],
            config,
        )
        .map_err(|e| e.to_string())?;
        // the fixed transformation returns the latent rows exactly
        let back = (0..400).all(|i| (0..3).all(|d| (s.state().y[(i, d)] - (2.0 * rows[i][d] - 1.0)).abs() < 1e-12));
        check(back, "fixed transformation does not reproduce the latent rows")?;
        s.set_labels(labels.clone()).map_err(|e| e.to_string())?;
        let (summary, _) = s.run().map_err(|e| e.to_string())?;
        let mut ok = true;
        for k in 0..2 {
            for d in 0..3 {
                let z = (summary.mu[k][d] - mu[k][d]).abs() / summary.mu_var[k][d].sqrt();
                worst = worst.max(z);
                ok &= z < 3.0;
            }
        }
        covered += ok as usize;
    }
    check(covered >= 19, format!("{covered}/20 runs within 3 posterior SDs"))?;
    Ok(format!("{covered}/20 runs within 3 posterior SDs (worst |z| {worst:.2})"))
}

fn desk_cell(kind: TransformKind, bound: f64) -> Outcome {
    let started = Instant::now();
    let scale = Scale::DESK;
    let mut scenario = SimScenario::new(5, 50, 10, kind);
    scenario.replications = scale.reps;
    scenario.n_test_per_class = scale.test_per_class;
    let fit = FitConfig {
        pilot_iterations: scale.pilot_iterations,
        final_iterations: scale.final_iterations,
        ..FitConfig::default()
    };
    let cell = run_cell(&scenario, &fit);
    let secs = started.elapsed().as_secs_f64();
    check(cell.failures.is_empty(), format!("failed replications: {:?}", cell.failures))?;
    let err = cell.mean_error().ok_or("no successful replications")?;
    let per_rep: Vec<String> = cell.runs.iter().flatten().map(|r| format!("{:.3}", r.error)).collect();
    let summary = format!(
        "{kind} p=5 (50,10): mean error {:.2}% (reps {}), {secs:.0} s",
        100.0 * err,
        per_rep.join(" ")
    );
    check(err <= bound, format!("{summary}; bound {:.0}%", 100.0 * bound))?;
    check(secs <= 600.0, format!("{summary}; over 10 min"))?;
    Ok(summary)
}

fn fitted_sim_model() -> Result<(FittedModel, DMatrix<f64>), String> {
    let train = sim_train(5, 50, 10, TransformKind::Logistic, 8, 0);
    let cfg = FitConfig { pilot_iterations: 300, final_iterations: 1500, seed: 3, ..FitConfig::default() };
    let model = select_and_fit(&train, &cfg).map_err(|e| e.to_string())?.model;
    Ok((model, train.x))
}

fn selection_determinism() -> Outcome {
    let train = sim_train(5, 50, 10, TransformKind::Logistic, 8, 0);
    let cfg = FitConfig { pilot_iterations: 300, final_iterations: 1500, seed: 3, ..FitConfig::default() };
    let a = select_and_fit(&train, &cfg).map_err(|e| e.to_string())?.model;
    let b = select_and_fit(&train, &cfg).map_err(|e| e.to_string())?.model;
    let seq = select_and_fit(&train, &FitConfig { parallel: false, ..cfg.clone() })
        .map_err(|e| e.to_string())?
        .model;
    check(a.n_basis() == b.n_basis(), "selected J differs between runs")?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (pa, pb) = (dir.path().join("a.json"), dir.path().join("b.json"));
    a.save(&pa).map_err(|e| e.to_string())?;
    b.save(&pb).map_err(|e| e.to_string())?;
    let (ba, bb) = (std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    check(ba == bb, "model files differ")?;
    check(seq.to_json().as_bytes() == ba.as_slice(), "sequential run differs from parallel run")?;
    let counts: Vec<usize> = [1.5, 3.0, 10.0, 100.0]
        .iter()
        .map(|&m| a.boundary_count(&train.x, m).unwrap())
        .collect();
    check(counts.windows(2).all(|w| w[0] <= w[1]), format!("boundary counts {counts:?} not nondecreasing"))?;
    Ok(format!("J = {}, {} identical bytes, boundary counts {counts:?}", a.n_basis(), ba.len()))
}

fn decision_rule() -> Outcome {
    let (model, train_x) = fitted_sim_model()?;
    let mut rng = RngStream::new(12, 0);
    let p = train_x.ncols();
    // random rows spanning and exceeding the training range
    let lo: Vec<f64> = (0..p).map(|d| train_x.column(d).min()).collect();
    let hi: Vec<f64> = (0..p).map(|d| train_x.column(d).max()).collect();
    let x = DMatrix::from_fn(1000, p, |_, d| {
        let w = hi[d] - lo[d];
        lo[d] - 0.2 * w + 1.4 * w * rng.open01()
    });
    let pred = model.predict(&x).map_err(|e| e.to_string())?;
    let brute = brute_force_predict(&model, &x);
    let mismatches = pred.labels.iter().zip(&brute).filter(|(a, b)| a != b).count();
    check(mismatches == 0, format!("{mismatches} of 1000 rows disagree"))?;

    // identical classes with equal weights tie everywhere; ties go to class 1
    let mut parts = model.parts().clone();
    parts.mu[1] = parts.mu[0].clone();
    parts.sigma[1] = parts.sigma[0].clone();
    parts.lambda0 = 0.5;
    let tie = FittedModel::from_parts(parts).map_err(|e| e.to_string())?;
    let tie_pred = tie.predict(&x).map_err(|e| e.to_string())?;
    check(tie_pred.labels.iter().all(|&l| l == 1), "tie not resolved to class 1")?;
    check(brute_force_predict(&tie, &x) == tie_pred.labels, "brute force disagrees on ties")?;
    let ones = pred.labels.iter().filter(|&&l| l == 1).count();
    Ok(format!("1000 random rows agree ({ones} class 1); 1000 tied rows all class 1"))
}

fn metrics_tables() -> Outcome {
    let cc = |tp, tn, fp, fn_| ConfusionCounts { tp, tn, fp, fn_ };
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let same_opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => close(x, y),
        (None, None) => true,
        _ => false,
    };
    // (table, fpr, fnr, error, mcc), values worked by hand
    let cases: [(ConfusionCounts, Option<f64>, Option<f64>, f64, f64); 5] = [
        // mcc = (40·45 − 5·10)/√(45·50·50·55) = 1750/√6187500
        (cc(40, 45, 5, 10), Some(5.0 / 50.0), Some(10.0 / 50.0), 0.15, 1750.0 / 6_187_500f64.sqrt()),
        (cc(10, 10, 0, 0), Some(0.0), Some(0.0), 0.0, 1.0),
        (cc(0, 0, 7, 3), Some(1.0), Some(1.0), 1.0, -1.0),
        // no actual negatives: fpr undefined, mcc 0 by convention
        (cc(6, 0, 0, 4), None, Some(0.4), 0.4, 0.0),
        // nothing predicted positive: mcc 0 by convention
        (cc(0, 8, 0, 2), Some(0.0), Some(1.0), 0.2, 0.0),
    ];
    for (i, (c, fpr, fnr, err, mcc)) in cases.iter().enumerate() {
        let r: Rates = rates(c).map_err(|e| e.to_string())?;
        check(
            same_opt(r.fpr, *fpr) && same_opt(r.fnr, *fnr) && close(r.error, *err) && close(r.mcc, *mcc),
            format!("table {i}: got {r:?}"),
        )?;
        let s = rates(&c.swapped()).map_err(|e| e.to_string())?;
        check(close(s.mcc, r.mcc) && close(s.error, r.error), format!("table {i}: swap changes mcc or error"))?;
    }
    let truth = [1, 0, 1, 1, 0, 0, 1, 0];
    let pred = [1, 0, 0, 1, 1, 0, 1, 0];
    check(confusion(&truth, &pred).unwrap() == cc(3, 3, 1, 1), "confusion counts")?;
    Ok("5 tables match, swap invariant".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("splines and constraints", splines_and_constraints),
        ("truncated normal vs rejection", tmvn_oracle),
        ("full conditional vs joint", full_conditional_oracle),
        ("wishart mean", wishart_mean),
        ("conjugate recovery", conjugate_recovery),
        ("desk table 1 cell", || desk_cell(TransformKind::Logistic, 0.10)),
        ("desk mixed cell", || desk_cell(TransformKind::Mixed, 0.12)),
        ("selection determinism", selection_determinism),
        ("decision rule", decision_rule),
        ("metrics", metrics_tables),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {:>2} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("{label}: PASS [{secs:.1} s] {msg}"),
            Err(msg) => {
                failed += 1;
                println!("{label}: FAIL [{secs:.1} s] {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
