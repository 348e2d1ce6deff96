//! Binary classification metrics with class 1 as the positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Counts with the positive class switched.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, tn: self.tp, fp: self.fn_, fn_: self.fp }
    }
}

pub fn confusion(truth: &[u8], predicted: &[u8]) -> Result<ConfusionCounts> {
    if truth.len() != predicted.len() {
        return Err(Error::Contract(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (i, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fp += 1,
            (1, 0) => c.fn_ += 1,
            _ => return Err(Error::Contract(format!("row {i}: labels must be 0 or 1, got ({t}, {p})"))),
        }
    }
    Ok(c)
}

/// `fpr` and `fnr` are `None` when their denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub error: f64,
    pub mcc: f64,
}

pub fn rates(c: &ConfusionCounts) -> Result<Rates> {
    let total = c.total();
    if total == 0 {
        return Err(Error::Contract("no rows to evaluate".into()));
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if den == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / den.sqrt() };
    Ok(Rates {
        fpr: ratio(c.fp, c.fp + c.tn),
        fnr: ratio(c.fn_, c.fn_ + c.tp),
        error: (c.fp + c.fn_) as f64 / total as f64,
        mcc: mcc.clamp(-1.0, 1.0),
    })
}

/// Means over replications. Undefined rates are left out of their own mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRates {
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub error: f64,
    pub mcc: f64,
    pub runs: usize,
}

pub fn aggregate(runs: &[Rates]) -> Option<AggregateRates> {
    if runs.is_empty() {
        return None;
    }
    let mean_opt = |it: Vec<f64>| (!it.is_empty()).then(|| it.iter().sum::<f64>() / it.len() as f64);
    let n = runs.len() as f64;
    Some(AggregateRates {
        fpr: mean_opt(runs.iter().filter_map(|r| r.fpr).collect()),
        fnr: mean_opt(runs.iter().filter_map(|r| r.fnr).collect()),
        error: runs.iter().map(|r| r.error).sum::<f64>() / n,
        mcc: runs.iter().map(|r| r.mcc).sum::<f64>() / n,
        runs: runs.len(),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into())
}

pub const RATES_CSV_HEADER: &str = "name,runs,fpr,fnr,error,mcc";

/// One CSV line per named row.
pub fn rates_csv(rows: &[(String, AggregateRates)]) -> String {
    let mut s = format!("{RATES_CSV_HEADER}\n");
    for (name, r) in rows {
        s.push_str(&format!(
            "{name},{},{},{},{:.6},{:.6}\n",
            r.runs,
            cell(r.fpr),
            cell(r.fnr),
            r.error,
            r.mcc
        ));
    }
    s
}

/// Aligned plain-text table of the same rows.
pub fn rates_table(rows: &[(String, AggregateRates)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(4).max(4);
    let mut s = format!(
        "{:<width$}  {:>4}  {:>9}  {:>9}  {:>9}  {:>9}\n",
        "name", "runs", "fpr", "fnr", "error", "mcc"
    );
    for (name, r) in rows {
        s.push_str(&format!(
            "{name:<width$}  {:>4}  {:>9}  {:>9}  {:>9.6}  {:>9.6}\n",
            r.runs,
            cell(r.fpr),
            cell(r.fnr),
            r.error,
            r.mcc
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(tp: usize, tn: usize, fp: usize, fn_: usize) -> ConfusionCounts {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    #[test]
    fn perfect_and_flipped() {
        let t = [0, 1, 1, 0, 1];
        let c = confusion(&t, &t).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let r = rates(&c).unwrap();
        assert_eq!((r.mcc, r.error), (1.0, 0.0));
        let f: Vec<u8> = t.iter().map(|l| 1 - l).collect();
        let c = confusion(&t, &f).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert_eq!(rates(&c).unwrap().mcc, -1.0);
    }

    #[test]
    fn hand_counted_table() {
        let truth = [1, 1, 1, 0, 0, 0, 0, 1, 0, 1];
        let pred = [1, 0, 1, 0, 1, 0, 0, 1, 1, 0];
        assert_eq!(confusion(&truth, &pred).unwrap(), cc(3, 3, 2, 2));
    }

    #[test]
    fn formula_values() {
        let r = rates(&cc(25, 25, 25, 25)).unwrap();
        assert_eq!((r.mcc, r.error), (0.0, 0.5));
        let r = rates(&cc(50, 40, 10, 0)).unwrap();
        assert!((r.mcc - 2000.0 / (60.0f64 * 50.0 * 50.0 * 40.0).sqrt()).abs() < 1e-15);
        assert!((r.mcc - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn zero_denominators() {
        // no negatives at all: fpr undefined, mcc by convention 0
        let r = rates(&cc(5, 0, 0, 3)).unwrap();
        assert_eq!(r.fpr, None);
        assert_eq!(r.mcc, 0.0);
        assert!(rates(&cc(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn swap_invariance() {
        let c = cc(13, 40, 7, 9);
        let (a, b) = (rates(&c).unwrap(), rates(&c.swapped()).unwrap());
        assert!((a.mcc - b.mcc).abs() < 1e-15);
        assert_eq!(a.error, b.error);
        assert_eq!(a.fpr, b.fnr);
    }

    #[test]
    fn aggregate_is_mean_of_rates() {
        let runs = [rates(&cc(5, 0, 0, 3)).unwrap(), rates(&cc(10, 10, 0, 0)).unwrap()];
        let agg = aggregate(&runs).unwrap();
        assert_eq!(agg.fpr, Some(0.0));
        assert!((agg.error - (3.0 / 8.0) / 2.0).abs() < 1e-15);
        assert_eq!(agg.runs, 2);
        let csv = rates_csv(&[("x".into(), agg)]);
        assert_eq!(csv.lines().count(), 2);
        assert!(rates_table(&[("x".into(), agg)]).contains("0.187500"));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(confusion(&[0, 1], &[0]), Err(Error::Contract(_))));
    }
}
