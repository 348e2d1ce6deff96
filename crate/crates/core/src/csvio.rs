//! CSV reading and writing for datasets and predictions.
//!
//! Dataset files have a header row, one floating-point column per feature and
//! an optional `label` column holding `0`, `1` or `?` (missing). Floats are
//! written in shortest round-trip form so a write/read cycle is exact.

use std::path::Path;

use nalgebra::DMatrix;

use crate::classifier::Prediction;
use crate::dataset::{Dataset, MISSING_LABEL};
use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "label";
pub const MISSING_TOKEN: &str = "?";
pub const PREDICTIONS_HEADER: [&str; 3] = ["row_id", "label", "p_class1"];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: malformed CSV: {other:?}", path.display())),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn parse_label(s: &str) -> Option<u8> {
    match s {
        "0" => Some(0),
        "1" => Some(1),
        MISSING_TOKEN => Some(MISSING_LABEL),
        _ => None,
    }
}

/// Reads a dataset. Without a `label` column every row is marked missing.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let label_idx = headers.iter().position(|h| h == LABEL_COLUMN);
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|&i| Some(i) != label_idx).collect();
    if feature_idx.is_empty() {
        return Err(Error::Data(format!("{}: no feature columns", path.display())));
    }
    let names: Vec<String> = feature_idx.iter().map(|&i| headers[i].to_string()).collect();
    let p = feature_idx.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        // data lines start at line 2
        let line = r + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != headers.len() {
            return Err(Error::Data(format!(
                "{} line {line}: {} fields, header has {}",
                path.display(),
                rec.len(),
                headers.len()
            )));
        }
        for (k, &i) in feature_idx.iter().enumerate() {
            let v: f64 = rec[i].parse().map_err(|_| {
                Error::Data(format!(
                    "{} line {line}, column {}: {:?} is not a number",
                    path.display(),
                    names[k],
                    &rec[i]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{} line {line}, column {}: value must be finite",
                    path.display(),
                    names[k]
                )));
            }
            values.push(v);
        }
        labels.push(match label_idx {
            Some(i) => parse_label(&rec[i]).ok_or_else(|| {
                Error::Data(format!(
                    "{} line {line}, column label: {:?} is not 0, 1 or ?",
                    path.display(),
                    &rec[i]
                ))
            })?,
            None => MISSING_LABEL,
        });
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let x = DMatrix::from_row_slice(labels.len(), p, &values);
    Dataset::new(x, labels, Some(names))
}

pub fn dataset_to_csv(data: &Dataset) -> String {
    let mut s = data.feature_names.join(",");
    s.push_str(",label\n");
    for i in 0..data.n_rows() {
        for d in 0..data.n_features() {
            s.push_str(&format_f64(data.x[(i, d)]));
            s.push(',');
        }
        s.push_str(match data.labels[i] {
            0 => "0",
            1 => "1",
            _ => MISSING_TOKEN,
        });
        s.push('\n');
    }
    s
}

pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dataset_to_csv(data)).map_err(|e| Error::io(path, e))
}

pub fn predictions_to_csv(pred: &Prediction) -> String {
    let mut s = PREDICTIONS_HEADER.join(",");
    s.push('\n');
    for (i, (l, p)) in pred.labels.iter().zip(&pred.p_class1).enumerate() {
        s.push_str(&format!("{i},{l},{}\n", format_f64(*p)));
    }
    s
}

pub fn write_predictions(path: impl AsRef<Path>, pred: &Prediction) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, predictions_to_csv(pred)).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Prediction> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != PREDICTIONS_HEADER {
        return Err(Error::Data(format!(
            "{}: expected header {}",
            path.display(),
            PREDICTIONS_HEADER.join(",")
        )));
    }
    let mut labels = Vec::new();
    let mut p_class1 = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |what: &str| Error::Data(format!("{} line {line}: bad {what}", path.display()));
        if rec.get(0).and_then(|v| v.parse::<usize>().ok()) != Some(r) {
            return Err(bad("row_id"));
        }
        match rec.get(1) {
            Some("0") => labels.push(0),
            Some("1") => labels.push(1),
            _ => return Err(bad("label")),
        }
        p_class1.push(rec.get(2).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| bad("p_class1"))?);
    }
    Ok(Prediction { labels, p_class1 })
}

/// True labels from the `label` column of a CSV; `?` is rejected.
pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let idx = headers
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .ok_or_else(|| Error::Data(format!("{}: no label column", path.display())))?;
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        match rec.get(idx) {
            Some("0") => out.push(0),
            Some("1") => out.push(1),
            other => {
                return Err(Error::Data(format!(
                    "{} line {}: truth label must be 0 or 1, got {:?}",
                    path.display(),
                    r + 2,
                    other.unwrap_or("")
                )))
            }
        }
    }
    Ok(out)
}
