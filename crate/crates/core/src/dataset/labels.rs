use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{check_range, normalize::STD_FLOOR, LabelMatrix, OneHotTargets, PriceTable};
use crate::error::{Error, Result};
use crate::matrixkit::Matrix;

/// Dead-zone half-width applied to z-scored next-interval differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Fixed(f64),
    /// Chosen on the fit rows so the three classes are equally frequent.
    Balanced,
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Fixed(1e-3)
    }
}

/// Per-symbol mean and standard deviation of next-interval differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DiffScaler {
    pub fn fit(diffs: &Matrix, rows: Range<usize>) -> Self {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; diffs.cols()];
        let mut std = vec![0.0; diffs.cols()];
        for s in 0..diffs.cols() {
            let m = rows.clone().map(|r| diffs.get(r, s)).sum::<f64>() / n;
            let v = rows
                .clone()
                .map(|r| (diffs.get(r, s) - m).powi(2))
                .sum::<f64>()
                / n;
            mean[s] = m;
            std[s] = v.sqrt();
        }
        Self { mean, std }
    }

    pub fn z(&self, value: f64, s: usize) -> f64 {
        let c = value - self.mean[s];
        if self.std[s] < STD_FLOOR {
            c
        } else {
            c / self.std[s]
        }
    }
}

/// Direction classes: +1 if z > threshold, -1 if z < -threshold, else 0.
pub fn make_labels(diffs: &Matrix, threshold: f64, scaler: &DiffScaler) -> Result<LabelMatrix> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!(
            "label threshold must be positive, got {threshold}"
        )));
    }
    if scaler.mean.len() != diffs.cols() {
        return Err(Error::Shape {
            op: "make_labels",
            left: diffs.shape(),
            right: (1, scaler.mean.len()),
        });
    }
    let mut data = Vec::with_capacity(diffs.rows() * diffs.cols());
    for r in 0..diffs.rows() {
        for s in 0..diffs.cols() {
            let z = scaler.z(diffs.get(r, s), s);
            data.push(if z > threshold {
                1
            } else if z < -threshold {
                -1
            } else {
                0
            });
        }
    }
    LabelMatrix::new(diffs.rows(), diffs.cols(), data)
}

/// Labels for every price row but the last, with statistics fitted on all of
/// them.
pub fn labels_from_prices(pt: &PriceTable, threshold: f64) -> Result<LabelMatrix> {
    let diffs = pt.next_diffs()?;
    let scaler = DiffScaler::fit(&diffs, 0..diffs.rows());
    make_labels(&diffs, threshold, &scaler)
}

/// Threshold that leaves a third of the pooled |z| values on `rows` inside
/// the dead zone.
pub fn balanced_threshold(diffs: &Matrix, scaler: &DiffScaler, rows: Range<usize>) -> Result<f64> {
    check_range(&rows, diffs.rows())?;
    let mut abs: Vec<f64> = rows
        .flat_map(|r| (0..diffs.cols()).map(move |s| (r, s)))
        .map(|(r, s)| scaler.z(diffs.get(r, s), s).abs())
        .collect();
    abs.sort_by(f64::total_cmp);
    let q = abs[abs.len() / 3];
    Ok(if q > 0.0 { q } else { f64::MIN_POSITIVE })
}

/// One-hot encodes `rows` of `labels`.
pub fn encode_one_hot(labels: &LabelMatrix, rows: Range<usize>) -> Result<OneHotTargets> {
    check_range(&rows, labels.rows())?;
    let s = labels.n_symbols();
    let mut y = Matrix::zeros(rows.len(), 3 * s);
    for (i, r) in rows.enumerate() {
        for (sym, &l) in labels.row(r).iter().enumerate() {
            if !(-1..=1).contains(&l) {
                return Err(Error::invalid(format!("label {l} outside {{-1, 0, 1}}")));
            }
            y.set(i, 3 * sym + (l + 1) as usize, 1.0);
        }
    }
    Ok(OneHotTargets { y, n_symbols: s })
}

/// Block argmax of one-hot (or probability) rows back to classes.
pub fn decode_one_hot(targets: &OneHotTargets) -> LabelMatrix {
    let s = targets.n_symbols;
    let mut data = Vec::with_capacity(targets.y.rows() * s);
    for r in 0..targets.y.rows() {
        let row = targets.y.row(r);
        for sym in 0..s {
            let b = &row[3 * sym..3 * sym + 3];
            let k = (0..3).fold(0, |best, k| if b[k] > b[best] { k } else { best });
            data.push(k as i8 - 1);
        }
    }
    LabelMatrix::new(targets.y.rows(), s, data).expect("decoded labels are in range")
}
