use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{check_range, FeatureFrame};
use crate::error::Result;

/// Columns whose fitted standard deviation falls below this are centered
/// but not scaled.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population standard deviation over the fit rows.
    pub std: f64,
    /// False when the column was only centered.
    pub scaled: bool,
}

/// Z-scores every column with statistics from `fit_rows`, applied to all
/// rows.
pub fn normalize(frame: &FeatureFrame, fit_rows: Range<usize>) -> Result<FeatureFrame> {
    check_range(&fit_rows, frame.n_rows())?;
    let x = &frame.x;
    let m = x.cols();
    let n = fit_rows.len() as f64;

    let mut mean = vec![0.0; m];
    for r in fit_rows.clone() {
        for (acc, v) in mean.iter_mut().zip(x.row(r)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m];
    for r in fit_rows {
        for ((acc, v), mu) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let stats: Vec<ColumnStats> = mean
        .iter()
        .zip(&var)
        .map(|(&mean, &v)| {
            let std = (v / n).sqrt();
            ColumnStats {
                mean,
                std,
                scaled: std >= STD_FLOOR,
            }
        })
        .collect();

    let mut out = frame.clone();
    for r in 0..out.x.rows() {
        for (v, st) in out.x.row_mut(r).iter_mut().zip(&stats) {
            *v -= st.mean;
            if st.scaled {
                *v /= st.std;
            }
        }
    }
    out.norm_stats = Some(stats);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_features, gen_synthetic, FeatureConfig, SyntheticSpec};
    use crate::matrixkit::Matrix;
    use crate::rng::Mt64;

    fn frame_with(x: Matrix) -> FeatureFrame {
        let pt = gen_synthetic(&SyntheticSpec::default(), 3).unwrap();
        let cfg = FeatureConfig {
            lags: vec![1],
            windows: vec![2],
            correlation_window: 3,
        };
        let mut f = build_features(&pt, &cfg).unwrap();
        f.x = x;
        f
    }

    fn col_stats(x: &Matrix, c: usize, rows: Range<usize>) -> (f64, f64) {
        let n = rows.len() as f64;
        let m = rows.clone().map(|r| x.get(r, c)).sum::<f64>() / n;
        let v = rows.map(|r| (x.get(r, c) - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    #[test]
    fn fit_rows_become_standard() {
        let mut rng = Mt64::new(2);
        let x = Matrix::from_fn(150, 4, |_, j| rng.gaussian(j as f64 * 10.0, 1.0 + j as f64));
        let f = normalize(&frame_with(x), 0..100).unwrap();
        for c in 0..4 {
            let (m, s) = col_stats(&f.x, c, 0..100);
            assert!(m.abs() < 1e-9);
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn applies_fit_statistics_forward() {
        let mut rng = Mt64::new(5);
        let x = Matrix::from_fn(150, 2, |_, _| rng.gaussian(3.0, 2.0));
        let f = normalize(&frame_with(x.clone()), 0..100).unwrap();
        let st = f.norm_stats.as_ref().unwrap();
        let (m, s) = col_stats(&x, 1, 0..100);
        assert_eq!(st[1].mean, m);
        assert!((f.x.get(100, 1) - (x.get(100, 1) - m) / s).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_centered_and_flagged() {
        let x = Matrix::from_fn(120, 2, |i, j| if j == 0 { 5.0 } else { i as f64 });
        let f = normalize(&frame_with(x), 0..100).unwrap();
        assert!(f.x.column(0).iter().all(|&v| v == 0.0));
        assert!(!f.norm_stats.as_ref().unwrap()[0].scaled);
        assert!(f.norm_stats.as_ref().unwrap()[1].scaled);
    }

    #[test]
    fn standard_column_barely_moves_and_reapplication_is_idempotent() {
        let mut rng = Mt64::new(8);
        let x = Matrix::from_fn(200, 3, |_, _| rng.gaussian(0.0, 1.0));
        let once = normalize(&frame_with(x), 0..200).unwrap();
        let twice = normalize(&once, 0..200).unwrap();
        for (a, b) in once.x.data().iter().zip(twice.x.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_range() {
        let f = frame_with(Matrix::zeros(10, 2));
        assert!(normalize(&f, 5..5).is_err());
        assert!(normalize(&f, 0..11).is_err());
    }
}
