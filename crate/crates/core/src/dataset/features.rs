use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureDescriptor, FeatureFrame, FeatureKind, PriceTable};
use crate::error::{Error, Result};
use crate::matrixkit::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Lags of the price difference, each ≥ 1.
    pub lags: Vec<usize>,
    /// Trailing moving-average windows over prices, each ≥ 1.
    pub windows: Vec<usize>,
    /// Trailing window for pairwise correlation of price differences.
    pub correlation_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            lags: (1..=100).collect(),
            windows: (5..=100).collect(),
            correlation_window: 100,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lags.is_empty() {
            return Err(Error::invalid("lag set is empty"));
        }
        if self.windows.is_empty() {
            return Err(Error::invalid("moving-average window set is empty"));
        }
        if self.lags.contains(&0) {
            return Err(Error::invalid("lags must be at least 1"));
        }
        if self.windows.contains(&0) {
            return Err(Error::invalid("moving-average windows must be at least 1"));
        }
        if self.correlation_window < 2 {
            return Err(Error::invalid("correlation window must be at least 2"));
        }
        Ok(())
    }

    fn sorted(&self) -> (Vec<usize>, Vec<usize>) {
        let mut lags = self.lags.clone();
        lags.sort_unstable();
        lags.dedup();
        let mut windows = self.windows.clone();
        windows.sort_unstable();
        windows.dedup();
        (lags, windows)
    }

    /// Columns contributed by each symbol.
    pub fn per_symbol_count(&self, n_symbols: usize) -> usize {
        let (lags, windows) = self.sorted();
        1 + lags.len() + windows.len() + n_symbols.saturating_sub(1)
    }

    /// Leading price-table rows on which at least one feature is undefined.
    pub fn warmup(&self, n_symbols: usize) -> usize {
        let (lags, windows) = self.sorted();
        let lag = 1 + lags.last().copied().unwrap_or(0);
        let ma = windows.last().copied().unwrap_or(1) - 1;
        let corr = if n_symbols > 1 {
            self.correlation_window
        } else {
            0
        };
        lag.max(ma).max(corr)
    }

    pub fn descriptors(&self, symbols: &[String]) -> Vec<FeatureDescriptor> {
        let (lags, windows) = self.sorted();
        let mut out = Vec::new();
        for sym in symbols {
            let d = |kind, lag_or_window, partner: Option<&String>| FeatureDescriptor {
                kind,
                symbol: sym.clone(),
                lag_or_window,
                partner: partner.cloned(),
            };
            out.push(d(FeatureKind::PriceDiff, 0, None));
            out.extend(lags.iter().map(|&l| d(FeatureKind::LaggedDiff, l, None)));
            out.extend(
                windows
                    .iter()
                    .map(|&w| d(FeatureKind::MovingAverage, w, None)),
            );
            out.extend(symbols.iter().filter(|p| *p != sym).map(|p| {
                d(
                    FeatureKind::PairCorrelation,
                    self.correlation_window,
                    Some(p),
                )
            }));
        }
        out
    }
}

/// Pearson correlation of two equal-length slices; 0 when either is constant.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Builds the feature matrix for rows `warmup..n-1` of the price table.
///
/// Row `r` of the output corresponds to price-table row `t = warmup + r`. Per
/// symbol, in input order, the columns are: `p[t] - p[t-1]`; the lagged
/// differences `d[t-l]` for each lag ascending; trailing moving averages of
/// price ending at `t` for each window ascending; trailing correlations of
/// this symbol's differences with each other symbol's, in input order. The
/// final price row is dropped because it has no next-interval label.
pub fn build_features(pt: &PriceTable, cfg: &FeatureConfig) -> Result<FeatureFrame> {
    cfg.validate()?;
    let (lags, windows) = cfg.sorted();
    let n = pt.n_rows();
    let n_sym = pt.n_symbols();
    let warmup = cfg.warmup(n_sym);
    if n < warmup + 2 {
        return Err(Error::InsufficientRows {
            required: warmup + 2,
            available: n,
        });
    }
    let rows = n - 1 - warmup;
    let cw = cfg.correlation_window;
    let max_window = *windows.last().expect("validated non-empty");

    // diffs[s][t] = p[t] - p[t-1]; index 0 unused.
    let diffs: Vec<Vec<f64>> = (0..n_sym)
        .map(|s| {
            let p = pt.series(s);
            std::iter::once(0.0)
                .chain(p.windows(2).map(|w| w[1] - w[0]))
                .collect()
        })
        .collect();

    let per_symbol = cfg.per_symbol_count(n_sym);
    let blocks: Vec<Vec<f64>> = (0..n_sym)
        .into_par_iter()
        .map(|s| {
            let p = pt.series(s);
            let d = &diffs[s];
            let mut block = Vec::with_capacity(rows * per_symbol);
            for t in warmup..n - 1 {
                block.push(d[t]);
                block.extend(lags.iter().map(|&l| d[t - l]));
                let mut sum = 0.0;
                let mut wi = 0;
                for w in 1..=max_window {
                    sum += p[t + 1 - w];
                    if windows[wi] == w {
                        block.push(sum / w as f64);
                        wi += 1;
                    }
                }
                for (q, dq) in diffs.iter().enumerate() {
                    if q != s {
                        block.push(pearson(&d[t + 1 - cw..=t], &dq[t + 1 - cw..=t]));
                    }
                }
            }
            block
        })
        .collect();

    let m = per_symbol * n_sym;
    let mut x = Matrix::zeros(rows, m);
    for (s, block) in blocks.iter().enumerate() {
        for r in 0..rows {
            x.row_mut(r)[s * per_symbol..(s + 1) * per_symbol]
                .copy_from_slice(&block[r * per_symbol..(r + 1) * per_symbol]);
        }
    }

    let prices = Matrix::from_fn(rows, n_sym, |r, s| pt.series(s)[warmup + r]);
    let next_diffs = Matrix::from_fn(rows, n_sym, |r, s| diffs[s][warmup + r + 1]);
    Ok(FeatureFrame {
        x,
        descriptors: cfg.descriptors(pt.symbols()),
        symbols: pt.symbols().to_vec(),
        timestamps: pt.timestamps()[warmup..n - 1].to_vec(),
        prices,
        next_diffs,
        labels: None,
        norm_stats: None,
        warmup_rows: warmup,
    })
}
