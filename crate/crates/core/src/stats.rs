// SPDX-License-Identifier: MIT OR Apache-2.0

//! Non-studentized supremum statistics.
//!
//! For a sample of `n` rows split after row `k`, the per-variable statistic is
//!
//! ```text
//! t(k, r) = sqrt(k (n - k) / n) * |mean(rows 1..=k, r) - mean(rows k+1..=n, r)|
//! ```
//!
//! The split statistic is `max_r t(k, r)` and the chart statistic is the max
//! over `3 <= k <= n - 3`. Ties resolve to the smallest `k`, then smallest `r`.
//!
//! Column means come from compensated prefix sums, so a whole chart statistic
//! costs `O(n p)` instead of `O(n^2 p)`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::MatrixView;

/// Each side of a split needs at least this many observations.
pub const MIN_SIDE: usize = 3;

/// Smallest sample on which a chart statistic is defined.
pub const MIN_SAMPLE: usize = 2 * MIN_SIDE;

/// Max over variables of the two-sample statistic at one split point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStatistic {
    /// Size of the pre-change part of the sample.
    pub split_k: usize,
    pub value: f64,
    /// 0-based variable attaining the max.
    pub argmax_variable: usize,
}

/// Chart statistic at one evaluation time together with its maximizing split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    /// Number of observations seen when the statistic was computed.
    pub time_index: usize,
    pub value: f64,
    pub best_split: SplitStatistic,
}

/// Column prefix sums over a block of rows.
///
/// Each column is first shifted by its value in row 0, so constant columns sum
/// to exactly zero. `sums[i * p + r]` then holds the shifted sum of column `r`
/// over rows `0..i`, accumulated with Neumaier compensation.
#[derive(Clone, Debug)]
pub struct PrefixSums {
    sums: Vec<f64>,
    offset: Vec<f64>,
    n: usize,
    p: usize,
}

impl PrefixSums {
    pub fn new(x: MatrixView<'_>) -> Self {
        let (n, p) = (x.n(), x.p());
        let mut sums = vec![0.0; (n + 1) * p];
        let mut acc = vec![0.0; p];
        let mut comp = vec![0.0; p];
        let offset = if n > 0 {
            x.row(0).to_vec()
        } else {
            vec![0.0; p]
        };
        for i in 0..n {
            let row = x.row(i);
            let out = &mut sums[(i + 1) * p..(i + 2) * p];
            for r in 0..p {
                let v = row[r] - offset[r];
                let t = acc[r] + v;
                if acc[r].abs() >= v.abs() {
                    comp[r] += (acc[r] - t) + v;
                } else {
                    comp[r] += (v - t) + acc[r];
                }
                acc[r] = t;
                out[r] = t + comp[r];
            }
        }
        Self { sums, offset, n, p }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    fn at(&self, i: usize) -> &[f64] {
        &self.sums[i * self.p..(i + 1) * self.p]
    }

    /// Mean of column `r` over rows `range` (0-based, half-open, nonempty).
    pub fn mean(&self, range: Range<usize>, r: usize) -> f64 {
        let len = (range.end - range.start) as f64;
        self.offset[r] + (self.at(range.end)[r] - self.at(range.start)[r]) / len
    }

    /// Per-variable statistic `t(k, r)` for the whole block.
    pub fn variable_statistic(&self, k: usize, r: usize) -> f64 {
        let n = self.n;
        let scale = ((k * (n - k)) as f64 / n as f64).sqrt();
        let pre = self.at(k)[r] / k as f64;
        let post = (self.at(n)[r] - self.at(k)[r]) / (n - k) as f64;
        scale * (pre - post).abs()
    }

    /// Max over variables at split `k`; the caller guarantees `k` is admissible.
    pub fn split(&self, k: usize) -> SplitStatistic {
        let n = self.n;
        let scale = ((k * (n - k)) as f64 / n as f64).sqrt();
        let (lo, hi, total) = (self.at(0), self.at(k), self.at(n));
        let (k_f, rest_f) = (k as f64, (n - k) as f64);
        let mut best = SplitStatistic {
            split_k: k,
            value: f64::NEG_INFINITY,
            argmax_variable: 0,
        };
        for r in 0..self.p {
            let pre = (hi[r] - lo[r]) / k_f;
            let post = (total[r] - hi[r]) / rest_f;
            let v = scale * (pre - post).abs();
            if v > best.value {
                best.value = v;
                best.argmax_variable = r;
            }
        }
        best
    }

    /// Max of [`PrefixSums::split`] over every admissible split.
    pub fn chart(&self) -> SplitStatistic {
        let mut best = self.split(MIN_SIDE);
        for k in MIN_SIDE + 1..=self.n - MIN_SIDE {
            let cand = self.split(k);
            if cand.value > best.value {
                best = cand;
            }
        }
        best
    }
}

fn check_split(n: usize, k: usize) -> Result<()> {
    if n < MIN_SAMPLE || k < MIN_SIDE || k > n - MIN_SIDE {
        return Err(Error::precondition(format!(
            "split k={k} outside admissible range 3..={} for n={n}",
            n.saturating_sub(MIN_SIDE)
        )));
    }
    Ok(())
}

/// Arithmetic mean of every column over rows `range` (0-based, half-open).
pub fn column_means(x: MatrixView<'_>, range: Range<usize>) -> Result<Vec<f64>> {
    if range.start >= range.end || range.end > x.n() {
        return Err(Error::precondition(format!(
            "row range {}..{} must be nonempty and within 0..{}",
            range.start,
            range.end,
            x.n()
        )));
    }
    let block = x.slice_rows(range)?;
    let prefix = PrefixSums::new(block);
    Ok((0..x.p()).map(|r| prefix.mean(0..block.n(), r)).collect())
}

/// Split statistic of the whole sample at pre-sample size `k`.
pub fn split_statistic(x: MatrixView<'_>, k: usize) -> Result<SplitStatistic> {
    check_split(x.n(), k)?;
    Ok(PrefixSums::new(x).split(k))
}

/// Every per-variable statistic `t(k, r)` at split `k`.
pub fn variable_statistics(x: MatrixView<'_>, k: usize) -> Result<Vec<f64>> {
    check_split(x.n(), k)?;
    let prefix = PrefixSums::new(x);
    Ok((0..x.p())
        .map(|r| prefix.variable_statistic(k, r))
        .collect())
}

/// Chart statistic over all admissible splits of the whole sample.
///
/// The returned point is stamped with `time_index = n`.
pub fn full_sample_chart_statistic(x: MatrixView<'_>) -> Result<ChartPoint> {
    if x.n() < MIN_SAMPLE {
        return Err(Error::InsufficientSample {
            needed: MIN_SAMPLE,
            got: x.n(),
        });
    }
    let best = PrefixSums::new(x).chart();
    Ok(ChartPoint {
        time_index: x.n(),
        value: best.value,
        best_split: best,
    })
}

/// Chart statistic of one moving window ending at `time_index`.
pub fn window_chart_statistic(
    window: MatrixView<'_>,
    window_size: usize,
    time_index: usize,
) -> Result<ChartPoint> {
    if window_size < MIN_SAMPLE {
        return Err(Error::InsufficientSample {
            needed: MIN_SAMPLE,
            got: window_size,
        });
    }
    if window.n() != window_size {
        return Err(Error::precondition(format!(
            "window has {} rows, expected {window_size}",
            window.n()
        )));
    }
    if time_index < window_size {
        return Err(Error::precondition(format!(
            "time index {time_index} precedes the end of the first window ({window_size})"
        )));
    }
    let best = PrefixSums::new(window).chart();
    Ok(ChartPoint {
        time_index,
        value: best.value,
        best_split: best,
    })
}

/// Change-point estimate `time_index - window + k*`.
///
/// For a full-sample point pass `window = cp.time_index`, which yields `k*`.
pub fn change_point_estimate(cp: &ChartPoint, window: usize) -> Result<usize> {
    if window > cp.time_index {
        return Err(Error::precondition(format!(
            "window {window} longer than elapsed time {}",
            cp.time_index
        )));
    }
    Ok(cp.time_index - window + cp.best_split.split_k)
}
