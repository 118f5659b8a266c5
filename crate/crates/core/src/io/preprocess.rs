// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cleaning of raw industrial samples before monitoring.
//!
//! 1. Columns constant in the in-control (IC) sample are dropped.
//! 2. IC values outside the Tukey fences `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]` are
//!    replaced by the IC column median.
//! 3. Missing values in both samples are replaced by the IC column median.
//! 4. Both samples are standardized with the IC mean and sample standard
//!    deviation computed after steps 2-3. Columns whose standard deviation is
//!    then zero are dropped too.
//!
//! Quartiles and medians use linear interpolation between order statistics
//! (`h = (m - 1) q`), so fence membership is reproducible.

use serde::{Deserialize, Serialize};

use super::table::RawMatrix;
use crate::error::{Error, Result};
use crate::matrix::ObservationMatrix;

pub const TUKEY_MULTIPLIER: f64 = 1.5;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub original_columns: usize,
    /// Original indices of columns constant in the IC sample.
    pub removed_constant_columns: Vec<usize>,
    /// Original indices of columns left with zero variance after cleaning.
    pub removed_zero_variance_columns: Vec<usize>,
    /// Original indices of the columns kept, in output order.
    pub retained_columns: Vec<usize>,
    /// IC outliers replaced, per original column.
    pub outliers_replaced: Vec<usize>,
    /// Missing IC values imputed, per original column.
    pub missing_imputed_ic: Vec<usize>,
    /// Missing OC values imputed, per original column.
    pub missing_imputed_oc: Vec<usize>,
    /// IC means used for standardization, per retained column.
    pub ic_means: Vec<f64>,
    /// IC standard deviations used for standardization, per retained column.
    pub ic_stds: Vec<f64>,
    /// Cleaned IC values still outside their recomputed Tukey fences. Nonzero
    /// means a second pass would replace more values.
    pub residual_fence_violations: usize,
}

/// Linear-interpolation quantile of an ascending, nonempty slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(Q1, median, Q3)` of the values.
pub fn quartiles(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::precondition("quartiles of an empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok((
        quantile_sorted(&v, 0.25),
        quantile_sorted(&v, 0.5),
        quantile_sorted(&v, 0.75),
    ))
}

fn fences(values: &[f64]) -> Result<(f64, f64, f64)> {
    let (q1, med, q3) = quartiles(values)?;
    let iqr = q3 - q1;
    Ok((
        q1 - TUKEY_MULTIPLIER * iqr,
        med,
        q3 + TUKEY_MULTIPLIER * iqr,
    ))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Cleans an IC and an OC sample that share a column schema.
pub fn preprocess(
    ic: &RawMatrix,
    oc: &RawMatrix,
) -> Result<(ObservationMatrix, ObservationMatrix, PreprocessReport)> {
    if ic.p() != oc.p() {
        return Err(Error::Schema(format!(
            "IC sample has {} columns, OC sample has {}",
            ic.p(),
            oc.p()
        )));
    }
    if ic.n() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            got: ic.n(),
        });
    }
    let p = ic.p();
    let mut report = PreprocessReport {
        original_columns: p,
        outliers_replaced: vec![0; p],
        missing_imputed_ic: vec![0; p],
        missing_imputed_oc: vec![0; p],
        ..Default::default()
    };
    let mut ic_cols: Vec<Vec<f64>> = Vec::new();
    let mut oc_cols: Vec<Vec<f64>> = Vec::new();

    for r in 0..p {
        let observed = ic.observed(r);
        let constant = observed.windows(2).all(|w| w[0] == w[1]);
        if constant {
            report.removed_constant_columns.push(r);
            continue;
        }
        let (lower, median, upper) = fences(&observed)?;
        let mut ic_col = Vec::with_capacity(ic.n());
        for i in 0..ic.n() {
            let v = ic.get(i, r);
            if v.is_nan() {
                report.missing_imputed_ic[r] += 1;
                ic_col.push(median);
            } else if v < lower || v > upper {
                report.outliers_replaced[r] += 1;
                ic_col.push(median);
            } else {
                ic_col.push(v);
            }
        }
        let (mean, std) = mean_std(&ic_col);
        if std <= 0.0 || std.is_nan() {
            report.removed_zero_variance_columns.push(r);
            continue;
        }
        let oc_col: Vec<f64> = (0..oc.n())
            .map(|i| {
                let v = oc.get(i, r);
                if v.is_nan() {
                    report.missing_imputed_oc[r] += 1;
                    median
                } else {
                    v
                }
            })
            .collect();
        ic_cols.push(ic_col.iter().map(|v| (v - mean) / std).collect());
        oc_cols.push(oc_col.iter().map(|v| (v - mean) / std).collect());
        report.retained_columns.push(r);
        report.ic_means.push(mean);
        report.ic_stds.push(std);
    }

    if ic_cols.is_empty() {
        return Err(Error::Schema("no columns left after preprocessing".into()));
    }
    for col in &ic_cols {
        let (lower, _, upper) = fences(col)?;
        report.residual_fence_violations += col.iter().filter(|&&v| v < lower || v > upper).count();
    }
    let to_rows = |cols: &[Vec<f64>], n: usize| {
        let data = (0..n)
            .flat_map(|i| cols.iter().map(move |c| c[i]))
            .collect();
        ObservationMatrix::from_row_major(n, cols.len(), data)
    };
    let ic_out = to_rows(&ic_cols, ic.n())?;
    let oc_out = to_rows(&oc_cols, oc.n())?;
    Ok((ic_out, oc_out, report))
}
