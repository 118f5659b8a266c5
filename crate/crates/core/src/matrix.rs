// SPDX-License-Identifier: MIT OR Apache-2.0

//! Row-major observation storage.
//!
//! Rows are time-ordered observations, columns are variables. Variable indices
//! are 0-based throughout the crate; time indices count observations, so the
//! first row is time 1.

use std::ops::Range;

use crate::error::{Error, Result};

/// Owned `n x p` matrix of finite observations.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationMatrix {
    data: Vec<f64>,
    n: usize,
    p: usize,
}

impl ObservationMatrix {
    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_row_major(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::precondition(format!(
                "matrix must have n >= 1 and p >= 1 (got n={n}, p={p})"
            )));
        }
        if data.len() != n * p {
            return Err(Error::precondition(format!(
                "data length {} does not match {n} x {p}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / p,
                col: pos % p,
            });
        }
        Ok(Self { data, n, p })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let p = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != p {
                return Err(Error::precondition(format!(
                    "row {i} has {} entries, expected {p}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), p, data)
    }

    /// Builds a single-column matrix.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::from_row_major(values.len(), 1, values.to_vec())
    }

    pub fn zeros(n: usize, p: usize) -> Result<Self> {
        Self::from_row_major(n, p, vec![0.0; n * p])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn get(&self, i: usize, r: usize) -> f64 {
        self.data[i * self.p + r]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.p)
    }

    pub fn view(&self) -> MatrixView<'_> {
        MatrixView {
            data: &self.data,
            n: self.n,
            p: self.p,
        }
    }

    /// Borrowed view of rows `range` (0-based, half-open).
    pub fn slice_rows(&self, range: Range<usize>) -> Result<MatrixView<'_>> {
        self.view().slice_rows(range)
    }

    /// Copies the selected columns into a new matrix.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.p) {
            return Err(Error::precondition(format!(
                "column {bad} out of range for p={}",
                self.p
            )));
        }
        let mut data = Vec::with_capacity(self.n * cols.len());
        for row in self.rows() {
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Self::from_row_major(self.n, cols.len(), data)
    }

    /// Applies `f` to every entry; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_row_major(self.n, self.p, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// Borrowed row-major block of consecutive observations.
#[derive(Clone, Copy, Debug)]
pub struct MatrixView<'a> {
    data: &'a [f64],
    n: usize,
    p: usize,
}

impl<'a> MatrixView<'a> {
    /// Wraps a row-major slice. Finiteness is the caller's responsibility.
    pub fn new(data: &'a [f64], p: usize) -> Result<Self> {
        if p == 0 || !data.len().is_multiple_of(p) {
            return Err(Error::precondition(format!(
                "slice of length {} is not a whole number of rows of width {p}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            n: data.len() / p,
            p,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn get(&self, i: usize, r: usize) -> f64 {
        self.data[i * self.p + r]
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.data
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Result<MatrixView<'a>> {
        if range.start > range.end || range.end > self.n {
            return Err(Error::precondition(format!(
                "row range {}..{} outside 0..{}",
                range.start, range.end, self.n
            )));
        }
        Ok(MatrixView {
            data: &self.data[range.start * self.p..range.end * self.p],
            n: range.end - range.start,
            p: self.p,
        })
    }

    pub fn to_owned(&self) -> Result<ObservationMatrix> {
        ObservationMatrix::from_row_major(self.n, self.p, self.data.to_vec())
    }
}

impl<'a> From<&'a ObservationMatrix> for MatrixView<'a> {
    fn from(m: &'a ObservationMatrix) -> Self {
        m.view()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let err = ObservationMatrix::from_rows(&[[1.0, 2.0], [f64::NAN, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0 }));
        assert!(ObservationMatrix::from_rows(&[[f64::INFINITY]]).is_err());
    }

    #[test]
    fn rejects_ragged_and_empty() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(ObservationMatrix::from_rows(&rows).is_err());
        let empty: Vec<Vec<f64>> = vec![];
        assert!(ObservationMatrix::from_rows(&empty).is_err());
    }

    #[test]
    fn slicing_and_selection() {
        let m = ObservationMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let v = m.slice_rows(1..3).unwrap();
        assert_eq!(v.n(), 2);
        assert_eq!(v.row(0), &[3.0, 4.0]);
        assert!(m.slice_rows(2..4).is_err());
        let c = m.select_columns(&[1]).unwrap();
        assert_eq!(c.as_slice(), &[2.0, 4.0, 6.0]);
    }
}
