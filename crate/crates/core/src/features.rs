use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-window matrix of unit features: `rows` units by `cols` channels,
/// row-major. Rows at or beyond `valid_prefix` are placeholders and are
/// kept at exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    valid_prefix: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("expected {expected} values for a {rows}x{cols} matrix, got {got}")]
    Shape { rows: usize, cols: usize, expected: usize, got: usize },
    #[error("valid prefix {valid_prefix} exceeds {rows} rows")]
    PrefixTooLong { valid_prefix: usize, rows: usize },
    #[error("row {row} is beyond the valid prefix but not zero")]
    PlaceholderNotZero { row: usize },
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols], valid_prefix: 0 }
    }

    /// A fully valid matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, FeatureError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(FeatureError::Shape {
                    rows: rows.len(),
                    cols,
                    expected: rows.len() * cols,
                    got: data.len() + r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data, valid_prefix: rows.len() })
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>, valid_prefix: usize) -> Result<Self, FeatureError> {
        if data.len() != rows * cols {
            return Err(FeatureError::Shape { rows, cols, expected: rows * cols, got: data.len() });
        }
        if valid_prefix > rows {
            return Err(FeatureError::PrefixTooLong { valid_prefix, rows });
        }
        if let Some(row) = (valid_prefix..rows).find(|&r| data[r * cols..(r + 1) * cols].iter().any(|&x| x != 0.0)) {
            return Err(FeatureError::PlaceholderNotZero { row });
        }
        Ok(Self { rows, cols, data, valid_prefix })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn valid_prefix(&self) -> usize {
        self.valid_prefix
    }

    pub fn is_complete(&self) -> bool {
        self.valid_prefix == self.rows
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Writes the next valid row.
    ///
    /// # Panics
    /// If the matrix is already complete or `values` has the wrong width.
    pub fn push_row(&mut self, values: &[f64]) {
        assert!(self.valid_prefix < self.rows, "feature matrix is full");
        assert_eq!(values.len(), self.cols, "row width");
        let r = self.valid_prefix;
        self.data[r * self.cols..(r + 1) * self.cols].copy_from_slice(values);
        self.valid_prefix += 1;
    }

    /// The valid rows as a complete matrix of their own.
    pub fn prefix(&self) -> FeatureMatrix {
        let n = self.valid_prefix;
        FeatureMatrix { rows: n, cols: self.cols, data: self.data[..n * self.cols].to_vec(), valid_prefix: n }
    }

    /// Copy keeping only the first `n` valid rows; later rows become zero placeholders.
    pub fn truncated(&self, n: usize) -> FeatureMatrix {
        let n = n.min(self.valid_prefix);
        let mut data = self.data.clone();
        data[n * self.cols..].iter_mut().for_each(|x| *x = 0.0);
        FeatureMatrix { rows: self.rows, cols: self.cols, data, valid_prefix: n }
    }

    /// `a * self + b * other` over matrices of the same shape and prefix.
    pub fn linear_combination(&self, a: f64, other: &FeatureMatrix, b: f64) -> FeatureMatrix {
        assert_eq!((self.rows, self.cols, self.valid_prefix), (other.rows, other.cols, other.valid_prefix));
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        FeatureMatrix { rows: self.rows, cols: self.cols, data, valid_prefix: self.valid_prefix }
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_must_be_zero() {
        let err = FeatureMatrix::from_flat(2, 2, vec![1.0, 2.0, 0.0, 3.0], 1).unwrap_err();
        assert_eq!(err, FeatureError::PlaceholderNotZero { row: 1 });
        assert!(FeatureMatrix::from_flat(2, 2, vec![1.0, 2.0, 0.0, 0.0], 1).is_ok());
    }

    #[test]
    fn push_and_truncate() {
        let mut m = FeatureMatrix::zeros(3, 2);
        m.push_row(&[1.0, 2.0]);
        m.push_row(&[3.0, 4.0]);
        assert_eq!(m.valid_prefix(), 2);
        assert_eq!(m.row(2), &[0.0, 0.0]);
        let t = m.truncated(1);
        assert_eq!(t.valid_prefix(), 1);
        assert_eq!(t.as_slice(), &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.prefix().rows(), 2);
    }
}
