use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::Dimension {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { n_cols, data })
    }

    pub fn from_flat(n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_cols == 0 && !data.is_empty() || n_cols > 0 && !data.len().is_multiple_of(n_cols) {
            return Err(Error::invalid(
                "matrix",
                format!("{} values do not fill rows of {n_cols}", data.len()),
            ));
        }
        Ok(Matrix { n_cols, data })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty slice with size 0 would panic
        self.data
            .chunks_exact(self.n_cols.max(1))
            .take(self.n_rows())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self.set(i, j, *v);
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            n_cols: self.n_cols,
            data,
        }
    }

    /// Appends a column on the right.
    pub fn push_column(&mut self, values: &[f64]) -> Result<()> {
        let n = self.n_rows();
        if self.n_cols > 0 && values.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: values.len(),
            });
        }
        let old = self.n_cols;
        let rows = if old == 0 { values.len() } else { n };
        let mut data = Vec::with_capacity(rows * (old + 1));
        for (i, v) in values.iter().enumerate().take(rows) {
            if old > 0 {
                data.extend_from_slice(&self.data[i * old..(i + 1) * old]);
            }
            data.push(*v);
        }
        self.n_cols = old + 1;
        self.data = data;
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_column_onto_empty_matrix() {
        let mut m = Matrix::default();
        m.push_column(&[1.0, 2.0]).unwrap();
        m.push_column(&[3.0, 4.0]).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.row(1), &[2.0, 4.0]);
        assert!(m.push_column(&[1.0]).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
