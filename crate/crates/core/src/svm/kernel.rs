use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// RBF width and C-SVC penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub gamma: f64,
    pub c: f64,
}

impl KernelParams {
    pub fn new(gamma: f64, c: f64) -> Result<Self> {
        let p = KernelParams { gamma, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(
                "gamma",
                format!("must be > 0, got {}", self.gamma),
            ));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invalid("c", format!("must be > 0, got {}", self.c)));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn rbf(x: &[f64], z: &[f64], gamma: f64) -> f64 {
    (-gamma * sq_dist(x, z)).exp()
}

/// `exp(-gamma * |x - z|^2)`.
pub fn rbf_kernel(x: &[f64], z: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    if x.len() != z.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: z.len(),
        });
    }
    Ok(rbf(x, z, gamma))
}

/// Source of kernel rows for the solver, indexed in the solver's own
/// 0..len() numbering.
pub trait KernelRows {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `K(i, j)` for every `j` into `out`.
    fn row_into(&mut self, i: usize, out: &mut [f64]);

    /// Number of kernel values computed so far (cache hits are free).
    fn evaluations(&self) -> u64;

    /// Rows `i` and `j`, either borrowed from the source or written into
    /// the scratch buffers.
    fn row_pair<'s>(
        &'s mut self,
        i: usize,
        j: usize,
        scratch_i: &'s mut [f64],
        scratch_j: &'s mut [f64],
    ) -> (&'s [f64], &'s [f64]) {
        self.row_into(i, scratch_i);
        self.row_into(j, scratch_j);
        (scratch_i, scratch_j)
    }
}

/// Full precomputed kernel matrix over a set of points.
#[derive(Clone, Debug)]
pub struct Gram {
    n: usize,
    values: Vec<f64>,
}

impl Gram {
    pub fn new(x: &Matrix, gamma: f64) -> Self {
        let n = x.n_rows();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
            for j in 0..i {
                let k = rbf(x.row(i), x.row(j), gamma);
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        Gram { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Dense copy of the rows and columns in `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Gram {
        let m = idx.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in idx {
            let row = self.row(i);
            values.extend(idx.iter().map(|&j| row[j]));
        }
        Gram { n: m, values }
    }

    /// View restricted to `idx`.
    pub fn view<'a>(&'a self, idx: &'a [usize]) -> GramView<'a> {
        GramView { gram: self, idx }
    }
}

impl KernelRows for Gram {
    fn len(&self) -> usize {
        self.n
    }

    fn row_into(&mut self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(i));
    }

    fn evaluations(&self) -> u64 {
        0
    }

    fn row_pair<'s>(
        &'s mut self,
        i: usize,
        j: usize,
        _: &'s mut [f64],
        _: &'s mut [f64],
    ) -> (&'s [f64], &'s [f64]) {
        (self.row(i), self.row(j))
    }
}

pub struct GramView<'a> {
    gram: &'a Gram,
    idx: &'a [usize],
}

impl KernelRows for GramView<'_> {
    fn len(&self) -> usize {
        self.idx.len()
    }

    fn row_into(&mut self, i: usize, out: &mut [f64]) {
        let row = self.gram.row(self.idx[i]);
        for (o, &j) in out.iter_mut().zip(self.idx) {
            *o = row[j];
        }
    }

    fn evaluations(&self) -> u64 {
        0
    }
}

/// Kernel rows computed on demand from the data, with a bounded
/// least-recently-used row cache.
pub struct CachedRows<'a> {
    x: &'a Matrix,
    idx: &'a [usize],
    gamma: f64,
    capacity: usize,
    rows: Vec<Option<(u64, Vec<f64>)>>,
    cached: usize,
    clock: u64,
    evals: u64,
}

impl<'a> CachedRows<'a> {
    pub fn new(x: &'a Matrix, idx: &'a [usize], gamma: f64, cache_bytes: usize) -> Self {
        let row_bytes = (idx.len() * std::mem::size_of::<f64>()).max(1);
        CachedRows {
            x,
            idx,
            gamma,
            capacity: (cache_bytes / row_bytes).max(2),
            rows: vec![None; idx.len()],
            cached: 0,
            clock: 0,
            evals: 0,
        }
    }

    fn evict_oldest(&mut self) {
        let victim = self
            .rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|(stamp, _)| (*stamp, i)))
            .min()
            .map(|(_, i)| i);
        if let Some(v) = victim {
            self.rows[v] = None;
            self.cached -= 1;
        }
    }
}

impl KernelRows for CachedRows<'_> {
    fn len(&self) -> usize {
        self.idx.len()
    }

    fn row_into(&mut self, i: usize, out: &mut [f64]) {
        self.clock += 1;
        if let Some((stamp, row)) = self.rows[i].as_mut() {
            *stamp = self.clock;
            out.copy_from_slice(row);
            return;
        }
        let xi = self.x.row(self.idx[i]);
        for (o, &j) in out.iter_mut().zip(self.idx) {
            *o = rbf(xi, self.x.row(j), self.gamma);
        }
        self.evals += self.idx.len() as u64;
        if self.cached >= self.capacity {
            self.evict_oldest();
        }
        self.rows[i] = Some((self.clock, out.to_vec()));
        self.cached += 1;
    }

    fn evaluations(&self) -> u64 {
        self.evals
    }
}
