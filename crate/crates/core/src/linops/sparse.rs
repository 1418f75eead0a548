use std::sync::Arc;

use super::LinearMap;
use crate::error::{Error, Result};
use crate::spaces::Layout;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    domain: Arc<Layout>,
    codomain: Arc<Layout>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros kept.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidArgument(format!("entry ({i}, {j}) outside {nrows}x{ncols}")));
            }
            rows[i].push((j, v));
        }
        for r in &mut rows {
            r.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(r.len());
            for &(j, v) in r.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *r = merged;
        }
        CsrMatrix::from_sorted_rows(&rows, ncols)
    }

    /// Rows given as column-sorted `(col, value)` lists.
    pub fn from_sorted_rows(rows: &[Vec<(usize, f64)>], ncols: usize) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (i, r) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(j, v) in r {
                if j >= ncols || prev.is_some_and(|p| p >= j) {
                    return Err(Error::InvalidArgument(format!("row {i}: column indices must be increasing and < {ncols}")));
                }
                prev = Some(j);
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        let nrows = rows.len();
        Ok(CsrMatrix { nrows, ncols, indptr, indices, values, domain: Arc::new(Layout::single(ncols)), codomain: Arc::new(Layout::single(nrows)) })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(j, v)| v * x[j]).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).find(|e| e.0 == i).map_or(0.0, |e| e.1)).collect()
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows)
            .map(|i| {
                let mut r = vec![0.0; self.ncols];
                for (j, v) in self.row(i) {
                    r[j] = v;
                }
                r
            })
            .collect()
    }
}

impl LinearMap for CsrMatrix {
    fn domain(&self) -> &Arc<Layout> {
        &self.domain
    }
    fn codomain(&self) -> &Arc<Layout> {
        &self.codomain
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.nrows) {
            *o = self.row_dot(i, x);
        }
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.adjoint_add(y, out)
    }
    fn adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        for (i, yi) in y.iter().enumerate().take(self.nrows) {
            if *yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
    }
}

/// A single sparse row `scale * a^T` seen as a map into a one-entry block.
#[derive(Debug, Clone)]
pub struct SparseRow {
    indices: Vec<usize>,
    values: Vec<f64>,
    scale: f64,
    domain: Arc<Layout>,
    codomain: Arc<Layout>,
}

impl SparseRow {
    pub fn new(entries: &[(usize, f64)], scale: f64, domain: Arc<Layout>) -> Result<Self> {
        let n = domain.total_len();
        if entries.iter().any(|e| e.0 >= n) {
            return Err(Error::Layout(format!("sparse row index outside domain of length {n}")));
        }
        Ok(SparseRow {
            indices: entries.iter().map(|e| e.0).collect(),
            values: entries.iter().map(|e| e.1).collect(),
            scale,
            domain,
            codomain: Arc::new(Layout::single(1)),
        })
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.scale * self.indices.iter().zip(&self.values).map(|(&j, v)| v * x[j]).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.scale.abs() * self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl LinearMap for SparseRow {
    fn domain(&self) -> &Arc<Layout> {
        &self.domain
    }
    fn codomain(&self) -> &Arc<Layout> {
        &self.codomain
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.dot(x);
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.adjoint_add(y, out)
    }
    fn adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        let c = self.scale * y[0];
        if c != 0.0 {
            for (&j, v) in self.indices.iter().zip(&self.values) {
                out[j] += c * v;
            }
        }
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(self.norm())
    }
}
