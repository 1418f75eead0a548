use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::LinearMap;
use crate::error::{Error, Result};
use crate::spaces::Layout;

/// Dense row-major-constructed matrix acting between flat single-block spaces.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    m: DMatrix<f64>,
    domain: Arc<Layout>,
    codomain: Arc<Layout>,
}

impl DenseMatrix {
    pub fn new(m: DMatrix<f64>) -> Self {
        let domain = Arc::new(Layout::single(m.ncols()));
        let codomain = Arc::new(Layout::single(m.nrows()));
        DenseMatrix { m, domain, codomain }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.len());
        DenseMatrix::new(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
    }

    /// Same matrix with an explicit (possibly multi-block) domain and codomain.
    pub fn with_layouts(m: DMatrix<f64>, domain: Arc<Layout>, codomain: Arc<Layout>) -> Result<Self> {
        if m.ncols() != domain.total_len() || m.nrows() != codomain.total_len() {
            return Err(Error::Layout(format!("{}x{} matrix for layouts of length {} -> {}", m.nrows(), m.ncols(), domain.total_len(), codomain.total_len())));
        }
        Ok(DenseMatrix { m, domain, codomain })
    }

    /// Materializes any linear map by applying it to unit vectors.
    pub fn from_map(op: &dyn LinearMap) -> Self {
        let n = op.domain().total_len();
        let mrows = op.codomain().total_len();
        let mut m = DMatrix::zeros(mrows, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; mrows];
        for j in 0..n {
            e[j] = 1.0;
            op.forward(&e, &mut col);
            for i in 0..mrows {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        DenseMatrix { m, domain: op.domain().clone(), codomain: op.codomain().clone() }
    }

    pub fn identity(n: usize) -> Self {
        DenseMatrix::new(DMatrix::identity(n, n))
    }

    pub fn nrows(&self) -> usize {
        self.m.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.m.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix { m: self.m.transpose(), domain: self.codomain.clone(), codomain: self.domain.clone() }
    }

    /// Symmetric eigenvalues in ascending order.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.m + self.m.transpose()) * 0.5;
        let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn cholesky(&self) -> Result<DenseCholesky> {
        Cholesky::new(self.m.clone()).map(|c| DenseCholesky { c }).ok_or_else(|| Error::InvalidArgument("matrix is not positive definite".into()))
    }
}

/// Cached Cholesky factor for repeated solves.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    c: Cholesky<f64, Dyn>,
}

impl DenseCholesky {
    pub fn solve(&self, r: &[f64], out: &mut [f64]) {
        let v = self.c.solve(&DVector::from_column_slice(r));
        out.copy_from_slice(v.as_slice());
    }
}

impl LinearMap for DenseMatrix {
    fn domain(&self) -> &Arc<Layout> {
        &self.domain
    }
    fn codomain(&self) -> &Arc<Layout> {
        &self.codomain
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        let (nr, nc) = self.m.shape();
        for i in 0..nr {
            let mut s = 0.0;
            for j in 0..nc {
                s += self.m[(i, j)] * x[j];
            }
            out[i] = s;
        }
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.adjoint_add(y, out)
    }
    fn adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        let (nr, nc) = self.m.shape();
        for j in 0..nc {
            let mut s = 0.0;
            for i in 0..nr {
                s += self.m[(i, j)] * y[i];
            }
            out[j] += s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::adjoint_defect;
    use super::*;

    #[test]
    fn random_dense_adjoint() {
        let a = DenseMatrix::new(DMatrix::from_fn(7, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0));
        let norm = a.matrix().norm();
        assert!(adjoint_defect(&a, 100, 9, norm) <= 1e-10);
    }

    #[test]
    fn cholesky_solves() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let c = a.cholesky().unwrap();
        let mut x = vec![0.0; 2];
        c.solve(&[1.0, 2.0], &mut x);
        let mut ax = vec![0.0; 2];
        a.forward(&x, &mut ax);
        assert!((ax[0] - 1.0).abs() < 1e-14 && (ax[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn from_map_round_trips() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let b = DenseMatrix::from_map(&a);
        assert_eq!(a.matrix(), b.matrix());
    }
}
