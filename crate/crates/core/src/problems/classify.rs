use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::linops::{BlockRowOperator, CsrMatrix, Diag, LinearMap, SparseRow};
use crate::prox::{smoothed_hinge, Term};
use crate::solvers::SaddleProblem;
use crate::spaces::Layout;

/// Ridge-regularized smoothed-hinge classification data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSpec {
    pub a: CsrMatrix,
    pub labels: Vec<f64>,
    pub lambda: f64,
}

impl ClassificationSpec {
    pub fn new(a: CsrMatrix, labels: Vec<f64>, lambda: f64) -> Result<Self> {
        let s = ClassificationSpec { a, labels, lambda };
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == 0 {
            return Err(invalid("classification needs at least one sample"));
        }
        if self.d() == 0 {
            return Err(invalid("classification needs at least one feature"));
        }
        if self.labels.len() != self.n() {
            return Err(invalid(format!("{} labels for {} samples", self.labels.len(), self.n())));
        }
        if let Some(b) = self.labels.iter().find(|b| **b != 1.0 && **b != -1.0) {
            return Err(invalid(format!("label {b} is not -1 or 1")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be finite and nonnegative"));
        }
        Ok(())
    }

    /// `(1/n) sum_i phi(b_i a_i^T x) + lambda/2 ||x||^2`.
    pub fn primal_value(&self, x: &[f64]) -> f64 {
        let loss: f64 = (0..self.n()).map(|i| smoothed_hinge(self.a.row_dot(i, x), self.labels[i])).sum();
        loss / self.n() as f64 + 0.5 * self.lambda * x.iter().map(|v| v * v).sum::<f64>()
    }
}

/// `K = A/n` split into one row per sample, `F = lambda/2 ||x||^2` (also
/// attached as `Q = lambda I`, `f = 0`) and hinge-conjugate dual terms.
pub fn build_classification(spec: &ClassificationSpec) -> Result<SaddleProblem> {
    spec.validate()?;
    let (n, d) = (spec.n(), spec.d());
    let dom = Arc::new(Layout::single(d));
    let scale = 1.0 / n as f64;
    let mut rows: Vec<Arc<dyn LinearMap>> = Vec::with_capacity(n);
    let mut g_terms = Vec::with_capacity(n);
    for i in 0..n {
        let entries: Vec<(usize, f64)> = spec.a.row(i).collect();
        rows.push(Arc::new(SparseRow::new(&entries, scale, dom.clone())?));
        g_terms.push(Term::hinge_conjugate(vec![spec.labels[i]], n)?);
    }
    let k = Arc::new(BlockRowOperator::new(rows)?);
    let prob = SaddleProblem::new(format!("classification_{n}x{d}"), k, vec![Term::ridge(spec.lambda)?], g_terms)?;
    let q: Arc<dyn LinearMap> = Arc::new(Diag::new(dom, vec![spec.lambda; d])?);
    prob.with_quadratic(q, vec![0.0; d])
}

/// Gaussian features with labels from a planted separator `w`:
/// `b_i = sign(a_i^T w / ||w|| + (1 - separability) e_i)`, `e_i ~ N(0, 1)`.
pub fn synth_classification(n: usize, d: usize, separability: f64, lambda: f64, seed: u64) -> Result<ClassificationSpec> {
    if n == 0 || d == 0 {
        return Err(invalid("sizes must be positive"));
    }
    if !(0.0..=1.0).contains(&separability) {
        return Err(invalid("separability must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let w: Vec<f64> = (0..d).map(|_| normal()).collect();
    let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| normal()).collect();
        let m = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / wn;
        let e = normal();
        labels.push(if m + (1.0 - separability) * e >= 0.0 { 1.0 } else { -1.0 });
        rows.push(row.into_iter().enumerate().collect::<Vec<_>>());
    }
    ClassificationSpec::new(CsrMatrix::from_sorted_rows(&rows, d)?, labels, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::primal_value;

    fn single(a: Vec<f64>, b: f64, lambda: f64) -> ClassificationSpec {
        let d = a.len();
        let row: Vec<(usize, f64)> = a.into_iter().enumerate().collect();
        ClassificationSpec::new(CsrMatrix::from_sorted_rows(&[row], d).unwrap(), vec![b], lambda).unwrap()
    }

    #[test]
    fn primal_at_zero_is_one_half() {
        for (n, d, seed) in [(1, 1, 0), (3, 5, 1), (7, 2, 2), (50, 20, 3)] {
            let spec = synth_classification(n, d, 0.5, 1e-3, seed).unwrap();
            let prob = build_classification(&spec).unwrap();
            assert_eq!(primal_value(&prob, &vec![0.0; d]), 0.5);
            assert_eq!(spec.primal_value(&vec![0.0; d]), 0.5);
        }
    }

    #[test]
    fn single_sample_hand_computed() {
        // a = (1, 2), b = -1, x = (0.1, 0.1): margin -0.3, phi = 0.8
        let spec = single(vec![1.0, 2.0], -1.0, 0.5);
        let prob = build_classification(&spec).unwrap();
        let want = 0.8 + 0.25 * 0.02;
        assert!((primal_value(&prob, &[0.1, 0.1]) - want).abs() <= 1e-15);
        // margin 0.6: phi = 0.08
        let want = 0.08 + 0.25 * (0.04 + 0.04);
        assert!((primal_value(&prob, &[-0.2, -0.2]) - want).abs() <= 1e-15);
    }

    #[test]
    fn separable_sample_without_ridge_reaches_zero_loss() {
        let a = vec![0.5, -1.5, 2.0];
        let spec = single(a.clone(), 1.0, 0.0);
        let prob = build_classification(&spec).unwrap();
        let nn: f64 = a.iter().map(|v| v * v).sum();
        let x: Vec<f64> = a.iter().map(|v| 1.001 * v / nn).collect();
        assert_eq!(primal_value(&prob, &x), 0.0);
    }

    #[test]
    fn conjugate_path_matches_direct_evaluation() {
        let spec = synth_classification(30, 8, 0.3, 1e-2, 11).unwrap();
        let prob = build_classification(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let x: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>();
            let x: Vec<f64> = x.iter().map(|v| 0.3 * v).collect();
            let (a, b) = (primal_value(&prob, &x), spec.primal_value(&x));
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn labels_and_sizes_validated() {
        let a = CsrMatrix::from_sorted_rows(&[vec![(0, 1.0)]], 1).unwrap();
        assert!(ClassificationSpec::new(a.clone(), vec![0.0], 1.0).is_err());
        assert!(ClassificationSpec::new(a.clone(), vec![1.0, 1.0], 1.0).is_err());
        assert!(ClassificationSpec::new(a, vec![1.0], -1.0).is_err());
        let empty = CsrMatrix::from_sorted_rows(&[], 3).unwrap();
        assert!(ClassificationSpec::new(empty, vec![], 1.0).is_err());
    }

    #[test]
    fn synthetic_data_is_seeded_and_separable() {
        let a = synth_classification(40, 6, 1.0, 0.0, 4).unwrap();
        let b = synth_classification(40, 6, 1.0, 0.0, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_classification(40, 6, 1.0, 0.0, 5).unwrap());
        assert!(a.labels.iter().any(|v| *v > 0.0) && a.labels.iter().any(|v| *v < 0.0));
    }
}
