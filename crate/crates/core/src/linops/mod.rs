//! Linear operators: the forward/adjoint contract, block-row stacking and
//! the concrete maps used by the deblurring and classification problems.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spaces::{BlockVector, Layout};

mod conv;
mod dense;
mod grid;
mod norm;
mod sparse;

pub use conv::Conv2d;
pub use dense::{DenseCholesky, DenseMatrix};
pub use grid::{div2d, grad2d, neg_laplacian, sym_deriv, sym_div, Grad2d, SymDeriv, TgvRow, TgvRowKind};
pub use norm::{op_norm_estimate, DEFAULT_NORM_ITERS};
pub use sparse::{CsrMatrix, SparseRow};

/// A bounded linear map between two block layouts.
///
/// `forward` and `adjoint` overwrite their output buffers, which have the
/// total length of the codomain and domain respectively.
pub trait LinearMap: Send + Sync {
    fn domain(&self) -> &Arc<Layout>;
    fn codomain(&self) -> &Arc<Layout>;
    fn forward(&self, x: &[f64], out: &mut [f64]);
    fn adjoint(&self, y: &[f64], out: &mut [f64]);

    /// `out += K* y`. Operators with sparse adjoints override this.
    fn adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.adjoint(y, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }

    /// Known upper bound on the operator norm, if one is cheap.
    fn norm_hint(&self) -> Option<f64> {
        None
    }

    fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        self.domain().check_same(x.layout(), "apply")?;
        let mut out = BlockVector::zeros(self.codomain().clone());
        self.forward(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    fn adjoint_apply(&self, y: &BlockVector) -> Result<BlockVector> {
        self.codomain().check_same(y.layout(), "adjoint_apply")?;
        let mut out = BlockVector::zeros(self.domain().clone());
        self.adjoint(y.as_slice(), out.as_mut_slice());
        Ok(out)
    }
}

/// Identity on a layout.
#[derive(Debug, Clone)]
pub struct Identity {
    layout: Arc<Layout>,
}

impl Identity {
    pub fn new(layout: Arc<Layout>) -> Self {
        Identity { layout }
    }
}

impl LinearMap for Identity {
    fn domain(&self) -> &Arc<Layout> {
        &self.layout
    }
    fn codomain(&self) -> &Arc<Layout> {
        &self.layout
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }
    fn adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(y) {
            *o += v;
        }
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Elementwise scaling by a fixed vector.
#[derive(Debug, Clone)]
pub struct Diag {
    layout: Arc<Layout>,
    d: Vec<f64>,
}

impl Diag {
    pub fn new(layout: Arc<Layout>, d: Vec<f64>) -> Result<Self> {
        if d.len() != layout.total_len() {
            return Err(Error::Layout(format!("diagonal of length {} for layout of length {}", d.len(), layout.total_len())));
        }
        Ok(Diag { layout, d })
    }

    pub fn from_vec(d: Vec<f64>) -> Self {
        let layout = Arc::new(Layout::single(d.len()));
        Diag { layout, d }
    }
}

impl LinearMap for Diag {
    fn domain(&self) -> &Arc<Layout> {
        &self.layout
    }
    fn codomain(&self) -> &Arc<Layout> {
        &self.layout
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for ((o, v), d) in out.iter_mut().zip(x).zip(&self.d) {
            *o = d * v;
        }
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.forward(y, out)
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(self.d.iter().fold(0.0, |m, v| m.max(v.abs())))
    }
}

/// `scale * op`.
pub struct Scaled {
    op: Arc<dyn LinearMap>,
    scale: f64,
}

impl Scaled {
    pub fn new(op: Arc<dyn LinearMap>, scale: f64) -> Self {
        Scaled { op, scale }
    }
}

impl LinearMap for Scaled {
    fn domain(&self) -> &Arc<Layout> {
        self.op.domain()
    }
    fn codomain(&self) -> &Arc<Layout> {
        self.op.codomain()
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        self.op.forward(x, out);
        for o in out.iter_mut() {
            *o *= self.scale;
        }
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.op.adjoint(y, out);
        for o in out.iter_mut() {
            *o *= self.scale;
        }
    }
}

/// Column of `n` maps `K_i` sharing a domain; `K = [K_1; ...; K_n]`.
///
/// Row `i` maps into dual block `i`.
pub struct BlockRowOperator {
    rows: Vec<Arc<dyn LinearMap>>,
    domain: Arc<Layout>,
    codomain: Arc<Layout>,
    offsets: Vec<usize>,
}

impl BlockRowOperator {
    pub fn new(rows: Vec<Arc<dyn LinearMap>>) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::InvalidArgument("block-row operator needs at least one row".into()))?;
        let domain = first.domain().clone();
        let mut shapes = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            domain.check_same(r.domain(), &format!("row {i} domain"))?;
            if r.codomain().num_blocks() != 1 {
                return Err(Error::Layout(format!("row {i} must map into a single block")));
            }
            shapes.push(r.codomain().block_shape(0).to_vec());
        }
        let codomain = Arc::new(Layout::new(shapes));
        let offsets = (0..=rows.len()).map(|i| if i == 0 { 0 } else { codomain.range(i - 1).end }).collect();
        Ok(BlockRowOperator { rows, domain, codomain, offsets })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &Arc<dyn LinearMap> {
        &self.rows[i]
    }

    fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// `out_i = K_i x` where `out_i` is the slice of dual block `i`.
    pub fn forward_row(&self, i: usize, x: &[f64], out_i: &mut [f64]) {
        self.rows[i].forward(x, out_i)
    }

    /// `out += K_i* y_i`.
    pub fn adjoint_row_add(&self, i: usize, y_i: &[f64], out: &mut [f64]) {
        self.rows[i].adjoint_add(y_i, out)
    }
}

impl LinearMap for BlockRowOperator {
    fn domain(&self) -> &Arc<Layout> {
        &self.domain
    }
    fn codomain(&self) -> &Arc<Layout> {
        &self.codomain
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.rows.len() {
            let r = self.row_range(i);
            self.rows[i].forward(x, &mut out[r]);
        }
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.adjoint_add(y, out)
    }
    fn adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        for i in 0..self.rows.len() {
            self.rows[i].adjoint_add(&y[self.row_range(i)], out);
        }
    }
}

/// Composition `outer . inner`.
pub struct Compose {
    outer: Arc<dyn LinearMap>,
    inner: Arc<dyn LinearMap>,
}

impl Compose {
    pub fn new(outer: Arc<dyn LinearMap>, inner: Arc<dyn LinearMap>) -> Result<Self> {
        outer.domain().check_same(inner.codomain(), "composition")?;
        Ok(Compose { outer, inner })
    }
}

impl LinearMap for Compose {
    fn domain(&self) -> &Arc<Layout> {
        self.inner.domain()
    }
    fn codomain(&self) -> &Arc<Layout> {
        self.outer.codomain()
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        let mut mid = vec![0.0; self.inner.codomain().total_len()];
        self.inner.forward(x, &mut mid);
        self.outer.forward(&mid, out);
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        let mut mid = vec![0.0; self.inner.codomain().total_len()];
        self.outer.adjoint(y, &mut mid);
        self.inner.adjoint(&mid, out);
    }
}

pub(crate) fn random_vec(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
    use rand::Rng;
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Largest relative adjoint defect `|<Kx, y> - <x, K^T y>| / (||K|| ||x|| ||y||)`
/// over `probes` seeded random pairs.
pub fn adjoint_defect(k: &dyn LinearMap, probes: usize, seed: u64, knorm: f64) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = k.domain().total_len();
    let m = k.codomain().total_len();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let x = random_vec(&mut rng, n);
        let y = random_vec(&mut rng, m);
        let mut kx = vec![0.0; m];
        let mut kty = vec![0.0; n];
        k.forward(&x, &mut kx);
        k.adjoint(&y, &mut kty);
        let lhs: f64 = kx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&kty).map(|(a, b)| a * b).sum();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max((lhs - rhs).abs() / (nx * ny * knorm.max(1e-300)));
    }
    worst
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn dense_apply_and_adjoint_examples() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let x = BlockVector::from_vec(a.domain().clone(), vec![1.0, 1.0]).unwrap();
        assert_eq!(a.apply(&x).unwrap().as_slice(), &[3.0, 7.0, 11.0]);
        let y = BlockVector::from_vec(a.codomain().clone(), vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(a.adjoint_apply(&y).unwrap().as_slice(), &[1.0, 2.0]);
        let z = BlockVector::zeros(a.domain().clone());
        assert!(a.apply(&z).unwrap().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_returns_input() {
        let l = Arc::new(Layout::flat(&[2, 3]));
        let id = Identity::new(l.clone());
        let x = BlockVector::from_vec(l, vec![1.0, -2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(id.apply(&x).unwrap(), x);
    }

    #[test]
    fn apply_rejects_layout_mismatch() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0]]);
        let x = BlockVector::from_flat(vec![1.0, 2.0, 3.0]);
        assert!(matches!(a.apply(&x), Err(Error::Layout(_))));
        let y = BlockVector::from_flat(vec![1.0, 2.0]);
        assert!(matches!(a.adjoint_apply(&y), Err(Error::Layout(_))));
    }

    #[test]
    fn block_row_stacks_rows() {
        let a = Arc::new(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]));
        let b = Arc::new(DenseMatrix::from_rows(&[vec![3.0, -4.0]]));
        let k = BlockRowOperator::new(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(k.codomain().num_blocks(), 2);
        let x = [0.3, -0.7];
        let mut stacked = vec![0.0; 3];
        k.forward(&x, &mut stacked);
        let mut ax = vec![0.0; 2];
        let mut bx = vec![0.0; 1];
        a.forward(&x, &mut ax);
        b.forward(&x, &mut bx);
        assert_eq!(&stacked[..2], &ax[..]);
        assert_eq!(stacked[2], bx[0]);
        let y = [1.0, 2.0, -1.5];
        let mut kty = vec![0.0; 2];
        k.adjoint(&y, &mut kty);
        let mut sum = vec![0.0; 2];
        a.adjoint_add(&y[..2], &mut sum);
        b.adjoint_add(&y[2..], &mut sum);
        assert_eq!(kty, sum);
        assert!(adjoint_defect(&k, 100, 1, 6.0) <= 1e-12);
    }

    #[test]
    fn scaled_and_composed_maps_are_adjoint() {
        let a: Arc<dyn LinearMap> = Arc::new(DenseMatrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.5, -1.0, 3.0]]));
        let b: Arc<dyn LinearMap> = Arc::new(DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 1.0], vec![1.0, 1.0]]));
        let c = Compose::new(b, a.clone()).unwrap();
        assert!(adjoint_defect(&c, 100, 2, 20.0) <= 1e-12);
        let s = Scaled::new(a, 0.25);
        assert!(adjoint_defect(&s, 100, 3, 1.0) <= 1e-12);
    }
}
