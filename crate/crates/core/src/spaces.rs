//! Block vectors over product spaces, iteration states and the weighted
//! (possibly degenerate) inner products used by the convergence checks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::LinearMap;

/// Block-shape descriptor. Each block is a dense array stored flat; the
/// shape is only consulted at operator boundaries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct Layout {
    shapes: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

impl From<Vec<Vec<usize>>> for Layout {
    fn from(shapes: Vec<Vec<usize>>) -> Self {
        Layout::new(shapes)
    }
}

impl From<Layout> for Vec<Vec<usize>> {
    fn from(layout: Layout) -> Self {
        layout.shapes
    }
}

impl Layout {
    pub fn new(shapes: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(shapes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for s in &shapes {
            acc += s.iter().product::<usize>();
            offsets.push(acc);
        }
        Layout { shapes, offsets }
    }

    /// One-dimensional blocks of the given lengths.
    pub fn flat(lens: &[usize]) -> Self {
        Layout::new(lens.iter().map(|&l| vec![l]).collect())
    }

    /// A single one-dimensional block.
    pub fn single(len: usize) -> Self {
        Layout::flat(&[len])
    }

    pub fn num_blocks(&self) -> usize {
        self.shapes.len()
    }

    pub fn total_len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn block_len(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn block_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Layout obtained by appending the blocks of `other`.
    pub fn concat(&self, other: &Layout) -> Layout {
        let mut shapes = self.shapes.clone();
        shapes.extend(other.shapes.iter().cloned());
        Layout::new(shapes)
    }

    pub(crate) fn check_same(&self, other: &Layout, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Layout(format!("{what}: expected {:?}, got {:?}", self.shapes, other.shapes)))
        }
    }
}

/// Element of a product Hilbert space: an ordered list of dense blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    layout: Arc<Layout>,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let n = layout.total_len();
        BlockVector { layout, data: vec![0.0; n] }
    }

    pub fn from_vec(layout: Arc<Layout>, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total_len() {
            return Err(Error::Layout(format!("data length {} does not match layout length {}", data.len(), layout.total_len())));
        }
        Ok(BlockVector { layout, data })
    }

    /// Vector with a single flat block.
    pub fn from_flat(data: Vec<f64>) -> Self {
        let layout = Arc::new(Layout::single(data.len()));
        BlockVector { layout, data }
    }

    pub fn filled(layout: Arc<Layout>, value: f64) -> Self {
        let n = layout.total_len();
        BlockVector { layout, data: vec![value; n] }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.layout.num_blocks()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[self.layout.range(i)]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.layout.range(i);
        &mut self.data[r]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn zeros_like(&self) -> Self {
        BlockVector::zeros(self.layout.clone())
    }

    pub(crate) fn check_layout(&self, other: &BlockVector) -> Result<()> {
        if Arc::ptr_eq(&self.layout, &other.layout) {
            return Ok(());
        }
        self.layout.check_same(&other.layout, "block vector")
    }

    pub fn dot(&self, other: &BlockVector) -> Result<f64> {
        self.check_layout(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &BlockVector) -> Result<()> {
        self.check_layout(other)?;
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    /// `a * u + b * v`, blockwise.
    pub fn lincomb(a: f64, u: &BlockVector, b: f64, v: &BlockVector) -> Result<BlockVector> {
        u.check_layout(v)?;
        let data = u.data.iter().zip(&v.data).map(|(x, y)| a * x + b * y).collect();
        Ok(BlockVector { layout: u.layout.clone(), data })
    }

    pub fn sub(&self, other: &BlockVector) -> Result<BlockVector> {
        self.check_layout(other)?;
        let data = self.data.iter().zip(&other.data).map(|(x, y)| x - y).collect();
        Ok(BlockVector { layout: self.layout.clone(), data })
    }

    pub fn add(&self, other: &BlockVector) -> Result<BlockVector> {
        self.check_layout(other)?;
        let data = self.data.iter().zip(&other.data).map(|(x, y)| x + y).collect();
        Ok(BlockVector { layout: self.layout.clone(), data })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Whether a state carries the `x_bar` component (PDR family) or not
/// (PDRQ family).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Quadratic,
}

/// Iteration state `u = (x, y, x_bar, y_bar)`; the quadratic variant has no
/// `x_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateU {
    pub x: BlockVector,
    pub y: BlockVector,
    pub x_bar: Option<BlockVector>,
    pub y_bar: BlockVector,
}

impl StateU {
    pub fn full(x: BlockVector, y: BlockVector, x_bar: BlockVector, y_bar: BlockVector) -> Result<Self> {
        x.check_layout(&x_bar)?;
        y.check_layout(&y_bar)?;
        Ok(StateU { x, y, x_bar: Some(x_bar), y_bar })
    }

    pub fn quadratic(x: BlockVector, y: BlockVector, y_bar: BlockVector) -> Result<Self> {
        y.check_layout(&y_bar)?;
        Ok(StateU { x, y, x_bar: None, y_bar })
    }

    pub fn zeros(primal: Arc<Layout>, dual: Arc<Layout>, variant: Variant) -> Self {
        let x = BlockVector::zeros(primal);
        let y = BlockVector::zeros(dual);
        let x_bar = match variant {
            Variant::Full => Some(x.clone()),
            Variant::Quadratic => None,
        };
        StateU { y_bar: y.clone(), x, y, x_bar }
    }

    pub fn variant(&self) -> Variant {
        if self.x_bar.is_some() {
            Variant::Full
        } else {
            Variant::Quadratic
        }
    }

    pub fn x_bar(&self) -> Result<&BlockVector> {
        self.x_bar.as_ref().ok_or_else(|| Error::Variant("quadratic state has no x_bar component".into()))
    }

    fn check_compatible(&self, other: &StateU) -> Result<()> {
        if self.variant() != other.variant() {
            return Err(Error::Variant("mixing full and quadratic states".into()));
        }
        self.x.check_layout(&other.x)?;
        self.y.check_layout(&other.y)
    }

    /// Blockwise `a * u + b * v`.
    pub fn combine(a: f64, u: &StateU, b: f64, v: &StateU) -> Result<StateU> {
        u.check_compatible(v)?;
        let x_bar = match (&u.x_bar, &v.x_bar) {
            (Some(p), Some(q)) => Some(BlockVector::lincomb(a, p, b, q)?),
            _ => None,
        };
        Ok(StateU {
            x: BlockVector::lincomb(a, &u.x, b, &v.x)?,
            y: BlockVector::lincomb(a, &u.y, b, &v.y)?,
            x_bar,
            y_bar: BlockVector::lincomb(a, &u.y_bar, b, &v.y_bar)?,
        })
    }

    pub fn sub(&self, other: &StateU) -> Result<StateU> {
        StateU::combine(1.0, self, -1.0, other)
    }

    /// Largest absolute entry over all components.
    pub fn norm_inf(&self) -> f64 {
        let mut m = self.x.norm_inf().max(self.y.norm_inf()).max(self.y_bar.norm_inf());
        if let Some(xb) = &self.x_bar {
            m = m.max(xb.norm_inf());
        }
        m
    }
}

/// Weight for one component of the state: `factor * op` with an optional
/// per-dual-block scaling (the `P^{-1}` factors).
#[derive(Clone)]
pub struct WeightBlock {
    factor: f64,
    op: Option<Arc<dyn LinearMap>>,
    block_scales: Option<Vec<f64>>,
}

impl std::fmt::Debug for WeightBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightBlock")
            .field("factor", &self.factor)
            .field("op", &self.op.as_ref().map(|_| "<linear map>"))
            .field("block_scales", &self.block_scales)
            .finish()
    }
}

impl WeightBlock {
    pub fn zero() -> Self {
        WeightBlock { factor: 0.0, op: None, block_scales: None }
    }

    pub fn scalar(factor: f64) -> Result<Self> {
        if !(factor >= 0.0) {
            return Err(Error::InvalidArgument(format!("weight factor {factor} is negative")));
        }
        Ok(WeightBlock { factor, op: None, block_scales: None })
    }

    /// `factor * op`; `op` must be self-adjoint positive semidefinite.
    pub fn with_op(factor: f64, op: Arc<dyn LinearMap>) -> Result<Self> {
        let mut w = WeightBlock::scalar(factor)?;
        w.op = Some(op);
        Ok(w)
    }

    /// Adds a per-block scaling, e.g. the `1/p_i` of a sampling scheme.
    pub fn with_block_scales(mut self, scales: Vec<f64>) -> Result<Self> {
        if scales.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument("block scales must be nonnegative".into()));
        }
        self.block_scales = Some(scales);
        Ok(self)
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// Same weight multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        WeightBlock { factor: self.factor * s, ..self.clone() }
    }

    /// `W v` as a flat vector.
    pub fn apply(&self, v: &BlockVector) -> Result<Vec<f64>> {
        let mut out = match &self.op {
            Some(op) => op.apply(v)?.into_vec(),
            None => v.as_slice().to_vec(),
        };
        if let Some(scales) = &self.block_scales {
            if scales.len() != v.num_blocks() {
                return Err(Error::Layout(format!("{} block scales for {} blocks", scales.len(), v.num_blocks())));
            }
            for (i, s) in scales.iter().enumerate() {
                for e in &mut out[v.layout().range(i)] {
                    *e *= s;
                }
            }
        }
        for e in &mut out {
            *e *= self.factor;
        }
        Ok(out)
    }

    /// `<W u, v>`
    pub fn bilinear(&self, u: &BlockVector, v: &BlockVector) -> Result<f64> {
        u.check_layout(v)?;
        if self.factor == 0.0 {
            return Ok(0.0);
        }
        Ok(dot(&self.apply(u)?, v.as_slice()))
    }
}

/// Block-diagonal weight over `(x, y, x_bar, y_bar)`, e.g.
/// `diag[(N1 - I)/sigma, (N2 - I)/tau, I/sigma, I/tau]`.
#[derive(Debug, Clone)]
pub struct DiagonalWeight {
    pub x: WeightBlock,
    pub y: WeightBlock,
    pub x_bar: WeightBlock,
    pub y_bar: WeightBlock,
}

impl DiagonalWeight {
    pub fn identity() -> Self {
        let one = WeightBlock::scalar(1.0).unwrap();
        DiagonalWeight { x: one.clone(), y: one.clone(), x_bar: one.clone(), y_bar: one }
    }

    /// Multiplies the four components by the given scalars (used for the
    /// relaxation-weighted norms).
    pub fn scaled(&self, sx: f64, sy: f64, sxb: f64, syb: f64) -> Self {
        DiagonalWeight { x: self.x.scaled(sx), y: self.y.scaled(sy), x_bar: self.x_bar.scaled(sxb), y_bar: self.y_bar.scaled(syb) }
    }
}

/// `<W u, v>` summed over the components present in the states.
pub fn weighted_inner(u: &StateU, v: &StateU, w: &DiagonalWeight) -> Result<f64> {
    u.check_compatible(v)?;
    let mut s = w.x.bilinear(&u.x, &v.x)? + w.y.bilinear(&u.y, &v.y)? + w.y_bar.bilinear(&u.y_bar, &v.y_bar)?;
    if let (Some(a), Some(b)) = (&u.x_bar, &v.x_bar) {
        s += w.x_bar.bilinear(a, b)?;
    }
    Ok(s)
}

/// `||u||_W^2 = <W u, u>`.
pub fn weighted_norm_sq(u: &StateU, w: &DiagonalWeight) -> Result<f64> {
    weighted_inner(u, u, w)
}

/// Blockwise `a * u + b * v`.
pub fn combine(a: f64, u: &StateU, b: f64, v: &StateU) -> Result<StateU> {
    StateU::combine(a, u, b, v)
}
