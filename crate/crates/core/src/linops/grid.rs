//! Finite-difference operators on a `d1 x d2` grid stored row-major
//! (`idx = i * d2 + j`). `x` runs along `i`, `y` along `j`.

use std::sync::Arc;

use super::{Conv2d, LinearMap};
use crate::spaces::Layout;

/// `out += c * dx+ u`, forward difference along `i`, zero on the last row.
pub(crate) fn dxp_acc(u: &[f64], out: &mut [f64], d1: usize, d2: usize, c: f64) {
    for i in 0..d1.saturating_sub(1) {
        let r = i * d2;
        for j in 0..d2 {
            out[r + j] += c * (u[r + d2 + j] - u[r + j]);
        }
    }
}

/// `out += c * (dx+)^T p`.
pub(crate) fn dxp_t_acc(p: &[f64], out: &mut [f64], d1: usize, d2: usize, c: f64) {
    for i in 0..d1.saturating_sub(1) {
        let r = i * d2;
        for j in 0..d2 {
            let v = c * p[r + j];
            out[r + d2 + j] += v;
            out[r + j] -= v;
        }
    }
}

/// `out += c * dy+ u`, forward difference along `j`, zero on the last column.
pub(crate) fn dyp_acc(u: &[f64], out: &mut [f64], d1: usize, d2: usize, c: f64) {
    for i in 0..d1 {
        let r = i * d2;
        for j in 0..d2.saturating_sub(1) {
            out[r + j] += c * (u[r + j + 1] - u[r + j]);
        }
    }
}

/// `out += c * (dy+)^T p`.
pub(crate) fn dyp_t_acc(p: &[f64], out: &mut [f64], d1: usize, d2: usize, c: f64) {
    for i in 0..d1 {
        let r = i * d2;
        for j in 0..d2.saturating_sub(1) {
            let v = c * p[r + j];
            out[r + j + 1] += v;
            out[r + j] -= v;
        }
    }
}

/// Discrete gradient `(dx+ u, dy+ u)` stored as `[2, d1, d2]`.
pub fn grad2d(u: &[f64], d1: usize, d2: usize) -> Vec<f64> {
    let n = d1 * d2;
    let mut out = vec![0.0; 2 * n];
    let (px, py) = out.split_at_mut(n);
    dxp_acc(u, px, d1, d2, 1.0);
    dyp_acc(u, py, d1, d2, 1.0);
    out
}

/// Divergence, the exact negative adjoint of [`grad2d`].
pub fn div2d(p: &[f64], d1: usize, d2: usize) -> Vec<f64> {
    let n = d1 * d2;
    let mut out = vec![0.0; n];
    dxp_t_acc(&p[..n], &mut out, d1, d2, -1.0);
    dyp_t_acc(&p[n..], &mut out, d1, d2, -1.0);
    out
}

/// `-Laplace u = grad^T grad u` with the Neumann boundary of [`grad2d`].
pub fn neg_laplacian(u: &[f64], d1: usize, d2: usize) -> Vec<f64> {
    let g = grad2d(u, d1, d2);
    let d = div2d(&g, d1, d2);
    d.into_iter().map(|v| -v).collect()
}

fn sym_deriv_acc(w: &[f64], out: &mut [f64], d1: usize, d2: usize) {
    let n = d1 * d2;
    let (w1, w2) = w.split_at(n);
    let (q1, rest) = out.split_at_mut(n);
    let (q2, rest) = rest.split_at_mut(n);
    let (q3, q4) = rest.split_at_mut(n);
    dxp_acc(w1, q1, d1, d2, 1.0);
    dyp_acc(w2, q2, d1, d2, 1.0);
    dyp_acc(w1, q3, d1, d2, 0.5);
    dxp_acc(w2, q3, d1, d2, 0.5);
    q4.copy_from_slice(q3);
}

fn sym_deriv_t_acc(q: &[f64], out: &mut [f64], d1: usize, d2: usize) {
    let n = d1 * d2;
    let (w1, w2) = out.split_at_mut(n);
    let (q1, q2, q3, q4) = (&q[..n], &q[n..2 * n], &q[2 * n..3 * n], &q[3 * n..]);
    dxp_t_acc(q1, w1, d1, d2, 1.0);
    dyp_t_acc(q3, w1, d1, d2, 0.5);
    dyp_t_acc(q4, w1, d1, d2, 0.5);
    dyp_t_acc(q2, w2, d1, d2, 1.0);
    dxp_t_acc(q3, w2, d1, d2, 0.5);
    dxp_t_acc(q4, w2, d1, d2, 0.5);
}

/// Symmetrized derivative `E w = (dx+ w1, dy+ w2, (dy+ w1 + dx+ w2)/2, same)`
/// stored as `[4, d1, d2]`.
pub fn sym_deriv(w: &[f64], d1: usize, d2: usize) -> Vec<f64> {
    let mut out = vec![0.0; 4 * d1 * d2];
    sym_deriv_acc(w, &mut out, d1, d2);
    out
}

/// `div q = -E^* q`.
pub fn sym_div(q: &[f64], d1: usize, d2: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * d1 * d2];
    sym_deriv_t_acc(q, &mut out, d1, d2);
    out.iter_mut().for_each(|v| *v = -*v);
    out
}

/// Gradient as a [`LinearMap`] from `[d1, d2]` to `[2, d1, d2]`.
#[derive(Debug, Clone)]
pub struct Grad2d {
    d1: usize,
    d2: usize,
    domain: Arc<Layout>,
    codomain: Arc<Layout>,
}

impl Grad2d {
    pub fn new(d1: usize, d2: usize) -> Self {
        Grad2d { d1, d2, domain: Arc::new(Layout::new(vec![vec![d1, d2]])), codomain: Arc::new(Layout::new(vec![vec![2, d1, d2]])) }
    }
}

impl LinearMap for Grad2d {
    fn domain(&self) -> &Arc<Layout> {
        &self.domain
    }
    fn codomain(&self) -> &Arc<Layout> {
        &self.codomain
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let n = self.d1 * self.d2;
        let (px, py) = out.split_at_mut(n);
        dxp_acc(x, px, self.d1, self.d2, 1.0);
        dyp_acc(x, py, self.d1, self.d2, 1.0);
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.adjoint_add(y, out)
    }
    fn adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        let n = self.d1 * self.d2;
        dxp_t_acc(&y[..n], out, self.d1, self.d2, 1.0);
        dyp_t_acc(&y[n..], out, self.d1, self.d2, 1.0);
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(8f64.sqrt())
    }
}

/// Symmetrized derivative as a [`LinearMap`] from `[2, d1, d2]` to `[4, d1, d2]`.
#[derive(Debug, Clone)]
pub struct SymDeriv {
    d1: usize,
    d2: usize,
    domain: Arc<Layout>,
    codomain: Arc<Layout>,
}

impl SymDeriv {
    pub fn new(d1: usize, d2: usize) -> Self {
        SymDeriv { d1, d2, domain: Arc::new(Layout::new(vec![vec![2, d1, d2]])), codomain: Arc::new(Layout::new(vec![vec![4, d1, d2]])) }
    }
}

impl LinearMap for SymDeriv {
    fn domain(&self) -> &Arc<Layout> {
        &self.domain
    }
    fn codomain(&self) -> &Arc<Layout> {
        &self.codomain
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        sym_deriv_acc(x, out, self.d1, self.d2);
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        sym_deriv_t_acc(y, out, self.d1, self.d2);
    }
    fn adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        sym_deriv_t_acc(y, out, self.d1, self.d2);
    }
}

/// Which row of the TGV block operator a [`TgvRow`] realizes.
#[derive(Debug, Clone)]
pub enum TgvRowKind {
    /// `s = K1 u`
    Blur(Conv2d),
    /// `p1 = dx+ u - w1`
    P1,
    /// `p2 = dy+ u - w2`
    P2,
    /// `q1 = dx+ w1`
    Q1,
    /// `q2 = dy+ w2`
    Q2,
    /// `(q3, q4)`, both `(dy+ w1 + dx+ w2) / 2`
    Q34,
}

/// One dual row of the TGV saddle operator acting on the primal `(u, w)`,
/// laid out as blocks `[d1, d2]` and `[2, d1, d2]`.
#[derive(Debug, Clone)]
pub struct TgvRow {
    kind: TgvRowKind,
    d1: usize,
    d2: usize,
    domain: Arc<Layout>,
    codomain: Arc<Layout>,
}

impl TgvRow {
    pub fn new(kind: TgvRowKind, domain: Arc<Layout>) -> Self {
        let shape = domain.block_shape(0);
        let (d1, d2) = (shape[0], shape[1]);
        let codomain = match kind {
            TgvRowKind::Q34 => vec![2, d1, d2],
            _ => vec![d1, d2],
        };
        TgvRow { kind, d1, d2, domain, codomain: Arc::new(Layout::new(vec![codomain])) }
    }

    /// The primal layout `[[d1, d2], [2, d1, d2]]`.
    pub fn primal_layout(d1: usize, d2: usize) -> Arc<Layout> {
        Arc::new(Layout::new(vec![vec![d1, d2], vec![2, d1, d2]]))
    }

    pub fn kind(&self) -> &TgvRowKind {
        &self.kind
    }
}

impl LinearMap for TgvRow {
    fn domain(&self) -> &Arc<Layout> {
        &self.domain
    }
    fn codomain(&self) -> &Arc<Layout> {
        &self.codomain
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        let (d1, d2) = (self.d1, self.d2);
        let n = d1 * d2;
        let (u, w1, w2) = (&x[..n], &x[n..2 * n], &x[2 * n..3 * n]);
        match &self.kind {
            TgvRowKind::Blur(k) => k.forward(u, out),
            TgvRowKind::P1 => {
                for (o, v) in out.iter_mut().zip(w1) {
                    *o = -v;
                }
                dxp_acc(u, out, d1, d2, 1.0);
            }
            TgvRowKind::P2 => {
                for (o, v) in out.iter_mut().zip(w2) {
                    *o = -v;
                }
                dyp_acc(u, out, d1, d2, 1.0);
            }
            TgvRowKind::Q1 => {
                out.iter_mut().for_each(|v| *v = 0.0);
                dxp_acc(w1, out, d1, d2, 1.0);
            }
            TgvRowKind::Q2 => {
                out.iter_mut().for_each(|v| *v = 0.0);
                dyp_acc(w2, out, d1, d2, 1.0);
            }
            TgvRowKind::Q34 => {
                let (q3, q4) = out.split_at_mut(n);
                q3.iter_mut().for_each(|v| *v = 0.0);
                dyp_acc(w1, q3, d1, d2, 0.5);
                dxp_acc(w2, q3, d1, d2, 0.5);
                q4.copy_from_slice(q3);
            }
        }
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.adjoint_add(y, out)
    }
    fn adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        let (d1, d2) = (self.d1, self.d2);
        let n = d1 * d2;
        let (u, w) = out.split_at_mut(n);
        let (w1, w2) = w.split_at_mut(n);
        match &self.kind {
            TgvRowKind::Blur(k) => k.adjoint_add(y, u),
            TgvRowKind::P1 => {
                dxp_t_acc(y, u, d1, d2, 1.0);
                for (o, v) in w1.iter_mut().zip(y) {
                    *o -= v;
                }
            }
            TgvRowKind::P2 => {
                dyp_t_acc(y, u, d1, d2, 1.0);
                for (o, v) in w2.iter_mut().zip(y) {
                    *o -= v;
                }
            }
            TgvRowKind::Q1 => dxp_t_acc(y, w1, d1, d2, 1.0),
            TgvRowKind::Q2 => dyp_t_acc(y, w2, d1, d2, 1.0),
            TgvRowKind::Q34 => {
                let (q3, q4) = y.split_at(n);
                dyp_t_acc(q3, w1, d1, d2, 0.5);
                dyp_t_acc(q4, w1, d1, d2, 0.5);
                dxp_t_acc(q3, w2, d1, d2, 0.5);
                dxp_t_acc(q4, w2, d1, d2, 0.5);
            }
        }
    }
}
