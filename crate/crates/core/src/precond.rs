//! Feasible preconditioners `M >= T` for the implicit primal systems
//! `T = I + st K*K` and `T_Q = s Q + st K*K`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linops::{
    neg_laplacian, op_norm_estimate, sym_deriv, sym_div, BlockRowOperator, Conv2d, CsrMatrix, DenseCholesky, DenseMatrix, LinearMap, TgvRow, DEFAULT_NORM_ITERS,
};
use crate::spaces::{dot, Layout};

/// The implicit system of the primal update.
#[derive(Clone)]
pub struct LinearSystem {
    sigma: f64,
    tau: f64,
    k: Arc<BlockRowOperator>,
    q: Option<Arc<dyn LinearMap>>,
}

impl LinearSystem {
    /// `T = I + sigma tau K*K`.
    pub fn new(sigma: f64, tau: f64, k: Arc<BlockRowOperator>) -> Result<Self> {
        check_steps(sigma, tau)?;
        Ok(LinearSystem { sigma, tau, k, q: None })
    }

    /// `T_Q = sigma Q + sigma tau K*K`.
    pub fn quadratic(sigma: f64, tau: f64, k: Arc<BlockRowOperator>, q: Arc<dyn LinearMap>) -> Result<Self> {
        check_steps(sigma, tau)?;
        k.domain().check_same(q.domain(), "Q domain")?;
        Ok(LinearSystem { sigma, tau, k, q: Some(q) })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn k(&self) -> &Arc<BlockRowOperator> {
        &self.k
    }

    pub fn q(&self) -> Option<&Arc<dyn LinearMap>> {
        self.q.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.k.domain().total_len()
    }

    /// `out = T x`.
    pub fn apply_t(&self, x: &[f64], out: &mut [f64]) {
        let mut kx = vec![0.0; self.k.codomain().total_len()];
        self.k.forward(x, &mut kx);
        let st = self.sigma * self.tau;
        kx.iter_mut().for_each(|v| *v *= st);
        match &self.q {
            None => out.copy_from_slice(x),
            Some(q) => {
                q.forward(x, out);
                out.iter_mut().for_each(|v| *v *= self.sigma);
            }
        }
        self.k.adjoint_add(&kx, out);
    }

    /// Smallest Rayleigh quotient of `T` over seeded random probes.
    pub fn min_rayleigh(&self, probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let mut tv = vec![0.0; n];
        let mut best = f64::INFINITY;
        for _ in 0..probes {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            self.apply_t(&v, &mut tv);
            best = best.min(dot(&tv, &v) / dot(&v, &v));
        }
        best
    }
}

fn check_steps(sigma: f64, tau: f64) -> Result<()> {
    if !(sigma > 0.0) || !(tau > 0.0) || !sigma.is_finite() || !tau.is_finite() {
        return Err(invalid(format!("step sizes must be positive, got sigma={sigma}, tau={tau}")));
    }
    Ok(())
}

impl LinearMap for LinearSystem {
    fn domain(&self) -> &Arc<Layout> {
        self.k.domain()
    }
    fn codomain(&self) -> &Arc<Layout> {
        self.k.domain()
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        self.apply_t(x, out)
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.apply_t(y, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondKind {
    Richardson,
    SgsRedBlack,
    Exact,
}

/// Grid data of the TGV system and its surrogate
/// `T' = [[(1 + st b) I - st Laplace, st div], [-st grad, (1 + st) I - st Laplace]]`,
/// where `b >= ||K1||^2` (`b = 1` for normalized symmetric blurs).
#[derive(Debug, Clone)]
pub struct TgvSurrogate {
    pub d1: usize,
    pub d2: usize,
    pub blur: Conv2d,
    pub blur_bound: f64,
}

impl TgvSurrogate {
    pub fn new(blur: Conv2d) -> Self {
        let (d1, d2) = blur.dims();
        let est = op_norm_estimate(&blur, DEFAULT_NORM_ITERS, 0);
        let blur_bound = if est <= 1.0 + 1e-9 { 1.0 } else { 1.01 * est * est };
        TgvSurrogate { d1, d2, blur, blur_bound }
    }
}

struct SgsData {
    a: CsrMatrix,
    diag: Vec<f64>,
    order: Vec<usize>,
    pos: Vec<usize>,
    surrogate: TgvSurrogate,
}

enum Imp {
    Scaled(f64),
    Exact { chol: DenseCholesky, m: DenseMatrix },
    Sgs(Box<SgsData>),
}

/// A feasible preconditioner for a [`LinearSystem`].
pub struct Preconditioner {
    kind: PrecondKind,
    system: LinearSystem,
    sweeps: usize,
    imp: Imp,
}

/// `M = (1 + st L^2) I` for `T = I + st K*K` with `L >= ||K||`, or
/// `M = (s ||Q|| + st L^2 + 1e-9) I` for `T_Q`.
pub fn build_richardson(system: LinearSystem, norm_bound: f64) -> Result<Preconditioner> {
    let est = op_norm_estimate(system.k.as_ref(), DEFAULT_NORM_ITERS, 0);
    if norm_bound < est {
        log::warn!("norm bound {norm_bound} is below the estimated operator norm {est}; M may be infeasible");
    }
    let st = system.sigma * system.tau;
    let m = match &system.q {
        None => 1.0 + st * norm_bound * norm_bound,
        Some(q) => {
            let qn = q.norm_hint().unwrap_or_else(|| 1.01 * op_norm_estimate(q.as_ref(), DEFAULT_NORM_ITERS, 0));
            system.sigma * qn + st * norm_bound * norm_bound + 1e-9
        }
    };
    Ok(Preconditioner { kind: PrecondKind::Richardson, system, sweeps: 1, imp: Imp::Scaled(m) })
}

/// Richardson with the norm bound `1.01 * ||K||` estimated by power iteration.
pub fn build_richardson_auto(system: LinearSystem) -> Result<Preconditioner> {
    let est = op_norm_estimate(system.k.as_ref(), DEFAULT_NORM_ITERS, 0);
    build_richardson(system, 1.01 * est)
}

/// `M = T` factored densely; only sensible at test scale.
pub fn build_exact(system: LinearSystem) -> Result<Preconditioner> {
    let m = DenseMatrix::from_map(&system);
    let chol = m.cholesky()?;
    Ok(Preconditioner { kind: PrecondKind::Exact, system, sweeps: 1, imp: Imp::Exact { chol, m } })
}

/// One forward plus one backward pointwise Gauss-Seidel sweep on the TGV
/// surrogate `T'`, unknowns ordered u-red, u-black, w1-red, w1-black,
/// w2-red, w2-black.
pub fn build_sgs_redblack(system: LinearSystem, surrogate: TgvSurrogate) -> Result<Preconditioner> {
    let (d1, d2) = (surrogate.d1, surrogate.d2);
    let expected = TgvRow::primal_layout(d1, d2);
    if system.k.domain().as_ref() != expected.as_ref() {
        return Err(Error::Layout(format!("red-black Gauss-Seidel needs the {d1}x{d2} grid layout (u, w)")));
    }
    if system.q.is_some() {
        return Err(invalid("red-black Gauss-Seidel targets T = I + st K*K"));
    }
    let a = assemble_tgv_surrogate(d1, d2, system.sigma * system.tau, surrogate.blur_bound)?;
    let diag = a.diagonal();
    let n = d1 * d2;
    let mut order = Vec::with_capacity(3 * n);
    for field in 0..3 {
        for color in 0..2 {
            for i in 0..d1 {
                for j in 0..d2 {
                    if (i + j) % 2 == color {
                        order.push(field * n + i * d2 + j);
                    }
                }
            }
        }
    }
    let mut pos = vec![0; 3 * n];
    for (p, &r) in order.iter().enumerate() {
        pos[r] = p;
    }
    let data = SgsData { a, diag, order, pos, surrogate };
    Ok(Preconditioner { kind: PrecondKind::SgsRedBlack, system, sweeps: 1, imp: Imp::Sgs(Box::new(data)) })
}

/// Sparse `T'` over the unknowns `(u, w1, w2)` in natural order.
fn assemble_tgv_surrogate(d1: usize, d2: usize, st: f64, blur_bound: f64) -> Result<CsrMatrix> {
    let n = d1 * d2;
    let idx = |f: usize, i: usize, j: usize| f * n + i * d2 + j;
    let mut t = Vec::with_capacity(3 * n * 9);
    for f in 0..3 {
        let base = if f == 0 { 1.0 + st * blur_bound } else { 1.0 + st };
        for i in 0..d1 {
            for j in 0..d2 {
                let r = idx(f, i, j);
                let mut deg = 0.0;
                let nbrs = [(i > 0).then(|| (i - 1, j)), (i + 1 < d1).then(|| (i + 1, j)), (j > 0).then(|| (i, j - 1)), (j + 1 < d2).then(|| (i, j + 1))];
                for (a, b) in nbrs.into_iter().flatten() {
                    deg += 1.0;
                    t.push((r, idx(f, a, b), -st));
                }
                t.push((r, r, base + st * deg));
                match f {
                    0 => {
                        if i > 0 {
                            t.push((r, idx(1, i - 1, j), -st));
                        }
                        if i + 1 < d1 {
                            t.push((r, idx(1, i, j), st));
                        }
                        if j > 0 {
                            t.push((r, idx(2, i, j - 1), -st));
                        }
                        if j + 1 < d2 {
                            t.push((r, idx(2, i, j), st));
                        }
                    }
                    1 => {
                        if i + 1 < d1 {
                            t.push((r, idx(0, i + 1, j), -st));
                            t.push((r, idx(0, i, j), st));
                        }
                    }
                    _ => {
                        if j + 1 < d2 {
                            t.push((r, idx(0, i, j + 1), -st));
                            t.push((r, idx(0, i, j), st));
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(3 * n, 3 * n, &t)
}

/// `b' = b + (T' - T) x = (b_u + st (b I - K1*K1) u, b_w + st (-Laplace - E*E) w)`.
pub fn adjust_rhs_tgv(b: &[f64], x: &[f64], sigma: f64, tau: f64, surrogate: &TgvSurrogate) -> Result<Vec<f64>> {
    let (d1, d2) = (surrogate.d1, surrogate.d2);
    let n = d1 * d2;
    if b.len() != 3 * n || x.len() != 3 * n {
        return Err(Error::Layout(format!("expected stacked (u, w) of length {}", 3 * n)));
    }
    let st = sigma * tau;
    let mut out = b.to_vec();
    let u = &x[..n];
    let w = &x[n..];
    let mut ku = vec![0.0; n];
    let mut ktku = vec![0.0; n];
    surrogate.blur.forward(u, &mut ku);
    surrogate.blur.adjoint(&ku, &mut ktku);
    for k in 0..n {
        out[k] += st * (surrogate.blur_bound * u[k] - ktku[k]);
    }
    // E*E w = -sym_div(sym_deriv(w))
    let ete = sym_div(&sym_deriv(w, d1, d2), d1, d2);
    let lap1 = neg_laplacian(&w[..n], d1, d2);
    let lap2 = neg_laplacian(&w[n..], d1, d2);
    for k in 0..n {
        out[n + k] += st * (lap1[k] + ete[k]);
        out[2 * n + k] += st * (lap2[k] + ete[n + k]);
    }
    Ok(out)
}

impl Preconditioner {
    pub fn kind(&self) -> PrecondKind {
        self.kind
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Repeats the inner preconditioned iteration `sweeps` times per call.
    pub fn with_sweeps(mut self, sweeps: usize) -> Result<Self> {
        if sweeps == 0 {
            return Err(invalid("sweeps must be at least 1"));
        }
        self.sweeps = sweeps;
        Ok(self)
    }

    /// Scalar of a Richardson preconditioner `M = m I`.
    pub fn richardson_scale(&self) -> Option<f64> {
        match self.imp {
            Imp::Scaled(m) => Some(m),
            _ => None,
        }
    }

    pub fn surrogate(&self) -> Option<&TgvSurrogate> {
        match &self.imp {
            Imp::Sgs(d) => Some(&d.surrogate),
            _ => None,
        }
    }

    /// `out = M v` for a single sweep.
    pub fn apply_m(&self, v: &[f64], out: &mut [f64]) {
        match &self.imp {
            Imp::Scaled(m) => {
                for (o, a) in out.iter_mut().zip(v) {
                    *o = m * a;
                }
            }
            Imp::Exact { m, .. } => m.forward(v, out),
            Imp::Sgs(d) => {
                // (D + L) D^{-1} (D + U) v
                let n = v.len();
                let mut z = vec![0.0; n];
                for r in 0..n {
                    let mut s = d.diag[r] * v[r];
                    for (c, a) in d.a.row(r) {
                        if d.pos[c] > d.pos[r] {
                            s += a * v[c];
                        }
                    }
                    z[r] = s / d.diag[r];
                }
                for r in 0..n {
                    let mut s = d.diag[r] * z[r];
                    for (c, a) in d.a.row(r) {
                        if d.pos[c] < d.pos[r] {
                            s += a * z[c];
                        }
                    }
                    out[r] = s;
                }
            }
        }
    }

    /// `out = M^{-1} r`.
    pub fn solve_m(&self, r: &[f64], out: &mut [f64]) {
        match &self.imp {
            Imp::Scaled(m) => {
                for (o, a) in out.iter_mut().zip(r) {
                    *o = a / m;
                }
            }
            Imp::Exact { chol, .. } => chol.solve(r, out),
            Imp::Sgs(d) => {
                let n = r.len();
                let mut z = vec![0.0; n];
                for &row in &d.order {
                    let mut s = r[row];
                    for (c, a) in d.a.row(row) {
                        if d.pos[c] < d.pos[row] {
                            s -= a * z[c];
                        }
                    }
                    z[row] = s / d.diag[row];
                }
                for &row in d.order.iter().rev() {
                    let mut s = d.diag[row] * z[row];
                    for (c, a) in d.a.row(row) {
                        if d.pos[c] > d.pos[row] {
                            s -= a * out[c];
                        }
                    }
                    out[row] = s / d.diag[row];
                }
            }
        }
    }

    /// `x + M^{-1}(b - T x)`, repeated `sweeps` times. The red-black
    /// preconditioner works on the surrogate system with adjusted right-hand
    /// side, which gives the same update algebraically.
    pub fn step(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for _ in 0..self.sweeps {
            cur = match &self.imp {
                Imp::Sgs(d) => self.step_surrogate(&cur, b, d),
                _ => self.step_t_path(&cur, b),
            };
        }
        cur
    }

    /// One update with the residual formed against `T` itself.
    pub fn step_t_path(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut tx = vec![0.0; n];
        self.system.apply_t(x, &mut tx);
        let r: Vec<f64> = b.iter().zip(&tx).map(|(a, c)| a - c).collect();
        let mut dx = vec![0.0; n];
        self.solve_m(&r, &mut dx);
        x.iter().zip(&dx).map(|(a, c)| a + c).collect()
    }

    fn step_surrogate(&self, x: &[f64], b: &[f64], d: &SgsData) -> Vec<f64> {
        let bp = adjust_rhs_tgv(b, x, self.system.sigma, self.system.tau, &d.surrogate).expect("layout checked at build");
        let n = x.len();
        let mut tx = vec![0.0; n];
        d.a.forward(x, &mut tx);
        let r: Vec<f64> = bp.iter().zip(&tx).map(|(a, c)| a - c).collect();
        let mut dx = vec![0.0; n];
        self.solve_m(&r, &mut dx);
        x.iter().zip(&dx).map(|(a, c)| a + c).collect()
    }

    /// `T'` for the red-black preconditioner.
    pub fn surrogate_matrix(&self) -> Option<&CsrMatrix> {
        match &self.imp {
            Imp::Sgs(d) => Some(&d.a),
            _ => None,
        }
    }
}

/// `x + M^{-1}(b - T x)`.
pub fn precond_step(x: &[f64], b: &[f64], p: &Preconditioner) -> Result<Vec<f64>> {
    let n = p.system.dim();
    if x.len() != n || b.len() != n {
        return Err(Error::Layout(format!("precond_step expects vectors of length {n}")));
    }
    Ok(p.step(x, b))
}

/// `M - T` (that is `N1 - I` in the full variant, `N1` in the quadratic one)
/// as a linear map, used for the iteration weights.
pub struct PrecondGap {
    p: Arc<Preconditioner>,
}

impl PrecondGap {
    pub fn new(p: Arc<Preconditioner>) -> Result<Self> {
        if p.sweeps != 1 {
            return Err(invalid("the weight M - T is only available for single-sweep preconditioners"));
        }
        Ok(PrecondGap { p })
    }
}

impl LinearMap for PrecondGap {
    fn domain(&self) -> &Arc<Layout> {
        self.p.system.k.domain()
    }
    fn codomain(&self) -> &Arc<Layout> {
        self.p.system.k.domain()
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        let mut tx = vec![0.0; x.len()];
        self.p.apply_m(x, out);
        self.p.system.apply_t(x, &mut tx);
        for (o, t) in out.iter_mut().zip(&tx) {
            *o -= t;
        }
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.forward(y, out)
    }
}

/// Statistics of the Rayleigh quotient of `M - T`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub probes: usize,
    pub min: f64,
    pub mean: f64,
    pub symmetry_defect: f64,
    pub pass: bool,
}

/// Samples `<(M - T) v, v> / ||v||^2` over seeded random `v`; passes iff the
/// minimum is at least `-1e-10`.
pub fn check_feasible(p: &Preconditioner, probes: usize, seed: u64) -> FeasibilityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.system.dim();
    let (mut mv, mut tv, mut mu) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    let mut sym: f64 = 0.0;
    for _ in 0..probes.max(1) {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        p.apply_m(&v, &mut mv);
        p.system.apply_t(&v, &mut tv);
        let vv = dot(&v, &v);
        let q = (dot(&mv, &v) - dot(&tv, &v)) / vv;
        min = min.min(q);
        sum += q;
        p.apply_m(&u, &mut mu);
        let (a, b) = (dot(&mv, &u), dot(&mu, &v));
        let scale = dot(&mv, &mv).sqrt() * dot(&u, &u).sqrt() + dot(&mu, &mu).sqrt() * vv.sqrt();
        sym = sym.max((a - b).abs() / scale);
    }
    let probes = probes.max(1);
    FeasibilityReport { probes, min, mean: sum / probes as f64, symmetry_defect: sym, pass: min >= -1e-10 }
}
