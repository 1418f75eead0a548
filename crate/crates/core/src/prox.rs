//! Resolvents `(I + t df)^{-1}` and function evaluations for the separable
//! terms appearing in the saddle problems.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::linops::{DenseMatrix, LinearMap};

/// Relative slack used when deciding membership of indicator domains.
const FEAS_TOL: f64 = 1e-10;

fn within(t: f64, lo: f64, hi: f64) -> bool {
    t >= lo - FEAS_TOL * (1.0 + lo.abs()) && t <= hi + FEAS_TOL * (1.0 + hi.abs())
}

fn check_label(b: f64) -> Result<()> {
    if b == 1.0 || b == -1.0 {
        Ok(())
    } else {
        Err(invalid(format!("label {b} is not -1 or +1")))
    }
}

/// Elementwise clamp to `[lo, hi]`.
pub fn prox_box(z: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo <= hi) {
        return Err(invalid(format!("empty box [{lo}, {hi}]")));
    }
    Ok(z.iter().map(|v| v.clamp(lo, hi)).collect())
}

/// `(1/2)(z + 1 - sqrt((z - 1)^2 + 4 tau b))`, the resolvent of the
/// conjugate of the KL data term.
pub fn resolvent_kl_conjugate(z: &[f64], b: &[f64], tau: f64) -> Result<Vec<f64>> {
    if b.iter().any(|v| *v < 0.0) {
        return Err(invalid("KL data must be nonnegative"));
    }
    if !(tau > 0.0) {
        return Err(invalid("step must be positive"));
    }
    Ok(z.iter().zip(b).map(|(&z, &b)| kl_resolvent(z, b, tau)).collect())
}

#[inline]
fn kl_resolvent(z: f64, b: f64, tau: f64) -> f64 {
    if b == 0.0 {
        return z.min(1.0);
    }
    let d = z - 1.0;
    0.5 * (z + 1.0 - (d * d + 4.0 * tau * b).sqrt())
}

/// Elementwise clamp to `[-alpha, alpha]`.
pub fn project_inf_ball(p: &[f64], alpha: f64) -> Vec<f64> {
    p.iter().map(|v| v.clamp(-alpha, alpha)).collect()
}

/// `z / (1 + lambda tau)`, the resolvent of `lambda/2 ||x||^2`.
pub fn prox_ridge(z: &[f64], lambda: f64, tau: f64) -> Vec<f64> {
    let s = 1.0 / (1.0 + lambda * tau);
    z.iter().map(|v| v * s).collect()
}

/// Resolvent of `G_i(t) = (b t + t^2/2 + indicator{b t in [-1, 0]}) / n`.
pub fn resolvent_hinge_conjugate(y: f64, b: f64, n: usize, sigma: f64) -> Result<f64> {
    check_label(b)?;
    Ok(hinge_resolvent(y, b, n as f64, sigma))
}

#[inline]
fn hinge_resolvent(y: f64, b: f64, n: f64, sigma: f64) -> f64 {
    let (l, r) = ((-b).min(0.0), (-b).max(0.0));
    ((n * y - sigma * b) / (n + sigma)).clamp(l, r)
}

/// Smoothed hinge loss.
pub fn eval_smoothed_hinge(z: f64, b: f64) -> Result<f64> {
    check_label(b)?;
    Ok(smoothed_hinge(z, b))
}

#[inline]
pub(crate) fn smoothed_hinge(z: f64, b: f64) -> f64 {
    let m = b * z;
    if m >= 1.0 {
        0.0
    } else if m <= 0.0 {
        0.5 - m
    } else {
        0.5 * (1.0 - m) * (1.0 - m)
    }
}

/// Derivative of the smoothed hinge loss in `z`.
pub(crate) fn smoothed_hinge_deriv(z: f64, b: f64) -> f64 {
    let m = b * z;
    if m >= 1.0 {
        0.0
    } else if m <= 0.0 {
        -b
    } else {
        -b * (1.0 - m)
    }
}

/// `sum_i s_i - b_i log s_i` with `0 log 0 = 0`; infinite outside the domain.
pub fn eval_kl_dual(s: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&s, &b) in s.iter().zip(b) {
        if s < 0.0 || (s == 0.0 && b > 0.0) {
            return f64::INFINITY;
        }
        acc += if b == 0.0 { s } else { s - b * s.ln() };
    }
    acc
}

/// Conjugate of the KL data term, `sum -b + b log(b / (1 - z))` on `z < 1`
/// (zero on `z <= 1` where `b = 0`).
pub fn eval_kl_conjugate(z: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&z, &b) in z.iter().zip(b) {
        if b == 0.0 {
            if !within(z, f64::NEG_INFINITY, 1.0) {
                return f64::INFINITY;
            }
        } else {
            if z >= 1.0 {
                return f64::INFINITY;
            }
            acc += -b + b * (b / (1.0 - z)).ln();
        }
    }
    acc
}

/// Quadratic-linear form `<Qx/2 - f, x>`.
#[derive(Clone)]
pub struct QuadraticForm {
    pub q: Arc<DenseMatrix>,
    pub f: Vec<f64>,
}

impl std::fmt::Debug for QuadraticForm {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("QuadraticForm").field("dim", &self.f.len()).finish()
    }
}

/// A convex, separable-by-block term with a computable resolvent.
#[derive(Debug, Clone)]
pub enum Term {
    Zero,
    /// Indicator of `[lo, hi]` per entry.
    Box {
        lo: f64,
        hi: f64,
    },
    /// Indicator of `|v_j| <= alpha`, i.e. the conjugate of `alpha ||.||_1`.
    InfBall {
        alpha: f64,
    },
    /// `lambda/2 ||x||^2`
    Ridge {
        lambda: f64,
    },
    /// Conjugate of the KL data term with data `b`.
    KlConjugate {
        data: Arc<Vec<f64>>,
    },
    /// `(b_j t_j + t_j^2/2 + indicator{b_j t_j in [-1, 0]}) / n` per entry.
    HingeConjugate {
        labels: Arc<Vec<f64>>,
        n: usize,
    },
    /// `c/2 t^2 - g t` per entry on `[lo, hi]`.
    BoxQuadratic {
        c: f64,
        g: f64,
        lo: f64,
        hi: f64,
    },
    /// Dense `<Qx/2 - f, x>` (not separable).
    Quadratic(QuadraticForm),
}

impl Term {
    pub fn boxed(lo: f64, hi: f64) -> Result<Term> {
        if !(lo <= hi) {
            return Err(invalid(format!("empty box [{lo}, {hi}]")));
        }
        Ok(Term::Box { lo, hi })
    }

    pub fn inf_ball(alpha: f64) -> Result<Term> {
        if !(alpha >= 0.0) {
            return Err(invalid("alpha must be nonnegative"));
        }
        Ok(Term::InfBall { alpha })
    }

    pub fn ridge(lambda: f64) -> Result<Term> {
        if !(lambda >= 0.0) {
            return Err(invalid("lambda must be nonnegative"));
        }
        Ok(Term::Ridge { lambda })
    }

    pub fn kl_conjugate(data: Vec<f64>) -> Result<Term> {
        if data.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("KL data must be nonnegative"));
        }
        Ok(Term::KlConjugate { data: Arc::new(data) })
    }

    pub fn hinge_conjugate(labels: Vec<f64>, n: usize) -> Result<Term> {
        for b in &labels {
            check_label(*b)?;
        }
        if n == 0 {
            return Err(invalid("sample count must be positive"));
        }
        Ok(Term::HingeConjugate { labels: Arc::new(labels), n })
    }

    pub fn box_quadratic(c: f64, g: f64, lo: f64, hi: f64) -> Result<Term> {
        if !(c >= 0.0) || !(lo <= hi) {
            return Err(invalid("box-quadratic needs c >= 0 and lo <= hi"));
        }
        Ok(Term::BoxQuadratic { c, g, lo, hi })
    }

    pub fn quadratic(q: DenseMatrix, f: Vec<f64>) -> Result<Term> {
        if q.nrows() != q.ncols() || q.nrows() != f.len() {
            return Err(invalid("quadratic term needs square Q matching f"));
        }
        Ok(Term::Quadratic(QuadraticForm { q: Arc::new(q), f }))
    }

    /// `out = (I + step d(term))^{-1} z`.
    pub fn prox(&self, z: &[f64], step: f64, out: &mut [f64]) {
        match self {
            Term::Zero => out.copy_from_slice(z),
            Term::Box { lo, hi } => {
                for (o, v) in out.iter_mut().zip(z) {
                    *o = v.clamp(*lo, *hi);
                }
            }
            Term::InfBall { alpha } => {
                for (o, v) in out.iter_mut().zip(z) {
                    *o = v.clamp(-alpha, *alpha);
                }
            }
            Term::Ridge { lambda } => {
                let s = 1.0 / (1.0 + lambda * step);
                for (o, v) in out.iter_mut().zip(z) {
                    *o = v * s;
                }
            }
            Term::KlConjugate { data } => {
                for ((o, v), b) in out.iter_mut().zip(z).zip(data.iter()) {
                    *o = kl_resolvent(*v, *b, step);
                }
            }
            Term::HingeConjugate { labels, n } => {
                for ((o, v), b) in out.iter_mut().zip(z).zip(labels.iter()) {
                    *o = hinge_resolvent(*v, *b, *n as f64, step);
                }
            }
            Term::BoxQuadratic { c, g, lo, hi } => {
                for (o, v) in out.iter_mut().zip(z) {
                    *o = ((v + step * g) / (1.0 + step * c)).clamp(*lo, *hi);
                }
            }
            Term::Quadratic(qf) => {
                let n = qf.f.len();
                let q = qf.q.matrix();
                let a = nalgebra::DMatrix::from_fn(n, n, |i, j| step * q[(i, j)] + if i == j { 1.0 } else { 0.0 });
                let rhs = nalgebra::DVector::from_fn(n, |i, _| z[i] + step * qf.f[i]);
                let sol = nalgebra::Cholesky::new(a).expect("I + tQ is positive definite").solve(&rhs);
                out.copy_from_slice(sol.as_slice());
            }
        }
    }

    /// Function value, `+inf` outside the domain.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Term::Zero => 0.0,
            Term::Box { lo, hi } => indicator(x.iter().all(|v| within(*v, *lo, *hi))),
            Term::InfBall { alpha } => indicator(x.iter().all(|v| within(*v, -alpha, *alpha))),
            Term::Ridge { lambda } => 0.5 * lambda * x.iter().map(|v| v * v).sum::<f64>(),
            Term::KlConjugate { data } => eval_kl_conjugate(x, data),
            Term::HingeConjugate { labels, n } => {
                let mut acc = 0.0;
                for (t, b) in x.iter().zip(labels.iter()) {
                    if !within(b * t, -1.0, 0.0) {
                        return f64::INFINITY;
                    }
                    acc += b * t + 0.5 * t * t;
                }
                acc / *n as f64
            }
            Term::BoxQuadratic { c, g, lo, hi } => {
                let mut acc = 0.0;
                for t in x {
                    if !within(*t, *lo, *hi) {
                        return f64::INFINITY;
                    }
                    acc += 0.5 * c * t * t - g * t;
                }
                acc
            }
            Term::Quadratic(qf) => {
                let mut qx = vec![0.0; x.len()];
                qf.q.forward(x, &mut qx);
                x.iter().zip(&qx).zip(&qf.f).map(|((xi, qi), fi)| xi * (0.5 * qi - fi)).sum()
            }
        }
    }

    /// Fenchel conjugate value, `+inf` where unbounded.
    pub fn conjugate(&self, v: &[f64]) -> f64 {
        match self {
            Term::Zero => indicator(v.iter().all(|a| *a == 0.0)),
            Term::Box { lo, hi } => v.iter().map(|a| (a * lo).max(a * hi)).sum(),
            Term::InfBall { alpha } => alpha * v.iter().map(|a| a.abs()).sum::<f64>(),
            Term::Ridge { lambda } => {
                if *lambda == 0.0 {
                    indicator(v.iter().all(|a| *a == 0.0))
                } else {
                    v.iter().map(|a| a * a).sum::<f64>() / (2.0 * lambda)
                }
            }
            Term::KlConjugate { data } => eval_kl_dual(v, data),
            Term::HingeConjugate { labels, n } => {
                let n = *n as f64;
                v.iter().zip(labels.iter()).map(|(a, b)| smoothed_hinge(n * a, *b) / n).sum()
            }
            Term::BoxQuadratic { .. } | Term::Quadratic(_) => {
                // sup_t <v, t> - f(t) = -inf_t f(t) - <v, t>
                let neg: Vec<f64> = v.iter().map(|a| -a).collect();
                -self.min_linear(&neg, f64::NEG_INFINITY, f64::INFINITY)
            }
        }
    }

    /// `inf { f(t) + <c, t> : lo <= t_j <= hi }`; `+inf` when the box misses
    /// the domain, `-inf` when unbounded below.
    pub fn min_linear(&self, c: &[f64], lo: f64, hi: f64) -> f64 {
        let linear = |c: f64, a: f64, b: f64| -> f64 {
            if a > b {
                f64::INFINITY
            } else if c == 0.0 {
                0.0
            } else if c > 0.0 {
                c * a
            } else {
                c * b
            }
        };
        // minimum of q/2 t^2 + l t over [a, b]
        let quad = |q: f64, l: f64, a: f64, b: f64| -> f64 {
            if a > b {
                return f64::INFINITY;
            }
            if q == 0.0 {
                return linear(l, a, b);
            }
            let t = (-l / q).clamp(a, b);
            0.5 * q * t * t + l * t
        };
        match self {
            Term::Zero => c.iter().map(|ci| linear(*ci, lo, hi)).sum(),
            Term::Box { lo: a, hi: b } => c.iter().map(|ci| linear(*ci, lo.max(*a), hi.min(*b))).sum(),
            Term::InfBall { alpha } => c.iter().map(|ci| linear(*ci, lo.max(-alpha), hi.min(*alpha))).sum(),
            Term::Ridge { lambda } => c.iter().map(|ci| quad(*lambda, *ci, lo, hi)).sum(),
            Term::BoxQuadratic { c: q, g, lo: a, hi: b } => c.iter().map(|ci| quad(*q, ci - g, lo.max(*a), hi.min(*b))).sum(),
            Term::HingeConjugate { labels, n } => {
                let n = *n as f64;
                c.iter()
                    .zip(labels.iter())
                    .map(|(ci, b)| {
                        let (l, r) = ((-b).min(0.0), (-b).max(0.0));
                        quad(1.0 / n, b / n + ci, lo.max(l), hi.min(r))
                    })
                    .sum()
            }
            Term::KlConjugate { data } => {
                let mut acc = 0.0;
                for (ci, b) in c.iter().zip(data.iter()) {
                    let (a, top) = (lo, hi.min(1.0));
                    if a > top || (*b > 0.0 && a >= 1.0) {
                        return f64::INFINITY;
                    }
                    if *b == 0.0 {
                        acc += linear(*ci, a, top);
                        continue;
                    }
                    let t = if *ci < 0.0 { (1.0 + b / ci).clamp(a, top) } else { a };
                    if !t.is_finite() {
                        return f64::NEG_INFINITY;
                    }
                    let t = t.min(1.0 - f64::EPSILON);
                    acc += -b + b * (b / (1.0 - t)).ln() + ci * t;
                }
                acc
            }
            Term::Quadratic(qf) => box_qp_min(qf, c, lo, hi),
        }
    }
}

fn indicator(ok: bool) -> f64 {
    if ok {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `min <Qt/2 - f + c, t>` over `[lo, hi]^d` by cyclic projected coordinate
/// descent (exact for each coordinate).
fn box_qp_min(qf: &QuadraticForm, c: &[f64], lo: f64, hi: f64) -> f64 {
    let q = qf.q.matrix();
    let d = qf.f.len();
    let lin: Vec<f64> = (0..d).map(|i| c[i] - qf.f[i]).collect();
    let mut t: Vec<f64> = vec![0.0f64.clamp(lo, hi); d];
    for _ in 0..10_000 {
        let mut change: f64 = 0.0;
        for i in 0..d {
            let qii = q[(i, i)];
            let off: f64 = (0..d).filter(|&j| j != i).map(|j| q[(i, j)] * t[j]).sum();
            let g = off + lin[i];
            let ti = if qii > 0.0 {
                (-g / qii).clamp(lo, hi)
            } else if g > 0.0 {
                lo
            } else if g < 0.0 {
                hi
            } else {
                t[i]
            };
            if !ti.is_finite() {
                return f64::NEG_INFINITY;
            }
            change = change.max((ti - t[i]).abs());
            t[i] = ti;
        }
        if change <= 1e-15 * (1.0 + t.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            break;
        }
    }
    let mut qt = vec![0.0; d];
    qf.q.forward(&t, &mut qt);
    (0..d).map(|i| t[i] * (0.5 * qt[i] + lin[i])).sum()
}
