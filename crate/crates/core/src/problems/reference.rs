use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{primal_value, Provenance, ReferencePoint};
use crate::precond::PrecondKind;
use crate::prox::{smoothed_hinge, smoothed_hinge_deriv, Term};
use crate::solvers::{RelaxationSchedule, SaddleProblem, Solver};
use crate::spaces::Variant;

use super::TinyQp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefMethod {
    Oracle,
    LongRun,
}

/// Settings of [`reference_solution`]. The long run uses over-relaxed PDR
/// with `rho`; `tol` bounds the certificate in both modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefOptions {
    pub sigma: f64,
    pub tau: f64,
    pub precond: PrecondKind,
    pub rho: f64,
    pub budget: usize,
    pub tol: f64,
}

impl Default for RefOptions {
    fn default() -> Self {
        RefOptions { sigma: 1.0, tau: 1.0, precond: PrecondKind::Richardson, rho: 1.9, budget: 1_000_000, tol: 1e-8 }
    }
}

/// `||T u - u||_inf` of one deterministic step of `solver` at the fixed
/// point built from `(x, y)`.
pub fn certificate(solver: &Solver, x: &[f64], y: &[f64]) -> Result<f64> {
    let u = solver.fixed_point(x, y)?;
    solver.fixed_point_residual(&u)
}

struct HingeData {
    rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
    lambda: f64,
    n: f64,
}

fn hinge_data(prob: &SaddleProblem) -> Result<HingeData> {
    let lambda = match prob.f_terms.as_slice() {
        [Term::Ridge { lambda }] => *lambda,
        _ => return Err(invalid("the oracle needs a single ridge primal term")),
    };
    let d = prob.primal.total_len();
    let mut rows = Vec::with_capacity(prob.n());
    let mut labels = Vec::with_capacity(prob.n());
    let mut count = None;
    for (i, t) in prob.g_terms.iter().enumerate() {
        match t {
            Term::HingeConjugate { labels: b, n } if b.len() == 1 && count.map_or(true, |c| c == *n) => {
                count = Some(*n);
                labels.push(b[0]);
                let mut r = vec![0.0; d];
                prob.k.row(i).adjoint(&[1.0], &mut r);
                rows.push(r);
            }
            _ => return Err(invalid("the oracle needs scalar hinge-conjugate dual terms")),
        }
    }
    let n = count.ok_or_else(|| invalid("no dual terms"))? as f64;
    Ok(HingeData { rows, labels, lambda, n })
}

impl HingeData {
    fn margins(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| self.n * r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).collect()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let loss: f64 = self.margins(x).iter().zip(&self.labels).map(|(m, b)| smoothed_hinge(*m, *b)).sum();
        loss / self.n + 0.5 * self.lambda * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = x.iter().map(|v| self.lambda * v).collect();
        for ((r, m), b) in self.rows.iter().zip(self.margins(x)).zip(&self.labels) {
            let c = smoothed_hinge_deriv(m, *b);
            if c != 0.0 {
                g.iter_mut().zip(r).for_each(|(gi, ri)| *gi += c * ri);
            }
        }
        g
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut h = DMatrix::from_diagonal_element(d, d, self.lambda);
        for ((r, m), b) in self.rows.iter().zip(self.margins(x)).zip(&self.labels) {
            let t = b * m;
            if t > 0.0 && t < 1.0 {
                let v = DVector::from_column_slice(r);
                h.ger(self.n, &v, &v, 1.0);
            }
        }
        h
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Damped Newton on the smooth classification primal to `||grad P|| <= 1e-10`;
/// the dual point is `y_i = phi'(a_i^T x)`.
pub fn reference_oracle(prob: &Arc<SaddleProblem>, opts: &RefOptions) -> Result<ReferencePoint> {
    let data = hinge_data(prob)?;
    let d = prob.primal.total_len();
    let mut x = vec![0.0; d];
    let mut g = data.gradient(&x);
    let mut iters = 0;
    while norm(&g) > 1e-10 {
        iters += 1;
        if iters > 200 {
            return Err(Error::Certificate(format!("Newton stalled at gradient norm {:.3e}", norm(&g))));
        }
        let mut h = data.hessian(&x);
        let chol = match h.clone().cholesky() {
            Some(c) => c,
            None => {
                for i in 0..d {
                    h[(i, i)] += 1e-12;
                }
                h.cholesky().ok_or_else(|| invalid("singular Newton system"))?
            }
        };
        let dir = chol.solve(&-DVector::from_column_slice(&g));
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let p0 = data.value(&x);
        let g0 = norm(&g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
            let gt = data.gradient(&xt);
            // near the optimum the value test drowns in rounding; a full step
            // that halves the gradient is accepted as well
            if data.value(&xt) <= p0 + 1e-4 * t * slope || (t == 1.0 && norm(&gt) <= 0.5 * g0) {
                accepted = Some((xt, gt));
                break;
            }
            t *= 0.5;
        }
        let (xn, gn) = accepted.ok_or_else(|| Error::Certificate(format!("line search failed at gradient norm {g0:.3e}")))?;
        x = xn;
        g = gn;
    }
    let y: Vec<f64> = data.margins(&x).iter().zip(&data.labels).map(|(m, b)| smoothed_hinge_deriv(*m, *b)).collect();
    let solver = Solver::new(prob.clone(), Variant::Full, opts.sigma, opts.tau, opts.precond)?;
    let cert = certificate(&solver, &x, &y)?;
    if !(cert <= opts.tol) {
        return Err(Error::Certificate(format!("oracle residual {cert:.3e} above {:.1e}", opts.tol)));
    }
    Ok(ReferencePoint { primal_value: primal_value(prob, &x), x_star: x, y_star: y, provenance: Provenance::Oracle, certificate: cert })
}

/// Over-relaxed PDR until the certificate at the transitional pair drops
/// below `tol`, checked every 50 steps.
pub fn reference_long_run(prob: &Arc<SaddleProblem>, opts: &RefOptions) -> Result<ReferencePoint> {
    let solver = Solver::new(prob.clone(), Variant::Full, opts.sigma, opts.tau, opts.precond)?.with_schedule(RelaxationSchedule::full(opts.rho)?)?;
    let mut it = solver.initial();
    let mut cert = f64::INFINITY;
    for k in 0..opts.budget {
        solver.rpdr_step(&mut it, k)?;
        if (k + 1) % 50 == 0 || k + 1 == opts.budget {
            cert = certificate(&solver, it.x_test.as_slice(), it.y_test.as_slice())?;
            if cert <= opts.tol {
                log::info!("long-run reference certified after {} steps: {cert:.3e}", k + 1);
                let x = it.x_test.as_slice().to_vec();
                return Ok(ReferencePoint {
                    primal_value: primal_value(prob, &x),
                    x_star: x,
                    y_star: it.y_test.as_slice().to_vec(),
                    provenance: Provenance::LongRun,
                    certificate: cert,
                });
            }
        }
    }
    Err(Error::Certificate(format!("residual {cert:.3e} above {:.1e} after {} steps", opts.tol, opts.budget)))
}

pub fn reference_solution(prob: &Arc<SaddleProblem>, method: RefMethod, opts: &RefOptions) -> Result<ReferencePoint> {
    match method {
        RefMethod::Oracle => reference_oracle(prob, opts),
        RefMethod::LongRun => reference_long_run(prob, opts),
    }
}

impl TinyQp {
    /// The KKT saddle point as a certified reference.
    pub fn reference(&self) -> Result<ReferencePoint> {
        let prob = Arc::new(self.problem.clone());
        let solver = Solver::new(prob.clone(), Variant::Full, 1.0, 1.0, PrecondKind::Richardson)?;
        let cert = certificate(&solver, &self.x_star, &self.y_star)?;
        Ok(ReferencePoint {
            x_star: self.x_star.clone(),
            y_star: self.y_star.clone(),
            provenance: Provenance::Oracle,
            primal_value: primal_value(&prob, &self.x_star),
            certificate: cert,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::CsrMatrix;
    use crate::metrics::bregman_h;
    use crate::problems::{
        build_classification, build_tgv_kl, motion_blur_kernel, synth_classification, synth_deblur, tiny_qp, ClassificationSpec, ImagePattern,
    };

    #[test]
    fn strongly_convex_1d_closed_form() {
        // P(x) = phi(2x) + x^2/2 with b = 1: on 0 < 2x < 1 the stationarity
        // condition -2(1 - 2x) + x = 0 gives x = 2/5
        let a = CsrMatrix::from_sorted_rows(&[vec![(0, 2.0)]], 1).unwrap();
        let spec = ClassificationSpec::new(a, vec![1.0], 1.0).unwrap();
        let prob = Arc::new(build_classification(&spec).unwrap());
        let r = reference_oracle(&prob, &RefOptions::default()).unwrap();
        assert!((r.x_star[0] - 0.4).abs() <= 1e-10);
        assert!((r.y_star[0] - -0.2).abs() <= 1e-10);
        assert_eq!(r.provenance, Provenance::Oracle);
    }

    #[test]
    fn tiny_qp_reference_is_certified() {
        let r = tiny_qp().reference().unwrap();
        assert!(r.certificate <= 1e-12, "{}", r.certificate);
        assert!(reference_oracle(&Arc::new(tiny_qp().problem), &RefOptions::default()).is_err());
    }

    #[test]
    fn oracle_and_long_run_agree_on_classification() {
        let spec = synth_classification(20, 5, 0.6, 1e-2, 7).unwrap();
        let prob = Arc::new(build_classification(&spec).unwrap());
        let opts = RefOptions { sigma: 10.0, tau: 0.5, tol: 1e-10, budget: 200_000, ..Default::default() };
        let a = reference_oracle(&prob, &opts).unwrap();
        let b = reference_long_run(&prob, &opts).unwrap();
        assert!((a.primal_value - b.primal_value).abs() <= 1e-6 * a.primal_value.abs());
        let h = bregman_h(&prob, &b.x_star, &b.y_star, &a.x_star, &a.y_star);
        assert!(h >= -1e-9 && h <= 1e-8, "{h}");
    }

    #[test]
    fn long_run_fails_without_budget() {
        let spec = synth_classification(10, 4, 0.5, 1e-2, 1).unwrap();
        let prob = Arc::new(build_classification(&spec).unwrap());
        let opts = RefOptions { budget: 3, ..Default::default() };
        assert!(matches!(reference_long_run(&prob, &opts), Err(Error::Certificate(_))));
    }

    #[test]
    fn deblur_16x16_long_run_certificate() {
        let k = motion_blur_kernel(3, 0.0).unwrap();
        let s = synth_deblur(16, 16, ImagePattern::Shapes, k, 1e-2, 1e-2, None).unwrap();
        let prob = Arc::new(build_tgv_kl(&s.spec).unwrap());
        let opts = RefOptions { sigma: 5.0, tau: 0.1, tol: 1e-8, budget: 1_000_000, ..Default::default() };
        let r = reference_long_run(&prob, &opts).unwrap();
        assert!(r.certificate <= 1e-8);
    }
}
