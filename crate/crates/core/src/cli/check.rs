//! Invariant checks on a configured problem (`drsplit check`).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{build_instance, resolve_reference};
use crate::error::Result;
use crate::linops::{adjoint_defect, op_norm_estimate, LinearMap, DEFAULT_NORM_ITERS};
use crate::metrics::Evaluator;
use crate::precond::{check_feasible, PrecondKind};
use crate::solvers::{run, Cadence, Solver};
use crate::spaces::Variant;

#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    fn push(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.items.push(CheckItem { name: name.into(), pass, detail: detail.into() });
    }

    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }
}

const ADJOINT_TOL: f64 = 1e-10;
const TPATH_TOL: f64 = 1e-12;
const BREGMAN_SLACK: f64 = 1e-9;

/// Adjoint exactness of every operator row and of `K`, preconditioner
/// feasibility, the reference certificate, nonnegativity of the Bregman
/// distance along a short run and, for red-black Gauss-Seidel, agreement of
/// the two x-update paths.
pub fn check(cfg: &ExperimentConfig, root: &Path) -> Result<CheckReport> {
    let inst = build_instance(cfg)?;
    let prob = &inst.problem;
    let mut rep = CheckReport::default();

    let mut ops: Vec<(String, &dyn LinearMap)> = (0..prob.k.num_rows()).map(|i| (format!("row {i}"), prob.k.row(i).as_ref())).collect();
    ops.push(("K".into(), prob.k.as_ref()));
    for (name, op) in ops {
        let norm = op_norm_estimate(op, DEFAULT_NORM_ITERS, 1);
        let d = if norm == 0.0 { 0.0 } else { adjoint_defect(op, 100, 2, norm) };
        rep.push(format!("adjoint {name}"), d <= ADJOINT_TOL, format!("relative defect {d:.2e}"));
    }

    let alg = cfg.solver.algorithm;
    if alg.is_pdhg() {
        let norm = op_norm_estimate(prob.k.as_ref(), DEFAULT_NORM_ITERS, 1);
        let q = cfg.solver.sigma * cfg.solver.tau * norm * norm;
        rep.push("step sizes", q < 1.0, format!("sigma tau ||K||^2 = {q:.4}"));
    } else {
        let variant = if alg.is_quadratic() { Variant::Quadratic } else { Variant::Full };
        let solver = Solver::new(prob.clone(), variant, cfg.solver.sigma, cfg.solver.tau, cfg.solver.precond)?;
        let p = solver.preconditioner();
        let f = check_feasible(p, 1000, 3);
        rep.push("preconditioner feasibility", f.pass, format!("min Rayleigh(M - T) {:.3e}, symmetry {:.1e}", f.min, f.symmetry_defect));
        if cfg.solver.precond == PrecondKind::SgsRedBlack {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let n = p.system().dim();
            let mut worst: f64 = 0.0;
            for _ in 0..100 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let a = p.step(&x, &b);
                let t = p.step_t_path(&x, &b);
                let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                worst = worst.max(a.iter().zip(&t).fold(0.0f64, |m, (u, v)| m.max((u - v).abs())) / scale);
            }
            rep.push("T / T' update agreement", worst <= TPATH_TOL, format!("max difference {worst:.2e}"));
        }
    }

    match resolve_reference(cfg, &inst, root) {
        Ok(Some(r)) => {
            let c = r.point.certificate;
            rep.push("reference certificate", c <= cfg.reference.tol, format!("{c:.3e} (tolerance {:.1e})", cfg.reference.tol));
            let mut sc = cfg.solver_config(cfg.solver.seeds[0])?;
            sc.epochs = sc.epochs.min(50);
            sc.cadence = Cadence::Every(1);
            let slack = BREGMAN_SLACK * r.point.primal_value.abs().max(1.0);
            let trace = run(prob, &sc, &Evaluator::with_reference(r.point))?;
            let min = trace.records.iter().filter_map(|r| r.bregman).fold(f64::INFINITY, f64::min);
            rep.push("bregman nonnegative", min >= -slack, format!("min {min:.3e} over {} checkpoints", trace.records.len()));
        }
        Ok(None) => rep.push("reference certificate", true, "no reference configured"),
        Err(e) => rep.push("reference certificate", false, e.to_string()),
    }
    Ok(rep)
}
