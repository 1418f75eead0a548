//! Iteration engines of the preconditioned Douglas-Rachford family and the
//! primal-dual hybrid gradient baselines.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linops::{BlockRowOperator, LinearMap};
use crate::precond::TgvSurrogate;
use crate::prox::{smoothed_hinge, Term};
use crate::spaces::{dot, Layout};

mod dr;
mod pdhg;
mod run;

pub use dr::{Iterate, Solver};
pub use pdhg::{PdhgSolver, PdhgState};
pub use run::{run, run_ensemble, run_steps, run_with_state, transitional, AlgState, Cadence, Engine, SolverConfig};

/// Quadratic-linear primal data `F(x) = <Qx/2 - f, x>`.
#[derive(Clone)]
pub struct QuadraticData {
    pub q: Arc<dyn LinearMap>,
    pub f: Vec<f64>,
}

/// `min_x max_y F(x) + <Kx, y> - sum_i G_i(y_i)` with block-separable `F`
/// and `G`.
#[derive(Clone)]
pub struct SaddleProblem {
    pub name: String,
    pub primal: Arc<Layout>,
    pub dual: Arc<Layout>,
    pub k: Arc<BlockRowOperator>,
    /// One term per primal block.
    pub f_terms: Vec<Term>,
    /// One term per dual block.
    pub g_terms: Vec<Term>,
    pub quadratic: Option<QuadraticData>,
    /// Grid data enabling the red-black Gauss-Seidel preconditioner.
    pub tgv: Option<TgvSurrogate>,
}

impl SaddleProblem {
    pub fn new(name: impl Into<String>, k: Arc<BlockRowOperator>, f_terms: Vec<Term>, g_terms: Vec<Term>) -> Result<Self> {
        let primal = k.domain().clone();
        let dual = k.codomain().clone();
        if f_terms.len() != primal.num_blocks() {
            return Err(invalid(format!("{} primal terms for {} primal blocks", f_terms.len(), primal.num_blocks())));
        }
        if g_terms.len() != k.num_rows() {
            return Err(invalid(format!("{} dual terms for {} operator rows", g_terms.len(), k.num_rows())));
        }
        Ok(SaddleProblem { name: name.into(), primal, dual, k, f_terms, g_terms, quadratic: None, tgv: None })
    }

    /// Attaches `F = <Qx/2 - f, x>`; `Q` must be self-adjoint PSD, checked
    /// on seeded Rayleigh probes.
    pub fn with_quadratic(mut self, q: Arc<dyn LinearMap>, f: Vec<f64>) -> Result<Self> {
        self.primal.check_same(q.domain(), "Q domain")?;
        if f.len() != self.primal.total_len() {
            return Err(Error::Layout("f does not match the primal layout".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = f.len();
        let (mut qv, mut qu) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..20 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            q.forward(&v, &mut qv);
            q.forward(&u, &mut qu);
            let vv = dot(&v, &v);
            if dot(&qv, &v) < -1e-12 * vv {
                return Err(invalid("Q is not positive semidefinite"));
            }
            let scale = 1e-10 * (dot(&qv, &qv) * dot(&u, &u)).sqrt().max(1e-300);
            if (dot(&qv, &u) - dot(&qu, &v)).abs() > scale.max(1e-14) {
                return Err(invalid("Q is not self-adjoint"));
            }
        }
        self.quadratic = Some(QuadraticData { q, f });
        Ok(self)
    }

    pub fn with_tgv(mut self, tgv: TgvSurrogate) -> Self {
        self.tgv = Some(tgv);
        self
    }

    /// Number of dual blocks `n`.
    pub fn n(&self) -> usize {
        self.k.num_rows()
    }

    pub fn kx(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dual.total_len()];
        self.k.forward(x, &mut out);
        out
    }

    pub fn kty(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.primal.total_len()];
        self.k.adjoint(y, &mut out);
        out
    }

    /// `(I + step dF)^{-1} z`, blockwise.
    pub fn prox_f(&self, z: &[f64], step: f64) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        for (b, term) in self.f_terms.iter().enumerate() {
            let r = self.primal.range(b);
            term.prox(&z[r.clone()], step, &mut out[r]);
        }
        out
    }

    pub fn prox_g_block(&self, i: usize, z_i: &[f64], step: f64, out_i: &mut [f64]) {
        self.g_terms[i].prox(z_i, step, out_i)
    }

    pub fn f_value(&self, x: &[f64]) -> f64 {
        self.f_terms.iter().enumerate().map(|(b, t)| t.value(&x[self.primal.range(b)])).sum()
    }

    pub fn g_value(&self, y: &[f64]) -> f64 {
        self.g_terms.iter().enumerate().map(|(i, t)| t.value(&y[self.dual.range(i)])).sum()
    }

    /// `sum_i G_i^*(v_i)`.
    pub fn g_conj_value(&self, v: &[f64]) -> f64 {
        // hinge blocks sharing a sample count are summed before dividing by it
        let mut acc = 0.0;
        let mut hinge: Option<(usize, f64)> = None;
        for (i, t) in self.g_terms.iter().enumerate() {
            let vi = &v[self.dual.range(i)];
            match (t, &mut hinge) {
                (Term::HingeConjugate { labels, n }, h) if h.map_or(true, |(m, _)| m == *n) => {
                    let nf = *n as f64;
                    let s: f64 = vi.iter().zip(labels.iter()).map(|(a, b)| smoothed_hinge(nf * a, *b)).sum();
                    *h = Some((*n, h.map_or(0.0, |(_, s0)| s0) + s));
                }
                _ => acc += t.conjugate(vi),
            }
        }
        if let Some((n, s)) = hinge {
            acc += s / n as f64;
        }
        acc
    }
}

/// Algorithm tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pdr,
    Rpdr,
    Pdrq,
    Rpdrq,
    Spdr,
    Srpdr,
    Spdrq,
    Srpdrq,
    Pdhg,
    Spdhg,
}

impl Algorithm {
    pub fn is_stochastic(self) -> bool {
        matches!(self, Algorithm::Spdr | Algorithm::Srpdr | Algorithm::Spdrq | Algorithm::Srpdrq | Algorithm::Spdhg)
    }

    pub fn is_quadratic(self) -> bool {
        matches!(self, Algorithm::Pdrq | Algorithm::Rpdrq | Algorithm::Spdrq | Algorithm::Srpdrq)
    }

    pub fn is_pdhg(self) -> bool {
        matches!(self, Algorithm::Pdhg | Algorithm::Spdhg)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pdr => "pdr",
            Algorithm::Rpdr => "rpdr",
            Algorithm::Pdrq => "pdrq",
            Algorithm::Rpdrq => "rpdrq",
            Algorithm::Spdr => "spdr",
            Algorithm::Srpdr => "srpdr",
            Algorithm::Spdrq => "spdrq",
            Algorithm::Srpdrq => "srpdrq",
            Algorithm::Pdhg => "pdhg",
            Algorithm::Spdhg => "spdhg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxMode {
    /// `rho`, `rho_x`, `rho_y` all from the schedule.
    Full,
    /// `rho = 1`, only `rho_x`, `rho_y` relaxed.
    Partial,
    /// No relaxation at all.
    None,
}

/// Nondecreasing linear ramp from `start` to `end` over `ramp_iters` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub ramp_iters: usize,
}

impl Ramp {
    pub fn constant(v: f64) -> Self {
        Ramp { start: v, end: v, ramp_iters: 0 }
    }

    pub fn at(&self, k: usize) -> f64 {
        if self.ramp_iters == 0 || k >= self.ramp_iters {
            self.end
        } else {
            self.start + (self.end - self.start) * (k as f64 / self.ramp_iters as f64)
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v < 2.0;
        if !ok(self.start) || !ok(self.end) {
            return Err(invalid(format!("{name} must lie in (0, 2)")));
        }
        if self.start > self.end {
            return Err(invalid(format!("{name} must be nondecreasing")));
        }
        Ok(())
    }
}

/// Relaxation parameters `(rho_k, rho_{k,x}, rho_{k,y})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSchedule {
    pub mode: RelaxMode,
    pub rho: Ramp,
    pub rho_x: Ramp,
    pub rho_y: Ramp,
}

impl RelaxationSchedule {
    pub fn none() -> Self {
        RelaxationSchedule { mode: RelaxMode::None, rho: Ramp::constant(1.0), rho_x: Ramp::constant(1.0), rho_y: Ramp::constant(1.0) }
    }

    /// All three parameters equal to `rho`.
    pub fn full(rho: f64) -> Result<Self> {
        let s = RelaxationSchedule { mode: RelaxMode::Full, rho: Ramp::constant(rho), rho_x: Ramp::constant(rho), rho_y: Ramp::constant(rho) };
        s.validate()?;
        Ok(s)
    }

    /// `rho = 1`, `rho_x = rho_y = rho`.
    pub fn partial(rho: f64) -> Result<Self> {
        let s = RelaxationSchedule { mode: RelaxMode::Partial, rho: Ramp::constant(1.0), rho_x: Ramp::constant(rho), rho_y: Ramp::constant(rho) };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.rho.validate("rho")?;
        self.rho_x.validate("rho_x")?;
        self.rho_y.validate("rho_y")
    }

    /// `(rho_k, rho_{k,x}, rho_{k,y})`.
    pub fn at(&self, k: usize) -> (f64, f64, f64) {
        match self.mode {
            RelaxMode::None => (1.0, 1.0, 1.0),
            RelaxMode::Partial => (1.0, self.rho_x.at(k), self.rho_y.at(k)),
            RelaxMode::Full => (self.rho.at(k), self.rho_x.at(k), self.rho_y.at(k)),
        }
    }

    /// Lower limit `rho_l` over all three sequences.
    pub fn lower(&self) -> f64 {
        let (a, b, c) = self.at(0);
        a.min(b).min(c)
    }
}

/// Index sampling: `P(select set j) = probs[j]`; without explicit sets
/// each dual block is its own set.
#[derive(Debug, Clone)]
pub struct SamplingScheme {
    probs: Vec<f64>,
    sets: Vec<Vec<usize>>,
    index_probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl SamplingScheme {
    pub fn uniform(n: usize) -> Result<Self> {
        SamplingScheme::new(vec![1.0 / n as f64; n])
    }

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sets = (0..probs.len()).map(|i| vec![i]).collect();
        SamplingScheme::with_sets(probs, sets)
    }

    /// Sets must partition `0..n`.
    pub fn with_sets(probs: Vec<f64>, sets: Vec<Vec<usize>>) -> Result<Self> {
        if probs.is_empty() || probs.len() != sets.len() {
            return Err(invalid("need one probability per set"));
        }
        if probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(invalid("probabilities must lie in (0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        let n: usize = sets.iter().map(|s| s.len()).sum();
        let mut index_probs = vec![f64::NAN; n];
        for (j, s) in sets.iter().enumerate() {
            if s.is_empty() {
                return Err(invalid("empty index set"));
            }
            for &i in s {
                if i >= n || !index_probs[i].is_nan() {
                    return Err(invalid("index sets must partition 0..n"));
                }
                index_probs[i] = probs[j];
            }
        }
        let dist = WeightedIndex::new(&probs).map_err(|e| invalid(e.to_string()))?;
        Ok(SamplingScheme { probs, sets, index_probs, dist })
    }

    pub fn num_indices(&self) -> usize {
        self.index_probs.len()
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn set_probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability `p_i` that dual block `i` is updated.
    pub fn index_probs(&self) -> &[f64] {
        &self.index_probs
    }

    /// `min_i p_i`.
    pub fn min_prob(&self) -> f64 {
        self.index_probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn set(&self, j: usize) -> &[usize] {
        &self.sets[j]
    }

    /// Expected number of dual blocks updated per step.
    pub fn expected_set_size(&self) -> f64 {
        self.probs.iter().zip(&self.sets).map(|(p, s)| p * s.len() as f64).sum()
    }

    /// Draws a set index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

/// Draws a set and returns its dual-block indices.
pub fn sample_index<'a, R: Rng + ?Sized>(rng: &mut R, scheme: &'a SamplingScheme) -> &'a [usize] {
    let j = scheme.sample(rng);
    scheme.set(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frequencies_match_probabilities() {
        let s = SamplingScheme::new(vec![0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..100_000).filter(|_| s.sample(&mut rng) == 0).count();
        let f = hits as f64 / 1e5;
        assert!((0.49..=0.51).contains(&f));
        let p = [0.1, 0.2, 0.3, 0.4];
        let s = SamplingScheme::new(p.to_vec()).unwrap();
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[s.sample(&mut rng)] += 1;
        }
        for i in 0..4 {
            let sd = (1e5 * p[i] * (1.0 - p[i])).sqrt();
            assert!((counts[i] as f64 - 1e5 * p[i]).abs() <= 3.0 * sd);
        }
    }

    /// First ten draws of the uniform six-block scheme under seed 5, frozen.
    #[test]
    fn golden_draws_seed_5() {
        let s = SamplingScheme::uniform(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<usize> = (0..10).map(|_| s.sample(&mut rng)).collect();
        assert_eq!(draws, GOLDEN_SEED5);
    }

    const GOLDEN_SEED5: [usize; 10] = [1, 4, 4, 5, 2, 1, 5, 4, 3, 4];

    #[test]
    fn block_sets_returned_whole() {
        let s = SamplingScheme::with_sets(vec![0.5, 0.5], vec![vec![0, 1], vec![2]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let sel = sample_index(&mut rng, &s);
            assert!(sel == [0, 1] || sel == [2]);
        }
        assert_eq!(s.index_probs(), &[0.5, 0.5, 0.5]);
        assert!(SamplingScheme::with_sets(vec![0.5, 0.5], vec![vec![0, 1], vec![1]]).is_err());
    }

    #[test]
    fn invalid_schemes_rejected() {
        assert!(SamplingScheme::new(vec![0.5, 0.6]).is_err());
        assert!(SamplingScheme::new(vec![1.0, 0.0]).is_err());
        assert!(SamplingScheme::new(vec![1.0]).is_ok());
    }

    #[test]
    fn schedules() {
        assert!(RelaxationSchedule::full(2.0).is_err());
        assert!(RelaxationSchedule::full(0.0).is_err());
        let p = RelaxationSchedule::partial(1.9).unwrap();
        assert_eq!(p.at(10), (1.0, 1.9, 1.9));
        assert_eq!(RelaxationSchedule::none().at(3), (1.0, 1.0, 1.0));
        let r = RelaxationSchedule {
            mode: RelaxMode::Full,
            rho: Ramp { start: 1.0, end: 1.9, ramp_iters: 10 },
            rho_x: Ramp::constant(1.5),
            rho_y: Ramp::constant(1.5),
        };
        r.validate().unwrap();
        let mut prev = 0.0;
        for k in 0..20 {
            let v = r.at(k).0;
            assert!(v >= prev && v < 2.0);
            prev = v;
        }
        let bad = RelaxationSchedule { rho: Ramp { start: 1.9, end: 1.0, ramp_iters: 10 }, ..r };
        assert!(bad.validate().is_err());
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::linops::DenseMatrix;
    use nalgebra::DMatrix;

    pub fn toy_qp() -> (SaddleProblem, Vec<f64>, Vec<f64>) {
        let t = crate::problems::tiny_qp();
        (t.problem, t.x_star, t.y_star)
    }

    pub fn toy_qp_without_quadratic() -> (SaddleProblem, Vec<f64>, Vec<f64>) {
        let (mut p, x, y) = toy_qp();
        p.quadratic = None;
        (p, x, y)
    }

    fn zero_k(d: usize) -> Arc<BlockRowOperator> {
        let z = DenseMatrix::new(DMatrix::zeros(1, d));
        Arc::new(BlockRowOperator::new(vec![Arc::new(z)]).unwrap())
    }

    pub fn zero_k_problem() -> SaddleProblem {
        SaddleProblem::new("zero", zero_k(2), vec![Term::boxed(-1.0, 1.0).unwrap()], vec![Term::inf_ball(1.0).unwrap()]).unwrap()
    }

    pub fn zero_k_quadratic() -> SaddleProblem {
        let q = DenseMatrix::identity(2);
        SaddleProblem::new("zero_q", zero_k(2), vec![Term::quadratic(q.clone(), vec![0.0; 2]).unwrap()], vec![Term::inf_ball(1.0).unwrap()])
            .unwrap()
            .with_quadratic(Arc::new(q), vec![0.0; 2])
            .unwrap()
    }

    pub fn dense_k(p: &SaddleProblem) -> DMatrix<f64> {
        DenseMatrix::from_map(p.k.as_ref()).matrix().clone()
    }

    pub fn dense_q(p: &SaddleProblem) -> DMatrix<f64> {
        DenseMatrix::from_map(p.quadratic.as_ref().unwrap().q.as_ref()).matrix().clone()
    }
}
