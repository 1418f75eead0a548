use std::sync::Arc;

use rand::Rng;

use super::{Algorithm, RelaxationSchedule, SaddleProblem, SamplingScheme};
use crate::error::{invalid, Error, Result};
use crate::linops::LinearMap;
use crate::precond::{build_exact, build_richardson_auto, build_sgs_redblack, LinearSystem, PrecondGap, PrecondKind, Preconditioner};
use crate::spaces::{BlockVector, DiagonalWeight, StateU, Variant, WeightBlock};

/// Douglas-Rachford iterate with its transitional pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub u: StateU,
    pub x_test: BlockVector,
    pub y_test: BlockVector,
}

impl Iterate {
    /// Zero state and zero transitional variables.
    pub fn zeros(prob: &SaddleProblem, variant: Variant) -> Self {
        let u = StateU::zeros(prob.primal.clone(), prob.dual.clone(), variant);
        Iterate { x_test: u.x.clone(), y_test: u.y.clone(), u }
    }

    pub fn from_state(u: StateU) -> Self {
        Iterate { x_test: u.x.clone(), y_test: BlockVector::zeros(u.y.layout().clone()), u }
    }
}

/// A configured Douglas-Rachford engine for one problem: steps, weights and
/// the fixed point associated with a saddle point.
pub struct Solver {
    prob: Arc<SaddleProblem>,
    variant: Variant,
    sigma: f64,
    tau: f64,
    precond: Arc<Preconditioner>,
    schedule: RelaxationSchedule,
    sampling: Option<SamplingScheme>,
}

impl Solver {
    /// Builds the preconditioner for `T` (full) or `T_Q` (quadratic).
    pub fn new(prob: Arc<SaddleProblem>, variant: Variant, sigma: f64, tau: f64, kind: PrecondKind) -> Result<Self> {
        let system = match variant {
            Variant::Full => LinearSystem::new(sigma, tau, prob.k.clone())?,
            Variant::Quadratic => {
                let qd = prob.quadratic.as_ref().ok_or_else(|| invalid("quadratic variant needs quadratic data Q, f"))?;
                LinearSystem::quadratic(sigma, tau, prob.k.clone(), qd.q.clone())?
            }
        };
        let precond = match kind {
            PrecondKind::Richardson => build_richardson_auto(system)?,
            PrecondKind::Exact => build_exact(system)?,
            PrecondKind::SgsRedBlack => {
                let sur = prob.tgv.clone().ok_or_else(|| invalid("red-black Gauss-Seidel needs a TGV problem"))?;
                build_sgs_redblack(system, sur)?
            }
        };
        Solver::with_preconditioner(prob, variant, Arc::new(precond))
    }

    pub fn with_preconditioner(prob: Arc<SaddleProblem>, variant: Variant, precond: Arc<Preconditioner>) -> Result<Self> {
        let sys = precond.system();
        if !Arc::ptr_eq(sys.k(), &prob.k) {
            prob.primal.check_same(sys.k().domain(), "preconditioner domain")?;
        }
        match (variant, sys.q().is_some()) {
            (Variant::Full, true) => return Err(Error::Variant("full variant with a T_Q preconditioner".into())),
            (Variant::Quadratic, false) => return Err(Error::Variant("quadratic variant with a T preconditioner".into())),
            _ => {}
        }
        if variant == Variant::Quadratic && prob.quadratic.is_none() {
            return Err(invalid("quadratic variant needs quadratic data Q, f"));
        }
        Ok(Solver { sigma: sys.sigma(), tau: sys.tau(), prob, variant, precond, schedule: RelaxationSchedule::none(), sampling: None })
    }

    /// Repeats the preconditioned x-update `sweeps` times. Fails if the
    /// preconditioner is shared with another solver.
    pub fn with_sweeps(mut self, sweeps: usize) -> Result<Self> {
        let p = Arc::try_unwrap(self.precond).map_err(|_| invalid("preconditioner is shared"))?;
        self.precond = Arc::new(p.with_sweeps(sweeps)?);
        Ok(self)
    }

    pub fn with_schedule(mut self, schedule: RelaxationSchedule) -> Result<Self> {
        schedule.validate()?;
        self.schedule = schedule;
        Ok(self)
    }

    pub fn with_sampling(mut self, sampling: SamplingScheme) -> Result<Self> {
        if sampling.num_indices() != self.prob.n() {
            return Err(invalid(format!("sampling covers {} blocks, problem has {}", sampling.num_indices(), self.prob.n())));
        }
        self.sampling = Some(sampling);
        Ok(self)
    }

    pub fn problem(&self) -> &Arc<SaddleProblem> {
        &self.prob
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn preconditioner(&self) -> &Arc<Preconditioner> {
        &self.precond
    }

    pub fn schedule(&self) -> &RelaxationSchedule {
        &self.schedule
    }

    pub fn sampling(&self) -> Option<&SamplingScheme> {
        self.sampling.as_ref()
    }

    pub fn initial(&self) -> Iterate {
        Iterate::zeros(&self.prob, self.variant)
    }

    /// `u* = (x*, y*, x* + sigma K* y*, y* - tau K x*)`, without `x_bar` in
    /// the quadratic variant.
    pub fn fixed_point(&self, x_star: &[f64], y_star: &[f64]) -> Result<StateU> {
        let p = &self.prob;
        let x = BlockVector::from_vec(p.primal.clone(), x_star.to_vec())?;
        let y = BlockVector::from_vec(p.dual.clone(), y_star.to_vec())?;
        let kty = p.kty(y_star);
        let kx = p.kx(x_star);
        let y_bar: Vec<f64> = y_star.iter().zip(&kx).map(|(a, b)| a - self.tau * b).collect();
        let y_bar = BlockVector::from_vec(p.dual.clone(), y_bar)?;
        match self.variant {
            Variant::Full => {
                let x_bar: Vec<f64> = x_star.iter().zip(&kty).map(|(a, b)| a + self.sigma * b).collect();
                StateU::full(x, y, BlockVector::from_vec(p.primal.clone(), x_bar)?, y_bar)
            }
            Variant::Quadratic => StateU::quadratic(x, y, y_bar),
        }
    }

    /// `M` of the full variant `diag[(M - T)/sigma, 0, I/sigma, P^{-1}/tau]`
    /// (quadratic: `diag[(M_Q - T_Q)/sigma, 0, -, P^{-1}/tau]`). Without
    /// `probs` the dual weight is `I/tau`.
    pub fn weight(&self, probs: Option<&[f64]>) -> Result<DiagonalWeight> {
        let gap: Arc<dyn LinearMap> = Arc::new(PrecondGap::new(self.precond.clone())?);
        let x = WeightBlock::with_op(1.0 / self.sigma, gap)?;
        let mut y_bar = WeightBlock::scalar(1.0 / self.tau)?;
        if let Some(p) = probs {
            if p.len() != self.prob.n() {
                return Err(invalid("one probability per dual block required"));
            }
            y_bar = y_bar.with_block_scales(p.iter().map(|v| 1.0 / v).collect())?;
        }
        let x_bar = match self.variant {
            Variant::Full => WeightBlock::scalar(1.0 / self.sigma)?,
            Variant::Quadratic => WeightBlock::zero(),
        };
        Ok(DiagonalWeight { x, y: WeightBlock::zero(), x_bar, y_bar })
    }

    /// `M_p`, using the configured sampling (plain `M` without one).
    pub fn weight_p(&self) -> Result<DiagonalWeight> {
        match &self.sampling {
            Some(s) => self.weight(Some(s.index_probs())),
            None => self.weight(None),
        }
    }

    /// `(I_rho^{-1} W, (2I - I_rho) I_rho^{-2} W)` at step `k`.
    pub fn relaxed_weights(&self, w: &DiagonalWeight, k: usize) -> (DiagonalWeight, DiagonalWeight) {
        let (r, rx, ry) = self.schedule.at(k);
        let inv = w.scaled(1.0 / r, 1.0 / r, 1.0 / rx, 1.0 / ry);
        let f = |a: f64| (2.0 - a) / (a * a);
        let descent = w.scaled(f(r), f(r), f(rx), f(ry));
        (inv, descent)
    }

    fn check_variant(&self, it: &Iterate, want: Variant) -> Result<()> {
        if self.variant != want || it.u.variant() != want {
            return Err(Error::Variant(format!("{:?} step on a {:?} solver/state", want, it.u.variant())));
        }
        it.u.x.check_layout(&it.x_test)?;
        it.u.y.check_layout(&it.y_test)
    }

    /// `x_t = x + M^{-1}(b - T x)` with `b = x_bar - sigma K* y_bar`.
    fn primal_full(&self, u: &StateU) -> Vec<f64> {
        let x_bar = u.x_bar.as_ref().expect("variant checked").as_slice();
        let kty = self.prob.kty(u.y_bar.as_slice());
        let b: Vec<f64> = x_bar.iter().zip(&kty).map(|(a, c)| a - self.sigma * c).collect();
        self.precond.step(u.x.as_slice(), &b)
    }

    /// `x_t = x + M_Q^{-1}(b - T_Q x)` with `b = sigma f - sigma K* y_bar`.
    fn primal_quadratic(&self, u: &StateU) -> Vec<f64> {
        let f = &self.prob.quadratic.as_ref().expect("variant checked").f;
        let kty = self.prob.kty(u.y_bar.as_slice());
        let b: Vec<f64> = f.iter().zip(&kty).map(|(a, c)| self.sigma * a - self.sigma * c).collect();
        self.precond.step(u.x.as_slice(), &b)
    }

    fn x_test_of(&self, x_t: &[f64], x_bar: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x_t.iter().zip(x_bar).map(|(a, b)| 2.0 * a - b).collect();
        self.prob.prox_f(&z, self.sigma)
    }

    /// Dual block `i`: `y_t,i = y_bar_i + tau K_i x_t` and
    /// `y_test,i = (I + tau dG_i)^{-1}(2 y_t,i - y_bar_i)`.
    fn dual_block(&self, i: usize, x_t: &[f64], y_bar_i: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = y_bar_i.len();
        let mut kx = vec![0.0; m];
        self.prob.k.forward_row(i, x_t, &mut kx);
        let y_t: Vec<f64> = y_bar_i.iter().zip(&kx).map(|(a, b)| a + self.tau * b).collect();
        let z: Vec<f64> = y_t.iter().zip(y_bar_i).map(|(a, b)| 2.0 * a - b).collect();
        let mut y_test = vec![0.0; m];
        self.prob.prox_g_block(i, &z, self.tau, &mut y_test);
        (y_t, y_test)
    }

    /// One PDR step.
    pub fn pdr_step(&self, it: &mut Iterate) -> Result<()> {
        self.check_variant(it, Variant::Full)?;
        let x_t = self.primal_full(&it.u);
        let x_bar = it.u.x_bar.as_mut().expect("variant checked");
        let x_test = self.x_test_of(&x_t, x_bar.as_slice());
        for (j, v) in x_bar.as_mut_slice().iter_mut().enumerate() {
            *v += x_test[j] - x_t[j];
        }
        it.u.x.as_mut_slice().copy_from_slice(&x_t);
        it.x_test.as_mut_slice().copy_from_slice(&x_test);
        let dual = self.prob.dual.clone();
        for i in 0..self.prob.n() {
            let r = dual.range(i);
            let (y_t, y_test) = self.dual_block(i, &x_t, &it.u.y_bar.as_slice()[r.clone()]);
            for (j, v) in it.u.y_bar.as_mut_slice()[r.clone()].iter_mut().enumerate() {
                *v += y_test[j] - y_t[j];
            }
            it.u.y.as_mut_slice()[r.clone()].copy_from_slice(&y_t);
            it.y_test.as_mut_slice()[r].copy_from_slice(&y_test);
        }
        Ok(())
    }

    /// Relaxed x-part shared by RPDR and SRPDR; returns `x_t`.
    fn relaxed_primal(&self, it: &mut Iterate, rho: f64, rho_x: f64) -> Vec<f64> {
        let x_t = self.primal_full(&it.u);
        let x_bar = it.u.x_bar.as_mut().expect("variant checked");
        let x_test = self.x_test_of(&x_t, x_bar.as_slice());
        for (j, v) in x_bar.as_mut_slice().iter_mut().enumerate() {
            *v += rho_x * (x_test[j] - x_t[j]);
        }
        for (j, v) in it.u.x.as_mut_slice().iter_mut().enumerate() {
            *v = (1.0 - rho) * *v + rho * x_t[j];
        }
        it.x_test.as_mut_slice().copy_from_slice(&x_test);
        x_t
    }

    /// Relaxed update of dual block `i` shared by all relaxed variants.
    fn relaxed_dual_block(&self, it: &mut Iterate, i: usize, x_t: &[f64], rho: f64, rho_y: f64) {
        let r = self.prob.dual.range(i);
        let (y_t, y_test) = self.dual_block(i, x_t, &it.u.y_bar.as_slice()[r.clone()]);
        for (j, v) in it.u.y_bar.as_mut_slice()[r.clone()].iter_mut().enumerate() {
            *v += rho_y * (y_test[j] - y_t[j]);
        }
        for (j, v) in it.u.y.as_mut_slice()[r.clone()].iter_mut().enumerate() {
            *v = (1.0 - rho) * *v + rho * y_t[j];
        }
        it.y_test.as_mut_slice()[r].copy_from_slice(&y_test);
    }

    /// One RPDR step with the schedule values at `k`.
    pub fn rpdr_step(&self, it: &mut Iterate, k: usize) -> Result<()> {
        self.check_variant(it, Variant::Full)?;
        let (rho, rho_x, rho_y) = self.schedule.at(k);
        let x_t = self.relaxed_primal(it, rho, rho_x);
        for i in 0..self.prob.n() {
            self.relaxed_dual_block(it, i, &x_t, rho, rho_y);
        }
        Ok(())
    }

    /// One PDRQ step; `x_test = x_{k+1}`.
    pub fn pdrq_step(&self, it: &mut Iterate) -> Result<()> {
        self.check_variant(it, Variant::Quadratic)?;
        let x_t = self.primal_quadratic(&it.u);
        it.u.x.as_mut_slice().copy_from_slice(&x_t);
        it.x_test.as_mut_slice().copy_from_slice(&x_t);
        let dual = self.prob.dual.clone();
        for i in 0..self.prob.n() {
            let r = dual.range(i);
            let (y_t, y_test) = self.dual_block(i, &x_t, &it.u.y_bar.as_slice()[r.clone()]);
            for (j, v) in it.u.y_bar.as_mut_slice()[r.clone()].iter_mut().enumerate() {
                *v += y_test[j] - y_t[j];
            }
            it.u.y.as_mut_slice()[r.clone()].copy_from_slice(&y_t);
            it.y_test.as_mut_slice()[r].copy_from_slice(&y_test);
        }
        Ok(())
    }

    fn relaxed_primal_quadratic(&self, it: &mut Iterate, rho: f64) -> Vec<f64> {
        let x_t = self.primal_quadratic(&it.u);
        for (j, v) in it.u.x.as_mut_slice().iter_mut().enumerate() {
            *v = (1.0 - rho) * *v + rho * x_t[j];
        }
        it.x_test.as_mut_slice().copy_from_slice(&x_t);
        x_t
    }

    /// One RPDRQ step; the dual test point uses `2 y_t - y_bar`.
    pub fn rpdrq_step(&self, it: &mut Iterate, k: usize) -> Result<()> {
        self.check_variant(it, Variant::Quadratic)?;
        let (rho, _, rho_y) = self.schedule.at(k);
        let x_t = self.relaxed_primal_quadratic(it, rho);
        for i in 0..self.prob.n() {
            self.relaxed_dual_block(it, i, &x_t, rho, rho_y);
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let s = self.sampling.as_ref().ok_or_else(|| invalid("stochastic step needs a sampling scheme"))?;
        Ok(s.sample(rng))
    }

    fn selected(&self, set: usize) -> Result<Vec<usize>> {
        let s = self.sampling.as_ref().ok_or_else(|| invalid("stochastic step needs a sampling scheme"))?;
        if set >= s.num_sets() {
            return Err(invalid(format!("index set {set} out of range")));
        }
        Ok(s.set(set).to_vec())
    }

    /// One SPDR step updating the dual blocks of the given set.
    pub fn spdr_step_with(&self, it: &mut Iterate, set: usize) -> Result<()> {
        self.check_variant(it, Variant::Full)?;
        let sel = self.selected(set)?;
        let x_t = self.primal_full(&it.u);
        let x_bar = it.u.x_bar.as_mut().expect("variant checked");
        let x_test = self.x_test_of(&x_t, x_bar.as_slice());
        for (j, v) in x_bar.as_mut_slice().iter_mut().enumerate() {
            *v += x_test[j] - x_t[j];
        }
        it.u.x.as_mut_slice().copy_from_slice(&x_t);
        it.x_test.as_mut_slice().copy_from_slice(&x_test);
        for i in sel {
            let r = self.prob.dual.range(i);
            let (y_t, y_test) = self.dual_block(i, &x_t, &it.u.y_bar.as_slice()[r.clone()]);
            for (j, v) in it.u.y_bar.as_mut_slice()[r.clone()].iter_mut().enumerate() {
                *v += y_test[j] - y_t[j];
            }
            it.u.y.as_mut_slice()[r.clone()].copy_from_slice(&y_t);
            it.y_test.as_mut_slice()[r].copy_from_slice(&y_test);
        }
        Ok(())
    }

    /// One SPDR step; returns the drawn set.
    pub fn spdr_step<R: Rng + ?Sized>(&self, it: &mut Iterate, rng: &mut R) -> Result<usize> {
        let set = self.draw(rng)?;
        self.spdr_step_with(it, set)?;
        Ok(set)
    }

    /// One SRPDR step updating the dual blocks of the given set.
    pub fn srpdr_step_with(&self, it: &mut Iterate, k: usize, set: usize) -> Result<()> {
        self.check_variant(it, Variant::Full)?;
        let sel = self.selected(set)?;
        let (rho, rho_x, rho_y) = self.schedule.at(k);
        let x_t = self.relaxed_primal(it, rho, rho_x);
        for i in sel {
            self.relaxed_dual_block(it, i, &x_t, rho, rho_y);
        }
        Ok(())
    }

    /// One SRPDR step; returns the drawn set.
    pub fn srpdr_step<R: Rng + ?Sized>(&self, it: &mut Iterate, k: usize, rng: &mut R) -> Result<usize> {
        let set = self.draw(rng)?;
        self.srpdr_step_with(it, k, set)?;
        Ok(set)
    }

    /// One SPDRQ step updating the dual blocks of the given set.
    pub fn spdrq_step_with(&self, it: &mut Iterate, set: usize) -> Result<()> {
        self.check_variant(it, Variant::Quadratic)?;
        let sel = self.selected(set)?;
        let x_t = self.primal_quadratic(&it.u);
        it.u.x.as_mut_slice().copy_from_slice(&x_t);
        it.x_test.as_mut_slice().copy_from_slice(&x_t);
        for i in sel {
            let r = self.prob.dual.range(i);
            let (y_t, y_test) = self.dual_block(i, &x_t, &it.u.y_bar.as_slice()[r.clone()]);
            for (j, v) in it.u.y_bar.as_mut_slice()[r.clone()].iter_mut().enumerate() {
                *v += y_test[j] - y_t[j];
            }
            it.u.y.as_mut_slice()[r.clone()].copy_from_slice(&y_t);
            it.y_test.as_mut_slice()[r].copy_from_slice(&y_test);
        }
        Ok(())
    }

    pub fn spdrq_step<R: Rng + ?Sized>(&self, it: &mut Iterate, rng: &mut R) -> Result<usize> {
        let set = self.draw(rng)?;
        self.spdrq_step_with(it, set)?;
        Ok(set)
    }

    /// One SRPDRQ step updating the dual blocks of the given set.
    pub fn srpdrq_step_with(&self, it: &mut Iterate, k: usize, set: usize) -> Result<()> {
        self.check_variant(it, Variant::Quadratic)?;
        let sel = self.selected(set)?;
        let (rho, _, rho_y) = self.schedule.at(k);
        let x_t = self.relaxed_primal_quadratic(it, rho);
        for i in sel {
            self.relaxed_dual_block(it, i, &x_t, rho, rho_y);
        }
        Ok(())
    }

    pub fn srpdrq_step<R: Rng + ?Sized>(&self, it: &mut Iterate, k: usize, rng: &mut R) -> Result<usize> {
        let set = self.draw(rng)?;
        self.srpdrq_step_with(it, k, set)?;
        Ok(set)
    }

    /// Dispatches one step of `alg` at iteration `k`.
    pub fn step<R: Rng + ?Sized>(&self, alg: Algorithm, it: &mut Iterate, k: usize, rng: &mut R) -> Result<()> {
        match alg {
            Algorithm::Pdr => self.pdr_step(it),
            Algorithm::Rpdr => self.rpdr_step(it, k),
            Algorithm::Pdrq => self.pdrq_step(it),
            Algorithm::Rpdrq => self.rpdrq_step(it, k),
            Algorithm::Spdr => self.spdr_step(it, rng).map(|_| ()),
            Algorithm::Srpdr => self.srpdr_step(it, k, rng).map(|_| ()),
            Algorithm::Spdrq => self.spdrq_step(it, rng).map(|_| ()),
            Algorithm::Srpdrq => self.srpdrq_step(it, k, rng).map(|_| ()),
            Algorithm::Pdhg | Algorithm::Spdhg => Err(invalid("primal-dual hybrid gradient is not a Douglas-Rachford step")),
        }
    }

    /// Fixed-point residual `||T u - u||_inf` of one deterministic step
    /// (PDR or PDRQ).
    pub fn fixed_point_residual(&self, u: &StateU) -> Result<f64> {
        let mut it = Iterate::from_state(u.clone());
        match self.variant {
            Variant::Full => self.pdr_step(&mut it)?,
            Variant::Quadratic => self.pdrq_step(&mut it)?,
        }
        Ok(it.u.sub(u)?.norm_inf())
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests_support::*;
    use super::*;
    use crate::spaces::weighted_norm_sq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixed_point_is_stationary_for_every_step() {
        let (prob, xs, ys) = toy_qp();
        let prob = Arc::new(prob);
        for variant in [Variant::Full, Variant::Quadratic] {
            let s = Solver::new(prob.clone(), variant, 0.7, 1.3, PrecondKind::Richardson)
                .unwrap()
                .with_schedule(RelaxationSchedule::full(1.9).unwrap())
                .unwrap()
                .with_sampling(SamplingScheme::uniform(2).unwrap())
                .unwrap();
            let us = s.fixed_point(&xs, &ys).unwrap();
            let w = s.weight_p().unwrap();
            let algs: &[Algorithm] = match variant {
                Variant::Full => &[Algorithm::Pdr, Algorithm::Rpdr],
                Variant::Quadratic => &[Algorithm::Pdrq, Algorithm::Rpdrq],
            };
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for &a in algs {
                let mut it = Iterate::from_state(us.clone());
                s.step(a, &mut it, 0, &mut rng).unwrap();
                let d = weighted_norm_sq(&it.u.sub(&us).unwrap(), &w).unwrap().sqrt();
                assert!(d <= 1e-9, "{a:?}: {d}");
                assert!(it.u.sub(&us).unwrap().norm_inf() <= 1e-9);
            }
            for set in 0..2 {
                let mut it = Iterate::from_state(us.clone());
                match variant {
                    Variant::Full => s.srpdr_step_with(&mut it, 0, set).unwrap(),
                    Variant::Quadratic => s.srpdrq_step_with(&mut it, 0, set).unwrap(),
                }
                assert!(it.u.sub(&us).unwrap().norm_inf() <= 1e-9);
            }
        }
    }

    #[test]
    fn variant_mismatch_rejected() {
        let (prob, _, _) = toy_qp();
        let prob = Arc::new(prob);
        let s = Solver::new(prob.clone(), Variant::Full, 1.0, 1.0, PrecondKind::Richardson).unwrap();
        let mut it = Iterate::zeros(&prob, Variant::Quadratic);
        assert!(matches!(s.pdr_step(&mut it), Err(Error::Variant(_))));
        let q = Solver::new(prob.clone(), Variant::Quadratic, 1.0, 1.0, PrecondKind::Richardson).unwrap();
        let mut it = Iterate::zeros(&prob, Variant::Full);
        assert!(matches!(q.pdrq_step(&mut it), Err(Error::Variant(_))));
        let (plain, _, _) = toy_qp_without_quadratic();
        assert!(Solver::new(Arc::new(plain), Variant::Quadratic, 1.0, 1.0, PrecondKind::Richardson).is_err());
    }

    /// With K = 0 the x-update returns x_bar and y_t = y_bar.
    #[test]
    fn zero_operator_decouples() {
        let prob = Arc::new(zero_k_problem());
        let s = Solver::new(prob.clone(), Variant::Full, 0.5, 2.0, PrecondKind::Richardson).unwrap();
        let mut it = Iterate::zeros(&prob, Variant::Full);
        let xb = vec![0.25, -2.0];
        let yb = vec![1.5];
        it.u.x_bar.as_mut().unwrap().as_mut_slice().copy_from_slice(&xb);
        it.u.y_bar.as_mut_slice().copy_from_slice(&yb);
        it.u.x.as_mut_slice().copy_from_slice(&[7.0, 8.0]);
        s.pdr_step(&mut it).unwrap();
        assert_eq!(it.u.x.as_slice(), &xb[..]);
        assert_eq!(it.u.y.as_slice(), &yb[..]);
    }

    /// Dense re-implementation of the six PDR lines with the exact solve.
    #[test]
    fn pdr_matches_dense_reference() {
        let (prob, _, _) = toy_qp();
        let prob = Arc::new(prob);
        let (sigma, tau) = (0.8, 0.6);
        let s = Solver::new(prob.clone(), Variant::Full, sigma, tau, PrecondKind::Richardson).unwrap();
        let m = s.preconditioner().richardson_scale().unwrap();
        let kd = dense_k(&prob);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut it = Iterate::zeros(&prob, Variant::Full);
        for _ in 0..5 {
            let (x, xb, yb) = (it.u.x.as_slice().to_vec(), it.u.x_bar().unwrap().as_slice().to_vec(), it.u.y_bar.as_slice().to_vec());
            // x_t = x + (b - T x)/m
            let kty = kd.tr_mul(&nalgebra::DVector::from_vec(yb.clone()));
            let xv = nalgebra::DVector::from_vec(x.clone());
            let t = nalgebra::DMatrix::identity(3, 3) + sigma * tau * kd.transpose() * &kd;
            let b = nalgebra::DVector::from_vec(xb.clone()) - sigma * kty;
            let xt = &xv + (b - &t * &xv) / m;
            let yt = nalgebra::DVector::from_vec(yb.clone()) + tau * &kd * &xt;
            let zx: Vec<f64> = (0..3).map(|j| 2.0 * xt[j] - xb[j]).collect();
            let xtest = prob.prox_f(&zx, sigma);
            let mut ytest = vec![0.0; 2];
            for i in 0..2 {
                prob.prox_g_block(i, &[2.0 * yt[i] - yb[i]], tau, &mut ytest[i..i + 1]);
            }
            s.pdr_step(&mut it).unwrap();
            for j in 0..3 {
                assert!((it.u.x.as_slice()[j] - xt[j]).abs() <= 1e-12);
                assert!((it.x_test.as_slice()[j] - xtest[j]).abs() <= 1e-12);
                assert!((it.u.x_bar().unwrap().as_slice()[j] - (xb[j] + xtest[j] - xt[j])).abs() <= 1e-12);
            }
            for i in 0..2 {
                assert!((it.u.y.as_slice()[i] - yt[i]).abs() <= 1e-12);
                assert!((it.y_test.as_slice()[i] - ytest[i]).abs() <= 1e-12);
                assert!((it.u.y_bar.as_slice()[i] - (yb[i] + ytest[i] - yt[i])).abs() <= 1e-12);
            }
            // perturb to leave the trivial path
            for v in it.u.y_bar.as_mut_slice() {
                *v += rng.gen_range(-0.1..0.1);
            }
        }
    }

    /// Dense re-implementation of the four PDRQ lines.
    #[test]
    fn pdrq_matches_dense_reference() {
        let (prob, _, _) = toy_qp();
        let prob = Arc::new(prob);
        let (sigma, tau) = (0.9, 0.4);
        let s = Solver::new(prob.clone(), Variant::Quadratic, sigma, tau, PrecondKind::Exact).unwrap();
        let kd = dense_k(&prob);
        let qd = dense_q(&prob);
        let f = nalgebra::DVector::from_vec(prob.quadratic.as_ref().unwrap().f.clone());
        let mut it = Iterate::zeros(&prob, Variant::Quadratic);
        for _ in 0..5 {
            let yb = nalgebra::DVector::from_vec(it.u.y_bar.as_slice().to_vec());
            let t = sigma * &qd + sigma * tau * kd.transpose() * &kd;
            let b = sigma * &f - sigma * kd.tr_mul(&yb);
            let xt = t.clone().lu().solve(&b).unwrap();
            let yt = &yb + tau * &kd * &xt;
            let mut ytest = vec![0.0; 2];
            for i in 0..2 {
                prob.prox_g_block(i, &[2.0 * yt[i] - yb[i]], tau, &mut ytest[i..i + 1]);
            }
            s.pdrq_step(&mut it).unwrap();
            for j in 0..3 {
                assert!((it.u.x.as_slice()[j] - xt[j]).abs() <= 1e-12);
            }
            for i in 0..2 {
                assert!((it.u.y.as_slice()[i] - yt[i]).abs() <= 1e-12);
                assert!((it.u.y_bar.as_slice()[i] - (yb[i] + ytest[i] - yt[i])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn pdrq_zero_data_stays_zero() {
        let prob = Arc::new(zero_k_quadratic());
        let s = Solver::new(prob.clone(), Variant::Quadratic, 1.0, 1.0, PrecondKind::Richardson).unwrap();
        let mut it = Iterate::zeros(&prob, Variant::Quadratic);
        for _ in 0..10 {
            s.pdrq_step(&mut it).unwrap();
        }
        assert_eq!(it.u.norm_inf(), 0.0);
    }

    /// Polarization identity with the PSD weight.
    #[test]
    fn polarization_identity_holds() {
        let (prob, xs, ys) = toy_qp();
        let prob = Arc::new(prob);
        let s = Solver::new(prob.clone(), Variant::Full, 0.7, 1.3, PrecondKind::Richardson).unwrap();
        let us = s.fixed_point(&xs, &ys).unwrap();
        let w = s.weight(None).unwrap();
        let mut it = s.initial();
        for _ in 0..50 {
            let prev = it.u.clone();
            s.pdr_step(&mut it).unwrap();
            let a = prev.sub(&it.u).unwrap();
            let b = it.u.sub(&us).unwrap();
            let lhs = crate::spaces::weighted_inner(&a, &b, &w).unwrap();
            let rhs = 0.5 * (weighted_norm_sq(&prev.sub(&us).unwrap(), &w).unwrap() - weighted_norm_sq(&b, &w).unwrap() - weighted_norm_sq(&a, &w).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10);
        }
    }
}
