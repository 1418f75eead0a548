use std::sync::Arc;

use rand::Rng;

use super::{SaddleProblem, SamplingScheme};
use crate::error::{invalid, Result};
use crate::spaces::BlockVector;

/// PDHG/SPDHG state: `z = K* y` and the extrapolated `z_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdhgState {
    pub x: BlockVector,
    pub y: BlockVector,
    pub z: Vec<f64>,
    pub z_bar: Vec<f64>,
}

impl PdhgState {
    pub fn zeros(prob: &SaddleProblem) -> Self {
        let d = prob.primal.total_len();
        PdhgState { x: BlockVector::zeros(prob.primal.clone()), y: BlockVector::zeros(prob.dual.clone()), z: vec![0.0; d], z_bar: vec![0.0; d] }
    }
}

/// Primal-dual hybrid gradient with extrapolation parameter 1 and its
/// stochastic variant. `sigma` is the primal and `tau` the dual step, as in
/// the Douglas-Rachford engines.
pub struct PdhgSolver {
    prob: Arc<SaddleProblem>,
    sigma: f64,
    tau: f64,
    sampling: Option<SamplingScheme>,
}

impl PdhgSolver {
    pub fn new(prob: Arc<SaddleProblem>, sigma: f64, tau: f64) -> Result<Self> {
        if !(sigma > 0.0 && tau > 0.0 && sigma.is_finite() && tau.is_finite()) {
            return Err(invalid("step sizes must be positive"));
        }
        Ok(PdhgSolver { prob, sigma, tau, sampling: None })
    }

    pub fn with_sampling(mut self, sampling: SamplingScheme) -> Result<Self> {
        if sampling.num_indices() != self.prob.n() {
            return Err(invalid("sampling does not cover the dual blocks"));
        }
        self.sampling = Some(sampling);
        Ok(self)
    }

    pub fn problem(&self) -> &Arc<SaddleProblem> {
        &self.prob
    }

    pub fn sampling(&self) -> Option<&SamplingScheme> {
        self.sampling.as_ref()
    }

    pub fn initial(&self) -> PdhgState {
        PdhgState::zeros(&self.prob)
    }

    /// `x = prox_{sigma F}(x - sigma z_bar)`, then for `i` in `blocks`:
    /// `y_i = prox_{tau G_i}(y_i + tau K_i x)`, `z += K_i*(dy_i)` and
    /// `z_bar = z + sum_i K_i*(dy_i)/p_i`.
    fn step_blocks(&self, s: &mut PdhgState, blocks: &[usize], probs: &[f64]) {
        let p = &self.prob;
        let z: Vec<f64> = s.x.as_slice().iter().zip(&s.z_bar).map(|(a, b)| a - self.sigma * b).collect();
        let x = p.prox_f(&z, self.sigma);
        s.x.as_mut_slice().copy_from_slice(&x);
        let d = x.len();
        let mut dz = vec![0.0; d];
        let mut dz_scaled = vec![0.0; d];
        for (&i, &pi) in blocks.iter().zip(probs) {
            let r = p.dual.range(i);
            let m = r.len();
            let mut kx = vec![0.0; m];
            p.k.forward_row(i, &x, &mut kx);
            let yi = &s.y.as_slice()[r.clone()];
            let arg: Vec<f64> = yi.iter().zip(&kx).map(|(a, b)| a + self.tau * b).collect();
            let mut ynew = vec![0.0; m];
            p.prox_g_block(i, &arg, self.tau, &mut ynew);
            let dy: Vec<f64> = ynew.iter().zip(yi).map(|(a, b)| a - b).collect();
            let mut dzi = vec![0.0; d];
            p.k.adjoint_row_add(i, &dy, &mut dzi);
            for j in 0..d {
                dz[j] += dzi[j];
                dz_scaled[j] += dzi[j] / pi;
            }
            s.y.as_mut_slice()[r].copy_from_slice(&ynew);
        }
        for j in 0..d {
            s.z[j] += dz[j];
            s.z_bar[j] = s.z[j] + dz_scaled[j];
        }
    }

    /// Deterministic PDHG: all blocks with `p_i = 1`.
    pub fn pdhg_step(&self, s: &mut PdhgState) {
        let blocks: Vec<usize> = (0..self.prob.n()).collect();
        let ones = vec![1.0; blocks.len()];
        self.step_blocks(s, &blocks, &ones)
    }

    /// SPDHG step updating the dual blocks of set `set`.
    pub fn spdhg_step_with(&self, s: &mut PdhgState, set: usize) -> Result<()> {
        let sc = self.sampling.as_ref().ok_or_else(|| invalid("SPDHG needs a sampling scheme"))?;
        if set >= sc.num_sets() {
            return Err(invalid(format!("index set {set} out of range")));
        }
        let blocks = sc.set(set).to_vec();
        let probs: Vec<f64> = blocks.iter().map(|&i| sc.index_probs()[i]).collect();
        self.step_blocks(s, &blocks, &probs);
        Ok(())
    }

    pub fn spdhg_step<R: Rng + ?Sized>(&self, s: &mut PdhgState, rng: &mut R) -> Result<usize> {
        let sc = self.sampling.as_ref().ok_or_else(|| invalid("SPDHG needs a sampling scheme"))?;
        let set = sc.sample(rng);
        self.spdhg_step_with(s, set)?;
        Ok(set)
    }
}
