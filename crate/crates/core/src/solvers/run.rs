use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Algorithm, Iterate, PdhgSolver, PdhgState, RelaxationSchedule, SaddleProblem, SamplingScheme, Solver};
use crate::error::{invalid, Result};
use crate::metrics::{Checkpoint, ErgodicAverage, Evaluator, RunTrace};
use crate::precond::PrecondKind;
use crate::spaces::{weighted_norm_sq, DiagonalWeight, StateU, Variant};

/// Which checkpoints (in epochs) receive a trace record. The initial state
/// and the final epoch are always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Cadence {
    /// Every `m` epochs.
    Every(usize),
    /// About `m` logarithmically spaced epochs.
    Log(usize),
}

impl Cadence {
    /// Sorted, distinct checkpoint epochs in `1..=epochs`.
    pub fn epochs(&self, epochs: usize) -> Vec<usize> {
        let mut v: Vec<usize> = match *self {
            Cadence::Every(m) => (1..=epochs).filter(|e| e % m.max(1) == 0).collect(),
            Cadence::Log(m) => {
                let m = m.max(2);
                let top = (epochs.max(1) as f64).ln();
                (0..m).map(|i| (top * i as f64 / (m - 1) as f64).exp().round() as usize).collect()
            }
        };
        v.push(epochs);
        v.retain(|&e| e >= 1 && e <= epochs);
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Everything needed to run one algorithm on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub sigma: f64,
    pub tau: f64,
    pub precond: PrecondKind,
    pub sweeps: usize,
    pub schedule: RelaxationSchedule,
    /// Per-set probabilities; uniform singletons when absent.
    pub probs: Option<Vec<f64>>,
    pub sets: Option<Vec<Vec<usize>>>,
    pub seed: u64,
    pub epochs: usize,
    pub cadence: Cadence,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, sigma: f64, tau: f64) -> Self {
        SolverConfig {
            algorithm,
            sigma,
            tau,
            precond: PrecondKind::Richardson,
            sweeps: 1,
            schedule: RelaxationSchedule::none(),
            probs: None,
            sets: None,
            seed: 5,
            epochs: 100,
            cadence: Cadence::Log(30),
        }
    }

    pub fn sampling(&self, n: usize) -> Result<SamplingScheme> {
        match (&self.probs, &self.sets) {
            (None, None) => SamplingScheme::uniform(n),
            (Some(p), None) => SamplingScheme::new(p.clone()),
            (p, Some(s)) => {
                let p = p.clone().unwrap_or_else(|| vec![1.0 / s.len() as f64; s.len()]);
                SamplingScheme::with_sets(p, s.clone())
            }
        }
    }
}

/// The engine behind a configuration.
pub enum Engine {
    Dr(Solver),
    Pdhg(PdhgSolver),
}

/// Current iterate of either engine family.
#[derive(Debug, Clone, PartialEq)]
pub enum AlgState {
    Dr(Iterate),
    Pdhg(PdhgState),
}

impl Engine {
    pub fn build(prob: Arc<SaddleProblem>, cfg: &SolverConfig) -> Result<Engine> {
        let alg = cfg.algorithm;
        if alg.is_pdhg() {
            let mut s = PdhgSolver::new(prob.clone(), cfg.sigma, cfg.tau)?;
            if alg == Algorithm::Spdhg {
                s = s.with_sampling(cfg.sampling(prob.n())?)?;
            }
            return Ok(Engine::Pdhg(s));
        }
        let variant = if alg.is_quadratic() { Variant::Quadratic } else { Variant::Full };
        let mut s = Solver::new(prob.clone(), variant, cfg.sigma, cfg.tau, cfg.precond)?;
        if cfg.sweeps != 1 {
            s = s.with_sweeps(cfg.sweeps)?;
        }
        let relaxed = matches!(alg, Algorithm::Rpdr | Algorithm::Rpdrq | Algorithm::Srpdr | Algorithm::Srpdrq);
        if relaxed {
            s = s.with_schedule(cfg.schedule)?;
        }
        if alg.is_stochastic() {
            s = s.with_sampling(cfg.sampling(prob.n())?)?;
        }
        Ok(Engine::Dr(s))
    }

    pub fn initial(&self) -> AlgState {
        match self {
            Engine::Dr(s) => AlgState::Dr(s.initial()),
            Engine::Pdhg(s) => AlgState::Pdhg(s.initial()),
        }
    }

    pub fn step(&self, alg: Algorithm, st: &mut AlgState, k: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        match (self, st) {
            (Engine::Dr(s), AlgState::Dr(it)) => s.step(alg, it, k, rng),
            (Engine::Pdhg(s), AlgState::Pdhg(ps)) => {
                if alg == Algorithm::Spdhg {
                    s.spdhg_step(ps, rng).map(|_| ())
                } else {
                    s.pdhg_step(ps);
                    Ok(())
                }
            }
            _ => Err(invalid("engine and state do not match")),
        }
    }

    /// Steps per epoch: `n / E|S|` for stochastic algorithms, else 1.
    pub fn steps_per_epoch(&self, alg: Algorithm) -> usize {
        let sampling = match self {
            Engine::Dr(s) => s.sampling(),
            Engine::Pdhg(s) => s.sampling(),
        };
        match sampling {
            Some(sc) if alg.is_stochastic() => ((sc.num_indices() as f64 / sc.expected_set_size()).round() as usize).max(1),
            _ => 1,
        }
    }
}

/// Transitional pair `(x_test, y_test)` of a DR iterate, `(x, y)` for PDHG.
pub fn transitional(st: &AlgState) -> (&[f64], &[f64]) {
    match st {
        AlgState::Dr(it) => (it.x_test.as_slice(), it.y_test.as_slice()),
        AlgState::Pdhg(ps) => (ps.x.as_slice(), ps.y.as_slice()),
    }
}

fn state_point(st: &AlgState) -> (&[f64], &[f64]) {
    match st {
        AlgState::Dr(it) => (it.u.x.as_slice(), it.u.y.as_slice()),
        AlgState::Pdhg(ps) => (ps.x.as_slice(), ps.y.as_slice()),
    }
}

/// Runs `cfg` on `prob` and records checkpoints. The ergodic average runs
/// over the transitional points produced by every step; the initial record
/// uses the initial point.
pub fn run(prob: &Arc<SaddleProblem>, cfg: &SolverConfig, eval: &Evaluator) -> Result<RunTrace> {
    run_with_state(prob, cfg, eval).map(|(t, _)| t)
}

/// [`run`] that also returns the final iterate.
pub fn run_with_state(prob: &Arc<SaddleProblem>, cfg: &SolverConfig, eval: &Evaluator) -> Result<(RunTrace, AlgState)> {
    let engine = Engine::build(prob.clone(), cfg)?;
    let alg = cfg.algorithm;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut st = engine.initial();
    let spe = engine.steps_per_epoch(alg);

    // fixed point and weight for the M_p distance
    let mp: Option<(StateU, DiagonalWeight)> = match (&engine, &eval.reference) {
        (Engine::Dr(s), Some(r)) if cfg.sweeps == 1 => Some((s.fixed_point(&r.x_star, &r.y_star)?, s.weight_p()?)),
        _ => None,
    };
    let mp_dist = |st: &AlgState| -> Result<Option<f64>> {
        match (&mp, st) {
            (Some((us, w)), AlgState::Dr(it)) => Ok(Some(weighted_norm_sq(&it.u.sub(us)?, w)?.max(0.0).sqrt())),
            _ => Ok(None),
        }
    };

    let d = prob.primal.total_len();
    let mut erg = ErgodicAverage::new(d + prob.dual.total_len());
    let mut trace = RunTrace::new(alg.name(), cfg.seed);
    {
        let (x0, y0) = state_point(&st);
        let z0: Vec<f64> = x0.iter().chain(y0).copied().collect();
        let xt0 = transitional(&st).0.to_vec();
        let rec = eval.record(prob, &Checkpoint { k: 0, epoch: 0.0, x_erg: &z0[..d], y_erg: &z0[d..], x_test: &xt0, mp_dist: mp_dist(&st)?, wall_ms: 0.0 })?;
        trace.push(rec)?;
    }
    let mut z = vec![0.0; erg.mean().len()];
    let mut wall = 0.0f64;
    let mut k = 0usize;
    for e in cfg.cadence.epochs(cfg.epochs) {
        let target = e * spe;
        let t0 = Instant::now();
        while k < target {
            engine.step(alg, &mut st, k, &mut rng)?;
            let (xt, yt) = transitional(&st);
            z[..d].copy_from_slice(xt);
            z[d..].copy_from_slice(yt);
            erg.update(&z);
            k += 1;
        }
        wall += t0.elapsed().as_secs_f64() * 1e3;
        let mean = erg.mean();
        let rec = eval.record(
            prob,
            &Checkpoint {
                k: k as u64,
                epoch: k as f64 / spe as f64,
                x_erg: &mean[..d],
                y_erg: &mean[d..],
                x_test: transitional(&st).0,
                mp_dist: mp_dist(&st)?,
                wall_ms: wall,
            },
        )?;
        trace.push(rec)?;
    }
    Ok((trace, st))
}

/// Runs one configuration per seed in parallel; results follow `seeds`.
pub fn run_ensemble(prob: &Arc<SaddleProblem>, cfg: &SolverConfig, seeds: &[u64], eval: &Evaluator) -> Result<Vec<RunTrace>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            run(prob, &c, eval)
        })
        .collect()
}

/// Final iterate after `steps` steps, without metrics.
pub fn run_steps(prob: &Arc<SaddleProblem>, cfg: &SolverConfig, steps: usize) -> Result<AlgState> {
    let engine = Engine::build(prob.clone(), cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut st = engine.initial();
    for k in 0..steps {
        engine.step(cfg.algorithm, &mut st, k, &mut rng)?;
    }
    Ok(st)
}
