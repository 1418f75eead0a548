//! Convergence diagnostics: Lagrangian, Bregman distance, restricted gap,
//! primal value, PSNR, ergodic averages and rate fits.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::solvers::SaddleProblem;
use crate::spaces::dot;

/// `L(x, y) = F(x) + <Kx, y> - G(y)`. An infeasible `x` gives `+inf`,
/// otherwise an infeasible `y` gives `-inf`.
pub fn lagrangian(prob: &SaddleProblem, x: &[f64], y: &[f64]) -> f64 {
    let f = prob.f_value(x);
    if f == f64::INFINITY {
        return f64::INFINITY;
    }
    let g = prob.g_value(y);
    if g == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    f + dot(&prob.kx(x), y) - g
}

/// `H(z, z_ref) = L(x, y_ref) - L(x_ref, y)`; `+inf` when `z` leaves the
/// domain.
pub fn bregman_h(prob: &SaddleProblem, x: &[f64], y: &[f64], x_ref: &[f64], y_ref: &[f64]) -> f64 {
    let a = lagrangian(prob, x, y_ref);
    let b = lagrangian(prob, x_ref, y);
    if a == f64::INFINITY || b == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    a - b
}

/// Per-block intervals `B = B_1 x B_2` for the restricted gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBox {
    pub primal: Vec<(f64, f64)>,
    pub dual: Vec<(f64, f64)>,
}

impl GapBox {
    /// `[-r, r]` on every block.
    pub fn uniform(prob: &SaddleProblem, r: f64) -> Self {
        GapBox { primal: vec![(-r, r); prob.primal.num_blocks()], dual: vec![(-r, r); prob.n()] }
    }

    /// `[-R, R]` with `R = 2 ||(x*, y*)||_inf` (at least 1).
    pub fn around(prob: &SaddleProblem, x_star: &[f64], y_star: &[f64]) -> Self {
        let m = x_star.iter().chain(y_star).fold(0.0f64, |a, v| a.max(v.abs()));
        GapBox::uniform(prob, (2.0 * m).max(1.0))
    }
}

/// `sup_{y' in B_2} L(x, y') - inf_{x' in B_1} L(x', y)`, solved blockwise
/// in closed form.
pub fn restricted_gap(prob: &SaddleProblem, x: &[f64], y: &[f64], bx: &GapBox) -> Result<f64> {
    if bx.primal.len() != prob.primal.num_blocks() || bx.dual.len() != prob.n() {
        return Err(invalid("gap box needs one interval per primal and dual block"));
    }
    let f = prob.f_value(x);
    let g = prob.g_value(y);
    let kx = prob.kx(x);
    let kty = prob.kty(y);
    // sup_y' <Kx, y'> - G(y') = -sum_i min_y' G_i(y') - <K_i x, y'>
    let mut sup = 0.0;
    for (i, t) in prob.g_terms.iter().enumerate() {
        let c: Vec<f64> = kx[prob.dual.range(i)].iter().map(|v| -v).collect();
        let (lo, hi) = bx.dual[i];
        let m = t.min_linear(&c, lo, hi);
        if m == f64::INFINITY {
            return Err(invalid(format!("dual box of block {i} misses the domain")));
        }
        sup -= m;
    }
    let mut inf = 0.0;
    for (b, t) in prob.f_terms.iter().enumerate() {
        let (lo, hi) = bx.primal[b];
        let m = t.min_linear(&kty[prob.primal.range(b)], lo, hi);
        if m == f64::INFINITY {
            return Err(invalid(format!("primal box of block {b} misses the domain")));
        }
        inf += m;
    }
    if f == f64::INFINITY || g == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok((f + sup) - (inf - g))
}

/// `P(x) = F(x) + sum_i G_i^*(K_i x)`.
pub fn primal_value(prob: &SaddleProblem, x: &[f64]) -> f64 {
    let f = prob.f_value(x);
    if f == f64::INFINITY {
        return f;
    }
    f + prob.g_conj_value(&prob.kx(x))
}

/// `P(x) - P(x*)`.
pub fn primal_error(prob: &SaddleProblem, x: &[f64], p_star: f64) -> f64 {
    primal_value(prob, x) - p_star
}

/// `(P(x) - P(x*)) / |P(x*)|`.
pub fn primal_error_rel(prob: &SaddleProblem, x: &[f64], p_star: f64) -> f64 {
    primal_error(prob, x, p_star) / p_star.abs()
}

/// `10 log10(1 / MSE)` with peak 1; `+inf` for identical images.
pub fn psnr(u: &[f64], reference: &[f64]) -> Result<f64> {
    if u.len() != reference.len() || u.is_empty() {
        return Err(Error::Layout(format!("psnr of images with {} and {} pixels", u.len(), reference.len())));
    }
    let mse = u.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / u.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// Running arithmetic mean of a sequence of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicAverage {
    mean: Vec<f64>,
    count: usize,
}

impl ErgodicAverage {
    pub fn new(len: usize) -> Self {
        ErgodicAverage { mean: vec![0.0; len], count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn update(&mut self, z: &[f64]) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (m, v) in self.mean.iter_mut().zip(z) {
            *m += w * (v - *m);
        }
    }
}

/// Folds `z` into the mean of `k` previous vectors.
pub fn ergodic_update(avg: &mut [f64], z: &[f64], k: usize) {
    let w = 1.0 / (k + 1) as f64;
    for (m, v) in avg.iter_mut().zip(z) {
        *m += w * (v - *m);
    }
}

/// Least-squares slope of `log(value)` against `log(k)` over samples with
/// `k_lo <= k <= k_hi` and finite positive values.
pub fn rate_fit(ks: &[f64], values: &[f64], k_lo: f64, k_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> =
        ks.iter().zip(values).filter(|(k, v)| **k >= k_lo && **k <= k_hi && **k > 0.0 && v.is_finite() && **v > 0.0).map(|(k, v)| (k.ln(), v.ln())).collect();
    if pts.len() < 5 {
        return Err(invalid(format!("rate fit needs at least 5 finite samples, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Oracle,
    LongRun,
}

/// Approximate saddle point with its stationarity certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub provenance: Provenance,
    pub primal_value: f64,
    /// Fixed-point residual of one deterministic step at the reference.
    pub certificate: f64,
}

/// One checkpoint; absent metrics are `None`, infinite values stay infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: u64,
    pub epoch: f64,
    pub bregman: Option<f64>,
    pub gap: Option<f64>,
    pub primal: Option<f64>,
    pub primal_err_rel: Option<f64>,
    pub psnr: Option<f64>,
    pub mp_dist: Option<f64>,
    pub wall_ms: f64,
}

impl TraceRecord {
    /// Metric by CSV column name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "k" => Some(self.k as f64),
            "epoch" => Some(self.epoch),
            "bregman" => self.bregman,
            "gap" => self.gap,
            "primal" => self.primal,
            "primal_err_rel" => self.primal_err_rel,
            "psnr" => self.psnr,
            "mp_dist" => self.mp_dist,
            "wall_ms" => Some(self.wall_ms),
            _ => None,
        }
    }
}

pub const CSV_COLUMNS: [&str; 9] = ["k", "epoch", "bregman", "gap", "primal", "primal_err_rel", "psnr", "mp_dist", "wall_ms"];

/// Checkpoint records of one run, strictly increasing in `k`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub label: String,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn new(label: impl Into<String>, seed: u64) -> Self {
        RunTrace { label: label.into(), seed, records: Vec::new() }
    }

    pub fn push(&mut self, r: TraceRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if r.k <= last.k {
                return Err(invalid("checkpoints must be strictly increasing in k"));
            }
        }
        self.records.push(r);
        Ok(())
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// `(k, value)` pairs of a metric, skipping absent values.
    pub fn series(&self, name: &str) -> Vec<(f64, f64)> {
        self.records.iter().filter_map(|r| r.metric(name).map(|v| (r.k as f64, v))).collect()
    }

    /// Slope of `log(metric)` against `log(k)` within `[k_lo, k_hi]`.
    pub fn rate(&self, name: &str, k_lo: f64, k_hi: f64) -> Result<f64> {
        let s = self.series(name);
        let (ks, vs): (Vec<f64>, Vec<f64>) = s.into_iter().unzip();
        rate_fit(&ks, &vs, k_lo, k_hi)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r).map_err(csv_err)?;
        }
        if self.records.is_empty() {
            wr.write_record(CSV_COLUMNS).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, label: impl Into<String>, seed: u64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut t = RunTrace::new(label, seed);
        for rec in rd.deserialize() {
            t.push(rec.map_err(csv_err)?)?;
        }
        Ok(t)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// Pointwise mean over traces with identical checkpoints. A metric is
/// present only if present in every trace.
pub fn mean_trace(traces: &[RunTrace], label: impl Into<String>) -> Result<RunTrace> {
    let first = traces.first().ok_or_else(|| invalid("mean of zero traces"))?;
    for t in traces {
        if t.records.len() != first.records.len() || t.records.iter().zip(&first.records).any(|(a, b)| a.k != b.k) {
            return Err(invalid("traces have different checkpoints"));
        }
    }
    let n = traces.len() as f64;
    let avg = |j: usize, f: fn(&TraceRecord) -> Option<f64>| -> Option<f64> {
        let mut s = 0.0;
        for t in traces {
            s += f(&t.records[j])?;
        }
        Some(s / n)
    };
    let mut out = RunTrace::new(label, first.seed);
    for (j, r) in first.records.iter().enumerate() {
        out.records.push(TraceRecord {
            k: r.k,
            epoch: r.epoch,
            bregman: avg(j, |r| r.bregman),
            gap: avg(j, |r| r.gap),
            primal: avg(j, |r| r.primal),
            primal_err_rel: avg(j, |r| r.primal_err_rel),
            psnr: avg(j, |r| r.psnr),
            mp_dist: avg(j, |r| r.mp_dist),
            wall_ms: avg(j, |r| Some(r.wall_ms)).unwrap_or(0.0),
        });
    }
    Ok(out)
}

/// Ground-truth image for PSNR, compared with primal block `block`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsnrTarget {
    pub image: Vec<f64>,
    pub block: usize,
}

/// Metric hooks evaluated at checkpoints.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    pub reference: Option<ReferencePoint>,
    pub gap_box: Option<GapBox>,
    pub psnr_target: Option<PsnrTarget>,
    /// Divides Bregman distance and gap (e.g. by the pixel count).
    pub normalization: Option<f64>,
}

/// Quantities handed to the evaluator at a checkpoint.
pub struct Checkpoint<'a> {
    pub k: u64,
    pub epoch: f64,
    /// Ergodic transitional pair.
    pub x_erg: &'a [f64],
    pub y_erg: &'a [f64],
    /// Current transitional primal point.
    pub x_test: &'a [f64],
    pub mp_dist: Option<f64>,
    pub wall_ms: f64,
}

impl Evaluator {
    pub fn with_reference(reference: ReferencePoint) -> Self {
        Evaluator { reference: Some(reference), ..Default::default() }
    }

    pub fn record(&self, prob: &SaddleProblem, c: &Checkpoint<'_>) -> Result<TraceRecord> {
        let scale = self.normalization.unwrap_or(1.0);
        let (mut bregman, mut primal_err_rel) = (None, None);
        let primal = primal_value(prob, c.x_erg);
        if let Some(r) = &self.reference {
            bregman = Some(bregman_h(prob, c.x_erg, c.y_erg, &r.x_star, &r.y_star) / scale);
            primal_err_rel = Some((primal - r.primal_value) / r.primal_value.abs());
        }
        let gap = match &self.gap_box {
            Some(b) => Some(restricted_gap(prob, c.x_erg, c.y_erg, b)? / scale),
            None => None,
        };
        let psnr_v = match &self.psnr_target {
            Some(t) => Some(psnr(&c.x_test[prob.primal.range(t.block)], &t.image)?),
            None => None,
        };
        Ok(TraceRecord { k: c.k, epoch: c.epoch, bregman, gap, primal: Some(primal), primal_err_rel, psnr: psnr_v, mp_dist: c.mp_dist, wall_ms: c.wall_ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{BlockRowOperator, DenseMatrix, LinearMap};
    use crate::problems::tiny_qp;
    use crate::prox::oracle::golden_section;
    use crate::prox::Term;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn scalar_problem(f: Term, g: Term, k: f64) -> SaddleProblem {
        let row: Arc<dyn LinearMap> = Arc::new(DenseMatrix::from_rows(&[vec![k]]));
        SaddleProblem::new("scalar", Arc::new(BlockRowOperator::new(vec![row]).unwrap()), vec![f], vec![g]).unwrap()
    }

    #[test]
    fn lagrangian_trivial_and_infinite() {
        let p = scalar_problem(Term::Zero, Term::Zero, 0.0);
        assert_eq!(lagrangian(&p, &[1.3], &[-2.0]), 0.0);
        let kl = scalar_problem(Term::Zero, Term::kl_conjugate(vec![0.5]).unwrap(), 1.0);
        assert_eq!(lagrangian(&kl, &[0.2], &[1.0]), f64::NEG_INFINITY);
        assert_eq!(bregman_h(&kl, &[0.2], &[1.0], &[0.0], &[0.0]), f64::INFINITY);
    }

    #[test]
    fn tiny_qp_saddle_and_bregman() {
        let t = tiny_qp();
        let p = &t.problem;
        assert_eq!(bregman_h(p, &t.x_star, &t.y_star, &t.x_star, &t.y_star), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = vec![rng.gen_range(-0.1..0.1), rng.gen_range(-3.0..3.0)];
            let h = bregman_h(p, &x, &y, &t.x_star, &t.y_star);
            assert!(h >= -1e-9);
            let bx = GapBox::around(p, &t.x_star, &t.y_star);
            let g = restricted_gap(p, &x, &y, &bx).unwrap();
            assert!(g >= h - 1e-9, "{g} < {h}");
        }
    }

    /// Closed-form Bregman distance of the classification layout versus the
    /// generic Lagrangian path.
    #[test]
    fn bregman_dual_path_matches() {
        let t = tiny_qp();
        let p = &t.problem;
        let x = [0.3, -0.2, 0.5];
        let y = [0.05, 0.7];
        let direct = dot(&p.kx(&x), &t.y_star) - p.g_value(&t.y_star) - dot(&p.kx(&t.x_star), &y) + p.g_value(&y) + p.f_value(&x) - p.f_value(&t.x_star);
        assert!((direct - bregman_h(p, &x, &y, &t.x_star, &t.y_star)).abs() <= 1e-12);
    }

    #[test]
    fn gap_of_linear_1d_problem() {
        let p = scalar_problem(Term::Zero, Term::Zero, 1.0);
        let bx = GapBox { primal: vec![(-1.0, 1.0)], dual: vec![(-1.0, 1.0)] };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (x, y): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let g = restricted_gap(&p, &[x], &[y], &bx).unwrap();
            assert!((g - (x.abs() + y.abs())).abs() < 1e-14);
        }
    }

    #[test]
    fn gap_degenerate_box_is_zero() {
        let q = scalar_problem(Term::ridge(1.0).unwrap(), Term::box_quadratic(1.0, 0.0, -5.0, 5.0).unwrap(), 1.0);
        // saddle of x^2/2 + xy - y^2/2 is (0, 0)
        let bx = GapBox { primal: vec![(0.0, 0.0)], dual: vec![(0.0, 0.0)] };
        assert_eq!(restricted_gap(&q, &[0.0], &[0.0], &bx).unwrap(), 0.0);
        let bx = GapBox { primal: vec![(-1.0, 1.0)], dual: vec![(-1.0, 1.0)] };
        assert!(restricted_gap(&q, &[0.0], &[0.0], &bx).unwrap() >= 0.0);
        let kl = scalar_problem(Term::Zero, Term::kl_conjugate(vec![0.5]).unwrap(), 1.0);
        let bad = GapBox { primal: vec![(-1.0, 1.0)], dual: vec![(2.0, 3.0)] };
        assert!(restricted_gap(&kl, &[0.0], &[0.0], &bad).is_err());
    }

    /// Brute-force grid sup/inf over the box on a random scalar instance.
    #[test]
    fn gap_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let k: f64 = rng.gen_range(-2.0..2.0);
            let lam: f64 = rng.gen_range(0.1..2.0);
            let c: f64 = rng.gen_range(0.1..2.0);
            let g: f64 = rng.gen_range(-1.0..1.0);
            let p = scalar_problem(Term::ridge(lam).unwrap(), Term::box_quadratic(c, g, -0.5, 0.8).unwrap(), k);
            let bx = GapBox { primal: vec![(-1.0, 1.0)], dual: vec![(-1.0, 1.0)] };
            let (x, y): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.8));
            let grid = |lo: f64, hi: f64| (0..=2000).map(move |i| lo + (hi - lo) * i as f64 / 2000.0);
            let sup = grid(-0.5, 0.8).map(|yy| lagrangian(&p, &[x], &[yy])).fold(f64::NEG_INFINITY, f64::max);
            let inf = grid(-1.0, 1.0).map(|xx| lagrangian(&p, &[xx], &[y])).fold(f64::INFINITY, f64::min);
            let gap = restricted_gap(&p, &[x], &[y], &bx).unwrap();
            assert!((gap - (sup - inf)).abs() <= 2e-3);
        }
    }

    #[test]
    fn primal_value_scalar() {
        // P(x) = x^2/2 + G*(kx) with G = ridge-like box quadratic, checked
        // against golden-section evaluation of the conjugate.
        let p = scalar_problem(Term::ridge(2.0).unwrap(), Term::box_quadratic(1.0, 0.3, -1.0, 1.0).unwrap(), 1.5);
        let x = 0.4;
        let v = 1.5 * x;
        let t = golden_section(|t| 0.5 * t * t - 0.3 * t - v * t, -1.0, 1.0, 200);
        let conj = v * t - (0.5 * t * t - 0.3 * t);
        let expect = 0.5 * 2.0 * x * x + conj;
        assert!((primal_value(&p, &[x]) - expect).abs() <= 1e-9);
        assert_eq!(primal_error(&p, &[x], primal_value(&p, &[x])), 0.0);
    }

    #[test]
    fn psnr_values() {
        let u = vec![0.3; 16];
        assert_eq!(psnr(&u, &u).unwrap(), f64::INFINITY);
        let v: Vec<f64> = u.iter().map(|a| a + 0.1).collect();
        assert!((psnr(&v, &u).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&u, &u[..3]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: f64 = 0.05;
        let noisy: Vec<f64> = (0..200_000).map(|_| 0.5 + rng.gen_range(-a..a)).collect();
        let clean = vec![0.5; 200_000];
        let expect = -10.0 * (a * a / 3.0).log10();
        assert!((psnr(&noisy, &clean).unwrap() - expect).abs() <= 0.5);
    }

    #[test]
    fn ergodic_mean_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let zs: Vec<Vec<f64>> = (0..1000).map(|_| (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
        let mut avg = ErgodicAverage::new(4);
        let mut raw = vec![0.0; 4];
        for (k, z) in zs.iter().enumerate() {
            avg.update(z);
            ergodic_update(&mut raw, z, k);
        }
        for j in 0..4 {
            let batch = zs.iter().map(|z| z[j]).sum::<f64>() / 1000.0;
            assert!((avg.mean()[j] - batch).abs() <= 1e-13 * batch.abs().max(1.0));
            assert_eq!(avg.mean()[j], raw[j]);
        }
        let mut one = ErgodicAverage::new(2);
        one.update(&[1.5, -2.0]);
        assert_eq!(one.mean(), &[1.5, -2.0]);
        one.update(&[1.5, -2.0]);
        assert_eq!(one.mean(), &[1.5, -2.0]);
    }

    #[test]
    fn rate_fit_power_laws() {
        let ks: Vec<f64> = (1..=50).map(|i| (i * 20) as f64).collect();
        let v1: Vec<f64> = ks.iter().map(|k| 3.0 / k).collect();
        let v2: Vec<f64> = ks.iter().map(|k| 3.0 / (k * k)).collect();
        assert!((rate_fit(&ks, &v1, 0.0, 1e9).unwrap() + 1.0).abs() < 1e-6);
        assert!((rate_fit(&ks, &v2, 0.0, 1e9).unwrap() + 2.0).abs() < 1e-6);
        let mut short = v1.clone();
        short.iter_mut().skip(3).for_each(|v| *v = f64::INFINITY);
        assert!(rate_fit(&ks, &short, 0.0, 1e9).is_err());
    }

    #[test]
    fn csv_round_trip_with_sentinels() {
        let mut t = RunTrace::new("a", 5);
        let rec = |k: u64, v: f64| TraceRecord {
            k,
            epoch: k as f64,
            bregman: Some(v),
            gap: None,
            primal: Some(f64::INFINITY),
            primal_err_rel: None,
            psnr: Some(f64::INFINITY),
            mp_dist: Some(0.5),
            wall_ms: 1.0,
        };
        t.push(rec(0, 1.0)).unwrap();
        t.push(rec(3, 0.25)).unwrap();
        assert!(t.push(rec(3, 0.1)).is_err());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,epoch,bregman,gap,primal,primal_err_rel,psnr,mp_dist,wall_ms\n"));
        assert!(text.contains("inf"));
        let back = RunTrace::read_csv(&buf[..], "a", 5).unwrap();
        assert_eq!(back, t);
        let m = mean_trace(&[t.clone(), t.clone()], "mean").unwrap();
        assert_eq!(m.records[1].bregman, Some(0.25));
        assert_eq!(m.records[1].gap, None);
    }
}
