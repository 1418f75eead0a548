use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linops::{BlockRowOperator, Conv2d, LinearMap, TgvRow, TgvRowKind};
use crate::precond::TgvSurrogate;
use crate::prox::Term;
use crate::solvers::SaddleProblem;

/// Row-major `k1 x k2` convolution kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub k1: usize,
    pub k2: usize,
    pub data: Vec<f64>,
}

impl Kernel {
    pub fn delta() -> Self {
        Kernel { k1: 1, k2: 1, data: vec![1.0] }
    }

    pub fn mass(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Unit-mass line kernel of `length` taps at `angle` degrees
/// (counter-clockwise from the horizontal), rasterized bilinearly into a
/// `length x length` support.
pub fn motion_blur_kernel(length: usize, angle: f64) -> Result<Kernel> {
    if length == 0 {
        return Err(invalid("motion blur length must be at least 1"));
    }
    let l = length;
    let mut data = vec![0.0; l * l];
    let c = (l as f64 - 1.0) / 2.0;
    let (sn, cs) = angle.to_radians().sin_cos();
    let w = 1.0 / l as f64;
    for t in 0..l {
        let s = t as f64 - c;
        let col = (c + s * cs).clamp(0.0, (l - 1) as f64);
        let row = (c - s * sn).clamp(0.0, (l - 1) as f64);
        let (r0, c0) = (row.floor() as usize, col.floor() as usize);
        let (fr, fc) = (row - r0 as f64, col - c0 as f64);
        let r1 = (r0 + 1).min(l - 1);
        let c1 = (c0 + 1).min(l - 1);
        data[r0 * l + c0] += w * (1.0 - fr) * (1.0 - fc);
        data[r0 * l + c1] += w * (1.0 - fr) * fc;
        data[r1 * l + c0] += w * fr * (1.0 - fc);
        data[r1 * l + c1] += w * fr * fc;
    }
    Ok(Kernel { k1: l, k2: l, data })
}

/// TGV-KL deblurring data: observation `b >= 0` of a `d1 x d2` image blurred
/// by `kernel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeblurSpec {
    pub d1: usize,
    pub d2: usize,
    pub kernel: Kernel,
    pub observed: Vec<f64>,
    pub alpha0: f64,
    pub alpha1: f64,
}

impl DeblurSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d1 < 2 || self.d2 < 2 {
            return Err(invalid("deblur images need at least 2x2 pixels"));
        }
        if self.observed.len() != self.d1 * self.d2 {
            return Err(invalid(format!("observation has {} values for a {}x{} image", self.observed.len(), self.d1, self.d2)));
        }
        if self.observed.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("observed data must be finite and nonnegative"));
        }
        if !(self.alpha0 > 0.0 && self.alpha1 > 0.0) {
            return Err(invalid("alpha0 and alpha1 must be positive"));
        }
        Ok(())
    }

    pub fn blur(&self) -> Result<Conv2d> {
        Conv2d::new(self.d1, self.d2, self.kernel.k1, self.kernel.k2, self.kernel.data.clone())
    }
}

/// Number of dual blocks: `s, p1, p2, q1, q2, (q3, q4)`.
pub const TGV_DUAL_BLOCKS: usize = 6;

/// `min_{u in [0,1], w} KL(K1 u, b) + alpha1 |grad u - w|_1 + alpha0 |E w|_1`
/// in saddle form; the primal is `(u, w)` and `F` acts on `u` only.
pub fn build_tgv_kl(spec: &DeblurSpec) -> Result<SaddleProblem> {
    spec.validate()?;
    let blur = spec.blur()?;
    let dom = TgvRow::primal_layout(spec.d1, spec.d2);
    let kinds = [TgvRowKind::Blur(blur.clone()), TgvRowKind::P1, TgvRowKind::P2, TgvRowKind::Q1, TgvRowKind::Q2, TgvRowKind::Q34];
    let rows: Vec<Arc<dyn LinearMap>> = kinds.into_iter().map(|k| Arc::new(TgvRow::new(k, dom.clone())) as Arc<dyn LinearMap>).collect();
    let k = Arc::new(BlockRowOperator::new(rows)?);
    let f_terms = vec![Term::boxed(0.0, 1.0)?, Term::Zero];
    let g_terms = vec![
        Term::kl_conjugate(spec.observed.clone())?,
        Term::inf_ball(spec.alpha1)?,
        Term::inf_ball(spec.alpha1)?,
        Term::inf_ball(spec.alpha0)?,
        Term::inf_ball(spec.alpha0)?,
        Term::inf_ball(spec.alpha0)?,
    ];
    let prob = SaddleProblem::new(format!("tgv_kl_{}x{}", spec.d1, spec.d2), k, f_terms, g_terms)?;
    Ok(prob.with_tgv(TgvSurrogate::new(blur)))
}

/// Synthetic test images with values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagePattern {
    /// Affine ramp `0.1 + 0.8 (i + j) / (d1 + d2 - 2)`.
    Ramp,
    /// Two affine regions, a bright rectangle and a dark disk.
    Shapes,
}

pub fn synth_image(d1: usize, d2: usize, pattern: ImagePattern) -> Result<Vec<f64>> {
    if d1 == 0 || d2 == 0 {
        return Err(invalid("image dimensions must be positive"));
    }
    let (h, w) = (d1 as f64, d2 as f64);
    let denom = ((d1 + d2) as f64 - 2.0).max(1.0);
    let mut u = vec![0.0; d1 * d2];
    for i in 0..d1 {
        for j in 0..d2 {
            let (y, x) = (i as f64, j as f64);
            u[i * d2 + j] = match pattern {
                ImagePattern::Ramp => 0.1 + 0.8 * (y + x) / denom,
                ImagePattern::Shapes => {
                    let mut v = if x < 0.5 * w { 0.2 + 0.4 * y / h } else { 0.7 - 0.3 * x / w };
                    if y >= 0.15 * h && y < 0.45 * h && x >= 0.55 * w && x < 0.85 * w {
                        v = 0.9;
                    }
                    let (cy, cx, r) = (0.68 * h, 0.32 * w, 0.18 * h.min(w));
                    if (y - cy).powi(2) + (x - cx).powi(2) <= r * r {
                        v = 0.05;
                    }
                    v
                }
            };
        }
    }
    Ok(u)
}

/// Optional seeded Poisson noise: `b = Poisson(peak K u) / peak`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonNoise {
    pub peak: f64,
    pub seed: u64,
}

/// Blurs `image` and clamps to nonnegative values, optionally with noise.
pub fn blur_observation(d1: usize, d2: usize, image: &[f64], kernel: &Kernel, noise: Option<PoissonNoise>) -> Result<Vec<f64>> {
    let conv = Conv2d::new(d1, d2, kernel.k1, kernel.k2, kernel.data.clone())?;
    if image.len() != d1 * d2 {
        return Err(invalid("image does not match its dimensions"));
    }
    let mut b = vec![0.0; d1 * d2];
    conv.forward(image, &mut b);
    for v in b.iter_mut() {
        *v = v.max(0.0);
    }
    if let Some(nz) = noise {
        if !(nz.peak > 0.0) {
            return Err(invalid("noise peak must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(nz.seed);
        for v in b.iter_mut() {
            let lam = *v * nz.peak;
            *v = if lam > 0.0 { Poisson::new(lam).expect("positive rate").sample(&mut rng) / nz.peak } else { 0.0 };
        }
    }
    Ok(b)
}

/// Ground truth plus a deblurring problem built from its blurred observation.
pub struct SynthDeblur {
    pub truth: Vec<f64>,
    pub spec: DeblurSpec,
}

pub fn synth_deblur(d1: usize, d2: usize, pattern: ImagePattern, kernel: Kernel, alpha0: f64, alpha1: f64, noise: Option<PoissonNoise>) -> Result<SynthDeblur> {
    let truth = synth_image(d1, d2, pattern)?;
    let observed = blur_observation(d1, d2, &truth, &kernel, noise)?;
    let spec = DeblurSpec { d1, d2, kernel, observed, alpha0, alpha1 };
    spec.validate()?;
    Ok(SynthDeblur { truth, spec })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{grad2d, op_norm_estimate, sym_deriv, DEFAULT_NORM_ITERS};
    use crate::precond::{check_feasible, PrecondKind};
    use crate::problems::{reference_long_run, RefOptions};
    use crate::solvers::Solver;
    use crate::spaces::Variant;

    #[test]
    fn motion_kernels() {
        assert_eq!(motion_blur_kernel(1, 37.0).unwrap(), Kernel::delta());
        let k = motion_blur_kernel(5, 0.0).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                let want = if r == 2 { 0.2 } else { 0.0 };
                assert_eq!(k.data[r * 5 + c], want);
            }
        }
        for (l, a) in [(2, 0.0), (7, 45.0), (40, 13.0), (9, 90.0), (12, 200.0)] {
            let k = motion_blur_kernel(l, a).unwrap();
            assert!((k.mass() - 1.0).abs() <= 1e-12, "length {l} angle {a}");
            assert!(k.data.iter().all(|v| *v >= 0.0));
        }
        assert!(motion_blur_kernel(0, 0.0).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let ok = DeblurSpec { d1: 4, d2: 4, kernel: Kernel::delta(), observed: vec![0.5; 16], alpha0: 1.0, alpha1: 1.0 };
        assert!(build_tgv_kl(&ok).is_ok());
        let mut bad = ok.clone();
        bad.observed[3] = -1e-3;
        assert!(build_tgv_kl(&bad).is_err());
        let mut bad = ok.clone();
        bad.alpha0 = 0.0;
        assert!(build_tgv_kl(&bad).is_err());
        let mut bad = ok;
        bad.observed.pop();
        assert!(build_tgv_kl(&bad).is_err());
    }

    #[test]
    fn operator_norm_within_bound() {
        let k = motion_blur_kernel(5, 30.0).unwrap();
        let s = synth_deblur(16, 12, ImagePattern::Shapes, k, 1e-2, 1e-2, None).unwrap();
        let prob = build_tgv_kl(&s.spec).unwrap();
        assert_eq!(prob.n(), TGV_DUAL_BLOCKS);
        let est = op_norm_estimate(prob.k.as_ref(), DEFAULT_NORM_ITERS, 3);
        assert!(est <= 14f64.sqrt() * 1.01, "{est}");
    }

    #[test]
    fn zero_data_collapses_kl_resolvent() {
        let spec = DeblurSpec { d1: 3, d2: 3, kernel: Kernel::delta(), observed: vec![0.0; 9], alpha0: 1.0, alpha1: 1.0 };
        let prob = build_tgv_kl(&spec).unwrap();
        let z = [-2.0, -0.5, 0.0, 0.3, 0.999, 1.0, 1.5, 4.0, 1e6];
        let mut out = [0.0; 9];
        prob.prox_g_block(0, &z, 0.7, &mut out);
        for (o, v) in out.iter().zip(&z) {
            assert_eq!(*o, v.min(1.0));
        }
    }

    #[test]
    fn ramp_has_zero_second_order_energy() {
        let (d1, d2) = (9, 7);
        let u = synth_image(d1, d2, ImagePattern::Ramp).unwrap();
        // w = grad u is constant in the interior, so E w vanishes away from
        // the last row and column where the forward differences are cut off
        let g = grad2d(&u, d1, d2);
        let mut w = vec![0.0; 2 * d1 * d2];
        let step = 0.8 / (d1 + d2 - 2) as f64;
        w[..d1 * d2].iter_mut().for_each(|v| *v = step);
        w[d1 * d2..].iter_mut().for_each(|v| *v = step);
        for i in 0..d1 - 1 {
            for j in 0..d2 - 1 {
                let p = i * d2 + j;
                assert!((g[p] - w[p]).abs() <= 1e-14);
                assert!((g[d1 * d2 + p] - w[d1 * d2 + p]).abs() <= 1e-14);
            }
        }
        let e = sym_deriv(&w, d1, d2);
        let n = d1 * d2;
        for i in 0..d1 - 1 {
            for j in 0..d2 - 1 {
                for c in 0..4 {
                    assert!(e[c * n + i * d2 + j].abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn sgs_preconditioner_feasible_on_8x8() {
        let k = motion_blur_kernel(3, 0.0).unwrap();
        let s = synth_deblur(8, 8, ImagePattern::Shapes, k, 1e-4, 5e-5, None).unwrap();
        let prob = Arc::new(build_tgv_kl(&s.spec).unwrap());
        let solver = Solver::new(prob, Variant::Full, 5.0, 0.1, PrecondKind::SgsRedBlack).unwrap();
        let rep = check_feasible(solver.preconditioner(), 200, 1);
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn weak_regularization_with_delta_kernel_fits_data() {
        // per pixel, min_{u in [0,1]} u - b log u is attained at clamp(b)
        let (d1, d2) = (6, 5);
        let observed: Vec<f64> = (0..d1 * d2).map(|i| 0.05 + 1.4 * ((i * 7) % 11) as f64 / 10.0).collect();
        let spec = DeblurSpec { d1, d2, kernel: Kernel::delta(), observed: observed.clone(), alpha0: 1e-9, alpha1: 1e-9 };
        let prob = Arc::new(build_tgv_kl(&spec).unwrap());
        let opts = RefOptions { sigma: 1.0, tau: 0.5, tol: 1e-9, budget: 200_000, ..Default::default() };
        let r = reference_long_run(&prob, &opts).unwrap();
        for (u, b) in r.x_star[..d1 * d2].iter().zip(&observed) {
            assert!((u - b.min(1.0)).abs() <= 1e-6, "{u} {b}");
        }
    }

    #[test]
    fn synthetic_outputs_are_deterministic() {
        let k = motion_blur_kernel(5, 20.0).unwrap();
        let noise = Some(PoissonNoise { peak: 100.0, seed: 9 });
        let a = synth_deblur(10, 10, ImagePattern::Shapes, k.clone(), 1e-3, 1e-3, noise).unwrap();
        let b = synth_deblur(10, 10, ImagePattern::Shapes, k, 1e-3, 1e-3, noise).unwrap();
        assert_eq!(a.spec, b.spec);
        assert!(a.truth.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
