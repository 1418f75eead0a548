use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LinearMap;

pub const DEFAULT_NORM_ITERS: usize = 100;

/// Power-iteration estimate of `||K|| = sqrt(lambda_max(K* K))`.
///
/// Returns the largest `||K v_k||` seen over unit iterates `v_k`, so the
/// estimate never decreases with more iterations and never exceeds `||K||`.
pub fn op_norm_estimate(k: &dyn LinearMap, iters: usize, seed: u64) -> f64 {
    let n = k.domain().total_len();
    let m = k.codomain().total_len();
    if n == 0 || m == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut kv = vec![0.0; m];
    let mut best: f64 = 0.0;
    for _ in 0..iters.max(1) {
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|a| *a /= nv);
        k.forward(&v, &mut kv);
        let nkv = kv.iter().map(|a| a * a).sum::<f64>().sqrt();
        best = best.max(nkv);
        if nkv == 0.0 {
            break;
        }
        k.adjoint(&kv, &mut v);
    }
    best
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::linops::{Diag, Identity};
    use crate::spaces::Layout;

    #[test]
    fn identity_norm_is_one() {
        let id = Identity::new(Arc::new(Layout::single(10)));
        assert!((op_norm_estimate(&id, 100, 1) - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn diag_norm_is_dominant_entry() {
        let d = Diag::from_vec(vec![3.0, 1.0]);
        assert!((op_norm_estimate(&d, 100, 7) - 3.0).abs() <= 1e-8);
    }

    #[test]
    fn zero_operator_gives_zero() {
        let d = Diag::from_vec(vec![0.0; 4]);
        assert_eq!(op_norm_estimate(&d, 100, 7), 0.0);
    }

    #[test]
    fn deterministic_and_monotone_in_iters() {
        let d = Diag::from_vec((0..20).map(|i| 1.0 + i as f64 * 0.1).collect());
        let a = op_norm_estimate(&d, 30, 3);
        assert_eq!(a, op_norm_estimate(&d, 30, 3));
        let mut prev = 0.0;
        for it in 1..40 {
            let e = op_norm_estimate(&d, it, 3);
            assert!(e >= prev - 1e-15);
            prev = e;
        }
    }
}
