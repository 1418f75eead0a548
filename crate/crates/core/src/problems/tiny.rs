use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linops::{BlockRowOperator, DenseMatrix, LinearMap};
use crate::prox::Term;
use crate::solvers::SaddleProblem;

/// Data of `min_x max_y <Qx/2 - f, x> + sum_i (k_i . x) y_i - G_i(y_i)` with
/// scalar dual blocks and `G_i(t) = c_i/2 t^2 - g_i t` on `[lo_i, hi_i]`.
#[derive(Debug, Clone)]
pub struct TinyQpData {
    pub q: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub k: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub g: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Default for TinyQpData {
    /// Three primal unknowns, two dual blocks; the first dual variable sits
    /// at its upper bound with a strictly positive multiplier, which the
    /// early iterates approach from the interior.
    fn default() -> Self {
        TinyQpData {
            q: vec![vec![2.0, 0.5, 0.0], vec![0.5, 1.5, 0.2], vec![0.0, 0.2, 1.0]],
            f: vec![1.0, -0.5, 0.3],
            k: vec![vec![1.0, 2.0, -1.0], vec![0.5, -1.0, 1.0]],
            c: vec![1.0, 0.5],
            g: vec![0.6, 0.2],
            lo: vec![-0.3, f64::NEG_INFINITY],
            hi: vec![0.3, f64::INFINITY],
        }
    }
}

/// Assembled tiny problem with its KKT saddle point.
pub struct TinyQp {
    pub problem: SaddleProblem,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    /// Per dual block: `None` free, `Some(bound)` active.
    pub active: Vec<Option<f64>>,
    /// Multipliers of the active bounds (zero for free blocks).
    pub multipliers: Vec<f64>,
}

pub fn tiny_qp() -> TinyQp {
    tiny_qp_with(&TinyQpData::default()).expect("default data is valid")
}

pub fn tiny_qp_with(data: &TinyQpData) -> Result<TinyQp> {
    let d = data.f.len();
    let n = data.k.len();
    if data.q.len() != d || data.q.iter().any(|r| r.len() != d) || data.k.iter().any(|r| r.len() != d) {
        return Err(invalid("inconsistent tiny QP dimensions"));
    }
    if [data.c.len(), data.g.len(), data.lo.len(), data.hi.len()].iter().any(|&l| l != n) {
        return Err(invalid("one (c, g, lo, hi) per dual block required"));
    }
    let q = DenseMatrix::from_rows(&data.q);
    let rows: Vec<Arc<dyn LinearMap>> = data.k.iter().map(|r| Arc::new(DenseMatrix::from_rows(&[r.clone()])) as Arc<dyn LinearMap>).collect();
    let k = Arc::new(BlockRowOperator::new(rows)?);
    let g_terms = (0..n).map(|i| Term::box_quadratic(data.c[i], data.g[i], data.lo[i], data.hi[i])).collect::<Result<Vec<_>>>()?;
    let f_terms = vec![Term::quadratic(q.clone(), data.f.clone())?];
    let problem = SaddleProblem::new("tiny_qp", k, f_terms, g_terms)?.with_quadratic(Arc::new(q), data.f.clone())?;
    let (x_star, y_star, active, multipliers) = kkt_oracle(data)?;
    Ok(TinyQp { problem, x_star, y_star, active, multipliers })
}

/// Solves the KKT system by enumerating the active sets of the dual boxes:
/// `Q x + K^T y = f` and `k_i . x - c_i y_i + g_i in N_[lo_i, hi_i](y_i)`.
fn kkt_oracle(data: &TinyQpData) -> Result<(Vec<f64>, Vec<f64>, Vec<Option<f64>>, Vec<f64>)> {
    let d = data.f.len();
    let n = data.k.len();
    let choices: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            let mut v = vec![None];
            if data.lo[i].is_finite() {
                v.push(Some(data.lo[i]));
            }
            if data.hi[i].is_finite() {
                v.push(Some(data.hi[i]));
            }
            v
        })
        .collect();
    let total: usize = choices.iter().map(|c| c.len()).product();
    for code in 0..total {
        let mut rem = code;
        let act: Vec<Option<f64>> = choices
            .iter()
            .map(|c| {
                let v = c[rem % c.len()];
                rem /= c.len();
                v
            })
            .collect();
        let m = d + n;
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for r in 0..d {
            for s in 0..d {
                a[(r, s)] = data.q[r][s];
            }
            for i in 0..n {
                a[(r, d + i)] = data.k[i][r];
            }
            rhs[r] = data.f[r];
        }
        for i in 0..n {
            match act[i] {
                None => {
                    for s in 0..d {
                        a[(d + i, s)] = data.k[i][s];
                    }
                    a[(d + i, d + i)] = -data.c[i];
                    rhs[d + i] = -data.g[i];
                }
                Some(b) => {
                    a[(d + i, d + i)] = 1.0;
                    rhs[d + i] = b;
                }
            }
        }
        let Some(sol) = a.lu().solve(&rhs) else { continue };
        let x: Vec<f64> = sol.as_slice()[..d].to_vec();
        let y: Vec<f64> = sol.as_slice()[d..].to_vec();
        let mut ok = true;
        let mut mult = vec![0.0; n];
        for i in 0..n {
            let r: f64 = (0..d).map(|s| data.k[i][s] * x[s]).sum::<f64>() - data.c[i] * y[i] + data.g[i];
            match act[i] {
                None => ok &= y[i] >= data.lo[i] - 1e-12 && y[i] <= data.hi[i] + 1e-12,
                Some(b) if b == data.hi[i] => {
                    ok &= r >= -1e-12;
                    mult[i] = r;
                }
                Some(_) => {
                    ok &= r <= 1e-12;
                    mult[i] = -r;
                }
            }
        }
        if ok {
            return Ok((x, y, act, mult));
        }
    }
    Err(Error::Certificate("no active set satisfies the KKT conditions".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_has_strictly_active_bound() {
        let t = tiny_qp();
        assert_eq!(t.active[0], Some(0.3));
        assert!(t.multipliers[0] > 1e-3, "{:?}", t.multipliers);
        assert_eq!(t.active[1], None);
    }

    /// Saddle inequalities on a perturbation grid.
    #[test]
    fn oracle_point_is_a_saddle() {
        let t = tiny_qp();
        let p = &t.problem;
        let lag = |x: &[f64], y: &[f64]| p.f_value(x) + crate::spaces::dot(&p.kx(x), y) - p.g_value(y);
        let l0 = lag(&t.x_star, &t.y_star);
        let steps = [-0.3, -0.05, 0.0, 0.05, 0.3];
        for a in steps {
            for b in steps {
                for c in steps {
                    let x: Vec<f64> = t.x_star.iter().zip([a, b, c]).map(|(s, e)| s + e).collect();
                    assert!(lag(&x, &t.y_star) >= l0 - 1e-12);
                }
                let y = [t.y_star[0] + a, t.y_star[1] + b];
                assert!(lag(&t.x_star, &y) <= l0 + 1e-12);
            }
        }
    }
}
