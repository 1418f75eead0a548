use std::sync::Arc;

use super::LinearMap;
use crate::error::{Error, Result};
use crate::spaces::Layout;

/// Half-sample symmetric reflection of `r` into `[0, d)`; valid for
/// `-d <= r < 2d`.
fn reflect(r: isize, d: isize) -> usize {
    let r = if r < 0 { -r - 1 } else { r };
    let r = if r >= d { 2 * d - r - 1 } else { r };
    r as usize
}

/// 2D convolution `(k * u)(i, j) = sum_ab k(a, b) u(i - a + ca, j - b + cb)`
/// with symmetric boundary reflection. The kernel origin is
/// `(ca, cb) = ((k1 - 1) / 2, (k2 - 1) / 2)`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    d1: usize,
    d2: usize,
    k1: usize,
    k2: usize,
    kernel: Vec<f64>,
    /// Source index tables: `rows[i * k1 + a]`, `cols[j * k2 + b]`.
    rows: Vec<usize>,
    cols: Vec<usize>,
    taps: Vec<(usize, usize, f64)>,
    layout: Arc<Layout>,
}

impl Conv2d {
    pub fn new(d1: usize, d2: usize, k1: usize, k2: usize, kernel: Vec<f64>) -> Result<Self> {
        if kernel.len() != k1 * k2 || k1 == 0 || k2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel data of length {} for a {k1}x{k2} kernel", kernel.len())));
        }
        if k1 > d1 || k2 > d2 {
            return Err(Error::InvalidArgument(format!("{k1}x{k2} kernel larger than {d1}x{d2} image")));
        }
        let (ca, cb) = ((k1 as isize - 1) / 2, (k2 as isize - 1) / 2);
        let mut rows = Vec::with_capacity(d1 * k1);
        for i in 0..d1 as isize {
            for a in 0..k1 as isize {
                rows.push(reflect(i - a + ca, d1 as isize));
            }
        }
        let mut cols = Vec::with_capacity(d2 * k2);
        for j in 0..d2 as isize {
            for b in 0..k2 as isize {
                cols.push(reflect(j - b + cb, d2 as isize));
            }
        }
        let taps = (0..k1)
            .flat_map(|a| (0..k2).map(move |b| (a, b)))
            .filter_map(|(a, b)| {
                let v = kernel[a * k2 + b];
                (v != 0.0).then_some((a, b, v))
            })
            .collect();
        Ok(Conv2d { d1, d2, k1, k2, kernel, rows, cols, taps, layout: Arc::new(Layout::new(vec![vec![d1, d2]])) })
    }

    pub fn delta(d1: usize, d2: usize) -> Self {
        Conv2d::new(d1, d2, 1, 1, vec![1.0]).expect("1x1 kernel fits any image")
    }

    pub fn kernel(&self) -> (usize, usize, &[f64]) {
        (self.k1, self.k2, &self.kernel)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn is_delta(&self) -> bool {
        self.taps.len() == 1 && self.taps[0].2 == 1.0 && self.k1 == 1 && self.k2 == 1
    }
}

impl LinearMap for Conv2d {
    fn domain(&self) -> &Arc<Layout> {
        &self.layout
    }
    fn codomain(&self) -> &Arc<Layout> {
        &self.layout
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        let (d2, k1, k2) = (self.d2, self.k1, self.k2);
        for i in 0..self.d1 {
            let orow = &mut out[i * d2..(i + 1) * d2];
            orow.iter_mut().for_each(|v| *v = 0.0);
            for &(a, b, kv) in &self.taps {
                let src = self.rows[i * k1 + a] * d2;
                for (j, o) in orow.iter_mut().enumerate() {
                    *o += kv * x[src + self.cols[j * k2 + b]];
                }
            }
        }
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.adjoint_add(y, out)
    }
    fn adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        let (d2, k1, k2) = (self.d2, self.k1, self.k2);
        for i in 0..self.d1 {
            let yrow = &y[i * d2..(i + 1) * d2];
            for &(a, b, kv) in &self.taps {
                let dst = self.rows[i * k1 + a] * d2;
                for (j, yv) in yrow.iter().enumerate() {
                    out[dst + self.cols[j * k2 + b]] += kv * yv;
                }
            }
        }
    }
}
