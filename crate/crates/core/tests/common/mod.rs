//! Oracles shared by integration tests.

use gaplab::stats::Design;
use nalgebra::{DMatrix, DVector};

/// REML log-likelihood assembled from dense per-item covariance blocks.
pub fn dense_reml(d: &Design, theta: f64) -> f64 {
    let (n, p) = (d.x.nrows(), d.x.ncols());
    let mut items: Vec<u32> = d.groups.clone();
    items.sort_unstable();
    items.dedup();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let mut yhy = 0.0;
    let mut logdet_h = 0.0;
    for item in items {
        let rows: Vec<usize> = (0..n).filter(|&r| d.groups[r] == item).collect();
        let m = rows.len();
        let h = DMatrix::<f64>::identity(m, m) + DMatrix::from_element(m, m, theta);
        let lu = h.clone().lu();
        logdet_h += lu.determinant().ln();
        let h_inv = lu.try_inverse().unwrap();
        let xg = DMatrix::from_fn(m, p, |i, j| d.x[(rows[i], j)]);
        let yg = DVector::from_fn(m, |i, _| d.y[rows[i]]);
        a += xg.transpose() * &h_inv * &xg;
        b += xg.transpose() * &h_inv * &yg;
        yhy += (yg.transpose() * &h_inv * &yg)[(0, 0)];
    }
    let lu = a.clone().lu();
    let beta = lu.solve(&b).unwrap();
    let sigma2 = (yhy - b.dot(&beta)) / (n - p) as f64;
    let logdet_a = lu.determinant().ln();
    -0.5 * ((n - p) as f64 * (1.0 + (2.0 * std::f64::consts::PI * sigma2).ln()) + logdet_h + logdet_a)
}

/// Best REML log-likelihood over θ = 0 and a 1000-point grid in ln θ,
/// refined by a second 1000-point grid around the best cell.
pub fn grid_reml_optimum(d: &Design) -> (f64, f64) {
    let (lo, hi) = (-12.0f64, 8.0f64);
    let step = (hi - lo) / 999.0;
    let mut best = (dense_reml(d, 0.0), 0.0);
    let mut best_k = None;
    for k in 0..1000 {
        let theta = (lo + step * k as f64).exp();
        let v = dense_reml(d, theta);
        if v > best.0 {
            best = (v, theta);
            best_k = Some(k);
        }
    }
    if let Some(k) = best_k {
        let (a, b) = (lo + step * (k as f64 - 1.0), lo + step * (k as f64 + 1.0));
        for j in 0..1000 {
            let theta = (a + (b - a) * j as f64 / 999.0).exp();
            let v = dense_reml(d, theta);
            if v > best.0 {
                best = (v, theta);
            }
        }
    }
    best
}
