//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use boars::engine::BoConfig;
use boars::grid::{generate_synthetic_grid, SimulatedInstrument, SpectralGrid, SyntheticConfig};
use boars::surrogate::{kernel_eval, Kernel, TrainConfig};

/// SSIM by direct evaluation of every window: two-pass means, variances and
/// covariance, no running sums.
pub fn ssim_brute(a: &[f64], b: &[f64], win: usize, k1: f64, k2: f64, range: f64) -> f64 {
    let c1 = (k1 * range).powi(2);
    let c2 = (k2 * range).powi(2);
    let n = win as f64;
    let count = a.len() - win + 1;
    let mut total = 0.0;
    for s in 0..count {
        let wa = &a[s..s + win];
        let wb = &b[s..s + win];
        let ma = wa.iter().sum::<f64>() / n;
        let mb = wb.iter().sum::<f64>() / n;
        let va = wa.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (n - 1.0);
        let vb = wb.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (n - 1.0);
        let cov = wa.iter().zip(wb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / count as f64
}

/// LU factorization with partial pivoting of a dense row-major matrix.
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(a: &[f64], n: usize) -> Self {
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| lu[i * n + k].abs().total_cmp(&lu[j * n + k].abs())).unwrap();
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            assert!(pivot != 0.0, "singular matrix");
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for c in k + 1..n {
                    lu[i * n + c] -= f * lu[k * n + c];
                }
            }
        }
        Self { n, lu, perm }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    pub fn log_abs_det(&self) -> f64 {
        (0..self.n).map(|i| self.lu[i * self.n + i].abs().ln()).sum()
    }
}

/// Covariance matrix between row sets, element by element through the
/// public single-pair kernel evaluation.
pub fn dense_cov(kernel: &Kernel, a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let mut k = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            k.push(kernel_eval(kernel, x, y).unwrap());
        }
    }
    k
}

/// Dense GP posterior with a constant mean `y_mean` and diagonal `jitter`.
pub fn dense_posterior(
    kernel: &Kernel,
    x: &[Vec<f64>],
    y: &[f64],
    y_mean: f64,
    jitter: f64,
    xstar: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut k = dense_cov(kernel, x, x);
    for i in 0..n {
        k[i * n + i] += jitter;
    }
    let lu = Lu::new(&k, n);
    let centered: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let alpha = lu.solve(&centered);
    let mut mean = Vec::new();
    let mut var = Vec::new();
    for xs in xstar {
        let ks = dense_cov(kernel, std::slice::from_ref(xs), x);
        mean.push(y_mean + ks.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>());
        let v = lu.solve(&ks);
        let kss = kernel_eval(kernel, xs, xs).unwrap();
        var.push(kss - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>());
    }
    (mean, var)
}

/// Dense negative log marginal likelihood of zero-mean `y`.
pub fn dense_nll(kernel: &Kernel, x: &[Vec<f64>], y: &[f64], jitter: f64) -> f64 {
    let n = x.len();
    let mut k = dense_cov(kernel, x, x);
    for i in 0..n {
        k[i * n + i] += jitter;
    }
    let lu = Lu::new(&k, n);
    let alpha = lu.solve(y);
    let quad: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    0.5 * quad + 0.5 * lu.log_abs_det() + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

pub fn small_grid(size: usize, seed: u64) -> Arc<SpectralGrid> {
    let config = SyntheticConfig { height: size, width: size, ..SyntheticConfig::default() };
    Arc::new(generate_synthetic_grid(&config, seed).unwrap())
}

pub fn instrument(grid: &Arc<SpectralGrid>) -> Box<SimulatedInstrument> {
    Box::new(SimulatedInstrument::new(grid.clone()))
}

/// A short run that keeps the tests quick.
pub fn quick_config(initial: usize, iterations: usize) -> BoConfig {
    BoConfig {
        initial,
        iterations,
        train: TrainConfig { steps: 40, refit_steps: 10, hidden: vec![16, 8], ..TrainConfig::default() },
        ..BoConfig::default()
    }
}
