use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{BaseKind, Kernel, KernelKind, Stationary, LOG_PARAM_BOUND};
use super::linalg::{cho_inverse, cho_solve, cholesky_in_place, log_det_from_cholesky, solve_lower};
use super::net::FeatureNet;
use crate::error::{Error, Result};

const MAX_JITTER: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Adam steps for a fit from scratch.
    pub steps: usize,
    /// Adam steps for a warm-started refit.
    pub refit_steps: usize,
    /// Step size for kernel log-hyperparameters.
    pub learning_rate: f64,
    /// Step size for feature-net weights.
    pub net_learning_rate: f64,
    pub jitter: f64,
    pub seed: u64,
    /// Hidden widths of the deep-kernel feature net.
    pub hidden: Vec<usize>,
    /// Latent dimension of the deep-kernel embedding.
    pub latent_dim: usize,
    /// Subtract the training mean before conditioning.
    pub center: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            refit_steps: 40,
            learning_rate: 0.1,
            net_learning_rate: 0.01,
            jitter: 1e-6,
            seed: 0,
            hidden: vec![64, 32],
            latent_dim: 2,
            center: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.refit_steps == 0 {
            return Err(Error::InvalidArgument("optimizer steps must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.net_learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        if !(self.jitter > 0.0) {
            return Err(Error::InvalidArgument("jitter must be positive".into()));
        }
        if self.latent_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("net widths must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major input matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub data: Vec<f64>,
    pub n: usize,
    pub dim: usize,
}

impl Inputs {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("input rows differ in length".into()));
        }
        Ok(Self { data: rows.concat(), n: rows.len(), dim })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

struct Factorized {
    chol: Vec<f64>,
    jitter: f64,
}

/// Cholesky of `k + jitter·I`, escalating jitter ×10 up to 1e-2.
fn factorize(k: &[f64], n: usize, jitter: f64) -> Result<Factorized> {
    let mut jitter = jitter;
    loop {
        let mut a = k.to_vec();
        for i in 0..n {
            a[i * n + i] += jitter;
        }
        match cholesky_in_place(&mut a, n) {
            Ok(()) => return Ok(Factorized { chol: a, jitter }),
            Err(minor) if jitter * 10.0 > MAX_JITTER * 1.000_001 => {
                return Err(Error::Factorization { minor, jitter });
            }
            Err(_) => jitter *= 10.0,
        }
    }
}

fn check_data(kernel: &Kernel, x: &Inputs, y: &[f64]) -> Result<()> {
    if x.n == 0 {
        return Err(Error::InvalidArgument("need at least one training point".into()));
    }
    if x.n != y.len() {
        return Err(Error::Dimension(format!("{} inputs but {} targets", x.n, y.len())));
    }
    if let Some(dim) = kernel.input_dim() {
        if dim != x.dim {
            return Err(Error::Dimension(format!("kernel expects {dim}-d inputs, got {}", x.dim)));
        }
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("training targets".into()));
    }
    Ok(())
}

/// Negative log marginal likelihood of zero-mean `y` under `kernel`:
/// `½ yᵀ(K+jI)⁻¹y + ½ log|K+jI| + ½ n log 2π`. Uses exactly `jitter`.
pub fn nll(kernel: &Kernel, x: &Inputs, y: &[f64], jitter: f64) -> Result<f64> {
    check_data(kernel, x, y)?;
    let z = kernel.features(&x.data, x.n);
    let fdim = kernel.feature_dim(x.dim);
    let mut a = kernel.base.gram(&z, x.n, fdim);
    for i in 0..x.n {
        a[i * x.n + i] += jitter;
    }
    cholesky_in_place(&mut a, x.n).map_err(|minor| Error::Factorization { minor, jitter })?;
    Ok(nll_from_factor(&a, x.n, y))
}

fn nll_from_factor(chol: &[f64], n: usize, y: &[f64]) -> f64 {
    let mut w = y.to_vec();
    solve_lower(chol, n, &mut w);
    let quad: f64 = w.iter().map(|v| v * v).sum();
    0.5 * quad + 0.5 * log_det_from_cholesky(chol, n) + 0.5 * n as f64 * (2.0 * PI).ln()
}

/// `nll` and its gradient with respect to `kernel.params()`. Escalates
/// jitter on factorization failure; returns the jitter actually used.
pub fn nll_with_grad(kernel: &Kernel, x: &Inputs, y: &[f64], jitter: f64) -> Result<(f64, Vec<f64>, f64)> {
    check_data(kernel, x, y)?;
    let n = x.n;
    let fdim = kernel.feature_dim(x.dim);
    let cache = kernel.net.as_ref().map(|net| net.forward_batch(&x.data, n));
    let z: &[f64] = match &cache {
        Some(c) => c.output(),
        None => &x.data,
    };
    let k = kernel.base.gram(z, n, fdim);
    let f = factorize(&k, n, jitter)?;
    let value = nll_from_factor(&f.chol, n, y);

    let alpha = cho_solve(&f.chol, n, y);
    let mut g = cho_inverse(&f.chol, n);
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = 0.5 * (g[i * n + j] - alpha[i] * alpha[j]);
        }
    }

    let nb = kernel.base.n_params();
    let mut grad = vec![0.0; kernel.n_params()];
    match (&kernel.net, &cache) {
        (Some(net), Some(cache)) => {
            let mut grad_z = vec![0.0; n * fdim];
            kernel.base.accumulate_grad(z, n, fdim, &k, &g, &mut grad[..nb], Some(&mut grad_z));
            let net_grad = net.backward(cache, &grad_z);
            grad[nb..].copy_from_slice(&net_grad);
        }
        _ => kernel.base.accumulate_grad(z, n, fdim, &k, &g, &mut grad[..nb], None),
    }
    Ok((value, grad, f.jitter))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: impl Fn(usize) -> f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr(i) * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn median_pairwise_distance(z: &[f64], n: usize, dim: usize) -> f64 {
    let mut d: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            let s: f64 = (0..dim).map(|m| (z[i * dim + m] - z[j * dim + m]).powi(2)).sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let med = d[d.len() / 2];
    if med > 1e-6 {
        med
    } else {
        1.0
    }
}

/// Untrained kernel of `kind`, with scales initialized from the data.
pub fn initial_kernel(kind: KernelKind, x: &Inputs, y: &[f64], config: &TrainConfig) -> Result<Kernel> {
    config.validate()?;
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len().max(1) as f64;
    let variance = var.max(1e-4);
    let net = match kind {
        KernelKind::Deep(_) => {
            let widths: Vec<usize> = std::iter::once(x.dim)
                .chain(config.hidden.iter().copied())
                .chain(std::iter::once(config.latent_dim))
                .collect();
            Some(FeatureNet::new_seeded(&widths, &mut ChaCha8Rng::seed_from_u64(config.seed))?)
        }
        _ => None,
    };
    let (z, fdim) = match &net {
        Some(net) => (net.forward_batch(&x.data, x.n).output().to_vec(), net.output_dim()),
        None => (x.data.clone(), x.dim),
    };
    let scale = median_pairwise_distance(&z, x.n, fdim);
    let base_kind = match kind {
        KernelKind::Rbf | KernelKind::Deep(BaseKind::Rbf) => BaseKind::Rbf,
        KernelKind::Periodic | KernelKind::Deep(BaseKind::Periodic) => BaseKind::Periodic,
    };
    let base_for = |f: f64| match base_kind {
        BaseKind::Rbf => Stationary::rbf(variance, vec![f * scale; fdim]),
        BaseKind::Periodic => Stationary::periodic(variance, (fdim as f64).sqrt(), 4.0 * f * scale),
    };
    // A scale near the median distance can leave noise-free data nearly
    // singular, and the huge first gradients then stall Adam. Start from the
    // most likely of a few multiples instead.
    let centered: Vec<f64> = y.iter().map(|v| v - if config.center { mean } else { 0.0 }).collect();
    let zx = Inputs { data: z, n: x.n, dim: fdim };
    let mut best = (f64::INFINITY, 1.0);
    for f in SCALE_MULTIPLES {
        let k = Kernel::plain(base_for(f));
        if let Ok(v) = nll(&k, &zx, &centered, config.jitter) {
            if v < best.0 {
                best = (v, f);
            }
        }
    }
    let base = base_for(best.1);
    match net {
        Some(net) => Kernel::deep(net, base),
        None => Ok(Kernel::plain(base)),
    }
}

const SCALE_MULTIPLES: [f64; 5] = [0.125, 0.25, 0.5, 1.0, 2.0];

/// Runs `steps` Adam updates on `kernel` against the (already centered) `y`.
/// Returns the jitter the last successful evaluation needed.
pub fn train_kernel(kernel: &mut Kernel, x: &Inputs, y: &[f64], config: &TrainConfig, steps: usize) -> Result<f64> {
    config.validate()?;
    if steps == 0 {
        return Err(Error::InvalidArgument("optimizer steps must be at least 1".into()));
    }
    let nb = kernel.base.n_params();
    let mut params = kernel.params();
    let mut adam = Adam::new(params.len());
    let mut jitter = config.jitter;
    let lr = |i: usize| if i < nb { config.learning_rate } else { config.net_learning_rate };
    for step in 0..steps {
        let (value, grad, used) = match nll_with_grad(kernel, x, y, config.jitter) {
            Ok(r) => r,
            // keep the last parameters that factorized
            Err(e @ Error::Factorization { .. }) if step == 0 => return Err(e),
            Err(Error::Factorization { .. }) => break,
            Err(e) => return Err(e),
        };
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        jitter = used;
        let previous = params.clone();
        adam.step(&mut params, &grad, lr);
        for p in &mut params[..nb] {
            *p = p.clamp(-LOG_PARAM_BOUND, LOG_PARAM_BOUND);
        }
        kernel.set_params(&params);
        if step + 1 == steps {
            // make sure the final parameters still factorize
            if nll_with_grad(kernel, x, y, config.jitter).is_err() {
                kernel.set_params(&previous);
            }
        }
    }
    Ok(jitter)
}

/// A GP conditioned on training data with a fixed kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub kernel: Kernel,
    pub train_x: Inputs,
    pub train_y: Vec<f64>,
    /// Constant mean added back to predictions (0 when not centering).
    pub y_mean: f64,
    pub jitter: f64,
    #[serde(skip)]
    chol: Vec<f64>,
    #[serde(skip)]
    alpha: Vec<f64>,
    #[serde(skip)]
    features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GpModel {
    /// Conditions `kernel` on `(x, y)`. With `center`, the GP models
    /// `y - mean(y)` and predictions add the mean back.
    pub fn condition(kernel: Kernel, x: Inputs, y: Vec<f64>, jitter: f64, center: bool) -> Result<Self> {
        check_data(&kernel, &x, &y)?;
        let n = x.n;
        let y_mean = if center { y.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let centered: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let features = kernel.features(&x.data, n);
        let k = kernel.base.gram(&features, n, kernel.feature_dim(x.dim));
        let f = factorize(&k, n, jitter)?;
        let alpha = cho_solve(&f.chol, n, &centered);
        Ok(Self { kernel, train_x: x, train_y: y, y_mean, jitter: f.jitter, chol: f.chol, alpha, features })
    }

    /// Rebuilds the cached factorization after deserialization.
    pub fn refactor(self) -> Result<Self> {
        let center = self.y_mean != 0.0;
        Self::condition(self.kernel, self.train_x, self.train_y, self.jitter, center)
    }

    pub fn n(&self) -> usize {
        self.train_x.n
    }

    pub fn chol(&self) -> &[f64] {
        &self.chol
    }

    fn centered_y(&self) -> Vec<f64> {
        self.train_y.iter().map(|v| v - self.y_mean).collect()
    }

    pub fn nll(&self) -> Result<f64> {
        nll(&self.kernel, &self.train_x, &self.centered_y(), self.jitter)
    }

    /// Posterior mean and variance at each row of `xstar`; variances are
    /// clamped at zero.
    pub fn posterior(&self, xstar: &Inputs) -> Result<Posterior> {
        let (mean, variance) = self.posterior_unclamped(xstar)?;
        Ok(Posterior { mean, variance: variance.into_iter().map(|v| v.max(0.0)).collect() })
    }

    pub fn posterior_unclamped(&self, xstar: &Inputs) -> Result<(Vec<f64>, Vec<f64>)> {
        if xstar.n > 0 && xstar.dim != self.train_x.dim {
            return Err(Error::Dimension(format!(
                "candidates are {}-d, model trained on {}-d inputs",
                xstar.dim, self.train_x.dim
            )));
        }
        let n = self.n();
        let fdim = self.kernel.feature_dim(self.train_x.dim);
        let fstar = self.kernel.features(&xstar.data, xstar.n);
        let prior_var = self.kernel.base.variance();
        let mut mean = Vec::with_capacity(xstar.n);
        let mut variance = Vec::with_capacity(xstar.n);
        const CHUNK: usize = 256;
        for start in (0..xstar.n).step_by(CHUNK) {
            let m = CHUNK.min(xstar.n - start);
            let block = &fstar[start * fdim..(start + m) * fdim];
            let cross = self.kernel.base.cross(block, m, &self.features, n, fdim);
            for kstar in cross.chunks(n.max(1)).take(m) {
                mean.push(self.y_mean + kstar.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>());
                let mut v = kstar.to_vec();
                solve_lower(&self.chol, n, &mut v);
                variance.push(prior_var - v.iter().map(|x| x * x).sum::<f64>());
            }
        }
        Ok((mean, variance))
    }
}

/// Fits kernel hyperparameters (and net weights for deep kernels) by
/// maximum likelihood with Adam, starting from `warm_start` when given.
pub fn fit_gp(
    x: Inputs,
    y: Vec<f64>,
    kind: KernelKind,
    config: &TrainConfig,
    warm_start: Option<&Kernel>,
) -> Result<GpModel> {
    config.validate()?;
    if x.n < 2 {
        return Err(Error::InvalidArgument("fitting needs at least two training points".into()));
    }
    let mut kernel = match warm_start {
        Some(k) if k.kind() == kind => k.clone(),
        _ => initial_kernel(kind, &x, &y, config)?,
    };
    check_data(&kernel, &x, &y)?;
    let steps = if warm_start.is_some() { config.refit_steps } else { config.steps };
    let y_mean = if config.center { y.iter().sum::<f64>() / y.len() as f64 } else { 0.0 };
    let centered: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let jitter = train_kernel(&mut kernel, &x, &centered, config, steps)?;
    GpModel::condition(kernel, x, y, jitter.max(config.jitter), config.center)
}
