use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::net::FeatureNet;
use crate::error::{Error, Result};

/// Bounds on every log-hyperparameter; keeps `exp` finite during training.
pub(crate) const LOG_PARAM_BOUND: f64 = 15.0;

/// Which latent-space kernel a deep kernel feeds its embeddings into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Rbf,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Rbf,
    Periodic,
    Deep(BaseKind),
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Rbf => "rbf",
            KernelKind::Periodic => "periodic",
            KernelKind::Deep(BaseKind::Rbf) => "deep",
            KernelKind::Deep(BaseKind::Periodic) => "deep-periodic",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(KernelKind::Rbf),
            "periodic" => Ok(KernelKind::Periodic),
            "deep" | "deep-rbf" => Ok(KernelKind::Deep(BaseKind::Rbf)),
            "deep-periodic" => Ok(KernelKind::Deep(BaseKind::Periodic)),
            other => Err(Error::InvalidArgument(format!("unknown kernel {other:?} (rbf|periodic|deep|deep-periodic)"))),
        }
    }
}

impl Serialize for KernelKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KernelKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Stationary kernel over feature vectors, parameterized in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stationary {
    /// `σ² exp(-½ Σ_m (x_m - x'_m)² / θ_m²)`
    Rbf { log_variance: f64, log_lengthscales: Vec<f64> },
    /// `σ² exp(-2 Σ_m sin²(π (x_m - x'_m) / p) / ℓ²)`, a product of
    /// one-dimensional periodic kernels sharing `ℓ` and `p`.
    Periodic { log_variance: f64, log_lengthscale: f64, log_period: f64 },
}

impl Stationary {
    pub fn rbf(variance: f64, lengthscales: Vec<f64>) -> Self {
        Stationary::Rbf { log_variance: variance.ln(), log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect() }
    }

    pub fn periodic(variance: f64, lengthscale: f64, period: f64) -> Self {
        Stationary::Periodic {
            log_variance: variance.ln(),
            log_lengthscale: lengthscale.ln(),
            log_period: period.ln(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Stationary::Rbf { log_variance, .. } | Stationary::Periodic { log_variance, .. } => log_variance.exp(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Stationary::Rbf { log_lengthscales, .. } => 1 + log_lengthscales.len(),
            Stationary::Periodic { .. } => 3,
        }
    }

    /// Input dimension the kernel requires, if fixed.
    fn input_dim(&self) -> Option<usize> {
        match self {
            Stationary::Rbf { log_lengthscales, .. } => Some(log_lengthscales.len()),
            Stationary::Periodic { .. } => None,
        }
    }

    pub(crate) fn params_into(&self, out: &mut Vec<f64>) {
        match self {
            Stationary::Rbf { log_variance, log_lengthscales } => {
                out.push(*log_variance);
                out.extend_from_slice(log_lengthscales);
            }
            Stationary::Periodic { log_variance, log_lengthscale, log_period } => {
                out.extend_from_slice(&[*log_variance, *log_lengthscale, *log_period]);
            }
        }
    }

    pub(crate) fn set_params(&mut self, p: &[f64]) {
        match self {
            Stationary::Rbf { log_variance, log_lengthscales } => {
                *log_variance = p[0];
                log_lengthscales.copy_from_slice(&p[1..]);
            }
            Stationary::Periodic { log_variance, log_lengthscale, log_period } => {
                *log_variance = p[0];
                *log_lengthscale = p[1];
                *log_period = p[2];
            }
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Stationary::Rbf { log_variance, log_lengthscales } => {
                let q: f64 = a
                    .iter()
                    .zip(b)
                    .zip(log_lengthscales)
                    .map(|((x, y), ll)| {
                        let d = (x - y) * (-ll).exp();
                        d * d
                    })
                    .sum();
                log_variance.exp() * (-0.5 * q).exp()
            }
            Stationary::Periodic { log_variance, log_lengthscale, log_period } => {
                let w = PI / log_period.exp();
                let q: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let s = (w * (x - y)).sin();
                        s * s
                    })
                    .sum();
                log_variance.exp() * (-2.0 * q / (2.0 * log_lengthscale).exp()).exp()
            }
        }
    }

    /// Gram matrix of `n` row-major `dim`-vectors.
    pub(crate) fn gram(&self, z: &[f64], n: usize, dim: usize) -> Vec<f64> {
        let p = self.prepare(z, n, dim);
        let mut k = vec![0.0; n * n];
        let var = self.variance();
        for i in 0..n {
            k[i * n + i] = var;
            for j in 0..i {
                let v = self.prepared_eval(&p, i, &p, j);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }

    /// Kernel values between every row of `a` and every row of `b`,
    /// row-major `na`×`nb`.
    pub(crate) fn cross(&self, a: &[f64], na: usize, b: &[f64], nb: usize, dim: usize) -> Vec<f64> {
        let (pa, pb) = (self.prepare(a, na, dim), self.prepare(b, nb, dim));
        let mut out = Vec::with_capacity(na * nb);
        for i in 0..na {
            for j in 0..nb {
                out.push(self.prepared_eval(&pa, i, &pb, j));
            }
        }
        out
    }

    /// Per-point transform that turns kernel evaluation into arithmetic:
    /// inputs divided by lengthscales for RBF, `(sin, cos)` of the phase
    /// for periodic.
    fn prepare(&self, z: &[f64], n: usize, dim: usize) -> Prepared {
        match self {
            Stationary::Rbf { log_lengthscales, .. } => {
                let inv: Vec<f64> = log_lengthscales.iter().map(|ll| (-ll).exp()).collect();
                let scaled = z.chunks(dim).flat_map(|row| row.iter().zip(&inv).map(|(x, s)| x * s)).collect();
                Prepared { dim, a: scaled, b: Vec::new() }
            }
            Stationary::Periodic { log_period, .. } => {
                let w = PI / log_period.exp();
                let (sin, cos) = z[..n * dim].iter().map(|x| (w * x).sin_cos()).unzip();
                Prepared { dim, a: sin, b: cos }
            }
        }
    }

    fn prepared_eval(&self, p: &Prepared, i: usize, q: &Prepared, j: usize) -> f64 {
        let d = p.dim;
        match self {
            Stationary::Rbf { log_variance, .. } => {
                let (x, y) = (&p.a[i * d..(i + 1) * d], &q.a[j * d..(j + 1) * d]);
                let r: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                log_variance.exp() * (-0.5 * r).exp()
            }
            Stationary::Periodic { log_variance, log_lengthscale, .. } => {
                let (si, ci) = (&p.a[i * d..(i + 1) * d], &p.b[i * d..(i + 1) * d]);
                let (sj, cj) = (&q.a[j * d..(j + 1) * d], &q.b[j * d..(j + 1) * d]);
                let mut r = 0.0;
                for m in 0..d {
                    // sin(u_i - u_j)
                    let s = si[m] * cj[m] - ci[m] * sj[m];
                    r += s * s;
                }
                log_variance.exp() * (-2.0 * r * (-2.0 * log_lengthscale).exp()).exp()
            }
        }
    }

    /// Accumulates `Σ_ij g_ij ∂k_ij/∂θ` into `grad` (log-parameters) and, when
    /// requested, `Σ_j 2 g_ij ∂k_ij/∂z_i` into `grad_z`. `g` must be symmetric.
    pub(crate) fn accumulate_grad(
        &self,
        z: &[f64],
        n: usize,
        dim: usize,
        k: &[f64],
        g: &[f64],
        grad: &mut [f64],
        mut grad_z: Option<&mut [f64]>,
    ) {
        // diagonal: only the variance depends on θ, and stationary kernels
        // have zero derivative in z at zero distance
        let diag: f64 = (0..n).map(|i| g[i * n + i] * k[i * n + i]).sum();
        grad[0] += diag;
        match self {
            Stationary::Rbf { log_lengthscales, .. } => {
                let inv_sq: Vec<f64> = log_lengthscales.iter().map(|ll| (-2.0 * ll).exp()).collect();
                for i in 0..n {
                    let zi = &z[i * dim..(i + 1) * dim];
                    for j in 0..i {
                        let gk = 2.0 * g[i * n + j] * k[i * n + j];
                        if gk == 0.0 {
                            continue;
                        }
                        grad[0] += gk;
                        let zj = &z[j * dim..(j + 1) * dim];
                        for m in 0..dim {
                            let d = zi[m] - zj[m];
                            grad[1 + m] += gk * d * d * inv_sq[m];
                        }
                        if let Some(gz) = grad_z.as_deref_mut() {
                            for m in 0..dim {
                                let f = gk * (zi[m] - zj[m]) * inv_sq[m];
                                gz[i * dim + m] -= f;
                                gz[j * dim + m] += f;
                            }
                        }
                    }
                }
            }
            Stationary::Periodic { log_lengthscale, log_period, .. } => {
                let inv_l2 = (-2.0 * log_lengthscale).exp();
                let period = log_period.exp();
                let p = self.prepare(z, n, dim);
                for i in 0..n {
                    let zi = &z[i * dim..(i + 1) * dim];
                    for j in 0..i {
                        let gk = 2.0 * g[i * n + j] * k[i * n + j];
                        if gk == 0.0 {
                            continue;
                        }
                        let zj = &z[j * dim..(j + 1) * dim];
                        let w = PI / period;
                        grad[0] += gk;
                        let (mut q, mut dp) = (0.0, 0.0);
                        for m in 0..dim {
                            let d = zi[m] - zj[m];
                            // angle-difference identities for u = w (z_im - z_jm)
                            let (si, ci) = (p.a[i * dim + m], p.b[i * dim + m]);
                            let (sj, cj) = (p.a[j * dim + m], p.b[j * dim + m]);
                            let s = si * cj - ci * sj;
                            let s2 = 2.0 * s * (ci * cj + si * sj);
                            q += s * s;
                            dp += d * s2;
                            if let Some(gz) = grad_z.as_deref_mut() {
                                // ∂k/∂z_im = -k (2π / (ℓ² p)) sin(2u_m)
                                let f = gk * 2.0 * w * inv_l2 * s2;
                                gz[i * dim + m] -= f;
                                gz[j * dim + m] += f;
                            }
                        }
                        grad[1] += gk * 4.0 * q * inv_l2;
                        grad[2] += gk * 2.0 * w * inv_l2 * dp;
                    }
                }
            }
        }
    }
}

struct Prepared {
    dim: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Covariance function over raw patches: a stationary kernel, optionally
/// applied after a learned feature map (deep kernel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub base: Stationary,
    pub net: Option<FeatureNet>,
}

impl Kernel {
    pub fn plain(base: Stationary) -> Self {
        Self { base, net: None }
    }

    pub fn deep(net: FeatureNet, base: Stationary) -> Result<Self> {
        if let Some(dim) = base.input_dim() {
            if dim != net.output_dim() {
                return Err(Error::Dimension(format!(
                    "base kernel expects {dim}-d features, net emits {}",
                    net.output_dim()
                )));
            }
        }
        Ok(Self { base, net: Some(net) })
    }

    pub fn kind(&self) -> KernelKind {
        match (&self.net, &self.base) {
            (None, Stationary::Rbf { .. }) => KernelKind::Rbf,
            (None, Stationary::Periodic { .. }) => KernelKind::Periodic,
            (Some(_), Stationary::Rbf { .. }) => KernelKind::Deep(BaseKind::Rbf),
            (Some(_), Stationary::Periodic { .. }) => KernelKind::Deep(BaseKind::Periodic),
        }
    }

    pub fn n_params(&self) -> usize {
        self.base.n_params() + self.net.as_ref().map_or(0, FeatureNet::n_params)
    }

    /// Log-hyperparameters first, then net weights layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.base.params_into(&mut out);
        if let Some(net) = &self.net {
            net.params_into(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let nb = self.base.n_params();
        self.base.set_params(&p[..nb]);
        if let Some(net) = &mut self.net {
            net.set_params(&p[nb..]);
        }
    }

    /// Dimension of raw inputs, if the kernel pins it.
    pub fn input_dim(&self) -> Option<usize> {
        match &self.net {
            Some(net) => Some(net.input_dim()),
            None => self.base.input_dim(),
        }
    }

    /// Features the base kernel sees for `n` row-major inputs.
    pub(crate) fn features(&self, x: &[f64], n: usize) -> Vec<f64> {
        match &self.net {
            Some(net) => net.forward_batch(x, n).output().to_vec(),
            None => x.to_vec(),
        }
    }

    pub(crate) fn feature_dim(&self, input_dim: usize) -> usize {
        self.net.as_ref().map_or(input_dim, FeatureNet::output_dim)
    }
}

/// Covariance between two raw inputs.
pub fn kernel_eval(kernel: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("kernel inputs differ in length: {} vs {}", x.len(), y.len())));
    }
    if let Some(dim) = kernel.input_dim() {
        if dim != x.len() {
            return Err(Error::Dimension(format!("kernel expects {dim}-d inputs, got {}", x.len())));
        }
    }
    match &kernel.net {
        Some(net) => Ok(kernel.base.eval(&net.embed(x)?, &net.embed(y)?)),
        None => Ok(kernel.base.eval(x, y)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::net::Dense;

    #[test]
    fn zero_distance_gives_variance() {
        let x = [0.3, -1.0, 2.0];
        let rbf = Kernel::plain(Stationary::rbf(2.5, vec![0.7, 1.1, 3.0]));
        assert_eq!(kernel_eval(&rbf, &x, &x).unwrap(), 2.5_f64.ln().exp());
        let per = Kernel::plain(Stationary::periodic(1.7, 0.4, 2.0));
        assert_eq!(kernel_eval(&per, &x, &x).unwrap(), 1.7_f64.ln().exp());
    }

    #[test]
    fn rbf_unit_case() {
        let k = Kernel::plain(Stationary::rbf(1.0, vec![1.0, 1.0]));
        let v = kernel_eval(&k, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn periodic_full_period() {
        let k = Kernel::plain(Stationary::periodic(1.3, 0.5, 2.0));
        let v = kernel_eval(&k, &[0.0], &[2.0]).unwrap();
        assert!((v - 1.3).abs() < 1e-12);
    }

    #[test]
    fn identity_net_reduces_to_base() {
        let net = FeatureNet::from_layers(vec![Dense {
            inputs: 2,
            outputs: 2,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
        }])
        .unwrap();
        for base in [Stationary::rbf(1.4, vec![0.6, 2.0]), Stationary::periodic(0.8, 1.2, 1.5)] {
            let deep = Kernel::deep(net.clone(), base.clone()).unwrap();
            let plain = Kernel::plain(base);
            let (x, y) = ([0.25, -1.5], [1.0, 0.75]);
            assert_eq!(kernel_eval(&deep, &x, &y).unwrap(), kernel_eval(&plain, &x, &y).unwrap());
        }
    }

    #[test]
    fn dimension_mismatch() {
        let k = Kernel::plain(Stationary::rbf(1.0, vec![1.0, 1.0]));
        assert!(kernel_eval(&k, &[0.0, 1.0], &[0.0]).is_err());
        assert!(kernel_eval(&k, &[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn kind_strings() {
        for s in ["rbf", "periodic", "deep", "deep-periodic"] {
            assert_eq!(s.parse::<KernelKind>().unwrap().to_string(), s);
        }
        assert!("matern".parse::<KernelKind>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn symmetric(a in proptest::collection::vec(-3.0f64..3.0, 4), b in proptest::collection::vec(-3.0f64..3.0, 4)) {
            let kernels = [
                Kernel::plain(Stationary::rbf(1.3, vec![0.5, 1.0, 2.0, 0.7])),
                Kernel::plain(Stationary::periodic(0.9, 0.8, 1.7)),
            ];
            for k in &kernels {
                let d = kernel_eval(k, &a, &b).unwrap() - kernel_eval(k, &b, &a).unwrap();
                proptest::prop_assert!(d.abs() <= 1e-12);
            }
        }
    }
}
