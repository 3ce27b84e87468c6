//! Desk-scale stand-in for a ferroelectric film: every pixel carries a
//! butterfly-shaped amplitude loop whose symmetry is set by a smooth latent
//! asymmetry field, and the scalar image only partially tracks that field.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{min_max, SpectralGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AsymmetryField {
    /// Smooth random field squashed through a logistic to form domains.
    Smooth { length: f64, sharpness: f64, threshold: f64 },
    Constant { value: f64 },
    /// Left half symmetric (a = 0), right half at `value`.
    HalfPlane { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub height: usize,
    pub width: usize,
    /// Total samples per loop; split evenly into an up-sweep and a down-sweep.
    pub spectrum_len: usize,
    /// Sweep spans `-bias_max..=bias_max` volts.
    pub bias_max: f64,
    /// How strongly the image tracks the asymmetry field, in [0, 1].
    pub correlation: f64,
    pub asymmetry: AsymmetryField,
    /// Correlation length (pixels) of the image field independent of asymmetry.
    pub image_length: f64,
    pub coercive_mean: f64,
    pub coercive_spread: f64,
    pub amplitude_spread: f64,
    pub loop_width: f64,
    /// Coercive-bias imprint at full asymmetry, as a fraction of the coercive bias.
    pub imprint: f64,
    /// Positive-bias saturation loss at full asymmetry.
    pub saturation_drop: f64,
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            height: 50,
            width: 50,
            spectrum_len: 64,
            bias_max: 4.0,
            correlation: 0.2,
            asymmetry: AsymmetryField::Smooth { length: 5.0, sharpness: 8.0, threshold: 0.5 },
            image_length: 4.0,
            coercive_mean: 1.5,
            coercive_spread: 0.3,
            amplitude_spread: 0.3,
            loop_width: 0.5,
            imprint: 0.6,
            saturation_drop: 0.6,
            noise: 0.01,
        }
    }
}

/// Latent per-pixel fields behind a synthetic grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFields {
    pub asymmetry: Vec<f64>,
    pub coercive: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub independent: Vec<f64>,
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument("synthetic grid needs positive height and width".into()));
        }
        if self.spectrum_len < 4 || self.spectrum_len % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "spectrum_len must be even and at least 4, got {}",
                self.spectrum_len
            )));
        }
        if !(self.bias_max > 0.0) || !self.bias_max.is_finite() {
            return Err(Error::InvalidArgument("bias range must have non-zero width".into()));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::InvalidArgument("correlation must lie in [0, 1]".into()));
        }
        if !(self.loop_width > 0.0) || self.image_length < 0.0 || self.noise < 0.0 {
            return Err(Error::InvalidArgument("loop_width must be positive; lengths and noise non-negative".into()));
        }
        match self.asymmetry {
            AsymmetryField::Smooth { length, sharpness, .. } if length < 0.0 || sharpness <= 0.0 => {
                Err(Error::InvalidArgument("asymmetry length must be >= 0 and sharpness > 0".into()))
            }
            AsymmetryField::Constant { value } | AsymmetryField::HalfPlane { value } if !(0.0..=1.0).contains(&value) => {
                Err(Error::InvalidArgument("asymmetry value must lie in [0, 1]".into()))
            }
            _ => Ok(()),
        }
    }

    /// Up-sweep then down-sweep; the two branches visit exactly negated
    /// voltages so loops can be compared at V and -V.
    pub fn bias_axis(&self) -> Vec<f64> {
        let n = self.spectrum_len / 2;
        let denom = (n - 1) as f64;
        let up: Vec<f64> = (0..n)
            .map(|k| self.bias_max * (2.0 * k as f64 - denom) / denom)
            .collect();
        up.iter().copied().chain(up.iter().rev().copied()).collect()
    }
}

fn smooth_field(rng: &mut ChaCha8Rng, h: usize, w: usize, length: f64) -> Vec<f64> {
    let noise: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let field = if length > 0.0 { blur(&noise, h, w, length) } else { noise };
    rescale(&field)
}

fn rescale(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(values);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with reflecting borders.
fn blur(values: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-0.5 * (d as f64 / sigma).powi(2)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = (-radius..=radius)
                .zip(&taps)
                .map(|(d, t)| t * values[r * w + reflect(c as isize + d, w)])
                .sum::<f64>()
                / norm;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = (-radius..=radius)
                .zip(&taps)
                .map(|(d, t)| t * tmp[reflect(r as isize + d, h) * w + c])
                .sum::<f64>()
                / norm;
        }
    }
    out
}

pub fn synthetic_fields(config: &SyntheticConfig, seed: u64) -> Result<SyntheticFields> {
    config.validate()?;
    let (h, w) = (config.height, config.width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let asymmetry = match config.asymmetry {
        AsymmetryField::Smooth { length, sharpness, threshold } => {
            let f = smooth_field(&mut rng, h, w, length);
            let squashed: Vec<f64> = f
                .iter()
                .map(|v| 1.0 / (1.0 + (-sharpness * (v - threshold)).exp()))
                .collect();
            rescale(&squashed)
        }
        AsymmetryField::Constant { value } => vec![value; h * w],
        AsymmetryField::HalfPlane { value } => (0..h * w)
            .map(|i| if i % w < w / 2 { 0.0 } else { value })
            .collect(),
    };
    let coercive = smooth_field(&mut rng, h, w, config.image_length.max(1.0));
    let amplitude = smooth_field(&mut rng, h, w, config.image_length.max(1.0));
    let independent = smooth_field(&mut rng, h, w, config.image_length);
    Ok(SyntheticFields { asymmetry, coercive, amplitude, independent })
}

/// Amplitude loop sampled on `bias` (up-sweep then down-sweep).
fn butterfly_loop<'a>(
    config: &'a SyntheticConfig,
    bias: &'a [f64],
    asym: f64,
    coercive: f64,
    amplitude: f64,
) -> impl Iterator<Item = f64> + 'a {
    let half = bias.len() / 2;
    let up_switch = coercive * (1.0 + config.imprint * asym);
    let down_switch = coercive * (1.0 - config.imprint * asym);
    bias.iter().enumerate().map(move |(k, &v)| {
        let gain = 1.0 - config.saturation_drop * asym * 0.5 * (1.0 + v.tanh());
        let arg = if k < half { (v - up_switch) / config.loop_width } else { (v + down_switch) / config.loop_width };
        amplitude * gain * arg.tanh().abs()
    })
}

/// Deterministic in `(config, seed)`. Payload values are float32-representable
/// so a saved copy reloads bit-exactly.
pub fn generate_synthetic_grid(config: &SyntheticConfig, seed: u64) -> Result<SpectralGrid> {
    let fields = synthetic_fields(config, seed)?;
    let (h, w) = (config.height, config.width);
    let bias = config.bias_axis();

    // noise stream is separate from the field stream
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, config.noise.max(f64::MIN_POSITIVE)).expect("finite std");

    let mut spectra = Vec::with_capacity(h * w * bias.len());
    for p in 0..h * w {
        let coercive = config.coercive_mean + config.coercive_spread * (2.0 * fields.coercive[p] - 1.0);
        let amplitude = 1.0 + config.amplitude_spread * (2.0 * fields.amplitude[p] - 1.0);
        for v in butterfly_loop(config, &bias, fields.asymmetry[p], coercive, amplitude) {
            let eps = if config.noise > 0.0 { noise.sample(&mut noise_rng) } else { 0.0 };
            spectra.push((v + eps) as f32 as f64);
        }
    }

    let tracked = rescale(&fields.asymmetry);
    let rho = config.correlation;
    let image = tracked
        .iter()
        .zip(&fields.independent)
        .map(|(a, b)| (rho * a + (1.0 - rho) * b) as f32 as f64)
        .collect();

    let mut meta = BTreeMap::new();
    meta.insert("generator".into(), serde_json::json!("synthetic-butterfly"));
    meta.insert("seed".into(), serde_json::json!(seed));
    meta.insert("config".into(), serde_json::to_value(config)?);
    SpectralGrid::new(h, w, image, spectra, bias.iter().map(|&b| b as f32 as f64).collect(), meta)
}
