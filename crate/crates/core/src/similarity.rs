//! One-dimensional structural similarity between spectra, and the two
//! objectives built on it: the voting-augmented one used while the operator
//! is still shaping the target, and the plain one used once it is frozen.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{normalize_spectrum, Spectrum};
use crate::recommender::Vote;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    pub win: usize,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { win: 7, k1: 0.01, k2: 0.03, data_range: 1.0 }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.win < 3 || self.win % 2 == 0 {
            return Err(Error::InvalidArgument(format!("ssim window must be odd and >= 3, got {}", self.win)));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.data_range > 0.0) {
            return Err(Error::InvalidArgument("ssim constants and data range must be positive".into()));
        }
        Ok(())
    }
}

/// Mean local SSIM over every stride-1 window of length `params.win`, with
/// uniform weights and unbiased (win - 1) variances.
pub fn ssim(a: &[f64], b: &[f64], params: &SsimParams) -> Result<f64> {
    params.validate()?;
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("ssim inputs differ in length: {} vs {}", a.len(), b.len())));
    }
    let win = params.win;
    if a.len() < win {
        return Err(Error::Dimension(format!("signal length {} shorter than window {win}", a.len())));
    }
    let c1 = (params.k1 * params.data_range).powi(2);
    let c2 = (params.k2 * params.data_range).powi(2);
    let n = win as f64;

    // running window sums
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..win {
        sa += a[i];
        sb += b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
    }
    let windows = a.len() - win + 1;
    let mut total = 0.0;
    for start in 0..windows {
        if start > 0 {
            let (old, new) = (start - 1, start + win - 1);
            sa += a[new] - a[old];
            sb += b[new] - b[old];
            saa += a[new] * a[new] - a[old] * a[old];
            sbb += b[new] * b[new] - b[old] * b[old];
            sab += a[new] * b[new] - a[old] * b[old];
        }
        let (mu_a, mu_b) = (sa / n, sb / n);
        let var_a = (saa - n * mu_a * mu_a) / (n - 1.0);
        let var_b = (sbb - n * mu_b * mu_b) / (n - 1.0);
        let cov = (sab - n * (mu_a * mu_b)) / (n - 1.0);
        total += ((2.0 * (mu_a * mu_b) + c1) * (2.0 * cov + c2))
            / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
    Ok((total / windows as f64).clamp(-1.0, 1.0))
}

/// A target that can no longer change. Obtained from a frozen
/// [`TargetState`](crate::recommender::TargetState) or built explicitly for
/// evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrozenTarget(Vec<f64>);

impl FrozenTarget {
    /// Wraps an already-normalized target vector.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("frozen target must be non-empty with entries in [0, 1]".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Voting-augmented objective: `ssim(target, normalize(s)) + vote * reward`.
pub fn human_objective(
    target: Option<&[f64]>,
    s: &Spectrum,
    vote: Vote,
    reward: f64,
    params: &SsimParams,
) -> Result<f64> {
    let target = target.ok_or(Error::MissingTarget)?;
    let s = normalize_spectrum(s)?;
    Ok(ssim(target, &s.values, params)? + f64::from(vote.value()) * reward)
}

/// Objective against a frozen target; no reward term.
pub fn auto_objective(target: &FrozenTarget, s: &Spectrum, params: &SsimParams) -> Result<f64> {
    let s = normalize_spectrum(s)?;
    ssim(target.values(), &s.values, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridIndex;

    fn spectrum(values: Vec<f64>) -> Spectrum {
        Spectrum { values, source: GridIndex::new(0, 0) }
    }

    #[test]
    fn identity_and_symmetry() {
        let p = SsimParams::default();
        let x: Vec<f64> = (0..20).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        assert!((ssim(&x, &x, &p).unwrap() - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| (v * 3.0).sin()).collect();
        assert_eq!(ssim(&x, &y, &p).unwrap(), ssim(&y, &x, &p).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = SsimParams::default();
        assert!(matches!(ssim(&[0.0; 8], &[0.0; 9], &p), Err(Error::Dimension(_))));
        assert!(matches!(ssim(&[0.0; 6], &[0.0; 6], &p), Err(Error::Dimension(_))));
        let even = SsimParams { win: 4, ..p };
        assert!(ssim(&[0.0; 8], &[0.0; 8], &even).is_err());
    }

    #[test]
    fn objectives() {
        let p = SsimParams::default();
        let t: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let s = spectrum(t.iter().map(|v| 2.0 * v + 5.0).collect());
        let vote0 = Vote::new(0).unwrap();
        let vote2 = Vote::new(2).unwrap();
        assert!((human_objective(Some(&t), &s, vote0, 0.1, &p).unwrap() - 1.0).abs() < 1e-12);
        assert!((human_objective(Some(&t), &s, vote2, 0.1, &p).unwrap() - 1.2).abs() < 1e-12);
        assert!(matches!(human_objective(None, &s, vote2, 0.1, &p), Err(Error::MissingTarget)));
        let frozen = FrozenTarget::new(t.clone()).unwrap();
        assert!((auto_objective(&frozen, &s, &p).unwrap() - 1.0).abs() < 1e-12);
        let flat = spectrum(vec![1.0; 16]);
        assert!(matches!(auto_objective(&frozen, &flat, &p), Err(Error::DegenerateSpectrum(_))));
    }

    proptest::proptest! {
        #[test]
        fn bounded_and_symmetric(
            a in proptest::collection::vec(-5.0f64..5.0, 7..48),
            seed in 0u64..1000,
        ) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * 1.7 + (i as f64 + seed as f64).cos()).collect();
            let p = SsimParams::default();
            let ab = ssim(&a, &b, &p).unwrap();
            let ba = ssim(&b, &a, &p).unwrap();
            proptest::prop_assert!((-1.0..=1.0).contains(&ab));
            proptest::prop_assert!((ab - ba).abs() <= 1e-12);
            proptest::prop_assert!((ssim(&a, &a, &p).unwrap() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn vote_zero_matches_auto(values in proptest::collection::vec(0.0f64..1.0, 8..32), reward in 0.0f64..1.0) {
            proptest::prop_assume!(values.iter().any(|&v| v != values[0]));
            let p = SsimParams::default();
            let target = crate::grid::normalize_values(&values.iter().rev().copied().collect::<Vec<_>>()).unwrap();
            let s = spectrum(values);
            let frozen = FrozenTarget::new(target.clone()).unwrap();
            let auto = auto_objective(&frozen, &s, &p).unwrap();
            let human0 = human_objective(Some(&target), &s, Vote::new(0).unwrap(), reward, &p).unwrap();
            proptest::prop_assert_eq!(auto, human0);
            // affine in reward with slope = vote
            let h1 = human_objective(Some(&target), &s, Vote::new(2).unwrap(), reward, &p).unwrap();
            proptest::prop_assert!((h1 - auto - 2.0 * reward).abs() < 1e-12);
        }
    }
}
