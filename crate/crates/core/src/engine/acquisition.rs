use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    Ei,
    Pi,
    Ucb,
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcquisitionKind::Ei => "ei",
            AcquisitionKind::Pi => "pi",
            AcquisitionKind::Ucb => "ucb",
        })
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ei" => Ok(AcquisitionKind::Ei),
            "pi" => Ok(AcquisitionKind::Pi),
            "ucb" => Ok(AcquisitionKind::Ucb),
            other => Err(Error::InvalidArgument(format!("unknown acquisition function {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Improvement offset for EI and PI.
    pub xi: f64,
    /// Exploration weight for UCB.
    pub kappa: f64,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self { kind: AcquisitionKind::Ei, xi: 0.01, kappa: 2.0 }
    }
}

impl AcquisitionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidArgument(format!("xi must be finite and >= 0, got {}", self.xi)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa must be finite and >= 0, got {}", self.kappa)));
        }
        Ok(())
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Scores every candidate from its posterior mean and variance. `best` is
/// the largest objective observed so far.
pub fn acquisition_scores(means: &[f64], variances: &[f64], best: f64, spec: &AcquisitionSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if means.len() != variances.len() {
        return Err(Error::Dimension(format!("{} means but {} variances", means.len(), variances.len())));
    }
    if let Some(v) = variances.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative or NaN posterior variance {v}")));
    }
    Ok(means
        .iter()
        .zip(variances)
        .map(|(&mu, &var)| {
            let sigma = var.sqrt();
            let gain = mu - best - spec.xi;
            match spec.kind {
                AcquisitionKind::Ucb => mu + spec.kappa * sigma,
                AcquisitionKind::Ei if sigma == 0.0 => gain.max(0.0),
                AcquisitionKind::Pi if sigma == 0.0 => {
                    if gain > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                AcquisitionKind::Ei => {
                    let z = gain / sigma;
                    (sigma * (z * normal_cdf(z) + normal_pdf(z))).max(0.0)
                }
                AcquisitionKind::Pi => normal_cdf(gain / sigma),
            }
        })
        .collect())
}

/// Highest-scoring unexplored candidate; ties go to the earliest candidate
/// in row-major order. NaN scores never win.
pub fn select_next(scores: &[f64], candidates: &[GridIndex], explored: &[bool]) -> Result<GridIndex> {
    if scores.len() != candidates.len() || explored.len() != candidates.len() {
        return Err(Error::Dimension("scores, candidates and explored mask differ in length".into()));
    }
    let mut best: Option<(GridIndex, f64)> = None;
    for ((&c, &s), &done) in candidates.iter().zip(scores).zip(explored) {
        if done {
            continue;
        }
        let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
        match best {
            Some((bc, b)) if s < b || (s == b && bc < c) => {}
            _ => best = Some((c, s)),
        }
    }
    best.map(|(c, _)| c).ok_or(Error::CandidatesExhausted)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn spec(kind: AcquisitionKind, xi: f64, kappa: f64) -> AcquisitionSpec {
        AcquisitionSpec { kind, xi, kappa }
    }

    #[test]
    fn ei_closed_forms() {
        let ei = spec(AcquisitionKind::Ei, 0.0, 0.0);
        assert_eq!(acquisition_scores(&[0.3, 0.5], &[0.0, 0.0], 0.5, &ei).unwrap(), vec![0.0, 0.0]);
        let at_best = acquisition_scores(&[1.0], &[1.0], 1.0, &ei).unwrap()[0];
        assert!((at_best - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(acquisition_scores(&[0.9], &[0.0], 0.5, &ei).unwrap(), vec![0.4]);
    }

    #[test]
    fn ucb_with_zero_kappa_is_the_mean() {
        let means = [0.1, -2.0, 3.5];
        let s = acquisition_scores(&means, &[0.4, 1.0, 9.0], 0.0, &spec(AcquisitionKind::Ucb, 0.0, 0.0)).unwrap();
        assert_eq!(s, means.to_vec());
    }

    #[test]
    fn rejects_negative_variance() {
        assert!(acquisition_scores(&[0.0], &[-1e-3], 0.0, &AcquisitionSpec::default()).is_err());
        assert!(spec(AcquisitionKind::Ei, -0.1, 0.0).validate().is_err());
        assert!("ucb".parse::<AcquisitionKind>().is_ok());
        assert!("foo".parse::<AcquisitionKind>().is_err());
    }

    #[test]
    fn selection_rules() {
        let c: Vec<GridIndex> = (0..4).map(|i| GridIndex::new(2, 2 + i)).collect();
        let none = [false; 4];
        assert_eq!(select_next(&[0.1, 0.9, 0.3, 0.2], &c, &none).unwrap(), c[1]);
        assert_eq!(select_next(&[0.1, 0.9, 0.9, 0.2], &c, &none).unwrap(), c[1]);
        assert_eq!(select_next(&[0.1, 0.9, 0.3, 0.2], &c, &[false, true, false, false]).unwrap(), c[2]);
        assert_eq!(select_next(&[f64::NAN, 0.0, 0.0, 0.0], &c, &none).unwrap(), c[1]);
        assert!(matches!(select_next(&[1.0; 4], &c, &[true; 4]), Err(Error::CandidatesExhausted)));
    }

    proptest! {
        #[test]
        fn ei_pi_nonnegative(mu in -3.0f64..3.0, var in 0.0f64..4.0, best in -3.0f64..3.0, xi in 0.0f64..0.5) {
            for kind in [AcquisitionKind::Ei, AcquisitionKind::Pi] {
                let s = acquisition_scores(&[mu], &[var], best, &spec(kind, xi, 0.0)).unwrap()[0];
                prop_assert!(s >= 0.0);
            }
        }

        #[test]
        fn ucb_monotone_in_sigma(mu in -3.0f64..3.0, a in 0.0f64..4.0, b in 0.0f64..4.0, kappa in 0.01f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s = acquisition_scores(&[mu, mu], &[lo, hi], 0.0, &spec(AcquisitionKind::Ucb, 0.0, kappa)).unwrap();
            prop_assert!(s[0] <= s[1]);
        }

        #[test]
        fn never_selects_explored(scores in proptest::collection::vec(-1.0f64..1.0, 12), mask in proptest::collection::vec(any::<bool>(), 12)) {
            let c: Vec<GridIndex> = (0..12).map(|i| GridIndex::new(i / 4, i % 4)).collect();
            match select_next(&scores, &c, &mask) {
                Ok(idx) => {
                    let pos = c.iter().position(|x| *x == idx).unwrap();
                    prop_assert!(!mask[pos]);
                    for (i, s) in scores.iter().enumerate() {
                        prop_assert!(mask[i] || *s <= scores[pos]);
                    }
                }
                Err(_) => prop_assert!(mask.iter().all(|m| *m)),
            }
        }
    }
}
