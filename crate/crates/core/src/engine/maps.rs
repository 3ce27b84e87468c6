use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{candidate_indices, SpectralGrid};
use crate::similarity::{auto_objective, FrozenTarget, SsimParams};

/// Maps over the candidate lattice, row-major `rows`×`cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSet {
    pub rows: usize,
    pub cols: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
}

impl MapSet {
    pub fn new(rows: usize, cols: usize, mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != rows * cols || variance.len() != rows * cols {
            return Err(Error::Dimension(format!("maps must have {rows}x{cols} entries")));
        }
        Ok(Self { rows, cols, mean, variance, truth: None, error: None, mse: None })
    }

    /// Attaches a ground-truth map along with the squared-error map and MSE.
    pub fn with_truth(mut self, truth: Vec<f64>) -> Result<Self> {
        if truth.len() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "truth map has {} entries, estimate has {}",
                truth.len(),
                self.mean.len()
            )));
        }
        let error: Vec<f64> = self.mean.iter().zip(&truth).map(|(m, t)| (m - t).powi(2)).collect();
        self.mse = Some(error.iter().sum::<f64>() / error.len().max(1) as f64);
        self.error = Some(error);
        self.truth = Some(truth);
        Ok(self)
    }
}

/// Exhaustive similarity of every candidate's spectrum to `target`.
pub fn ground_truth_map(grid: &SpectralGrid, target: &FrozenTarget, window: usize, params: &SsimParams) -> Result<Vec<f64>> {
    candidate_indices(grid, window)?
        .into_iter()
        .map(|idx| auto_objective(target, &grid.spectrum(idx)?, params))
        .collect()
}

/// Mean squared difference between two equally sized maps.
pub fn mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() || estimate.is_empty() {
        return Err(Error::Dimension("maps differ in size or are empty".into()));
    }
    Ok(estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / estimate.len() as f64)
}
