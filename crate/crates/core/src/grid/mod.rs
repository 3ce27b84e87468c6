//! Spectral-grid datasets: a scalar image plus one spectrum per pixel on a
//! shared bias axis. This is the world the simulated instrument serves.

mod instrument;
mod io;
mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use instrument::{AcquisitionLogEntry, Instrument, SimulatedInstrument};
pub use io::{load_csv, load_dataset, save_dataset, MAGIC};
pub use synthetic::{generate_synthetic_grid, synthetic_fields, AsymmetryField, SyntheticConfig, SyntheticFields};

/// Pixel location on a grid. Orders row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridIndex {
    pub row: usize,
    pub col: usize,
}

impl GridIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Row-major flattening of a `window`×`window` image block.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub values: Vec<f64>,
    pub anchor: GridIndex,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub source: GridIndex,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    height: usize,
    width: usize,
    image: Vec<f64>,
    spectra: Vec<f64>,
    bias: Vec<f64>,
    meta: BTreeMap<String, serde_json::Value>,
}

impl SpectralGrid {
    /// Builds a grid, checking shapes and finiteness. `image` is `height*width`
    /// row-major and `spectra` is `height*width*bias.len()` in (row, col, bias)
    /// order.
    pub fn new(
        height: usize,
        width: usize,
        image: Vec<f64>,
        spectra: Vec<f64>,
        bias: Vec<f64>,
        meta: BTreeMap<String, serde_json::Value>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!("grid must be non-empty, got {height}x{width}")));
        }
        if bias.is_empty() {
            return Err(Error::Dimension("spectrum length must be at least 1".into()));
        }
        if image.len() != height * width {
            return Err(Error::Dimension(format!(
                "image has {} values, expected {}",
                image.len(),
                height * width
            )));
        }
        let expected = height * width * bias.len();
        if spectra.len() != expected {
            return Err(Error::Dimension(format!(
                "spectra payload has {} values, expected {expected} ({height}x{width}x{})",
                spectra.len(),
                bias.len()
            )));
        }
        if !bias.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("bias axis".into()));
        }
        if !image.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("image payload".into()));
        }
        if let Some(pos) = spectra.iter().position(|v| !v.is_finite()) {
            let pixel = pos / bias.len();
            return Err(Error::NonFinite(format!(
                "spectra payload at pixel ({}, {})",
                pixel / width,
                pixel % width
            )));
        }
        Ok(Self { height, width, image, spectra, bias, meta })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spectrum_len(&self) -> usize {
        self.bias.len()
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn image(&self) -> &[f64] {
        &self.image
    }

    pub fn spectra(&self) -> &[f64] {
        &self.spectra
    }

    pub fn meta(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.meta
    }

    pub fn contains(&self, idx: GridIndex) -> bool {
        idx.row < self.height && idx.col < self.width
    }

    fn check(&self, idx: GridIndex) -> Result<()> {
        if self.contains(idx) {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: idx, what: "the grid" })
        }
    }

    pub fn image_at(&self, idx: GridIndex) -> Result<f64> {
        self.check(idx)?;
        Ok(self.image[idx.row * self.width + idx.col])
    }

    pub fn spectrum_values(&self, idx: GridIndex) -> Result<&[f64]> {
        self.check(idx)?;
        let l = self.spectrum_len();
        let start = (idx.row * self.width + idx.col) * l;
        Ok(&self.spectra[start..start + l])
    }

    pub fn spectrum(&self, idx: GridIndex) -> Result<Spectrum> {
        Ok(Spectrum { values: self.spectrum_values(idx)?.to_vec(), source: idx })
    }

    /// Same grid with the image min-max rescaled to [0, 1]. A constant image
    /// maps to all zeros.
    pub fn with_unit_image(&self) -> SpectralGrid {
        let (lo, hi) = min_max(&self.image);
        let span = hi - lo;
        let image = self
            .image
            .iter()
            .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect();
        SpectralGrid { image, ..self.clone() }
    }
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Reduces the grid by `factor` in both directions: image by block mean,
/// spectra by the block's top-left pixel.
pub fn downsample_grid(grid: &SpectralGrid, factor: usize) -> Result<SpectralGrid> {
    if factor == 0 || grid.height % factor != 0 || grid.width % factor != 0 {
        return Err(Error::InvalidArgument(format!(
            "downsample factor {factor} must divide grid size {}x{}",
            grid.height, grid.width
        )));
    }
    if factor == 1 {
        return Ok(grid.clone());
    }
    let (h, w, l) = (grid.height / factor, grid.width / factor, grid.spectrum_len());
    let block = (factor * factor) as f64;
    let mut image = Vec::with_capacity(h * w);
    let mut spectra = Vec::with_capacity(h * w * l);
    for r in 0..h {
        for c in 0..w {
            let mut sum = 0.0;
            for dr in 0..factor {
                for dc in 0..factor {
                    sum += grid.image[(r * factor + dr) * grid.width + c * factor + dc];
                }
            }
            image.push(sum / block);
            let top_left = GridIndex::new(r * factor, c * factor);
            spectra.extend_from_slice(grid.spectrum_values(top_left)?);
        }
    }
    let mut meta = grid.meta.clone();
    meta.insert("downsample_factor".into(), serde_json::json!(factor));
    SpectralGrid::new(h, w, image, spectra, grid.bias.clone(), meta)
}

fn window_origin(idx: GridIndex, window: usize) -> Option<(usize, usize)> {
    let half = window / 2;
    Some((idx.row.checked_sub(half)?, idx.col.checked_sub(half)?))
}

fn window_fits(height: usize, width: usize, idx: GridIndex, window: usize) -> bool {
    match window_origin(idx, window) {
        Some((r0, c0)) => r0 + window <= height && c0 + window <= width,
        None => false,
    }
}

/// Interior pixels whose `window`-sized block (top-left at
/// `row - window/2, col - window/2`) lies inside the image, row-major.
pub fn candidate_indices(grid: &SpectralGrid, window: usize) -> Result<Vec<GridIndex>> {
    if window == 0 || window > grid.height.min(grid.width) {
        return Err(Error::InvalidArgument(format!(
            "window {window} does not fit a {}x{} grid",
            grid.height, grid.width
        )));
    }
    let half = window / 2;
    let rows = half..=(grid.height - window + half);
    let cols = half..=(grid.width - window + half);
    Ok(rows
        .flat_map(|r| cols.clone().map(move |c| GridIndex::new(r, c)))
        .collect())
}

/// Lattice shape (rows, cols) spanned by [`candidate_indices`].
pub fn candidate_lattice_dims(grid: &SpectralGrid, window: usize) -> (usize, usize) {
    (grid.height + 1 - window, grid.width + 1 - window)
}

pub fn extract_patch(grid: &SpectralGrid, idx: GridIndex, window: usize) -> Result<Patch> {
    if window == 0 || !window_fits(grid.height, grid.width, idx, window) {
        return Err(Error::IndexOutOfRange { index: idx, what: "the candidate band for this window" });
    }
    let (r0, c0) = window_origin(idx, window).expect("checked by window_fits");
    let mut values = Vec::with_capacity(window * window);
    for r in r0..r0 + window {
        let row = &grid.image[r * grid.width..(r + 1) * grid.width];
        values.extend_from_slice(&row[c0..c0 + window]);
    }
    Ok(Patch { values, anchor: idx, window })
}

/// Min-max rescale to [0, 1].
pub fn normalize_values(values: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = min_max(values);
    if !(hi > lo) {
        return Err(Error::DegenerateSpectrum(None));
    }
    let span = hi - lo;
    Ok(values.iter().map(|v| (v - lo) / span).collect())
}

pub fn normalize_spectrum(s: &Spectrum) -> Result<Spectrum> {
    let values = normalize_values(&s.values).map_err(|_| Error::DegenerateSpectrum(Some(s.source)))?;
    Ok(Spectrum { values, source: s.source })
}
