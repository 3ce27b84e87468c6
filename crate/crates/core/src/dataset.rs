use crate::grid::Spectrum;

/// Training data D = {X, Y} with the raw spectrum behind every sample, so
/// objectives can be recomputed when the target changes meaning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    /// One flattened patch per sample.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub spectra: Vec<Spectrum>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64, spectrum: Spectrum) {
        self.x.push(x);
        self.y.push(y);
        self.spectra.push(spectrum);
    }

    pub fn best(&self) -> Option<f64> {
        self.y.iter().copied().fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}
