use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{GridIndex, SpectralGrid, Spectrum};
use crate::error::{Error, Result};

/// Something that returns the spectrum measured at a grid location.
pub trait Instrument {
    fn grid(&self) -> &SpectralGrid;
    fn acquire(&mut self, idx: GridIndex) -> Result<Spectrum>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionLogEntry {
    pub seq: u64,
    pub index: GridIndex,
}

/// Replays a pre-acquired grid. Acquisitions are table lookups and are
/// logged with a monotonically increasing sequence number.
#[derive(Debug, Clone)]
pub struct SimulatedInstrument {
    grid: Arc<SpectralGrid>,
    log: Vec<AcquisitionLogEntry>,
}

impl SimulatedInstrument {
    pub fn new(grid: Arc<SpectralGrid>) -> Self {
        Self { grid, log: Vec::new() }
    }

    pub fn log(&self) -> &[AcquisitionLogEntry] {
        &self.log
    }

    pub fn shared_grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }
}

impl Instrument for SimulatedInstrument {
    fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn acquire(&mut self, idx: GridIndex) -> Result<Spectrum> {
        if !self.grid.contains(idx) {
            return Err(Error::IndexOutOfRange { index: idx, what: "the instrument grid" });
        }
        let spectrum = self.grid.spectrum(idx)?;
        let seq = self.log.last().map_or(0, |e| e.seq + 1);
        self.log.push(AcquisitionLogEntry { seq, index: idx });
        Ok(spectrum)
    }
}
