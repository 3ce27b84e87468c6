use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SpectralGrid;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BGRD";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    height: usize,
    width: usize,
    spectrum_len: usize,
    bias: Vec<f64>,
    #[serde(default)]
    meta: BTreeMap<String, serde_json::Value>,
}

/// Writes the grid as `BGRD` + manifest length + JSON manifest + float32 LE
/// image and spectra payloads.
pub fn save_dataset(grid: &SpectralGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let manifest = Manifest {
        height: grid.height(),
        width: grid.width(),
        spectrum_len: grid.spectrum_len(),
        bias: grid.bias().to_vec(),
        meta: grid.meta().clone(),
    };
    let manifest = serde_json::to_vec(&manifest)?;
    let manifest_len = u32::try_from(manifest.len())
        .map_err(|_| Error::Format("manifest exceeds 4 GiB".into()))?;

    let mut buf = Vec::with_capacity(8 + manifest.len() + 4 * (grid.image().len() + grid.spectra().len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&manifest_len.to_le_bytes());
    buf.extend_from_slice(&manifest);
    for v in grid.image().iter().chain(grid.spectra()) {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<SpectralGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&bytes)
}

fn parse_dataset(bytes: &[u8]) -> Result<SpectralGrid> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing BGRD magic".into()));
    }
    let manifest_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() < manifest_len {
        return Err(Error::Format(format!(
            "manifest length {manifest_len} exceeds file size"
        )));
    }
    let manifest: Manifest = serde_json::from_slice(&body[..manifest_len])
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    if manifest.bias.len() != manifest.spectrum_len {
        return Err(Error::Dimension(format!(
            "manifest spectrum_len {} but bias has {} entries",
            manifest.spectrum_len,
            manifest.bias.len()
        )));
    }
    let payload = &body[manifest_len..];
    if payload.len() % 4 != 0 {
        return Err(Error::Format("payload is not a whole number of float32 values".into()));
    }
    let pixels = manifest.height * manifest.width;
    let expected = pixels * (1 + manifest.spectrum_len);
    let count = payload.len() / 4;
    if count != expected {
        return Err(Error::Dimension(format!(
            "payload has {count} floats, expected {expected} ({}x{} image + {}x{}x{} spectra)",
            manifest.height, manifest.width, manifest.height, manifest.width, manifest.spectrum_len
        )));
    }
    let mut floats = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    let image: Vec<f64> = floats.by_ref().take(pixels).collect();
    let spectra: Vec<f64> = floats.collect();
    SpectralGrid::new(manifest.height, manifest.width, image, spectra, manifest.bias, manifest.meta)
}

/// Imports a hand-built fixture. `spectra_csv` has a header `row,col,<bias...>`
/// followed by one line per pixel; `image_csv` is `height` lines of `width`
/// comma-separated values (no header).
pub fn load_csv(spectra_csv: impl AsRef<Path>, image_csv: impl AsRef<Path>) -> Result<SpectralGrid> {
    let image_path = image_csv.as_ref();
    let mut image_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(image_path)
        .map_err(|e| csv_error(image_path, e))?;
    let mut image_rows: Vec<Vec<f64>> = Vec::new();
    for record in image_reader.records() {
        let record = record.map_err(|e| csv_error(image_path, e))?;
        image_rows.push(parse_fields(record.iter(), image_path)?);
    }
    let height = image_rows.len();
    let width = image_rows.first().map_or(0, Vec::len);
    if image_rows.iter().any(|r| r.len() != width) {
        return Err(Error::Dimension("image csv rows have differing lengths".into()));
    }

    let spectra_path = spectra_csv.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(spectra_path)
        .map_err(|e| csv_error(spectra_path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(spectra_path, e))?.clone();
    if headers.len() < 3 {
        return Err(Error::Format("spectra csv header must be row,col,<bias values>".into()));
    }
    let bias = parse_fields(headers.iter().skip(2), spectra_path)?;
    let l = bias.len();
    let mut spectra = vec![f64::NAN; height * width * l];
    let mut seen = vec![false; height * width];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(spectra_path, e))?;
        if record.len() != l + 2 {
            return Err(Error::Dimension(format!(
                "spectra csv line has {} spectrum values, expected {l}",
                record.len().saturating_sub(2)
            )));
        }
        let row: usize = parse_index(&record[0], spectra_path)?;
        let col: usize = parse_index(&record[1], spectra_path)?;
        if row >= height || col >= width {
            return Err(Error::Dimension(format!("pixel ({row}, {col}) outside {height}x{width} image")));
        }
        let pixel = row * width + col;
        let values = parse_fields(record.iter().skip(2), spectra_path)?;
        spectra[pixel * l..(pixel + 1) * l].copy_from_slice(&values);
        seen[pixel] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Dimension(format!(
            "spectra csv has no line for pixel ({}, {})",
            missing / width.max(1),
            missing % width.max(1)
        )));
    }
    let image = image_rows.into_iter().flatten().collect();
    SpectralGrid::new(height, width, image, spectra, bias, BTreeMap::new())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

fn parse_index(field: &str, path: &Path) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad pixel index {field:?}", path.display())))
}

fn parse_fields<'a>(fields: impl Iterator<Item = &'a str>, path: &Path) -> Result<Vec<f64>> {
    fields
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| Error::Format(format!("{}: bad number {f:?}", path.display())))
        })
        .collect()
}
