//! Persisted run trajectories: the event log, map snapshots and the export
//! directory layout, plus replay of an event log.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::engine::{BoConfig, MapSet};
use crate::error::{Error, Result};
use crate::grid::{extract_patch, GridIndex, SpectralGrid};
use crate::recommender::{Phase, Preference, TargetState, Vote};
use crate::similarity::{auto_objective, human_objective};
use crate::surrogate::GpModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Acquisition { seq: u64, iteration: usize, index: GridIndex },
    Vote { seq: u64, index: GridIndex, vote: Vote, preference: Preference, target: Option<Vec<f64>>, vote_weight: f64 },
    Satisfaction { seq: u64, iteration: usize, satisfied: bool },
    Freeze { seq: u64, target: Vec<f64> },
    /// Every stored objective after the switch to the frozen target.
    Recompute { seq: u64, y: Vec<f64> },
    /// A sample joined the training data with objective `y`.
    Sample { seq: u64, iteration: usize, index: GridIndex, y: f64 },
}

impl Event {
    pub fn seq(&self) -> u64 {
        match self {
            Event::Acquisition { seq, .. }
            | Event::Vote { seq, .. }
            | Event::Satisfaction { seq, .. }
            | Event::Freeze { seq, .. }
            | Event::Recompute { seq, .. }
            | Event::Sample { seq, .. } => *seq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub iteration: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Wall time of each surrogate fit, in milliseconds.
    pub fit_ms: Vec<f64>,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Finished,
    Aborted,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub height: usize,
    pub width: usize,
    pub spectrum_len: usize,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl GridSummary {
    pub fn of(grid: &SpectralGrid) -> Self {
        Self { height: grid.height(), width: grid.width(), spectrum_len: grid.spectrum_len(), meta: grid.meta().clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: BoConfig,
    pub grid: GridSummary,
    pub status: RunStatus,
    pub explored: Vec<GridIndex>,
    /// Final objective of every explored sample, in exploration order.
    pub y: Vec<f64>,
    pub events: Vec<Event>,
    pub target: Option<Vec<f64>>,
    pub frozen: bool,
    pub snapshots: Vec<MapSnapshot>,
    pub final_maps: Option<MapSet>,
    pub model: Option<GpModel>,
    pub timings: Timings,
}

/// Contents of `run.json`. Holds nothing time-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: BoConfig,
    pub grid: GridSummary,
    pub status: RunStatus,
    pub aborted: bool,
    pub evaluations: usize,
    pub explored: Vec<GridIndex>,
    pub y: Vec<f64>,
    pub target: Option<Vec<f64>>,
    pub frozen: bool,
    pub mse: Option<f64>,
}

impl RunRecord {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            config: self.config.clone(),
            grid: self.grid.clone(),
            status: self.status,
            aborted: self.status == RunStatus::Aborted,
            evaluations: self.explored.len(),
            explored: self.explored.clone(),
            y: self.y.clone(),
            target: self.target.clone(),
            frozen: self.frozen,
            mse: self.mse(),
        }
    }

    pub fn mse(&self) -> Option<f64> {
        self.final_maps.as_ref().and_then(|m| m.mse)
    }

    /// Writes the record as a directory: `run.json`, `events.jsonl`,
    /// `maps/NNN.csv` snapshots plus `maps/final.csv`, `truth.csv` and
    /// `error.csv` when a ground truth exists, `model.json` and
    /// `timings.json`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        let maps_dir = dir.join("maps");
        fs::create_dir_all(&maps_dir).map_err(|e| Error::io(&maps_dir, e))?;
        write_json(&dir.join("run.json"), &self.summary())?;
        write_json(&dir.join("timings.json"), &self.timings)?;
        if let Some(model) = &self.model {
            write_json(&dir.join("model.json"), model)?;
        }

        let path = dir.join("events.jsonl");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        for event in &self.events {
            serde_json::to_writer(&mut out, event)?;
            out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;

        let (rows, cols) = (self.grid.height + 1 - self.config.window, self.grid.width + 1 - self.config.window);
        let half = self.config.window / 2;
        let coords: Vec<(usize, usize)> = (0..rows * cols).map(|i| (i / cols + half, i % cols + half)).collect();
        for snap in &self.snapshots {
            let path = maps_dir.join(format!("{:03}.csv", snap.iteration));
            write_map_csv(&path, &coords, &[("mean", &snap.mean), ("variance", &snap.variance)])?;
        }
        if let Some(maps) = &self.final_maps {
            write_map_csv(&maps_dir.join("final.csv"), &coords, &[("mean", &maps.mean), ("variance", &maps.variance)])?;
            if let (Some(truth), Some(error)) = (&maps.truth, &maps.error) {
                write_map_csv(&dir.join("truth.csv"), &coords, &[("value", truth)])?;
                write_map_csv(&dir.join("error.csv"), &coords, &[("value", error)])?;
            }
        }
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_map_csv(path: &Path, coords: &[(usize, usize)], columns: &[(&str, &Vec<f64>)]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["row", "col"];
    header.extend(columns.iter().map(|(name, _)| *name));
    w.write_record(&header).map_err(csv_err)?;
    for (i, (r, c)) in coords.iter().enumerate() {
        let mut rec = vec![r.to_string(), c.to_string()];
        rec.extend(columns.iter().map(|(_, v)| v[i].to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            events.push(serde_json::from_str(&line)?);
        }
    }
    Ok(events)
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("run.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rebuilds the target state and training data by re-running every
/// recorded answer through the recommender against `grid`. Objectives are
/// recomputed, and any disagreement with the logged values is an error.
pub fn replay(events: &[Event], grid: &SpectralGrid, config: &BoConfig) -> Result<(TargetState, Dataset)> {
    let unit = grid.with_unit_image();
    let mut state = TargetState::new();
    let mut data = Dataset::default();
    let mut last_vote: HashMap<GridIndex, Vote> = HashMap::new();
    let diverged = |what: String| Error::State(format!("replay diverged: {what}"));
    for event in events {
        match event {
            Event::Acquisition { .. } => {}
            Event::Vote { index, vote, preference, target, .. } => {
                state.record_vote(*index, &grid.spectrum(*index)?, *vote, *preference)?;
                if state.target_ref() != target.as_deref() {
                    return Err(diverged(format!("target after vote at {index:?}")));
                }
                last_vote.insert(*index, *vote);
            }
            Event::Satisfaction { satisfied, .. } => {
                state.answer_satisfaction(*satisfied)?;
            }
            Event::Freeze { target, .. } => {
                if state.phase() != Phase::Automated || state.target_ref() != Some(target.as_slice()) {
                    return Err(diverged("frozen target".into()));
                }
            }
            Event::Recompute { y, .. } => {
                state.recompute_objectives(&mut data, &config.ssim)?;
                if &data.y != y {
                    return Err(diverged("recomputed objectives".into()));
                }
            }
            Event::Sample { index, y, .. } => {
                let spectrum = grid.spectrum(*index)?;
                let fresh = match state.frozen_target() {
                    Some(t) => auto_objective(&t, &spectrum, &config.ssim)?,
                    None => {
                        let vote = *last_vote.get(index).ok_or_else(|| diverged(format!("sample {index:?} has no vote")))?;
                        match state.target_ref() {
                            Some(t) => human_objective(Some(t), &spectrum, vote, config.reward, &config.ssim)?,
                            None => f64::from(vote.value()) * config.reward,
                        }
                    }
                };
                if fresh.to_bits() != y.to_bits() {
                    return Err(diverged(format!("objective at {index:?}: logged {y}, recomputed {fresh}")));
                }
                let patch = extract_patch(&unit, *index, config.window)?.values;
                data.push(patch, fresh, spectrum);
            }
        }
    }
    Ok((state, data))
}

/// Fills in the error map and MSE of a record's final maps against `truth`.
pub fn evaluate_run(record: &RunRecord, truth: &[f64]) -> Result<MapSet> {
    let maps = record
        .final_maps
        .as_ref()
        .ok_or_else(|| Error::State("the run has no final maps".into()))?;
    MapSet::new(maps.rows, maps.cols, maps.mean.clone(), maps.variance.clone())?.with_truth(truth.to_vec())
}
