use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::experiment::{stream_seed, BoConfig, STREAM_SURROGATE};
use super::maps::{ground_truth_map, MapSet};
use crate::error::{Error, Result};
use crate::grid::{candidate_indices, candidate_lattice_dims, extract_patch, SpectralGrid};
use crate::record::{Event, GridSummary, RunRecord, RunStatus, Timings};
use crate::similarity::{auto_objective, FrozenTarget};
use crate::surrogate::{fit_gp, Inputs, TrainConfig};

const STREAM_BASELINE: u64 = 2;

/// Control arm: `initial + iterations` distinct candidates drawn uniformly
/// at random, scored against `target`, with one surrogate fit at the end.
/// `fit_steps` overrides the optimizer budget of that fit.
pub fn random_baseline(
    config: &BoConfig,
    grid: &SpectralGrid,
    target: &FrozenTarget,
    fit_steps: Option<usize>,
) -> Result<RunRecord> {
    config.validate(grid)?;
    let started = Instant::now();
    let candidates = candidate_indices(grid, config.window)?;
    let budget = config.initial + config.iterations;
    if budget > candidates.len() {
        return Err(Error::CandidatesExhausted);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(STREAM_BASELINE);
    let picks: Vec<_> = rand::seq::index::sample(&mut rng, candidates.len(), budget)
        .into_iter()
        .map(|i| candidates[i])
        .collect();

    let unit = grid.with_unit_image();
    let mut events = Vec::with_capacity(2 * budget);
    let mut x = Vec::with_capacity(budget);
    let mut y = Vec::with_capacity(budget);
    for &idx in &picks {
        let seq = events.len() as u64;
        events.push(Event::Acquisition { seq, iteration: 0, index: idx });
        let value = auto_objective(target, &grid.spectrum(idx)?, &config.ssim)?;
        events.push(Event::Sample { seq: seq + 1, iteration: 0, index: idx, y: value });
        x.push(extract_patch(&unit, idx, config.window)?.values);
        y.push(value);
    }

    let train = TrainConfig {
        seed: stream_seed(config.seed, STREAM_SURROGATE) ^ config.train.seed,
        steps: fit_steps.unwrap_or(config.train.steps),
        ..config.train.clone()
    };
    let t0 = Instant::now();
    let model = fit_gp(Inputs::from_rows(&x)?, y.clone(), config.kernel, &train, None)
        .map_err(|e| Error::Surrogate { iteration: 0, source: Box::new(e) })?;
    let fit_ms = t0.elapsed().as_secs_f64() * 1e3;

    let all: Vec<Vec<f64>> = candidates
        .iter()
        .map(|&c| extract_patch(&unit, c, config.window).map(|p| p.values))
        .collect::<Result<_>>()?;
    let post = model.posterior(&Inputs::from_rows(&all)?)?;
    let (rows, cols) = candidate_lattice_dims(grid, config.window);
    let truth = ground_truth_map(grid, target, config.window, &config.ssim)?;
    let maps = MapSet::new(rows, cols, post.mean, post.variance)?.with_truth(truth)?;

    Ok(RunRecord {
        config: config.clone(),
        grid: GridSummary::of(grid),
        status: RunStatus::Finished,
        explored: picks,
        y,
        events,
        target: Some(target.values().to_vec()),
        frozen: true,
        snapshots: Vec::new(),
        final_maps: Some(maps),
        model: Some(model),
        timings: Timings { fit_ms: vec![fit_ms], total_ms: started.elapsed().as_secs_f64() * 1e3 },
    })
}
