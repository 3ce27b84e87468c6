use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::{acquisition_scores, select_next, AcquisitionSpec};
use super::maps::{ground_truth_map, MapSet};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::{candidate_indices, candidate_lattice_dims, extract_patch, GridIndex, Instrument, SpectralGrid, Spectrum};
use crate::record::{Event, MapSnapshot, RunRecord, RunStatus, Timings};
use crate::recommender::{Phase, Preference, Satisfaction, TargetState, Vote};
use crate::similarity::{auto_objective, human_objective, FrozenTarget, SsimParams};
use crate::surrogate::{fit_gp, BaseKind, GpModel, Inputs, KernelKind, TrainConfig};

/// RNG stream for the initial random samples.
const STREAM_INITIAL: u64 = 0;
/// RNG stream for surrogate initialization.
pub(crate) const STREAM_SURROGATE: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub window: usize,
    /// Randomly chosen samples voted on before the loop starts.
    pub initial: usize,
    pub iterations: usize,
    pub kernel: KernelKind,
    pub acquisition: AcquisitionSpec,
    /// Objective bonus per vote point while the human is in the loop.
    pub reward: f64,
    pub ssim: SsimParams,
    pub train: TrainConfig,
    pub seed: u64,
    /// Keep a map snapshot every this many iterations; `None` picks 1 for
    /// runs of up to 100 iterations and 5 otherwise.
    pub snapshot_every: Option<usize>,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            window: 4,
            initial: 10,
            iterations: 200,
            kernel: KernelKind::Deep(BaseKind::Rbf),
            acquisition: AcquisitionSpec::default(),
            reward: 0.1,
            ssim: SsimParams::default(),
            train: TrainConfig::default(),
            seed: 0,
            snapshot_every: None,
        }
    }
}

impl BoConfig {
    /// Checks the configuration on its own and against `grid`.
    pub fn validate(&self, grid: &SpectralGrid) -> Result<()> {
        if self.initial < 2 {
            return Err(Error::InvalidArgument("at least two initial samples are required".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("at least one iteration is required".into()));
        }
        if !(self.reward.is_finite() && self.reward >= 0.0) {
            return Err(Error::InvalidArgument(format!("reward must be finite and >= 0, got {}", self.reward)));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::InvalidArgument("snapshot interval must be at least 1".into()));
        }
        self.acquisition.validate()?;
        self.ssim.validate()?;
        self.train.validate()?;
        if self.ssim.win > grid.spectrum_len() {
            return Err(Error::InvalidArgument(format!(
                "ssim window {} exceeds spectrum length {}",
                self.ssim.win,
                grid.spectrum_len()
            )));
        }
        let n = candidate_indices(grid, self.window)?.len();
        if self.initial + self.iterations > n {
            return Err(Error::InvalidArgument(format!(
                "budget {} + {} exceeds the {n} available candidates",
                self.initial, self.iterations
            )));
        }
        Ok(())
    }

    pub fn snapshot_interval(&self) -> usize {
        self.snapshot_every.unwrap_or(if self.iterations <= 100 { 1 } else { 5 })
    }
}

/// Seed drawn from a dedicated stream of the run seed.
pub(crate) fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pending {
    Vote { id: u64, index: GridIndex, spectrum: Spectrum },
    Satisfaction { id: u64, index: GridIndex },
}

impl Pending {
    pub fn id(&self) -> u64 {
        match self {
            Pending::Vote { id, .. } | Pending::Satisfaction { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    AwaitingHuman,
    Finished,
    Aborted,
}

/// What a voter sees when asked to rate a spectrum.
pub struct VoteContext<'a> {
    pub index: GridIndex,
    pub spectrum: &'a Spectrum,
    pub bias: &'a [f64],
    pub target: Option<&'a [f64]>,
    pub votes_cast: usize,
    /// 0 during initialization.
    pub iteration: usize,
}

pub struct SatisfactionContext<'a> {
    pub target: &'a [f64],
    pub votes_cast: usize,
    pub iteration: usize,
}

/// The human side of the loop.
pub trait Voter {
    fn vote(&mut self, ctx: &VoteContext<'_>) -> Result<(Vote, Preference)>;
    fn satisfied(&mut self, ctx: &SatisfactionContext<'_>) -> Result<bool>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Initial,
    Loop,
    Done,
}

/// One BOARS run as a resumable state machine. [`Experiment::step`] does a
/// bounded amount of work and stops whenever a human answer is needed.
pub struct Experiment {
    config: BoConfig,
    instrument: Box<dyn Instrument + Send>,
    candidates: Vec<GridIndex>,
    candidate_x: Inputs,
    lattice: (usize, usize),
    explored_mask: Vec<bool>,
    explored: Vec<GridIndex>,
    dataset: Dataset,
    target: TargetState,
    initial: Vec<GridIndex>,
    initial_samples: Vec<(Spectrum, Vote)>,
    /// Spectrum acquired in the current loop iteration, awaiting its objective.
    current: Option<Spectrum>,
    stage: Stage,
    iteration: usize,
    next_id: u64,
    pending: Option<Pending>,
    status: Status,
    events: Vec<Event>,
    train: TrainConfig,
    model: Option<GpModel>,
    latest: Option<MapSet>,
    snapshots: Vec<MapSnapshot>,
    final_maps: Option<MapSet>,
    timings: Timings,
    started: Instant,
}

impl Experiment {
    pub fn new(config: BoConfig, instrument: Box<dyn Instrument + Send>) -> Result<Self> {
        let grid = instrument.grid();
        config.validate(grid)?;
        let candidates = candidate_indices(grid, config.window)?;
        // surrogate inputs come from the min-max scaled image
        let unit = grid.with_unit_image();
        let patches = candidates
            .iter()
            .map(|&c| extract_patch(&unit, c, config.window).map(|p| p.values))
            .collect::<Result<Vec<_>>>()?;
        let candidate_x = Inputs::from_rows(&patches)?;
        let lattice = candidate_lattice_dims(grid, config.window);

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(STREAM_INITIAL);
        let initial = rand::seq::index::sample(&mut rng, candidates.len(), config.initial)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        let train = TrainConfig { seed: stream_seed(config.seed, STREAM_SURROGATE) ^ config.train.seed, ..config.train.clone() };

        Ok(Self {
            explored_mask: vec![false; candidates.len()],
            candidates,
            candidate_x,
            lattice,
            explored: Vec::new(),
            dataset: Dataset::default(),
            target: TargetState::new(),
            initial,
            initial_samples: Vec::new(),
            current: None,
            stage: Stage::Initial,
            iteration: 0,
            next_id: 0,
            pending: None,
            status: Status::Running,
            events: Vec::new(),
            train,
            model: None,
            latest: None,
            snapshots: Vec::new(),
            final_maps: None,
            timings: Timings::default(),
            started: Instant::now(),
            config,
            instrument,
        })
    }

    pub fn config(&self) -> &BoConfig {
        &self.config
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.instrument.grid()
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn pending(&self) -> Option<&Pending> {
        self.pending.as_ref()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn explored(&self) -> &[GridIndex] {
        &self.explored
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn target_state(&self) -> &TargetState {
        &self.target
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn candidates(&self) -> &[GridIndex] {
        &self.candidates
    }

    /// Latest posterior maps (final maps once finished).
    pub fn latest_maps(&self) -> Option<&MapSet> {
        self.final_maps.as_ref().or(self.latest.as_ref())
    }

    pub fn model(&self) -> Option<&GpModel> {
        self.model.as_ref()
    }

    fn votes_cast(&self) -> usize {
        self.target.history().len()
    }

    fn push_event(&mut self, make: impl FnOnce(u64) -> Event) {
        let seq = self.events.len() as u64;
        self.events.push(make(seq));
    }

    fn set_pending(&mut self, make: impl FnOnce(u64) -> Pending) {
        let id = self.next_id;
        self.next_id += 1;
        self.pending = Some(make(id));
        self.status = Status::AwaitingHuman;
    }

    fn acquire(&mut self, idx: GridIndex) -> Result<Spectrum> {
        let spectrum = self.instrument.acquire(idx)?;
        let pos = self.position(idx);
        self.explored_mask[pos] = true;
        self.explored.push(idx);
        let iteration = self.iteration;
        self.push_event(|seq| Event::Acquisition { seq, iteration, index: idx });
        Ok(spectrum)
    }

    fn position(&self, idx: GridIndex) -> usize {
        let half = self.config.window / 2;
        (idx.row - half) * self.lattice.1 + (idx.col - half)
    }

    fn patch(&self, idx: GridIndex) -> Vec<f64> {
        self.candidate_x.row(self.position(idx)).to_vec()
    }

    /// Does one unit of work: one acquisition, one BO iteration or the final
    /// fit. Returns immediately while a human answer is pending.
    pub fn step(&mut self) -> Result<Status> {
        match self.status {
            Status::Finished | Status::Aborted | Status::AwaitingHuman => return Ok(self.status),
            Status::Running => {}
        }
        match self.stage {
            Stage::Initial if self.initial_samples.len() < self.config.initial => {
                let idx = self.initial[self.initial_samples.len()];
                let spectrum = self.acquire(idx)?;
                self.set_pending(|id| Pending::Vote { id, index: idx, spectrum });
            }
            Stage::Initial => {
                self.score_initial()?;
                self.stage = Stage::Loop;
            }
            Stage::Loop if self.iteration == self.config.iterations => self.finish()?,
            Stage::Loop => self.iterate()?,
            Stage::Done => {}
        }
        Ok(self.status)
    }

    /// Steps until the run needs a human or ends.
    pub fn advance(&mut self) -> Result<Status> {
        loop {
            match self.step()? {
                Status::Running => continue,
                other => return Ok(other),
            }
        }
    }

    fn objective_for(&self, spectrum: &Spectrum, vote: Vote) -> Result<f64> {
        let bonus = f64::from(vote.value()) * self.config.reward;
        match self.target.target_ref() {
            Some(t) => human_objective(Some(t), spectrum, vote, self.config.reward, &self.config.ssim),
            // nothing has been upvoted yet, so there is nothing to be similar to
            None => Ok(bonus),
        }
    }

    fn score_initial(&mut self) -> Result<()> {
        let samples = std::mem::take(&mut self.initial_samples);
        for (spectrum, vote) in &samples {
            let y = self.objective_for(spectrum, *vote)?;
            self.augment(spectrum.clone(), y);
        }
        self.initial_samples = samples;
        Ok(())
    }

    fn augment(&mut self, spectrum: Spectrum, y: f64) {
        let index = spectrum.source;
        let iteration = self.iteration;
        self.dataset.push(self.patch(index), y, spectrum);
        self.push_event(|seq| Event::Sample { seq, iteration, index, y });
    }

    fn refit(&mut self) -> Result<GpModel> {
        let iteration = self.iteration;
        let x = Inputs::from_rows(&self.dataset.x)?;
        let y = self.dataset.y.clone();
        let t0 = Instant::now();
        let warm = self.model.as_ref().map(|m| &m.kernel);
        let fitted = match fit_gp(x.clone(), y.clone(), self.config.kernel, &self.train, warm) {
            Ok(m) => Ok(m),
            Err(e) if warm.is_some() => {
                log::warn!("iteration {iteration}: warm refit failed ({e}); refitting from scratch");
                fit_gp(x, y, self.config.kernel, &self.train, None)
            }
            Err(e) => Err(e),
        };
        self.timings.fit_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        fitted.map_err(|e| Error::Surrogate { iteration, source: Box::new(e) })
    }

    fn predict(&self, model: &GpModel) -> Result<MapSet> {
        let post = model
            .posterior(&self.candidate_x)
            .map_err(|e| Error::Surrogate { iteration: self.iteration, source: Box::new(e) })?;
        MapSet::new(self.lattice.0, self.lattice.1, post.mean, post.variance)
    }

    fn iterate(&mut self) -> Result<()> {
        self.iteration += 1;
        let model = self.refit()?;
        let maps = self.predict(&model)?;
        self.model = Some(model);
        let best = self.dataset.best().expect("dataset holds the initial samples");
        let scores = acquisition_scores(&maps.mean, &maps.variance, best, &self.config.acquisition)?;
        let next = select_next(&scores, &self.candidates, &self.explored_mask)?;
        if self.iteration % self.config.snapshot_interval() == 0 {
            self.snapshots.push(MapSnapshot { iteration: self.iteration, mean: maps.mean.clone(), variance: maps.variance.clone() });
        }
        self.latest = Some(maps);
        log::debug!("iteration {}: next {:?}, best {best:.4}", self.iteration, next);

        let spectrum = self.acquire(next)?;
        match self.target.phase() {
            Phase::Automated => {
                let target = self.target.frozen_target().expect("automated phase has a target");
                let y = auto_objective(&target, &spectrum, &self.config.ssim)?;
                self.augment(spectrum, y);
            }
            _ if self.target.has_target() => {
                self.current = Some(spectrum);
                self.set_pending(|id| Pending::Satisfaction { id, index: next });
            }
            _ => {
                self.current = Some(spectrum.clone());
                self.set_pending(|id| Pending::Vote { id, index: next, spectrum });
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.iteration += 1;
        let model = self.refit()?;
        let mut maps = self.predict(&model)?;
        self.iteration -= 1;
        self.model = Some(model);
        if let Some(target) = self.target.frozen_target() {
            let truth = ground_truth_map(self.grid(), &target, self.config.window, &self.config.ssim)?;
            maps = maps.with_truth(truth)?;
        }
        if let Some(mse) = maps.mse {
            log::info!("finished {} iterations, map mse {mse:.5}", self.iteration);
        }
        self.final_maps = Some(maps);
        self.stage = Stage::Done;
        self.status = Status::Finished;
        self.timings.total_ms = self.started.elapsed().as_secs_f64() * 1e3;
        Ok(())
    }

    fn check_pending(&self, id: Option<u64>) -> Result<&Pending> {
        let pending = self.pending.as_ref().ok_or_else(|| Error::State("no interaction is pending".into()))?;
        if let Some(id) = id {
            if id != pending.id() {
                return Err(Error::State(format!("interaction {id} is not pending (current is {})", pending.id())));
            }
        }
        Ok(pending)
    }

    /// Answers a pending vote. `id`, when given, must match the pending
    /// interaction, which makes resubmissions fail instead of applying twice.
    pub fn submit_vote(&mut self, id: Option<u64>, vote: Vote, preference: Preference) -> Result<()> {
        let (index, spectrum) = match self.check_pending(id)? {
            Pending::Vote { index, spectrum, .. } => (*index, spectrum.clone()),
            Pending::Satisfaction { .. } => return Err(Error::State("a satisfaction answer is pending, not a vote".into())),
        };
        self.target.record_vote(index, &spectrum, vote, preference)?;
        let target = self.target.current_target();
        let vote_weight = self.target.vote_weight();
        self.push_event(|seq| Event::Vote { seq, index, vote, preference, target, vote_weight });
        self.pending = None;
        self.status = Status::Running;
        match self.stage {
            Stage::Initial => self.initial_samples.push((spectrum, vote)),
            _ => {
                let current = self.current.take().expect("loop vote has an acquired spectrum");
                let y = self.objective_for(&current, vote)?;
                self.augment(current, y);
            }
        }
        Ok(())
    }

    pub fn submit_satisfaction(&mut self, id: Option<u64>, satisfied: bool) -> Result<()> {
        let index = match self.check_pending(id)? {
            Pending::Satisfaction { index, .. } => *index,
            Pending::Vote { .. } => return Err(Error::State("a vote is pending, not a satisfaction answer".into())),
        };
        let outcome = self.target.answer_satisfaction(satisfied)?;
        let iteration = self.iteration;
        self.push_event(|seq| Event::Satisfaction { seq, iteration, satisfied });
        match outcome {
            Satisfaction::Continue => {
                let spectrum = self.current.clone().expect("satisfaction prompt has an acquired spectrum");
                self.set_pending(|id| Pending::Vote { id, index, spectrum });
            }
            Satisfaction::Frozen => {
                self.pending = None;
                self.status = Status::Running;
                let target = self.target.current_target().expect("frozen target");
                self.push_event(|seq| Event::Freeze { seq, target });
                self.target.recompute_objectives(&mut self.dataset, &self.config.ssim)?;
                let y = self.dataset.y.clone();
                self.push_event(|seq| Event::Recompute { seq, y });
                let current = self.current.take().expect("satisfaction prompt has an acquired spectrum");
                let frozen = self.target.frozen_target().expect("frozen target");
                let y = auto_objective(&frozen, &current, &self.config.ssim)?;
                self.augment(current, y);
            }
        }
        Ok(())
    }

    /// Stops the run; the record is kept and marked aborted.
    pub fn abort(&mut self) {
        if self.status != Status::Finished {
            self.pending = None;
            self.status = Status::Aborted;
            self.stage = Stage::Done;
            self.timings.total_ms = self.started.elapsed().as_secs_f64() * 1e3;
        }
    }

    /// Answers pending interactions with `voter` until the run ends.
    pub fn run_with(&mut self, voter: &mut dyn Voter) -> Result<()> {
        loop {
            match self.advance()? {
                Status::Finished | Status::Aborted => return Ok(()),
                Status::Running => unreachable!("advance only returns at a stopping point"),
                Status::AwaitingHuman => {}
            }
            match self.pending.clone().expect("awaiting a human") {
                Pending::Vote { id, index, spectrum } => {
                    let ctx = VoteContext {
                        index,
                        spectrum: &spectrum,
                        bias: self.grid().bias(),
                        target: self.target.target_ref(),
                        votes_cast: self.votes_cast(),
                        iteration: self.iteration,
                    };
                    let (vote, pref) = voter.vote(&ctx)?;
                    self.submit_vote(Some(id), vote, pref)?;
                }
                Pending::Satisfaction { id, .. } => {
                    let ctx = SatisfactionContext {
                        target: self.target.target_ref().expect("prompted with a target"),
                        votes_cast: self.votes_cast(),
                        iteration: self.iteration,
                    };
                    let satisfied = voter.satisfied(&ctx)?;
                    self.submit_satisfaction(Some(id), satisfied)?;
                }
            }
        }
    }

    pub fn frozen_target(&self) -> Option<FrozenTarget> {
        self.target.frozen_target()
    }

    /// Snapshot of everything recorded so far.
    pub fn record(&self) -> RunRecord {
        RunRecord {
            config: self.config.clone(),
            grid: crate::record::GridSummary::of(self.grid()),
            status: match self.status {
                Status::Finished => RunStatus::Finished,
                Status::Aborted => RunStatus::Aborted,
                _ => RunStatus::Incomplete,
            },
            explored: self.explored.clone(),
            y: self.dataset.y.clone(),
            events: self.events.clone(),
            target: self.target.current_target(),
            frozen: self.target.phase() == Phase::Automated,
            snapshots: self.snapshots.clone(),
            final_maps: self.final_maps.clone(),
            model: self.model.clone(),
            timings: self.timings.clone(),
        }
    }
}

/// Runs a whole BOARS experiment against `instrument`, asking `voter`
/// whenever a human answer is needed.
pub fn run_boars(config: BoConfig, instrument: Box<dyn Instrument + Send>, voter: &mut dyn Voter) -> Result<RunRecord> {
    let mut experiment = Experiment::new(config, instrument)?;
    experiment.run_with(voter)?;
    Ok(experiment.record())
}
