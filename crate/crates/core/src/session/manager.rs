use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::voters::{Answer, ReplayVoter, ThresholdVoter};
use crate::engine::{BoConfig, Experiment, MapSet, Pending, SatisfactionContext, Status, VoteContext, Voter};
use crate::error::{Error, Result};
use crate::grid::{generate_synthetic_grid, load_dataset, GridIndex, SimulatedInstrument, SpectralGrid, SyntheticConfig};
use crate::recommender::{Phase, Preference, Vote};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetRef {
    /// A grid file written by `save_dataset`.
    Path(PathBuf),
    Synthetic {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        config: SyntheticConfig,
    },
}

impl DatasetRef {
    pub fn load(&self) -> Result<SpectralGrid> {
        match self {
            DatasetRef::Path(p) => load_dataset(p),
            DatasetRef::Synthetic { seed, config } => generate_synthetic_grid(config, seed.unwrap_or(crate::DEFAULT_GRID_SEED)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoterSpec {
    /// Answers come through the API.
    Interactive,
    Threshold(ThresholdVoter),
    Replay(Vec<Answer>),
}

impl Default for VoterSpec {
    fn default() -> Self {
        VoterSpec::Interactive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset: DatasetRef,
    #[serde(default)]
    pub config: BoConfig,
    #[serde(default)]
    pub voter: VoterSpec,
}

/// Pending interaction as shown to a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PendingView {
    AwaitVote { id: u64, index: GridIndex, spectrum: Vec<f64>, bias: Vec<f64> },
    AwaitSatisfaction { id: u64, index: GridIndex },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub status: Status,
    pub iteration: usize,
    pub iterations: usize,
    pub explored_count: usize,
    pub explored: Vec<GridIndex>,
    pub pending: Option<PendingView>,
    pub phase: Phase,
    pub target: Option<Vec<f64>>,
    pub vote_weight: f64,
    pub maps: Option<MapSet>,
    pub mse: Option<f64>,
    /// Set when the run stopped on an error.
    pub error: Option<String>,
}

pub struct Session {
    id: Uuid,
    experiment: Mutex<Experiment>,
    voter: Mutex<Option<Box<dyn Voter + Send>>>,
    snapshot: RwLock<Snapshot>,
    /// Serializes background drivers.
    driving: Mutex<()>,
}

fn snapshot_of(id: Uuid, exp: &Experiment, error: Option<String>) -> Snapshot {
    let pending = exp.pending().map(|p| match p {
        Pending::Vote { id, index, spectrum } => PendingView::AwaitVote {
            id: *id,
            index: *index,
            spectrum: spectrum.values.clone(),
            bias: exp.grid().bias().to_vec(),
        },
        Pending::Satisfaction { id, index } => PendingView::AwaitSatisfaction { id: *id, index: *index },
    });
    let target = exp.target_state();
    let maps = exp.latest_maps().cloned();
    Snapshot {
        id: id.to_string(),
        status: exp.status(),
        iteration: exp.iteration(),
        iterations: exp.config().iterations,
        explored_count: exp.explored().len(),
        explored: exp.explored().to_vec(),
        pending,
        phase: target.phase(),
        target: target.current_target(),
        vote_weight: target.vote_weight(),
        mse: maps.as_ref().and_then(|m| m.mse),
        maps,
        error,
    }
}

impl Session {
    pub fn id(&self) -> Uuid {
        self.id
    }

    pub fn snapshot(&self) -> Snapshot {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn publish(&self, exp: &Experiment, error: Option<String>) {
        let error = error.or_else(|| self.snapshot.read().expect("snapshot lock").error.clone());
        *self.snapshot.write().expect("snapshot lock") = snapshot_of(self.id, exp, error);
    }

    /// Runs the experiment forward, one unit of work per lock acquisition,
    /// until it needs an interactive answer or ends. Scripted voters are
    /// answered inline.
    pub fn drive(&self) {
        let _guard = self.driving.lock().expect("driver lock");
        loop {
            let mut exp = self.experiment.lock().expect("experiment lock");
            let outcome = exp.step().and_then(|status| match status {
                Status::AwaitingHuman => self.answer_scripted(&mut exp),
                other => Ok(other != Status::Running),
            });
            match outcome {
                Ok(stop) => {
                    self.publish(&exp, None);
                    if stop {
                        return;
                    }
                }
                Err(e) => {
                    log::error!("session {}: {e}", self.id);
                    exp.abort();
                    self.publish(&exp, Some(e.to_string()));
                    return;
                }
            }
        }
    }

    /// Answers the pending interaction with the scripted voter if there is
    /// one. Returns whether the driver should stop.
    fn answer_scripted(&self, exp: &mut Experiment) -> Result<bool> {
        let mut voter = self.voter.lock().expect("voter lock");
        let Some(voter) = voter.as_mut() else {
            return Ok(true);
        };
        let votes_cast = exp.target_state().history().len();
        match exp.pending().cloned().expect("awaiting a human") {
            Pending::Vote { id, index, spectrum } => {
                let ctx = VoteContext {
                    index,
                    spectrum: &spectrum,
                    bias: exp.grid().bias(),
                    target: exp.target_state().target_ref(),
                    votes_cast,
                    iteration: exp.iteration(),
                };
                let (vote, pref) = voter.vote(&ctx)?;
                exp.submit_vote(Some(id), vote, pref)?;
            }
            Pending::Satisfaction { id, .. } => {
                let target = exp.target_state().current_target().expect("prompted with a target");
                let ctx = SatisfactionContext { target: &target, votes_cast, iteration: exp.iteration() };
                let satisfied = voter.satisfied(&ctx)?;
                exp.submit_satisfaction(Some(id), satisfied)?;
            }
        }
        Ok(false)
    }

    fn with_experiment<T>(&self, f: impl FnOnce(&mut Experiment) -> Result<T>) -> Result<T> {
        let mut exp = self.experiment.lock().expect("experiment lock");
        let out = f(&mut exp)?;
        self.publish(&exp, None);
        Ok(out)
    }

    pub fn submit_vote(&self, pending_id: Option<u64>, vote: Vote, preference: Preference) -> Result<Snapshot> {
        self.with_experiment(|exp| exp.submit_vote(pending_id, vote, preference))?;
        Ok(self.snapshot())
    }

    pub fn submit_satisfaction(&self, pending_id: Option<u64>, satisfied: bool) -> Result<Snapshot> {
        self.with_experiment(|exp| exp.submit_satisfaction(pending_id, satisfied))?;
        Ok(self.snapshot())
    }

    pub fn abort(&self) -> Snapshot {
        let _ = self.with_experiment(|exp| {
            exp.abort();
            Ok(())
        });
        self.snapshot()
    }

    pub fn export(&self, dir: &Path) -> Result<()> {
        let exp = self.experiment.lock().expect("experiment lock");
        match exp.status() {
            Status::Finished | Status::Aborted => exp.record().export(dir),
            _ => Err(Error::State("the session is still running".into())),
        }
    }

    pub fn record(&self) -> crate::record::RunRecord {
        self.experiment.lock().expect("experiment lock").record()
    }
}

/// All live sessions. Each session is independent; the manager lock is only
/// held for lookups.
#[derive(Default)]
pub struct SessionManager {
    sessions: Mutex<HashMap<Uuid, Arc<Session>>>,
}

impl SessionManager {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates the request and registers the session. The caller starts
    /// it by running [`Session::drive`].
    pub fn create(&self, req: CreateSession) -> Result<Arc<Session>> {
        let grid = Arc::new(req.dataset.load()?);
        let voter: Option<Box<dyn Voter + Send>> = match req.voter {
            VoterSpec::Interactive => None,
            VoterSpec::Threshold(v) => {
                v.validate()?;
                Some(Box::new(v))
            }
            VoterSpec::Replay(answers) => Some(Box::new(ReplayVoter::new(answers))),
        };
        let experiment = Experiment::new(req.config, Box::new(SimulatedInstrument::new(grid)))?;
        let id = Uuid::new_v4();
        let session = Arc::new(Session {
            id,
            snapshot: RwLock::new(snapshot_of(id, &experiment, None)),
            experiment: Mutex::new(experiment),
            voter: Mutex::new(voter),
            driving: Mutex::new(()),
        });
        self.sessions.lock().expect("session table").insert(id, session.clone());
        log::info!("created session {id}");
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Option<Arc<Session>> {
        let id = Uuid::parse_str(id).ok()?;
        self.sessions.lock().expect("session table").get(&id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session table").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
