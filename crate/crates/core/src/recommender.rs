//! Voting-driven target state machine.
//!
//! The first upvoted spectrum becomes the target. Every later upvote blends
//! the new spectrum in with weight `p * v` against the accumulated
//! `(1 - p) * sum(v)` of earlier votes, then renormalizes to [0, 1]. A "yes"
//! to the satisfaction prompt freezes the target for the rest of the run.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::{normalize_spectrum, normalize_values, GridIndex, Spectrum};
use crate::similarity::{auto_objective, FrozenTarget, SsimParams};

/// Operator rating: 0 = Bad, 1 = Good, 2 = Very Good.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Vote(u8);

impl Vote {
    pub const BAD: Vote = Vote(0);
    pub const GOOD: Vote = Vote(1);
    pub const VERY_GOOD: Vote = Vote(2);

    pub fn new(value: i64) -> Result<Self> {
        match value {
            0..=2 => Ok(Vote(value as u8)),
            _ => Err(Error::InvalidArgument(format!("vote must be 0, 1 or 2, got {value}"))),
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_upvote(self) -> bool {
        self.0 > 0
    }
}

impl TryFrom<i64> for Vote {
    type Error = Error;
    fn try_from(value: i64) -> Result<Self> {
        Vote::new(value)
    }
}

impl From<Vote> for u8 {
    fn from(v: Vote) -> u8 {
        v.0
    }
}

/// Mixing weight of a newly upvoted spectrum, in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Preference(f64);

impl Preference {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Preference(value))
        } else {
            Err(Error::InvalidArgument(format!("preference must lie in [0, 1], got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Preference {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Preference::new(value)
    }
}

impl From<Preference> for f64 {
    fn from(p: Preference) -> f64 {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Collecting,
    HumanAugmented,
    Automated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub index: GridIndex,
    pub vote: Vote,
    pub preference: Preference,
    /// Target after this vote was applied.
    pub target: Option<Vec<f64>>,
}

/// Outcome of a satisfaction answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Satisfaction {
    /// Target frozen; stored objectives must be recomputed.
    Frozen,
    Continue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    target: Option<Vec<f64>>,
    vote_weight: f64,
    phase: Phase,
    history: Vec<VoteRecord>,
}

impl Default for TargetState {
    fn default() -> Self {
        Self::new()
    }
}

/// The un-normalized target update: a weighted mean of the current target
/// (weight `(1 - p) * weight`) and the new spectrum (weight `p * v`).
pub fn blend_target(target: &[f64], weight: f64, s: &[f64], vote: Vote, pref: Preference) -> Vec<f64> {
    let p = pref.value();
    let v = f64::from(vote.value());
    let old = (1.0 - p) * weight;
    let new = p * v;
    let denom = old + new;
    target
        .iter()
        .zip(s)
        .map(|(t, s)| (old * t + new * s) / denom)
        .collect()
}

impl TargetState {
    pub fn new() -> Self {
        Self { target: None, vote_weight: 0.0, phase: Phase::Collecting, history: Vec::new() }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn vote_weight(&self) -> f64 {
        self.vote_weight
    }

    pub fn history(&self) -> &[VoteRecord] {
        &self.history
    }

    pub fn has_target(&self) -> bool {
        self.target.is_some()
    }

    pub fn current_target(&self) -> Option<Vec<f64>> {
        self.target.clone()
    }

    pub fn target_ref(&self) -> Option<&[f64]> {
        self.target.as_deref()
    }

    /// The frozen target, once the phase is automated.
    pub fn frozen_target(&self) -> Option<FrozenTarget> {
        match (self.phase, &self.target) {
            (Phase::Automated, Some(t)) => Some(FrozenTarget::new(t.clone()).expect("targets are normalized")),
            _ => None,
        }
    }

    pub fn record_vote(&mut self, idx: GridIndex, s: &Spectrum, vote: Vote, pref: Preference) -> Result<()> {
        if self.phase == Phase::Automated {
            return Err(Error::State("target is frozen; votes are no longer accepted".into()));
        }
        let s = normalize_spectrum(s)?;
        if vote.is_upvote() {
            let next = match &self.target {
                None => s.values,
                Some(t) => {
                    if t.len() != s.values.len() {
                        return Err(Error::Dimension(format!(
                            "spectrum length {} does not match target length {}",
                            s.values.len(),
                            t.len()
                        )));
                    }
                    normalize_values(&blend_target(t, self.vote_weight, &s.values, vote, pref))
                        .map_err(|_| Error::DegenerateSpectrum(Some(idx)))?
                }
            };
            self.target = Some(next);
            self.vote_weight += f64::from(vote.value());
            if self.phase == Phase::Collecting {
                self.phase = Phase::HumanAugmented;
            }
        }
        self.history.push(VoteRecord { index: idx, vote, preference: pref, target: self.target.clone() });
        Ok(())
    }

    pub fn answer_satisfaction(&mut self, satisfied: bool) -> Result<Satisfaction> {
        if self.phase == Phase::Automated {
            return Err(Error::State("target already frozen".into()));
        }
        if self.target.is_none() {
            return Err(Error::MissingTarget);
        }
        if satisfied {
            self.phase = Phase::Automated;
            Ok(Satisfaction::Frozen)
        } else {
            Ok(Satisfaction::Continue)
        }
    }

    /// Replaces every stored objective with the frozen-target similarity.
    pub fn recompute_objectives(&self, dataset: &mut Dataset, params: &SsimParams) -> Result<()> {
        let target = self
            .frozen_target()
            .ok_or_else(|| Error::State("objectives can only be recomputed after the target is frozen".into()))?;
        let fresh = dataset
            .spectra
            .iter()
            .map(|s| auto_objective(&target, s, params))
            .collect::<Result<Vec<_>>>()?;
        dataset.y = fresh;
        Ok(())
    }
}
