//! Scripted stand-ins for the human operator.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{SatisfactionContext, VoteContext, Voter};
use crate::error::{Error, Result};
use crate::grid::normalize_values;
use crate::record::{read_events, Event};
use crate::recommender::{Preference, Vote};

/// Votes by loop symmetry: the forward branch at bias `V` is compared with
/// the reverse branch at `-V` after min-max normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdVoter {
    /// Minimum symmetry score for a vote of 2.
    pub very_good: f64,
    /// Minimum symmetry score for a vote of 1.
    pub good: f64,
    pub preference: f64,
    /// Answer "satisfied" once this many votes have been cast.
    pub satisfy_after: usize,
}

impl Default for ThresholdVoter {
    fn default() -> Self {
        Self { very_good: 0.9, good: 0.75, preference: 0.5, satisfy_after: 10 }
    }
}

impl ThresholdVoter {
    pub fn validate(&self) -> Result<()> {
        if !(self.good <= self.very_good) {
            return Err(Error::InvalidArgument("threshold cutoffs must satisfy good <= very_good".into()));
        }
        Preference::new(self.preference)?;
        Ok(())
    }

    pub fn vote_for(&self, score: f64) -> Vote {
        if score >= self.very_good {
            Vote::VERY_GOOD
        } else if score >= self.good {
            Vote::GOOD
        } else {
            Vote::BAD
        }
    }
}

/// `1 - mean |forward(V) - reverse(-V)|` on the normalized loop; the first
/// half of the samples is the forward sweep. Flat spectra score 0.
pub fn symmetry_score(values: &[f64], bias: &[f64]) -> f64 {
    let Ok(norm) = normalize_values(values) else {
        return 0.0;
    };
    let half = norm.len() / 2;
    if half == 0 || bias.len() != norm.len() {
        return 0.0;
    }
    let mut reverse: Vec<(f64, f64)> = bias[half..].iter().copied().zip(norm[half..].iter().copied()).collect();
    reverse.sort_by(|a, b| a.0.total_cmp(&b.0));
    let diff: f64 = bias[..half]
        .iter()
        .zip(&norm[..half])
        .map(|(&v, &f)| (f - interpolate(&reverse, -v)).abs())
        .sum();
    1.0 - diff / half as f64
}

/// Piecewise-linear interpolation on points sorted by x, clamped at the ends.
fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = points.partition_point(|p| p.0 <= x);
    let (x0, y0) = points[k - 1];
    let (x1, y1) = points[k];
    if x1 == x0 {
        y0
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

impl Voter for ThresholdVoter {
    fn vote(&mut self, ctx: &VoteContext<'_>) -> Result<(Vote, Preference)> {
        let score = symmetry_score(&ctx.spectrum.values, ctx.bias);
        Ok((self.vote_for(score), Preference::new(self.preference)?))
    }

    fn satisfied(&mut self, ctx: &SatisfactionContext<'_>) -> Result<bool> {
        Ok(ctx.votes_cast >= self.satisfy_after)
    }
}

/// One scripted answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Vote { vote: Vote, preference: Preference },
    Satisfaction { satisfied: bool },
}

/// Plays back a fixed sequence of answers in order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayVoter {
    answers: Vec<Answer>,
    next: usize,
}

impl ReplayVoter {
    pub fn new(answers: Vec<Answer>) -> Self {
        Self { answers, next: 0 }
    }

    /// The answers recorded in an event log.
    pub fn from_events(events: &[Event]) -> Self {
        Self::new(
            events
                .iter()
                .filter_map(|e| match e {
                    Event::Vote { vote, preference, .. } => Some(Answer::Vote { vote: *vote, preference: *preference }),
                    Event::Satisfaction { satisfied, .. } => Some(Answer::Satisfaction { satisfied: *satisfied }),
                    _ => None,
                })
                .collect(),
        )
    }

    /// Reads either an `events.jsonl` log or a JSON array of answers.
    pub fn from_path(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "jsonl") {
            return Ok(Self::from_events(&read_events(path)?));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(serde_json::from_str(&text)?))
    }

    pub fn remaining(&self) -> usize {
        self.answers.len() - self.next
    }

    fn take(&mut self) -> Result<Answer> {
        let answer = self
            .answers
            .get(self.next)
            .copied()
            .ok_or_else(|| Error::VoterAbort(format!("script ran out after {} answers", self.next)))?;
        self.next += 1;
        Ok(answer)
    }
}

impl Voter for ReplayVoter {
    fn vote(&mut self, _ctx: &VoteContext<'_>) -> Result<(Vote, Preference)> {
        match self.take()? {
            Answer::Vote { vote, preference } => Ok((vote, preference)),
            Answer::Satisfaction { .. } => {
                Err(Error::VoterAbort(format!("answer {} is a satisfaction answer but a vote was asked", self.next - 1)))
            }
        }
    }

    fn satisfied(&mut self, _ctx: &SatisfactionContext<'_>) -> Result<bool> {
        match self.take()? {
            Answer::Satisfaction { satisfied } => Ok(satisfied),
            Answer::Vote { .. } => {
                Err(Error::VoterAbort(format!("answer {} is a vote but a satisfaction answer was asked", self.next - 1)))
            }
        }
    }
}
