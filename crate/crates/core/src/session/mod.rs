//! Running BOARS as sessions: scripted voters, the session manager and the
//! HTTP API.

mod http;
mod manager;
mod voters;

pub use http::{router, serve, ApiError};
pub use manager::{CreateSession, DatasetRef, PendingView, Session, SessionManager, Snapshot, VoterSpec};
pub use voters::{symmetry_score, Answer, ReplayVoter, ThresholdVoter};
