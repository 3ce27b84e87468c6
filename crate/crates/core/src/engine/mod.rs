//! Acquisition, candidate selection and the BOARS loop.

mod acquisition;
mod baseline;
mod experiment;
mod maps;

pub use acquisition::{acquisition_scores, normal_cdf, normal_pdf, select_next, AcquisitionKind, AcquisitionSpec};
pub use baseline::random_baseline;
pub use experiment::{run_boars, BoConfig, Experiment, Pending, SatisfactionContext, Status, VoteContext, Voter};
pub use maps::{ground_truth_map, mse, MapSet};
