//! Offline scoring of predictor outputs against expert samples: Hungarian
//! matching and the composite training loss.

mod hungarian;
mod loss;

use thiserror::Error;

pub use hungarian::{assignment_cost, hungarian, Assignment, CostMatrix};
pub use loss::{
    clamped_bce, losses, match_candidates, match_cost, weighted_map_bce, LossBreakdown, LossWeights,
};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("invalid argument: {0}")]
    Argument(String),
}
