//! The imitation-learning expert: a ground-truth walking policy, the BFS
//! trajectory built on top of it, and training-sample emission.

mod samples;
mod trajectory;
mod walk;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;
use crate::raster::RasterError;

pub use samples::{
    SampleFiles,
    emit_samples, load_manifest, write_manifest, write_sample_set, LabelVertex, ManifestRecord, SampleSet,
    TrainingSample, MANIFEST_FILE,
};
pub use trajectory::{bfs_traverse, perturb, Trajectory, TrajectoryStep};
pub use walk::{next_vertices_gt, VisitedState, KEY_VERTEX_SNAP};

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("invalid expert config: {0}")]
    Config(String),
    #[error("aerial tile is {0}x{1} but the graph tile is {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("step {step} has {m} label vertices but only {n} queries are available")]
    TooManyLabels { step: usize, m: usize, n: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Agent(#[from] crate::agent::AgentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertConfig {
    /// Walking distance per step, `D`.
    pub step_length: f64,
    /// Half-width of the uniform displacement applied to recorded positions.
    pub noise_amplitude: f64,
    pub roi_size: u32,
    /// Number of prediction slots `N`.
    pub max_queries: usize,
    pub rng_seed: u64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            step_length: 20.0,
            noise_amplitude: 6.0,
            roi_size: 128,
            max_queries: 10,
            rng_seed: 0,
        }
    }
}

impl ExpertConfig {
    pub fn validate(&self) -> Result<(), ExpertError> {
        let half = self.roi_size as f64 / 2.0;
        if !(self.step_length > 0.0 && self.step_length < half) {
            return Err(ExpertError::Config(format!(
                "step_length must lie in (0, {half}), got {}",
                self.step_length
            )));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude < self.step_length / 2.0) {
            return Err(ExpertError::Config(format!(
                "noise_amplitude must lie in [0, step_length/2), got {}",
                self.noise_amplitude
            )));
        }
        if self.roi_size < 32 || !self.roi_size.is_multiple_of(2) {
            return Err(ExpertError::Config(format!(
                "roi_size must be even and at least 32, got {}",
                self.roi_size
            )));
        }
        if self.max_queries == 0 {
            return Err(ExpertError::Config("max_queries must be positive".into()));
        }
        Ok(())
    }
}
