//! Whole-tile tracing with the built-in predictors.

use thiserror::Error;

use crate::agent::{run, AgentError, EngineConfig, RunReport};
use crate::graph::{GraphError, GraphFile, RoadGraph};
use crate::predict::{NoiseSpec, NoisyPredictor, OracleConfig, OraclePredictor, Predictor};
use crate::raster::{intersection_label, GridMap, INTERSECTION_RADIUS};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid noise spec: {0}")]
    Noise(String),
}

/// A perfect key-point heatmap: the ground-truth intersection label.
pub fn oracle_heatmap(gt: &GraphFile) -> GridMap {
    intersection_label(&gt.graph, gt.width, gt.height, INTERSECTION_RADIUS)
}

/// Oracle settings that agree with an engine configuration.
pub fn oracle_config_for(cfg: &EngineConfig) -> OracleConfig {
    OracleConfig {
        step_length: cfg.step_length,
        roi_size: cfg.roi_size,
        n_queries: cfg.n_queries,
        ..OracleConfig::default()
    }
}

/// Traces `gt` with the ground-truth oracle, optionally corrupted by
/// `noise`, seeding from `heatmap` (the oracle heatmap when `None`).
pub fn trace_with_oracle(
    gt: &GraphFile,
    aerial: Option<&GridMap>,
    heatmap: Option<&GridMap>,
    cfg: &EngineConfig,
    noise: Option<&NoiseSpec>,
) -> Result<(RoadGraph, RunReport), TraceError> {
    let owned;
    let heatmap = match heatmap {
        Some(h) => h,
        None => {
            owned = oracle_heatmap(gt);
            &owned
        }
    };
    let oracle = OraclePredictor::new(&gt.graph, oracle_config_for(cfg))?;
    let mut predictor: Box<dyn Predictor> = match noise {
        Some(spec) if !spec.is_zero() => {
            spec.validate().map_err(TraceError::Noise)?;
            Box::new(NoisyPredictor::new(oracle, *spec))
        }
        _ => Box::new(oracle),
    };
    Ok(run(aerial, heatmap, predictor.as_mut(), cfg)?)
}
