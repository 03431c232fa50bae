//! The predictor contract and its implementations: the ground-truth oracle,
//! a corrupting wrapper, and a client for external predictors speaking
//! `rngpred-v1`.

mod noise;
mod oracle;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::raster::{crop_roi, GridMap, RoiWindow};

pub use noise::{corrupt, NoiseSpec, NoisyPredictor};
pub(crate) use noise::mix;
pub use oracle::{OracleConfig, OraclePredictor};
pub use wire::{WireConfig, WirePredictor};

/// Default number of candidate slots per prediction.
pub const DEFAULT_QUERIES: usize = 10;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("predictor timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("malformed predictor response: {0}")]
    Malformed(String),
    #[error("protocol mismatch: {0}")]
    Protocol(String),
    #[error("predictor connection closed")]
    Disconnected,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One candidate next-step vertex, as an offset from the ROI center.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub dx: f64,
    pub dy: f64,
    pub p: f64,
    pub mask: Option<GridMap>,
}

impl Candidate {
    pub fn new(dx: f64, dy: f64, p: f64) -> Self {
        Self {
            dx,
            dy,
            p,
            mask: None,
        }
    }

    pub fn invalid() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn offset(&self) -> Point2 {
        Point2::new(self.dx, self.dy)
    }
}

/// Everything a predictor returns for one ROI.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictorOutput {
    pub candidates: Vec<Candidate>,
    /// Road-segment probability map over the ROI, if the predictor has one.
    pub segmentation: Option<GridMap>,
    /// Key-point probability map over the ROI, if the predictor has one.
    pub intersections: Option<GridMap>,
}

impl PredictorOutput {
    /// `n` invalid candidates.
    pub fn empty(n: usize) -> Self {
        Self {
            candidates: vec![Candidate::invalid(); n],
            ..Self::default()
        }
    }

    /// Checks slot count and probability range.
    pub fn validate(&self, n: usize, roi_size: u32) -> Result<(), PredictorError> {
        if self.candidates.len() != n {
            return Err(PredictorError::Malformed(format!(
                "expected {n} candidates, got {}",
                self.candidates.len()
            )));
        }
        for (i, c) in self.candidates.iter().enumerate() {
            if !(c.p.is_finite() && (0.0..=1.0).contains(&c.p)) {
                return Err(PredictorError::Malformed(format!(
                    "candidate {i} probability {} outside [0, 1]",
                    c.p
                )));
            }
            if !(c.dx.is_finite() && c.dy.is_finite()) {
                return Err(PredictorError::Malformed(format!(
                    "candidate {i} offset is not finite"
                )));
            }
            if let Some(m) = &c.mask {
                check_roi_map(m, roi_size, &format!("candidate {i} mask"))?;
            }
        }
        if let Some(m) = &self.segmentation {
            check_roi_map(m, roi_size, "segmentation map")?;
        }
        if let Some(m) = &self.intersections {
            check_roi_map(m, roi_size, "intersection map")?;
        }
        Ok(())
    }
}

fn check_roi_map(m: &GridMap, roi_size: u32, what: &str) -> Result<(), PredictorError> {
    if m.width() != roi_size || m.height() != roi_size || m.channels() != 1 {
        return Err(PredictorError::Malformed(format!(
            "{what} is {}x{}x{}, expected {roi_size}x{roi_size}x1",
            m.width(),
            m.height(),
            m.channels()
        )));
    }
    Ok(())
}

/// The agent state a predictor sees at one step. ROI crops are produced on
/// demand so predictors that do not look at pixels pay nothing for them.
#[derive(Debug, Clone, Copy)]
pub struct PredictorQuery<'a> {
    pub step: usize,
    pub v_t: Point2,
    pub window: RoiWindow,
    pub aerial: Option<&'a GridMap>,
    pub history: &'a GridMap,
}

impl PredictorQuery<'_> {
    /// Aerial ROI (3 channels); black when no aerial tile was supplied.
    pub fn image_roi(&self) -> GridMap {
        match self.aerial {
            Some(a) => crop_roi(a, &self.window),
            None => GridMap::new(self.window.size, self.window.size, 3),
        }
    }

    pub fn history_roi(&self) -> GridMap {
        crop_roi(self.history, &self.window)
    }
}

/// Source of next-step vertex candidates for the tracing engine.
pub trait Predictor {
    /// Number of candidate slots `N` in every output.
    fn n_queries(&self) -> usize;

    fn predict(&mut self, query: &PredictorQuery<'_>) -> Result<PredictorOutput, PredictorError>;

    /// Extra seed offered when the engine's buffer runs dry.
    fn fallback_seed(&mut self) -> Option<Point2> {
        None
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn n_queries(&self) -> usize {
        (**self).n_queries()
    }

    fn predict(&mut self, query: &PredictorQuery<'_>) -> Result<PredictorOutput, PredictorError> {
        (**self).predict(query)
    }

    fn fallback_seed(&mut self) -> Option<Point2> {
        (**self).fallback_seed()
    }
}

/// Replays a fixed list of outputs, one per call, then reports no roads.
/// Useful for driving the engine through exact action sequences.
#[derive(Debug, Clone)]
pub struct ScriptedPredictor {
    n: usize,
    script: std::collections::VecDeque<Result<PredictorOutput, String>>,
}

impl ScriptedPredictor {
    pub fn new(n: usize, script: impl IntoIterator<Item = Result<PredictorOutput, String>>) -> Self {
        Self {
            n,
            script: script.into_iter().collect(),
        }
    }

    /// Output with the given `(dx, dy)` offsets at probability 1.
    pub fn moves(n: usize, offsets: &[(f64, f64)]) -> PredictorOutput {
        let mut out = PredictorOutput::empty(n);
        for (slot, &(dx, dy)) in out.candidates.iter_mut().zip(offsets) {
            *slot = Candidate::new(dx, dy, 1.0);
        }
        out
    }
}

impl Predictor for ScriptedPredictor {
    fn n_queries(&self) -> usize {
        self.n
    }

    fn predict(&mut self, _query: &PredictorQuery<'_>) -> Result<PredictorOutput, PredictorError> {
        match self.script.pop_front() {
            Some(Ok(out)) => Ok(out),
            Some(Err(msg)) => Err(PredictorError::Malformed(msg)),
            None => Ok(PredictorOutput::empty(self.n)),
        }
    }
}

/// Serializable candidate, used in reports and the wire protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub dx: f64,
    pub dy: f64,
    pub p: f64,
}

impl From<&Candidate> for CandidateRecord {
    fn from(c: &Candidate) -> Self {
        Self {
            dx: c.dx,
            dy: c.dy,
            p: c.p,
        }
    }
}
