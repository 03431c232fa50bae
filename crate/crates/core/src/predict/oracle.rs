use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::expert::{next_vertices_gt, VisitedState};
use crate::geometry::Point2;
use crate::graph::{GraphError, RoadGraph};
use crate::raster::{
    crop_roi, instance_mask_label, intersection_label, rasterize_graph, GridMap, RoiWindow,
    INTERSECTION_RADIUS, SEGMENT_THICKNESS,
};

use super::{Candidate, Predictor, PredictorError, PredictorOutput, PredictorQuery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub step_length: f64,
    pub roi_size: u32,
    pub n_queries: usize,
    /// Attach ground-truth instance masks to valid candidates.
    pub with_masks: bool,
    /// When the engine runs out of seeds, offer the first unwalked road.
    pub reseed_unvisited: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step_length: 20.0,
            roi_size: 128,
            n_queries: super::DEFAULT_QUERIES,
            with_masks: false,
            reseed_unvisited: false,
        }
    }
}

/// Perfect predictor backed by the ground-truth graph. Holds its own visited
/// state, so one instance serves exactly one trace of one tile.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    /// Ground truth as given; masks and label maps are drawn from it.
    gt: RoadGraph,
    /// Densified ground truth the walker runs on.
    graph: RoadGraph,
    visited: VisitedState,
    cfg: OracleConfig,
    label_maps: Option<(GridMap, GridMap)>,
    max_targets: usize,
    last_targets: Vec<Point2>,
}

impl OraclePredictor {
    pub fn new(gt: &RoadGraph, cfg: OracleConfig) -> Result<Self, GraphError> {
        let graph = gt.densify(cfg.step_length)?;
        Ok(Self {
            visited: VisitedState::new(&graph),
            gt: gt.clone(),
            graph,
            cfg,
            label_maps: None,
            max_targets: 0,
            last_targets: Vec::new(),
        })
    }

    /// Also return ground-truth segmentation and key-point crops.
    pub fn with_label_maps(mut self, width: u32, height: u32) -> Self {
        let seg = rasterize_graph(&self.gt, width, height, SEGMENT_THICKNESS);
        let int = intersection_label(&self.gt, width, height, INTERSECTION_RADIUS);
        self.label_maps = Some((seg, int));
        self
    }

    /// The densified ground truth the oracle walks on.
    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn visited(&self) -> &VisitedState {
        &self.visited
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    /// Next vertices found by the most recent query, before truncation.
    pub fn last_targets(&self) -> &[Point2] {
        &self.last_targets
    }

    /// Largest number of next vertices produced at any single step.
    pub fn max_targets(&self) -> usize {
        self.max_targets
    }

    /// Ground-truth next vertices from `v_t`; nothing when the agent has
    /// wandered more than half an ROI away from every road.
    pub fn next_vertices(&mut self, v_t: Point2) -> Vec<Point2> {
        let reach = self.cfg.roi_size as f64 / 2.0;
        let targets = match self.graph.distance_to(v_t) {
            Some(d) if d <= reach => {
                next_vertices_gt(&self.graph, &mut self.visited, v_t, self.cfg.step_length)
            }
            _ => Vec::new(),
        };
        self.max_targets = self.max_targets.max(targets.len());
        self.last_targets.clone_from(&targets);
        targets
    }

    /// Packs absolute targets into an output for `window`.
    pub fn output_for(&self, v_t: Point2, window: &RoiWindow, targets: &[Point2]) -> PredictorOutput {
        let n = self.cfg.n_queries;
        if targets.len() > n {
            warn!(m = targets.len(), n, "more ground-truth roads than query slots, truncating");
        }
        let mut out = PredictorOutput::empty(n);
        for (slot, &t) in out.candidates.iter_mut().zip(targets) {
            let off = window.offset_of(t);
            *slot = Candidate::new(off.x, off.y, 1.0);
            if self.cfg.with_masks {
                let mask = instance_mask_label(&self.gt, v_t, t, window, SEGMENT_THICKNESS);
                slot.mask = Some(mask.mask);
            }
        }
        if let Some((seg, int)) = &self.label_maps {
            out.segmentation = Some(crop_roi(seg, window));
            out.intersections = Some(crop_roi(int, window));
        }
        out
    }
}

impl Predictor for OraclePredictor {
    fn n_queries(&self) -> usize {
        self.cfg.n_queries
    }

    fn predict(&mut self, query: &PredictorQuery<'_>) -> Result<PredictorOutput, PredictorError> {
        let targets = self.next_vertices(query.v_t);
        Ok(self.output_for(query.v_t, &query.window, &targets))
    }

    fn fallback_seed(&mut self) -> Option<Point2> {
        if self.cfg.reseed_unvisited {
            self.visited.first_unvisited(&self.graph)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(v_t: Point2, history: &GridMap) -> PredictorQuery<'_> {
        PredictorQuery {
            step: 0,
            v_t,
            window: RoiWindow::around(v_t, 128).unwrap(),
            aerial: None,
            history,
        }
    }

    fn valid(out: &PredictorOutput) -> usize {
        out.candidates.iter().filter(|c| c.p >= 0.5).count()
    }

    #[test]
    fn mid_road_then_arriving() {
        let gt = RoadGraph::new(
            vec![Point2::new(0.0, 50.0), Point2::new(300.0, 50.0)],
            vec![[0, 1]],
        )
        .unwrap();
        let h = GridMap::mask(300, 100);
        let mut o = OraclePredictor::new(&gt, OracleConfig::default()).unwrap();
        let out = o.predict(&query(Point2::new(150.0, 50.0), &h)).unwrap();
        assert_eq!(out.candidates.len(), 10);
        assert_eq!(valid(&out), 2);
        let out = o.predict(&query(Point2::new(170.0, 50.0), &h)).unwrap();
        assert_eq!(valid(&out), 1);
        assert_eq!((out.candidates[0].dx, out.candidates[0].dy), (20.0, 0.0));
    }

    #[test]
    fn far_from_road_is_empty() {
        let gt = RoadGraph::new(
            vec![Point2::new(0.0, 0.0), Point2::new(300.0, 0.0)],
            vec![[0, 1]],
        )
        .unwrap();
        let h = GridMap::mask(300, 300);
        let mut o = OraclePredictor::new(&gt, OracleConfig::default()).unwrap();
        assert_eq!(valid(&o.predict(&query(Point2::new(150.0, 100.0), &h)).unwrap()), 0);
    }

    #[test]
    fn masks_attached_on_request() {
        let gt = RoadGraph::new(
            vec![Point2::new(0.0, 64.0), Point2::new(300.0, 64.0)],
            vec![[0, 1]],
        )
        .unwrap();
        let h = GridMap::mask(300, 128);
        let cfg = OracleConfig {
            with_masks: true,
            ..OracleConfig::default()
        };
        let mut o = OraclePredictor::new(&gt, cfg).unwrap().with_label_maps(300, 128);
        let out = o.predict(&query(Point2::new(0.0, 64.0), &h)).unwrap();
        assert!(out.candidates[0].mask.as_ref().unwrap().count_nonzero() > 0);
        assert!(out.candidates[1].mask.is_none());
        assert!(out.segmentation.is_some() && out.intersections.is_some());
    }
}
