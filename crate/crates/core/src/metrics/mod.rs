//! TOPO and APLS graph similarity.
//!
//! Both metrics sample points along maximal chains of the graphs, so they do
//! not depend on vertex order or on how finely edges are subdivided.

mod apls;
mod sampling;
mod topo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::RoadGraph;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid metric parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopoParams {
    /// Seed spacing along the ground truth.
    pub seed_spacing: f64,
    pub match_radius: f64,
    /// Along-graph reach of each compared sub-graph.
    pub propagation_radius: f64,
    /// Spacing of the compared points inside a sub-graph.
    pub marble_spacing: f64,
    pub seed: u64,
}

impl Default for TopoParams {
    fn default() -> Self {
        Self {
            seed_spacing: 50.0,
            match_radius: 8.0,
            propagation_radius: 300.0,
            marble_spacing: 5.0,
            seed: 0,
        }
    }
}

impl TopoParams {
    pub fn validate(&self) -> Result<(), MetricError> {
        for (name, v) in [
            ("seed_spacing", self.seed_spacing),
            ("match_radius", self.match_radius),
            ("propagation_radius", self.propagation_radius),
            ("marble_spacing", self.marble_spacing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MetricError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        if self.match_radius >= self.propagation_radius {
            return Err(MetricError::Params(
                "match_radius must be smaller than propagation_radius".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AplsParams {
    pub pairs: usize,
    /// Spacing of the candidate pair end points.
    pub point_spacing: f64,
    /// Points farther than this from the other graph cannot be matched.
    pub snap_cutoff: f64,
    pub symmetric: bool,
    pub seed: u64,
}

impl Default for AplsParams {
    fn default() -> Self {
        Self {
            pairs: 500,
            point_spacing: 10.0,
            snap_cutoff: 8.0,
            symmetric: true,
            seed: 0,
        }
    }
}

impl AplsParams {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.pairs == 0 {
            return Err(MetricError::Params("pairs must be at least 1".into()));
        }
        for (name, v) in [("point_spacing", self.point_spacing), ("snap_cutoff", self.snap_cutoff)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MetricError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopoScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gt_seeds: usize,
    pub matched_seeds: usize,
    /// Predicted seeds with no ground truth nearby.
    pub unmatched_pred_seeds: usize,
    pub gt_points: usize,
    pub pred_points: usize,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn topo(gt: &RoadGraph, pred: &RoadGraph, params: &TopoParams) -> Result<TopoScore, MetricError> {
    params.validate()?;
    let c = topo::topo_counts(gt, pred, params);
    let ratio = |num: usize, den: usize| if den > 0 { num as f64 / den as f64 } else { 0.0 };
    let precision = ratio(c.matched_pred, c.pred_total);
    let recall = ratio(c.matched_gt, c.gt_total);
    Ok(TopoScore {
        precision,
        recall,
        f1: f1_score(precision, recall),
        gt_seeds: c.gt_seeds,
        matched_seeds: c.matched_seeds,
        unmatched_pred_seeds: c.unmatched_pred_seeds,
        gt_points: c.gt_total,
        pred_points: c.pred_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AplsScore {
    /// `None` when the ground truth has no connected pair of points.
    pub score: Option<f64>,
    pub gt_to_pred: Option<f64>,
    pub pred_to_gt: Option<f64>,
    pub pairs: usize,
}

/// Average path-length similarity. In symmetric mode a prediction without
/// any connected pair scores 0 in the reverse direction.
pub fn apls(gt: &RoadGraph, pred: &RoadGraph, params: &AplsParams) -> Result<AplsScore, MetricError> {
    params.validate()?;
    let forward = apls::apls_one_way(gt, pred, params, 0);
    let Some((fwd, n_fwd)) = forward else {
        return Ok(AplsScore {
            score: None,
            gt_to_pred: None,
            pred_to_gt: None,
            pairs: 0,
        });
    };
    if !params.symmetric {
        return Ok(AplsScore {
            score: Some(fwd),
            gt_to_pred: Some(fwd),
            pred_to_gt: None,
            pairs: n_fwd,
        });
    }
    let (rev, n_rev) = apls::apls_one_way(pred, gt, params, 1).unwrap_or((0.0, 0));
    Ok(AplsScore {
        score: Some((fwd + rev) / 2.0),
        gt_to_pred: Some(fwd),
        pred_to_gt: Some(rev),
        pairs: n_fwd + n_rev,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub apls: Option<f64>,
    pub topo: TopoScore,
    pub apls_detail: AplsScore,
    pub topo_params: TopoParams,
    pub apls_params: AplsParams,
}

pub fn evaluate(
    gt: &RoadGraph,
    pred: &RoadGraph,
    topo_params: &TopoParams,
    apls_params: &AplsParams,
) -> Result<MetricReport, MetricError> {
    let t = topo(gt, pred, topo_params)?;
    let a = apls(gt, pred, apls_params)?;
    Ok(MetricReport {
        precision: t.precision,
        recall: t.recall,
        f1: t.f1,
        apls: a.score,
        topo: t,
        apls_detail: a,
        topo_params: *topo_params,
        apls_params: *apls_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn tee() -> RoadGraph {
        RoadGraph::new(
            vec![p(20.0, 100.0), p(200.0, 100.0), p(380.0, 100.0), p(200.0, 300.0)],
            vec![[0, 1], [1, 2], [1, 3]],
        )
        .unwrap()
    }

    #[test]
    fn identity_is_perfect() {
        let g = tee();
        let t = topo(&g, &g, &TopoParams::default()).unwrap();
        assert_eq!((t.precision, t.recall, t.f1), (1.0, 1.0, 1.0));
        let a = apls(&g, &g, &AplsParams::default()).unwrap();
        assert!((a.score.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let g = tee();
        let e = RoadGraph::empty();
        let t = topo(&g, &e, &TopoParams::default()).unwrap();
        assert_eq!((t.precision, t.recall, t.f1), (0.0, 0.0, 0.0));
        assert_eq!(apls(&g, &e, &AplsParams::default()).unwrap().score, Some(0.0));
    }

    #[test]
    fn translated_prediction_has_zero_f1() {
        let g = tee();
        let shifted = RoadGraph::new(
            g.vertices().iter().map(|v| *v + p(16.0, 16.0)).collect(),
            g.edges().to_vec(),
        )
        .unwrap();
        assert_eq!(topo(&g, &shifted, &TopoParams::default()).unwrap().f1, 0.0);
    }

    #[test]
    fn f1_invariant() {
        assert_eq!(f1_score(0.0, 0.0), 0.0);
        assert!((f1_score(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn params_validated() {
        let bad = TopoParams {
            match_radius: 400.0,
            ..TopoParams::default()
        };
        assert!(topo(&tee(), &tee(), &bad).is_err());
        let bad = AplsParams {
            pairs: 0,
            ..AplsParams::default()
        };
        assert!(apls(&tee(), &tee(), &bad).is_err());
    }
}
