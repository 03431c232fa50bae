use serde::{Deserialize, Serialize};

use crate::expert::{LabelVertex, TrainingSample};
use crate::predict::{Candidate, PredictorOutput};
use crate::raster::GridMap;

use super::hungarian::{hungarian, Assignment, CostMatrix};
use super::TrainingError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the coordinate loss.
    pub alpha: f64,
    /// Weight of the probability loss.
    pub beta: f64,
    /// Weight of the instance-mask loss.
    pub gamma: f64,
    /// Pixel weight of road pixels in the segmentation loss.
    pub fg_weight: f64,
    /// Probability term of the matching cost.
    pub lambda: f64,
    /// Probability clamp.
    pub eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            beta: 1.0,
            gamma: 1.0,
            fg_weight: 5.0,
            lambda: 10.0,
            eps: 1e-7,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TrainingError> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TrainingError::Argument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.fg_weight > 0.0 && self.fg_weight.is_finite()) {
            return Err(TrainingError::Argument(format!(
                "fg_weight must be positive, got {}",
                self.fg_weight
            )));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(TrainingError::Argument(format!("eps must lie in (0, 0.5), got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub seg: f64,
    pub coord: f64,
    pub prob: f64,
    pub ins: f64,
    pub total: f64,
    pub matched: usize,
    /// False when the predictor returned no segmentation maps; `seg` is 0.
    pub seg_scored: bool,
    /// Matched candidates that carried a mask.
    pub masks_scored: usize,
}

impl LossBreakdown {
    pub fn combine(seg: f64, coord: f64, prob: f64, ins: f64, w: &LossWeights) -> f64 {
        seg + w.alpha * coord + w.beta * prob + w.gamma * ins
    }
}

/// L1 offset distance plus `lambda * (1 - p)`.
pub fn match_cost(c: &Candidate, label: &LabelVertex, lambda: f64) -> f64 {
    (c.dx - label.offset.x).abs() + (c.dy - label.offset.y).abs() + lambda * (1.0 - c.p)
}

pub fn match_candidates(
    candidates: &[Candidate],
    labels: &[LabelVertex],
    lambda: f64,
) -> Result<Assignment, TrainingError> {
    let cm = CostMatrix::from_fn(candidates.len(), labels.len(), |i, j| {
        match_cost(&candidates[i], &labels[j], lambda)
    })?;
    hungarian(&cm)
}

/// Binary cross-entropy with the probability clamped to `[eps, 1 - eps]`.
pub fn clamped_bce(p: f64, target: bool, eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    if target {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Binary cross-entropy that only guards against `log(0)`; exact
/// predictions cost exactly zero.
fn floor_bce(p: f64, target: bool, eps: f64) -> f64 {
    let q = if target { p } else { 1.0 - p };
    -q.max(eps).ln()
}

fn check_dims(what: &str, a: &GridMap, b: &GridMap) -> Result<(), TrainingError> {
    if (a.width(), a.height()) != (b.width(), b.height()) || a.channels() != 1 || b.channels() != 1 {
        return Err(TrainingError::Argument(format!(
            "{what}: prediction is {}x{}x{}, label is {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Foreground-weighted mean BCE of a probability map against a binary label.
pub fn weighted_map_bce(pred: &GridMap, label: &GridMap, fg_weight: f64, eps: f64) -> Result<f64, TrainingError> {
    check_dims("segmentation map", pred, label)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (&p, &t) in pred.data().iter().zip(label.data()) {
        let target = t > 0;
        let w = if target { fg_weight } else { 1.0 };
        num += w * clamped_bce(p as f64 / 255.0, target, eps);
        den += w;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

fn mask_bce(pred: &GridMap, label: &GridMap, eps: f64) -> Result<f64, TrainingError> {
    check_dims("instance mask", pred, label)?;
    let n = pred.data().len();
    let sum: f64 = pred
        .data()
        .iter()
        .zip(label.data())
        .map(|(&p, &t)| floor_bce(p as f64 / 255.0, t > 0, eps))
        .sum();
    Ok(if n > 0 { sum / n as f64 } else { 0.0 })
}

/// Scores one predictor output against an expert sample.
pub fn losses(out: &PredictorOutput, sample: &TrainingSample, w: &LossWeights) -> Result<LossBreakdown, TrainingError> {
    w.validate()?;
    let labels: Vec<LabelVertex> = sample.labels.iter().filter(|l| l.valid).copied().collect();
    if sample.instance_masks.len() != labels.len() {
        return Err(TrainingError::Argument(format!(
            "sample has {} valid labels but {} instance masks",
            labels.len(),
            sample.instance_masks.len()
        )));
    }
    let n = out.candidates.len();
    if n == 0 {
        return Err(TrainingError::Argument("prediction has no candidates".into()));
    }
    let assignment = match_candidates(&out.candidates, &labels, w.lambda)?;

    let mut coord_sum = 0.0;
    let mut prob_sum = 0.0;
    let mut ins_sum = 0.0;
    let mut masks_scored = 0;
    for (c, m) in out.candidates.iter().zip(&assignment.pred_to_label) {
        prob_sum += clamped_bce(c.p, m.is_some(), w.eps);
        if let Some(j) = *m {
            let l = &labels[j];
            coord_sum += (c.dx - l.offset.x).abs() + (c.dy - l.offset.y).abs();
            if let Some(mask) = &c.mask {
                ins_sum += mask_bce(mask, &sample.instance_masks[j], w.eps)?;
                masks_scored += 1;
            }
        }
    }
    let matched = assignment.matched();
    let coord = if matched > 0 { coord_sum / matched as f64 } else { 0.0 };
    let prob = prob_sum / n as f64;
    let ins = if masks_scored > 0 { ins_sum / masks_scored as f64 } else { 0.0 };

    let (seg, seg_scored) = match (&out.segmentation, &out.intersections) {
        (Some(s), Some(i)) => (
            weighted_map_bce(s, &sample.segmentation, w.fg_weight, w.eps)?
                + weighted_map_bce(i, &sample.intersections, w.fg_weight, w.eps)?,
            true,
        ),
        (Some(s), None) => (weighted_map_bce(s, &sample.segmentation, w.fg_weight, w.eps)?, true),
        (None, Some(i)) => (weighted_map_bce(i, &sample.intersections, w.fg_weight, w.eps)?, true),
        (None, None) => (0.0, false),
    };

    Ok(LossBreakdown {
        seg,
        coord,
        prob,
        ins,
        total: LossBreakdown::combine(seg, coord, prob, ins, w),
        matched,
        seg_scored,
        masks_scored,
    })
}
