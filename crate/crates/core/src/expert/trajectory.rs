use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Action, Engine, EngineConfig, RunReport};
use crate::geometry::Point2;
use crate::graph::RoadGraph;
use crate::predict::{OracleConfig, OraclePredictor};

use super::{ExpertConfig, ExpertError};

/// One expert step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    /// Agent position, possibly displaced by [`perturb`].
    pub v_t: Point2,
    /// Position the expert actually stood on.
    pub clean_v_t: Point2,
    /// Ground-truth next vertices, absolute tile coordinates.
    pub labels: Vec<Point2>,
    /// Valid candidates the engine acted on.
    pub m: usize,
    pub action: Action,
    /// Edges the engine added at this step.
    pub added_edges: Vec<[Point2; 2]>,
    /// Buffer contents after the step.
    pub buffer: Vec<Point2>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    /// Graph traced by the expert.
    pub traced: RoadGraph,
    /// Walked share of the densified ground truth.
    pub coverage: f64,
    pub report: RunReport,
}

/// Seeds in the order the expert pops them: intersections, then road ends,
/// each in row-major order.
fn expert_seeds(g: &RoadGraph) -> Vec<Point2> {
    let mut hubs: Vec<Point2> = Vec::new();
    let mut ends: Vec<Point2> = Vec::new();
    for v in 0..g.vertex_count() {
        match g.degree(v) {
            0 | 2 => {}
            1 => ends.push(g.vertices()[v]),
            _ => hubs.push(g.vertices()[v]),
        }
    }
    hubs.sort_by(Point2::row_major_cmp);
    ends.sort_by(Point2::row_major_cmp);
    hubs.extend(ends);
    hubs
}

/// Breadth-first expert traversal: the tracing engine driven by the
/// ground-truth oracle, seeded with every key vertex. Loops without key
/// vertices are picked up from the first unwalked point once the buffer
/// drains.
pub fn bfs_traverse(
    g: &RoadGraph,
    cfg: &ExpertConfig,
    width: u32,
    height: u32,
) -> Result<Trajectory, ExpertError> {
    cfg.validate()?;
    let engine_cfg = EngineConfig {
        roi_size: cfg.roi_size,
        step_length: cfg.step_length,
        n_queries: cfg.max_queries,
        ..EngineConfig::default()
    };
    let oracle_cfg = OracleConfig {
        step_length: cfg.step_length,
        roi_size: cfg.roi_size,
        n_queries: cfg.max_queries,
        with_masks: false,
        reseed_unvisited: true,
    };
    let mut oracle = OraclePredictor::new(g, oracle_cfg)?;
    let mut engine = Engine::new(engine_cfg, width, height)?;
    engine.seed(expert_seeds(g));

    let mut steps = Vec::new();
    while let Some(rec) = engine.step(&mut oracle) {
        let labels: Vec<Point2> = oracle
            .last_targets()
            .iter()
            .take(cfg.max_queries)
            .copied()
            .collect();
        steps.push(TrajectoryStep {
            step: rec.step,
            v_t: rec.v_t,
            clean_v_t: rec.v_t,
            labels,
            m: rec.m,
            action: rec.action,
            added_edges: rec.added_edges,
            buffer: engine.buffer().snapshot(),
        });
    }
    if oracle.max_targets() > cfg.max_queries {
        let step = steps.len();
        return Err(ExpertError::TooManyLabels {
            step,
            m: oracle.max_targets(),
            n: cfg.max_queries,
        });
    }
    Ok(Trajectory {
        coverage: oracle.visited().visited_fraction(oracle.graph()),
        traced: engine.graph(),
        report: engine.report(),
        steps,
    })
}

/// Displaces every recorded position by i.i.d. uniform noise on
/// `[-amplitude, amplitude]` per axis. Labels keep their ground-truth
/// positions; consumers re-express them relative to the displaced window.
pub fn perturb(traj: &Trajectory, amplitude: f64, seed: u64) -> Trajectory {
    let mut out = traj.clone();
    if amplitude == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in out.steps.iter_mut() {
        let dx = rng.gen_range(-amplitude..=amplitude);
        let dy = rng.gen_range(-amplitude..=amplitude);
        s.v_t = s.clean_v_t + Point2::new(dx, dy);
    }
    out
}
