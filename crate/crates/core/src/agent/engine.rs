use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::geometry::Point2;
use crate::graph::RoadGraph;
use crate::predict::{Predictor, PredictorOutput, PredictorQuery};
use crate::raster::{
    local_peaks, rasterize_graph, stroke_polyline, GridMap, RoiWindow, DEFAULT_NMS_RADIUS,
    DEFAULT_PEAK_THRESHOLD, HISTORY_THICKNESS,
};

use super::{AgentError, CandidateBuffer, GraphBuilder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Candidates below this probability are ignored.
    pub prob_threshold: f64,
    pub roi_size: u32,
    /// Candidates and seeds within this distance of an existing vertex reuse it.
    pub snap_radius: f64,
    /// Runaway guard; defaults to `4 * width * height / step_length^2`.
    pub max_steps: Option<usize>,
    /// Longest accepted candidate offset; defaults to `roi_size / 2 - 1`.
    pub step_bound: Option<f64>,
    /// Nominal step length, used only to derive the default step budget.
    pub step_length: f64,
    pub n_queries: usize,
    pub peak_threshold: u8,
    pub nms_radius: f64,
    /// Retry each position where the predictor failed once the buffer is empty.
    pub reseed_on_failure: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            prob_threshold: 0.5,
            roi_size: 128,
            snap_radius: 5.0,
            max_steps: None,
            step_bound: None,
            step_length: 20.0,
            n_queries: crate::predict::DEFAULT_QUERIES,
            peak_threshold: DEFAULT_PEAK_THRESHOLD,
            nms_radius: DEFAULT_NMS_RADIUS,
            reseed_on_failure: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::Config(m));
        if !(self.prob_threshold > 0.0 && self.prob_threshold < 1.0) {
            return bad(format!("prob_threshold must lie in (0, 1), got {}", self.prob_threshold));
        }
        if self.roi_size < 32 || !self.roi_size.is_multiple_of(2) {
            return bad(format!("roi_size must be even and at least 32, got {}", self.roi_size));
        }
        if !(self.snap_radius >= 0.0 && self.snap_radius < self.roi_size as f64 / 4.0) {
            return bad(format!("snap_radius must lie in [0, roi_size/4), got {}", self.snap_radius));
        }
        if !(self.step_length > 0.0) {
            return bad(format!("step_length must be positive, got {}", self.step_length));
        }
        if let Some(b) = self.step_bound {
            if !(b > 0.0) {
                return bad(format!("step_bound must be positive, got {b}"));
            }
        }
        if self.n_queries == 0 {
            return bad("n_queries must be positive".into());
        }
        if !(self.nms_radius >= 1.0) {
            return bad(format!("nms_radius must be at least 1, got {}", self.nms_radius));
        }
        Ok(())
    }

    pub fn effective_max_steps(&self, width: u32, height: u32) -> usize {
        self.max_steps.unwrap_or_else(|| {
            let area = width as f64 * height as f64;
            ((4.0 * area / (self.step_length * self.step_length)).ceil() as usize).max(1)
        })
    }

    pub fn effective_step_bound(&self) -> f64 {
        self.step_bound.unwrap_or(self.roi_size as f64 / 2.0 - 1.0)
    }
}

/// What the agent did at a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// No road ahead: the trace ends and the next seed is popped.
    Stop,
    /// A single road ahead: one edge added and the agent moves along it.
    Move,
    /// Several roads met: edges added, endpoints pushed, next seed popped.
    Branch,
    /// The predictor failed; handled like `Stop`.
    Failed,
}

/// One engine step, as written to the trace log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub v_t: Point2,
    pub window_center: [i64; 2],
    /// Valid candidates after filtering and snapping.
    pub m: usize,
    pub action: Action,
    /// New edges with endpoints in drawing order, so replaying them onto a
    /// blank map reproduces the historical map exactly.
    pub added_edges: Vec<[Point2; 2]>,
    pub pushed: Vec<Point2>,
    pub popped: Option<Point2>,
    pub moved_to: Option<Point2>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
    /// Raw predictor output; not part of the log.
    #[serde(skip)]
    pub output: Option<PredictorOutput>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: usize,
    /// Seeds popped from the buffer (each starts a trace).
    pub traces: usize,
    pub initial_seeds: usize,
    pub predictor_failures: usize,
    pub forced_termination: bool,
    pub max_steps: usize,
    pub vertices: usize,
    pub edges: usize,
    pub stops: usize,
    pub moves: usize,
    pub branches: usize,
    /// Positions where the predictor failed.
    pub breakpoints: Vec<Point2>,
}

#[derive(Debug, Clone, Copy)]
struct Cursor {
    pos: Point2,
    vertex: Option<usize>,
    /// Popped from the retry queue; a second failure is final.
    retried: bool,
}

/// Tracing engine for one tile.
pub struct Engine<'a> {
    cfg: EngineConfig,
    width: u32,
    height: u32,
    aerial: Option<&'a GridMap>,
    builder: GraphBuilder,
    history: GridMap,
    buffer: CandidateBuffer,
    current: Option<Cursor>,
    retry: VecDeque<Point2>,
    max_steps: usize,
    step_bound: f64,
    report: RunReport,
}

impl<'a> Engine<'a> {
    pub fn new(cfg: EngineConfig, width: u32, height: u32) -> Result<Self, AgentError> {
        cfg.validate()?;
        let max_steps = cfg.effective_max_steps(width, height);
        let step_bound = cfg.effective_step_bound();
        Ok(Self {
            builder: GraphBuilder::new(cfg.snap_radius),
            history: GridMap::mask(width, height),
            buffer: CandidateBuffer::new(),
            current: None,
            retry: VecDeque::new(),
            max_steps,
            step_bound,
            report: RunReport {
                max_steps,
                ..RunReport::default()
            },
            cfg,
            width,
            height,
            aerial: None,
        })
    }

    pub fn with_aerial(mut self, aerial: &'a GridMap) -> Result<Self, AgentError> {
        check_dims("aerial tile", aerial, self.width, self.height)?;
        self.aerial = Some(aerial);
        Ok(self)
    }

    pub fn seed(&mut self, seeds: impl IntoIterator<Item = Point2>) {
        let before = self.buffer.len();
        self.buffer.extend(seeds);
        self.report.initial_seeds += self.buffer.len() - before;
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn buffer(&self) -> &CandidateBuffer {
        &self.buffer
    }

    pub fn history(&self) -> &GridMap {
        &self.history
    }

    pub fn builder(&self) -> &GraphBuilder {
        &self.builder
    }

    pub fn report(&self) -> RunReport {
        let mut r = self.report.clone();
        r.vertices = self.builder.vertex_count();
        r.edges = self.builder.edge_count();
        r
    }

    pub fn graph(&self) -> RoadGraph {
        self.builder.to_graph()
    }

    /// Position of the agent, if mid-trace.
    pub fn position(&self) -> Option<Point2> {
        self.current.map(|c| c.pos)
    }

    /// True when the historical map equals a fresh rasterization of the
    /// graph built so far.
    pub fn history_is_coherent(&self) -> bool {
        rasterize_graph(&self.graph(), self.width, self.height, HISTORY_THICKNESS) == self.history
    }

    fn pop_seed(&mut self, predictor: &mut dyn Predictor) -> Option<Cursor> {
        let mut retried = false;
        let pos = self
            .buffer
            .pop()
            .or_else(|| predictor.fallback_seed())
            .or_else(|| {
                if self.cfg.reseed_on_failure {
                    retried = true;
                    self.retry.pop_front()
                } else {
                    None
                }
            })?;
        self.report.traces += 1;
        let vertex = self.builder.nearest_within(pos, self.cfg.snap_radius);
        Some(Cursor {
            pos: vertex.map_or(pos, |v| self.builder.vertex(v)),
            vertex,
            retried,
        })
    }

    fn draw_edge(&mut self, a: usize, b: usize) -> [Point2; 2] {
        let (a, b) = (a.min(b), a.max(b));
        let seg = [self.builder.vertex(a), self.builder.vertex(b)];
        stroke_polyline(&mut self.history, (0, 0), &seg, HISTORY_THICKNESS);
        seg
    }

    /// Runs one step. Returns `None` once the buffer is exhausted or the step
    /// budget is spent.
    pub fn step(&mut self, predictor: &mut dyn Predictor) -> Option<StepRecord> {
        if self.current.is_none() {
            self.current = Some(self.pop_seed(predictor)?);
        }
        if self.report.steps >= self.max_steps {
            if !self.report.forced_termination {
                warn!(max_steps = self.max_steps, "step budget exhausted, stopping");
            }
            self.report.forced_termination = true;
            self.current = None;
            return None;
        }
        let mut cur = self.current.expect("cursor set above");
        let step = self.report.steps;
        self.report.steps += 1;
        let window = RoiWindow::around(cur.pos, self.cfg.roi_size).expect("roi size validated");
        let query = PredictorQuery {
            step,
            v_t: cur.pos,
            window,
            aerial: self.aerial,
            history: &self.history,
        };
        let result = predictor
            .predict(&query)
            .and_then(|out| out.validate(self.cfg.n_queries, self.cfg.roi_size).map(|_| out));

        let mut record = StepRecord {
            step,
            v_t: cur.pos,
            window_center: [window.center.0, window.center.1],
            m: 0,
            action: Action::Stop,
            added_edges: Vec::new(),
            pushed: Vec::new(),
            popped: None,
            moved_to: None,
            failure: None,
            output: None,
        };

        let output = match result {
            Ok(out) => out,
            Err(e) => {
                warn!(step, x = cur.pos.x, y = cur.pos.y, error = %e, "predictor failed, abandoning trace");
                self.report.predictor_failures += 1;
                self.report.breakpoints.push(cur.pos);
                if !cur.retried {
                    self.retry.push_back(cur.pos);
                }
                record.action = Action::Failed;
                record.failure = Some(e.to_string());
                self.current = self.pop_seed(predictor);
                record.popped = self.current.map(|c| c.pos);
                return Some(record);
            }
        };

        let snap = self.cfg.snap_radius;
        let mut accepted: Vec<usize> = Vec::new();
        for c in &output.candidates {
            if c.p < self.cfg.prob_threshold || c.offset().norm() > self.step_bound {
                continue;
            }
            let target = window.absolute(c.offset());
            let existing = self.builder.nearest_within(target, snap);
            match (cur.vertex, existing) {
                (Some(v), Some(t)) if v == t || self.builder.has_edge(v, t) => continue,
                (None, None) if target.dist(cur.pos) <= snap => continue,
                _ => {}
            }
            let from = match cur.vertex {
                Some(v) => v,
                None => {
                    let v = self.builder.insert(cur.pos);
                    cur.vertex = Some(v);
                    v
                }
            };
            let to = existing.unwrap_or_else(|| self.builder.insert(target));
            if self.builder.add_edge(from, to, step) {
                let seg = self.draw_edge(from, to);
                record.added_edges.push(seg);
                accepted.push(to);
            }
        }

        record.m = accepted.len();
        match accepted.as_slice() {
            [] => {
                record.action = Action::Stop;
                self.report.stops += 1;
                self.current = self.pop_seed(predictor);
                record.popped = self.current.map(|c| c.pos);
            }
            [to] => {
                record.action = Action::Move;
                self.report.moves += 1;
                let pos = self.builder.vertex(*to);
                record.moved_to = Some(pos);
                self.current = Some(Cursor {
                    pos,
                    vertex: Some(*to),
                    retried: false,
                });
            }
            many => {
                record.action = Action::Branch;
                self.report.branches += 1;
                for &v in many {
                    let p = self.builder.vertex(v);
                    self.buffer.push(p);
                    record.pushed.push(p);
                }
                self.current = self.pop_seed(predictor);
                record.popped = self.current.map(|c| c.pos);
            }
        }
        debug!(step, m = record.m, action = ?record.action, "engine step");
        // Full coherence check on small tiles only; tests check large tiles
        // once at termination.
        if cfg!(debug_assertions) && (self.width as u64 * self.height as u64) <= 1 << 18 {
            debug_assert!(self.history_is_coherent(), "history diverged at step {step}");
        }
        record.output = Some(output);
        Some(record)
    }

    /// Steps to termination, handing each record to `observe`.
    pub fn run_with(
        &mut self,
        predictor: &mut dyn Predictor,
        mut observe: impl FnMut(&StepRecord),
    ) -> RunReport {
        while let Some(rec) = self.step(predictor) {
            observe(&rec);
        }
        self.report()
    }
}

fn check_dims(what: &'static str, m: &GridMap, w: u32, h: u32) -> Result<(), AgentError> {
    if m.width() != w || m.height() != h {
        return Err(AgentError::Dimensions {
            what,
            got_w: m.width(),
            got_h: m.height(),
            want_w: w,
            want_h: h,
        });
    }
    Ok(())
}

/// Initial candidates: peaks of the key-point heatmap in emission order.
pub fn seed_buffer(heatmap: &GridMap, cfg: &EngineConfig) -> CandidateBuffer {
    local_peaks(heatmap, cfg.peak_threshold, cfg.nms_radius)
        .into_iter()
        .collect()
}

/// Traces a whole tile: seeds from `heatmap`, then steps until the buffer
/// is empty.
pub fn run(
    aerial: Option<&GridMap>,
    heatmap: &GridMap,
    predictor: &mut dyn Predictor,
    cfg: &EngineConfig,
) -> Result<(RoadGraph, RunReport), AgentError> {
    let mut engine = Engine::new(cfg.clone(), heatmap.width(), heatmap.height())?;
    if let Some(a) = aerial {
        engine = engine.with_aerial(a)?;
    }
    engine.seed(seed_buffer(heatmap, cfg).snapshot());
    let report = engine.run_with(predictor, |_| {});
    Ok((engine.graph(), report))
}
