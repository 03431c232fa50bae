//! Ground-truth stepping policy shared by the expert and the oracle predictor.
//!
//! From the projection of the agent position, the walker follows every
//! unvisited direction for up to `D` pixels, stopping early at road ends,
//! intersections and the boundary of already-walked road. Stops that fall
//! less than `D/2` past the nominal step are taken directly so no sliver of
//! road shorter than half a step is left behind before an intersection.

use crate::geometry::Point2;
use crate::graph::{GraphLocation, RoadGraph};

/// A projection this close (along the road) to an intersection or road end
/// starts from that vertex.
pub const KEY_VERTEX_SNAP: f64 = 2.0;

/// Arc-length tolerance for interval bookkeeping.
const TOL: f64 = 1e-6;

/// Walked portions of every edge, as merged arc-length intervals measured
/// from the edge's first endpoint. Marks are only ever added.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitedState {
    intervals: Vec<Vec<(f64, f64)>>,
}

impl VisitedState {
    pub fn new(g: &RoadGraph) -> Self {
        Self {
            intervals: vec![Vec::new(); g.edge_count()],
        }
    }

    pub fn mark(&mut self, g: &RoadGraph, edge: usize, lo: f64, hi: f64) {
        let len = g.edge_length(edge);
        let (mut lo, mut hi) = (lo.min(hi).max(0.0), hi.max(lo).min(len));
        if lo <= TOL {
            lo = 0.0;
        }
        if hi >= len - TOL {
            hi = len;
        }
        if hi - lo <= TOL {
            return;
        }
        let spans = &mut self.intervals[edge];
        spans.push((lo, hi));
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
        for &(a, b) in spans.iter() {
            match merged.last_mut() {
                Some(last) if a <= last.1 + TOL => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        *spans = merged;
    }

    pub fn intervals(&self, edge: usize) -> &[(f64, f64)] {
        &self.intervals[edge]
    }

    /// Unvisited distance from arc position `s` in direction `dir` before
    /// the next visited interval (or the edge end). Zero when the road
    /// immediately ahead is already visited.
    fn free_run(&self, edge: usize, s: f64, dir: f64, len: f64) -> f64 {
        let spans = &self.intervals[edge];
        if dir > 0.0 {
            let mut run = len - s;
            for &(lo, hi) in spans {
                if lo <= s + TOL && hi > s + TOL {
                    return 0.0;
                }
                if lo > s + TOL {
                    run = run.min(lo - s);
                }
            }
            run
        } else {
            let mut run = s;
            for &(lo, hi) in spans {
                if hi >= s - TOL && lo < s - TOL {
                    return 0.0;
                }
                if hi < s - TOL {
                    run = run.min(s - hi);
                }
            }
            run
        }
    }

    pub fn edge_fully_visited(&self, g: &RoadGraph, edge: usize) -> bool {
        matches!(self.intervals[edge].as_slice(), [(lo, hi)] if *lo == 0.0 && *hi == g.edge_length(edge))
    }

    pub fn visited_length(&self, g: &RoadGraph) -> f64 {
        (0..g.edge_count())
            .map(|e| {
                if self.edge_fully_visited(g, e) {
                    g.edge_length(e)
                } else {
                    self.intervals[e].iter().map(|(a, b)| b - a).sum()
                }
            })
            .sum()
    }

    /// Visited share of the total edge length; 1.0 for an empty graph.
    pub fn visited_fraction(&self, g: &RoadGraph) -> f64 {
        let total = g.total_length();
        if total == 0.0 {
            1.0
        } else {
            self.visited_length(g) / total
        }
    }

    pub fn is_complete(&self, g: &RoadGraph) -> bool {
        (0..g.edge_count()).all(|e| self.edge_fully_visited(g, e))
    }

    /// Midpoint of the first unvisited gap, scanning edges in index order.
    pub fn first_unvisited(&self, g: &RoadGraph) -> Option<Point2> {
        for e in 0..g.edge_count() {
            if self.edge_fully_visited(g, e) {
                continue;
            }
            let len = g.edge_length(e);
            let mut cursor = 0.0;
            for &(lo, hi) in &self.intervals[e] {
                if lo > cursor + TOL {
                    break;
                }
                cursor = cursor.max(hi);
            }
            let gap_end = self.intervals[e]
                .iter()
                .map(|&(lo, _)| lo)
                .find(|&lo| lo > cursor + TOL)
                .unwrap_or(len);
            let s = (cursor + gap_end) / 2.0;
            return Some(g.location(e, s / len).point);
        }
        None
    }
}

#[derive(Debug, Clone, Copy)]
enum Start {
    Vertex(usize),
    Edge { edge: usize, s: f64 },
}

/// A walked stretch of one edge, in arc length from the edge's first endpoint.
#[derive(Debug, Clone, Copy)]
struct Piece {
    edge: usize,
    from: f64,
    to: f64,
}

impl Piece {
    fn len(&self) -> f64 {
        (self.to - self.from).abs()
    }
}

fn point_at(g: &RoadGraph, edge: usize, s: f64) -> Point2 {
    let [a, b] = g.edges()[edge];
    let len = g.edge_length(edge);
    if s <= 0.0 {
        g.vertices()[a]
    } else if s >= len {
        g.vertices()[b]
    } else {
        g.vertices()[a].lerp(g.vertices()[b], s / len)
    }
}

/// Intersection or road end within `radius` along the road from `loc`.
fn key_vertex_near(g: &RoadGraph, loc: &GraphLocation, radius: f64) -> Option<usize> {
    let [a, b] = g.edges()[loc.edge];
    let len = g.edge_length(loc.edge);
    let s = loc.t * len;
    let mut best: Option<(f64, usize)> = None;
    for (v0, d0) in [(a, s), (b, len - s)] {
        let (mut v, mut d, mut via) = (v0, d0, loc.edge);
        while d <= radius {
            if g.degree(v) != 2 {
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, v));
                }
                break;
            }
            let &(n, e) = g
                .incident(v)
                .iter()
                .find(|&&(_, e)| e != via)
                .expect("degree-2 vertex has a second edge");
            d += g.edge_length(e);
            v = n;
            via = e;
        }
    }
    best.map(|(_, v)| v)
}

fn start_of(g: &RoadGraph, loc: &GraphLocation) -> Start {
    if let Some(k) = key_vertex_near(g, loc, KEY_VERTEX_SNAP) {
        return Start::Vertex(k);
    }
    let [a, b] = g.edges()[loc.edge];
    let len = g.edge_length(loc.edge);
    let s = loc.t * len;
    if s <= TOL {
        Start::Vertex(a)
    } else if len - s <= TOL {
        Start::Vertex(b)
    } else {
        Start::Edge { edge: loc.edge, s }
    }
}

/// Follows one direction. Returns `None` when that direction is visited.
fn walk(
    g: &RoadGraph,
    visited: &VisitedState,
    (mut edge, mut s, mut dir): (usize, f64, f64),
    step: f64,
) -> Option<Vec<Piece>> {
    let lookahead = 1.5 * step;
    let mut pieces = Vec::new();
    let mut travelled = 0.0;
    loop {
        let len = g.edge_length(edge);
        let free = visited.free_run(edge, s, dir, len);
        if free <= TOL {
            if pieces.is_empty() {
                return None;
            }
            return Some(pieces);
        }
        let to_end = if dir > 0.0 { len - s } else { s };
        let boundary = free < to_end - TOL;
        let run = if boundary { free } else { to_end };
        if travelled + run > lookahead + TOL {
            pieces.push(Piece {
                edge,
                from: s,
                to: s + dir * run,
            });
            truncate(&mut pieces, step);
            return Some(pieces);
        }
        let to = if boundary {
            s + dir * run
        } else if dir > 0.0 {
            len
        } else {
            0.0
        };
        pieces.push(Piece { edge, from: s, to });
        travelled += run;
        if boundary {
            return Some(pieces);
        }
        let [a, b] = g.edges()[edge];
        let v = if dir > 0.0 { b } else { a };
        if g.degree(v) != 2 {
            return Some(pieces);
        }
        let &(_, next) = g
            .incident(v)
            .iter()
            .find(|&&(_, e)| e != edge)
            .expect("degree-2 vertex has a second edge");
        edge = next;
        if g.edges()[next][0] == v {
            s = 0.0;
            dir = 1.0;
        } else {
            s = g.edge_length(next);
            dir = -1.0;
        }
    }
}

fn truncate(pieces: &mut Vec<Piece>, length: f64) {
    let mut acc = 0.0;
    for i in 0..pieces.len() {
        let l = pieces[i].len();
        if acc + l >= length {
            let p = &mut pieces[i];
            let dir = (p.to - p.from).signum();
            p.to = p.from + dir * (length - acc);
            pieces.truncate(i + 1);
            return;
        }
        acc += l;
    }
}

fn end_point(g: &RoadGraph, pieces: &[Piece]) -> Point2 {
    let last = pieces.last().expect("walks are non-empty");
    point_at(g, last.edge, last.to)
}

/// Next ground-truth vertices from `v_t`, one per unvisited direction, each
/// `step` pixels along the road or at the nearer stop. Marks the walked road
/// as visited. `g` should already be densified at a spacing of at most
/// `step`.
pub fn next_vertices_gt(
    g: &RoadGraph,
    visited: &mut VisitedState,
    v_t: Point2,
    step: f64,
) -> Vec<Point2> {
    let Ok(loc) = g.project_point(v_t) else {
        return Vec::new();
    };
    let (origin, directions): (Point2, Vec<(usize, f64, f64)>) = match start_of(g, &loc) {
        Start::Vertex(v) => (
            g.vertices()[v],
            g.incident(v)
                .iter()
                .map(|&(_, e)| {
                    if g.edges()[e][0] == v {
                        (e, 0.0, 1.0)
                    } else {
                        (e, g.edge_length(e), -1.0)
                    }
                })
                .collect(),
        ),
        Start::Edge { edge, s } => (loc.point, vec![(edge, s, 1.0), (edge, s, -1.0)]),
    };

    let mut targets: Vec<Point2> = Vec::new();
    for d in directions {
        let Some(mut pieces) = walk(g, visited, d, step) else {
            continue;
        };
        let mut end = end_point(g, &pieces);
        // A short loop can bring the walk back onto its own start or onto a
        // stop already emitted this step; stop halfway instead so the loop
        // still gets an interior vertex.
        let collides = |p: Point2| p.dist(origin) <= TOL || targets.iter().any(|t| t.dist(p) <= TOL);
        if collides(end) {
            let total: f64 = pieces.iter().map(Piece::len).sum();
            truncate(&mut pieces, total / 2.0);
            end = end_point(g, &pieces);
        }
        for p in &pieces {
            visited.mark(g, p.edge, p.from, p.to);
        }
        targets.push(end);
    }
    targets
}
