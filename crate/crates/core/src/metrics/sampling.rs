//! Point sampling along maximal chains. A chain runs between vertices of
//! degree other than 2 (or around a pure cycle), so the samples depend only
//! on the drawn geometry: reordering vertices or densifying edges leaves
//! them unchanged up to rounding.

use std::cmp::Ordering;

use crate::geometry::Point2;
use crate::graph::{GraphLocation, RoadGraph};
use crate::predict::mix;

#[derive(Debug, Clone)]
pub(crate) struct Chain {
    /// Edges in walking order with the direction they are walked in.
    pieces: Vec<(usize, bool)>,
    points: Vec<Point2>,
    cumulative: Vec<f64>,
    cyclic: bool,
}

impl Chain {
    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// Stable per-chain hash from its canonical end points.
    fn key(&self) -> u64 {
        let q = |v: f64| (v * 1e3).round() as i64 as u64;
        let a = self.points[0];
        let b = self.points[self.points.len() - 1];
        let second = if self.cyclic { self.points[1] } else { b };
        mix(&[q(a.x), q(a.y), q(b.x), q(b.y), q(second.x), q(second.y)])
    }

    fn locate(&self, g: &RoadGraph, s: f64) -> GraphLocation {
        let k = match self.cumulative.binary_search_by(|c| c.partial_cmp(&s).unwrap_or(Ordering::Less)) {
            Ok(i) => i.min(self.pieces.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.pieces.len() - 1),
        };
        let (edge, forward) = self.pieces[k];
        let len = self.cumulative[k + 1] - self.cumulative[k];
        let frac = if len > 0.0 {
            ((s - self.cumulative[k]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        g.location(edge, if forward { frac } else { 1.0 - frac })
    }
}

fn lexicographic(a: &[Point2], b: &[Point2]) -> Ordering {
    for (p, q) in a.iter().zip(b) {
        match p.row_major_cmp(q) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn build_chain(g: &RoadGraph, verts: Vec<usize>, pieces: Vec<(usize, bool)>, cyclic: bool) -> Chain {
    let mut verts = verts;
    let mut pieces = pieces;
    let points_of = |vs: &[usize]| vs.iter().map(|&v| g.vertices()[v]).collect::<Vec<_>>();
    if cyclic {
        // Start at the row-major smallest vertex.
        let pts = points_of(&verts[..verts.len() - 1]);
        let start = (0..pts.len())
            .min_by(|&i, &j| pts[i].row_major_cmp(&pts[j]))
            .unwrap_or(0);
        let n = pieces.len();
        verts = (0..=n).map(|i| verts[(start + i) % n]).collect();
        pieces = (0..n).map(|i| pieces[(start + i) % n]).collect();
    }
    let fwd = points_of(&verts);
    let rev: Vec<Point2> = fwd.iter().rev().copied().collect();
    let (points, pieces) = if lexicographic(&rev, &fwd) == Ordering::Less {
        let pieces = pieces.iter().rev().map(|&(e, f)| (e, !f)).collect();
        (rev, pieces)
    } else {
        (fwd, pieces)
    };
    let mut cumulative = Vec::with_capacity(pieces.len() + 1);
    cumulative.push(0.0);
    for &(e, _) in &pieces {
        cumulative.push(cumulative.last().unwrap() + g.edge_length(e));
    }
    Chain {
        pieces,
        points,
        cumulative,
        cyclic,
    }
}

pub(crate) fn chains(g: &RoadGraph) -> Vec<Chain> {
    let mut used = vec![false; g.edge_count()];
    let mut out = Vec::new();
    let other = |e: usize, v: usize| {
        let [a, b] = g.edges()[e];
        if a == v {
            b
        } else {
            a
        }
    };
    let walk = |start: usize, first: usize, used: &mut [bool]| {
        let mut verts = vec![start];
        let mut pieces = Vec::new();
        let (mut cur, mut e) = (start, first);
        loop {
            used[e] = true;
            pieces.push((e, g.edges()[e][0] == cur));
            let next = other(e, cur);
            verts.push(next);
            if g.degree(next) != 2 || next == start {
                break;
            }
            match g.incident(next).iter().find(|&&(_, f)| f != e && !used[f]) {
                Some(&(_, f)) => {
                    cur = next;
                    e = f;
                }
                None => break,
            }
        }
        (verts, pieces)
    };
    for v in 0..g.vertex_count() {
        if g.degree(v) == 2 {
            continue;
        }
        for &(_, e) in g.incident(v) {
            if !used[e] {
                let (verts, pieces) = walk(v, e, &mut used);
                out.push(build_chain(g, verts, pieces, false));
            }
        }
    }
    for e in 0..g.edge_count() {
        if !used[e] {
            let start = g.edges()[e][0];
            let (verts, pieces) = walk(start, e, &mut used);
            let cyclic = verts.first() == verts.last();
            out.push(build_chain(g, verts, pieces, cyclic));
        }
    }
    out
}

fn sort_locations(mut locs: Vec<GraphLocation>) -> Vec<GraphLocation> {
    locs.sort_by(|a, b| a.point.row_major_cmp(&b.point));
    locs
}

/// Every key vertex plus points every `spacing` along each chain.
pub(crate) fn chain_samples(g: &RoadGraph, spacing: f64) -> Vec<GraphLocation> {
    let mut locs: Vec<GraphLocation> = g
        .key_vertices()
        .filter_map(|v| g.location_at_vertex(v))
        .collect();
    for c in chains(g) {
        let len = c.length();
        let first = if c.cyclic { 0 } else { 1 };
        let mut k = first;
        loop {
            let s = k as f64 * spacing;
            if s >= len - 1e-9 {
                break;
            }
            locs.push(c.locate(g, s));
            k += 1;
        }
    }
    sort_locations(locs)
}

/// Points every `spacing` along each chain, starting at a per-chain offset
/// in `[0, spacing)` drawn from `seed` and the chain's position.
pub(crate) fn jittered_samples(g: &RoadGraph, spacing: f64, seed: u64) -> Vec<GraphLocation> {
    let mut locs = Vec::new();
    for c in chains(g) {
        let len = c.length();
        let h = mix(&[seed, c.key()]);
        let offset = (h >> 11) as f64 / (1u64 << 53) as f64 * spacing;
        let mut s = offset;
        while s < len {
            locs.push(c.locate(g, s));
            s += spacing;
        }
    }
    sort_locations(locs)
}
