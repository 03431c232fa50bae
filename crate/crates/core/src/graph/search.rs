//! Shortest paths along the graph between arbitrary on-edge locations.
//!
//! Locations split their edge into two virtual half-edges; the search seeds
//! both endpoints of the source edge with their along-edge offsets and
//! finishes on the endpoints of the target edge.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Point2;

use super::{GraphLocation, RoadGraph};

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-vertex shortest distances from a source location.
#[derive(Debug, Clone)]
pub struct VertexDistances {
    pub source: GraphLocation,
    pub dist: Vec<f64>,
    pred: Vec<usize>,
}

impl VertexDistances {
    pub fn get(&self, v: usize) -> Option<f64> {
        let d = self.dist[v];
        d.is_finite().then_some(d)
    }
}

impl RoadGraph {
    fn source_entries(&self, loc: &GraphLocation) -> [(usize, f64); 2] {
        let [a, b] = self.edges[loc.edge];
        let len = self.lengths[loc.edge];
        [(a, loc.t * len), (b, (1.0 - loc.t) * len)]
    }

    /// Dijkstra from `source`, settling vertices up to `limit` distance.
    pub(crate) fn dijkstra(&self, source: &GraphLocation, limit: f64) -> VertexDistances {
        self.dijkstra_until(source, limit, |_, _| false)
    }

    fn dijkstra_until(
        &self,
        source: &GraphLocation,
        limit: f64,
        mut stop: impl FnMut(usize, f64) -> bool,
    ) -> VertexDistances {
        let n = self.vertices.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        for (v, d) in self.source_entries(source) {
            if d < dist[v] {
                dist[v] = d;
                heap.push(Entry { dist: d, vertex: v });
            }
        }
        while let Some(Entry { dist: d, vertex: v }) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            if d > limit {
                dist[v] = f64::INFINITY;
                break;
            }
            if stop(v, d) {
                break;
            }
            for &(n, e) in &self.adjacency[v] {
                let nd = d + self.lengths[e];
                if nd < dist[n] {
                    dist[n] = nd;
                    pred[n] = v;
                    heap.push(Entry { dist: nd, vertex: n });
                }
            }
        }
        // Tentative labels beyond the limit were never settled.
        for d in dist.iter_mut() {
            if *d > limit {
                *d = f64::INFINITY;
            }
        }
        VertexDistances {
            source: *source,
            dist,
            pred,
        }
    }

    /// Shortest-path distances from `source` to every vertex.
    pub fn distances_from(&self, source: &GraphLocation) -> VertexDistances {
        self.dijkstra(source, f64::INFINITY)
    }

    /// Along-graph shortest distance between two locations, `None` when they
    /// lie in different connected components.
    pub fn graph_distance(&self, a: &GraphLocation, b: &GraphLocation) -> Option<f64> {
        self.route(a, b).map(|(d, _)| d)
    }

    /// Shortest path between two locations as a polyline from `a.point` to
    /// `b.point`.
    pub fn shortest_path(&self, a: &GraphLocation, b: &GraphLocation) -> Option<Vec<Point2>> {
        self.route(a, b).map(|(_, path)| path)
    }

    fn route(&self, a: &GraphLocation, b: &GraphLocation) -> Option<(f64, Vec<Point2>)> {
        let direct = if a.edge == b.edge {
            (a.t - b.t).abs() * self.lengths[a.edge]
        } else {
            f64::INFINITY
        };
        let targets = self.source_entries(b);
        let mut best = direct;
        let mut best_via: Option<usize> = None;
        let mut settled = [false, false];
        let result = self.dijkstra_until(a, f64::INFINITY, |v, d| {
            if d >= best {
                return true;
            }
            for (i, &(tv, off)) in targets.iter().enumerate() {
                if v == tv && !settled[i] {
                    settled[i] = true;
                    if d + off < best {
                        best = d + off;
                        best_via = Some(v);
                    }
                }
            }
            settled[0] && settled[1]
        });
        if !best.is_finite() {
            return None;
        }
        let mut path = vec![a.point];
        if let Some(end) = best_via {
            let mut chain = vec![end];
            let mut v = end;
            while result.pred[v] != usize::MAX {
                v = result.pred[v];
                chain.push(v);
            }
            chain.reverse();
            path.extend(chain.iter().map(|&v| self.vertices[v]));
        }
        path.push(b.point);
        Some((best, path))
    }
}
