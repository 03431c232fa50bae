//! Undirected road-network graph embedded in tile pixel space.
//!
//! A [`RoadGraph`] is immutable once built. Vertices closer than the merge
//! epsilon are fused on construction, self-loops and duplicate edges are
//! dropped, and edge pairs are stored normalized (`i < j`).

mod index;
pub mod io;
mod ops;
mod search;

use std::collections::HashMap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::geometry::Point2;

pub use io::{load_graph, save_graph, GraphFile, GRAPH_FORMAT};
pub use search::VertexDistances;

use index::SegmentIndex;

/// Default distance under which two input vertices are considered identical.
pub const DEFAULT_MERGE_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge {edge} ({a}, {b}) references a vertex outside 0..{vertex_count}")]
    EdgeOutOfRange {
        edge: usize,
        a: usize,
        b: usize,
        vertex_count: usize,
    },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("operation requires a graph with at least one edge")]
    EmptyGraph,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid graph file, field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A point on the graph: edge index plus interpolation parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphLocation {
    pub edge: usize,
    pub t: f64,
    pub point: Point2,
}

#[derive(Debug, Default)]
pub struct RoadGraph {
    vertices: Vec<Point2>,
    edges: Vec<[usize; 2]>,
    lengths: Vec<f64>,
    adjacency: Vec<Vec<(usize, usize)>>,
    index: OnceLock<SegmentIndex>,
}

impl Clone for RoadGraph {
    fn clone(&self) -> Self {
        Self::assemble(self.vertices.clone(), self.edges.clone())
    }
}

impl PartialEq for RoadGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.edges == other.edges
    }
}

impl RoadGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a graph, merging vertices within [`DEFAULT_MERGE_EPSILON`].
    pub fn new(vertices: Vec<Point2>, edges: Vec<[usize; 2]>) -> Result<Self, GraphError> {
        Self::with_merge_epsilon(vertices, edges, DEFAULT_MERGE_EPSILON)
    }

    pub fn with_merge_epsilon(
        vertices: Vec<Point2>,
        edges: Vec<[usize; 2]>,
        epsilon: f64,
    ) -> Result<Self, GraphError> {
        validate(&vertices, &edges)?;
        let (vertices, remap) = merge_vertices(vertices, epsilon);
        let edges = edges.into_iter().map(|[a, b]| [remap[a], remap[b]]).collect();
        Ok(Self::assemble(vertices, edges))
    }

    /// Builds a graph without merging nearby vertices. Used where vertex ids
    /// must be preserved (densification, clipping, the engine's builder);
    /// distinct edges that cross may legitimately produce coincident points.
    pub(crate) fn new_unmerged(
        vertices: Vec<Point2>,
        edges: Vec<[usize; 2]>,
    ) -> Result<Self, GraphError> {
        validate(&vertices, &edges)?;
        Ok(Self::assemble(vertices, edges))
    }

    fn assemble(vertices: Vec<Point2>, raw_edges: Vec<[usize; 2]>) -> Self {
        let mut seen = std::collections::HashSet::with_capacity(raw_edges.len());
        let mut edges = Vec::with_capacity(raw_edges.len());
        for [a, b] in raw_edges {
            if a == b {
                continue;
            }
            let pair = [a.min(b), a.max(b)];
            if seen.insert(pair) {
                edges.push(pair);
            }
        }
        let mut adjacency = vec![Vec::new(); vertices.len()];
        let mut lengths = Vec::with_capacity(edges.len());
        for (e, &[a, b]) in edges.iter().enumerate() {
            adjacency[a].push((b, e));
            adjacency[b].push((a, e));
            lengths.push(vertices[a].dist(vertices[b]));
        }
        Self {
            vertices,
            edges,
            lengths,
            adjacency,
            index: OnceLock::new(),
        }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        self.lengths[e]
    }

    pub fn edge_endpoints(&self, e: usize) -> (Point2, Point2) {
        let [a, b] = self.edges[e];
        (self.vertices[a], self.vertices[b])
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// `(neighbor, edge)` pairs incident to `v`.
    pub fn incident(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Vertices whose degree is neither 0 nor 2: intersections and road ends.
    pub fn key_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.vertices.len()).filter(|&v| {
            let d = self.degree(v);
            d != 0 && d != 2
        })
    }

    /// Location at parameter `t` along edge `e`.
    pub fn location(&self, edge: usize, t: f64) -> GraphLocation {
        let (a, b) = self.edge_endpoints(edge);
        GraphLocation {
            edge,
            t,
            point: a.lerp(b, t),
        }
    }

    /// Location of vertex `v` on its lowest-index incident edge.
    pub fn location_at_vertex(&self, v: usize) -> Option<GraphLocation> {
        let &(_, e) = self.adjacency[v].iter().min_by_key(|(_, e)| *e)?;
        let t = if self.edges[e][0] == v { 0.0 } else { 1.0 };
        Some(GraphLocation {
            edge: e,
            t,
            point: self.vertices[v],
        })
    }

    /// Connected-component label for each vertex, numbered in vertex order.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.vertices.len()];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.vertices.len() {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(n, _) in &self.adjacency[v] {
                    if label[n] == usize::MAX {
                        label[n] = next;
                        stack.push(n);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Number of independent cycles (`|E| - |V| + components`), counted over
    /// vertices that touch at least one edge.
    pub fn cycle_rank(&self) -> usize {
        let labels = self.component_labels();
        let mut comps = std::collections::HashSet::new();
        let mut used = 0usize;
        for v in 0..self.vertices.len() {
            if self.degree(v) > 0 {
                used += 1;
                comps.insert(labels[v]);
            }
        }
        self.edges.len() + comps.len() - used
    }

    pub(crate) fn segment_index(&self) -> &SegmentIndex {
        self.index.get_or_init(|| SegmentIndex::build(self))
    }
}

fn validate(vertices: &[Point2], edges: &[[usize; 2]]) -> Result<(), GraphError> {
    if let Some(v) = vertices.iter().position(|p| !p.is_finite()) {
        return Err(GraphError::NonFiniteVertex(v));
    }
    for (e, &[a, b]) in edges.iter().enumerate() {
        if a >= vertices.len() || b >= vertices.len() {
            return Err(GraphError::EdgeOutOfRange {
                edge: e,
                a,
                b,
                vertex_count: vertices.len(),
            });
        }
    }
    Ok(())
}

/// Fuses vertices within `epsilon` of an earlier kept vertex using a spatial
/// hash. Returns the kept vertices (in first-occurrence order) and the
/// old-to-new index map.
fn merge_vertices(vertices: Vec<Point2>, epsilon: f64) -> (Vec<Point2>, Vec<usize>) {
    if epsilon <= 0.0 {
        let remap = (0..vertices.len()).collect();
        return (vertices, remap);
    }
    let cell = |p: Point2| ((p.x / epsilon).floor() as i64, (p.y / epsilon).floor() as i64);
    let eps_sq = epsilon * epsilon;
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut kept: Vec<Point2> = Vec::with_capacity(vertices.len());
    let mut remap = Vec::with_capacity(vertices.len());
    for p in vertices {
        let (cx, cy) = cell(p);
        let mut hit: Option<usize> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = grid.get(&(cx + dx, cy + dy)) {
                    for &id in ids {
                        if kept[id].dist_sq(p) <= eps_sq && hit.is_none_or(|h| id < h) {
                            hit = Some(id);
                        }
                    }
                }
            }
        }
        match hit {
            Some(id) => remap.push(id),
            None => {
                let id = kept.len();
                kept.push(p);
                grid.entry((cx, cy)).or_default().push(id);
                remap.push(id);
            }
        }
    }
    (kept, remap)
}
