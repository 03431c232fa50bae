use std::collections::HashMap;

use crate::geometry::Point2;
use crate::graph::RoadGraph;

/// Mutable graph under construction by the engine, with a spatial hash for
/// vertex snapping and per-edge provenance.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    vertices: Vec<Point2>,
    adjacency: Vec<Vec<usize>>,
    edges: Vec<[usize; 2]>,
    edge_step: Vec<usize>,
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl GraphBuilder {
    /// `cell` sizes the spatial hash; the typical snap radius is a good choice.
    pub fn new(cell: f64) -> Self {
        Self {
            vertices: Vec::new(),
            adjacency: Vec::new(),
            edges: Vec::new(),
            edge_step: Vec::new(),
            cell: cell.max(1.0),
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: Point2) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, v: usize) -> Point2 {
        self.vertices[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    /// Step that created each edge, in edge order.
    pub fn edge_provenance(&self) -> &[usize] {
        &self.edge_step
    }

    /// Nearest vertex within `radius` of `p`; ties go to the lowest id.
    pub fn nearest_within(&self, p: Point2, radius: f64) -> Option<usize> {
        let reach = (radius / self.cell).ceil() as i64;
        let (cx, cy) = self.key(p);
        let r_sq = radius * radius;
        let mut best: Option<(f64, usize)> = None;
        for gy in cy - reach..=cy + reach {
            for gx in cx - reach..=cx + reach {
                let Some(ids) = self.cells.get(&(gx, gy)) else {
                    continue;
                };
                for &v in ids {
                    let d = self.vertices[v].dist_sq(p);
                    if d <= r_sq && best.is_none_or(|(bd, bv)| d < bd || (d == bd && v < bv)) {
                        best = Some((d, v));
                    }
                }
            }
        }
        best.map(|(_, v)| v)
    }

    pub fn insert(&mut self, p: Point2) -> usize {
        let id = self.vertices.len();
        self.vertices.push(p);
        self.adjacency.push(Vec::new());
        let key = self.key(p);
        self.cells.entry(key).or_default().push(id);
        id
    }

    /// Existing vertex within `radius` of `p`, or a new one at `p`. The flag
    /// reports whether a vertex was inserted.
    pub fn snap_or_insert(&mut self, p: Point2, radius: f64) -> (usize, bool) {
        match self.nearest_within(p, radius) {
            Some(v) => (v, false),
            None => (self.insert(p), true),
        }
    }

    /// Adds an undirected edge; self-loops and duplicates are refused.
    pub fn add_edge(&mut self, a: usize, b: usize, step: usize) -> bool {
        if a == b || self.has_edge(a, b) {
            return false;
        }
        self.adjacency[a].push(b);
        self.adjacency[b].push(a);
        self.edges.push([a.min(b), a.max(b)]);
        self.edge_step.push(step);
        true
    }

    pub fn to_graph(&self) -> RoadGraph {
        RoadGraph::new_unmerged(self.vertices.clone(), self.edges.clone())
            .expect("builder maintains valid edge indices")
    }
}
