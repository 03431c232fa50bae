use crate::geometry::{point_segment_dist_sq, segment_param, Point2};

use super::{GraphError, GraphLocation, RoadGraph};

/// Relative slack when deciding how many pieces an edge needs, so an edge
/// whose length is an exact multiple of the spacing is not over-split by
/// rounding noise.
const SPLIT_SLACK: f64 = 1e-9;

impl RoadGraph {
    /// Subdivides every edge into `ceil(len / spacing)` equal pieces.
    ///
    /// Original vertices keep their indices; inserted vertices are appended
    /// edge by edge.
    pub fn densify(&self, spacing: f64) -> Result<RoadGraph, GraphError> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(GraphError::InvalidArgument(format!(
                "densify spacing must be positive, got {spacing}"
            )));
        }
        let mut vertices = self.vertices.clone();
        let mut edges = Vec::with_capacity(self.edges.len());
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            let pieces = ((self.lengths[e] / spacing) - SPLIT_SLACK).ceil().max(1.0) as usize;
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let mut prev = a;
            for k in 1..pieces {
                let id = vertices.len();
                vertices.push(pa.lerp(pb, k as f64 / pieces as f64));
                edges.push([prev, id]);
                prev = id;
            }
            edges.push([prev, b]);
        }
        RoadGraph::new_unmerged(vertices, edges)
    }

    /// Nearest point on the graph to `p`. Ties go to the lowest edge index.
    pub fn project_point(&self, p: Point2) -> Result<GraphLocation, GraphError> {
        let (_, edge) = self
            .segment_index()
            .nearest(self, p)
            .ok_or(GraphError::EmptyGraph)?;
        let (a, b) = self.edge_endpoints(edge);
        let t = segment_param(p, a, b);
        Ok(GraphLocation {
            edge,
            t,
            point: a.lerp(b, t),
        })
    }

    /// Euclidean distance from `p` to the nearest point of the graph.
    pub fn distance_to(&self, p: Point2) -> Option<f64> {
        self.segment_index()
            .nearest(self, p)
            .map(|(d_sq, _)| d_sq.sqrt())
    }

    /// The part of the graph within along-graph distance `radius` of `seed`.
    ///
    /// Edges are clipped exactly where the distance reaches `radius`; whole
    /// edges keep their original endpoints so connectivity is preserved.
    pub fn subgraph_within(
        &self,
        seed: &GraphLocation,
        radius: f64,
    ) -> Result<RoadGraph, GraphError> {
        if !(radius > 0.0) {
            return Err(GraphError::InvalidArgument(format!(
                "subgraph radius must be positive, got {radius}"
            )));
        }
        let reach = self.dijkstra(seed, radius);
        let mut vertices = Vec::new();
        let mut mapped = vec![usize::MAX; self.vertices.len()];
        let mut edges = Vec::new();
        let mut vertex_id = |v: usize, vertices: &mut Vec<Point2>| {
            if mapped[v] == usize::MAX {
                mapped[v] = vertices.len();
                vertices.push(self.vertices[v]);
            }
            mapped[v]
        };
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            let len = self.lengths[e];
            let mut spans: Vec<(f64, f64)> = Vec::with_capacity(3);
            if let Some(da) = reach.get(a) {
                spans.push((0.0, len.min(radius - da)));
            }
            if let Some(db) = reach.get(b) {
                spans.push(((len - (radius - db)).max(0.0), len));
            }
            if e == seed.edge {
                let s0 = seed.t * len;
                spans.push(((s0 - radius).max(0.0), (s0 + radius).min(len)));
            }
            for (lo, hi) in merge_spans(spans) {
                if hi - lo <= 1e-12 {
                    continue;
                }
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                let start = if lo == 0.0 {
                    vertex_id(a, &mut vertices)
                } else {
                    vertices.push(pa.lerp(pb, lo / len));
                    vertices.len() - 1
                };
                let end = if hi == len {
                    vertex_id(b, &mut vertices)
                } else {
                    vertices.push(pa.lerp(pb, hi / len));
                    vertices.len() - 1
                };
                edges.push([start, end]);
            }
        }
        RoadGraph::new_unmerged(vertices, edges)
    }

    /// Brute-force nearest-edge scan; reference for the bucketed index.
    pub fn project_point_exhaustive(&self, p: Point2) -> Result<GraphLocation, GraphError> {
        let mut best: Option<(f64, usize)> = None;
        for e in 0..self.edges.len() {
            let (a, b) = self.edge_endpoints(e);
            let d = point_segment_dist_sq(p, a, b);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, e));
            }
        }
        let (_, edge) = best.ok_or(GraphError::EmptyGraph)?;
        let (a, b) = self.edge_endpoints(edge);
        let t = segment_param(p, a, b);
        Ok(GraphLocation {
            edge,
            t,
            point: a.lerp(b, t),
        })
    }
}

fn merge_spans(mut spans: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    spans.retain(|(lo, hi)| hi >= lo);
    spans.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (lo, hi) in spans {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn line(len: f64) -> RoadGraph {
        RoadGraph::new(vec![p(0.0, 0.0), p(len, 0.0)], vec![[0, 1]]).unwrap()
    }

    #[test]
    fn densify_splits_into_equal_parts() {
        let g = line(10.0).densify(4.0).unwrap();
        let mut xs: Vec<f64> = g.vertices().iter().map(|v| v.x).collect();
        xs.sort_by(f64::total_cmp);
        let expected = [0.0, 10.0 / 3.0, 20.0 / 3.0, 10.0];
        for (x, e) in xs.iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
        assert_eq!(g.edge_count(), 3);
        let total: f64 = (0..3).map(|e| g.edge_length(e)).sum();
        assert!((total - 10.0).abs() < 1e-12);
    }

    #[test]
    fn densify_noop_when_spacing_exceeds_edges() {
        let g = RoadGraph::new(
            vec![p(0.0, 0.0), p(3.0, 0.0), p(3.0, 4.0)],
            vec![[0, 1], [1, 2]],
        )
        .unwrap();
        assert_eq!(g.densify(4.0).unwrap(), g);
        assert_eq!(g.densify(100.0).unwrap(), g);
    }

    #[test]
    fn densify_conserves_triangle_length() {
        let g = RoadGraph::new(
            vec![p(0.0, 0.0), p(3.0, 0.0), p(3.0, 4.0)],
            vec![[0, 1], [1, 2], [2, 0]],
        )
        .unwrap();
        let d = g.densify(1.0).unwrap();
        assert!((d.total_length() - 12.0).abs() < 1e-9);
        assert!((0..d.edge_count()).all(|e| d.edge_length(e) <= 1.0 + 1e-9));
        assert_eq!(d.cycle_rank(), 1);
    }

    #[test]
    fn densify_rejects_bad_spacing() {
        assert!(line(1.0).densify(0.0).is_err());
        assert!(line(1.0).densify(-2.0).is_err());
        assert!(line(1.0).densify(f64::NAN).is_err());
    }

    #[test]
    fn projection_perpendicular_foot() {
        let loc = line(10.0).project_point(p(5.0, 3.0)).unwrap();
        assert_eq!(loc.t, 0.5);
        assert_eq!(loc.point, p(5.0, 0.0));
        let on = line(10.0).project_point(p(2.0, 0.0)).unwrap();
        assert_eq!(on.point, p(2.0, 0.0));
    }

    #[test]
    fn projection_on_empty_graph_fails() {
        assert!(matches!(
            RoadGraph::empty().project_point(p(0.0, 0.0)),
            Err(GraphError::EmptyGraph)
        ));
    }

    #[test]
    fn projection_tie_breaks_on_lowest_edge() {
        // p equidistant from two parallel edges.
        let g = RoadGraph::new(
            vec![p(0.0, 0.0), p(10.0, 0.0), p(0.0, 2.0), p(10.0, 2.0)],
            vec![[2, 3], [0, 1]],
        )
        .unwrap();
        assert_eq!(g.project_point(p(4.0, 1.0)).unwrap().edge, 0);
    }

    #[test]
    fn subgraph_on_line_is_centered_segment() {
        let g = line(100.0);
        let sub = g.subgraph_within(&g.location(0, 0.5), 10.0).unwrap();
        assert!((sub.total_length() - 20.0).abs() < 1e-12);
        let xs: Vec<f64> = sub.vertices().iter().map(|v| v.x).collect();
        assert_eq!(xs, vec![40.0, 60.0]);
    }

    #[test]
    fn subgraph_saturates_to_component() {
        let g = RoadGraph::new(
            vec![p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(50.0, 50.0), p(60.0, 50.0)],
            vec![[0, 1], [1, 2], [3, 4]],
        )
        .unwrap();
        let sub = g.subgraph_within(&g.location(0, 0.2), 1000.0).unwrap();
        assert!((sub.total_length() - 20.0).abs() < 1e-12);
        assert_eq!(sub.edge_count(), 2);
        assert_eq!(sub.vertex_count(), 3);
    }

    #[test]
    fn subgraph_rejects_non_positive_radius() {
        let g = line(5.0);
        assert!(g.subgraph_within(&g.location(0, 0.0), 0.0).is_err());
    }
}
