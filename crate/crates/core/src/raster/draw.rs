//! Exact-distance stroking: a pixel is set iff its center lies within the
//! stroke radius of a segment (or disc center).

use crate::geometry::{point_segment_dist_sq, Point2};
use crate::graph::RoadGraph;

use super::{GridMap, RoiWindow};

/// Which graph vertices count as key points in the intersection label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyPoints {
    /// Degree >= 3 only.
    Intersections,
    /// Degree >= 3 and degree 1.
    #[default]
    IntersectionsAndEnds,
}

/// Strokes the segment `a`-`b` (tile coordinates) into `map`, whose pixel
/// `(0, 0)` sits at tile position `origin`.
fn stroke_segment(map: &mut GridMap, origin: (i64, i64), a: Point2, b: Point2, radius: f64) {
    let r_sq = radius * radius;
    let (ox, oy) = origin;
    let x_lo = ((a.x.min(b.x) - radius).floor() as i64 - ox).max(0);
    let x_hi = ((a.x.max(b.x) + radius).ceil() as i64 - ox).min(map.width() as i64 - 1);
    let y_lo = ((a.y.min(b.y) - radius).floor() as i64 - oy).max(0);
    let y_hi = ((a.y.max(b.y) + radius).ceil() as i64 - oy).min(map.height() as i64 - 1);
    for j in y_lo..=y_hi {
        for i in x_lo..=x_hi {
            let center = Point2::new((ox + i) as f64, (oy + j) as f64);
            if point_segment_dist_sq(center, a, b) <= r_sq {
                map.set(i as u32, j as u32, 255);
            }
        }
    }
}

fn stamp_disc(map: &mut GridMap, origin: (i64, i64), c: Point2, radius: f64) {
    stroke_segment(map, origin, c, c, radius);
}

/// Strokes a polyline into `map` (tile frame offset by `origin`).
pub fn stroke_polyline(map: &mut GridMap, origin: (i64, i64), points: &[Point2], thickness: f64) {
    let radius = thickness / 2.0;
    match points {
        [] => {}
        [p] => stamp_disc(map, origin, *p, radius),
        _ => {
            for w in points.windows(2) {
                stroke_segment(map, origin, w[0], w[1], radius);
            }
        }
    }
}

/// Binary raster of every edge stroked at `thickness`.
pub fn rasterize_graph(g: &RoadGraph, width: u32, height: u32, thickness: f64) -> GridMap {
    assert!(thickness >= 1.0, "thickness must be at least 1 px");
    let mut map = GridMap::mask(width, height);
    for e in 0..g.edge_count() {
        let (a, b) = g.edge_endpoints(e);
        stroke_segment(&mut map, (0, 0), a, b, thickness / 2.0);
    }
    map
}

/// Filled discs at intersections and road ends.
pub fn intersection_label(g: &RoadGraph, width: u32, height: u32, radius: f64) -> GridMap {
    intersection_label_with(g, width, height, radius, KeyPoints::IntersectionsAndEnds)
}

pub fn intersection_label_with(
    g: &RoadGraph,
    width: u32,
    height: u32,
    radius: f64,
    keys: KeyPoints,
) -> GridMap {
    assert!(radius >= 1.0, "disc radius must be at least 1 px");
    let mut map = GridMap::mask(width, height);
    for v in 0..g.vertex_count() {
        let d = g.degree(v);
        let key = d >= 3 || (d == 1 && keys == KeyPoints::IntersectionsAndEnds);
        if key {
            stamp_disc(&mut map, (0, 0), g.vertices()[v], radius);
        }
    }
    map
}

/// Instance label for one next-step vertex: the road between the
/// projections of the agent and the vertex, in the window's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub mask: GridMap,
    /// False when the two projections lie in different components; the mask
    /// is then empty.
    pub reachable: bool,
    /// The ground-truth path that was drawn, in tile coordinates.
    pub path: Vec<Point2>,
}

pub fn instance_mask_label(
    g: &RoadGraph,
    v_t: Point2,
    v_next: Point2,
    win: &RoiWindow,
    thickness: f64,
) -> InstanceMask {
    let mut mask = GridMap::mask(win.size, win.size);
    let path = match (g.project_point(v_t), g.project_point(v_next)) {
        (Ok(a), Ok(b)) => g.shortest_path(&a, &b),
        _ => None,
    };
    match path {
        Some(path) => {
            stroke_polyline(&mut mask, win.origin(), &path, thickness);
            InstanceMask {
                mask,
                reachable: true,
                path,
            }
        }
        None => InstanceMask {
            mask,
            reachable: false,
            path: Vec::new(),
        },
    }
}
