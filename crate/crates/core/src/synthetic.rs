//! Synthetic road tiles: grids, rings with spokes, and random trees, plus a
//! plain RGB rendering to stand in for the aerial image.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_segment_dist_sq, Point2};
use crate::graph::{GraphError, GraphFile, RoadGraph};
use crate::raster::{rasterize_graph, GridMap};

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    #[default]
    Grid,
    Ring,
    Tree,
}

impl std::str::FromStr for SyntheticKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(Self::Grid),
            "ring" => Ok(Self::Ring),
            "tree" => Ok(Self::Tree),
            other => Err(format!("unknown synthetic kind {other:?} (grid, ring, tree)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// Largest vertex degree of a random tree (3..=6).
    pub max_degree: usize,
    /// Distance kept between roads and from the tile border.
    pub clearance: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::Grid,
            width: 512,
            height: 512,
            seed: 0,
            max_degree: 4,
            clearance: 20.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.width < 160 || self.height < 160 {
            return Err(SyntheticError::Spec(format!(
                "tile must be at least 160x160, got {}x{}",
                self.width, self.height
            )));
        }
        if !(3..=6).contains(&self.max_degree) {
            return Err(SyntheticError::Spec(format!(
                "max_degree must lie in 3..=6, got {}",
                self.max_degree
            )));
        }
        if !(self.clearance >= 10.0 && self.clearance.is_finite()) {
            return Err(SyntheticError::Spec(format!(
                "clearance must be at least 10, got {}",
                self.clearance
            )));
        }
        Ok(())
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<GraphFile, SyntheticError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (vertices, edges) = match spec.kind {
        SyntheticKind::Grid => grid(spec, &mut rng),
        SyntheticKind::Ring => ring(spec, &mut rng),
        SyntheticKind::Tree => tree(spec, &mut rng),
    };
    let vertices = vertices
        .into_iter()
        .map(|p| Point2::new((p.x * 4.0).round() / 4.0, (p.y * 4.0).round() / 4.0))
        .collect();
    let graph = RoadGraph::new(vertices, edges)?;
    Ok(GraphFile::new(spec.width, spec.height, graph))
}

fn spread(rng: &mut ChaCha8Rng, lo: f64, hi: f64, min_gap: f64, max_gap: f64) -> Vec<f64> {
    let mut out = vec![lo + rng.gen_range(0.0..min_gap / 2.0)];
    loop {
        let next = out.last().unwrap() + rng.gen_range(min_gap..max_gap);
        if next > hi {
            break;
        }
        out.push(next);
    }
    out
}

/// Street grid with irregular spacing and a few missing blocks.
fn grid(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> (Vec<Point2>, Vec<[usize; 2]>) {
    let m = spec.clearance;
    let xs = spread(rng, m, spec.width as f64 - m, 60.0, 140.0);
    let ys = spread(rng, m, spec.height as f64 - m, 60.0, 140.0);
    let (nx, ny) = (xs.len(), ys.len());
    let id = |i: usize, j: usize| j * nx + i;
    let mut vertices = Vec::with_capacity(nx * ny);
    for &y in &ys {
        for &x in &xs {
            vertices.push(Point2::new(x, y));
        }
    }
    let mut edges = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                edges.push([id(i, j), id(i + 1, j)]);
            }
            if j + 1 < ny {
                edges.push([id(i, j), id(i, j + 1)]);
            }
        }
    }
    // Drop about a tenth of the edges, never isolating a vertex.
    let mut degree = vec![0usize; vertices.len()];
    for &[a, b] in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut kept = Vec::with_capacity(edges.len());
    for [a, b] in edges {
        if rng.gen_bool(0.1) && degree[a] > 2 && degree[b] > 2 {
            degree[a] -= 1;
            degree[b] -= 1;
        } else {
            kept.push([a, b]);
        }
    }
    (vertices, kept)
}

/// A closed ring joined to a central hub by spokes, with some spokes also
/// running outwards to dead ends.
fn ring(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> (Vec<Point2>, Vec<[usize; 2]>) {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let c = Point2::new(w / 2.0, h / 2.0);
    let outer = w.min(h) / 2.0 - spec.clearance;
    let r = outer * rng.gen_range(0.45..0.65);
    let n = ((TAU * r / 25.0).ceil() as usize).max(12);
    let phase = rng.gen_range(0.0..TAU);
    let mut vertices = vec![c];
    for k in 0..n {
        let a = phase + TAU * k as f64 / n as f64;
        vertices.push(c + Point2::new(r * a.cos(), r * a.sin()));
    }
    let mut edges: Vec<[usize; 2]> = (0..n).map(|k| [1 + k, 1 + (k + 1) % n]).collect();
    let spokes = rng.gen_range(3..=spec.max_degree.min(6));
    let stride = n / spokes;
    let offset = rng.gen_range(0..n);
    for s in 0..spokes {
        let v = 1 + (offset + s * stride) % n;
        edges.push([0, v]);
        if rng.gen_bool(0.5) {
            let dir = vertices[v] - c;
            let len = dir.norm();
            let tip = c + dir * ((outer - 5.0) / len);
            if tip.dist(vertices[v]) >= 30.0 {
                vertices.push(tip);
                edges.push([v, vertices.len() - 1]);
            }
        }
    }
    (vertices, edges)
}

fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let orient = |p: Point2, q: Point2, r: Point2| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Random tree grown edge by edge. New roads keep `clearance` from other
/// roads, leave their parent at least 40 degrees from its other roads, and
/// never cross.
fn tree(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> (Vec<Point2>, Vec<[usize; 2]>) {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let m = spec.clearance;
    let min_angle = 40f64.to_radians();
    let target = ((w * h) / 9000.0).round().max(6.0) as usize;
    let mut vertices = vec![Point2::new(
        rng.gen_range(w * 0.35..w * 0.65),
        rng.gen_range(h * 0.35..h * 0.65),
    )];
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut dirs: Vec<Vec<f64>> = vec![Vec::new()];
    let mut failures = 0;
    while vertices.len() < target && failures < 4000 {
        let parent = rng.gen_range(0..vertices.len());
        if dirs[parent].len() >= spec.max_degree {
            failures += 1;
            continue;
        }
        let angle = rng.gen_range(0.0..TAU);
        let len = rng.gen_range(45.0..130.0);
        let p = vertices[parent];
        let q = p + Point2::new(len * angle.cos(), len * angle.sin());
        let inside = q.x >= m && q.y >= m && q.x <= w - m && q.y <= h - m;
        let ok = inside
            && dirs[parent].iter().all(|&d| angle_gap(d, angle) >= min_angle)
            && vertices.iter().enumerate().all(|(i, &v)| {
                i == parent || point_segment_dist_sq(v, p, q) >= m * m
            })
            && edges.iter().all(|&[a, b]| {
                let (va, vb) = (vertices[a], vertices[b]);
                point_segment_dist_sq(q, va, vb) >= m * m
                    && (a == parent || b == parent || !segments_cross(p, q, va, vb))
            });
        if !ok {
            failures += 1;
            continue;
        }
        vertices.push(q);
        dirs.push(vec![angle + std::f64::consts::PI]);
        dirs[parent].push(angle);
        edges.push([parent, vertices.len() - 1]);
    }
    (vertices, edges)
}

/// Grey roads on a mottled green background.
pub fn render_aerial(gf: &GraphFile, seed: u64) -> GridMap {
    let (w, h) = (gf.width, gf.height);
    let roads = rasterize_graph(&gf.graph, w, h, 9.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
    let mut out = GridMap::new(w, h, 3);
    let data = out.data_mut();
    for (i, &r) in roads.data().iter().enumerate() {
        let n: i16 = rng.gen_range(-12..=12);
        let base: [i16; 3] = if r > 0 { [128, 128, 124] } else { [62, 96, 54] };
        for c in 0..3 {
            data[3 * i + c] = (base[c] + n).clamp(0, 255) as u8;
        }
    }
    out
}
