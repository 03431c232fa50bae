//! Uniform-grid bucket index over edge segments for nearest-edge queries.

use crate::geometry::{point_segment_dist_sq, Point2};

use super::RoadGraph;

const BRUTE_FORCE_LIMIT: usize = 32;
const MAX_CELLS: usize = 1 << 20;

#[derive(Debug)]
pub(crate) struct SegmentIndex {
    origin: Point2,
    cell: f64,
    cols: i64,
    rows: i64,
    buckets: Vec<Vec<u32>>,
    brute_force: bool,
}

impl SegmentIndex {
    pub(crate) fn build(g: &RoadGraph) -> Self {
        let n = g.edge_count();
        if n <= BRUTE_FORCE_LIMIT {
            return Self {
                origin: Point2::default(),
                cell: 1.0,
                cols: 0,
                rows: 0,
                buckets: Vec::new(),
                brute_force: true,
            };
        }
        let (mut min, mut max) = (
            Point2::new(f64::INFINITY, f64::INFINITY),
            Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for &[a, b] in g.edges() {
            for p in [g.vertices()[a], g.vertices()[b]] {
                min = Point2::new(min.x.min(p.x), min.y.min(p.y));
                max = Point2::new(max.x.max(p.x), max.y.max(p.y));
            }
        }
        let mean_len = g.total_length() / n as f64;
        let mut cell = (2.0 * mean_len).clamp(4.0, 256.0);
        let extent = (max - min).x.max((max - min).y).max(1.0);
        loop {
            let cols = (((max.x - min.x) / cell).floor() as i64 + 1).max(1);
            let rows = (((max.y - min.y) / cell).floor() as i64 + 1).max(1);
            if ((cols * rows) as usize) <= MAX_CELLS || cell >= extent {
                let mut index = Self {
                    origin: min,
                    cell,
                    cols,
                    rows,
                    buckets: vec![Vec::new(); (cols * rows) as usize],
                    brute_force: false,
                };
                index.fill(g);
                return index;
            }
            cell *= 2.0;
        }
    }

    fn fill(&mut self, g: &RoadGraph) {
        let reach_sq = (self.cell * std::f64::consts::FRAC_1_SQRT_2 + 1e-9).powi(2);
        for (e, &[a, b]) in g.edges().iter().enumerate() {
            let (pa, pb) = (g.vertices()[a], g.vertices()[b]);
            let (c0, r0) = self.cell_of(Point2::new(pa.x.min(pb.x), pa.y.min(pb.y)));
            let (c1, r1) = self.cell_of(Point2::new(pa.x.max(pb.x), pa.y.max(pb.y)));
            for r in r0.max(0)..=r1.min(self.rows - 1) {
                for c in c0.max(0)..=c1.min(self.cols - 1) {
                    let center = Point2::new(
                        self.origin.x + (c as f64 + 0.5) * self.cell,
                        self.origin.y + (r as f64 + 0.5) * self.cell,
                    );
                    if point_segment_dist_sq(center, pa, pb) <= reach_sq {
                        self.buckets[(r * self.cols + c) as usize].push(e as u32);
                    }
                }
            }
        }
    }

    fn cell_of(&self, p: Point2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.cell).floor() as i64,
            ((p.y - self.origin.y) / self.cell).floor() as i64,
        )
    }

    /// Nearest edge to `p` as `(squared distance, edge)`, ties broken by the
    /// lowest edge index.
    pub(crate) fn nearest(&self, g: &RoadGraph, p: Point2) -> Option<(f64, usize)> {
        let consider = |best: &mut Option<(f64, usize)>, e: usize| {
            let (a, b) = g.edge_endpoints(e);
            let d = point_segment_dist_sq(p, a, b);
            match *best {
                Some((bd, be)) if d > bd || (d == bd && e >= be) => {}
                _ => *best = Some((d, e)),
            }
        };
        let mut best = None;
        if self.brute_force {
            for e in 0..g.edge_count() {
                consider(&mut best, e);
            }
            return best;
        }
        let (pc, pr) = self.cell_of(p);
        // Chebyshev distance from p's cell to the grid rectangle.
        let gap_c = (0 - pc).max(pc - (self.cols - 1)).max(0);
        let gap_r = (0 - pr).max(pr - (self.rows - 1)).max(0);
        let start = gap_c.max(gap_r);
        let far_c = pc.abs().max((self.cols - 1 - pc).abs());
        let far_r = pr.abs().max((self.rows - 1 - pr).abs());
        let last = far_c.max(far_r);
        for k in start..=last {
            for r in (pr - k)..=(pr + k) {
                if r < 0 || r >= self.rows {
                    continue;
                }
                let on_edge_row = r == pr - k || r == pr + k;
                let mut c = pc - k;
                while c <= pc + k {
                    if c >= 0 && c < self.cols {
                        for &e in &self.buckets[(r * self.cols + c) as usize] {
                            consider(&mut best, e as usize);
                        }
                    }
                    c += if on_edge_row || k == 0 { 1 } else { 2 * k };
                }
            }
            if let Some((d, _)) = best {
                // Every cell outside ring k is at least k cells away.
                let bound = k as f64 * self.cell;
                if d.sqrt() <= bound {
                    break;
                }
            }
        }
        best
    }
}
