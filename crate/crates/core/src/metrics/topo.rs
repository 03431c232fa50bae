use std::collections::HashMap;

use rayon::prelude::*;

use crate::geometry::Point2;
use crate::graph::{GraphLocation, RoadGraph};

use super::sampling::jittered_samples;
use super::TopoParams;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct TopoCounts {
    pub matched_gt: usize,
    pub matched_pred: usize,
    pub gt_total: usize,
    pub pred_total: usize,
    pub gt_seeds: usize,
    pub matched_seeds: usize,
    pub unmatched_pred_seeds: usize,
}

const LEVEL_EPS: f64 = 1e-7;
const DEDUP_EPS: f64 = 1e-6;

/// Points at along-graph distance `k * spacing` from `seed`, for every
/// `k * spacing <= radius`.
pub(crate) fn level_points(g: &RoadGraph, seed: &GraphLocation, spacing: f64, radius: f64) -> Vec<Point2> {
    let reach = g.dijkstra(seed, radius);
    let levels = (radius / spacing + 1e-9).floor() as usize;
    let mut pts: Vec<Point2> = Vec::new();
    for e in 0..g.edge_count() {
        let [a, b] = g.edges()[e];
        let len = g.edge_length(e);
        let da = reach.get(a);
        let db = reach.get(b);
        let s0 = (e == seed.edge).then_some(seed.t * len);
        if da.is_none() && db.is_none() && s0.is_none() {
            continue;
        }
        let f = |x: f64| {
            let mut best = f64::INFINITY;
            if let Some(da) = da {
                best = best.min(da + x);
            }
            if let Some(db) = db {
                best = best.min(db + len - x);
            }
            if let Some(s0) = s0 {
                best = best.min((x - s0).abs());
            }
            best
        };
        let (pa, pb) = g.edge_endpoints(e);
        for k in 0..=levels {
            let level = k as f64 * spacing;
            let mut xs: Vec<f64> = Vec::with_capacity(4);
            if let Some(da) = da {
                xs.push(level - da);
            }
            if let Some(db) = db {
                xs.push(len - (level - db));
            }
            if let Some(s0) = s0 {
                xs.push(s0 - level);
                xs.push(s0 + level);
            }
            for x in xs {
                if x < -LEVEL_EPS || x > len + LEVEL_EPS {
                    continue;
                }
                let x = x.clamp(0.0, len);
                if (f(x) - level).abs() > LEVEL_EPS * (1.0 + level) {
                    continue;
                }
                let t = if len > 0.0 { x / len } else { 0.0 };
                pts.push(pa.lerp(pb, t));
            }
        }
    }
    dedup(pts)
}

fn dedup(mut pts: Vec<Point2>) -> Vec<Point2> {
    pts.sort_by(|a, b| a.row_major_cmp(b));
    let mut grid: HashMap<(i64, i64), Vec<Point2>> = HashMap::new();
    let cell = |p: Point2| ((p.x / 0.5).floor() as i64, (p.y / 0.5).floor() as i64);
    let mut out = Vec::with_capacity(pts.len());
    'outer: for p in pts {
        let (cx, cy) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = grid.get(&(cx + dx, cy + dy)) {
                    if v.iter().any(|q| q.dist(p) <= DEDUP_EPS) {
                        continue 'outer;
                    }
                }
            }
        }
        grid.entry((cx, cy)).or_default().push(p);
        out.push(p);
    }
    out
}

/// Greedy one-to-one matching by ascending distance; pairs farther than
/// `radius` never match. Returns the number of matched pairs.
pub(crate) fn greedy_match(a: &[Point2], b: &[Point2], radius: f64) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let cell = radius.max(1e-9);
    let key = |p: Point2| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (j, &q) in b.iter().enumerate() {
        grid.entry(key(q)).or_default().push(j);
    }
    let r2 = radius * radius;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &p) in a.iter().enumerate() {
        let (cx, cy) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(js) = grid.get(&(cx + dx, cy + dy)) {
                    for &j in js {
                        let d = p.dist_sq(b[j]);
                        if d <= r2 {
                            pairs.push((d, i, j));
                        }
                    }
                }
            }
        }
    }
    pairs.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut n = 0;
    for (_, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            n += 1;
        }
    }
    n
}

pub(crate) fn topo_counts(gt: &RoadGraph, pred: &RoadGraph, params: &TopoParams) -> TopoCounts {
    let gt_seeds = jittered_samples(gt, params.seed_spacing, params.seed);
    let per_seed: Vec<(usize, usize, usize, usize, bool)> = gt_seeds
        .par_iter()
        .map(|seed| {
            let marbles = level_points(gt, seed, params.marble_spacing, params.propagation_radius);
            let proj = if pred.is_empty() {
                None
            } else {
                pred.project_point(seed.point)
                    .ok()
                    .filter(|l| l.point.dist(seed.point) <= params.match_radius)
            };
            match proj {
                Some(loc) => {
                    let holes = level_points(pred, &loc, params.marble_spacing, params.propagation_radius);
                    let m = greedy_match(&marbles, &holes, params.match_radius);
                    (m, m, marbles.len(), holes.len(), true)
                }
                None => (0, 0, marbles.len(), 0, false),
            }
        })
        .collect();

    let pred_seeds = jittered_samples(pred, params.seed_spacing, params.seed);
    let unmatched_pred: Vec<usize> = pred_seeds
        .par_iter()
        .filter_map(|seed| {
            let near = !gt.is_empty() && gt.distance_to(seed.point).is_some_and(|d| d <= params.match_radius);
            (!near).then(|| level_points(pred, seed, params.marble_spacing, params.propagation_radius).len())
        })
        .collect();

    let mut c = TopoCounts {
        gt_seeds: gt_seeds.len(),
        unmatched_pred_seeds: unmatched_pred.len(),
        ..TopoCounts::default()
    };
    for (mg, mp, ng, np, matched) in per_seed {
        c.matched_gt += mg;
        c.matched_pred += mp;
        c.gt_total += ng;
        c.pred_total += np;
        c.matched_seeds += matched as usize;
    }
    c.pred_total += unmatched_pred.iter().sum::<usize>();
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn level_points_on_a_line() {
        let g = RoadGraph::new(vec![p(0.0, 0.0), p(100.0, 0.0)], vec![[0, 1]]).unwrap();
        let seed = g.location(0, 0.3);
        let pts = level_points(&g, &seed, 5.0, 20.0);
        let mut xs: Vec<f64> = pts.iter().map(|q| q.x).collect();
        xs.sort_by(f64::total_cmp);
        let want = [10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];
        assert_eq!(xs.len(), want.len());
        for (a, b) in xs.iter().zip(want) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn level_points_fan_out_at_junction() {
        // Seed at the center of a plus: one point per arm per level.
        let g = RoadGraph::new(
            vec![p(50.0, 50.0), p(100.0, 50.0), p(0.0, 50.0), p(50.0, 0.0), p(50.0, 100.0)],
            vec![[0, 1], [0, 2], [0, 3], [0, 4]],
        )
        .unwrap();
        let seed = g.location_at_vertex(0).unwrap();
        assert_eq!(level_points(&g, &seed, 5.0, 20.0).len(), 1 + 4 * 4);
    }

    #[test]
    fn greedy_match_is_one_to_one() {
        let a = [p(0.0, 0.0), p(1.0, 0.0)];
        let b = [p(0.5, 0.0)];
        assert_eq!(greedy_match(&a, &b, 8.0), 1);
        assert_eq!(greedy_match(&a, &[p(20.0, 0.0)], 8.0), 0);
    }
}
