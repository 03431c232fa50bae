//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Reference values come from brute-force
//! oracles written here, independent of the library code under test.

use std::collections::{HashSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use roadnet_core::agent::{Engine, EngineConfig};
use roadnet_core::expert::{bfs_traverse, emit_samples, ExpertConfig, TrainingSample};
use roadnet_core::geometry::Point2;
use roadnet_core::graph::{GraphFile, RoadGraph};
use roadnet_core::metrics::{apls, topo, AplsParams, TopoParams};
use roadnet_core::pipeline::trace_with_oracle;
use roadnet_core::predict::{
    Candidate, NoiseSpec, OracleConfig, OraclePredictor, PredictorOutput, ScriptedPredictor,
};
use roadnet_core::raster::{
    instance_mask_label, intersection_label, rasterize_graph, GridMap, RoiWindow,
};
use roadnet_core::synthetic::{generate, render_aerial, SyntheticKind, SyntheticSpec};
use roadnet_core::training::{assignment_cost, hungarian, losses, CostMatrix, LossBreakdown, LossWeights};

const BIN: &str = env!("CARGO_BIN_EXE_roadnet");

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pt(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

// ---------------------------------------------------------------------------
// Independent geometry used by the oracles.

fn seg_dist_sq(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let len_sq = abx * abx + aby * aby;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * abx + (p.1 - a.1) * aby) / len_sq).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * abx, a.1 + t * aby);
    (p.0 - qx) * (p.0 - qx) + (p.1 - qy) * (p.1 - qy)
}

fn xy(p: Point2) -> (f64, f64) {
    (p.x, p.y)
}

fn edge_list(g: &RoadGraph) -> Vec<((f64, f64), (f64, f64))> {
    g.edges()
        .iter()
        .map(|&[a, b]| (xy(g.vertices()[a]), xy(g.vertices()[b])))
        .collect()
}

fn dist_to_edges(p: (f64, f64), edges: &[((f64, f64), (f64, f64))]) -> f64 {
    edges
        .iter()
        .map(|&(a, b)| seg_dist_sq(p, a, b))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Points every `step` px along each edge, endpoints included.
fn dense_points(g: &RoadGraph, step: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (a, b) in edge_list(g) {
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let k = (len / step).ceil().max(1.0) as usize;
        for i in 0..=k {
            let t = i as f64 / k as f64;
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

fn tile_specs() -> Vec<SyntheticSpec> {
    let mut specs = Vec::new();
    for seed in 0..7 {
        specs.push(SyntheticSpec { kind: SyntheticKind::Grid, seed, ..SyntheticSpec::default() });
        specs.push(SyntheticSpec { kind: SyntheticKind::Ring, seed, ..SyntheticSpec::default() });
    }
    for (seed, max_degree) in [3, 4, 5, 6, 6, 6].into_iter().enumerate() {
        specs.push(SyntheticSpec {
            kind: SyntheticKind::Tree,
            seed: seed as u64,
            max_degree,
            ..SyntheticSpec::default()
        });
    }
    // One large tile of each kind.
    for s in specs.iter_mut().filter(|s| s.seed == 0) {
        s.width = 2048;
        s.height = 2048;
    }
    specs
}

fn kind_name(k: SyntheticKind) -> &'static str {
    match k {
        SyntheticKind::Grid => "grid",
        SyntheticKind::Ring => "ring",
        SyntheticKind::Tree => "tree",
    }
}

// ---------------------------------------------------------------------------
// 1. End-to-end tracing of synthetic tiles through the binary.

fn roadnet(args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("roadnet {args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut worst = (f64::INFINITY, f64::INFINITY);
    let mut slowest_large = 0.0f64;
    let specs = tile_specs();
    for (k, spec) in specs.iter().enumerate() {
        let tile_dir = dir.path().join(format!("t{k}"));
        let td = tile_dir.to_str().unwrap();
        roadnet(&[
            "gen-synthetic",
            "--kind",
            kind_name(spec.kind),
            "--seed",
            &spec.seed.to_string(),
            "--width",
            &spec.width.to_string(),
            "--height",
            &spec.height.to_string(),
            "--max-degree",
            &spec.max_degree.to_string(),
            "--out",
            td,
        ])?;
        let gt: PathBuf = tile_dir.join(format!("{}_{}.json", kind_name(spec.kind), spec.seed));
        let run = tile_dir.join("run");
        roadnet(&["trace", "--predictor", "oracle", "--gt", gt.to_str().unwrap(), "--out", run.to_str().unwrap()])?;
        let report: Value = serde_json::from_slice(&std::fs::read(run.join("report.json")).unwrap()).unwrap();
        let f1 = report["metrics"]["f1"].as_f64().ok_or("report has no f1")?;
        let ap = report["metrics"]["apls"].as_f64().ok_or("report has no apls")?;
        let ms = report["trace_ms"].as_f64().ok_or("report has no trace_ms")?;
        let name = format!("{}_{} {}x{}", kind_name(spec.kind), spec.seed, spec.width, spec.height);
        ensure(f1 >= 0.95 && ap >= 0.95, || format!("{name}: f1 {f1:.4} apls {ap:.4}"))?;
        worst = (worst.0.min(f1), worst.1.min(ap));
        if spec.width >= 2048 {
            ensure(ms < 60_000.0, || format!("{name}: traced in {ms:.0} ms"))?;
            slowest_large = slowest_large.max(ms);
        }
    }
    Ok(format!(
        "{} tiles, min f1 {:.4}, min apls {:.4}, slowest 2048x2048 trace {:.0} ms",
        specs.len(),
        worst.0,
        worst.1,
        slowest_large
    ))
}

// ---------------------------------------------------------------------------
// 2. Engine action semantics against an independent FIFO model.

const CANVAS: u32 = 4096;
const MARGIN: i64 = 80;

#[derive(Clone, Copy)]
struct Cur {
    pos: (i64, i64),
    vertex: Option<usize>,
}

/// Reference engine: integer positions, brute-force snapping, FIFO seeds.
struct Model {
    verts: Vec<(i64, i64)>,
    edges: HashSet<(usize, usize)>,
    buffer: VecDeque<(i64, i64)>,
    cur: Option<Cur>,
    snap: f64,
    bound: f64,
    threshold: f64,
    step: usize,
}

fn d(a: (i64, i64), b: (i64, i64)) -> f64 {
    (((a.0 - b.0).pow(2) + (a.1 - b.1).pow(2)) as f64).sqrt()
}

fn jp(p: (i64, i64)) -> Value {
    json!([p.0 as f64, p.1 as f64])
}

impl Model {
    fn nearest(&self, p: (i64, i64)) -> Option<usize> {
        (0..self.verts.len())
            .filter(|&v| d(self.verts[v], p) <= self.snap)
            .min_by(|&a, &b| d(self.verts[a], p).total_cmp(&d(self.verts[b], p)))
    }

    fn pop(&mut self) -> Option<Cur> {
        let p = self.buffer.pop_front()?;
        let vertex = self.nearest(p);
        Some(Cur {
            pos: vertex.map_or(p, |v| self.verts[v]),
            vertex,
        })
    }

    fn insert(&mut self, p: (i64, i64)) -> usize {
        self.verts.push(p);
        self.verts.len() - 1
    }

    /// Expected log entry for one step, or `None` once the run has ended.
    fn step(&mut self, out: &Result<PredictorOutput, String>) -> Option<Value> {
        if self.cur.is_none() {
            self.cur = Some(self.pop()?);
        }
        let mut cur = self.cur.unwrap();
        let step = self.step;
        self.step += 1;
        let mut rec = json!({
            "step": step,
            "v_t": jp(cur.pos),
            "window_center": [cur.pos.0, cur.pos.1],
            "m": 0,
            "added_edges": [],
            "pushed": [],
            "popped": null,
            "moved_to": null,
        });
        let out = match out {
            Ok(o) => o,
            Err(_) => {
                rec["action"] = json!("failed");
                self.cur = self.pop();
                rec["popped"] = self.cur.map_or(Value::Null, |c| jp(c.pos));
                return Some(rec);
            }
        };
        let mut accepted = Vec::new();
        let mut added = Vec::new();
        for c in &out.candidates {
            if c.p < self.threshold || (c.dx * c.dx + c.dy * c.dy).sqrt() > self.bound {
                continue;
            }
            let target = (cur.pos.0 + c.dx as i64, cur.pos.1 + c.dy as i64);
            let existing = self.nearest(target);
            match (cur.vertex, existing) {
                (Some(v), Some(t)) if v == t || self.edges.contains(&(v.min(t), v.max(t))) => continue,
                (None, None) if d(target, cur.pos) <= self.snap => continue,
                _ => {}
            }
            let from = match cur.vertex {
                Some(v) => v,
                None => {
                    let v = self.insert(cur.pos);
                    cur.vertex = Some(v);
                    v
                }
            };
            let to = existing.unwrap_or_else(|| self.insert(target));
            let key = (from.min(to), from.max(to));
            if self.edges.insert(key) {
                added.push(json!([jp(self.verts[key.0]), jp(self.verts[key.1])]));
                accepted.push(to);
            }
        }
        rec["m"] = json!(accepted.len());
        rec["added_edges"] = Value::Array(added);
        match accepted.len() {
            0 => {
                rec["action"] = json!("stop");
                self.cur = self.pop();
                rec["popped"] = self.cur.map_or(Value::Null, |c| jp(c.pos));
            }
            1 => {
                rec["action"] = json!("move");
                let pos = self.verts[accepted[0]];
                rec["moved_to"] = jp(pos);
                self.cur = Some(Cur {
                    pos,
                    vertex: Some(accepted[0]),
                });
            }
            _ => {
                rec["action"] = json!("branch");
                let pushed: Vec<Value> = accepted
                    .iter()
                    .map(|&v| {
                        self.buffer.push_back(self.verts[v]);
                        jp(self.verts[v])
                    })
                    .collect();
                rec["pushed"] = Value::Array(pushed);
                self.cur = self.pop();
                rec["popped"] = self.cur.map_or(Value::Null, |c| jp(c.pos));
            }
        }
        Some(rec)
    }
}

/// Draws one scripted output for the model's current position.
fn scripted_output(rng: &mut ChaCha8Rng, m: &Model, n: usize) -> Result<PredictorOutput, String> {
    let cur = m.cur.expect("positioned");
    if rng.gen_bool(0.05) {
        return Err("scripted failure".into());
    }
    let valid = match rng.gen_range(0..100) {
        0..=14 => 0,
        15..=64 => 1,
        _ => rng.gen_range(2..=4),
    };
    let mut slots: Vec<Candidate> = Vec::new();
    let mut reserved: Vec<(i64, i64)> = Vec::new();
    let far_from_all = |p: (i64, i64), reserved: &[(i64, i64)]| {
        m.verts.iter().chain(m.buffer.iter()).chain(reserved).all(|&q| d(p, q) > 10.0)
            && d(p, cur.pos) > 10.0
    };
    for _ in 0..valid {
        if rng.gen_bool(0.15) && !m.verts.is_empty() {
            // Aim at an existing vertex, slightly off so it has to snap.
            let v = m.verts[rng.gen_range(0..m.verts.len())];
            let t = (v.0 + rng.gen_range(-2..=2), v.1 + rng.gen_range(-2..=2));
            let off = (t.0 - cur.pos.0, t.1 - cur.pos.1);
            if ((off.0 * off.0 + off.1 * off.1) as f64).sqrt() <= 60.0 {
                slots.push(Candidate::new(off.0 as f64, off.1 as f64, rng.gen_range(0.5..=1.0)));
                continue;
            }
        }
        for _ in 0..60 {
            let off = (rng.gen_range(-60i64..=60), rng.gen_range(-60i64..=60));
            let r = ((off.0 * off.0 + off.1 * off.1) as f64).sqrt();
            let t = (cur.pos.0 + off.0, cur.pos.1 + off.1);
            let inside = (MARGIN..CANVAS as i64 - MARGIN).contains(&t.0) && (MARGIN..CANVAS as i64 - MARGIN).contains(&t.1);
            if (12.0..=60.0).contains(&r) && inside && far_from_all(t, &reserved) {
                reserved.push(t);
                slots.push(Candidate::new(off.0 as f64, off.1 as f64, rng.gen_range(0.5..=1.0)));
                break;
            }
        }
    }
    while slots.len() < n {
        let c = match rng.gen_range(0..3) {
            // Below threshold, anywhere.
            0 => Candidate::new(rng.gen_range(-63.0..63.0), rng.gen_range(-63.0..63.0), rng.gen_range(0.0..0.49)),
            // Confident but out of reach.
            1 => {
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                // Rounding moves the offset by under 0.71 px, so it stays beyond 63.
                let r = rng.gen_range(64.0..90.0);
                Candidate::new((r * a.cos()).round(), (r * a.sin()).round(), 1.0)
            }
            _ => Candidate::invalid(),
        };
        slots.push(c);
    }
    // Shuffle slot order.
    for i in (1..slots.len()).rev() {
        let j = rng.gen_range(0..=i);
        slots.swap(i, j);
    }
    let mut out = PredictorOutput::empty(n);
    out.candidates = slots;
    Ok(out)
}

fn criterion_2() -> Outcome {
    let n = 10;
    let (mut total_steps, mut counts) = (0usize, [0usize; 4]);
    for seq in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seq);
        let cfg = EngineConfig::default();
        let mut model = Model {
            verts: Vec::new(),
            edges: HashSet::new(),
            buffer: VecDeque::new(),
            cur: None,
            snap: cfg.snap_radius,
            bound: cfg.effective_step_bound(),
            threshold: cfg.prob_threshold,
            step: 0,
        };
        let mut seeds = Vec::new();
        while seeds.len() < rng.gen_range(1..=4) {
            let p = (rng.gen_range(1000..3000), rng.gen_range(1000..3000));
            if seeds.iter().all(|&q| d(p, q) > 100.0) {
                seeds.push(p);
            }
        }
        model.buffer.extend(seeds.iter().copied());

        // Script generation runs the model one step ahead of the engine.
        let mut script = Vec::new();
        let mut expected = Vec::new();
        let script_len = rng.gen_range(40..200);
        loop {
            if model.cur.is_none() {
                model.cur = model.pop();
                if model.cur.is_none() {
                    break;
                }
            }
            let out = if script.len() < script_len {
                scripted_output(&mut rng, &model, n)
            } else {
                Ok(PredictorOutput::empty(n))
            };
            let rec = model.step(&out).expect("positioned");
            if script.len() < script_len {
                script.push(out);
            }
            expected.push(rec);
        }

        let mut engine = Engine::new(cfg, CANVAS, CANVAS).map_err(|e| e.to_string())?;
        engine.seed(seeds.iter().map(|&(x, y)| pt(x as f64, y as f64)));
        let mut predictor = ScriptedPredictor::new(n, script);
        let mut got = Vec::new();
        engine.run_with(&mut predictor, |r| got.push(serde_json::to_value(r).unwrap()));
        ensure(got.len() == expected.len(), || {
            format!("sequence {seq}: {} steps, model expects {}", got.len(), expected.len())
        })?;
        for (g, e) in got.iter().zip(&expected) {
            for key in ["step", "v_t", "window_center", "m", "action", "added_edges", "pushed", "popped", "moved_to"] {
                ensure(g[key] == e[key], || {
                    format!("sequence {seq} step {}: {key} is {} but the model gives {}", e["step"], g[key], e[key])
                })?;
            }
            let a = ["stop", "move", "branch", "failed"].iter().position(|s| e["action"] == *s).unwrap();
            counts[a] += 1;
        }
        ensure(engine.report().edges == model.edges.len(), || format!("sequence {seq}: edge count differs"))?;
        ensure(engine.history_is_coherent(), || format!("sequence {seq}: history incoherent"))?;
        total_steps += got.len();
    }
    Ok(format!(
        "100 sequences, {total_steps} steps (stop {}, move {}, branch {}, failed {}) match the model",
        counts[0], counts[1], counts[2], counts[3]
    ))
}

// ---------------------------------------------------------------------------
// 3. Expert coverage and label geometry.

fn criterion_3() -> Outcome {
    let mut min_cov = 1.0f64;
    let mut worst_gap = 0.0f64;
    let (mut points, mut near) = (0usize, 0usize);
    let mut labels_checked = 0usize;
    let mut worst_label = 0.0f64;
    for spec in tile_specs() {
        let gf = generate(&spec).map_err(|e| e.to_string())?;
        let name = format!("{}_{}", kind_name(spec.kind), spec.seed);
        let clean = ExpertConfig { noise_amplitude: 0.0, ..ExpertConfig::default() };
        let traj = bfs_traverse(&gf.graph, &clean, gf.width, gf.height).map_err(|e| e.to_string())?;
        ensure(traj.coverage >= 1.0 - 1e-9, || format!("{name}: coverage {}", traj.coverage))?;
        min_cov = min_cov.min(traj.coverage);
        // Consecutive trace vertices lie on the road at most one step apart
        // along it, so no road point can be farther than half a step from
        // the trace. A missed road breaks this bound.
        let traced = edge_list(&traj.traced);
        let bound = clean.step_length / 2.0;
        for p in dense_points(&gf.graph, 1.0) {
            let gap = dist_to_edges(p, &traced);
            worst_gap = worst_gap.max(gap);
            points += 1;
            near += usize::from(gap <= 3.0);
            ensure(gap <= bound, || format!("{name}: ground truth point {p:?} is {gap:.2} px from the trace"))?;
        }

        if spec.width > 512 {
            continue;
        }
        let noisy = ExpertConfig { noise_amplitude: 6.0, rng_seed: spec.seed, ..ExpertConfig::default() };
        let aerial = render_aerial(&gf, spec.seed);
        let gt_edges = edge_list(&gf.graph);
        let mut err: Option<String> = None;
        emit_samples(&gf, &aerial, &noisy, &name, |s: TrainingSample| {
            for l in s.labels.iter().filter(|l| l.valid) {
                let abs = s.window.absolute(l.offset);
                let lib = gf.graph.distance_to(abs).unwrap_or(f64::INFINITY);
                let own = dist_to_edges(xy(abs), &gt_edges);
                worst_label = worst_label.max(lib).max(own);
                labels_checked += 1;
                if (lib > 1e-6 || own > 1e-6) && err.is_none() {
                    err = Some(format!("{name}: label at {abs:?} is {own:e} px off the road"));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(format!(
        "min coverage {min_cov}; GT points within 3 px of the trace {:.4}%, max gap {worst_gap:.2} px; {labels_checked} noisy labels within {worst_label:.1e} px",
        100.0 * near as f64 / points as f64
    ))
}

// ---------------------------------------------------------------------------
// 4. Hungarian matching against exhaustive search.

fn brute_min(c: &[Vec<f64>], rows: usize, cols: usize) -> f64 {
    fn go(c: &[Vec<f64>], col: usize, cols: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if col == cols {
            *best = best.min(acc);
            return;
        }
        for r in 0..used.len() {
            if !used[r] {
                used[r] = true;
                go(c, col + 1, cols, used, acc + c[r][col], best);
                used[r] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(c, 0, cols, &mut vec![false; rows], 0.0, &mut best);
    best
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..1000 {
        let rows = rng.gen_range(1..=6);
        let cols = rng.gen_range(0..=rows);
        let c: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.gen_range(0..1u64 << 20) as f64 / (1u64 << 20) as f64).collect())
            .collect();
        let cm = CostMatrix::from_fn(rows, cols, |i, j| c[i][j]).map_err(|e| e.to_string())?;
        let a = hungarian(&cm).map_err(|e| e.to_string())?;
        let mut seen = HashSet::new();
        for l in a.pred_to_label.iter().flatten() {
            ensure(seen.insert(*l), || format!("trial {trial}: column {l} assigned twice"))?;
        }
        ensure(a.matched() == cols, || format!("trial {trial}: {} of {cols} columns matched", a.matched()))?;
        let got = assignment_cost(&cm, &a.pred_to_label);
        let want = brute_min(&c, rows, cols);
        ensure(got == want, || format!("trial {trial} ({rows}x{cols}): cost {got} but optimum {want}"))?;
    }
    Ok("1000 dyadic matrices up to 6x6, costs equal to exhaustive optimum".into())
}

// ---------------------------------------------------------------------------
// 5. Metric identities, detour scoring and jitter monotonicity.

fn jitter(g: &RoadGraph, amp: f64, rng: &mut ChaCha8Rng) -> RoadGraph {
    let verts = g
        .vertices()
        .iter()
        .map(|p| {
            let r = amp * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            pt(p.x + r * a.cos(), p.y + r * a.sin())
        })
        .collect();
    RoadGraph::new(verts, g.edges().to_vec()).expect("jittered graph")
}

fn criterion_5() -> Outcome {
    let tp = TopoParams::default();
    let ap = AplsParams::default();
    let small: Vec<GraphFile> = tile_specs()
        .into_iter()
        .filter(|s| s.width <= 512)
        .map(|s| generate(&s).unwrap())
        .collect();
    for gf in &small {
        let g = &gf.graph;
        let dense = g.densify(7.0).map_err(|e| e.to_string())?;
        for (what, pred) in [("itself", g), ("its densified copy", &dense)] {
            let t = topo(g, pred, &tp).map_err(|e| e.to_string())?;
            let a = apls(g, pred, &ap).map_err(|e| e.to_string())?.score.ok_or("apls undefined")?;
            ensure((t.f1 - 1.0).abs() < 1e-9 && (a - 1.0).abs() < 1e-9, || {
                format!("graph vs {what}: f1 {} apls {a}", t.f1)
            })?;
        }
        let empty = RoadGraph::empty();
        let t = topo(g, &empty, &tp).map_err(|e| e.to_string())?;
        let a = apls(g, &empty, &ap).map_err(|e| e.to_string())?.score.unwrap_or(0.0);
        ensure(t.f1.abs() < 1e-9 && a.abs() < 1e-9, || format!("empty prediction: f1 {} apls {a}", t.f1))?;
    }

    // Zigzag with 1 px half-period and rise sqrt(5)/2: every path is 1.5x longer.
    let (x0, y0, len) = (20.0, 100.0, 1000usize);
    let gt = RoadGraph::new(vec![pt(x0, y0), pt(x0 + len as f64, y0)], vec![[0, 1]]).unwrap();
    let rise = 5f64.sqrt() / 2.0;
    let zz: Vec<Point2> = (0..=len)
        .map(|k| pt(x0 + k as f64, if k % 2 == 0 { y0 } else { y0 + rise }))
        .collect();
    let zz_edges = (0..len).map(|k| [k, k + 1]).collect();
    let zigzag = RoadGraph::new(zz, zz_edges).unwrap();
    let detour = apls(&gt, &zigzag, &AplsParams { pairs: 10_000, symmetric: false, ..ap })
        .map_err(|e| e.to_string())?
        .score
        .ok_or("detour apls undefined")?;
    ensure((detour - 0.5).abs() <= 0.02, || format!("detour apls {detour}"))?;

    // Jitter every vertex of a densified ground truth.
    let amps = [0.0, 1.0, 2.0, 4.0, 8.0];
    let mut lines = Vec::new();
    let (mut trials_monotone, mut trials) = (0, 0);
    for gf in small.iter().filter(|g| g.width == 512).take(3) {
        let dense = gf.graph.densify(10.0).map_err(|e| e.to_string())?;
        let mut mean = vec![(0.0, 0.0); amps.len()];
        for trial in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(50 + trial);
            let scores: Vec<(f64, f64)> = amps
                .iter()
                .map(|&a| {
                    let pred = jitter(&dense, a, &mut rng);
                    let f1 = topo(&dense, &pred, &tp).unwrap().f1;
                    let s = apls(&dense, &pred, &ap).unwrap().score.unwrap_or(0.0);
                    (f1, s)
                })
                .collect();
            trials += 1;
            if scores.windows(2).all(|w| w[1].0 <= w[0].0 && w[1].1 <= w[0].1) {
                trials_monotone += 1;
            }
            for (m, s) in mean.iter_mut().zip(&scores) {
                m.0 += s.0 / 10.0;
                m.1 += s.1 / 10.0;
            }
        }
        ensure(mean.windows(2).all(|w| w[1].0 <= w[0].0 + 1e-12 && w[1].1 <= w[0].1 + 1e-12), || {
            format!("mean (f1, apls) over amplitudes {amps:?} not non-increasing: {mean:?}")
        })?;
        lines.push(
            mean.iter()
                .map(|(f, a)| format!("{f:.3}/{a:.3}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
    }
    Ok(format!(
        "identities hold on {} graphs; detour apls {detour:.4}; mean f1/apls by jitter {{0,1,2,4,8}}: [{}]; {trials_monotone}/{trials} single trials monotone",
        small.len(),
        lines.join("] [")
    ))
}

// ---------------------------------------------------------------------------
// 6. Loss arithmetic.

struct OwnLoss {
    seg: f64,
    coord: f64,
    prob: f64,
    ins: f64,
}

fn own_loss(out: &PredictorOutput, s: &TrainingSample, w: &LossWeights) -> OwnLoss {
    let labels: Vec<(f64, f64)> = s.labels.iter().filter(|l| l.valid).map(|l| (l.offset.x, l.offset.y)).collect();
    let n = out.candidates.len();
    let cost = |i: usize, j: usize| {
        let c = &out.candidates[i];
        (c.dx - labels[j].0).abs() + (c.dy - labels[j].1).abs() + w.lambda * (1.0 - c.p)
    };
    // Exhaustive injective assignment of labels to candidates.
    fn go(
        j: usize,
        m: usize,
        n: usize,
        cost: &dyn Fn(usize, usize) -> f64,
        cur: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        if j == m {
            if acc < best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for i in 0..n {
            if !cur.contains(&i) {
                cur.push(i);
                go(j + 1, m, n, cost, cur, acc + cost(i, j), best);
                cur.pop();
            }
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    go(0, labels.len(), n, &cost, &mut Vec::new(), 0.0, &mut best);
    let label_of = |i: usize| best.1.iter().position(|&k| k == i);

    let bce = |p: f64, t: bool| {
        let p = p.clamp(w.eps, 1.0 - w.eps);
        if t {
            -p.ln()
        } else {
            -(1.0 - p).ln()
        }
    };
    let prob = (0..n).map(|i| bce(out.candidates[i].p, label_of(i).is_some())).sum::<f64>() / n as f64;
    let coord = if labels.is_empty() {
        0.0
    } else {
        best.1
            .iter()
            .enumerate()
            .map(|(j, &i)| (out.candidates[i].dx - labels[j].0).abs() + (out.candidates[i].dy - labels[j].1).abs())
            .sum::<f64>()
            / labels.len() as f64
    };
    let mut ins = Vec::new();
    for (j, &i) in best.1.iter().enumerate() {
        if let Some(mask) = &out.candidates[i].mask {
            let lab = s.instance_masks[j].data();
            let v: f64 = mask
                .data()
                .iter()
                .zip(lab)
                .map(|(&p, &t)| {
                    let p = p as f64 / 255.0;
                    let q = if t > 0 { p } else { 1.0 - p };
                    -q.max(w.eps).ln()
                })
                .sum();
            ins.push(v / lab.len() as f64);
        }
    }
    let ins = if ins.is_empty() { 0.0 } else { ins.iter().sum::<f64>() / ins.len() as f64 };
    let map = |pred: &GridMap, lab: &GridMap| {
        let (mut num, mut den) = (0.0, 0.0);
        for (&p, &t) in pred.data().iter().zip(lab.data()) {
            let wt = if t > 0 { w.fg_weight } else { 1.0 };
            num += wt * bce(p as f64 / 255.0, t > 0);
            den += wt;
        }
        num / den
    };
    let seg = match (&out.segmentation, &out.intersections) {
        (Some(a), Some(b)) => map(a, &s.segmentation) + map(b, &s.intersections),
        _ => 0.0,
    };
    OwnLoss { seg, coord, prob, ins }
}

fn random_map(rng: &mut ChaCha8Rng, size: u32) -> GridMap {
    let data = (0..size * size).map(|_| rng.gen::<u8>()).collect();
    GridMap::from_raw(size, size, 1, data).unwrap()
}

fn collect_samples(spec: &SyntheticSpec, noise: f64) -> Result<(GraphFile, Vec<TrainingSample>), String> {
    let gf = generate(spec).map_err(|e| e.to_string())?;
    let cfg = ExpertConfig { noise_amplitude: noise, rng_seed: spec.seed, ..ExpertConfig::default() };
    let mut samples = Vec::new();
    emit_samples(&gf, &render_aerial(&gf, spec.seed), &cfg, "t", |s| {
        samples.push(s);
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    Ok((gf, samples))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn criterion_6() -> Outcome {
    let w = LossWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut scored = 0;
    for kind in [SyntheticKind::Grid, SyntheticKind::Ring, SyntheticKind::Tree] {
        let spec = SyntheticSpec { kind, width: 256, height: 256, seed: 3, ..SyntheticSpec::default() };
        let (_, samples) = collect_samples(&spec, 6.0)?;
        for s in samples.iter().filter(|s| s.valid_labels() <= 5) {
            let size = s.window.size;
            let mut out = PredictorOutput::empty(s.labels.len());
            for c in out.candidates.iter_mut() {
                let p = match rng.gen_range(0..10) {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.gen::<f64>(),
                };
                *c = Candidate::new(rng.gen_range(-64.0..64.0), rng.gen_range(-64.0..64.0), p);
                if rng.gen_bool(0.5) {
                    c.mask = Some(random_map(&mut rng, size));
                }
            }
            if rng.gen_bool(0.7) {
                out.segmentation = Some(random_map(&mut rng, size));
                out.intersections = Some(random_map(&mut rng, size));
            }
            let lib: LossBreakdown = losses(&out, s, &w).map_err(|e| e.to_string())?;
            let own = own_loss(&out, s, &w);
            for (name, a, b) in [
                ("seg", lib.seg, own.seg),
                ("coord", lib.coord, own.coord),
                ("prob", lib.prob, own.prob),
                ("ins", lib.ins, own.ins),
            ] {
                ensure(close(a, b), || format!("{name}: library {a} vs recomputed {b}"))?;
            }
            let total = own.seg + 5.0 * own.coord + own.prob + own.ins;
            ensure(close(lib.total, total), || format!("total {} vs {total}", lib.total))?;
            scored += 1;
        }
    }

    // Noiseless oracle replay.
    let floor = -(1.0f64 - 1e-7).ln();
    let mut replayed = 0;
    for kind in [SyntheticKind::Grid, SyntheticKind::Ring, SyntheticKind::Tree] {
        let spec = SyntheticSpec { kind, seed: 1, ..SyntheticSpec::default() };
        let (gf, samples) = collect_samples(&spec, 0.0)?;
        let ocfg = OracleConfig {
            with_masks: true,
            reseed_unvisited: true,
            ..OracleConfig::default()
        };
        let mut oracle = OraclePredictor::new(&gf.graph, ocfg)
            .map_err(|e| e.to_string())?
            .with_label_maps(gf.width, gf.height);
        for s in &samples {
            let targets = oracle.next_vertices(s.v_t);
            let out = oracle.output_for(s.v_t, &s.window, &targets);
            let l = losses(&out, s, &w).map_err(|e| e.to_string())?;
            ensure(l.coord == 0.0 && l.ins == 0.0, || format!("oracle coord {} ins {}", l.coord, l.ins))?;
            ensure((l.prob - floor).abs() < 1e-15, || format!("oracle prob {} vs {floor}", l.prob))?;
            ensure(l.masks_scored == s.valid_labels(), || "oracle masks not all scored".into())?;
            replayed += 1;
        }
    }
    Ok(format!(
        "{scored} random outputs match brute-force recomputation; {replayed} noiseless oracle replays give coord 0, ins 0, prob -ln(1-1e-7)"
    ))
}

// ---------------------------------------------------------------------------
// 7. Label rasters against per-pixel oracles.

fn random_graph(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RoadGraph {
    let n = rng.gen_range(2..=14);
    let verts: Vec<Point2> = (0..n)
        .map(|_| pt(rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64)))
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.22) {
                edges.push([a, b]);
            }
        }
    }
    RoadGraph::new(verts, edges).expect("random graph")
}

/// Nearest point of the graph: (edge, parameter, point).
fn own_projection(g: &RoadGraph, p: (f64, f64)) -> Option<(usize, f64, (f64, f64))> {
    let mut best: Option<(f64, usize, f64, (f64, f64))> = None;
    for (e, (a, b)) in edge_list(g).into_iter().enumerate() {
        let (abx, aby) = (b.0 - a.0, b.1 - a.1);
        let t = (((p.0 - a.0) * abx + (p.1 - a.1) * aby) / (abx * abx + aby * aby)).clamp(0.0, 1.0);
        let q = (a.0 + t * abx, a.1 + t * aby);
        let dd = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
        if best.is_none_or(|b| dd < b.0) {
            best = Some((dd, e, t, q));
        }
    }
    best.map(|(_, e, t, q)| (e, t, q))
}

/// Shortest path between two projected points by Floyd-Warshall on the
/// graph with both points spliced in.
fn own_path(g: &RoadGraph, a: (usize, f64, (f64, f64)), b: (usize, f64, (f64, f64))) -> Option<Vec<(f64, f64)>> {
    let n = g.vertex_count();
    let (na, nb) = (n, n + 1);
    let mut pos: Vec<(f64, f64)> = g.vertices().iter().map(|&p| xy(p)).collect();
    pos.push(a.2);
    pos.push(b.2);
    let k = n + 2;
    let mut dist = vec![vec![f64::INFINITY; k]; k];
    let mut next = vec![vec![usize::MAX; k]; k];
    let link = |dist: &mut Vec<Vec<f64>>, next: &mut Vec<Vec<usize>>, u: usize, v: usize| {
        let l = ((pos[u].0 - pos[v].0).powi(2) + (pos[u].1 - pos[v].1).powi(2)).sqrt();
        if l < dist[u][v] {
            dist[u][v] = l;
            dist[v][u] = l;
            next[u][v] = v;
            next[v][u] = u;
        }
    };
    for (e, &[u, v]) in g.edges().iter().enumerate() {
        let mut chain = vec![(0.0, u)];
        if a.0 == e {
            chain.push((a.1, na));
        }
        if b.0 == e {
            chain.push((b.1, nb));
        }
        chain.push((1.0, v));
        chain.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in chain.windows(2) {
            link(&mut dist, &mut next, w[0].1, w[1].1);
        }
    }
    for i in 0..k {
        dist[i][i] = 0.0;
        next[i][i] = i;
    }
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                if dist[i][m] + dist[m][j] < dist[i][j] {
                    dist[i][j] = dist[i][m] + dist[m][j];
                    next[i][j] = next[i][m];
                }
            }
        }
    }
    if dist[na][nb].is_infinite() {
        return None;
    }
    let mut path = vec![pos[na]];
    let mut u = na;
    while u != nb {
        u = next[u][nb];
        path.push(pos[u]);
    }
    Some(path)
}

fn own_stroke(points: &[(f64, f64)], origin: (i64, i64), w: u32, h: u32, radius: f64) -> Vec<bool> {
    let r_sq = radius * radius;
    let mut out = vec![false; (w * h) as usize];
    for j in 0..h {
        for i in 0..w {
            let c = ((origin.0 + i as i64) as f64, (origin.1 + j as i64) as f64);
            let hit = match points {
                [] => false,
                [p] => seg_dist_sq(c, *p, *p) <= r_sq,
                _ => points.windows(2).any(|s| seg_dist_sq(c, s[0], s[1]) <= r_sq),
            };
            out[(j * w + i) as usize] = hit;
        }
    }
    out
}

fn same(map: &GridMap, want: &[bool]) -> Option<(u32, u32)> {
    let w = map.width();
    want.iter().enumerate().find_map(|(k, &b)| {
        let (x, y) = (k as u32 % w, k as u32 / w);
        ((map.get(x, y) > 0) != b).then_some((x, y))
    })
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut pixels, mut masks, mut unreachable) = (0usize, 0usize, 0usize);
    for gi in 0..50 {
        let (w, h) = (rng.gen_range(32..=256), rng.gen_range(32..=256));
        let g = random_graph(&mut rng, w, h);
        let edges = edge_list(&g);

        let thickness = rng.gen_range(1.0..7.0);
        let r_sq = (thickness / 2.0) * (thickness / 2.0);
        let seg = rasterize_graph(&g, w, h, thickness);
        let mut want = vec![false; (w * h) as usize];
        let mut degree = vec![0usize; g.vertex_count()];
        for &[a, b] in g.edges() {
            degree[a] += 1;
            degree[b] += 1;
        }
        let radius = rng.gen_range(1.0..5.0);
        let keys: Vec<(f64, f64)> = (0..g.vertex_count())
            .filter(|&v| degree[v] >= 3 || degree[v] == 1)
            .map(|v| xy(g.vertices()[v]))
            .collect();
        let mut want_int = vec![false; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let c = (x as f64, y as f64);
                want[(y * w + x) as usize] = edges.iter().any(|&(a, b)| seg_dist_sq(c, a, b) <= r_sq);
                want_int[(y * w + x) as usize] =
                    keys.iter().any(|&k| (c.0 - k.0).powi(2) + (c.1 - k.1).powi(2) <= radius * radius);
            }
        }
        if let Some(px) = same(&seg, &want) {
            return Err(format!("graph {gi}: segmentation differs at {px:?}"));
        }
        let int = intersection_label(&g, w, h, radius);
        if let Some(px) = same(&int, &want_int) {
            return Err(format!("graph {gi}: intersection label differs at {px:?}"));
        }
        pixels += 2 * (w * h) as usize;

        for _ in 0..6 {
            let v_t = pt(rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
            let v_next = pt(rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
            let size = 2 * rng.gen_range(16..=64);
            let win = RoiWindow::around(v_t, size).unwrap();
            let thickness = if rng.gen_bool(0.5) { 3.0 } else { rng.gen_range(1.0..6.0) };
            let got = instance_mask_label(&g, v_t, v_next, &win, thickness);
            let path = match (own_projection(&g, xy(v_t)), own_projection(&g, xy(v_next))) {
                (Some(a), Some(b)) => own_path(&g, a, b),
                _ => None,
            };
            ensure(got.reachable == path.is_some(), || format!("graph {gi}: reachability differs"))?;
            let want = own_stroke(path.as_deref().unwrap_or(&[]), win.origin(), size, size, thickness / 2.0);
            if let Some(px) = same(&got.mask, &want) {
                return Err(format!("graph {gi}: instance mask differs at window pixel {px:?}"));
            }
            masks += 1;
            unreachable += usize::from(path.is_none());
            pixels += (size * size) as usize;
        }
    }
    Ok(format!(
        "50 random graphs: segmentation, intersection and {masks} instance masks ({unreachable} unreachable) identical over {pixels} pixels"
    ))
}

// ---------------------------------------------------------------------------
// 8. Graceful degradation under dropped candidates.

fn criterion_8() -> Outcome {
    let drops = [0.0, 0.05, 0.1, 0.2];
    let ap = AplsParams::default();
    let cfg = EngineConfig::default();
    let mut means = Vec::new();
    for &drop_prob in &drops {
        let mut sum = 0.0;
        let mut runs = 0;
        for kind in [SyntheticKind::Grid, SyntheticKind::Ring, SyntheticKind::Tree] {
            for seed in 0..5u64 {
                let gf = generate(&SyntheticSpec { kind, seed, width: 768, height: 768, ..SyntheticSpec::default() })
                    .map_err(|e| e.to_string())?;
                let noise = NoiseSpec { drop_prob, seed, ..NoiseSpec::default() };
                let (pred, _) = trace_with_oracle(&gf, None, None, &cfg, Some(&noise)).map_err(|e| e.to_string())?;
                sum += apls(&gf.graph, &pred, &ap).map_err(|e| e.to_string())?.score.unwrap_or(0.0);
                runs += 1;
            }
        }
        means.push(sum / runs as f64);
    }
    let text = drops
        .iter()
        .zip(&means)
        .map(|(d, m)| format!("{d}: {m:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(means.windows(2).all(|w| w[1] <= w[0]), || format!("mean apls by drop rate not non-increasing: {text}"))?;
    Ok(format!("mean apls by drop rate over 15 tiles: {text}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("synthetic tiles traced end to end", criterion_1),
        ("engine actions match a FIFO reference model", criterion_2),
        ("expert coverage and label geometry", criterion_3),
        ("Hungarian matching is optimal", criterion_4),
        ("metric identities and sensitivity", criterion_5),
        ("loss arithmetic", criterion_6),
        ("label rasters match per-pixel oracles", criterion_7),
        ("APLS degrades monotonically with drop rate", criterion_8),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let n = k + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = std::time::Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
