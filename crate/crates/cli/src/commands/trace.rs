use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use tracing::{info, warn};

use roadnet_core::agent::{seed_buffer, Engine, RunReport};
use roadnet_core::graph::{save_graph, GraphFile};
use roadnet_core::metrics::{evaluate, MetricReport};
use roadnet_core::pipeline::{oracle_config_for, oracle_heatmap};
use roadnet_core::predict::{NoisyPredictor, OraclePredictor, Predictor, WirePredictor};
use roadnet_core::raster::{merge_heatmaps, GridMap, RoiWindow};

use super::{read_graph, read_png, ServerArgs};
use crate::config::RunConfig;
use crate::invalid;
use crate::provenance::{write_json, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Ground-truth oracle.
    Oracle,
    /// Oracle corrupted by the `noise` config section.
    Noisy,
    /// External process speaking the predictor protocol.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SeedSource {
    /// Key points of --gt.
    Gt,
    /// Key-point maps returned by the external predictor.
    Predictor,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Ground truth; required by the oracle predictors, and used for scoring.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// RGB tile handed to the predictor.
    #[arg(long)]
    aerial: Option<PathBuf>,
    /// Key-point heatmap PNG to seed from.
    #[arg(long, conflicts_with = "seed_from")]
    heatmap: Option<PathBuf>,
    /// Where seeds come from without --heatmap [default: gt for the oracles,
    /// predictor for an external predictor]
    #[arg(long, value_enum)]
    seed_from: Option<SeedSource>,
    #[arg(long, value_enum, default_value_t = PredictorKind::Oracle)]
    predictor: PredictorKind,
    #[command(flatten)]
    server: ServerArgs,
    /// Output directory for graph.json, report.json and trace.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Skip scoring against --gt.
    #[arg(long)]
    no_eval: bool,
}

#[derive(Serialize)]
struct TraceReport<'a> {
    width: u32,
    height: u32,
    predictor: PredictorKind,
    heatmap_source: &'static str,
    run: &'a RunReport,
    trace_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricReport>,
    provenance: &'a Provenance,
}

/// Stride of the windows used to collect key-point maps from a predictor.
const HEATMAP_STRIDE: i64 = 64;

/// Asks `predictor` for key-point maps over overlapping windows with an
/// empty history and merges them into one tile-wide heatmap.
fn predicted_heatmap(
    predictor: &mut WirePredictor,
    aerial: Option<&GridMap>,
    width: u32,
    height: u32,
    roi: u32,
) -> Result<GridMap> {
    let half = roi as i64 / 2;
    let centers = |len: u32| -> Vec<i64> {
        let last = (len as i64 - half).max(half);
        let mut v: Vec<i64> = (0..).map(|k| half + k * HEATMAP_STRIDE).take_while(|&c| c < last).collect();
        v.push(last);
        v
    };
    let blank = GridMap::mask(roi, roi);
    let mut tiles = Vec::new();
    for &cy in &centers(height) {
        for &cx in &centers(width) {
            let win = RoiWindow::new((cx, cy), roi)?;
            let rgb = match aerial {
                Some(a) => roadnet_core::raster::crop_roi(a, &win),
                None => GridMap::new(roi, roi, 3),
            };
            let out = predictor
                .request(win.center_point(), &rgb, &blank)
                .context("requesting key-point maps")?;
            let int = out.intersections.ok_or_else(|| {
                invalid("the predictor returned no key-point map; pass --heatmap")
            })?;
            tiles.push((win, int));
        }
    }
    Ok(merge_heatmaps(&tiles, width, height)?)
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<ExitCode> {
    let ecfg = &cfg.engine;
    let mut prov = Provenance::new("trace", cfg);
    let gt = match &a.gt {
        Some(p) => {
            prov.input(p)?;
            Some(read_graph(p)?)
        }
        None => None,
    };
    let aerial = match &a.aerial {
        Some(p) => {
            prov.input(p)?;
            Some(read_png(p)?)
        }
        None => None,
    };
    let heatmap_file = match &a.heatmap {
        Some(p) => {
            prov.input(p)?;
            Some(read_png(p)?)
        }
        None => None,
    };
    let (width, height) = gt
        .as_ref()
        .map(|g| (g.width, g.height))
        .or(aerial.as_ref().map(|m| (m.width(), m.height())))
        .or(heatmap_file.as_ref().map(|m| (m.width(), m.height())))
        .ok_or_else(|| invalid("tile size unknown: pass --gt, --aerial or --heatmap"))?;

    let gt_only = |what: &str| -> Result<&GraphFile> {
        gt.as_ref().ok_or_else(|| invalid(format!("{what} needs --gt")))
    };
    let source = match (&heatmap_file, a.seed_from) {
        (Some(_), _) => None,
        (None, Some(src)) => Some(src),
        (None, None) if a.predictor == PredictorKind::External => Some(SeedSource::Predictor),
        (None, None) => Some(SeedSource::Gt),
    };
    if source == Some(SeedSource::Predictor) && a.predictor != PredictorKind::External {
        return Err(invalid("--seed-from predictor needs --predictor external"));
    }
    let mut wire = match a.predictor {
        PredictorKind::External => Some(a.server.open(cfg, ecfg.n_queries, ecfg.roi_size)?),
        _ => None,
    };
    let (heatmap, heatmap_source) = match (heatmap_file, source) {
        (Some(h), _) => (h, "file"),
        (None, Some(SeedSource::Predictor)) => {
            let client = wire.as_mut().expect("external predictor is open");
            let h = predicted_heatmap(client, aerial.as_ref(), width, height, ecfg.roi_size)?;
            (h, "predictor")
        }
        (None, _) => (oracle_heatmap(gt_only("--seed-from gt")?), "ground_truth"),
    };
    let mut predictor: Box<dyn Predictor> = match wire {
        Some(client) => Box::new(client),
        None => {
            let gt = gt_only("the oracle predictors")?;
            let oracle = OraclePredictor::new(&gt.graph, oracle_config_for(ecfg)).map_err(invalid)?;
            if a.predictor == PredictorKind::Noisy {
                Box::new(NoisyPredictor::new(oracle, cfg.noise))
            } else {
                Box::new(oracle)
            }
        }
    };
    if a.predictor != PredictorKind::External && a.server.is_set() {
        warn!("--server/--connect ignored for the built-in predictors");
    }

    super::create_dir(&a.out)?;
    let log_path = a.out.join("trace.jsonl");
    let mut log = BufWriter::new(
        File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    let mut engine = Engine::new(ecfg.clone(), width, height)?;
    if let Some(img) = &aerial {
        engine = engine.with_aerial(img)?;
    }
    engine.seed(seed_buffer(&heatmap, ecfg).snapshot());
    let start = Instant::now();
    let mut log_err = None;
    let report = engine.run_with(predictor.as_mut(), |rec| {
        if log_err.is_none() {
            let line = serde_json::to_string(rec).map_err(std::io::Error::other);
            if let Err(e) = line.and_then(|l| writeln!(log, "{l}")) {
                log_err = Some(e);
            }
        }
    });
    let trace_ms = start.elapsed().as_secs_f64() * 1e3;
    if let Some(e) = log_err {
        return Err(anyhow::Error::new(e).context("writing trace.jsonl"));
    }
    log.flush()?;
    drop(predictor);
    let graph = engine.graph();
    info!(steps = report.steps, edges = report.edges, trace_ms, "trace finished");

    let out_graph = GraphFile::new(width, height, graph);
    save_graph(a.out.join("graph.json"), &out_graph)?;
    let metrics = match (&gt, a.no_eval) {
        (Some(gt), false) => Some(evaluate(&gt.graph, &out_graph.graph, &cfg.topo, &cfg.apls)?),
        _ => None,
    };
    if let Some(m) = &metrics {
        let apls = m.apls.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        out!("f1 {:.4} apls {apls}", m.f1);
    }
    write_json(
        &a.out.join("report.json"),
        &TraceReport {
            width,
            height,
            predictor: a.predictor,
            heatmap_source,
            run: &report,
            trace_ms,
            metrics,
            provenance: &prov,
        },
    )?;
    out!(
        "{} steps, {} vertices, {} edges -> {}",
        report.steps,
        report.vertices,
        report.edges,
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
