use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use serde::Serialize;
use tracing::warn;

use roadnet_core::metrics::{evaluate, MetricReport};

use super::read_graph;
use crate::config::RunConfig;
use crate::provenance::{write_json, Provenance};
use crate::render::{svg, Layer};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Side-by-side rendering: ground truth left, prediction over faded
    /// ground truth right.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    #[serde(flatten)]
    metrics: &'a MetricReport,
    provenance: &'a Provenance,
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<ExitCode> {
    let mut prov = Provenance::new("eval", cfg);
    prov.input(&a.gt)?;
    prov.input(&a.pred)?;
    let gt = read_graph(&a.gt)?;
    let pred = read_graph(&a.pred)?;
    if (gt.width, gt.height) != (pred.width, pred.height) {
        warn!(
            gt = ?(gt.width, gt.height),
            pred = ?(pred.width, pred.height),
            "tile sizes differ"
        );
    }
    let metrics = evaluate(&gt.graph, &pred.graph, &cfg.topo, &cfg.apls)?;
    let report = EvalReport {
        metrics: &metrics,
        provenance: &prov,
    };
    match &a.out {
        Some(p) => write_json(p, &report)?,
        None => out!("{}", serde_json::to_string_pretty(&report)?),
    }
    if let Some(p) = &a.svg {
        let meta = serde_json::to_string(&report)?;
        let panels = [
            vec![Layer::gt(&gt.graph)],
            vec![Layer::gt(&gt.graph).faded(), Layer::pred(&pred.graph)],
        ];
        std::fs::write(p, svg(gt.width, gt.height, &panels, &meta))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}
