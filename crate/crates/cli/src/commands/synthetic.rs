use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;
use tracing::info;

use roadnet_core::graph::save_graph;
use roadnet_core::synthetic::{generate, render_aerial, SyntheticKind, SyntheticSpec};

use crate::config::RunConfig;
use crate::invalid;
use crate::provenance::{write_json, Provenance, RUN_INFO_FILE};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// grid, ring or tree [default: synthetic.kind]
    #[arg(long)]
    kind: Option<SyntheticKind>,
    /// First seed; tile k uses seed + k [default: synthetic.seed]
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// [default: synthetic.width]
    #[arg(long)]
    width: Option<u32>,
    /// [default: synthetic.height]
    #[arg(long)]
    height: Option<u32>,
    /// [default: synthetic.max_degree]
    #[arg(long)]
    max_degree: Option<usize>,
    /// Output directory; tiles are written as `{kind}_{seed}.json` and `.png`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    tiles: Vec<String>,
    provenance: &'a Provenance,
}

fn kind_name(k: SyntheticKind) -> &'static str {
    match k {
        SyntheticKind::Grid => "grid",
        SyntheticKind::Ring => "ring",
        SyntheticKind::Tree => "tree",
    }
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<ExitCode> {
    let mut base = cfg.synthetic;
    base.kind = a.kind.unwrap_or(base.kind);
    base.seed = a.seed.unwrap_or(base.seed);
    base.width = a.width.unwrap_or(base.width);
    base.height = a.height.unwrap_or(base.height);
    base.max_degree = a.max_degree.unwrap_or(base.max_degree);
    base.validate().map_err(invalid)?;
    if a.count == 0 {
        return Err(invalid("--count must be at least 1"));
    }
    super::create_dir(&a.out)?;
    let specs: Vec<SyntheticSpec> = (0..a.count)
        .map(|k| SyntheticSpec {
            seed: base.seed + k,
            ..base
        })
        .collect();
    let tiles = super::pool(a.jobs)?.install(|| {
        specs
            .par_iter()
            .map(|spec| -> Result<String> {
                let gf = generate(spec)?;
                let name = format!("{}_{}", kind_name(spec.kind), spec.seed);
                save_graph(a.out.join(format!("{name}.json")), &gf)?;
                render_aerial(&gf, spec.seed).save_png(a.out.join(format!("{name}.png")))?;
                info!(tile = %name, vertices = gf.graph.vertex_count(), edges = gf.graph.edge_count(), "generated");
                Ok(name)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut run_cfg = cfg.clone();
    run_cfg.synthetic = base;
    let prov = Provenance::new("gen-synthetic", &run_cfg);
    write_json(&a.out.join(RUN_INFO_FILE), &RunInfo { tiles: tiles.clone(), provenance: &prov })?;
    for t in tiles {
        out!("{}", a.out.join(format!("{t}.json")).display());
    }
    Ok(ExitCode::SUCCESS)
}
