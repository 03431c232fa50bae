use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use tracing::info;

use roadnet_core::expert::{bfs_traverse, emit_samples, write_manifest, SampleSet};

use super::{read_graph, read_png, sibling_png, tile_id};
use crate::config::RunConfig;
use crate::invalid;
use crate::provenance::{write_json, Provenance, RUN_INFO_FILE};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Ground-truth graph files; each needs a same-named `.png` tile beside it.
    #[arg(required = true)]
    graphs: Vec<PathBuf>,
    /// Output sample-set directory.
    #[arg(long)]
    out: PathBuf,
    /// Tiles processed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Serialize)]
struct TileSummary {
    tile_id: String,
    first_index: usize,
    samples: usize,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    samples: usize,
    tiles: Vec<TileSummary>,
    provenance: &'a Provenance,
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<ExitCode> {
    let ecfg = cfg.expert;
    let mut prov = Provenance::new("sample", cfg);
    let mut tiles = Vec::with_capacity(a.graphs.len());
    let mut seen = std::collections::BTreeSet::new();
    for g in &a.graphs {
        let png = sibling_png(g);
        if !png.exists() {
            return Err(invalid(format!("{}: tile image {} not found", g.display(), png.display())));
        }
        let id = tile_id(g);
        if !seen.insert(id.clone()) {
            return Err(invalid(format!("tile id {id:?} appears twice")));
        }
        prov.input(g)?;
        prov.input(&png)?;
        tiles.push((id, g.clone(), png));
    }
    super::create_dir(&a.out)?;
    let pool = super::pool(a.jobs)?;

    // Count first so every tile knows its index range, then write in parallel.
    let counts = pool.install(|| {
        tiles
            .par_iter()
            .map(|(_, g, _)| -> Result<usize> {
                let gf = read_graph(g)?;
                Ok(bfs_traverse(&gf.graph, &ecfg, gf.width, gf.height)?.steps.len())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let firsts: Vec<usize> = counts
        .iter()
        .scan(0, |acc, &c| {
            let first = *acc;
            *acc += c;
            Some(first)
        })
        .collect();

    let per_tile = pool.install(|| {
        tiles
            .par_iter()
            .zip(&firsts)
            .map(|((id, g, png), &first)| -> Result<_> {
                let gf = read_graph(g)?;
                let aerial = read_png(png)?;
                let mut set = SampleSet::starting_at(&a.out, first)?;
                emit_samples(&gf, &aerial, &ecfg, id, |s| set.add(&s))
                    .with_context(|| format!("sampling {}", g.display()))?;
                info!(tile = %id, samples = set.len(), "sampled");
                Ok(set.into_records())
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut summary = Vec::with_capacity(tiles.len());
    let mut records = Vec::new();
    for (((id, _, _), recs), &first) in tiles.iter().zip(per_tile).zip(&firsts) {
        summary.push(TileSummary {
            tile_id: id.clone(),
            first_index: first,
            samples: recs.len(),
        });
        records.extend(recs);
    }
    write_manifest(&a.out, &records)?;
    write_json(
        &a.out.join(RUN_INFO_FILE),
        &RunInfo {
            samples: records.len(),
            tiles: summary,
            provenance: &prov,
        },
    )?;
    out!("{} samples written to {}", records.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}
