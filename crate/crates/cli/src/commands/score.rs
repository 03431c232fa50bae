use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use tracing::info;

use roadnet_core::expert::{load_manifest, ManifestRecord, MANIFEST_FILE};
use roadnet_core::predict::{OracleConfig, OraclePredictor};
use roadnet_core::training::{losses, LossBreakdown, LossWeights};

use super::{read_graph, tile_id, ServerArgs};
use crate::config::RunConfig;
use crate::invalid;
use crate::provenance::{write_json, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoredPredictor {
    /// In-process ground-truth oracle; needs the tiles' graphs.
    Oracle,
    /// External process speaking the predictor protocol.
    External,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Sample-set directory written by `sample`.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_enum, default_value_t = ScoredPredictor::External)]
    predictor: ScoredPredictor,
    /// Ground-truth graphs for the oracle, matched to samples by file stem.
    #[arg(long = "graph")]
    graphs: Vec<PathBuf>,
    #[command(flatten)]
    server: ServerArgs,
    /// Output directory for scores.jsonl and summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Tiles scored in parallel by the oracle.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Serialize)]
struct SampleScore<'a> {
    index: usize,
    tile_id: &'a str,
    m: usize,
    #[serde(flatten)]
    loss: LossBreakdown,
}

#[derive(Debug, Default, Serialize)]
struct Means {
    seg: f64,
    coord: f64,
    prob: f64,
    ins: f64,
    total: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    predictor: ScoredPredictor,
    samples: usize,
    seg_scored: usize,
    masks_scored: usize,
    mean: Means,
    weights: &'a LossWeights,
    provenance: &'a Provenance,
}

fn score_oracle(
    dir: &Path,
    records: &[ManifestRecord],
    graphs: &[PathBuf],
    cfg: &RunConfig,
    jobs: usize,
) -> Result<Vec<LossBreakdown>> {
    let by_id: BTreeMap<String, &PathBuf> = graphs.iter().map(|g| (tile_id(g), g)).collect();
    let mut tiles: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (k, r) in records.iter().enumerate() {
        tiles.entry(r.tile_id.as_str()).or_default().push(k);
    }
    for id in tiles.keys() {
        if !by_id.contains_key(*id) {
            return Err(invalid(format!("no --graph given for tile {id:?}")));
        }
    }
    let tiles: Vec<(&str, Vec<usize>)> = tiles.into_iter().collect();
    // The oracle keeps its own visited state, so each tile is replayed in
    // manifest order by one oracle.
    let per_tile = super::pool(jobs)?.install(|| {
        tiles
            .par_iter()
            .map(|(id, idx)| -> Result<Vec<(usize, LossBreakdown)>> {
                let gf = read_graph(by_id[*id])?;
                let ocfg = OracleConfig {
                    step_length: cfg.expert.step_length,
                    roi_size: records[idx[0]].roi_size,
                    n_queries: cfg.expert.max_queries,
                    with_masks: true,
                    reseed_unvisited: true,
                };
                let mut oracle = OraclePredictor::new(&gf.graph, ocfg)
                    .map_err(invalid)?
                    .with_label_maps(gf.width, gf.height);
                idx.iter()
                    .map(|&k| {
                        let r = &records[k];
                        let sample = r.load(dir)?;
                        let targets = oracle.next_vertices(r.v_t);
                        let out = oracle.output_for(r.v_t, &sample.window, &targets);
                        Ok((k, losses(&out, &sample, &cfg.loss)?))
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = vec![None; records.len()];
    for (k, l) in per_tile.into_iter().flatten() {
        out[k] = Some(l);
    }
    Ok(out.into_iter().map(|l| l.expect("every record scored")).collect())
}

fn score_external(
    dir: &Path,
    records: &[ManifestRecord],
    server: &ServerArgs,
    cfg: &RunConfig,
) -> Result<Vec<LossBreakdown>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    if let Some(r) = records.iter().find(|r| r.roi_size != first.roi_size) {
        return Err(invalid(format!(
            "sample {} has ROI size {} but sample {} has {}",
            r.index, r.roi_size, first.index, first.roi_size
        )));
    }
    let n = first.labels.len();
    let mut client = server.open(cfg, n, first.roi_size)?;
    records
        .iter()
        .map(|r| {
            let sample = r.load(dir)?;
            let out = client
                .request(r.v_t, &sample.rgb, &sample.history)
                .with_context(|| format!("sample {}", r.index))?;
            Ok(losses(&out, &sample, &cfg.loss)?)
        })
        .collect()
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<ExitCode> {
    let records = load_manifest(&a.samples)
        .with_context(|| format!("reading {}", a.samples.join(MANIFEST_FILE).display()))?;
    let mut prov = Provenance::new("score-predictor", cfg);
    let mut files = vec![a.samples.join(MANIFEST_FILE)];
    for r in &records {
        for f in [&r.files.rgb, &r.files.hist, &r.files.seg, &r.files.int]
            .into_iter()
            .chain(&r.files.inst)
        {
            files.push(a.samples.join(f));
        }
    }
    prov.input_group(&a.samples.display().to_string(), &files)?;
    for g in &a.graphs {
        prov.input(g)?;
    }

    let scores = match a.predictor {
        ScoredPredictor::Oracle => score_oracle(&a.samples, &records, &a.graphs, cfg, a.jobs)?,
        ScoredPredictor::External => score_external(&a.samples, &records, &a.server, cfg)?,
    };

    super::create_dir(&a.out)?;
    let path = a.out.join("scores.jsonl");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    let mut mean = Means::default();
    for (r, l) in records.iter().zip(&scores) {
        let line = SampleScore {
            index: r.index,
            tile_id: &r.tile_id,
            m: r.m,
            loss: *l,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
        mean.seg += l.seg;
        mean.coord += l.coord;
        mean.prob += l.prob;
        mean.ins += l.ins;
        mean.total += l.total;
    }
    w.flush()?;
    let count = scores.len().max(1) as f64;
    for v in [&mut mean.seg, &mut mean.coord, &mut mean.prob, &mut mean.ins, &mut mean.total] {
        *v /= count;
    }
    let summary = Summary {
        predictor: a.predictor,
        samples: scores.len(),
        seg_scored: scores.iter().filter(|l| l.seg_scored).count(),
        masks_scored: scores.iter().map(|l| l.masks_scored).sum(),
        mean,
        weights: &cfg.loss,
        provenance: &prov,
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    info!(samples = summary.samples, "scored");
    out!(
        "{} samples: total {:.6} (seg {:.6}, coord {:.6}, prob {:.6}, ins {:.6})",
        summary.samples,
        summary.mean.total,
        summary.mean.seg,
        summary.mean.coord,
        summary.mean.prob,
        summary.mean.ins
    );
    Ok(ExitCode::SUCCESS)
}
