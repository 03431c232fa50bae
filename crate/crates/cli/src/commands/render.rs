use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};

use super::{read_graph, read_png};
use crate::config::RunConfig;
use crate::invalid;
use crate::provenance::{write_json, Provenance};
use crate::render::{overlay_png, svg, Layer};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Ground-truth graph, drawn in cyan.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Predicted graph, drawn in orange.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Background tile for PNG output.
    #[arg(long)]
    aerial: Option<PathBuf>,
    /// Output file; `.svg` or `.png`.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<ExitCode> {
    let mut prov = Provenance::new("render", cfg);
    let mut load = |p: &Option<PathBuf>| -> Result<_> {
        match p {
            Some(p) => {
                prov.input(p)?;
                Ok(Some(read_graph(p)?))
            }
            None => Ok(None),
        }
    };
    let gt = load(&a.gt)?;
    let pred = load(&a.pred)?;
    let (width, height) = gt
        .as_ref()
        .or(pred.as_ref())
        .map(|g| (g.width, g.height))
        .ok_or_else(|| invalid("nothing to draw: pass --gt and/or --pred"))?;
    let mut layers = Vec::new();
    if let Some(g) = &gt {
        layers.push(Layer::gt(&g.graph));
    }
    if let Some(g) = &pred {
        layers.push(Layer::pred(&g.graph));
    }
    let ext = a
        .out
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "svg" => {
            let meta = serde_json::to_string(&prov)?;
            std::fs::write(&a.out, svg(width, height, &[layers], &meta))
                .with_context(|| format!("writing {}", a.out.display()))?;
        }
        "png" => {
            let base = match &a.aerial {
                Some(p) => {
                    prov.input(p)?;
                    let img = read_png(p)?;
                    if (img.width(), img.height()) != (width, height) {
                        return Err(invalid(format!(
                            "aerial is {}x{} but the graph tile is {width}x{height}",
                            img.width(),
                            img.height()
                        )));
                    }
                    Some(img)
                }
                None => None,
            };
            overlay_png(width, height, base.as_ref(), &layers).save_png(&a.out)?;
            let mut side = a.out.clone().into_os_string();
            side.push(".run_info.json");
            write_json(&PathBuf::from(side), &prov)?;
        }
        _ => return Err(invalid(format!("{}: output must end in .svg or .png", a.out.display()))),
    }
    Ok(ExitCode::SUCCESS)
}
