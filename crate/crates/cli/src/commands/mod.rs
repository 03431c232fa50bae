pub mod eval;
pub mod protocol;
pub mod render;
pub mod sample;
pub mod score;
pub mod synthetic;
pub mod trace;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use roadnet_core::graph::{load_graph, GraphError, GraphFile};
use roadnet_core::predict::{PredictorError, WirePredictor};
use roadnet_core::raster::GridMap;

use crate::config::RunConfig;
use crate::invalid;

pub fn read_graph(path: &Path) -> Result<GraphFile> {
    load_graph(path).map_err(|e| match e {
        GraphError::Io(io) => anyhow::Error::new(io).context(format!("reading {}", path.display())),
        other => invalid(format!("{}: {other}", path.display())),
    })
}

pub fn read_png(path: &Path) -> Result<GridMap> {
    GridMap::load_png(path).with_context(|| format!("reading {}", path.display()))
}

/// The tile image stored next to a graph file: same stem, `.png`.
pub fn sibling_png(graph: &Path) -> PathBuf {
    graph.with_extension("png")
}

pub fn tile_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tile".into())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(invalid("--jobs must be at least 1"));
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// Splits a server command line on whitespace into program and arguments.
pub fn split_command(cmd: &str) -> Result<(String, Vec<String>)> {
    let mut parts = cmd.split_whitespace().map(str::to_string);
    let program = parts.next().ok_or_else(|| invalid("--server command is empty"))?;
    Ok((program, parts.collect()))
}

/// Where an external predictor lives.
#[derive(Debug, Clone, clap::Args)]
pub struct ServerArgs {
    /// Command that starts a predictor on its standard streams
    /// (split on whitespace).
    #[arg(long, value_name = "CMD", conflicts_with = "connect")]
    pub server: Option<String>,
    /// Address of a predictor listening on TCP.
    #[arg(long, value_name = "HOST:PORT")]
    pub connect: Option<String>,
}

impl ServerArgs {
    pub fn is_set(&self) -> bool {
        self.server.is_some() || self.connect.is_some()
    }

    pub fn open(&self, cfg: &RunConfig, n_queries: usize, roi_size: u32) -> Result<WirePredictor> {
        let wire = roadnet_core::predict::WireConfig {
            n_queries,
            roi_size,
            ..cfg.wire_config()
        };
        let client = match (&self.server, &self.connect) {
            (Some(cmd), _) => {
                let (program, args) = split_command(cmd)?;
                WirePredictor::spawn(&program, &args, wire)
                    .map_err(|e| wire_error(e, &format!("starting {cmd:?}")))?
            }
            (None, Some(addr)) => WirePredictor::connect(addr.as_str(), wire)
                .map_err(|e| wire_error(e, &format!("connecting to {addr}")))?,
            (None, None) => {
                return Err(invalid("an external predictor needs --server or --connect"))
            }
        };
        Ok(client)
    }
}

fn wire_error(e: PredictorError, what: &str) -> anyhow::Error {
    anyhow::Error::new(e).context(what.to_string())
}
