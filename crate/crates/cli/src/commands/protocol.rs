use std::io;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Child, ExitCode};

use anyhow::{Context, Result};
use tracing::{info, warn};

use roadnet_core::graph::GraphFile;
use roadnet_core::predict::wire::{check_conformance, serve as serve_stream, spawn_connection, Connection, Hello, ServerRequest};
use roadnet_core::predict::{Candidate, OracleConfig, OraclePredictor, PredictorOutput};

use super::{read_graph, split_command, ServerArgs};
use crate::config::RunConfig;
use crate::invalid;
use crate::provenance::{write_json, Provenance};

#[derive(Debug, clap::Args)]
pub struct CheckArgs {
    #[command(flatten)]
    server: ServerArgs,
    /// Number of sequential requests sent.
    #[arg(long, default_value_t = 3)]
    requests: usize,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(serde::Serialize)]
struct CheckReport<'a> {
    passed: bool,
    #[serde(flatten)]
    report: &'a roadnet_core::predict::wire::ConformanceReport,
    provenance: &'a Provenance,
}

pub fn check(a: CheckArgs, cfg: &RunConfig) -> Result<ExitCode> {
    if !a.server.is_set() {
        return Err(invalid("check-protocol needs --server or --connect"));
    }
    if a.requests == 0 {
        return Err(invalid("--requests must be at least 1"));
    }
    let mut children: Vec<Child> = Vec::new();
    let report = {
        let connect = || -> io::Result<Connection> {
            match (&a.server.server, &a.server.connect) {
                (Some(cmd), _) => {
                    let (program, args) = split_command(cmd).map_err(io::Error::other)?;
                    let (conn, child) = spawn_connection(&program, &args)?;
                    children.push(child);
                    Ok(conn)
                }
                (None, Some(addr)) => Connection::tcp(TcpStream::connect(addr.as_str())?),
                (None, None) => unreachable!("checked above"),
            }
        };
        check_conformance(connect, cfg.wire_config(), a.requests)
    };
    for mut c in children {
        let _ = c.kill();
        let _ = c.wait();
    }
    let prov = Provenance::new("check-protocol", cfg);
    let out = CheckReport {
        passed: report.passed(),
        report: &report,
        provenance: &prov,
    };
    if let Some(p) = &a.out {
        write_json(p, &out)?;
    }
    for c in &report.checks {
        out!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    if report.passed() {
        out!("conformant");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: server is not conformant");
        Ok(ExitCode::from(3))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ServeMode {
    /// Ground-truth oracle over --graph.
    Oracle,
    /// Answers every request with the --candidates list.
    Echo,
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    #[arg(long, value_enum, default_value_t = ServeMode::Oracle)]
    mode: ServeMode,
    /// Ground truth for the oracle mode.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Fixed candidates for the echo mode, as `dx,dy,p;dx,dy,p;...`.
    #[arg(long, default_value = "")]
    candidates: String,
    /// Exit without answering once this many requests have been answered.
    #[arg(long)]
    die_after: Option<usize>,
    /// Listen on TCP instead of standard streams; connections are served one
    /// at a time, each with a fresh oracle.
    #[arg(long, value_name = "HOST:PORT")]
    listen: Option<String>,
}

fn parse_candidates(s: &str) -> Result<Vec<Candidate>> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v: Vec<f64> = t
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| invalid(format!("candidate {t:?}: {e}")))?;
            match v[..] {
                [dx, dy, p] if (0.0..=1.0).contains(&p) => Ok(Candidate::new(dx, dy, p)),
                _ => Err(invalid(format!("candidate {t:?} must be dx,dy,p with p in [0, 1]"))),
            }
        })
        .collect()
}

/// Request handler for one connection.
struct Handler<'a> {
    mode: ServeMode,
    graph: Option<&'a GraphFile>,
    step_length: f64,
    candidates: &'a [Candidate],
    oracle: Option<OraclePredictor>,
}

impl Handler<'_> {
    fn answer(&mut self, hello: &Hello, req: &ServerRequest) -> Result<PredictorOutput, String> {
        let n = hello.n_queries;
        match self.mode {
            ServeMode::Echo => {
                if self.candidates.len() > n {
                    return Err(format!("{} echo candidates exceed {n} slots", self.candidates.len()));
                }
                let mut out = PredictorOutput::empty(n);
                out.candidates[..self.candidates.len()].clone_from_slice(self.candidates);
                Ok(out)
            }
            ServeMode::Oracle => {
                if self.oracle.is_none() {
                    let g = self.graph.expect("oracle mode has a graph");
                    let cfg = OracleConfig {
                        step_length: self.step_length,
                        roi_size: hello.roi_size,
                        n_queries: n,
                        with_masks: true,
                        reseed_unvisited: false,
                    };
                    let oracle = OraclePredictor::new(&g.graph, cfg).map_err(|e| e.to_string())?;
                    self.oracle = Some(oracle.with_label_maps(g.width, g.height));
                }
                let oracle = self.oracle.as_mut().expect("just built");
                let targets = oracle.next_vertices(req.center);
                Ok(oracle.output_for(req.center, &req.window, &targets))
            }
        }
    }
}

pub fn serve(a: ServeArgs, cfg: &RunConfig) -> Result<ExitCode> {
    let candidates = parse_candidates(&a.candidates)?;
    let graph = match (a.mode, &a.graph) {
        (ServeMode::Oracle, Some(p)) => Some(read_graph(p)?),
        (ServeMode::Oracle, None) => return Err(invalid("--mode oracle needs --graph")),
        (ServeMode::Echo, _) => None,
    };
    let mut answered = 0usize;
    let mut session = |reader: Box<dyn io::Read>, writer: Box<dyn io::Write>| -> io::Result<usize> {
        let mut h = Handler {
            mode: a.mode,
            graph: graph.as_ref(),
            step_length: cfg.engine.step_length,
            candidates: &candidates,
            oracle: None,
        };
        serve_stream(reader, writer, |hello, req| {
            if a.die_after.is_some_and(|n| answered >= n) {
                warn!(answered, "exiting as requested by --die-after");
                std::process::exit(0);
            }
            answered += 1;
            h.answer(hello, req)
        })
    };
    match &a.listen {
        None => {
            let served = session(Box::new(io::stdin()), Box::new(io::stdout()))?;
            info!(served, "client hung up");
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr.as_str()).with_context(|| format!("binding {addr}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                stream.set_nodelay(true)?;
                let reader = stream.try_clone()?;
                match session(Box::new(reader), Box::new(stream)) {
                    Ok(served) => info!(served, "connection closed"),
                    Err(e) => warn!(error = %e, "connection failed"),
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
