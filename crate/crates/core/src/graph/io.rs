//! `roadgraph-v1` JSON interchange format.
//!
//! ```json
//! {"format":"roadgraph-v1","width":W,"height":H,"vertices":[[x,y],...],"edges":[[i,j],...]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Point2;

use super::{GraphError, RoadGraph};

pub const GRAPH_FORMAT: &str = "roadgraph-v1";

/// A graph together with the pixel extent of its tile.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFile {
    pub width: u32,
    pub height: u32,
    pub graph: RoadGraph,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    format: String,
    width: u32,
    height: u32,
    vertices: Vec<[f64; 2]>,
    edges: Vec<[usize; 2]>,
}

impl GraphFile {
    pub fn new(width: u32, height: u32, graph: RoadGraph) -> Self {
        Self {
            width,
            height,
            graph,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, GraphError> {
        let raw: RawGraph = serde_json::from_str(text).map_err(|e| GraphError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if raw.format != GRAPH_FORMAT {
            return Err(GraphError::Field {
                field: "format".into(),
                message: format!("expected \"{GRAPH_FORMAT}\", found {:?}", raw.format),
            });
        }
        let vertices: Vec<Point2> = raw.vertices.into_iter().map(Point2::from).collect();
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(GraphError::Field {
                field: format!("vertices[{i}]"),
                message: "coordinate is not finite".into(),
            });
        }
        for (i, &[a, b]) in raw.edges.iter().enumerate() {
            if a >= vertices.len() || b >= vertices.len() {
                return Err(GraphError::Field {
                    field: format!("edges[{i}]"),
                    message: format!(
                        "edge [{a}, {b}] references a vertex outside 0..{}",
                        vertices.len()
                    ),
                });
            }
        }
        let graph = RoadGraph::new(vertices, raw.edges)?;
        Ok(Self {
            width: raw.width,
            height: raw.height,
            graph,
        })
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawGraph {
            format: GRAPH_FORMAT.to_string(),
            width: self.width,
            height: self.height,
            vertices: self.graph.vertices().iter().map(|&p| p.into()).collect(),
            edges: self.graph.edges().to_vec(),
        };
        serde_json::to_string(&raw).expect("graph serialization cannot fail")
    }
}

pub fn save_graph(path: impl AsRef<Path>, file: &GraphFile) -> Result<(), GraphError> {
    let mut text = file.to_json_string();
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<GraphFile, GraphError> {
    let text = fs::read_to_string(path)?;
    GraphFile::from_json_str(&text)
}
