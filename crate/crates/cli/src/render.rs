//! SVG and PNG overlays of road graphs. Ground truth is drawn in cyan,
//! predictions in orange.

use std::fmt::Write as _;

use roadnet_core::graph::RoadGraph;
use roadnet_core::raster::{rasterize_graph, GridMap};

pub const GT_COLOR: [u8; 3] = [0, 255, 255];
pub const PRED_COLOR: [u8; 3] = [255, 165, 0];
const PANEL_GAP: u32 = 16;

#[derive(Debug, Clone, Copy)]
pub struct Layer<'a> {
    pub graph: &'a RoadGraph,
    pub color: [u8; 3],
    pub opacity: f64,
}

impl<'a> Layer<'a> {
    pub fn gt(graph: &'a RoadGraph) -> Self {
        Self {
            graph,
            color: GT_COLOR,
            opacity: 1.0,
        }
    }

    pub fn pred(graph: &'a RoadGraph) -> Self {
        Self {
            graph,
            color: PRED_COLOR,
            opacity: 1.0,
        }
    }

    pub fn faded(mut self) -> Self {
        self.opacity = 0.35;
        self
    }
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Panels of `width` x `height` laid out left to right. `metadata` is
/// embedded verbatim in a `<metadata>` element.
pub fn svg(width: u32, height: u32, panels: &[Vec<Layer<'_>>], metadata: &str) -> String {
    let n = panels.len().max(1) as u32;
    let total_w = n * width + (n - 1) * PANEL_GAP;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{height}" viewBox="0 0 {total_w} {height}">"#
    );
    let _ = writeln!(
        s,
        "<metadata><![CDATA[{}]]></metadata>",
        metadata.replace("]]>", "]] >")
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#1e1e1e"/>"##);
    for (k, layers) in panels.iter().enumerate() {
        let ox = k as u32 * (width + PANEL_GAP);
        let _ = writeln!(s, r#"<g transform="translate({ox},0)">"#);
        let _ = writeln!(
            s,
            r##"<rect width="{width}" height="{height}" fill="none" stroke="#555555"/>"##
        );
        for layer in layers {
            let color = hex(layer.color);
            let _ = writeln!(
                s,
                r#"<g stroke="{color}" stroke-width="2" stroke-linecap="round" opacity="{}">"#,
                layer.opacity
            );
            for e in 0..layer.graph.edge_count() {
                let (a, b) = layer.graph.edge_endpoints(e);
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                    a.x, a.y, b.x, b.y
                );
            }
            let _ = writeln!(s, "</g>");
            let _ = writeln!(s, r#"<g fill="{color}" opacity="{}">"#, layer.opacity);
            for v in layer.graph.key_vertices() {
                let p = layer.graph.vertices()[v];
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, p.x, p.y);
            }
            let _ = writeln!(s, "</g>");
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Paints the layers over `base` (an RGB tile) or over black.
pub fn overlay_png(width: u32, height: u32, base: Option<&GridMap>, layers: &[Layer<'_>]) -> GridMap {
    let mut out = match base {
        Some(b) if b.channels() == 3 => b.clone(),
        Some(b) => {
            let mut rgb = GridMap::new(width, height, 3);
            for (px, &v) in rgb.data_mut().chunks_mut(3).zip(b.data().iter().step_by(b.channels() as usize)) {
                px.fill(v);
            }
            rgb
        }
        None => GridMap::new(width, height, 3),
    };
    for layer in layers {
        let mask = rasterize_graph(layer.graph, width, height, 3.0);
        let a = layer.opacity;
        for (px, &m) in out.data_mut().chunks_mut(3).zip(mask.data()) {
            if m > 0 {
                for (c, v) in px.iter_mut().enumerate() {
                    *v = (a * layer.color[c] as f64 + (1.0 - a) * *v as f64).round() as u8;
                }
            }
        }
    }
    out
}
