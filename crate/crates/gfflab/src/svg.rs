//! Minimal hand-written SVG renders.

use std::fmt::Write as _;

use gfflab_core::fps::{InterfaceCurve, MetricSubset};
use gfflab_core::Network;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 24.0;

/// Affine map from data coordinates to the drawing square.
struct Frame {
    x0: f64,
    y0: f64,
    scale: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if !lo[0].is_finite() {
            lo = [0.0, 0.0];
            hi = [1.0, 1.0];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        Frame { x0: lo[0], y0: lo[1], scale: (SIZE - 2.0 * MARGIN) / span }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (MARGIN + (p[0] - self.x0) * self.scale, SIZE - MARGIN - (p[1] - self.y0) * self.scale)
    }
}

fn open(timestamp: Option<&str>) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    );
    if let Some(t) = timestamp {
        let _ = writeln!(s, "<metadata>generated {t}</metadata>");
    }
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s
}

fn positions(net: &Network) -> Vec<[f64; 2]> {
    match net.positions() {
        Some(p) => p.to_vec(),
        None => {
            let n = net.vertex_count().max(1) as f64;
            (0..net.vertex_count())
                .map(|v| {
                    let t = std::f64::consts::TAU * v as f64 / n;
                    [t.cos(), t.sin()]
                })
                .collect()
        }
    }
}

/// Network edges in grey, the set (if any) in red, the interface (if any) in blue.
pub fn render_network(
    net: &Network,
    set: Option<&MetricSubset>,
    curve: Option<&InterfaceCurve>,
    timestamp: Option<&str>,
) -> String {
    let pos = positions(net);
    let frame = Frame::fit(pos.iter().copied());
    let mut s = open(timestamp);
    for (e, edge) in net.edges().iter().enumerate() {
        let (x1, y1) = frame.map(pos[edge.a]);
        let (x2, y2) = frame.map(pos[edge.b]);
        let hit = set.is_some_and(|m| m.contains_edge(e));
        let (color, width) = if hit { ("#c0392b", 2.5) } else { ("#bbbbbb", 1.0) };
        let _ = writeln!(
            s,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{color}\" stroke-width=\"{width}\"/>"
        );
    }
    for (v, &p) in pos.iter().enumerate() {
        let (cx, cy) = frame.map(p);
        let fill = if set.is_some_and(|m| m.contains_vertex(v)) {
            "#c0392b"
        } else if net.is_boundary(v) {
            "#333333"
        } else {
            "#888888"
        };
        let _ = writeln!(s, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2\" fill=\"{fill}\"/>");
    }
    if let Some(c) = curve {
        let pts: Vec<String> = c
            .face_centers()
            .into_iter()
            .map(|p| {
                let (x, y) = frame.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#2471a3\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One polyline per series over a shared x axis.
pub fn line_plot(series: &[(String, Vec<[f64; 2]>)], timestamp: Option<&str>) -> String {
    const COLORS: [&str; 6] = ["#2471a3", "#c0392b", "#27ae60", "#8e44ad", "#d68910", "#17202a"];
    let frame = Frame::fit(series.iter().flat_map(|(_, pts)| pts.iter().copied()));
    let mut s = open(timestamp);
    let (ax, ay) = frame.map([frame.x0, frame.y0]);
    let _ = writeln!(
        s,
        "<path d=\"M{MARGIN} {MARGIN} L{ax:.2} {ay:.2} L{:.2} {ay:.2}\" fill=\"none\" stroke=\"black\"/>",
        SIZE - MARGIN
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (x, y) = frame.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"><title>{name}</title></polyline>",
            coords.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"{color}\">{name}</text>",
            MARGIN + 6.0,
            MARGIN + 14.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metadata_only_when_asked() {
        let net = crate::netspec::NetworkSource::Bundled("p3".into()).build().unwrap();
        let plain = render_network(&net, None, None, None);
        assert!(!plain.contains("<metadata>"));
        assert_eq!(plain.matches("<line").count(), 2);
        let stamped = render_network(&net, None, None, Some("2026-01-01T00:00:00Z"));
        assert!(stamped.contains("<metadata>"));
    }

    #[test]
    fn plot_has_one_polyline_per_series() {
        let s = line_plot(&[("a".into(), vec![[0.0, 0.0], [1.0, 1.0]]), ("b".into(), vec![[0.0, 1.0]])], None);
        assert_eq!(s.matches("<polyline").count(), 2);
    }
}
