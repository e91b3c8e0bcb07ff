//! Network descriptions: explicit graphs, lattice domains and the bundled examples.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use gfflab_core::lattice::{lattice_domain, Region, VerticalSplit};
use gfflab_core::network::BoundaryArc;
use gfflab_core::{build_network, harmonic_extension, BoundaryFunction, Edge, Network, NetworkSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUNDLED: &[(&str, &str)] = &[
    ("p3", include_str!("../networks/p3.json")),
    ("p4", include_str!("../networks/p4.json")),
    ("triangle", include_str!("../networks/triangle.json")),
    ("k4", include_str!("../networks/k4.json")),
    ("house", include_str!("../networks/house.json")),
    ("star", include_str!("../networks/star.json")),
];

/// Where a network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    Bundled(String),
    File(PathBuf),
    Graph(GraphSpec),
    /// `width × height` unit grid whose outer ring is the boundary.
    Grid { width: usize, height: usize },
    Domain(DomainSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexList {
    Count(usize),
    Positions(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeEntry {
    Unit([usize; 2]),
    Weighted(usize, usize, f64),
}

/// JSON graph: `vertices`, `edges` (pairs, optionally with conductance), `boundary`, `arcs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: VertexList,
    pub edges: Vec<EdgeEntry>,
    pub boundary: Vec<usize>,
    #[serde(default)]
    pub arcs: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Square,
    Disk,
    /// `{-N..N}²`.
    Box(u32),
    Rect([f64; 4]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub shape: Shape,
    /// Mesh `2^-level`.
    #[serde(default)]
    pub level: u32,
    /// Vertical line splitting the boundary into `B1` (right) and `B2` (left).
    #[serde(default)]
    pub split: Option<f64>,
}

impl DomainSpec {
    pub fn region(&self) -> Region {
        match &self.shape {
            Shape::Square => Region::unit_square(),
            Shape::Disk => Region::unit_disk(),
            Shape::Box(n) => Region::centered_box(*n),
            Shape::Rect([x0, y0, x1, y1]) => Region::Rect { x0: *x0, y0: *y0, x1: *x1, y1: *y1 },
        }
    }

    pub fn at_level(&self, level: u32) -> DomainSpec {
        DomainSpec { level, ..self.clone() }
    }

    pub fn build(&self) -> Result<Network> {
        Ok(lattice_domain(&self.region(), self.level, self.split.map(|x| VerticalSplit { x }))?)
    }
}

impl GraphSpec {
    pub fn build(&self) -> Result<Network> {
        let (vertex_count, positions) = match &self.vertices {
            VertexList::Count(n) => (*n, None),
            VertexList::Positions(p) => (p.len(), Some(p.clone())),
        };
        let edges = self
            .edges
            .iter()
            .map(|e| match *e {
                EdgeEntry::Unit([a, b]) => Edge::new(a, b, 1.0),
                EdgeEntry::Weighted(a, b, c) => Edge::new(a, b, c),
            })
            .collect();
        let arcs = self
            .arcs
            .iter()
            .map(|(name, vertices)| BoundaryArc { name: name.clone(), vertices: vertices.clone() })
            .collect();
        let spec = NetworkSpec { vertex_count, positions, edges, boundary: self.boundary.clone(), arcs };
        Ok(build_network(&spec)?)
    }
}

pub fn grid(width: usize, height: usize) -> Result<Network> {
    if width < 3 || height < 3 {
        return Err(Error::invalid(format!("grid must be at least 3×3, got {width}×{height}")));
    }
    let id = |i: usize, j: usize| j * width + i;
    let mut edges = Vec::new();
    let mut boundary = Vec::new();
    let mut positions = Vec::new();
    for j in 0..height {
        for i in 0..width {
            positions.push([i as f64, j as f64]);
            if i == 0 || j == 0 || i + 1 == width || j + 1 == height {
                boundary.push(id(i, j));
            }
            if i + 1 < width {
                edges.push(Edge::new(id(i, j), id(i + 1, j), 1.0));
            }
            if j + 1 < height {
                edges.push(Edge::new(id(i, j), id(i, j + 1), 1.0));
            }
        }
    }
    let spec = NetworkSpec { vertex_count: width * height, positions: Some(positions), edges, boundary, arcs: vec![] };
    Ok(build_network(&spec)?)
}

pub fn parse_graph(text: &str, origin: &str) -> Result<GraphSpec> {
    serde_json::from_str(text).map_err(|e| Error::Parse { path: origin.to_string(), message: e.to_string() })
}

impl NetworkSource {
    pub fn build(&self) -> Result<Arc<Network>> {
        let net = match self {
            NetworkSource::Bundled(name) => {
                let text = BUNDLED
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, t)| *t)
                    .ok_or_else(|| {
                        let known: Vec<_> = BUNDLED.iter().map(|(n, _)| *n).collect();
                        Error::invalid(format!("unknown bundled network `{name}` (known: {})", known.join(", ")))
                    })?;
                parse_graph(text, name)?.build()?
            }
            NetworkSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_graph(&text, &path.display().to_string())?.build()?
            }
            NetworkSource::Graph(g) => g.build()?,
            NetworkSource::Grid { width, height } => grid(*width, *height)?,
            NetworkSource::Domain(d) => d.build()?,
        };
        Ok(Arc::new(net))
    }

    /// Bundled name, or a path to a network file.
    pub fn from_cli(arg: &str) -> Self {
        if BUNDLED.iter().any(|(n, _)| *n == arg) {
            NetworkSource::Bundled(arg.to_string())
        } else {
            NetworkSource::File(PathBuf::from(arg))
        }
    }
}

/// Axis-aligned box of boundary vertices receiving a fixed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectValue {
    /// `[x0, y0, x1, y1]`, inclusive.
    pub rect: [f64; 4],
    pub value: f64,
}

/// Piecewise-constant boundary condition. Later entries override earlier ones:
/// `default`, then `arcs`, then `rects`, then `vertices`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    #[serde(default)]
    pub default: f64,
    #[serde(default)]
    pub arcs: BTreeMap<String, f64>,
    #[serde(default)]
    pub rects: Vec<RectValue>,
    #[serde(default)]
    pub vertices: Vec<(usize, f64)>,
}

impl BoundarySpec {
    pub fn constant(c: f64) -> Self {
        BoundarySpec { default: c, ..Default::default() }
    }

    pub fn shifted(&self, by: f64) -> Self {
        BoundarySpec {
            default: self.default + by,
            arcs: self.arcs.iter().map(|(k, v)| (k.clone(), v + by)).collect(),
            rects: self.rects.iter().map(|r| RectValue { rect: r.rect, value: r.value + by }).collect(),
            vertices: self.vertices.iter().map(|&(v, x)| (v, x + by)).collect(),
        }
    }

    pub fn values(&self, net: &Network) -> Result<Vec<f64>> {
        let mut bv = vec![0.0; net.vertex_count()];
        for &b in net.boundary() {
            bv[b] = self.default;
        }
        for (name, &value) in &self.arcs {
            let arc = net.arc(name).ok_or_else(|| Error::invalid(format!("boundary: no arc named `{name}`")))?;
            for &v in &arc.vertices {
                bv[v] = value;
            }
        }
        if !self.rects.is_empty() {
            let pos = net.positions().ok_or_else(|| Error::invalid("boundary: `rects` need vertex positions"))?;
            for r in &self.rects {
                let [x0, y0, x1, y1] = r.rect;
                for &b in net.boundary() {
                    let [x, y] = pos[b];
                    if x >= x0 && x <= x1 && y >= y0 && y <= y1 {
                        bv[b] = r.value;
                    }
                }
            }
        }
        for &(v, value) in &self.vertices {
            if v >= net.vertex_count() || !net.is_boundary(v) {
                return Err(Error::invalid(format!("boundary: vertex {v} is not a boundary vertex")));
            }
            bv[v] = value;
        }
        Ok(bv)
    }

    pub fn resolve(&self, net: &Network) -> Result<BoundaryFunction> {
        Ok(harmonic_extension(net, &self.values(net)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_networks_build() {
        for (name, _) in BUNDLED {
            let net = NetworkSource::Bundled(name.to_string()).build().unwrap();
            assert!(net.vertex_count() <= 6, "{name}");
        }
        let p3 = NetworkSource::Bundled("p3".into()).build().unwrap();
        assert_eq!(p3.interior(), &[1]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_graph(r#"{"vertices": 2, "edges": [[0,1]], "boundary": [0], "arc": {}}"#, "x").unwrap_err();
        assert!(err.to_string().contains("unknown field `arc`"), "{err}");
    }

    #[test]
    fn sources_round_trip() {
        let s = NetworkSource::Domain(DomainSpec { shape: Shape::Box(4), level: 0, split: None });
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"domain":{"shape":{"box":4},"level":0,"split":null}}"#);
        assert_eq!(serde_json::from_str::<NetworkSource>(&text).unwrap(), s);
        let g: NetworkSource = serde_json::from_str(r#"{"grid":{"width":5,"height":4}}"#).unwrap();
        assert_eq!(g.build().unwrap().interior().len(), 6);
        let sq: NetworkSource = serde_json::from_str(r#"{"domain":{"shape":"square","level":2}}"#).unwrap();
        assert_eq!(sq.build().unwrap().vertex_count(), 25);
    }

    #[test]
    fn boundary_spec_layers() {
        let net = grid(4, 4).unwrap();
        let spec = BoundarySpec {
            default: 1.0,
            arcs: BTreeMap::new(),
            rects: vec![RectValue { rect: [3.0, 0.0, 3.0, 3.0], value: 2.0 }],
            vertices: vec![(0, -1.0)],
        };
        let bv = spec.values(&net).unwrap();
        assert_eq!(bv[0], -1.0);
        assert_eq!(bv[1], 1.0);
        assert_eq!(bv[3], 2.0);
        assert_eq!(bv[5], 0.0);
        assert!(BoundarySpec { vertices: vec![(5, 1.0)], ..Default::default() }.values(&net).is_err());
        let shifted = spec.shifted(0.5).values(&net).unwrap();
        assert_eq!(shifted[0], -0.5);
        assert_eq!(shifted[3], 2.5);
    }
}
