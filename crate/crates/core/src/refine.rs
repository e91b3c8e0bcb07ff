//! Dyadic refinement of a network towards its metric graph.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::network::{Edge, EdgeId, EdgeOrigin, Network, VertexId};

/// A network whose edges are each split into `2^level` series sub-edges.
///
/// Base vertices keep their indices; the `2^level - 1` sub-vertices of base edge `e`
/// follow, in order from `e.a` to `e.b`. Refined edge `e * 2^level + j` covers
/// `[j, j + 1] / 2^level` of base edge `e`.
#[derive(Debug, Clone)]
pub struct RefinedNetwork {
    base: Arc<Network>,
    network: Arc<Network>,
    level: u32,
}

pub fn refine(net: &Arc<Network>, level: u32) -> RefinedNetwork {
    if level == 0 {
        return RefinedNetwork { base: net.clone(), network: net.clone(), level };
    }
    let k = 1usize << level;
    let n = net.vertex_count();
    let total = n + net.edge_count() * (k - 1);
    let mut edges = Vec::with_capacity(net.edge_count() * k);
    let mut origins = Vec::with_capacity(net.edge_count() * k);
    let mut is_boundary = net.boundary_mask().to_vec();
    is_boundary.resize(total, false);
    let mut positions = net.positions().map(|p| {
        let mut p = p.to_vec();
        p.reserve(total - n);
        p
    });
    let kf = k as f64;
    for (e, edge) in net.edges().iter().enumerate() {
        let node = |j: usize| node_of(n, k, edge, e, j);
        for j in 0..k {
            edges.push(Edge::new(node(j), node(j + 1), kf * edge.conductance));
            origins.push(EdgeOrigin { base_edge: e, t0: j as f64 / kf, t1: (j + 1) as f64 / kf });
        }
        if let Some(p) = positions.as_mut() {
            let (pa, pb) = (p[edge.a], p[edge.b]);
            for j in 1..k {
                let t = j as f64 / kf;
                p.push([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
            }
        }
    }
    let network = Network::assemble(
        total,
        edges,
        is_boundary,
        positions,
        net.arcs().to_vec(),
        net.lattice_arc(),
        Some(origins),
    )
    .expect("refining a valid network keeps it valid");
    RefinedNetwork { base: net.clone(), network: Arc::new(network), level }
}

fn node_of(n: usize, k: usize, edge: &Edge, e: EdgeId, j: usize) -> VertexId {
    if j == 0 {
        edge.a
    } else if j == k {
        edge.b
    } else {
        n + e * (k - 1) + (j - 1)
    }
}

impl RefinedNetwork {
    pub fn base(&self) -> &Arc<Network> {
        &self.base
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn segments_per_edge(&self) -> usize {
        1 << self.level
    }

    pub fn is_base_vertex(&self, v: VertexId) -> bool {
        v < self.base.vertex_count()
    }

    /// Vertex at dyadic position `j / 2^level` along base edge `e`.
    pub fn node(&self, e: EdgeId, j: usize) -> VertexId {
        node_of(self.base.vertex_count(), self.segments_per_edge(), self.base.edge(e), e, j)
    }

    /// `(base edge, t)` for a sub-vertex, `None` for base vertices.
    pub fn locate(&self, v: VertexId) -> Option<(EdgeId, f64)> {
        let n = self.base.vertex_count();
        if v < n {
            return None;
        }
        let k = self.segments_per_edge();
        let off = v - n;
        Some((off / (k - 1), ((off % (k - 1)) + 1) as f64 / k as f64))
    }

    /// Linear interpolation of a base vertex function along every base edge.
    pub fn lift(&self, f: &[f64]) -> Vec<f64> {
        let k = self.segments_per_edge();
        let mut out = f.to_vec();
        out.resize(self.network.vertex_count(), 0.0);
        for (e, edge) in self.base.edges().iter().enumerate() {
            for j in 1..k {
                let t = j as f64 / k as f64;
                out[self.node(e, j)] = f[edge.a] + t * (f[edge.b] - f[edge.a]);
            }
        }
        out
    }

    /// Values of a vertex function on `self` restricted to the vertices of `coarser`,
    /// which must refine the same base at a level not above `self.level()`.
    pub fn restrict_to(&self, coarser: &RefinedNetwork, f: &[f64]) -> Vec<f64> {
        assert!(coarser.level <= self.level && Arc::ptr_eq(&coarser.base, &self.base));
        let ratio = 1usize << (self.level - coarser.level);
        let kc = coarser.segments_per_edge();
        let mut out = f[..self.base.vertex_count()].to_vec();
        out.resize(coarser.network.vertex_count(), 0.0);
        for e in 0..self.base.edge_count() {
            for j in 1..kc {
                out[coarser.node(e, j)] = f[self.node(e, j * ratio)];
            }
        }
        out
    }
}
