//! First passage sets, their complements and lattice interfaces.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::bridge::{bridge_min_above, BridgeQuery};
use crate::clusters::DisjointSets;
use crate::gff::{EdgeMark, FieldSample};
use crate::lattice::{ARC_LEFT, ARC_RIGHT};
use crate::math;
use crate::network::{harmonic_extension, BoundaryFunction, EdgeId, Network, NetworkError, VertexId, NONE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FpsError {
    #[error("set does not contain boundary vertex {0}")]
    MissingBoundary(VertexId),
    #[error("network has no lattice geometry")]
    NoLattice,
    #[error("network has no boundary arc named {0}")]
    MissingArc(String),
    #[error("network has no marked squares for the interface endpoints")]
    NoMarkedSquares,
    #[error("no dual path between the marked squares ({explored} faces explored, {dual_edges} dual edges)")]
    NoInterface { explored: usize, dual_edges: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Closed subset of the metric graph at working resolution: included vertices and
/// fully included edges.
#[derive(Debug, Clone)]
pub struct MetricSubset {
    network: Arc<Network>,
    vertices: Vec<bool>,
    edges: Vec<bool>,
}

impl PartialEq for MetricSubset {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.network, &other.network) && self.vertices == other.vertices && self.edges == other.edges
    }
}

impl MetricSubset {
    /// Endpoints of included edges are added so the set is closed.
    pub fn new(network: Arc<Network>, mut vertices: Vec<bool>, edges: Vec<bool>) -> Self {
        assert_eq!(vertices.len(), network.vertex_count());
        assert_eq!(edges.len(), network.edge_count());
        for (e, _) in edges.iter().enumerate().filter(|(_, &inc)| inc) {
            let edge = network.edge(e);
            vertices[edge.a] = true;
            vertices[edge.b] = true;
        }
        Self { network, vertices, edges }
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    pub fn vertices(&self) -> &[bool] {
        &self.vertices
    }

    pub fn edges(&self) -> &[bool] {
        &self.edges
    }

    pub fn contains_vertex(&self, v: VertexId) -> bool {
        self.vertices[v]
    }

    pub fn contains_edge(&self, e: EdgeId) -> bool {
        self.edges[e]
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &MetricSubset) -> bool {
        self.vertices.iter().zip(&other.vertices).all(|(&a, &b)| !a || b)
            && self.edges.iter().zip(&other.edges).all(|(&a, &b)| !a || b)
    }

    /// Component label per vertex (`None` outside the set), connecting through
    /// included edges.
    pub fn components(&self) -> (Vec<Option<usize>>, usize) {
        let n = self.network.vertex_count();
        let mut sets = DisjointSets::new(n);
        for (e, edge) in self.network.edges().iter().enumerate() {
            if self.edges[e] {
                sets.union(edge.a, edge.b);
            }
        }
        let mut label = vec![None; n];
        let mut ids = vec![NONE; n];
        let mut count = 0;
        for v in 0..n {
            if self.vertices[v] {
                let r = sets.find(v);
                if ids[r] == NONE {
                    ids[r] = count;
                    count += 1;
                }
                label[v] = Some(ids[r]);
            }
        }
        (label, count)
    }

    /// Whether every connected component meets the boundary.
    pub fn components_touch_boundary(&self) -> bool {
        let (label, count) = self.components();
        let mut touched = vec![false; count];
        for &b in self.network.boundary() {
            if let Some(c) = label[b] {
                touched[c] = true;
            }
        }
        touched.iter().all(|&t| t)
    }

    /// Positions of included vertices.
    pub fn points(&self) -> Vec<[f64; 2]> {
        let pos = self.network.positions().unwrap_or(&[]);
        (0..self.vertices.len()).filter(|&v| self.vertices[v]).filter_map(|v| pos.get(v).copied()).collect()
    }
}

fn edge_passable(field: &FieldSample, e: EdgeId, threshold: f64, exact_edges: bool) -> bool {
    let net = field.network();
    let edge = net.edge(e);
    let (fa, fb) = (field.get(edge.a), field.get(edge.b));
    match field.edge_marks().map(|m| m[e]) {
        Some(EdgeMark::Vanishing) if threshold >= 0.0 => return false,
        Some(EdgeMark::Covered) if threshold <= 0.0 && fa >= 0.0 && fb >= 0.0 => return true,
        _ => {}
    }
    if fa < threshold || fb < threshold {
        return false;
    }
    if !exact_edges {
        return true;
    }
    let q = BridgeQuery { alpha: fa, beta: fb, resistance: edge.resistance(), threshold };
    field.edge_uniforms()[e] < bridge_min_above(&q)
}

/// Points joined to the boundary by a path on which the field stays `≥ -a`.
///
/// Flooding starts from every boundary vertex. With `exact_edges`, an edge whose
/// endpoints are both above the level is crossed only if the field's per-edge uniform
/// falls below the bridge-minimum probability, so repeated queries at different levels
/// are coupled and monotone.
pub fn first_passage_set(field: &FieldSample, a: f64, exact_edges: bool) -> MetricSubset {
    let net = field.network();
    let threshold = -a;
    let passable: Vec<bool> = (0..net.edge_count()).map(|e| edge_passable(field, e, threshold, exact_edges)).collect();
    let mut reached = net.boundary_mask().to_vec();
    let mut queue: VecDeque<VertexId> = net.boundary().iter().copied().collect();
    while let Some(x) = queue.pop_front() {
        for inc in net.incident(x) {
            if passable[inc.edge] && !reached[inc.to] {
                reached[inc.to] = true;
                queue.push_back(inc.to);
            }
        }
    }
    let edges = (0..net.edge_count()).map(|e| passable[e] && reached[net.edge(e).a]).collect();
    MetricSubset::new(net.clone(), reached, edges)
}

/// Points joined to the boundary by a path on which the field stays `≤ b`.
pub fn upper_fps(field: &FieldSample, b: f64, exact_edges: bool) -> MetricSubset {
    first_passage_set(&field.negated(), b, exact_edges)
}

/// Harmonic function off the set with data `-a - u` on its non-boundary vertices and
/// `0` on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementHarmonic {
    pub values: Vec<f64>,
    /// Vertices off the set, where the Dirichlet problem was solved.
    pub free: Vec<bool>,
}

pub fn complement_harmonic(
    set: &MetricSubset,
    u: &BoundaryFunction,
    a: f64,
) -> Result<ComplementHarmonic, FpsError> {
    let net = set.network();
    if let Some(&b) = net.boundary().iter().find(|&&b| !set.vertices[b]) {
        return Err(FpsError::MissingBoundary(b));
    }
    let n = net.vertex_count();
    let data: Vec<f64> =
        (0..n).map(|v| if net.is_boundary(v) || !set.vertices[v] { 0.0 } else { -a - u.get(v) }).collect();
    let free: Vec<bool> = set.vertices.iter().map(|&b| !b).collect();
    if !free.iter().any(|&f| f) {
        return Ok(ComplementHarmonic { values: data, free });
    }
    let sub = net.with_extra_boundary(&set.vertices)?;
    let h = harmonic_extension(&sub, &data)?;
    Ok(ComplementHarmonic { values: h.values().to_vec(), free })
}

/// Dual-lattice path separating the part of the set attached to `B1` from the part of
/// the complement attached to `B2`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceCurve {
    /// Faces (lower-left corners, lattice units) from the start square to the end square.
    pub faces: Vec<[i64; 2]>,
    /// Midpoints of the crossed (possibly refined) edges.
    pub crossings: Vec<[f64; 2]>,
    /// Dual edges of the boundary not used by `faces`.
    pub extra_dual_edges: usize,
    pub spacing: f64,
}

impl InterfaceCurve {
    pub fn dual_edges(&self) -> impl Iterator<Item = ([i64; 2], [i64; 2])> + '_ {
        self.faces.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn face_centers(&self) -> Vec<[f64; 2]> {
        self.faces.iter().map(|f| [(f[0] as f64 + 0.5) * self.spacing, (f[1] as f64 + 0.5) * self.spacing]).collect()
    }

    /// Length in lattice steps.
    pub fn len(&self) -> usize {
        self.faces.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.len() <= 1
    }

    /// Base-lattice edges crossed by the dual path, in order. Faces are matched to
    /// `net`'s lattice coordinates; pairs whose shared edge is not in `net` are skipped.
    pub fn crossed_edges(&self, net: &Network) -> Result<Vec<EdgeId>, FpsError> {
        let info = net.lattice().ok_or(FpsError::NoLattice)?;
        let index: BTreeMap<[i64; 2], VertexId> =
            info.coords.iter().enumerate().map(|(v, &c)| (c, v)).collect();
        let mut out = Vec::with_capacity(self.len());
        for (f, g) in self.dual_edges() {
            let (p, q) = if (f[0], f[1]) <= (g[0], g[1]) { (f, g) } else { (g, f) };
            let (c, d) = if q[0] == p[0] + 1 {
                ([p[0] + 1, p[1]], [p[0] + 1, p[1] + 1])
            } else {
                ([p[0], p[1] + 1], [p[0] + 1, p[1] + 1])
            };
            if let (Some(&a), Some(&b)) = (index.get(&c), index.get(&d)) {
                if let Some(e) = net.find_edge(a, b) {
                    out.push(e);
                }
            }
        }
        Ok(out)
    }

    pub fn is_simple(&self) -> bool {
        let set: BTreeSet<[i64; 2]> = self.faces.iter().copied().collect();
        set.len() == self.faces.len()
            && self.dual_edges().all(|(p, q)| (p[0] - q[0]).abs() + (p[1] - q[1]).abs() == 1)
    }
}

fn dual_of(c: [i64; 2], d: [i64; 2]) -> ([i64; 2], [i64; 2]) {
    let (p, q) = if (c[0], c[1]) <= (d[0], d[1]) { (c, d) } else { (d, c) };
    if q[0] == p[0] + 1 {
        ([p[0], p[1]], [p[0], p[1] - 1])
    } else {
        ([p[0], p[1]], [p[0] - 1, p[1]])
    }
}

/// Traces `∂₂` of a first passage set on a split lattice domain.
///
/// `A₁` is the union of the set's components (through included edges) that meet `B1`;
/// an edge is on the interface when it joins `A₁` to a vertex of `B2` or to a
/// complement component adjacent to `B2`. Interface edges map to dual edges of the base
/// lattice; a breadth-first search between the two marked squares returns a shortest,
/// hence simple, dual path.
pub fn extract_interface(set: &MetricSubset) -> Result<InterfaceCurve, FpsError> {
    let net = set.network();
    let info = net.lattice().ok_or(FpsError::NoLattice)?;
    if info.marked_faces.len() < 2 {
        return Err(FpsError::NoMarkedSquares);
    }
    let b1 = &net.arc(ARC_RIGHT).ok_or_else(|| FpsError::MissingArc(ARC_RIGHT.into()))?.vertices;
    let b2 = &net.arc(ARC_LEFT).ok_or_else(|| FpsError::MissingArc(ARC_LEFT.into()))?.vertices;
    let n = net.vertex_count();
    let mut in_b2 = vec![false; n];
    for &v in b2 {
        in_b2[v] = true;
    }

    let (label, count) = set.components();
    let mut attached = vec![false; count];
    for &v in b1 {
        if let Some(c) = label[v] {
            attached[c] = true;
        }
    }
    let a1: Vec<bool> = (0..n).map(|v| label[v].is_some_and(|c| attached[c])).collect();

    let mut comp = DisjointSets::new(n);
    for edge in net.edges() {
        if !set.vertices[edge.a] && !set.vertices[edge.b] {
            comp.union(edge.a, edge.b);
        }
    }
    let mut b2_connected = vec![false; n];
    for edge in net.edges() {
        for (x, y) in [(edge.a, edge.b), (edge.b, edge.a)] {
            if !set.vertices[x] && in_b2[y] {
                let r = comp.find(x);
                b2_connected[r] = true;
            }
        }
    }

    let pos = net.positions().unwrap_or(&[]);
    let mut adjacency: BTreeMap<[i64; 2], Vec<[i64; 2]>> = BTreeMap::new();
    let mut dual_set = BTreeSet::new();
    let mut crossings = Vec::new();
    for (e, edge) in net.edges().iter().enumerate() {
        let hit = |x: VertexId, y: VertexId, comp: &mut DisjointSets| {
            a1[x] && !a1[y] && (in_b2[y] || (!set.vertices[y] && b2_connected[comp.find(y)]))
        };
        if !(hit(edge.a, edge.b, &mut comp) || hit(edge.b, edge.a, &mut comp)) {
            continue;
        }
        if let (Some(pa), Some(pb)) = (pos.get(edge.a), pos.get(edge.b)) {
            crossings.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        }
        let be = base_endpoints(net, e);
        let (p, q) = dual_of(info.coords[be.0], info.coords[be.1]);
        if dual_set.insert((p, q)) {
            adjacency.entry(p).or_default().push(q);
            adjacency.entry(q).or_default().push(p);
        }
    }

    let (start, goal) = (info.marked_faces[0], info.marked_faces[1]);
    let mut prev: BTreeMap<[i64; 2], [i64; 2]> = BTreeMap::new();
    let mut queue = VecDeque::from([start]);
    prev.insert(start, start);
    while let Some(f) = queue.pop_front() {
        if f == goal {
            break;
        }
        if let Some(next) = adjacency.get(&f) {
            for &g in next {
                if let alloc::collections::btree_map::Entry::Vacant(slot) = prev.entry(g) {
                    slot.insert(f);
                    queue.push_back(g);
                }
            }
        }
    }
    if !prev.contains_key(&goal) {
        return Err(FpsError::NoInterface { explored: prev.len(), dual_edges: dual_set.len() });
    }
    let mut faces = vec![goal];
    while *faces.last().unwrap() != start {
        faces.push(prev[faces.last().unwrap()]);
    }
    faces.reverse();
    let extra_dual_edges = dual_set.len() - (faces.len() - 1);
    Ok(InterfaceCurve { faces, crossings, extra_dual_edges, spacing: info.spacing })
}

/// Base-lattice endpoints of the base edge underlying edge `e`.
fn base_endpoints(net: &Network, e: EdgeId) -> (VertexId, VertexId) {
    match net.edge_origin(e) {
        None => (net.edge(e).a, net.edge(e).b),
        Some(o) => {
            let k = math::round(1.0 / (o.t1 - o.t0)) as usize;
            (net.edge(o.base_edge * k).a, net.edge(o.base_edge * k + k - 1).b)
        }
    }
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let directed = |p: &[[f64; 2]], q: &[[f64; 2]]| {
        p.iter()
            .map(|x| {
                q.iter()
                    .map(|y| {
                        let (dx, dy) = (x[0] - y[0], x[1] - y[1]);
                        dx * dx + dy * dy
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    math::sqrt(directed(a, b).max(directed(b, a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::sample_discrete_gff;
    use crate::lattice::{lattice_domain, Region, VerticalSplit};
    use crate::network::fixtures::{grid, p3};
    use crate::rng::{stream, Purpose};

    fn fixed_field(net: &Arc<Network>, values: Vec<f64>, u: BoundaryFunction, uniform: f64) -> FieldSample {
        FieldSample::from_parts(net.clone(), values, u, vec![uniform; net.edge_count()], None)
    }

    #[test]
    fn trivial_floods() {
        let net = Arc::new(grid(4, 4));
        let u = BoundaryFunction::constant(&net, 1.0);
        let f = fixed_field(&net, vec![1.0; 16], u.clone(), 0.0);
        let all = first_passage_set(&f, 0.0, true);
        assert!(all.vertices().iter().all(|&b| b) && all.edges().iter().all(|&b| b));
        let none = first_passage_set(&f, -1e9, true);
        assert_eq!(none.vertices(), net.boundary_mask());
        assert!(none.edges().iter().all(|&b| !b));
        let up = upper_fps(&f, 0.5, false);
        assert_eq!(up.vertices(), net.boundary_mask());
    }

    #[test]
    fn p3_level_zero_is_empty_inside() {
        let net = Arc::new(p3());
        let u = BoundaryFunction::zero(&net);
        for r in 0..2000 {
            let f = sample_discrete_gff(&net, &u, &mut stream(3, r, Purpose::Field));
            assert!(!first_passage_set(&f, 0.0, true).contains_vertex(1));
        }
    }

    #[test]
    fn monotone_in_level_and_components_touch_boundary() {
        let net = Arc::new(grid(7, 7));
        let u = BoundaryFunction::constant(&net, 0.2);
        let levels = [-1.0, -0.5, 0.0, 0.5, 1.0];
        for r in 0..300 {
            let f = sample_discrete_gff(&net, &u, &mut stream(4, r, Purpose::Field));
            let sets: Vec<MetricSubset> = levels.iter().map(|&a| first_passage_set(&f, a, true)).collect();
            for w in sets.windows(2) {
                assert!(w[0].is_subset_of(&w[1]));
            }
            for s in &sets {
                assert!(s.components_touch_boundary());
            }
            assert_eq!(upper_fps(&f, 0.3, true), first_passage_set(&f.negated(), 0.3, true));
        }
    }

    #[test]
    fn complement_harmonic_bounds() {
        let net = Arc::new(grid(9, 9));
        let u = BoundaryFunction::zero(&net);
        for r in 0..50 {
            let f = sample_discrete_gff(&net, &u, &mut stream(5, r, Purpose::Field));
            let s = first_passage_set(&f, 0.3, true);
            let h = complement_harmonic(&s, &u, 0.3).unwrap();
            for v in 0..81 {
                if h.free[v] {
                    assert!(h.values[v] >= -0.3 - 1e-12 && h.values[v] <= 1e-12);
                }
            }
        }
        let whole = MetricSubset::new(net.clone(), vec![true; 81], vec![true; net.edge_count()]);
        assert!(!complement_harmonic(&whole, &u, 0.3).unwrap().free.iter().any(|&b| b));
        let missing = MetricSubset::new(net.clone(), vec![false; 81], vec![false; net.edge_count()]);
        assert_eq!(complement_harmonic(&missing, &u, 0.3).unwrap_err(), FpsError::MissingBoundary(0));
    }

    #[test]
    fn straight_column_interface() {
        let lambda = 0.626_657_068_7;
        let net = Arc::new(lattice_domain(&Region::unit_square(), 3, Some(VerticalSplit { x: 0.5 })).unwrap());
        let info = net.lattice().unwrap().clone();
        let mut bv = vec![0.0; net.vertex_count()];
        for &v in &net.arc(ARC_RIGHT).unwrap().vertices {
            bv[v] = lambda;
        }
        for &v in &net.arc(ARC_LEFT).unwrap().vertices {
            bv[v] = -lambda;
        }
        let u = harmonic_extension(&net, &bv).unwrap();
        let values: Vec<f64> = (0..net.vertex_count())
            .map(|v| if info.coords[v][0] == 4 { -2.0 } else { 1.0 })
            .collect();
        let f = fixed_field(&net, values, u, 0.0);
        let s = first_passage_set(&f, lambda, true);
        let curve = extract_interface(&s).unwrap();
        assert!(curve.is_simple());
        assert_eq!(curve.faces[0], info.marked_faces[0]);
        assert_eq!(*curve.faces.last().unwrap(), info.marked_faces[1]);
        assert!(curve.faces.iter().all(|f| f[0] == 3 || f[0] == 4));
        assert!(curve.faces[1..curve.faces.len() - 1].iter().filter(|f| f[0] == 4).count() >= 7);

        let cut = curve.crossed_edges(&net).unwrap();
        assert!(cut.len() + 2 >= curve.len());
        let mut seen = vec![false; net.vertex_count()];
        let mut stack = net.arc(ARC_RIGHT).unwrap().vertices.clone();
        for &v in &stack {
            seen[v] = true;
        }
        while let Some(x) = stack.pop() {
            for inc in net.incident(x) {
                if cut.contains(&inc.edge) || seen[inc.to] || (net.is_boundary(x) && net.is_boundary(inc.to)) {
                    continue;
                }
                seen[inc.to] = true;
                if !net.is_boundary(inc.to) {
                    stack.push(inc.to);
                }
            }
        }
        assert!(net.arc(ARC_LEFT).unwrap().vertices.iter().all(|&v| !seen[v]));
    }

    #[test]
    fn hausdorff_basics() {
        assert_eq!(hausdorff(&[[0.0, 0.0]], &[[0.0, 0.0]]), 0.0);
        assert_eq!(hausdorff(&[[0.0, 0.0]], &[[3.0, 4.0], [0.0, 0.0]]), 5.0);
    }
}
