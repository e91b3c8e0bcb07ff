//! Electrical networks and their deterministic linear algebra.
//!
//! A [`Network`] is a finite connected graph with positive conductances and a
//! distinguished nonempty boundary. Everything here is exact linear algebra on the
//! interior Laplacian `-Δ`, which is factored once when the network is built.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{EnvelopeCholesky, NotPositiveDefinite, SymmetricMatrix};

pub type VertexId = usize;
pub type EdgeId = usize;

pub(crate) const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: VertexId,
    pub b: VertexId,
    pub conductance: f64,
}

impl Edge {
    pub fn new(a: VertexId, b: VertexId, conductance: f64) -> Self {
        Self { a, b, conductance }
    }

    pub fn resistance(&self) -> f64 {
        1.0 / self.conductance
    }

    pub fn other(&self, v: VertexId) -> VertexId {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Named subset of the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryArc {
    pub name: String,
    pub vertices: Vec<VertexId>,
}

/// Lattice geometry attached to networks built by [`crate::lattice::lattice_domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeInfo {
    /// Mesh size `2^-n`.
    pub spacing: f64,
    /// Integer lattice coordinates of every base vertex.
    pub coords: Vec<[i64; 2]>,
    /// Dual faces (lower-left corner, lattice units) where the two arcs meet;
    /// `[start, end]` of interfaces when a split is configured.
    pub marked_faces: Vec<[i64; 2]>,
}

/// Origin of a refined edge: the base edge and the sub-interval `[t0, t1]` it covers,
/// oriented from the base edge's `a` to its `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeOrigin {
    pub base_edge: EdgeId,
    pub t0: f64,
    pub t1: f64,
}

/// Input description for [`build_network`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkSpec {
    pub vertex_count: usize,
    pub positions: Option<Vec<[f64; 2]>>,
    pub edges: Vec<Edge>,
    pub boundary: Vec<VertexId>,
    pub arcs: Vec<BoundaryArc>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("nonpositive conductance {value} on edge ({a}, {b})")]
    NonpositiveConductance { a: VertexId, b: VertexId, value: f64 },
    #[error("duplicate edge ({a}, {b})")]
    DuplicateEdge { a: VertexId, b: VertexId },
    #[error("self-loop at vertex {0}")]
    SelfLoop(VertexId),
    #[error("vertex {0} out of range")]
    VertexOutOfRange(VertexId),
    #[error("disconnected graph: vertex {0} is unreachable from vertex 0")]
    Disconnected(VertexId),
    #[error("empty boundary")]
    EmptyBoundary,
    #[error("empty interior")]
    EmptyInterior,
    #[error("arc {name} contains non-boundary vertex {vertex}")]
    ArcNotBoundary { name: String, vertex: VertexId },
    #[error("positions given for {got} vertices, expected {expected}")]
    PositionCount { expected: usize, got: usize },
    #[error("region too small to contain an interior vertex at level {0}")]
    RegionTooSmall(u32),
    #[error("rescaling requires strictly positive u (u = {value} at vertex {vertex})")]
    RescaleNonPositive { vertex: VertexId, value: f64 },
    #[error("vertex function has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("boundary value at vertex {0} is not finite")]
    NonFiniteBoundaryValue(VertexId),
    #[error("interior Laplacian is singular: {0}")]
    Singular(#[from] NotPositiveDefinite),
}

#[derive(Debug, Clone, Copy)]
pub struct Incidence {
    pub to: VertexId,
    pub edge: EdgeId,
    pub conductance: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    edges: Vec<Edge>,
    adj_start: Vec<usize>,
    adj: Vec<Incidence>,
    c_tot: Vec<f64>,
    is_boundary: Vec<bool>,
    boundary: Vec<VertexId>,
    interior: Vec<VertexId>,
    interior_pos: Vec<usize>,
    positions: Option<Vec<[f64; 2]>>,
    arcs: Vec<BoundaryArc>,
    lattice: Option<Arc<LatticeInfo>>,
    edge_origin: Option<Vec<EdgeOrigin>>,
    factor: EnvelopeCholesky,
}

/// Validates `spec` and builds the network (interior Laplacian factored eagerly).
pub fn build_network(spec: &NetworkSpec) -> Result<Network, NetworkError> {
    let n = spec.vertex_count;
    if let Some(p) = &spec.positions {
        if p.len() != n {
            return Err(NetworkError::PositionCount { expected: n, got: p.len() });
        }
    }
    let mut seen = alloc::collections::BTreeSet::new();
    for e in &spec.edges {
        if e.a >= n {
            return Err(NetworkError::VertexOutOfRange(e.a));
        }
        if e.b >= n {
            return Err(NetworkError::VertexOutOfRange(e.b));
        }
        if e.a == e.b {
            return Err(NetworkError::SelfLoop(e.a));
        }
        if !(e.conductance > 0.0) || !e.conductance.is_finite() {
            return Err(NetworkError::NonpositiveConductance { a: e.a, b: e.b, value: e.conductance });
        }
        let key = (e.a.min(e.b), e.a.max(e.b));
        if !seen.insert(key) {
            return Err(NetworkError::DuplicateEdge { a: key.0, b: key.1 });
        }
    }
    let mut is_boundary = vec![false; n];
    for &v in &spec.boundary {
        if v >= n {
            return Err(NetworkError::VertexOutOfRange(v));
        }
        is_boundary[v] = true;
    }
    for arc in &spec.arcs {
        for &v in &arc.vertices {
            if v >= n || !is_boundary[v] {
                return Err(NetworkError::ArcNotBoundary { name: arc.name.clone(), vertex: v });
            }
        }
    }
    Network::assemble(
        n,
        spec.edges.clone(),
        is_boundary,
        spec.positions.clone(),
        spec.arcs.clone(),
        None,
        None,
    )
}

impl Network {
    pub(crate) fn assemble(
        n: usize,
        edges: Vec<Edge>,
        is_boundary: Vec<bool>,
        positions: Option<Vec<[f64; 2]>>,
        arcs: Vec<BoundaryArc>,
        lattice: Option<Arc<LatticeInfo>>,
        edge_origin: Option<Vec<EdgeOrigin>>,
    ) -> Result<Self, NetworkError> {
        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.a] += 1;
            degree[e.b] += 1;
        }
        let mut adj_start = vec![0usize; n + 1];
        for v in 0..n {
            adj_start[v + 1] = adj_start[v] + degree[v];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![Incidence { to: 0, edge: 0, conductance: 0.0 }; adj_start[n]];
        let mut c_tot = vec![0.0; n];
        for (id, e) in edges.iter().enumerate() {
            adj[fill[e.a]] = Incidence { to: e.b, edge: id, conductance: e.conductance };
            fill[e.a] += 1;
            adj[fill[e.b]] = Incidence { to: e.a, edge: id, conductance: e.conductance };
            fill[e.b] += 1;
            c_tot[e.a] += e.conductance;
            c_tot[e.b] += e.conductance;
        }

        if n > 0 {
            let mut reached = vec![false; n];
            let mut stack = vec![0usize];
            reached[0] = true;
            while let Some(v) = stack.pop() {
                for inc in &adj[adj_start[v]..adj_start[v + 1]] {
                    if !reached[inc.to] {
                        reached[inc.to] = true;
                        stack.push(inc.to);
                    }
                }
            }
            if let Some(v) = reached.iter().position(|r| !r) {
                return Err(NetworkError::Disconnected(v));
            }
        }

        let boundary: Vec<VertexId> = (0..n).filter(|&v| is_boundary[v]).collect();
        let interior: Vec<VertexId> = (0..n).filter(|&v| !is_boundary[v]).collect();
        if boundary.is_empty() {
            return Err(NetworkError::EmptyBoundary);
        }
        if interior.is_empty() {
            return Err(NetworkError::EmptyInterior);
        }
        let mut interior_pos = vec![NONE; n];
        for (i, &v) in interior.iter().enumerate() {
            interior_pos[v] = i;
        }

        let lap = interior_laplacian(&interior, &interior_pos, &adj_start, &adj, &c_tot);
        let factor = EnvelopeCholesky::new(&lap)?;

        Ok(Self {
            n,
            edges,
            adj_start,
            adj,
            c_tot,
            is_boundary,
            boundary,
            interior,
            interior_pos,
            positions,
            arcs,
            lattice,
            edge_origin,
            factor,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e]
    }

    pub fn incident(&self, v: VertexId) -> &[Incidence] {
        &self.adj[self.adj_start[v]..self.adj_start[v + 1]]
    }

    /// Edge between `a` and `b`, if any.
    pub fn find_edge(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        self.incident(a).iter().find(|inc| inc.to == b).map(|inc| inc.edge)
    }

    /// `C_tot(v)`: sum of conductances at `v`.
    pub fn total_conductance(&self, v: VertexId) -> f64 {
        self.c_tot[v]
    }

    pub fn is_boundary(&self, v: VertexId) -> bool {
        self.is_boundary[v]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.is_boundary
    }

    pub fn boundary(&self) -> &[VertexId] {
        &self.boundary
    }

    pub fn interior(&self) -> &[VertexId] {
        &self.interior
    }

    /// Index of `v` in [`Network::interior`], `None` on the boundary.
    pub fn interior_index(&self, v: VertexId) -> Option<usize> {
        match self.interior_pos[v] {
            NONE => None,
            i => Some(i),
        }
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn arcs(&self) -> &[BoundaryArc] {
        &self.arcs
    }

    pub fn arc(&self, name: &str) -> Option<&BoundaryArc> {
        self.arcs.iter().find(|a| a.name == name)
    }

    pub fn lattice(&self) -> Option<&LatticeInfo> {
        self.lattice.as_deref()
    }

    pub(crate) fn lattice_arc(&self) -> Option<Arc<LatticeInfo>> {
        self.lattice.clone()
    }

    /// For refined networks, the base edge each edge subdivides.
    pub fn edge_origin(&self, e: EdgeId) -> Option<EdgeOrigin> {
        self.edge_origin.as_ref().map(|o| o[e])
    }

    /// Cached factor of the interior Laplacian, indexed by interior position.
    pub fn factor(&self) -> &EnvelopeCholesky {
        &self.factor
    }

    /// Interior block of `-Δ`, indexed by interior position.
    pub fn interior_laplacian(&self) -> SymmetricMatrix {
        interior_laplacian(&self.interior, &self.interior_pos, &self.adj_start, &self.adj, &self.c_tot)
    }

    /// Same graph with every vertex flagged in `extra` added to the boundary.
    pub fn with_extra_boundary(&self, extra: &[bool]) -> Result<Network, NetworkError> {
        self.check_len(extra.len())?;
        let is_boundary: Vec<bool> = self.is_boundary.iter().zip(extra).map(|(&b, &e)| b || e).collect();
        Network::assemble(
            self.n,
            self.edges.clone(),
            is_boundary,
            self.positions.clone(),
            self.arcs.clone(),
            self.lattice.clone(),
            self.edge_origin.clone(),
        )
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<(), NetworkError> {
        if len != self.n {
            return Err(NetworkError::LengthMismatch { expected: self.n, got: len });
        }
        Ok(())
    }

    /// `(-Δ f)(x) = Σ_y C(x,y) (f(x) - f(y))` at every vertex.
    pub fn neg_laplacian(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|x| self.incident(x).iter().map(|inc| inc.conductance * (f[x] - f[inc.to])).sum())
            .collect()
    }
}

fn interior_laplacian(
    interior: &[VertexId],
    interior_pos: &[usize],
    adj_start: &[usize],
    adj: &[Incidence],
    c_tot: &[f64],
) -> SymmetricMatrix {
    let mut m = SymmetricMatrix::new(interior.len());
    for (i, &v) in interior.iter().enumerate() {
        m.add_diag(i, c_tot[v]);
        for inc in &adj[adj_start[v]..adj_start[v + 1]] {
            let j = interior_pos[inc.to];
            if j != NONE && j > i {
                m.add_offdiag(i, j, -inc.conductance);
            }
        }
    }
    m
}

/// Green's function `G = (-Δ)⁻¹` with zero boundary conditions, on interior × interior.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenTable {
    interior: Vec<VertexId>,
    interior_pos: Vec<usize>,
    values: Vec<f64>,
}

impl GreenTable {
    pub fn interior(&self) -> &[VertexId] {
        &self.interior
    }

    /// `G(x, y)`; zero when either vertex is on the boundary.
    pub fn get(&self, x: VertexId, y: VertexId) -> f64 {
        let (i, j) = (self.interior_pos[x], self.interior_pos[y]);
        if i == NONE || j == NONE {
            return 0.0;
        }
        self.values[i * self.interior.len() + j]
    }

    /// Entry by interior positions.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.interior.len() + j]
    }

    pub fn dim(&self) -> usize {
        self.interior.len()
    }
}

pub fn green_function(net: &Network) -> GreenTable {
    let k = net.interior.len();
    let mut values = vec![0.0; k * k];
    let mut col = vec![0.0; k];
    for j in 0..k {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        net.factor.solve_in_place(&mut col);
        for i in 0..k {
            values[i * k + j] = col[i];
        }
    }
    // exact symmetry; the two triangles agree to rounding
    for i in 0..k {
        for j in (i + 1)..k {
            let s = 0.5 * (values[i * k + j] + values[j * k + i]);
            values[i * k + j] = s;
            values[j * k + i] = s;
        }
    }
    GreenTable { interior: net.interior.clone(), interior_pos: net.interior_pos.clone(), values }
}

/// Boundary data together with its harmonic extension to every vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFunction {
    values: Vec<f64>,
}

impl BoundaryFunction {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, v: VertexId) -> f64 {
        self.values[v]
    }

    pub fn zero(net: &Network) -> Self {
        Self { values: vec![0.0; net.vertex_count()] }
    }

    pub fn constant(net: &Network, c: f64) -> Self {
        Self { values: vec![c; net.vertex_count()] }
    }

    pub fn min_boundary(&self, net: &Network) -> f64 {
        net.boundary().iter().map(|&v| self.values[v]).fold(f64::INFINITY, f64::min)
    }

    /// Pointwise negation (still harmonic).
    pub fn negated(&self) -> Self {
        Self { values: self.values.iter().map(|v| -v).collect() }
    }
}

/// Solves the Dirichlet problem with data `bv` (only boundary entries are read).
pub fn harmonic_extension(net: &Network, bv: &[f64]) -> Result<BoundaryFunction, NetworkError> {
    net.check_len(bv.len())?;
    for &v in net.boundary() {
        if !bv[v].is_finite() {
            return Err(NetworkError::NonFiniteBoundaryValue(v));
        }
    }
    let mut rhs: Vec<f64> = net
        .interior
        .iter()
        .map(|&x| {
            net.incident(x)
                .iter()
                .filter(|inc| net.is_boundary[inc.to])
                .map(|inc| inc.conductance * bv[inc.to])
                .sum()
        })
        .collect();
    net.factor.solve_in_place(&mut rhs);
    let mut values = vec![0.0; net.n];
    for &v in net.boundary() {
        values[v] = bv[v];
    }
    for (i, &x) in net.interior.iter().enumerate() {
        values[x] = rhs[i];
    }
    Ok(BoundaryFunction { values })
}

/// `Σ_{e={x,y}} C(e) (f(y) - f(x))²`.
pub fn dirichlet_energy(net: &Network, f: &[f64]) -> f64 {
    net.edges.iter().map(|e| e.conductance * (f[e.b] - f[e.a]) * (f[e.b] - f[e.a])).sum()
}

/// Network with conductances `C(x,y) u(x) u(y)`.
pub fn rescale_conductances(net: &Network, u: &BoundaryFunction) -> Result<Network, NetworkError> {
    net.check_len(u.values.len())?;
    if let Some(v) = (0..net.n).find(|&v| !(u.values[v] > 0.0)) {
        return Err(NetworkError::RescaleNonPositive { vertex: v, value: u.values[v] });
    }
    let edges = net
        .edges
        .iter()
        .map(|e| Edge::new(e.a, e.b, e.conductance * u.values[e.a] * u.values[e.b]))
        .collect();
    Network::assemble(
        net.n,
        edges,
        net.is_boundary.clone(),
        net.positions.clone(),
        net.arcs.clone(),
        net.lattice.clone(),
        net.edge_origin.clone(),
    )
}

/// Boundary Poisson kernel `H(x, y)` on boundary × boundary, together with the
/// harmonic measures `h_y(z) = P_z(exit the interior at y)` used to sample excursions.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonKernel {
    boundary: Vec<VertexId>,
    boundary_pos: Vec<usize>,
    values: Vec<f64>,
    /// `harmonic[j][z]`: harmonic measure of `boundary[j]` seen from vertex `z`.
    harmonic: Vec<Vec<f64>>,
}

impl PoissonKernel {
    pub fn boundary(&self) -> &[VertexId] {
        &self.boundary
    }

    /// `H(x, y)` for boundary vertices; zero if either is not on the boundary.
    pub fn get(&self, x: VertexId, y: VertexId) -> f64 {
        let (i, j) = (self.boundary_pos[x], self.boundary_pos[y]);
        if i == NONE || j == NONE {
            return 0.0;
        }
        self.values[i * self.boundary.len() + j]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.boundary.len() + j]
    }

    /// Harmonic measure of boundary vertex `y` (all vertices).
    pub fn harmonic_measure(&self, y: VertexId) -> &[f64] {
        &self.harmonic[self.boundary_pos[y]]
    }
}

/// Closed form `H(x,y) = Σ C(x,x') G(x',y') C(y',y)` over interior neighbours.
pub fn boundary_poisson_kernel(net: &Network) -> PoissonKernel {
    let b = net.boundary.len();
    let k = net.interior.len();
    let mut boundary_pos = vec![NONE; net.n];
    for (j, &y) in net.boundary.iter().enumerate() {
        boundary_pos[y] = j;
    }
    let mut harmonic = Vec::with_capacity(b);
    let mut rhs = vec![0.0; k];
    for &y in &net.boundary {
        rhs.iter_mut().for_each(|r| *r = 0.0);
        for inc in net.incident(y) {
            let i = net.interior_pos[inc.to];
            if i != NONE {
                rhs[i] += inc.conductance;
            }
        }
        net.factor.solve_in_place(&mut rhs);
        let mut h = vec![0.0; net.n];
        h[y] = 1.0;
        for (i, &z) in net.interior.iter().enumerate() {
            h[z] = rhs[i];
        }
        harmonic.push(h);
    }
    let mut values = vec![0.0; b * b];
    for (i, &x) in net.boundary.iter().enumerate() {
        for j in 0..b {
            let h = &harmonic[j];
            values[i * b + j] = net
                .incident(x)
                .iter()
                .filter(|inc| !net.is_boundary[inc.to])
                .map(|inc| inc.conductance * h[inc.to])
                .sum();
        }
    }
    for i in 0..b {
        for j in (i + 1)..b {
            let s = 0.5 * (values[i * b + j] + values[j * b + i]);
            values[i * b + j] = s;
            values[j * b + i] = s;
        }
    }
    PoissonKernel { boundary: net.boundary.clone(), boundary_pos, values, harmonic }
}
