//! Trajectory clusters and the signed field they carry.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::fps::MetricSubset;
use crate::gff::{EdgeMark, FieldSample};
use crate::math;
use crate::network::{BoundaryFunction, EdgeId, Network, VertexId, NONE};
use crate::soups::{occupation_field, SoupSample, TrajectoryKind};

fn describe_intensity(alpha: Option<f64>) -> alloc::string::String {
    match alpha {
        Some(a) => alloc::format!("α = {a}"),
        None => "a soup without intensity".into(),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("soups live on different networks")]
    NetworkMismatch,
    #[error("signed isomorphism stated only at α = 1/2 (got {})", describe_intensity(*.0))]
    WrongIntensity(Option<f64>),
    #[error("excursion boundary value is negative at vertex {vertex} (value {value})")]
    NegativeBoundary { vertex: VertexId, value: f64 },
}

/// Plain union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            core::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Indices into the loop soup's trajectories, then the excursion process's
    /// (offset by the loop soup's trajectory count).
    pub trajectories: Vec<usize>,
    pub vertices: Vec<VertexId>,
    pub edges: Vec<EdgeId>,
    pub contains_excursion: bool,
}

/// Clusters of a loop soup together with an excursion process.
#[derive(Debug, Clone)]
pub struct ClusterPartition {
    network: Arc<Network>,
    clusters: Vec<Cluster>,
    vertex_cluster: Vec<usize>,
    trajectory_cluster: Vec<usize>,
}

impl ClusterPartition {
    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Cluster containing vertex `v`, if any trajectory or trivial loop reaches it.
    pub fn cluster_of_vertex(&self, v: VertexId) -> Option<usize> {
        match self.vertex_cluster[v] {
            NONE => None,
            c => Some(c),
        }
    }

    pub fn cluster_of_trajectory(&self, t: usize) -> usize {
        self.trajectory_cluster[t]
    }
}

struct Builder<'a> {
    net: &'a Network,
    sets: DisjointSets,
    present: Vec<bool>,
    covered: Vec<bool>,
    traj_root: Vec<VertexId>,
    traj_is_exc: Vec<bool>,
}

impl<'a> Builder<'a> {
    fn new(net: &'a Network, soups: [&SoupSample; 2]) -> Self {
        let n = net.vertex_count();
        let mut b = Builder {
            net,
            sets: DisjointSets::new(n),
            present: vec![false; n],
            covered: vec![false; net.edge_count()],
            traj_root: Vec::new(),
            traj_is_exc: Vec::new(),
        };
        for soup in soups {
            for t in &soup.trajectories {
                b.present[t.vertices[0]] = true;
                for (x, y) in t.steps() {
                    b.present[y] = true;
                    b.sets.union(x, y);
                    if let Some(e) = net.find_edge(x, y) {
                        b.covered[e] = true;
                    }
                }
                b.traj_root.push(t.vertices[0]);
                b.traj_is_exc.push(t.kind == TrajectoryKind::Excursion);
            }
            for &x in net.interior() {
                if soup.trivial_field[x] > 0.0 {
                    b.present[x] = true;
                }
            }
        }
        b
    }

    fn finish(mut self, network: Arc<Network>, boundary_flags: bool) -> ClusterPartition {
        let n = self.net.vertex_count();
        let mut root_cluster = vec![NONE; n];
        let mut vertex_cluster = vec![NONE; n];
        let mut clusters: Vec<Cluster> = Vec::new();
        for v in 0..n {
            if !self.present[v] {
                continue;
            }
            let r = self.sets.find(v);
            if root_cluster[r] == NONE {
                root_cluster[r] = clusters.len();
                clusters.push(Cluster { trajectories: Vec::new(), vertices: Vec::new(), edges: Vec::new(), contains_excursion: false });
            }
            let c = root_cluster[r];
            vertex_cluster[v] = c;
            clusters[c].vertices.push(v);
            if boundary_flags && self.net.is_boundary(v) {
                clusters[c].contains_excursion = true;
            }
        }
        let mut trajectory_cluster = Vec::with_capacity(self.traj_root.len());
        for (t, &v) in self.traj_root.iter().enumerate() {
            let c = vertex_cluster[v];
            clusters[c].trajectories.push(t);
            clusters[c].contains_excursion |= self.traj_is_exc[t];
            trajectory_cluster.push(c);
        }
        for (e, edge) in self.net.edges().iter().enumerate() {
            if self.covered[e] {
                clusters[vertex_cluster[edge.a]].edges.push(e);
            }
        }
        ClusterPartition { network, clusters, vertex_cluster, trajectory_cluster }
    }
}

/// Clusters under the shared-vertex rule: trajectories meeting at a vertex (or sharing
/// a traversed edge) are linked. Vertices reached only by the trivial field form
/// singletons.
pub fn build_clusters(soup: &SoupSample, exc: &SoupSample) -> Result<ClusterPartition, ClusterError> {
    if !Arc::ptr_eq(&soup.network, &exc.network) {
        return Err(ClusterError::NetworkMismatch);
    }
    let b = Builder::new(&soup.network, [soup, exc]);
    Ok(b.finish(soup.network.clone(), false))
}

/// Closed union of the clusters containing an excursion, plus the boundary.
pub fn excursion_cluster_union(partition: &ClusterPartition) -> MetricSubset {
    let net = &partition.network;
    let mut vertices = net.boundary_mask().to_vec();
    let mut edges = vec![false; net.edge_count()];
    for c in partition.clusters.iter().filter(|c| c.contains_excursion) {
        for &v in &c.vertices {
            vertices[v] = true;
        }
        for &e in &c.edges {
            edges[e] = true;
        }
    }
    MetricSubset::new(net.clone(), vertices, edges)
}

/// Signed field `σ √(2 L)` of a loop soup at `α = 1/2` and an excursion process.
///
/// Untraversed edges are opened independently with the probability that the
/// metric-graph field has no zero along them given the occupation times, so that
/// the result has the law of `φ + u`. Clusters of the opened graph containing an
/// excursion or a boundary vertex take sign `+1`, the others a fair random sign.
/// Returns the field and the partition after opening.
pub fn assemble_field<R: Rng + ?Sized>(
    soup: &SoupSample,
    exc: &SoupSample,
    rng: &mut R,
) -> Result<(FieldSample, ClusterPartition), ClusterError> {
    if !Arc::ptr_eq(&soup.network, &exc.network) {
        return Err(ClusterError::NetworkMismatch);
    }
    if soup.alpha != Some(0.5) {
        return Err(ClusterError::WrongIntensity(soup.alpha));
    }
    let net = &*soup.network;
    let u = exc.excursion_boundary.clone().unwrap_or_else(|| BoundaryFunction::zero(net));
    if let Some(&b) = net.boundary().iter().find(|&&b| !(u.get(b) >= 0.0)) {
        return Err(ClusterError::NegativeBoundary { vertex: b, value: u.get(b) });
    }
    let mut occ = occupation_field(soup, true);
    occ.add(&occupation_field(exc, false));
    let abs: Vec<f64> = (0..net.vertex_count())
        .map(|v| if net.is_boundary(v) { u.get(v) } else { math::sqrt(2.0 * occ.values[v]) })
        .collect();

    let mut b = Builder::new(net, [soup, exc]);
    for &x in net.boundary() {
        b.present[x] = true;
    }
    for (e, edge) in net.edges().iter().enumerate() {
        let draw = rng.random::<f64>();
        if b.covered[e] {
            continue;
        }
        // both boundary: full bridge law; otherwise the part not explained by jumps
        let rate = if net.is_boundary(edge.a) && net.is_boundary(edge.b) {
            2.0 * edge.conductance * abs[edge.a] * abs[edge.b]
        } else {
            edge.conductance * abs[edge.a] * abs[edge.b]
        };
        if draw < -math::exp_m1(-rate) {
            b.covered[e] = true;
            b.sets.union(edge.a, edge.b);
        }
    }
    let covered = b.covered.clone();
    let partition = b.finish(soup.network.clone(), true);

    let mut sign = vec![1.0; partition.clusters.len()];
    for (c, cl) in partition.clusters.iter().enumerate() {
        if !cl.contains_excursion && rng.random::<bool>() {
            sign[c] = -1.0;
        }
    }
    let values: Vec<f64> = (0..net.vertex_count())
        .map(|v| match partition.cluster_of_vertex(v) {
            Some(c) => sign[c] * abs[v],
            None => 0.0,
        })
        .collect();
    let marks = covered.iter().map(|&c| if c { EdgeMark::Covered } else { EdgeMark::Vanishing }).collect();
    let uniforms = (0..net.edge_count()).map(|_| rng.random::<f64>()).collect();
    let field = FieldSample::from_parts(soup.network.clone(), values, u, uniforms, Some(marks)).with_stream(soup.stream);
    Ok((field, partition))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fps::first_passage_set;
    use crate::network::fixtures::{grid, p3, triangle};
    use crate::rng::{stream, Purpose};
    use crate::soups::{ExcursionSampler, LoopSoupSampler, Trajectory};

    fn traj(kind: TrajectoryKind, vertices: Vec<VertexId>) -> Trajectory {
        let holding = vertices.iter().map(|_| 0.1).collect();
        Trajectory { kind, vertices, holding }
    }

    #[test]
    fn constructed_partitions() {
        let net = Arc::new(triangle());
        let empty = SoupSample::empty(net.clone());
        assert!(build_clusters(&empty, &empty).unwrap().is_empty());

        let mut loops = SoupSample::empty(net.clone());
        loops.trajectories.push(traj(TrajectoryKind::Loop, vec![0, 1, 0]));
        loops.trajectories.push(traj(TrajectoryKind::Loop, vec![1, 0, 1]));
        let p = build_clusters(&loops, &empty).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.clusters()[0].trajectories.len(), 2);

        let mut exc = SoupSample::empty(net.clone());
        exc.trajectories.push(traj(TrajectoryKind::Excursion, vec![2, 0, 2]));
        let p = build_clusters(&loops, &exc).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.clusters()[0].contains_excursion);
        assert_eq!(p.cluster_of_trajectory(2), 0);
    }

    #[test]
    fn union_cases() {
        let net = Arc::new(p3());
        let empty = SoupSample::empty(net.clone());
        let u = excursion_cluster_union(&build_clusters(&empty, &empty).unwrap());
        assert_eq!(u.vertices(), &[true, false, true]);
        let mut exc = SoupSample::empty(net.clone());
        exc.trajectories.push(traj(TrajectoryKind::Excursion, vec![0, 1, 2]));
        let u = excursion_cluster_union(&build_clusters(&empty, &exc).unwrap());
        assert_eq!(u.vertices(), &[true, true, true]);
        assert_eq!(u.edges(), &[true, true]);
    }

    #[test]
    fn wrong_intensity_is_rejected() {
        let net = Arc::new(p3());
        let mut soup = SoupSample::empty(net.clone());
        soup.alpha = Some(0.7);
        let err = assemble_field(&soup, &SoupSample::empty(net), &mut stream(0, 0, Purpose::Signs)).unwrap_err();
        assert!(alloc::format!("{err}").contains("signed isomorphism stated only at α = 1/2"));
    }

    #[test]
    fn assembled_zero_field_and_footprints_disjoint() {
        let net = Arc::new(grid(5, 5));
        let mut soup = SoupSample::empty(net.clone());
        soup.alpha = Some(0.5);
        let (f, _) = assemble_field(&soup, &SoupSample::empty(net.clone()), &mut stream(0, 0, Purpose::Signs)).unwrap();
        assert!(f.values().iter().all(|&x| x == 0.0));

        let loops = LoopSoupSampler::new(&net);
        let exc = ExcursionSampler::new(&net, &BoundaryFunction::constant(&net, 0.5)).unwrap();
        for r in 0..200 {
            let s = loops.sample(0.5, &mut stream(1, r, Purpose::LoopSoup)).unwrap();
            let x = exc.sample(&mut stream(1, r, Purpose::Excursions));
            let p = build_clusters(&s, &x).unwrap();
            let mut owner = [NONE; 25];
            for (c, cl) in p.clusters().iter().enumerate() {
                for &v in &cl.vertices {
                    assert_eq!(owner[v], NONE);
                    owner[v] = c;
                }
            }
        }
    }

    #[test]
    fn fps_equals_cluster_union_on_grid() {
        let net = Arc::new(grid(6, 6));
        let loops = LoopSoupSampler::new(&net);
        let exc = ExcursionSampler::new(&net, &BoundaryFunction::constant(&net, 0.5)).unwrap();
        for r in 0..300 {
            let s = loops.sample(0.5, &mut stream(2, r, Purpose::LoopSoup)).unwrap();
            let x = exc.sample(&mut stream(2, r, Purpose::Excursions));
            let (f, p) = assemble_field(&s, &x, &mut stream(2, r, Purpose::Signs)).unwrap();
            let a = first_passage_set(&f, 0.0, false);
            let b = excursion_cluster_union(&p);
            assert_eq!(a.vertices(), b.vertices());
            assert_eq!(a.edges(), b.edges());
        }
    }
}
