//! Random-walk loop soups, boundary excursion processes and their occupation fields.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};

use crate::linalg::EnvelopeCholesky;
use crate::math;
use crate::network::{
    boundary_poisson_kernel, BoundaryFunction, Network, NetworkError, PoissonKernel, VertexId, NONE,
};
use crate::refine::RefinedNetwork;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SoupError {
    #[error("intensity must be positive and finite, got {0}")]
    BadIntensity(f64),
    #[error("excursion intensity is negative at vertex {vertex} (value {value})")]
    NegativeBoundary { vertex: VertexId, value: f64 },
    #[error("u_star must dominate u on the boundary (vertex {0})")]
    NotDominated(VertexId),
    #[error("skeleton visits boundary vertex {0}")]
    SkeletonTouchesBoundary(VertexId),
    #[error("skeleton steps between non-adjacent vertices {0} and {1}")]
    NotAdjacent(VertexId, VertexId),
    #[error("skeleton is empty")]
    EmptySkeleton,
    #[error("soups live on different networks")]
    NetworkMismatch,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Loop,
    Excursion,
}

/// Nearest-neighbour path with a holding time per visit.
///
/// Loops are stored closed (`vertices[0] == vertices[last]`) with zero holding on the
/// closing entry; excursions hold zero time at both boundary endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub vertices: Vec<VertexId>,
    pub holding: Vec<f64>,
}

impl Trajectory {
    pub fn start(&self) -> VertexId {
        self.vertices[0]
    }

    pub fn end(&self) -> VertexId {
        self.vertices[self.vertices.len() - 1]
    }

    /// Number of jumps.
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() <= 1
    }

    pub fn steps(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn total_time(&self) -> f64 {
        self.holding.iter().sum()
    }

    /// Jump sequence of a loop without the closing repeat.
    pub fn skeleton(&self) -> &[VertexId] {
        match self.kind {
            TrajectoryKind::Loop => &self.vertices[..self.vertices.len() - 1],
            TrajectoryKind::Excursion => &self.vertices,
        }
    }
}

/// Poissonian collection of trajectories plus the trivial-loop occupation field.
#[derive(Debug, Clone)]
pub struct SoupSample {
    pub network: Arc<Network>,
    pub trajectories: Vec<Trajectory>,
    /// Per vertex; zero on the boundary.
    pub trivial_field: Vec<f64>,
    /// Loop intensity, `None` for pure excursion processes.
    pub alpha: Option<f64>,
    /// Boundary function driving the excursions, when present.
    pub excursion_boundary: Option<BoundaryFunction>,
    pub stream: u64,
}

impl SoupSample {
    pub fn empty(network: Arc<Network>) -> Self {
        let n = network.vertex_count();
        Self {
            network,
            trajectories: Vec::new(),
            trivial_field: vec![0.0; n],
            alpha: None,
            excursion_boundary: None,
            stream: 0,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn loop_count(&self) -> usize {
        self.trajectories.iter().filter(|t| t.kind == TrajectoryKind::Loop).count()
    }

    pub fn excursion_count(&self) -> usize {
        self.trajectories.iter().filter(|t| t.kind == TrajectoryKind::Excursion).count()
    }

    /// Union of two independent samples on the same network.
    pub fn merged(&self, other: &SoupSample) -> Result<SoupSample, SoupError> {
        if !Arc::ptr_eq(&self.network, &other.network) {
            return Err(SoupError::NetworkMismatch);
        }
        let mut trajectories = self.trajectories.clone();
        trajectories.extend(other.trajectories.iter().cloned());
        let alpha = match (self.alpha, other.alpha) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.or(b),
        };
        Ok(SoupSample {
            network: self.network.clone(),
            trajectories,
            trivial_field: self.trivial_field.iter().zip(&other.trivial_field).map(|(a, b)| a + b).collect(),
            alpha,
            excursion_boundary: self.excursion_boundary.clone().or_else(|| other.excursion_boundary.clone()),
            stream: self.stream,
        })
    }
}

/// Total time per vertex; zero on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationField {
    pub values: Vec<f64>,
}

impl OccupationField {
    pub fn get(&self, v: VertexId) -> f64 {
        self.values[v]
    }

    pub fn add(&mut self, other: &OccupationField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

pub fn occupation_field(soup: &SoupSample, include_trivial: bool) -> OccupationField {
    let mut values = if include_trivial {
        soup.trivial_field.clone()
    } else {
        vec![0.0; soup.network.vertex_count()]
    };
    for t in &soup.trajectories {
        for (&v, &h) in t.vertices.iter().zip(&t.holding) {
            values[v] += h;
        }
    }
    OccupationField { values }
}

fn step_probability(net: &Network, x: VertexId, y: VertexId) -> Result<f64, SoupError> {
    let e = net.find_edge(x, y).ok_or(SoupError::NotAdjacent(x, y))?;
    Ok(net.edge(e).conductance / net.total_conductance(x))
}

/// Rotational multiplicity: number of cyclic shifts fixing the sequence.
pub fn rotational_multiplicity(skeleton: &[VertexId]) -> usize {
    let n = skeleton.len();
    (1..=n).filter(|&s| n.is_multiple_of(s)).find(|&s| (0..n).all(|i| skeleton[i] == skeleton[(i + s) % n])).map_or(1, |p| n / p)
}

/// Mass under the unrooted loop measure of the loop class with jump sequence
/// `skeleton` (a closing repeat of the first vertex is accepted): `∏ p / J`.
pub fn loop_measure_weight(net: &Network, skeleton: &[VertexId]) -> Result<f64, SoupError> {
    let mut s = skeleton;
    if s.len() > 1 && s[0] == s[s.len() - 1] {
        s = &s[..s.len() - 1];
    }
    if s.is_empty() {
        return Err(SoupError::EmptySkeleton);
    }
    if let Some(&b) = s.iter().find(|&&v| net.is_boundary(v)) {
        return Err(SoupError::SkeletonTouchesBoundary(b));
    }
    if s.len() == 1 {
        return Err(SoupError::NotAdjacent(s[0], s[0]));
    }
    let mut w = 1.0;
    for i in 0..s.len() {
        w *= step_probability(net, s[i], s[(i + 1) % s.len()])?;
    }
    Ok(w / rotational_multiplicity(s) as f64)
}

/// `-log det(I - P)` on the interior, the total mass of nontrivial loops.
pub fn total_loop_mass(net: &Network) -> f64 {
    let log_ctot: f64 = net.interior().iter().map(|&x| math::ln(net.total_conductance(x))).sum();
    log_ctot - net.factor().log_det()
}

/// Precomputed killed Green's functions for the loop-soup sampler.
///
/// Interior vertices are processed in stored index order `v_1, …, v_k`; `G_i` is the
/// Green's function killed on the boundary and on `v_1, …, v_{i-1}`.
#[derive(Debug, Clone)]
pub struct LoopSoupSampler {
    network: Arc<Network>,
    factor: EnvelopeCholesky,
    /// `columns[i][p] = G_i(v at position p, v_i)` for positions `p ≤ pos(v_i)`.
    columns: Vec<Vec<f64>>,
    /// `C_tot(v_i) G_i(v_i, v_i)`.
    ctg: Vec<f64>,
}

impl LoopSoupSampler {
    pub fn new(net: &Arc<Network>) -> Self {
        let k = net.interior().len();
        let perm: Vec<usize> = (0..k).rev().collect();
        let factor = EnvelopeCholesky::with_ordering(&net.interior_laplacian(), perm)
            .expect("interior Laplacian of a valid network is positive definite");
        let mut columns = Vec::with_capacity(k);
        let mut ctg = Vec::with_capacity(k);
        for (i, &v) in net.interior().iter().enumerate() {
            let p = factor.position(i);
            let mut col = vec![0.0; p + 1];
            factor.leading_column(p, &mut col);
            ctg.push(net.total_conductance(v) * factor.leading_diag_inverse(p));
            columns.push(col);
        }
        Self { network: net.clone(), factor, columns, ctg }
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    /// Expected number of loops whose first vertex in the sampling order is
    /// `interior()[i]`, per unit intensity.
    pub fn rooted_mass(&self, i: usize) -> f64 {
        math::ln(self.ctg[i])
    }

    /// `G_i(y, v_i)`; zero when `y` is killed or on the boundary.
    fn killed_green(&self, i: usize, y: VertexId) -> f64 {
        match self.network.interior_index(y) {
            Some(j) => {
                let p = self.factor.position(j);
                self.columns[i].get(p).copied().unwrap_or(0.0)
            }
            None => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, alpha: f64, rng: &mut R) -> Result<SoupSample, SoupError> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(SoupError::BadIntensity(alpha));
        }
        let net = &*self.network;
        let mut trajectories = Vec::new();
        for (i, &v) in net.interior().iter().enumerate() {
            let mass = alpha * self.rooted_mass(i);
            if !(mass > 0.0) {
                continue;
            }
            let count = poisson(mass, rng);
            let r = 1.0 - 1.0 / self.ctg[i];
            let gvv = self.killed_green(i, v);
            for _ in 0..count {
                let k = logarithmic(r, rng);
                let mut vertices = vec![v];
                for _ in 0..k {
                    self.excursion_from(i, v, gvv, &mut vertices, rng);
                }
                let holding = holding_times(net, &vertices, rng);
                trajectories.push(Trajectory { kind: TrajectoryKind::Loop, vertices, holding });
            }
        }
        let mut trivial_field = vec![0.0; net.vertex_count()];
        for &x in net.interior() {
            let g = Gamma::new(alpha, 1.0 / net.total_conductance(x)).expect("valid gamma parameters");
            trivial_field[x] = g.sample(rng);
        }
        Ok(SoupSample {
            network: self.network.clone(),
            trajectories,
            trivial_field,
            alpha: Some(alpha),
            excursion_boundary: None,
            stream: 0,
        })
    }

    /// Appends a walk from `v` back to `v` conditioned to avoid killed vertices.
    fn excursion_from<R: Rng + ?Sized>(
        &self,
        i: usize,
        v: VertexId,
        gvv: f64,
        path: &mut Vec<VertexId>,
        rng: &mut R,
    ) {
        let net = &*self.network;
        let mut x = v;
        loop {
            let inc = net.incident(x);
            let weight = |y: VertexId, c: f64| c * self.killed_green(i, y) / gvv;
            let total: f64 = inc.iter().map(|e| weight(e.to, e.conductance)).sum();
            let mut target = rng.random::<f64>() * total;
            let mut next = NONE;
            for e in inc {
                let w = weight(e.to, e.conductance);
                if w > 0.0 {
                    next = e.to;
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            debug_assert!(next != NONE);
            path.push(next);
            if next == v {
                return;
            }
            x = next;
        }
    }
}

/// Loop soup of intensity `alpha`.
pub fn sample_loop_soup<R: Rng + ?Sized>(
    net: &Arc<Network>,
    alpha: f64,
    rng: &mut R,
) -> Result<SoupSample, SoupError> {
    LoopSoupSampler::new(net).sample(alpha, rng)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite Poisson mean");
    d.sample(rng) as u64
}

/// `P(K = k) ∝ r^k / k` by inversion, stopping once the remaining tail is below 1e-15.
fn logarithmic<R: Rng + ?Sized>(r: f64, rng: &mut R) -> u64 {
    let norm = -math::ln_1p(-r);
    let u = rng.random::<f64>();
    let mut k = 1u64;
    let mut term = r / norm;
    let mut cum = term;
    while u > cum && 1.0 - cum > 1e-15 {
        term *= r * k as f64 / (k + 1) as f64;
        k += 1;
        cum += term;
        if term == 0.0 {
            break;
        }
    }
    k
}

fn holding_times<R: Rng + ?Sized>(net: &Network, vertices: &[VertexId], rng: &mut R) -> Vec<f64> {
    let last = vertices.len() - 1;
    vertices
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            if net.is_boundary(x) || (j == last && vertices[0] == x) {
                0.0
            } else {
                Exp::new(net.total_conductance(x)).expect("positive rate").sample(rng)
            }
        })
        .collect()
}

/// Poisson process of boundary-to-boundary excursions with pair intensity
/// `½ w(x, y) H(x, y)`.
#[derive(Debug, Clone)]
pub struct ExcursionSampler {
    network: Arc<Network>,
    kernel: PoissonKernel,
    /// Ordered boundary pairs `(i, j)` with positive weight and cumulative masses.
    pairs: Vec<(usize, usize)>,
    cumulative: Vec<f64>,
    mass: f64,
    boundary: BoundaryFunction,
}

impl ExcursionSampler {
    /// Excursions of `μ^u_exc`: `w(x, y) = u(x) u(y)`.
    pub fn new(net: &Arc<Network>, u: &BoundaryFunction) -> Result<Self, SoupError> {
        let kernel = boundary_poisson_kernel(net);
        Self::with_kernel(net, kernel, u, None)
    }

    /// Excursions of `μ^{u*}_exc - μ^u_exc`: `w(x, y) = u*(x) u*(y) - u(x) u(y)`.
    pub fn difference(net: &Arc<Network>, u: &BoundaryFunction, u_star: &BoundaryFunction) -> Result<Self, SoupError> {
        let kernel = boundary_poisson_kernel(net);
        Self::with_kernel(net, kernel, u, Some(u_star))
    }

    pub fn with_kernel(
        net: &Arc<Network>,
        kernel: PoissonKernel,
        u: &BoundaryFunction,
        u_star: Option<&BoundaryFunction>,
    ) -> Result<Self, SoupError> {
        check_nonnegative(net, u)?;
        if let Some(us) = u_star {
            check_nonnegative(net, us)?;
            if let Some(&b) = net.boundary().iter().find(|&&b| us.get(b) < u.get(b)) {
                return Err(SoupError::NotDominated(b));
            }
        }
        let bnd = net.boundary();
        let mut pairs = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (i, &x) in bnd.iter().enumerate() {
            for (j, &y) in bnd.iter().enumerate() {
                let w = pair_weight(u, u_star, x, y);
                let m = 0.5 * w * kernel.at(i, j);
                if m > 0.0 {
                    acc += m;
                    pairs.push((i, j));
                    cumulative.push(acc);
                }
            }
        }
        let boundary = u_star.unwrap_or(u).clone();
        Ok(Self { network: net.clone(), kernel, pairs, cumulative, mass: acc, boundary })
    }

    /// Expected number of excursions.
    pub fn total_mass(&self) -> f64 {
        self.mass
    }

    pub fn kernel(&self) -> &PoissonKernel {
        &self.kernel
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SoupSample {
        let net = &*self.network;
        let count = poisson(self.mass, rng);
        let mut trajectories = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let target = rng.random::<f64>() * self.mass;
            let idx = self.cumulative.partition_point(|&c| c <= target).min(self.pairs.len() - 1);
            let (i, j) = self.pairs[idx];
            let (x, y) = (self.kernel.boundary()[i], self.kernel.boundary()[j]);
            let vertices = self.skeleton(x, y, rng);
            let holding = holding_times(net, &vertices, rng);
            trajectories.push(Trajectory { kind: TrajectoryKind::Excursion, vertices, holding });
        }
        SoupSample {
            network: self.network.clone(),
            trajectories,
            trivial_field: vec![0.0; net.vertex_count()],
            alpha: None,
            excursion_boundary: Some(self.boundary.clone()),
            stream: 0,
        }
    }

    /// Walk from `x` through the interior conditioned to exit at `y` (Doob transform by
    /// the harmonic measure of `y`).
    fn skeleton<R: Rng + ?Sized>(&self, x: VertexId, y: VertexId, rng: &mut R) -> Vec<VertexId> {
        let net = &*self.network;
        let h = self.kernel.harmonic_measure(y);
        let weight = |from: VertexId, to: VertexId, c: f64| -> f64 {
            if net.is_boundary(to) {
                if to == y && !net.is_boundary(from) {
                    c
                } else {
                    0.0
                }
            } else {
                c * h[to]
            }
        };
        let mut path = vec![x];
        let mut z = x;
        loop {
            let inc = net.incident(z);
            let total: f64 = inc.iter().map(|e| weight(z, e.to, e.conductance)).sum();
            let mut target = rng.random::<f64>() * total;
            let mut next = NONE;
            for e in inc {
                let w = weight(z, e.to, e.conductance);
                if w > 0.0 {
                    next = e.to;
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            debug_assert!(next != NONE);
            path.push(next);
            if next == y && net.is_boundary(next) {
                return path;
            }
            z = next;
        }
    }
}

fn pair_weight(u: &BoundaryFunction, u_star: Option<&BoundaryFunction>, x: VertexId, y: VertexId) -> f64 {
    let base = u.get(x) * u.get(y);
    match u_star {
        Some(us) => (us.get(x) * us.get(y) - base).max(0.0),
        None => base,
    }
}

fn check_nonnegative(net: &Network, u: &BoundaryFunction) -> Result<(), SoupError> {
    match net.boundary().iter().find(|&&b| !(u.get(b) >= 0.0)) {
        Some(&b) => Err(SoupError::NegativeBoundary { vertex: b, value: u.get(b) }),
        None => Ok(()),
    }
}

/// Excursion process `Ξ_u`.
pub fn sample_excursion_ppp<R: Rng + ?Sized>(
    net: &Arc<Network>,
    u: &BoundaryFunction,
    rng: &mut R,
) -> Result<SoupSample, SoupError> {
    Ok(ExcursionSampler::new(net, u)?.sample(rng))
}

/// `(μ^{u*}_exc - μ^u_exc)({γ : γ visits K})`.
pub fn excursion_hitting_mass(
    net: &Network,
    u: &BoundaryFunction,
    u_star: &BoundaryFunction,
    k: &[bool],
) -> Result<f64, SoupError> {
    if k.len() != net.vertex_count() {
        return Err(NetworkError::LengthMismatch { expected: net.vertex_count(), got: k.len() }.into());
    }
    check_nonnegative(net, u)?;
    check_nonnegative(net, u_star)?;
    let h = boundary_poisson_kernel(net);
    let avoid: Vec<bool> = (0..net.vertex_count()).map(|v| k[v] && !net.is_boundary(v)).collect();
    let h_avoid = if avoid.iter().any(|&b| b) {
        match net.with_extra_boundary(&avoid) {
            Ok(smaller) => Some(boundary_poisson_kernel(&smaller)),
            Err(NetworkError::EmptyInterior) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        return Ok(0.0);
    };
    let mut mass = 0.0;
    for (i, &x) in net.boundary().iter().enumerate() {
        for (j, &y) in net.boundary().iter().enumerate() {
            let w = u_star.get(x) * u_star.get(y) - u.get(x) * u.get(y);
            let kept = h_avoid.as_ref().map_or(0.0, |ha| ha.get(x, y));
            mass += 0.5 * w * (h.at(i, j) - kept);
        }
    }
    Ok(mass)
}

/// Time change of a refined-network soup onto the base network: only base-vertex visits
/// are kept, with their holding times; consecutive repeats merge. Loops that collapse to
/// a single vertex join its trivial field; loops that never visit a base vertex vanish.
pub fn project_to_network(refined: &RefinedNetwork, soup: &SoupSample) -> Result<SoupSample, SoupError> {
    if !Arc::ptr_eq(&soup.network, refined.network()) {
        return Err(SoupError::NetworkMismatch);
    }
    if refined.level() == 0 {
        return Ok(soup.clone());
    }
    let base = refined.base();
    let n = base.vertex_count();
    let mut trivial_field = soup.trivial_field[..n].to_vec();
    let mut trajectories = Vec::new();
    for t in &soup.trajectories {
        let open = match t.kind {
            TrajectoryKind::Loop => t.vertices.len() - 1,
            TrajectoryKind::Excursion => t.vertices.len(),
        };
        let mut vs: Vec<VertexId> = Vec::new();
        let mut hs: Vec<f64> = Vec::new();
        for idx in 0..open {
            let v = t.vertices[idx];
            if v >= n {
                continue;
            }
            if vs.last() == Some(&v) {
                *hs.last_mut().unwrap() += t.holding[idx];
            } else {
                vs.push(v);
                hs.push(t.holding[idx]);
            }
        }
        match t.kind {
            TrajectoryKind::Loop => {
                if vs.is_empty() {
                    continue;
                }
                if vs.len() > 1 && vs[0] == vs[vs.len() - 1] {
                    let h = hs.pop().unwrap();
                    vs.pop();
                    hs[0] += h;
                }
                if vs.len() == 1 {
                    trivial_field[vs[0]] += hs[0];
                    continue;
                }
                vs.push(vs[0]);
                hs.push(0.0);
                trajectories.push(Trajectory { kind: TrajectoryKind::Loop, vertices: vs, holding: hs });
            }
            TrajectoryKind::Excursion => {
                trajectories.push(Trajectory { kind: TrajectoryKind::Excursion, vertices: vs, holding: hs });
            }
        }
    }
    let excursion_boundary = soup
        .excursion_boundary
        .as_ref()
        .map(|u| crate::network::harmonic_extension(base, &u.values()[..n]))
        .transpose()?;
    Ok(SoupSample {
        network: base.clone(),
        trajectories,
        trivial_field,
        alpha: soup.alpha,
        excursion_boundary,
        stream: soup.stream,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{grid, p3, triangle};
    use crate::network::harmonic_extension;
    use crate::refine::refine;
    use crate::rng::{stream, Purpose};
    use rand::seq::SliceRandom;

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn multiplicity_and_weights() {
        assert_eq!(rotational_multiplicity(&[0, 1]), 1);
        assert_eq!(rotational_multiplicity(&[0, 1, 0, 1]), 2);
        assert_eq!(rotational_multiplicity(&[0, 1, 2]), 1);
        assert_eq!(rotational_multiplicity(&[0, 1, 0, 2]), 1);
        let t = triangle();
        // (ab)^k has weight 4^-k / k
        assert!((loop_measure_weight(&t, &[0, 1, 0]).unwrap() - 0.25).abs() < 1e-15);
        assert!((loop_measure_weight(&t, &[0, 1, 0, 1]).unwrap() - 1.0 / 32.0).abs() < 1e-15);
        assert_eq!(loop_measure_weight(&t, &[0, 2, 0]).unwrap_err(), SoupError::SkeletonTouchesBoundary(2));
    }

    #[test]
    fn loop_mass_identity_is_order_independent() {
        let t = triangle();
        assert!((total_loop_mass(&t) - (4.0f64 / 3.0).ln()).abs() < 1e-14);
        assert!(total_loop_mass(&p3()).abs() < 1e-15);
        let net = grid(5, 4);
        let lap = net.interior_laplacian();
        let k = net.interior().len();
        let target = total_loop_mass(&net);
        let mut rng = stream(4, 0, Purpose::Extra(0));
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut rng);
            let f = EnvelopeCholesky::with_ordering(&lap, perm.clone()).unwrap();
            let s: f64 = (0..k)
                .map(|p| (net.total_conductance(net.interior()[perm[p]]) * f.leading_diag_inverse(p)).ln())
                .sum();
            assert!((s - target).abs() < 1e-10);
        }
        let arc = Arc::new(net);
        let sampler = LoopSoupSampler::new(&arc);
        let s: f64 = (0..k).map(|i| sampler.rooted_mass(i)).sum();
        assert!((s - target).abs() < 1e-10);
    }

    #[test]
    fn p3_has_no_loops_and_gamma_trivial_field() {
        let net = Arc::new(p3());
        let sampler = LoopSoupSampler::new(&net);
        let mut rng = stream(6, 0, Purpose::LoopSoup);
        let mut xs = Vec::new();
        for _ in 0..20_000 {
            let s = sampler.sample(0.5, &mut rng).unwrap();
            assert!(s.trajectories.is_empty());
            xs.push(s.trivial_field[1]);
        }
        let (m, se) = mean_se(&xs);
        // Gamma(1/2, rate 2) has mean 1/4
        assert!((m - 0.25).abs() < 4.0 * se);
    }

    #[test]
    fn triangle_loop_count() {
        let net = Arc::new(triangle());
        let sampler = LoopSoupSampler::new(&net);
        let mut rng = stream(7, 0, Purpose::LoopSoup);
        let counts: Vec<f64> = (0..50_000).map(|_| sampler.sample(0.5, &mut rng).unwrap().loop_count() as f64).collect();
        let (m, se) = mean_se(&counts);
        assert!((m - 0.5 * (4.0f64 / 3.0).ln()).abs() < 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn loops_are_closed_interior_paths() {
        let net = Arc::new(grid(5, 5));
        let sampler = LoopSoupSampler::new(&net);
        let mut rng = stream(8, 0, Purpose::LoopSoup);
        for _ in 0..200 {
            let s = sampler.sample(0.5, &mut rng).unwrap();
            for t in &s.trajectories {
                assert_eq!(t.start(), t.end());
                assert_eq!(*t.holding.last().unwrap(), 0.0);
                for (a, b) in t.steps() {
                    assert!(net.find_edge(a, b).is_some());
                    assert!(!net.is_boundary(a));
                }
            }
            assert!(s.trivial_field.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn logarithmic_mean() {
        let mut rng = stream(9, 0, Purpose::Extra(1));
        let r: f64 = 0.6;
        let xs: Vec<f64> = (0..100_000).map(|_| logarithmic(r, &mut rng) as f64).collect();
        let (m, se) = mean_se(&xs);
        let exact = r / ((1.0 - r) * -(1.0 - r).ln());
        assert!((m - exact).abs() < 4.0 * se);
    }

    #[test]
    fn excursions_on_p3() {
        let net = Arc::new(p3());
        let zero = BoundaryFunction::zero(&net);
        let mut rng = stream(10, 0, Purpose::Excursions);
        assert!(sample_excursion_ppp(&net, &zero, &mut rng).unwrap().trajectories.is_empty());
        let one = BoundaryFunction::constant(&net, 1.0);
        let sampler = ExcursionSampler::new(&net, &one).unwrap();
        assert!((sampler.total_mass() - 1.0).abs() < 1e-14);
        let mut holds = Vec::new();
        for _ in 0..20_000 {
            let s = sampler.sample(&mut rng);
            for t in &s.trajectories {
                assert_eq!(t.vertices.len(), 3);
                assert_eq!(t.vertices[1], 1);
                assert_eq!(t.holding[0], 0.0);
                assert_eq!(t.holding[2], 0.0);
                holds.push(t.holding[1]);
            }
        }
        let (m, se) = mean_se(&holds);
        assert!((m - 0.5).abs() < 4.0 * se);
        let neg = harmonic_extension(&net, &[1.0, 0.0, -1.0]).unwrap();
        assert!(matches!(ExcursionSampler::new(&net, &neg), Err(SoupError::NegativeBoundary { vertex: 2, .. })));
    }

    #[test]
    fn excursions_touch_boundary_only_at_ends() {
        let net = Arc::new(grid(5, 5));
        let u = harmonic_extension(&net, &(0..25).map(|v| 0.2 + (v % 3) as f64).collect::<Vec<_>>()).unwrap();
        let sampler = ExcursionSampler::new(&net, &u).unwrap();
        let mut rng = stream(11, 0, Purpose::Excursions);
        for _ in 0..200 {
            for t in &sampler.sample(&mut rng).trajectories {
                let last = t.vertices.len() - 1;
                assert!(net.is_boundary(t.start()) && net.is_boundary(t.end()));
                assert!(t.vertices[1..last].iter().all(|&v| !net.is_boundary(v)));
                assert!(last >= 2);
            }
        }
    }

    #[test]
    fn occupation_basics() {
        let net = Arc::new(p3());
        let empty = SoupSample::empty(net.clone());
        assert!(occupation_field(&empty, true).values.iter().all(|&x| x == 0.0));
        let mut one = SoupSample::empty(net.clone());
        one.trajectories.push(Trajectory {
            kind: TrajectoryKind::Excursion,
            vertices: vec![0, 1, 2],
            holding: vec![0.0, 0.37, 0.0],
        });
        assert_eq!(occupation_field(&one, false).get(1), 0.37);
        let both = one.merged(&one).unwrap();
        assert_eq!(occupation_field(&both, false).get(1), 0.74);
    }

    #[test]
    fn hitting_mass_cases() {
        let net = p3();
        let zero = BoundaryFunction::zero(&net);
        let one = BoundaryFunction::constant(&net, 1.0);
        assert_eq!(excursion_hitting_mass(&net, &zero, &one, &[false; 3]).unwrap(), 0.0);
        assert!((excursion_hitting_mass(&net, &zero, &one, &[false, true, false]).unwrap() - 1.0).abs() < 1e-14);

        let g = grid(5, 5);
        let u = BoundaryFunction::constant(&g, 0.5);
        let us = BoundaryFunction::constant(&g, 1.0);
        let interior: Vec<bool> = (0..25).map(|v| !g.is_boundary(v)).collect();
        let full = ExcursionSampler::difference(&Arc::new(g.clone()), &u, &us).unwrap().total_mass();
        assert!((excursion_hitting_mass(&g, &u, &us, &interior).unwrap() - full).abs() < 1e-12);
    }

    #[test]
    fn projection_rules() {
        let base = Arc::new(triangle());
        let r1 = refine(&base, 1);
        let net = r1.network();
        let mut soup = SoupSample::empty(net.clone());
        soup.alpha = Some(0.5);
        // a loop through one base vertex collapses onto it
        let m = r1.node(0, 1);
        soup.trajectories.push(Trajectory { kind: TrajectoryKind::Loop, vertices: vec![m, 0, m], holding: vec![0.1, 0.2, 0.0] });
        let p = project_to_network(&r1, &soup).unwrap();
        assert!(p.trajectories.is_empty());
        assert!((p.trivial_field[0] - 0.2).abs() < 1e-15);

        let r2 = refine(&base, 2);
        let mut inner = SoupSample::empty(r2.network().clone());
        let (s1, s2) = (r2.node(0, 1), r2.node(0, 2));
        inner.trajectories.push(Trajectory { kind: TrajectoryKind::Loop, vertices: vec![s1, s2, s1], holding: vec![0.1, 0.2, 0.0] });
        let p = project_to_network(&r2, &inner).unwrap();
        assert!(p.trajectories.is_empty());
        assert!(p.trivial_field.iter().all(|&x| x == 0.0));

        let r0 = refine(&base, 0);
        let s0 = sample_loop_soup(&base, 0.5, &mut stream(1, 0, Purpose::LoopSoup)).unwrap();
        let q = project_to_network(&r0, &s0).unwrap();
        assert_eq!(q.trajectories, s0.trajectories);
    }

    #[test]
    fn projected_soup_loop_counts_match() {
        let base = Arc::new(triangle());
        let r1 = refine(&base, 1);
        let fine = LoopSoupSampler::new(r1.network());
        let coarse = LoopSoupSampler::new(&base);
        let mut rng = stream(12, 0, Purpose::LoopSoup);
        let n = 40_000;
        let (mut a_f, mut a_c) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let p = project_to_network(&r1, &fine.sample(0.5, &mut rng).unwrap()).unwrap();
            let c = coarse.sample(0.5, &mut rng).unwrap();
            let rooted_a = |s: &SoupSample| s.trajectories.iter().filter(|t| t.vertices.contains(&0)).count() as f64;
            a_f.push(rooted_a(&p));
            a_c.push(rooted_a(&c));
        }
        let (mf, sf) = mean_se(&a_f);
        let (mc, sc) = mean_se(&a_c);
        assert!((mf - mc).abs() < 4.0 * (sf * sf + sc * sc).sqrt(), "{mf} vs {mc}");
        let exact = 0.5 * (4.0f64 / 3.0).ln();
        assert!((mc - exact).abs() < 4.0 * sc);
    }
}
