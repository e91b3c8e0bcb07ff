//! Discrete and metric-graph Gaussian free fields.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bridge::sample_midpoint;
use crate::network::{harmonic_extension, BoundaryFunction, Network, NetworkError, VertexId};
use crate::refine::RefinedNetwork;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GffError {
    #[error("vertex set does not contain boundary vertex {0}")]
    MissingBoundary(VertexId),
    #[error("field lives on a different network")]
    NetworkMismatch,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Metric-graph state of an edge recorded by the signed-isomorphism assembly:
/// whether the cable-system field has no zero along it (`Covered`) or vanishes
/// somewhere on it (`Vanishing`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMark {
    Covered,
    Vanishing,
}

/// One realization of `φ + u` on a (possibly refined) network.
#[derive(Debug, Clone)]
pub struct FieldSample {
    network: Arc<Network>,
    values: Vec<f64>,
    boundary: BoundaryFunction,
    edge_uniforms: Vec<f64>,
    edge_marks: Option<Vec<EdgeMark>>,
    stream: u64,
}

impl FieldSample {
    /// Assembles a sample from raw parts; boundary entries of `values` are overwritten
    /// with `u`.
    pub fn from_parts(
        network: Arc<Network>,
        mut values: Vec<f64>,
        boundary: BoundaryFunction,
        edge_uniforms: Vec<f64>,
        edge_marks: Option<Vec<EdgeMark>>,
    ) -> Self {
        assert_eq!(values.len(), network.vertex_count());
        assert_eq!(edge_uniforms.len(), network.edge_count());
        for &b in network.boundary() {
            values[b] = boundary.get(b);
        }
        Self { network, values, boundary, edge_uniforms, edge_marks, stream: 0 }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, v: VertexId) -> f64 {
        self.values[v]
    }

    pub fn boundary_condition(&self) -> &BoundaryFunction {
        &self.boundary
    }

    /// One uniform per edge, fixed at sampling time, used for bridge-minimum decisions.
    pub fn edge_uniforms(&self) -> &[f64] {
        &self.edge_uniforms
    }

    pub fn edge_marks(&self) -> Option<&[EdgeMark]> {
        self.edge_marks.as_deref()
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Zero-boundary part `φ = field - u`.
    pub fn zero_boundary_part(&self) -> Vec<f64> {
        self.values.iter().zip(self.boundary.values()).map(|(f, u)| f - u).collect()
    }

    /// `-field` with boundary condition `-u`; edge uniforms and marks are shared.
    pub fn negated(&self) -> FieldSample {
        FieldSample {
            network: self.network.clone(),
            values: self.values.iter().map(|v| -v).collect(),
            boundary: self.boundary.negated(),
            edge_uniforms: self.edge_uniforms.clone(),
            edge_marks: self.edge_marks.clone(),
            stream: self.stream,
        }
    }
}

/// `u + L⁻ᵀ z` with `L Lᵀ = -Δ`, so the zero-boundary part has covariance `G`.
pub fn sample_discrete_gff<R: Rng + ?Sized>(
    net: &Arc<Network>,
    u: &BoundaryFunction,
    rng: &mut R,
) -> FieldSample {
    let k = net.interior().len();
    let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
    let mut phi = vec![0.0; k];
    net.factor().correlate(&z, &mut phi);
    let mut values = u.values().to_vec();
    for (i, &x) in net.interior().iter().enumerate() {
        values[x] += phi[i];
    }
    let edge_uniforms = (0..net.edge_count()).map(|_| rng.random::<f64>()).collect();
    FieldSample::from_parts(net.clone(), values, u.clone(), edge_uniforms, None)
}

/// Brownian-bridge interpolation of a base-network field onto `refined`, by recursive
/// midpoint sampling along each edge.
pub fn interpolate_field<R: Rng + ?Sized>(
    refined: &RefinedNetwork,
    field: &FieldSample,
    rng: &mut R,
) -> Result<FieldSample, GffError> {
    if !Arc::ptr_eq(field.network(), refined.base()) {
        return Err(GffError::NetworkMismatch);
    }
    if refined.level() == 0 {
        return Ok(field.clone());
    }
    let base = refined.base();
    let net = refined.network();
    let k = refined.segments_per_edge();
    let mut values = field.values.clone();
    values.resize(net.vertex_count(), 0.0);
    let mut seg = vec![0.0; k + 1];
    for (e, edge) in base.edges().iter().enumerate() {
        seg[0] = field.values[edge.a];
        seg[k] = field.values[edge.b];
        let r = edge.resistance();
        let mut half = k / 2;
        while half >= 1 {
            let span = r * (2 * half) as f64 / k as f64;
            let mut j = half;
            while j < k {
                seg[j] = sample_midpoint(seg[j - half], seg[j + half], span, rng);
                j += 2 * half;
            }
            half /= 2;
        }
        for j in 1..k {
            values[refined.node(e, j)] = seg[j];
        }
    }
    let u = lift_boundary(refined, &field.boundary);
    let edge_uniforms = (0..net.edge_count()).map(|_| rng.random::<f64>()).collect();
    Ok(FieldSample::from_parts(net.clone(), values, u, edge_uniforms, None).with_stream(field.stream))
}

/// Harmonic extension on the refined network of a base boundary function (linear along
/// edges).
pub fn lift_boundary(refined: &RefinedNetwork, u: &BoundaryFunction) -> BoundaryFunction {
    let lifted = refined.lift(u.values());
    harmonic_extension(refined.network(), &lifted).expect("lifted boundary data is finite")
}

/// `field = h_A + residual`, with `h_A` harmonic off `A` and `residual` zero on `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovDecomposition {
    pub harmonic: Vec<f64>,
    pub residual: Vec<f64>,
}

pub fn markov_decompose(field: &FieldSample, a: &[bool]) -> Result<MarkovDecomposition, GffError> {
    let net = field.network();
    if a.len() != net.vertex_count() {
        return Err(NetworkError::LengthMismatch { expected: net.vertex_count(), got: a.len() }.into());
    }
    if let Some(&b) = net.boundary().iter().find(|&&b| !a[b]) {
        return Err(GffError::MissingBoundary(b));
    }
    if a.iter().all(|&x| x) {
        return Ok(MarkovDecomposition {
            harmonic: field.values.clone(),
            residual: vec![0.0; net.vertex_count()],
        });
    }
    let punctured = net.with_extra_boundary(a)?;
    let h = harmonic_extension(&punctured, &field.values)?;
    let harmonic = h.values().to_vec();
    let residual = field.values.iter().zip(&harmonic).map(|(f, h)| f - h).collect();
    Ok(MarkovDecomposition { harmonic, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{grid, p3};
    use crate::network::green_function;
    use crate::refine::refine;
    use crate::rng::{stream, Purpose};

    #[test]
    fn sampling_is_deterministic_and_pins_boundary() {
        let net = Arc::new(grid(5, 5));
        let u = harmonic_extension(&net, &(0..25).map(|v| v as f64 * 0.1).collect::<Vec<_>>()).unwrap();
        let a = sample_discrete_gff(&net, &u, &mut stream(3, 0, Purpose::Field));
        let b = sample_discrete_gff(&net, &u, &mut stream(3, 0, Purpose::Field));
        assert_eq!(a.values(), b.values());
        assert_eq!(a.edge_uniforms(), b.edge_uniforms());
        for &x in net.boundary() {
            assert_eq!(a.get(x), u.get(x));
        }
    }

    #[test]
    fn p3_variance() {
        let net = Arc::new(p3());
        let u = BoundaryFunction::zero(&net);
        let mut rng = stream(1, 0, Purpose::Field);
        let n = 100_000;
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        for _ in 0..n {
            let x = sample_discrete_gff(&net, &u, &mut rng).get(1);
            s2 += x * x;
            s4 += x * x * x * x;
        }
        let var = s2 / n as f64;
        let se = ((s4 / n as f64 - var * var) / n as f64).sqrt();
        assert!((var - 0.5).abs() < 4.0 * se, "var={var} se={se}");
    }

    #[test]
    fn midpoint_matches_refined_green() {
        let base = Arc::new(p3());
        let r = refine(&base, 1);
        let mut pinned = vec![true; 5];
        let w = r.node(0, 1);
        pinned[w] = false;
        let g = green_function(&r.network().with_extra_boundary(&pinned).unwrap());
        assert!((g.get(w, w) - 1.0 / 4.0).abs() < 1e-12);
        // the bridge law used by interpolation: midpoint variance R/4 with R = 1
        let field = FieldSample::from_parts(
            base.clone(),
            vec![0.0; 3],
            BoundaryFunction::zero(&base),
            vec![0.5; 2],
            None,
        );
        let mut rng = stream(2, 0, Purpose::Interpolation);
        let n = 100_000;
        let (mut s2, mut s4) = (0.0, 0.0);
        for _ in 0..n {
            let x = interpolate_field(&r, &field, &mut rng).unwrap().get(w);
            s2 += x * x;
            s4 += x * x * x * x;
        }
        let var = s2 / n as f64;
        let se = ((s4 / n as f64 - var * var) / n as f64).sqrt();
        assert!((var - g.get(w, w)).abs() < 4.0 * se);
    }

    #[test]
    fn interpolation_level_zero_and_base_values() {
        let base = Arc::new(grid(4, 4));
        let u = BoundaryFunction::constant(&base, 0.7);
        let f = sample_discrete_gff(&base, &u, &mut stream(5, 0, Purpose::Field));
        let r0 = refine(&base, 0);
        assert_eq!(interpolate_field(&r0, &f, &mut stream(5, 0, Purpose::Interpolation)).unwrap().values(), f.values());
        let r2 = refine(&base, 2);
        let g = interpolate_field(&r2, &f, &mut stream(5, 0, Purpose::Interpolation)).unwrap();
        assert_eq!(&g.values()[..16], f.values());
        assert!(g.boundary_condition().values().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn markov_decomposition_cases() {
        let net = Arc::new(grid(5, 5));
        let u = BoundaryFunction::constant(&net, 1.0);
        let f = sample_discrete_gff(&net, &u, &mut stream(9, 0, Purpose::Field));
        let all = vec![true; 25];
        let d = markov_decompose(&f, &all).unwrap();
        assert!(d.residual.iter().all(|&r| r == 0.0));

        let bnd = net.boundary_mask().to_vec();
        let d = markov_decompose(&f, &bnd).unwrap();
        for &x in net.interior() {
            assert!((d.harmonic[x] - 1.0).abs() < 1e-12);
            assert!((d.residual[x] - (f.get(x) - 1.0)).abs() < 1e-12);
        }

        let mut a = bnd.clone();
        a[12] = true;
        let d = markov_decompose(&f, &a).unwrap();
        let lh = net.neg_laplacian(&d.harmonic);
        for v in 0..25 {
            assert!((d.harmonic[v] + d.residual[v] - f.get(v)).abs() < 1e-12);
            if !a[v] {
                assert!(lh[v].abs() < 1e-10);
            } else {
                assert_eq!(d.residual[v], 0.0);
            }
        }

        let mut missing = bnd;
        missing[0] = false;
        assert_eq!(markov_decompose(&f, &missing).unwrap_err(), GffError::MissingBoundary(0));
    }
}
