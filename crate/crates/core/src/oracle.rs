//! Brute-force references for the loop and excursion measures on small networks.
//!
//! These sum over paths directly and are exponentially slower than the closed forms in
//! [`crate::network`] and [`crate::soups`]; they exist to validate them.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::network::{Network, VertexId};
use crate::soups::loop_measure_weight;

/// Path-sum approximation of the boundary Poisson kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSumKernel {
    pub boundary: Vec<VertexId>,
    /// Boundary × boundary, row-major.
    pub values: Vec<f64>,
    /// Upper bound on the mass of the omitted paths, valid for every entry.
    pub tail_bound: f64,
}

impl PathSumKernel {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.boundary.len() + j]
    }
}

fn interior_transition(net: &Network) -> Vec<Vec<f64>> {
    let k = net.interior().len();
    let mut p = vec![vec![0.0; k]; k];
    for (i, &x) in net.interior().iter().enumerate() {
        for inc in net.incident(x) {
            if let Some(j) = net.interior_index(inc.to) {
                p[i][j] += inc.conductance / net.total_conductance(x);
            }
        }
    }
    p
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    let mut c = vec![vec![0.0; k]; k];
    for i in 0..k {
        for l in 0..k {
            let ail = a[i][l];
            if ail != 0.0 {
                for j in 0..k {
                    c[i][j] += ail * b[l][j];
                }
            }
        }
    }
    c
}

fn row_norm(a: &[Vec<f64>]) -> f64 {
    a.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Sums `∏ C(x_{i-1}, x_i) ∏ C_tot(x_i)^{-1}` over every skeleton `x, z_1 … z_n, y` with
/// `1 ≤ n ≤ max_interior_visits` interior visits.
///
/// The tail bound uses `q = ‖P^s‖_∞ < 1` for the smallest such `s`:
/// omitted mass `≤ C_b(x) ‖P^N‖_∞ s / (1 - q)`.
pub fn poisson_kernel_by_paths(net: &Network, max_interior_visits: usize) -> PathSumKernel {
    let bnd = net.boundary().to_vec();
    let b = bnd.len();
    let k = net.interior().len();
    let p = interior_transition(net);
    let mut values = vec![0.0; b * b];
    let mut max_cb: f64 = 0.0;
    for (i, &x) in bnd.iter().enumerate() {
        // g_n(z) = Σ over walks x, z_1 … z_n = z of C(x, z_1) ∏_{m<n} p(z_m, z_{m+1})
        let mut g = vec![0.0; k];
        for inc in net.incident(x) {
            if let Some(zi) = net.interior_index(inc.to) {
                g[zi] += inc.conductance;
            }
        }
        max_cb = max_cb.max(g.iter().sum());
        for _ in 0..max_interior_visits {
            for (zi, &z) in net.interior().iter().enumerate() {
                if g[zi] == 0.0 {
                    continue;
                }
                for inc in net.incident(z) {
                    if net.is_boundary(inc.to) {
                        let j = bnd.iter().position(|&y| y == inc.to).unwrap();
                        values[i * b + j] += g[zi] * inc.conductance / net.total_conductance(z);
                    }
                }
            }
            let mut next = vec![0.0; k];
            for zi in 0..k {
                if g[zi] != 0.0 {
                    for zj in 0..k {
                        next[zj] += g[zi] * p[zi][zj];
                    }
                }
            }
            g = next;
        }
    }

    let mut power = p.clone();
    let mut s = 1;
    while row_norm(&power) >= 1.0 - 1e-12 && s <= k + 1 {
        power = mat_mul(&power, &p);
        s += 1;
    }
    let q = row_norm(&power);
    let mut pn = vec![vec![0.0; k]; k];
    for (i, row) in pn.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..max_interior_visits {
        pn = mat_mul(&pn, &p);
    }
    let tail_bound = max_cb * row_norm(&pn) * s as f64 / (1.0 - q);
    PathSumKernel { boundary: bnd, values, tail_bound }
}

/// Total loop mass `Σ_{n ≤ N} tr(Pⁿ)/n` with a bound on the omitted terms.
pub fn loop_mass_by_traces(net: &Network, max_len: usize) -> (f64, f64) {
    let p = interior_transition(net);
    let k = p.len();
    let mut pn = p.clone();
    let mut total = 0.0;
    for n in 1..=max_len {
        total += (0..k).map(|i| pn[i][i]).sum::<f64>() / n as f64;
        pn = mat_mul(&pn, &p);
    }
    // tr(Pⁿ) ≤ k ‖Pⁿ‖_∞ and ‖P^{N+1+j}‖ ≤ ‖P^{N+1}‖ q^{⌊j/s⌋}
    let mut power = p.clone();
    let mut s = 1;
    while row_norm(&power) >= 1.0 - 1e-12 && s <= k + 1 {
        power = mat_mul(&power, &p);
        s += 1;
    }
    let q = row_norm(&power);
    let tail = k as f64 * row_norm(&pn) * s as f64 / ((1.0 - q) * (max_len + 1) as f64);
    (total, tail)
}

/// Canonical representative of a cyclic sequence: its lexicographically least rotation.
pub fn canonical_rotation(s: &[VertexId]) -> Vec<VertexId> {
    let n = s.len();
    (0..n)
        .map(|r| (0..n).map(|i| s[(r + i) % n]).collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

/// Every unrooted interior loop class with `2 ≤ length ≤ max_len` jumps and its mass.
pub fn enumerate_loop_classes(net: &Network, max_len: usize) -> BTreeMap<Vec<VertexId>, f64> {
    let mut out = BTreeMap::new();
    let mut path = Vec::new();
    for &start in net.interior() {
        path.clear();
        path.push(start);
        extend(net, start, max_len, &mut path, &mut out);
    }
    out
}

fn extend(
    net: &Network,
    start: VertexId,
    max_len: usize,
    path: &mut Vec<VertexId>,
    out: &mut BTreeMap<Vec<VertexId>, f64>,
) {
    let x = path[path.len() - 1];
    for inc in net.incident(x) {
        let y = inc.to;
        if net.is_boundary(y) || y < start {
            continue;
        }
        if y == start && path.len() >= 2 {
            let key = canonical_rotation(path);
            out.entry(key).or_insert_with_key(|k| loop_measure_weight(net, k).expect("enumerated loops are valid"));
        }
        if path.len() < max_len {
            path.push(y);
            extend(net, start, max_len, path, out);
            path.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::boundary_poisson_kernel;
    use crate::network::fixtures::{grid, p3, triangle};
    use crate::soups::total_loop_mass;

    #[test]
    fn path_sum_matches_closed_form() {
        for net in [p3(), triangle(), grid(3, 3), grid(4, 3)] {
            let closed = boundary_poisson_kernel(&net);
            let sum = poisson_kernel_by_paths(&net, 40);
            let b = net.boundary().len();
            for i in 0..b {
                for j in 0..b {
                    let d = closed.at(i, j) - sum.at(i, j);
                    assert!(d >= -1e-12 && d <= sum.tail_bound + 1e-12, "{d} vs {}", sum.tail_bound);
                }
            }
        }
        let p = poisson_kernel_by_paths(&p3(), 5);
        assert!((p.at(0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(p.tail_bound, 0.0);
    }

    #[test]
    fn triangle_loop_mass() {
        let t = triangle();
        let (m, tail) = loop_mass_by_traces(&t, 30);
        let exact = (4.0f64 / 3.0).ln();
        assert!((exact - m).abs() <= tail);
        assert!((total_loop_mass(&t) - exact).abs() < 1e-14);
        let classes = enumerate_loop_classes(&t, 30);
        let sum: f64 = classes.values().sum();
        assert!((sum - exact).abs() < 1e-8);
        assert!((classes[&alloc::vec![0, 1]] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn enumeration_matches_determinant_on_grid() {
        let net = grid(4, 4);
        let classes = enumerate_loop_classes(&net, 12);
        let sum: f64 = classes.values().sum();
        let (traces, _) = loop_mass_by_traces(&net, 12);
        assert!((sum - traces).abs() < 1e-12);
        assert!(sum < total_loop_mass(&net));
    }
}
