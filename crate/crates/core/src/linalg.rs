//! Sparse symmetric positive-definite factorization.
//!
//! Graph Laplacians restricted to the interior of a network are sparse, symmetric and
//! positive definite. They are factored here with an envelope (skyline) Cholesky
//! decomposition `P A Pᵀ = L Lᵀ`. The default ordering is reverse Cuthill–McKee, which
//! keeps the envelope of lattice-like graphs close to their bandwidth; callers that need
//! a prescribed elimination order (the loop-soup sampler does) can supply it directly.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;


/// Symmetric sparse matrix given by its diagonal and its strictly-lower entries.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    n: usize,
    diag: Vec<f64>,
    /// Adjacency lists of off-diagonal entries: `adj[i]` holds `(j, a_ij)` for `j != i`.
    adj: Vec<Vec<(usize, f64)>>,
}

impl SymmetricMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, diag: vec![0.0; n], adj: vec![Vec::new(); n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        self.diag[i] += v;
    }

    /// Adds `v` to both `a_ij` and `a_ji`.
    pub fn add_offdiag(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i != j);
        match self.adj[i].iter_mut().find(|(k, _)| *k == j) {
            Some(entry) => entry.1 += v,
            None => self.adj[i].push((j, v)),
        }
        match self.adj[j].iter_mut().find(|(k, _)| *k == i) {
            Some(entry) => entry.1 += v,
            None => self.adj[j].push((i, v)),
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = self.diag[i] * x[i];
            for &(j, a) in &self.adj[i] {
                s += a * x[j];
            }
            y[i] = s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is not positive definite (pivot {pivot} at row {row})")]
pub struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

/// Reverse Cuthill–McKee ordering. Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(m: &SymmetricMatrix) -> Vec<usize> {
    let n = m.dim();
    let degree = |i: usize| m.neighbors(i).len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree(i), i));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(m, seed);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> =
                m.neighbors(v).iter().map(|&(j, _)| j).filter(|&j| !visited[j]).collect();
            next.sort_by_key(|&j| (degree(j), j));
            for j in next {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Walks BFS level structures from `seed` until eccentricity stops growing.
fn pseudo_peripheral(m: &SymmetricMatrix, seed: usize) -> usize {
    let mut current = seed;
    let mut best_depth = 0;
    for _ in 0..8 {
        let (far, depth) = farthest(m, current);
        if depth <= best_depth {
            break;
        }
        best_depth = depth;
        current = far;
    }
    current
}

fn farthest(m: &SymmetricMatrix, start: usize) -> (usize, usize) {
    let n = m.dim();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    dist[start] = 0;
    queue.push_back(start);
    let mut far = (start, 0);
    while let Some(v) = queue.pop_front() {
        let d = dist[v];
        let deg_v = m.neighbors(v).len();
        if d > far.1 || (d == far.1 && deg_v < m.neighbors(far.0).len()) {
            far = (v, d);
        }
        for &(j, _) in m.neighbors(v) {
            if dist[j] == usize::MAX {
                dist[j] = d + 1;
                queue.push_back(j);
            }
        }
    }
    far
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ`, stored row by row from the first
/// structurally nonzero column of each row.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv[old] = new`
    inv: Vec<usize>,
}

impl EnvelopeCholesky {
    /// Factors with a reverse Cuthill–McKee ordering.
    pub fn new(m: &SymmetricMatrix) -> Result<Self, NotPositiveDefinite> {
        let perm = reverse_cuthill_mckee(m);
        Self::with_ordering(m, perm)
    }

    /// Factors with the elimination order `perm` (`perm[new] = old`).
    pub fn with_ordering(m: &SymmetricMatrix, perm: Vec<usize>) -> Result<Self, NotPositiveDefinite> {
        let n = m.dim();
        assert_eq!(perm.len(), n, "ordering must cover every row");
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        debug_assert!(inv.iter().all(|&i| i != usize::MAX));

        let mut first = vec![0usize; n];
        for r in 0..n {
            let old = perm[r];
            first[r] = m
                .neighbors(old)
                .iter()
                .map(|&(j, _)| inv[j])
                .filter(|&c| c < r)
                .min()
                .unwrap_or(r);
        }
        let mut start = vec![0usize; n + 1];
        for r in 0..n {
            start[r + 1] = start[r] + (r - first[r] + 1);
        }
        let mut vals = vec![0.0; start[n]];
        for r in 0..n {
            let old = perm[r];
            vals[start[r] + (r - first[r])] = m.diag(old);
            for &(j, a) in m.neighbors(old) {
                let c = inv[j];
                if c < r {
                    vals[start[r] + (c - first[r])] += a;
                }
            }
        }

        for r in 0..n {
            let fr = first[r];
            for c in fr..r {
                let fc = first[c];
                let lo = fr.max(fc);
                let mut s = vals[start[r] + (c - fr)];
                let row_r = &vals[start[r] + (lo - fr)..start[r] + (c - fr)];
                let row_c = &vals[start[c] + (lo - fc)..start[c] + (c - fc)];
                for (a, b) in row_r.iter().zip(row_c) {
                    s -= a * b;
                }
                let pivot = vals[start[c] + (c - fc)];
                vals[start[r] + (c - fr)] = s / pivot;
            }
            let row = &vals[start[r]..start[r] + (r - fr)];
            let d = vals[start[r] + (r - fr)] - row.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(NotPositiveDefinite { row: perm[r], pivot: d });
            }
            vals[start[r] + (r - fr)] = crate::math::sqrt(d);
        }

        Ok(Self { n, first, start, vals, perm, inv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries of `L`.
    pub fn envelope_size(&self) -> usize {
        self.vals.len()
    }

    pub fn ordering(&self) -> &[usize] {
        &self.perm
    }

    /// Position of original row `old` in the elimination order.
    pub fn position(&self, old: usize) -> usize {
        self.inv[old]
    }

    #[inline]
    fn l(&self, r: usize, c: usize) -> f64 {
        self.vals[self.start[r] + (c - self.first[r])]
    }

    #[inline]
    fn pivot(&self, r: usize) -> f64 {
        self.l(r, r)
    }

    /// Solves `L y = b` in permuted coordinates, in place.
    fn forward(&self, y: &mut [f64]) {
        for r in 0..self.n {
            let fr = self.first[r];
            let row = &self.vals[self.start[r]..self.start[r] + (r - fr)];
            let mut s = y[r];
            for (a, x) in row.iter().zip(&y[fr..r]) {
                s -= a * x;
            }
            y[r] = s / self.pivot(r);
        }
    }

    /// Solves `Lᵀ x = y` restricted to the leading `len` rows, in place.
    fn backward(&self, x: &mut [f64], len: usize) {
        for r in (0..len).rev() {
            let fr = self.first[r];
            x[r] /= self.pivot(r);
            let xr = x[r];
            let row = &self.vals[self.start[r]..self.start[r] + (r - fr)];
            for (a, slot) in row.iter().zip(&mut x[fr..r]) {
                *slot -= a * xr;
            }
        }
    }

    /// Solves `A x = b` (original coordinates); `b` is overwritten with `x`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.forward(&mut y);
        self.backward(&mut y, self.n);
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    /// Maps i.i.d. standard normals `z` to a centred Gaussian vector with covariance
    /// `A⁻¹`, written in original coordinates into `out`.
    pub fn correlate(&self, z: &[f64], out: &mut [f64]) {
        let mut x = z.to_vec();
        self.backward(&mut x, self.n);
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|r| 2.0 * crate::math::ln(self.pivot(r))).sum()
    }

    /// `(A_p⁻¹)_{pp}` where `A_p` is the leading principal block of the permuted matrix
    /// on positions `0..=p`.
    pub fn leading_diag_inverse(&self, p: usize) -> f64 {
        let l = self.pivot(p);
        1.0 / (l * l)
    }

    /// Column `p` of `A_p⁻¹` (leading block on positions `0..=p`), in permuted
    /// coordinates; entries past `p` are left untouched.
    pub fn leading_column(&self, p: usize, out: &mut [f64]) {
        for v in out[..=p].iter_mut() {
            *v = 0.0;
        }
        out[p] = 1.0 / self.pivot(p);
        self.backward(out, p + 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn grid_laplacian(w: usize, h: usize) -> SymmetricMatrix {
        let mut m = SymmetricMatrix::new(w * h);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                m.add_diag(i, 4.0);
                if x + 1 < w {
                    m.add_offdiag(i, i + 1, -1.0);
                }
                if y + 1 < h {
                    m.add_offdiag(i, i + w, -1.0);
                }
            }
        }
        m
    }

    fn dense(m: &SymmetricMatrix) -> DMatrix<f64> {
        let n = m.dim();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = m.diag(i);
            for &(j, a) in m.neighbors(i) {
                d[(i, j)] = a;
            }
        }
        d
    }

    #[test]
    fn solve_matches_dense_inverse() {
        let m = grid_laplacian(6, 5);
        let f = EnvelopeCholesky::new(&m).unwrap();
        let inv = dense(&m).try_inverse().unwrap();
        for col in 0..m.dim() {
            let mut b = vec![0.0; m.dim()];
            b[col] = 1.0;
            f.solve_in_place(&mut b);
            for row in 0..m.dim() {
                assert!((b[row] - inv[(row, col)]).abs() < 1e-12);
            }
        }
        let ld = dense(&m).determinant().ln();
        assert!((f.log_det() - ld).abs() < 1e-9);
    }

    #[test]
    fn rcm_keeps_grid_envelope_small() {
        let m = grid_laplacian(20, 20);
        let f = EnvelopeCholesky::new(&m).unwrap();
        // bandwidth ~20 -> envelope well below the dense 400*401/2
        assert!(f.envelope_size() < 400 * 25, "envelope {}", f.envelope_size());
    }

    #[test]
    fn leading_blocks_invert_trailing_submatrices() {
        let m = grid_laplacian(3, 3);
        let order: Vec<usize> = (0..9).rev().collect();
        let f = EnvelopeCholesky::with_ordering(&m, order.clone()).unwrap();
        let d = dense(&m);
        for p in 0..9 {
            let idx: Vec<usize> = order[..=p].to_vec();
            let sub = DMatrix::from_fn(p + 1, p + 1, |a, b| d[(idx[a], idx[b])]);
            let inv = sub.try_inverse().unwrap();
            assert!((f.leading_diag_inverse(p) - inv[(p, p)]).abs() < 1e-12);
            let mut col = vec![0.0; 9];
            f.leading_column(p, &mut col);
            for a in 0..=p {
                assert!((col[a] - inv[(a, p)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut m = SymmetricMatrix::new(2);
        m.add_diag(0, 1.0);
        m.add_diag(1, 1.0);
        m.add_offdiag(0, 1, -2.0);
        assert!(EnvelopeCholesky::new(&m).is_err());
    }
}
