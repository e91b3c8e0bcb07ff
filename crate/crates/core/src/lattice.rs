//! Networks induced by `(2^-n Z)²` inside planar regions.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::network::{BoundaryArc, Edge, LatticeInfo, Network, NetworkError, VertexId};

const EPS: f64 = 1e-12;

/// Bounded planar region built from axis-aligned rectangles and disks.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
    Union(Vec<Region>),
}

impl Region {
    pub fn unit_square() -> Self {
        Region::Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 }
    }

    /// `Λ_N = {-N..N}²`, meant for level 0.
    pub fn centered_box(n: u32) -> Self {
        let n = f64::from(n);
        Region::Rect { x0: -n, y0: -n, x1: n, y1: n }
    }

    pub fn unit_disk() -> Self {
        Region::Disk { cx: 0.0, cy: 0.0, r: 1.0 }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Region::Rect { x0, y0, x1, y1 } => {
                p[0] >= x0 - EPS && p[0] <= x1 + EPS && p[1] >= y0 - EPS && p[1] <= y1 + EPS
            }
            Region::Disk { cx, cy, r } => {
                let (dx, dy) = (p[0] - cx, p[1] - cy);
                dx * dx + dy * dy <= r * r + EPS
            }
            Region::Union(parts) => parts.iter().any(|r| r.contains(p)),
        }
    }

    /// `[xmin, ymin, xmax, ymax]`.
    pub fn bounding_box(&self) -> [f64; 4] {
        match self {
            Region::Rect { x0, y0, x1, y1 } => [*x0, *y0, *x1, *y1],
            Region::Disk { cx, cy, r } => [cx - r, cy - r, cx + r, cy + r],
            Region::Union(parts) => parts.iter().map(Region::bounding_box).fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |a, b| [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])],
            ),
        }
    }
}

/// Splits the boundary by the vertical line `x = split` into `B1` (right, `x ≥ split`)
/// and `B2` (left).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalSplit {
    pub x: f64,
}

pub const ARC_RIGHT: &str = "B1";
pub const ARC_LEFT: &str = "B2";

/// Builds the unit-conductance network on the lattice points of `region` at mesh
/// `2^-level`. A vertex is on the boundary iff one of its four lattice neighbours lies
/// outside the region.
pub fn lattice_domain(
    region: &Region,
    level: u32,
    split: Option<VerticalSplit>,
) -> Result<Network, NetworkError> {
    let h = 1.0 / (1u64 << level) as f64;
    let [xmin, ymin, xmax, ymax] = region.bounding_box();
    let (i0, i1) = (math::floor(xmin / h - EPS) as i64, math::ceil(xmax / h + EPS) as i64);
    let (j0, j1) = (math::floor(ymin / h - EPS) as i64, math::ceil(ymax / h + EPS) as i64);
    let w = (i1 - i0 + 1) as usize;
    let hgt = (j1 - j0 + 1) as usize;
    let inside = |i: i64, j: i64| region.contains([i as f64 * h, j as f64 * h]);

    let mut id = vec![usize::MAX; w * hgt];
    let slot = |i: i64, j: i64| ((j - j0) as usize) * w + (i - i0) as usize;
    let mut coords = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            if inside(i, j) {
                id[slot(i, j)] = coords.len();
                coords.push([i, j]);
            }
        }
    }
    let lookup = |i: i64, j: i64| -> Option<VertexId> {
        if i < i0 || i > i1 || j < j0 || j > j1 {
            return None;
        }
        match id[slot(i, j)] {
            usize::MAX => None,
            v => Some(v),
        }
    };

    let n = coords.len();
    let mut edges = Vec::new();
    let mut is_boundary = vec![false; n];
    for (v, &[i, j]) in coords.iter().enumerate() {
        for (di, dj) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
            match lookup(i + di, j + dj) {
                Some(u) if di + dj > 0 => edges.push(Edge::new(v, u, 1.0)),
                Some(_) => {}
                None => is_boundary[v] = true,
            }
        }
    }
    if !is_boundary.iter().any(|b| !b) {
        return Err(NetworkError::RegionTooSmall(level));
    }

    let positions: Vec<[f64; 2]> = coords.iter().map(|&[i, j]| [i as f64 * h, j as f64 * h]).collect();
    let mut arcs = Vec::new();
    let mut marked_faces = Vec::new();
    if let Some(VerticalSplit { x }) = split {
        let right: Vec<VertexId> =
            (0..n).filter(|&v| is_boundary[v] && positions[v][0] >= x - EPS).collect();
        let left: Vec<VertexId> =
            (0..n).filter(|&v| is_boundary[v] && positions[v][0] < x - EPS).collect();
        let mut side = vec![0u8; n];
        for &v in &right {
            side[v] = 1;
        }
        for &v in &left {
            side[v] = 2;
        }
        // faces with a corner on each arc and a corner outside the domain
        let mut candidates = Vec::new();
        for j in (j0 - 1)..=j1 {
            for i in (i0 - 1)..=i1 {
                let corners = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)];
                let mut has = [false; 3];
                for (ci, cj) in corners {
                    match lookup(ci, cj) {
                        None => has[0] = true,
                        Some(v) if side[v] > 0 => has[side[v] as usize] = true,
                        Some(_) => {}
                    }
                }
                if has.iter().all(|&b| b) {
                    candidates.push([i, j]);
                }
            }
        }
        let xs = x / h - 0.5;
        let dist = |f: &[i64; 2]| (f[0] as f64 - xs).abs();
        let bottom = candidates
            .iter()
            .min_by(|a, b| a[1].cmp(&b[1]).then(dist(a).total_cmp(&dist(b))))
            .copied();
        let top = candidates
            .iter()
            .min_by(|a, b| b[1].cmp(&a[1]).then(dist(a).total_cmp(&dist(b))))
            .copied();
        if let (Some(b), Some(t)) = (bottom, top) {
            marked_faces.push(b);
            marked_faces.push(t);
        }
        arcs.push(BoundaryArc { name: ARC_RIGHT.to_string(), vertices: right });
        arcs.push(BoundaryArc { name: ARC_LEFT.to_string(), vertices: left });
    }

    let info = LatticeInfo { spacing: h, coords, marked_faces };
    Network::assemble(n, edges, is_boundary, Some(positions), arcs, Some(Arc::new(info)), None)
}

/// Union of several regions.
pub fn union(parts: impl IntoIterator<Item = Region>) -> Region {
    Region::Union(parts.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_level_two() {
        let net = lattice_domain(&Region::unit_square(), 2, None).unwrap();
        assert_eq!(net.vertex_count(), 25);
        assert_eq!(net.boundary().len(), 16);
        assert_eq!(net.interior().len(), 9);
        assert!(net.edges().iter().all(|e| e.conductance == 1.0));
    }

    #[test]
    fn box_boundary_is_outer_ring() {
        let net = lattice_domain(&Region::centered_box(4), 0, None).unwrap();
        assert_eq!(net.vertex_count(), 81);
        let info = net.lattice().unwrap();
        for v in 0..81 {
            let [i, j] = info.coords[v];
            assert_eq!(net.is_boundary(v), i.abs() == 4 || j.abs() == 4);
        }
    }

    #[test]
    fn tiny_region_is_rejected() {
        let r = Region::Rect { x0: 0.0, y0: 0.0, x1: 0.5, y1: 0.5 };
        assert_eq!(lattice_domain(&r, 1, None).unwrap_err(), NetworkError::RegionTooSmall(1));
    }

    #[test]
    fn split_disk_arcs_meet_only_at_marked_squares() {
        let net = lattice_domain(&Region::unit_disk(), 3, Some(VerticalSplit { x: 0.0 })).unwrap();
        let info = net.lattice().unwrap();
        // brute-force scan of the lattice points
        let pts: Vec<[i64; 2]> = (-8..=8i64)
            .flat_map(|j| (-8..=8i64).map(move |i| [i, j]))
            .filter(|&[i, j]| i * i + j * j <= 64)
            .collect();
        assert_eq!(pts.len(), net.vertex_count());
        let right = &net.arc(ARC_RIGHT).unwrap().vertices;
        let left = &net.arc(ARC_LEFT).unwrap().vertices;
        assert_eq!(right.len() + left.len(), net.boundary().len());
        assert_eq!(info.marked_faces.len(), 2);
        let (bottom, top) = (info.marked_faces[0], info.marked_faces[1]);
        assert!(bottom[1] < 0 && top[1] > 0);
        let on_face = |f: [i64; 2], c: [i64; 2]| (c[0] - f[0]) as u64 <= 1 && (c[1] - f[1]) as u64 <= 1;
        // every pair of touching (8-neighbour) vertices from opposite arcs sits on a marked face
        for &r in right {
            for &l in left {
                let (a, b) = (info.coords[r], info.coords[l]);
                if (a[0] - b[0]).abs() <= 1 && (a[1] - b[1]).abs() <= 1 {
                    let shared = [bottom, top].iter().any(|&f| on_face(f, a) && on_face(f, b));
                    assert!(shared, "arcs touch at {a:?} / {b:?} away from the marked squares");
                }
            }
        }
    }
}
