use std::sync::Arc;

use gfflab_core::clusters::{assemble_field, build_clusters, excursion_cluster_union};
use gfflab_core::fps::{first_passage_set, upper_fps};
use gfflab_core::gff::{interpolate_field, lift_boundary, sample_discrete_gff};
use gfflab_core::refine::refine;
use gfflab_core::rng::{stream, Purpose};
use gfflab_core::soups::{occupation_field, rotational_multiplicity, sample_excursion_ppp, sample_loop_soup};
use gfflab_core::{build_network, green_function, harmonic_extension, BoundaryFunction, Edge, Network, NetworkSpec};
use proptest::prelude::*;

/// `w × h` grid with random conductances; the outer ring is the boundary.
fn grid(w: usize, h: usize, conductances: &[f64]) -> Arc<Network> {
    let id = |i: usize, j: usize| j * w + i;
    let mut edges = Vec::new();
    let mut boundary = Vec::new();
    let mut positions = Vec::new();
    for j in 0..h {
        for i in 0..w {
            positions.push([i as f64, j as f64]);
            if i == 0 || j == 0 || i + 1 == w || j + 1 == h {
                boundary.push(id(i, j));
            }
            if i + 1 < w {
                edges.push((id(i, j), id(i + 1, j)));
            }
            if j + 1 < h {
                edges.push((id(i, j), id(i, j + 1)));
            }
        }
    }
    let edges = edges
        .into_iter()
        .enumerate()
        .map(|(k, (a, b))| Edge::new(a, b, conductances[k % conductances.len()]))
        .collect();
    let spec = NetworkSpec { vertex_count: w * h, positions: Some(positions), edges, boundary, arcs: vec![] };
    Arc::new(build_network(&spec).unwrap())
}

fn net_strategy() -> impl Strategy<Value = Arc<Network>> {
    (3usize..7, 3usize..7, prop::collection::vec(0.2f64..3.0, 1..12)).prop_map(|(w, h, c)| grid(w, h, &c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn green_function_inverts_the_laplacian(net in net_strategy()) {
        let g = green_function(&net);
        let inner = net.interior();
        for (j, &y) in inner.iter().enumerate() {
            let mut col = vec![0.0; net.vertex_count()];
            for (i, &x) in inner.iter().enumerate() {
                col[x] = g.at(i, j);
                prop_assert!((g.at(i, j) - g.at(j, i)).abs() < 1e-10);
                prop_assert!(g.at(i, j) > 0.0);
            }
            let lap = net.neg_laplacian(&col);
            for &x in inner {
                let want = if x == y { 1.0 } else { 0.0 };
                prop_assert!((lap[x] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn harmonic_extension_obeys_the_maximum_principle(net in net_strategy(), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = stream(seed, 0, Purpose::Extra(1));
        let bv: Vec<f64> = (0..net.vertex_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let u = harmonic_extension(&net, &bv).unwrap();
        let (lo, hi) = net.boundary().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &b| (l.min(bv[b]), h.max(bv[b])));
        let lap = net.neg_laplacian(u.values());
        for &x in net.interior() {
            prop_assert!(lap[x].abs() < 1e-9);
            prop_assert!(u.get(x) >= lo - 1e-12 && u.get(x) <= hi + 1e-12);
        }
    }

    #[test]
    fn first_passage_sets_grow_with_the_level(net in net_strategy(), seed in any::<u64>(), u in -1.0f64..1.0) {
        let bf = BoundaryFunction::constant(&net, u);
        let field = sample_discrete_gff(&net, &bf, &mut stream(seed, 0, Purpose::Field));
        let mut prev = first_passage_set(&field, -1.5, true);
        for a in [-0.5, 0.0, 0.7, 2.0] {
            let next = first_passage_set(&field, a, true);
            prop_assert!(prev.is_subset_of(&next));
            prop_assert!(next.components_touch_boundary());
            for &v in net.interior() {
                if next.contains_vertex(v) {
                    prop_assert!(field.get(v) >= -a);
                }
            }
            prev = next;
        }
        let up = upper_fps(&field, 0.0, true);
        prop_assert_eq!(up, first_passage_set(&field.negated(), 0.0, true));
    }

    #[test]
    fn refinement_lift_restrict_round_trip(net in net_strategy(), m in 1u32..3, seed in any::<u64>()) {
        let fine = refine(&net, m);
        prop_assert_eq!(fine.network().edge_count(), net.edge_count() << m);
        let bf = BoundaryFunction::constant(&net, 0.4);
        let field = sample_discrete_gff(&net, &bf, &mut stream(seed, 0, Purpose::Field));
        let interp = interpolate_field(&fine, &field, &mut stream(seed, 0, Purpose::Interpolation)).unwrap();
        for v in 0..net.vertex_count() {
            prop_assert_eq!(interp.get(v), field.get(v));
        }
        let coarse = refine(&net, 0);
        prop_assert_eq!(fine.restrict_to(&coarse, interp.values()), field.values().to_vec());
        let lifted = lift_boundary(&fine, &bf);
        for &b in fine.network().boundary() {
            prop_assert!((lifted.get(b) - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn soups_and_clusters_are_consistent(net in net_strategy(), seed in any::<u64>(), u in 0.0f64..1.5) {
        let bf = BoundaryFunction::constant(&net, u);
        let loops = sample_loop_soup(&net, 0.5, &mut stream(seed, 0, Purpose::LoopSoup)).unwrap();
        let exc = sample_excursion_ppp(&net, &bf, &mut stream(seed, 0, Purpose::Excursions)).unwrap();
        for t in &loops.trajectories {
            prop_assert_eq!(t.vertices.len(), t.holding.len());
            prop_assert_eq!(t.start(), t.end());
            prop_assert!(t.holding[..t.len()].iter().all(|&h| h > 0.0));
            prop_assert_eq!(t.holding[t.len()], 0.0);
            prop_assert_eq!(t.skeleton().len() % rotational_multiplicity(t.skeleton()), 0);
            for (a, b) in t.steps() {
                prop_assert!(net.find_edge(a, b).is_some());
            }
        }
        for t in &exc.trajectories {
            prop_assert!(net.is_boundary(t.start()) && net.is_boundary(t.end()));
        }
        prop_assert!(occupation_field(&loops, true).values.iter().all(|&x| x >= 0.0));
        let partition = build_clusters(&loops, &exc).unwrap();
        let total: usize = partition.clusters().iter().map(|c| c.trajectories.len()).sum();
        prop_assert_eq!(total, loops.trajectories.len() + exc.trajectories.len());

        let (field, assembled) = assemble_field(&loops, &exc, &mut stream(seed, 0, Purpose::Signs)).unwrap();
        for &b in net.boundary() {
            prop_assert!((field.get(b) - u).abs() < 1e-12);
        }
        prop_assert_eq!(first_passage_set(&field, 0.0, false), excursion_cluster_union(&assembled));
    }
}
