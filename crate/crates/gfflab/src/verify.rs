//! Statistical and exact checks of the isomorphism, moment, percolation and coupling
//! identities. Each test returns a [`TestReport`]; the pass/fail verdict is a function of
//! the recorded numbers only.

use std::sync::Arc;
use std::time::Instant;

use gfflab_core::bridge::{bridge_min_above, sample_midpoint, BridgeQuery};
use gfflab_core::clusters::{assemble_field, excursion_cluster_union, ClusterError, DisjointSets};
use gfflab_core::fps::{extract_interface, first_passage_set, hausdorff, MetricSubset};
use gfflab_core::gff::{interpolate_field, lift_boundary, sample_discrete_gff, FieldSample};
use gfflab_core::lattice::{lattice_domain, Region, ARC_LEFT, ARC_RIGHT};
use gfflab_core::linalg::EnvelopeCholesky;
use gfflab_core::oracle::{canonical_rotation, enumerate_loop_classes, poisson_kernel_by_paths};
use gfflab_core::refine::{refine, RefinedNetwork};
use gfflab_core::rng::{stream, Purpose};
use gfflab_core::soups::{
    excursion_hitting_mass, occupation_field, total_loop_mass, ExcursionSampler, LoopSoupSampler, SoupSample,
    TrajectoryKind,
};
use gfflab_core::{
    boundary_poisson_kernel, dirichlet_energy, green_function, harmonic_extension, rescale_conductances,
    BoundaryFunction, Network, VertexId,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netspec::{BoundarySpec, DomainSpec};
use crate::parallel::Pool;
use crate::report::{Comparison, Rule, TestReport};
use crate::stats::{self, Estimate};

/// Gate settings; defaults are 4 standard errors and KS `p = 0.01`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub sigmas: f64,
    pub ks_p: f64,
    /// Fraction of vertices whose KS p-value must exceed `ks_p`.
    pub ks_fraction: f64,
    /// Importance sampling needs at least this effective sample fraction.
    pub min_ess_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { sigmas: 4.0, ks_p: 0.01, ks_fraction: 0.95, min_ess_fraction: 0.1 }
    }
}

/// Shared settings for one run.
#[derive(Debug)]
pub struct Ctx<'a> {
    pub pool: &'a Pool,
    pub seed: u64,
    pub tol: Tolerances,
}

struct Samplers {
    loops: LoopSoupSampler,
    exc: ExcursionSampler,
}

impl Samplers {
    fn new(net: &Arc<Network>, u: &BoundaryFunction) -> Result<Self> {
        Ok(Samplers { loops: LoopSoupSampler::new(net), exc: ExcursionSampler::new(net, u)? })
    }

    fn draw(&self, alpha: f64, seed: u64, r: u64) -> Result<(SoupSample, SoupSample)> {
        let loops = self.loops.sample(alpha, &mut stream(seed, r, Purpose::LoopSoup))?;
        let exc = self.exc.sample(&mut stream(seed, r, Purpose::Excursions));
        Ok((loops, exc))
    }
}

fn interior_occupation(net: &Network, loops: &SoupSample, exc: &SoupSample) -> Vec<f64> {
    let mut occ = occupation_field(loops, true);
    occ.add(&occupation_field(exc, false));
    net.interior().iter().map(|&x| occ.get(x)).collect()
}

fn columns(rows: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    (0..k).map(|i| rows.iter().map(|r| r[i]).collect()).collect()
}

/// Up to `count` index pairs `i < j`, spread evenly over all pairs.
fn spread_pairs(k: usize, count: usize) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    if all.len() <= count {
        return all;
    }
    (0..count).map(|t| all[t * (all.len() - 1) / (count - 1)]).collect()
}

fn require_nonnegative(net: &Network, u: &BoundaryFunction) -> Result<()> {
    if let Some(&b) = net.boundary().iter().find(|&&b| !(u.get(b) >= 0.0)) {
        return Err(ClusterError::NegativeBoundary { vertex: b, value: u.get(b) }.into());
    }
    Ok(())
}

fn check_len(net: &Network, got: usize) -> Result<()> {
    if got != net.vertex_count() {
        return Err(Error::invalid(format!("expected {} vertex values, got {got}", net.vertex_count())));
    }
    Ok(())
}

fn finish(mut report: TestReport, start: Instant) -> TestReport {
    report.runtime = start.elapsed();
    report
}

/// Occupation field of `𝓛_{1/2} ∪ Ξ_u` against `½(φ+u)²`.
pub fn test_isomorphism_discrete(
    ctx: &Ctx,
    net: &Arc<Network>,
    u: &BoundaryFunction,
    replicas: usize,
) -> Result<TestReport> {
    let start = Instant::now();
    require_nonnegative(net, u)?;
    let samplers = Samplers::new(net, u)?;
    let seed = ctx.seed;
    let rows = ctx.pool.try_map(replicas, |r| -> Result<(Vec<f64>, Vec<f64>)> {
        let (loops, exc) = samplers.draw(0.5, seed, r)?;
        let occ = interior_occupation(net, &loops, &exc);
        let phi = sample_discrete_gff(net, u, &mut stream(seed, r, Purpose::Field));
        let sq = net.interior().iter().map(|&x| 0.5 * phi.get(x) * phi.get(x)).collect();
        Ok((occ, sq))
    })?;
    let k = net.interior().len();
    let (occ, sq): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let (a, b) = (columns(&occ, k), columns(&sq, k));
    let green = green_function(net);
    let sig = ctx.tol.sigmas;

    let mut report = TestReport::new("isomorphism_discrete", replicas, seed);
    let mut ks_ok = 0;
    for (i, &x) in net.interior().iter().enumerate() {
        let exact = 0.5 * (green.at(i, i) + u.get(x) * u.get(x));
        report.push(Comparison::within(format!("mean_occupation[{x}]"), stats::mean(&a[i]), exact, sig));
        report.push(Comparison::within(
            format!("mean_diff[{x}]"),
            stats::difference(stats::mean(&a[i]), stats::mean(&b[i])),
            0.0,
            sig,
        ));
        report.push(Comparison::within(
            format!("var_diff[{x}]"),
            stats::difference(stats::variance(&a[i]), stats::variance(&b[i])),
            0.0,
            sig,
        ));
        if stats::ks_two_sample(&a[i], &b[i]).p_value > ctx.tol.ks_p {
            ks_ok += 1;
        }
    }
    for (i, j) in spread_pairs(k, 10) {
        let (x, y) = (net.interior()[i], net.interior()[j]);
        report.push(Comparison::within(
            format!("cov_diff[{x},{y}]"),
            stats::difference(stats::covariance(&a[i], &a[j]), stats::covariance(&b[i], &b[j])),
            0.0,
            sig,
        ));
    }
    report.push(Comparison::new(
        "ks_pass_fraction",
        Estimate { value: ks_ok as f64 / k as f64, stderr: 0.0 },
        ctx.tol.ks_fraction,
        0.0,
        Rule::AtLeast,
    ));
    Ok(finish(report, start))
}

/// Assembled signed field against the exact Gaussian marginals `N(u(x), G(x,x))`.
pub fn test_signed_isomorphism(
    ctx: &Ctx,
    net: &Arc<Network>,
    u: &BoundaryFunction,
    replicas: usize,
) -> Result<TestReport> {
    let start = Instant::now();
    require_nonnegative(net, u)?;
    let samplers = Samplers::new(net, u)?;
    let seed = ctx.seed;
    let rows = ctx.pool.try_map(replicas, |r| -> Result<Vec<f64>> {
        let (loops, exc) = samplers.draw(0.5, seed, r)?;
        let (field, _) = assemble_field(&loops, &exc, &mut stream(seed, r, Purpose::Signs))?;
        Ok(net.interior().iter().map(|&x| field.get(x)).collect())
    })?;
    let k = net.interior().len();
    let cols = columns(&rows, k);
    let green = green_function(net);
    let sig = ctx.tol.sigmas;

    let mut report = TestReport::new("isomorphism_signed", replicas, seed);
    let mut ks_ok = 0;
    for (i, &x) in net.interior().iter().enumerate() {
        let (m, v) = (u.get(x), green.at(i, i));
        report.push(Comparison::within(format!("mean[{x}]"), stats::mean(&cols[i]), m, sig));
        report.push(Comparison::within(format!("var[{x}]"), stats::variance(&cols[i]), v, sig));
        let ks = stats::ks_one_sample(&cols[i], stats::normal_cdf(m, v));
        report.note(format!("KS at {x}: D = {:.5}, p = {:.4}", ks.statistic, ks.p_value));
        if ks.p_value > ctx.tol.ks_p {
            ks_ok += 1;
        }
    }
    for (i, j) in spread_pairs(k, 20) {
        let (x, y) = (net.interior()[i], net.interior()[j]);
        report.push(Comparison::within(
            format!("cov[{x},{y}]"),
            stats::covariance(&cols[i], &cols[j]),
            green.at(i, j),
            sig,
        ));
    }
    report.push(Comparison::new(
        "ks_pass_fraction",
        Estimate { value: ks_ok as f64 / k as f64, stderr: 0.0 },
        ctx.tol.ks_fraction,
        0.0,
        Rule::AtLeast,
    ));
    Ok(finish(report, start))
}

/// Per-sample equality of the level-0 first passage set of the assembled field and the
/// union of excursion clusters, on `refine(net, m)`.
pub fn test_cluster_fps_identity(
    ctx: &Ctx,
    net: &Arc<Network>,
    u: &BoundaryFunction,
    m: u32,
    alpha: f64,
    replicas: usize,
) -> Result<TestReport> {
    let start = Instant::now();
    if alpha != 0.5 {
        return Err(ClusterError::WrongIntensity(Some(alpha)).into());
    }
    require_nonnegative(net, u)?;
    let refined = refine(net, m);
    let rnet = refined.network().clone();
    let ru = lift_boundary(&refined, u);
    let samplers = Samplers::new(&rnet, &ru)?;
    let seed = ctx.seed;
    let outcomes = ctx.pool.try_map(replicas, |r| -> Result<(bool, bool)> {
        let (loops, exc) = samplers.draw(alpha, seed, r)?;
        let (field, partition) = assemble_field(&loops, &exc, &mut stream(seed, r, Purpose::Signs))?;
        let fps = first_passage_set(&field, 0.0, false);
        let union = excursion_cluster_union(&partition);
        Ok((fps == union, fps.components_touch_boundary()))
    })?;
    let equal = outcomes.iter().filter(|o| o.0).count();
    let touching = outcomes.iter().filter(|o| o.1).count();
    let mut report = TestReport::new(format!("cluster_fps_identity[m={m}]"), replicas, seed);
    report.push(Comparison::exact("equal_fraction", equal as f64 / replicas as f64, 1.0, 0.0));
    report.push(Comparison::exact("touch_boundary_fraction", touching as f64 / replicas as f64, 1.0, 0.0));
    Ok(finish(report, start))
}

/// Exact variance of `(½φ² + uφ, f)` from Wick's theorem: `½ fG²f + (fu)G(uf)`.
pub fn wick_variance(net: &Network, u: &BoundaryFunction, f: &[f64]) -> f64 {
    let g = green_function(net);
    let mut total = 0.0;
    for (i, &x) in net.interior().iter().enumerate() {
        for (j, &y) in net.interior().iter().enumerate() {
            let gij = g.at(i, j);
            total += 0.5 * f[x] * gij * gij * f[y] + f[x] * u.get(x) * gij * u.get(y) * f[y];
        }
    }
    total
}

/// Centred occupation field tested against Wick-theorem variances.
pub fn test_wick_moments(
    ctx: &Ctx,
    net: &Arc<Network>,
    u: &BoundaryFunction,
    functions: &[Vec<f64>],
    replicas: usize,
) -> Result<TestReport> {
    let start = Instant::now();
    require_nonnegative(net, u)?;
    for f in functions {
        check_len(net, f.len())?;
        if net.boundary().iter().any(|&b| f[b] != 0.0) {
            return Err(Error::invalid("test functions must vanish on the boundary"));
        }
    }
    let samplers = Samplers::new(net, u)?;
    let green = green_function(net);
    let centre: Vec<f64> = net
        .interior()
        .iter()
        .enumerate()
        .map(|(i, &x)| 0.5 * (green.at(i, i) + u.get(x) * u.get(x)))
        .collect();
    let seed = ctx.seed;
    let rows = ctx.pool.try_map(replicas, |r| -> Result<Vec<f64>> {
        let (loops, exc) = samplers.draw(0.5, seed, r)?;
        let occ = interior_occupation(net, &loops, &exc);
        Ok(functions
            .iter()
            .map(|f| net.interior().iter().enumerate().map(|(i, &x)| f[x] * (occ[i] - centre[i])).sum())
            .collect())
    })?;
    let cols = columns(&rows, functions.len());
    let mut report = TestReport::new("wick_moments", replicas, seed);
    for (j, f) in functions.iter().enumerate() {
        report.push(Comparison::within(format!("mean[f{j}]"), stats::mean(&cols[j]), 0.0, ctx.tol.sigmas));
        report.push(Comparison::within(
            format!("var[f{j}]"),
            stats::variance(&cols[j]),
            wick_variance(net, u, f),
            ctx.tol.sigmas,
        ));
    }
    Ok(finish(report, start))
}

/// `(-Δ + diag χ)^{-1}` on the interior, row-major.
pub fn massive_green(net: &Network, chi: &[f64]) -> Result<Vec<f64>> {
    let mut m = net.interior_laplacian();
    for (i, &x) in net.interior().iter().enumerate() {
        m.add_diag(i, chi[x]);
    }
    let f = EnvelopeCholesky::new(&m).map_err(|_| Error::invalid("massive operator is not positive definite"))?;
    let k = m.dim();
    let mut out = vec![0.0; k * k];
    let mut col = vec![0.0; k];
    for j in 0..k {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        f.solve_in_place(&mut col);
        for i in 0..k {
            out[i * k + j] = col[i];
        }
    }
    Ok(out)
}

/// Self-normalised reweighting of zero-boundary samples by `exp(-½ Σ χ φ²)`.
pub fn test_massive_reweighting(ctx: &Ctx, net: &Arc<Network>, chi: &[f64], replicas: usize) -> Result<TestReport> {
    let start = Instant::now();
    check_len(net, chi.len())?;
    if chi.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(Error::invalid("chi must be nonnegative and finite"));
    }
    let zero = BoundaryFunction::zero(net);
    let seed = ctx.seed;
    let samples = ctx.pool.map(replicas, |r| {
        let f = sample_discrete_gff(net, &zero, &mut stream(seed, r, Purpose::Field));
        let phi: Vec<f64> = net.interior().iter().map(|&x| f.get(x)).collect();
        let logw = -0.5 * net.interior().iter().zip(&phi).map(|(&x, p)| chi[x] * p * p).sum::<f64>();
        (phi, logw)
    });
    let top = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = samples.iter().map(|s| (s.1 - top).exp()).collect();
    let wsum: f64 = w.iter().sum();
    let w2sum: f64 = w.iter().map(|x| x * x).sum();
    let ess = wsum * wsum / w2sum;

    let k = net.interior().len();
    let target = massive_green(net, chi)?;
    let pairs: Vec<(usize, usize)> = if k <= 12 {
        (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect()
    } else {
        let mut p: Vec<(usize, usize)> = (0..k).map(|i| (i, i)).collect();
        for (i, &x) in net.interior().iter().enumerate() {
            for inc in net.incident(x) {
                if let Some(j) = net.interior_index(inc.to) {
                    if i < j {
                        p.push((i, j));
                    }
                }
            }
        }
        p
    };
    let mut report = TestReport::new("massive_reweighting", replicas, seed);
    report.push(Comparison::new(
        "ess_fraction",
        Estimate { value: ess / replicas as f64, stderr: 0.0 },
        ctx.tol.min_ess_fraction,
        0.0,
        Rule::AtLeast,
    ));
    for (i, j) in pairs {
        let g: Vec<f64> = samples.iter().map(|s| s.0[i] * s.0[j]).collect();
        let est = g.iter().zip(&w).map(|(g, w)| g * w).sum::<f64>() / wsum;
        let se = g.iter().zip(&w).map(|(g, w)| w * w * (g - est) * (g - est)).sum::<f64>().sqrt() / wsum;
        let (x, y) = (net.interior()[i], net.interior()[j]);
        report.push(Comparison::within(
            format!("cov[{x},{y}]"),
            Estimate { value: est, stderr: se },
            target[i * k + j],
            ctx.tol.sigmas,
        ));
    }
    report.note(format!("effective sample size {ess:.1} of {replicas}"));
    Ok(finish(report, start))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercRow {
    pub n: u32,
    pub theta: f64,
    pub p: f64,
    pub stderr: f64,
}

/// Probability that the level-0 first passage set on `Λ_N` with boundary value `a`
/// reaches the box `[-θN, θN]²`.
pub fn percolation_curve(
    ctx: &Ctx,
    sizes: &[u32],
    a: f64,
    thetas: &[f64],
    replicas: usize,
) -> Result<(Vec<PercRow>, TestReport)> {
    let start = Instant::now();
    let mut thetas = thetas.to_vec();
    thetas.sort_by(f64::total_cmp);
    let seed = ctx.seed;
    let mut rows = Vec::new();
    let mut report = TestReport::new("percolation_curve", replicas, seed);
    let mut curves: Vec<(u32, Vec<f64>, Vec<f64>)> = Vec::new();
    for (s, &n) in sizes.iter().enumerate() {
        let net = Arc::new(lattice_domain(&Region::centered_box(n), 0, None)?);
        let u = BoundaryFunction::constant(&net, a);
        let pos = net.positions().expect("lattice domains carry positions").to_vec();
        let dmin = ctx.pool.map(replicas, |r| {
            let field = sample_discrete_gff(&net, &u, &mut stream(seed, ((s as u64) << 40) | r, Purpose::Field));
            let fps = first_passage_set(&field, 0.0, true);
            (0..net.vertex_count())
                .filter(|&v| fps.contains_vertex(v))
                .map(|v| pos[v][0].abs().max(pos[v][1].abs()) / f64::from(n))
                .fold(f64::INFINITY, f64::min)
        });
        let mut ps = Vec::new();
        let mut ses = Vec::new();
        for &theta in &thetas {
            let hits = dmin.iter().filter(|&&d| d <= theta + 1e-12).count();
            let p = hits as f64 / replicas as f64;
            let se = (p * (1.0 - p) / replicas as f64).sqrt();
            rows.push(PercRow { n, theta, p, stderr: se });
            ps.push(p);
            ses.push(se);
        }
        let violations = ps.windows(2).filter(|w| w[1] < w[0]).count();
        report.push(Comparison::exact(format!("monotone_violations[N={n}]"), violations as f64, 0.0, 0.0));
        curves.push((n, ps, ses));
    }
    let mut gaps = Vec::new();
    for (n, ps, ses) in &curves {
        if let Some((_, qs, tes)) = curves.iter().find(|c| c.0 == 2 * n) {
            let (t, gap) = ps
                .iter()
                .zip(qs)
                .enumerate()
                .map(|(t, (p, q))| (t, (p - q).abs()))
                .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let se = ses[t].hypot(tes[t]);
            report.push(
                Comparison::new(format!("sup_gap[N={n},2N]"), Estimate { value: gap, stderr: se }, 0.0, f64::INFINITY, Rule::AtMost)
                    .soft(),
            );
            gaps.push(gap);
        }
    }
    if gaps.len() >= 2 {
        let increases = gaps.windows(2).filter(|w| w[1] > w[0]).count();
        report.push(Comparison::exact("sup_gap_increases", increases as f64, 0.0, 0.0).soft());
    }
    Ok((rows, finish(report, start)))
}

/// Boxes `[x0, y0, x1, y1]` in coordinates relative to the bounding box of the vertices.
pub type RelativeBox = [f64; 4];

fn box_mask(net: &Network, b: RelativeBox) -> Result<Vec<bool>> {
    let pos = net.positions().ok_or_else(|| Error::invalid("target boxes need vertex positions"))?;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pos {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let at = |d: usize, t: f64| lo[d] + t * (hi[d] - lo[d]);
    let mask: Vec<bool> = pos
        .iter()
        .map(|p| p[0] >= at(0, b[0]) && p[0] <= at(0, b[2]) && p[1] >= at(1, b[1]) && p[1] <= at(1, b[3]))
        .collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::invalid(format!("target box {b:?} contains no vertex")));
    }
    Ok(mask)
}

/// Positive association of `1{FPS ∩ Q₁ ≠ ∅}` and `1{FPS ∩ Q₂ ≠ ∅}`.
pub fn test_fkg(
    ctx: &Ctx,
    net: &Arc<Network>,
    u: &BoundaryFunction,
    a: f64,
    targets: [RelativeBox; 2],
    replicas: usize,
) -> Result<TestReport> {
    let start = Instant::now();
    require_nonnegative(net, u)?;
    let masks = [box_mask(net, targets[0])?, box_mask(net, targets[1])?];
    let seed = ctx.seed;
    let hits = ctx.pool.map(replicas, |r| {
        let field = sample_discrete_gff(net, u, &mut stream(seed, r, Purpose::Field));
        let fps = first_passage_set(&field, a, true);
        let hit = |m: &[bool]| (0..m.len()).any(|v| m[v] && fps.contains_vertex(v));
        (f64::from(u8::from(hit(&masks[0]))), f64::from(u8::from(hit(&masks[1]))))
    });
    let (f1, f2): (Vec<f64>, Vec<f64>) = hits.into_iter().unzip();
    let mut report = TestReport::new("fkg", replicas, seed);
    report.note(format!("E[F1] = {:.4}, E[F2] = {:.4}", stats::mean(&f1).value, stats::mean(&f2).value));
    report.push(Comparison::at_least("cov[F1,F2]", stats::covariance(&f1, &f2), 0.0, ctx.tol.sigmas));
    Ok(finish(report, start))
}

/// Connected components of the complement of `set` (through edges outside the set) and
/// their ℓ∞ diameters.
pub fn complement_diameters(set: &MetricSubset) -> Vec<f64> {
    let net = set.network();
    let pos = net.positions().unwrap_or(&[]);
    let n = net.vertex_count();
    let mut ds = DisjointSets::new(n);
    for (e, edge) in net.edges().iter().enumerate() {
        if !set.contains_edge(e) && !set.contains_vertex(edge.a) && !set.contains_vertex(edge.b) {
            ds.union(edge.a, edge.b);
        }
    }
    let mut extent: std::collections::BTreeMap<usize, [f64; 4]> = std::collections::BTreeMap::new();
    for v in (0..n).filter(|&v| !set.contains_vertex(v)) {
        let p = pos.get(v).copied().unwrap_or([0.0, 0.0]);
        let b = extent.entry(ds.find(v)).or_insert([p[0], p[1], p[0], p[1]]);
        *b = [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])];
    }
    extent.values().map(|b| (b[2] - b[0]).max(b[3] - b[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalFinitenessRow {
    pub level: u32,
    pub epsilon: f64,
    pub mean: f64,
    pub stderr: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
}

/// Counts of complement components of diameter `≥ ε · size` across refinement levels.
pub fn local_finiteness_stats(
    ctx: &Ctx,
    domain: &DomainSpec,
    levels: &[u32],
    a: f64,
    boundary: &BoundarySpec,
    epsilons: &[f64],
    replicas: usize,
) -> Result<(Vec<LocalFinitenessRow>, TestReport)> {
    let start = Instant::now();
    let bb = domain.region().bounding_box();
    let size = (bb[2] - bb[0]).max(bb[3] - bb[1]);
    let seed = ctx.seed;
    let mut rows = Vec::new();
    let mut report = TestReport::new("local_finiteness", replicas, seed);
    let mut q99: Vec<Vec<f64>> = vec![Vec::new(); epsilons.len()];
    for &level in levels {
        let net = Arc::new(domain.at_level(level).build()?);
        let u = boundary.resolve(&net)?;
        let counts = ctx.pool.map(replicas, |r| {
            let field = sample_discrete_gff(&net, &u, &mut stream(seed, (u64::from(level) << 40) | r, Purpose::Field));
            let diam = complement_diameters(&first_passage_set(&field, a, true));
            epsilons.iter().map(|&e| diam.iter().filter(|&&d| d >= e * size - 1e-12).count() as f64).collect::<Vec<_>>()
        });
        for (j, &eps) in epsilons.iter().enumerate() {
            let c: Vec<f64> = counts.iter().map(|row| row[j]).collect();
            let s = stats::sorted(&c);
            let m = stats::mean(&c);
            rows.push(LocalFinitenessRow {
                level,
                epsilon: eps,
                mean: m.value,
                stderr: m.stderr,
                q50: stats::quantile(&s, 0.5),
                q90: stats::quantile(&s, 0.9),
                q99: stats::quantile(&s, 0.99),
                max: s.last().copied().unwrap_or(0.0),
            });
            q99[j].push(stats::quantile(&s, 0.99));
        }
    }
    for (j, &eps) in epsilons.iter().enumerate() {
        let increases = q99[j].windows(2).filter(|w| w[1] > w[0]).count();
        report.push(Comparison::exact(format!("q99_increases[eps={eps}]"), increases as f64, 0.0, 0.0).soft());
    }
    Ok((rows, finish(report, start)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingRow {
    pub eta: u64,
    pub length: usize,
    pub touches_b3: bool,
    pub far_side: usize,
    pub mass: f64,
    pub p_formula: f64,
    pub p_empirical: f64,
}

/// Interior vertices separated from `B1` by the primal edges crossed by the interface.
pub fn far_side(net: &Network, cut: &[usize]) -> Result<Vec<bool>> {
    let b1 = &net.arc(ARC_RIGHT).ok_or_else(|| Error::invalid("network has no arc B1"))?.vertices;
    let mut blocked = vec![false; net.edge_count()];
    for &e in cut {
        blocked[e] = true;
    }
    let mut seen = vec![false; net.vertex_count()];
    let mut stack = b1.clone();
    for &v in b1 {
        seen[v] = true;
    }
    while let Some(x) = stack.pop() {
        for inc in net.incident(x) {
            if blocked[inc.edge] || seen[inc.to] || net.is_boundary(inc.to) {
                continue;
            }
            seen[inc.to] = true;
            stack.push(inc.to);
        }
    }
    Ok((0..net.vertex_count()).map(|v| !net.is_boundary(v) && !seen[v]).collect())
}

fn shifted(net: &Network, u: &BoundaryFunction, by: f64) -> Result<BoundaryFunction> {
    let bv: Vec<f64> = u.values().iter().map(|x| x + by).collect();
    Ok(harmonic_extension(net, &bv)?)
}

/// Conditional law of the extra excursions `δΞ` given the interface `η`: the empirical
/// probability that `δΞ` avoids `η` against `exp(-M)` with `M` the exact hitting mass.
pub fn level_line_coupling(
    ctx: &Ctx,
    net: &Arc<Network>,
    u: &BoundaryFunction,
    u_star: &BoundaryFunction,
    lambda: f64,
    outer: usize,
    inner: usize,
) -> Result<(Vec<CouplingRow>, TestReport)> {
    let start = Instant::now();
    for name in [ARC_RIGHT, ARC_LEFT] {
        if net.arc(name).is_none() {
            return Err(Error::invalid(format!("coupling needs a split domain with arc {name}")));
        }
    }
    let up = shifted(net, u, lambda)?;
    let usp = shifted(net, u_star, lambda)?;
    let b3: Vec<bool> = (0..net.vertex_count()).map(|v| net.is_boundary(v) && usp.get(v) > up.get(v)).collect();
    if net.arc(ARC_LEFT).unwrap().vertices.iter().any(|&v| b3[v]) {
        return Err(Error::invalid("u_star - u must vanish on B2"));
    }
    let samplers = Samplers::new(net, &up)?;
    let diff = ExcursionSampler::difference(net, &up, &usp)?;
    let seed = ctx.seed;
    let rows = ctx.pool.try_map(outer, |r| -> Result<CouplingRow> {
        let (loops, exc) = samplers.draw(0.5, seed, r)?;
        let (_, partition) = assemble_field(&loops, &exc, &mut stream(seed, r, Purpose::Signs))?;
        let set = excursion_cluster_union(&partition);
        let eta = extract_interface(&set)?;
        let cut = eta.crossed_edges(net)?;
        let k = far_side(net, &cut)?;
        let mass = excursion_hitting_mass(net, &up, &usp, &k)?;
        let misses = (0..inner as u64)
            .filter(|&j| {
                let d = diff.sample(&mut stream(seed, r * inner as u64 + j, Purpose::Extra(1)));
                !d.trajectories.iter().any(|t| t.vertices.iter().any(|&v| k[v]))
            })
            .count();
        let touches_b3 = cut.iter().any(|&e| b3[net.edge(e).a] || b3[net.edge(e).b]);
        Ok(CouplingRow {
            eta: r,
            length: eta.len(),
            touches_b3,
            far_side: k.iter().filter(|&&x| x).count(),
            mass,
            p_formula: (-mass).exp(),
            p_empirical: misses as f64 / inner as f64,
        })
    })?;
    let n = rows.len() as f64;
    let mut abs_dev = 0.0;
    let mut expected = 0.0;
    let mut var = 0.0;
    let mut signed = 0.0;
    let mut signed_var = 0.0;
    for row in &rows {
        let (e, v) = stats::binomial_abs_deviation(row.p_formula, inner as u64);
        abs_dev += (row.p_empirical - row.p_formula).abs();
        expected += e;
        var += v;
        signed += row.p_empirical - row.p_formula;
        signed_var += row.p_formula * (1.0 - row.p_formula) / inner as f64;
    }
    let mut report = TestReport::new("level_line_coupling", outer * inner, seed);
    report.push(Comparison::within(
        "mean_abs_discrepancy",
        Estimate { value: abs_dev / n, stderr: var.sqrt() / n },
        expected / n,
        ctx.tol.sigmas,
    ));
    report.push(Comparison::within(
        "mean_signed_discrepancy",
        Estimate { value: signed / n, stderr: signed_var.sqrt() / n },
        0.0,
        ctx.tol.sigmas,
    ));
    report.note(format!(
        "{} of {} interfaces touch B3; mean hitting mass {:.4}",
        rows.iter().filter(|r| r.touches_b3).count(),
        rows.len(),
        rows.iter().map(|r| r.mass).sum::<f64>() / n
    ));
    Ok((rows, finish(report, start)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RefineStatistic {
    /// First passage set and its vertex fraction.
    Fps,
    /// Interface crossings and dual-path length.
    Interface,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineRow {
    pub from_level: u32,
    pub to_level: u32,
    pub median_hausdorff: f64,
    pub q25_hausdorff: f64,
    pub q75_hausdorff: f64,
    pub mean_statistic_from: f64,
    pub mean_statistic_to: f64,
    pub ks_distance: f64,
}

/// Point set and scalar statistic at one refinement level.
type LevelSample = (Vec<[f64; 2]>, f64);

/// Coupled first passage sets across metric refinement levels: one base field, one
/// bridge interpolation at the finest level, restricted to the coarser ones.
pub fn refinement_study(
    ctx: &Ctx,
    base: &Arc<Network>,
    u: &BoundaryFunction,
    levels: &[u32],
    statistic: RefineStatistic,
    a: f64,
    exact_edges: bool,
    replicas: usize,
) -> Result<(Vec<RefineRow>, TestReport)> {
    let start = Instant::now();
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let finest_level = *levels.last().ok_or_else(|| Error::invalid("refinement study needs levels"))?;
    let finest = refine(base, finest_level);
    let nets: Vec<RefinedNetwork> = levels.iter().map(|&m| refine(base, m)).collect();
    let lifted: Vec<BoundaryFunction> = nets.iter().map(|r| lift_boundary(r, u)).collect();
    let seed = ctx.seed;
    let per_replica = ctx.pool.try_map(replicas, |r| -> Result<Option<Vec<LevelSample>>> {
        let field = sample_discrete_gff(base, u, &mut stream(seed, r, Purpose::Field));
        let fine = interpolate_field(&finest, &field, &mut stream(seed, r, Purpose::Interpolation))?;
        let mut out = Vec::with_capacity(nets.len());
        for (li, rn) in nets.iter().enumerate() {
            let values = finest.restrict_to(rn, fine.values());
            let mut rng = stream(seed, r, Purpose::Extra(100 + levels[li]));
            let uniforms = (0..rn.network().edge_count()).map(|_| rng.random::<f64>()).collect();
            let f = FieldSample::from_parts(rn.network().clone(), values, lifted[li].clone(), uniforms, None);
            let fps = first_passage_set(&f, a, exact_edges);
            match statistic {
                RefineStatistic::Fps => {
                    out.push((fps.points(), fps.vertex_count() as f64 / rn.network().vertex_count() as f64));
                }
                RefineStatistic::Interface => match extract_interface(&fps) {
                    Ok(eta) => out.push((eta.crossings.clone(), eta.len() as f64)),
                    Err(_) => return Ok(None),
                },
            }
        }
        Ok(Some(out))
    })?;
    let failed = per_replica.iter().filter(|x| x.is_none()).count();
    let samples: Vec<Vec<LevelSample>> = per_replica.into_iter().flatten().collect();
    let mut rows = Vec::new();
    let mut report = TestReport::new(format!("refinement_study[{statistic:?}]"), replicas, seed);
    for li in 0..levels.len().saturating_sub(1) {
        let d: Vec<f64> = samples.iter().map(|s| hausdorff(&s[li].0, &s[li + 1].0)).collect();
        let sd = stats::sorted(&d);
        let xs: Vec<f64> = samples.iter().map(|s| s[li].1).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s[li + 1].1).collect();
        rows.push(RefineRow {
            from_level: levels[li],
            to_level: levels[li + 1],
            median_hausdorff: stats::quantile(&sd, 0.5),
            q25_hausdorff: stats::quantile(&sd, 0.25),
            q75_hausdorff: stats::quantile(&sd, 0.75),
            mean_statistic_from: stats::mean(&xs).value,
            mean_statistic_to: stats::mean(&ys).value,
            ks_distance: stats::ks_distance(&xs, &ys),
        });
    }
    for w in rows.windows(2) {
        report.push(
            Comparison::new(
                format!("median_hausdorff_change[{}->{}]", w[0].to_level, w[1].to_level),
                Estimate { value: w[1].median_hausdorff - w[0].median_hausdorff, stderr: 0.0 },
                0.0,
                0.0,
                Rule::AtMost,
            )
            .soft(),
        );
    }
    if failed > 0 {
        report.note(format!("{failed} replicas produced no interface and were skipped"));
    }
    Ok((rows, finish(report, start)))
}

/// Closed-form Poisson kernel against truncated path sums, within the tail bound.
pub fn test_poisson_kernel(name: &str, net: &Network, max_visits: usize) -> TestReport {
    let start = Instant::now();
    let closed = boundary_poisson_kernel(net);
    let sums = poisson_kernel_by_paths(net, max_visits);
    let b = net.boundary().len();
    let mut worst: f64 = 0.0;
    let mut below = 0;
    for i in 0..b {
        for j in 0..b {
            let d = closed.at(i, j) - sums.at(i, j);
            worst = worst.max(d.abs());
            if d < -1e-12 {
                below += 1;
            }
        }
    }
    let mut report = TestReport::new(format!("poisson_kernel[{name}]"), 1, 0);
    report.push(Comparison::new(
        "max_deviation",
        Estimate { value: worst, stderr: 0.0 },
        0.0,
        sums.tail_bound + 1e-12,
        Rule::AtMost,
    ));
    report.push(Comparison::exact("entries_below_path_sum", below as f64, 0.0, 0.0));
    finish(report, start)
}

/// `|ℰ(uf, uf) - ℰ̂(f, f)|` for random positive harmonic `u` and `f` vanishing on the
/// boundary; `ℰ̂` uses conductances `C(x,y) u(x) u(y)`.
pub fn test_energy_rescaling(ctx: &Ctx, net: &Network, pairs: usize) -> Result<TestReport> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for r in 0..pairs as u64 {
        let mut rng = stream(ctx.seed, r, Purpose::Extra(7));
        let bv: Vec<f64> = (0..net.vertex_count()).map(|_| rng.random_range(0.2..2.0)).collect();
        let u = harmonic_extension(net, &bv)?;
        let f: Vec<f64> =
            (0..net.vertex_count()).map(|v| if net.is_boundary(v) { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        let uf: Vec<f64> = f.iter().zip(u.values()).map(|(a, b)| a * b).collect();
        let hat = rescale_conductances(net, &u)?;
        worst = worst.max((dirichlet_energy(net, &uf) - dirichlet_energy(&hat, &f)).abs());
    }
    let mut report = TestReport::new("energy_rescaling", pairs, ctx.seed);
    report.push(Comparison::new("max_abs_difference", Estimate { value: worst, stderr: 0.0 }, 0.0, 1e-10, Rule::AtMost));
    Ok(finish(report, start))
}

/// Loop counts and skeleton-class frequencies against the loop measure.
pub fn test_loop_soup(
    ctx: &Ctx,
    net: &Arc<Network>,
    alpha: f64,
    max_len: usize,
    replicas: usize,
) -> Result<TestReport> {
    let start = Instant::now();
    let sampler = LoopSoupSampler::new(net);
    let classes = enumerate_loop_classes(net, max_len);
    let keys: Vec<Vec<VertexId>> = classes.keys().cloned().collect();
    let seed = ctx.seed;
    let rows = ctx.pool.try_map(replicas, |r| -> Result<(f64, Vec<f64>)> {
        let soup = sampler.sample(alpha, &mut stream(seed, r, Purpose::LoopSoup))?;
        let mut counts = vec![0.0; keys.len()];
        for t in soup.trajectories.iter().filter(|t| t.kind == TrajectoryKind::Loop) {
            if t.len() <= max_len {
                if let Ok(i) = keys.binary_search(&canonical_rotation(t.skeleton())) {
                    counts[i] += 1.0;
                }
            }
        }
        Ok((soup.loop_count() as f64, counts))
    })?;
    // counts are Poisson under the loop measure, so the null variance equals the mean
    let poisson = |xs: &[f64], target: f64| Estimate {
        value: stats::mean(xs).value,
        stderr: (target / replicas as f64).sqrt(),
    };
    let totals: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut report = TestReport::new("loop_soup", replicas, seed);
    let mass = alpha * total_loop_mass(net);
    report.push(Comparison::within("mean_loop_count", poisson(&totals, mass), mass, ctx.tol.sigmas));
    for (i, key) in keys.iter().enumerate() {
        let c: Vec<f64> = rows.iter().map(|r| r.1[i]).collect();
        let name: Vec<String> = key.iter().map(|v| v.to_string()).collect();
        let target = alpha * classes[key];
        report.push(Comparison::within(format!("class[{}]", name.join("-")), poisson(&c, target), target, ctx.tol.sigmas));
    }
    Ok(finish(report, start))
}

/// Brownian bridge from `alpha` to `beta` over resistance `resistance`, built by
/// recursive midpoints to `2^depth` segments; each segment then survives with the
/// bridge-minimum probability. Returns the survival fraction and the fraction that only
/// checks the grid points.
pub fn bridge_survival(
    ctx: &Ctx,
    alpha: f64,
    beta: f64,
    resistance: f64,
    depth: u32,
    paths: usize,
) -> (Estimate, Estimate) {
    let seed = ctx.seed;
    let segments = 1usize << depth;
    let outcomes = ctx.pool.map(paths, |r| {
        let mut rng = stream(seed, r, Purpose::Extra(11));
        let mut pts = vec![0.0; segments + 1];
        pts[0] = alpha;
        pts[segments] = beta;
        let mut step = segments;
        let mut res = resistance;
        while step > 1 {
            let half = step / 2;
            for left in (0..segments).step_by(step) {
                pts[left + half] = sample_midpoint(pts[left], pts[left + step], res, &mut rng);
            }
            step = half;
            res /= 2.0;
        }
        let grid_ok = pts.iter().all(|&x| x > 0.0);
        let mut survived = grid_ok;
        if survived {
            for w in pts.windows(2) {
                let q = BridgeQuery { alpha: w[0], beta: w[1], resistance: res, threshold: 0.0 };
                if rng.random::<f64>() >= bridge_min_above(&q) {
                    survived = false;
                    break;
                }
            }
        }
        (f64::from(u8::from(survived)), f64::from(u8::from(grid_ok)))
    });
    let (s, g): (Vec<f64>, Vec<f64>) = outcomes.into_iter().unzip();
    (stats::mean(&s), stats::mean(&g))
}

/// Exact per-sample inclusion of first passage sets across an increasing level grid.
pub fn test_fps_monotonicity(
    ctx: &Ctx,
    net: &Arc<Network>,
    u: &BoundaryFunction,
    levels: &[f64],
    replicas: usize,
) -> Result<TestReport> {
    let start = Instant::now();
    let mut levels = levels.to_vec();
    levels.sort_by(f64::total_cmp);
    let seed = ctx.seed;
    let ok = ctx.pool.map(replicas, |r| {
        let field = sample_discrete_gff(net, u, &mut stream(seed, r, Purpose::Field));
        let sets: Vec<MetricSubset> = levels.iter().map(|&a| first_passage_set(&field, a, true)).collect();
        let nested = sets.windows(2).all(|w| w[0].is_subset_of(&w[1]));
        let attached = sets.iter().all(MetricSubset::components_touch_boundary);
        (nested, attached)
    });
    let mut report = TestReport::new("fps_monotonicity", replicas, seed);
    let frac = |k: usize| k as f64 / replicas as f64;
    report.push(Comparison::exact("nested_fraction", frac(ok.iter().filter(|o| o.0).count()), 1.0, 0.0));
    report.push(Comparison::exact("touch_boundary_fraction", frac(ok.iter().filter(|o| o.1).count()), 1.0, 0.0));
    Ok(finish(report, start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::grid;

    fn ctx(pool: &Pool) -> Ctx<'_> {
        Ctx { pool, seed: 3, tol: Tolerances::default() }
    }

    #[test]
    fn spread_pairs_counts() {
        assert_eq!(spread_pairs(1, 10), vec![]);
        assert_eq!(spread_pairs(3, 10).len(), 3);
        let p = spread_pairs(9, 10);
        assert_eq!(p.len(), 10);
        assert_eq!(p[0], (0, 1));
        assert_eq!(p[9], (7, 8));
    }

    #[test]
    fn wick_variance_p3() {
        let net = crate::netspec::NetworkSource::Bundled("p3".into()).build().unwrap();
        let f = vec![0.0, 1.0, 0.0];
        assert!((wick_variance(&net, &BoundaryFunction::zero(&net), &f) - 0.125).abs() < 1e-15);
        // u ≡ 1 adds G(v,v) = 0.5
        assert!((wick_variance(&net, &BoundaryFunction::constant(&net, 1.0), &f) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn massive_green_p3() {
        let net = crate::netspec::NetworkSource::Bundled("p3".into()).build().unwrap();
        let g = massive_green(&net, &[0.0, 1.0, 0.0]).unwrap();
        assert!((g[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cluster_identity_rejects_other_intensities() {
        let pool = Pool::new(1);
        let net = Arc::new(grid(3, 3).unwrap());
        let u = BoundaryFunction::constant(&net, 1.0);
        let err = test_cluster_fps_identity(&ctx(&pool), &net, &u, 0, 0.7, 10).unwrap_err();
        assert!(err.to_string().contains("signed isomorphism stated only at α = 1/2"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn complement_components() {
        let net = Arc::new(grid(5, 5).unwrap());
        let mut v = net.boundary_mask().to_vec();
        v[12] = true;
        let s = MetricSubset::new(net.clone(), v, vec![false; net.edge_count()]);
        let d = complement_diameters(&s);
        // the ring around the centre is one component of ℓ∞ extent 2
        assert_eq!(d, vec![2.0]);
    }

    #[test]
    fn coupling_with_equal_boundaries_is_trivial() {
        let pool = Pool::new(1);
        let domain = DomainSpec { shape: crate::netspec::Shape::Rect([0.0, 0.0, 5.0, 5.0]), level: 0, split: Some(2.5) };
        let net = Arc::new(domain.build().unwrap());
        let lambda = 0.5;
        let spec = BoundarySpec {
            arcs: [(ARC_RIGHT.to_string(), lambda), (ARC_LEFT.to_string(), -lambda)].into_iter().collect(),
            ..Default::default()
        };
        let u = spec.resolve(&net).unwrap();
        let (rows, report) = level_line_coupling(&ctx(&pool), &net, &u, &u, lambda, 5, 10).unwrap();
        assert!(rows.iter().all(|r| r.mass == 0.0 && r.p_empirical == 1.0));
        assert!(report.passed());
    }

    #[test]
    fn percolation_extremes() {
        let pool = Pool::new(1);
        let (rows, report) = percolation_curve(&ctx(&pool), &[4], -10.0, &[0.0, 0.5, 1.0], 20).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].p, 0.0);
        assert_eq!(rows[2].p, 1.0);
        assert!(report.passed());
    }
}
