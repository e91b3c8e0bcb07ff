//! Experiment runner: one configuration in, a directory of artifacts out.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use gfflab_core::clusters::build_clusters;
use gfflab_core::fps::{extract_interface, first_passage_set};
use gfflab_core::gff::{interpolate_field, lift_boundary, sample_discrete_gff, FieldSample};
use gfflab_core::refine::refine;
use gfflab_core::rng::{stream, Purpose};
use gfflab_core::soups::{sample_excursion_ppp, sample_loop_soup, SoupSample};
use gfflab_core::{green_function, BoundaryFunction, Network};
use rand::Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::io::{self, Artifacts};
use crate::netspec::NetworkSource;
use crate::parallel::{default_workers, Pool};
use crate::report::{self, Comparison, TestReport};
use crate::stats;
use crate::svg;
use crate::verify::{self, Ctx, RefineStatistic};

pub const DEFAULT_THETAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_TARGETS: [[f64; 4]; 2] = [[0.1, 0.1, 0.4, 0.4], [0.6, 0.6, 0.9, 0.9]];
pub const DEFAULT_INNER: usize = 500;
pub const DEFAULT_WICK_FUNCTIONS: usize = 3;

/// Result of a run.
#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub reports: Vec<TestReport>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(TestReport::passed)
    }
}

#[derive(Serialize)]
struct Versions {
    gfflab: &'static str,
    gfflab_core: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: &'static str,
    config_sha256: String,
    seed: u64,
    replicas: usize,
    versions: Versions,
    passed: bool,
    artifacts: &'a [String],
}

pub fn default_out(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from("runs").join(format!("{}-{}", cfg.kind.name(), cfg.seed))
}

fn timestamp(cfg: &ExperimentConfig) -> Option<String> {
    if cfg.deterministic {
        return None;
    }
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Some(format!("unix:{secs}"))
}

/// Run `cfg`, writing all artifacts under its output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let pool = Pool::new(cfg.workers.unwrap_or_else(default_workers));
    let ctx = Ctx { pool: &pool, seed: cfg.seed, tol: cfg.tolerances };
    let dir = cfg.out.clone().unwrap_or_else(|| default_out(cfg));
    let mut out = Artifacts::create(&dir)?;
    out.text("config.json", &(cfg.to_json() + "\n"))?;
    let stamp = timestamp(cfg);
    let reports = dispatch(cfg, &ctx, &mut out, stamp.as_deref())?;

    let mut buf = Vec::new();
    report::write_csv(&reports, &mut buf)?;
    out.text("report.csv", &String::from_utf8(buf).expect("csv is utf-8"))?;
    out.text("report.txt", &report::text_summary(&reports))?;
    let passed = reports.iter().all(TestReport::passed);
    let mut artifacts = out.written().to_vec();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        kind: cfg.kind.name(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        replicas: cfg.replicas,
        versions: Versions { gfflab: env!("CARGO_PKG_VERSION"), gfflab_core: gfflab_core::VERSION },
        passed,
        artifacts: &artifacts,
    };
    out.json("manifest.json", &manifest)?;
    Ok(Outcome { dir, reports })
}

fn network(cfg: &ExperimentConfig) -> Result<Arc<Network>> {
    cfg.network.as_ref().ok_or_else(|| Error::invalid(format!("{} needs a `network`", cfg.kind.name())))?.build()
}

fn dispatch(cfg: &ExperimentConfig, ctx: &Ctx, out: &mut Artifacts, stamp: Option<&str>) -> Result<Vec<TestReport>> {
    use ExperimentKind::*;
    let n = cfg.replicas;
    let reports = match cfg.kind {
        SampleGff => sample_gff(cfg, ctx, out, stamp)?,
        SampleSoup => sample_soup(cfg, ctx, out)?,
        Fps => fps(cfg, ctx, out, stamp)?,
        Interface => interface(cfg, ctx, out, stamp)?,
        VerifyIso => {
            let net = network(cfg)?;
            let u = cfg.boundary.resolve(&net)?;
            vec![
                verify::test_isomorphism_discrete(ctx, &net, &u, n)?,
                verify::test_signed_isomorphism(ctx, &net, &u, n)?,
            ]
        }
        ClusterFps => {
            let net = network(cfg)?;
            let u = cfg.boundary.resolve(&net)?;
            vec![verify::test_cluster_fps_identity(ctx, &net, &u, cfg.refine, cfg.alpha, n)?]
        }
        Wick => {
            let net = network(cfg)?;
            let u = cfg.boundary.resolve(&net)?;
            let fs = wick_functions(cfg, &net)?;
            vec![verify::test_wick_moments(ctx, &net, &u, &fs, n)?]
        }
        Massive => {
            let net = network(cfg)?;
            let mut chi = vec![0.0; net.vertex_count()];
            if cfg.chi.is_empty() {
                for &x in net.interior() {
                    chi[x] = 1.0;
                }
            }
            for &(v, c) in &cfg.chi {
                if v >= chi.len() {
                    return Err(Error::invalid(format!("chi: vertex {v} out of range")));
                }
                chi[v] = c;
            }
            vec![verify::test_massive_reweighting(ctx, &net, &chi, n)?]
        }
        PercCurve => {
            let a = cfg.level.unwrap_or(0.5);
            let (rows, rep) = verify::percolation_curve(ctx, &cfg.sizes, a, &cfg.thetas, n)?;
            out.csv("perc_curve.csv", &rows)?;
            let series: Vec<(String, Vec<[f64; 2]>)> = cfg
                .sizes
                .iter()
                .map(|&s| (format!("N={s}"), rows.iter().filter(|r| r.n == s).map(|r| [r.theta, r.p]).collect()))
                .collect();
            out.text("perc_curve.svg", &svg::line_plot(&series, stamp))?;
            vec![rep]
        }
        Fkg => {
            let net = network(cfg)?;
            let u = cfg.boundary.resolve(&net)?;
            let a = cfg.level.unwrap_or(0.0);
            vec![verify::test_fkg(ctx, &net, &u, a, cfg.targets.unwrap_or(DEFAULT_TARGETS), n)?]
        }
        LocalFiniteness => {
            let Some(NetworkSource::Domain(domain)) = &cfg.network else {
                return Err(Error::invalid("local-finiteness needs a `domain` network"));
            };
            let a = cfg.level.unwrap_or(0.2);
            let (rows, rep) =
                verify::local_finiteness_stats(ctx, domain, &cfg.domain_levels, a, &cfg.boundary, &cfg.epsilons, n)?;
            out.csv("local_finiteness.csv", &rows)?;
            vec![rep]
        }
        Coupling => {
            let net = network(cfg)?;
            let u = cfg.boundary.resolve(&net)?;
            let star = cfg.boundary_star.as_ref().ok_or_else(|| Error::invalid("coupling needs `boundary_star`"))?;
            let u_star = star.resolve(&net)?;
            let inner = cfg.inner_replicas.unwrap_or(DEFAULT_INNER);
            let (rows, rep) = verify::level_line_coupling(ctx, &net, &u, &u_star, cfg.lambda(), n, inner)?;
            out.csv("coupling.csv", &rows)?;
            vec![rep]
        }
        RefineStudy => {
            let net = network(cfg)?;
            let u = cfg.boundary.resolve(&net)?;
            let stat = cfg.statistic.unwrap_or(RefineStatistic::Fps);
            let a = cfg.level.unwrap_or(match stat {
                RefineStatistic::Fps => 0.0,
                RefineStatistic::Interface => cfg.lambda(),
            });
            let (rows, rep) = verify::refinement_study(ctx, &net, &u, &cfg.refine_levels, stat, a, cfg.exact_edges, n)?;
            out.csv("refine_study.csv", &rows)?;
            vec![rep]
        }
    };
    Ok(reports)
}

/// Field on the (possibly refined) network for replica `r`.
fn field(net: &Arc<Network>, u: &BoundaryFunction, m: u32, seed: u64, r: u64) -> Result<FieldSample> {
    let base = sample_discrete_gff(net, u, &mut stream(seed, r, Purpose::Field));
    if m == 0 {
        return Ok(base);
    }
    let refined = refine(net, m);
    Ok(interpolate_field(&refined, &base, &mut stream(seed, r, Purpose::Interpolation))?)
}

fn sample_gff(cfg: &ExperimentConfig, ctx: &Ctx, out: &mut Artifacts, stamp: Option<&str>) -> Result<Vec<TestReport>> {
    let start = Instant::now();
    let net = network(cfg)?;
    let u = cfg.boundary.resolve(&net)?;
    let seed = cfg.seed;
    let fields = ctx.pool.try_map(cfg.replicas, |r| field(&net, &u, cfg.refine, seed, r))?;
    let first = &fields[0];
    out.csv("field.csv", &io::field_rows(first))?;
    out.text("network.svg", &svg::render_network(first.network(), None, None, stamp))?;

    let fine = Arc::clone(first.network());
    let fine_u = if cfg.refine == 0 { u.clone() } else { lift_boundary(&refine(&net, cfg.refine), &u) };
    let green = green_function(&fine);
    let interior = fine.interior();
    let picks: Vec<usize> = if interior.len() <= 8 {
        interior.to_vec()
    } else {
        (0..8).map(|t| interior[t * (interior.len() - 1) / 7]).collect()
    };
    let mut rep = TestReport::new("gff_moments", cfg.replicas, seed);
    for &x in &picks {
        let xs: Vec<f64> = fields.iter().map(|f| f.get(x)).collect();
        rep.push(Comparison::within(format!("mean[{x}]"), stats::mean(&xs), fine_u.get(x), ctx.tol.sigmas));
        rep.push(Comparison::within(format!("var[{x}]"), stats::variance(&xs), green.get(x, x), ctx.tol.sigmas));
    }
    rep.runtime = start.elapsed();
    Ok(vec![rep])
}

fn sample_soup(cfg: &ExperimentConfig, ctx: &Ctx, out: &mut Artifacts) -> Result<Vec<TestReport>> {
    let net = network(cfg)?;
    let u = cfg.boundary.resolve(&net)?;
    let loops = sample_loop_soup(&net, cfg.alpha, &mut stream(cfg.seed, 0, Purpose::LoopSoup))?;
    let exc = if net.boundary().iter().all(|&b| u.get(b) == 0.0) {
        SoupSample::empty(Arc::clone(&net))
    } else {
        sample_excursion_ppp(&net, &u, &mut stream(cfg.seed, 0, Purpose::Excursions))?
    };
    out.csv("trajectories.csv", &io::trajectory_rows(&loops))?;
    out.csv("excursions.csv", &io::trajectory_rows(&exc))?;
    let partition = build_clusters(&loops, &exc)?;
    out.csv("clusters.csv", &io::cluster_rows(&partition))?;
    let max_len = if net.vertex_count() <= 16 { 4 } else { 2 };
    Ok(vec![verify::test_loop_soup(ctx, &net, cfg.alpha, max_len, cfg.replicas)?])
}

fn fps(cfg: &ExperimentConfig, ctx: &Ctx, out: &mut Artifacts, stamp: Option<&str>) -> Result<Vec<TestReport>> {
    let net = network(cfg)?;
    let u = cfg.boundary.resolve(&net)?;
    let a = cfg.level.unwrap_or(0.0);
    let f = field(&net, &u, cfg.refine, cfg.seed, 0)?;
    let set = first_passage_set(&f, a, cfg.exact_edges);
    out.csv("field.csv", &io::field_rows(&f))?;
    out.json("fps.json", &io::subset_dump(&set))?;
    out.text("fps.svg", &svg::render_network(f.network(), Some(&set), None, stamp))?;
    let levels = [a - 0.5, a, a + 0.5];
    Ok(vec![verify::test_fps_monotonicity(ctx, &net, &u, &levels, cfg.replicas)?])
}

fn interface(cfg: &ExperimentConfig, ctx: &Ctx, out: &mut Artifacts, stamp: Option<&str>) -> Result<Vec<TestReport>> {
    let start = Instant::now();
    let net = network(cfg)?;
    let u = cfg.boundary.resolve(&net)?;
    let a = cfg.level.unwrap_or(cfg.lambda());
    let seed = cfg.seed;
    let results = ctx.pool.try_map(cfg.replicas, |r| -> Result<Option<(usize, bool)>> {
        let f = field(&net, &u, cfg.refine, seed, r)?;
        let set = first_passage_set(&f, a, cfg.exact_edges);
        Ok(extract_interface(&set).ok().map(|c| (c.len(), c.is_simple())))
    })?;

    let f = field(&net, &u, cfg.refine, seed, 0)?;
    let set = first_passage_set(&f, a, cfg.exact_edges);
    let curve = extract_interface(&set)?;
    out.csv("interface.csv", &io::interface_rows(&curve))?;
    out.json("fps.json", &io::subset_dump(&set))?;
    out.text("interface.svg", &svg::render_network(f.network(), Some(&set), Some(&curve), stamp))?;

    let ok: Vec<(usize, bool)> = results.iter().flatten().copied().collect();
    let frac = |k: usize| k as f64 / cfg.replicas as f64;
    let mut rep = TestReport::new("interface", cfg.replicas, seed);
    rep.push(Comparison::exact("extracted_fraction", frac(ok.len()), 1.0, 0.0));
    rep.push(Comparison::exact("simple_fraction", frac(ok.iter().filter(|o| o.1).count()), 1.0, 0.0).soft());
    let lengths: Vec<f64> = ok.iter().map(|o| o.0 as f64).collect();
    if !lengths.is_empty() {
        let m = stats::mean(&lengths);
        rep.note(format!("mean dual length {:.3} ± {:.3}", m.value, m.stderr));
    }
    rep.runtime = start.elapsed();
    Ok(vec![rep])
}

fn wick_functions(cfg: &ExperimentConfig, net: &Network) -> Result<Vec<Vec<f64>>> {
    let tf = &cfg.test_functions;
    let random = if tf.is_empty() { DEFAULT_WICK_FUNCTIONS } else { tf.random };
    let n = net.vertex_count();
    let mut fs = Vec::new();
    for i in 0..random as u64 {
        let mut rng = stream(cfg.seed, i, Purpose::Extra(50));
        fs.push((0..n).map(|v| if net.is_boundary(v) { 0.0 } else { rng.random_range(-1.0..1.0) }).collect());
    }
    let sparse = |entries: &[(usize, f64)]| -> Result<Vec<f64>> {
        let mut f = vec![0.0; n];
        for &(v, x) in entries {
            if v >= n || net.is_boundary(v) {
                return Err(Error::invalid(format!("test function: {v} is not an interior vertex")));
            }
            f[v] = x;
        }
        Ok(f)
    };
    for &d in &tf.deltas {
        fs.push(sparse(&[(d, 1.0)])?);
    }
    for e in &tf.explicit {
        fs.push(sparse(e)?);
    }
    Ok(fs)
}
