//! Command line: `run CONFIG` or one subcommand per experiment kind.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, ExperimentKind, TestFunctions};
use crate::error::{Error, Result};
use crate::experiments::{self, Outcome, DEFAULT_THETAS};
use crate::netspec::{BoundarySpec, DomainSpec, NetworkSource, RectValue, Shape, BUNDLED};
use crate::parallel::WORKERS_ENV;
use crate::verify::RefineStatistic;

#[derive(Debug, Parser)]
#[command(name = "gfflab", version, about = "Gaussian free field, loop soup and first passage set experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a JSON configuration file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sample the discrete (or refined metric) free field.
    SampleGff(KindArgs),
    /// Sample a loop soup and excursion process and their clusters.
    SampleSoup(KindArgs),
    /// First passage set of a sampled field.
    Fps(KindArgs),
    /// Interface between the two boundary arcs of a split domain.
    Interface(KindArgs),
    /// Occupation-field isomorphisms.
    VerifyIso(KindArgs),
    /// Excursion clusters against the first passage set.
    ClusterFps(KindArgs),
    /// Second and fourth moments of the occupation field.
    Wick(KindArgs),
    /// Massive field by reweighting.
    Massive(KindArgs),
    /// Crossing probability of first passage sets on growing boxes.
    PercCurve(KindArgs),
    /// Positive correlation of first passage set hitting events.
    Fkg(KindArgs),
    /// Complement components across refinement levels.
    LocalFiniteness(KindArgs),
    /// Level-line coupling of two boundary conditions.
    Coupling(KindArgs),
    /// Convergence of sets under metric refinement.
    RefineStudy(KindArgs),
    /// List the bundled example networks.
    Networks,
}

/// Execution options shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Output directory (default `runs/<kind>-<seed>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Omit timestamps so repeated runs are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct KindArgs {
    #[command(flatten)]
    pub common: Common,

    /// Bundled network name or path to a network JSON file.
    #[arg(long, group = "net")]
    pub network: Option<String>,
    /// Unit grid `WxH`.
    #[arg(long, group = "net", value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Lattice domain: `square`, `disk`, `box:N` or `rect:X0,Y0,X1,Y1`.
    #[arg(long, group = "net", value_parser = parse_shape)]
    pub domain: Option<Shape>,
    /// Domain mesh level (`2^-n`).
    #[arg(long, default_value_t = 0)]
    pub n: u32,
    /// Split the domain boundary at this abscissa into arcs B1 (right) and B2 (left).
    #[arg(long)]
    pub split: Option<f64>,

    /// Constant boundary value.
    #[arg(long)]
    pub u: Option<f64>,
    /// Boundary value on a named arc.
    #[arg(long = "arc", value_name = "NAME=VALUE", value_parser = parse_named)]
    pub arcs: Vec<(String, f64)>,
    /// Boundary value on the boundary vertices inside a box.
    #[arg(long = "rect", value_name = "X0,Y0,X1,Y1=VALUE", value_parser = parse_rect)]
    pub rects: Vec<RectValue>,
    /// Boundary value at one vertex.
    #[arg(long = "vertex", value_name = "V=VALUE", value_parser = parse_indexed)]
    pub vertices: Vec<(usize, f64)>,
    /// Constant part of the larger boundary condition (coupling).
    #[arg(long)]
    pub u_star: Option<f64>,
    #[arg(long = "arc-star", value_name = "NAME=VALUE", value_parser = parse_named)]
    pub arcs_star: Vec<(String, f64)>,
    #[arg(long = "rect-star", value_name = "X0,Y0,X1,Y1=VALUE", value_parser = parse_rect)]
    pub rects_star: Vec<RectValue>,

    /// First passage level `a`.
    #[arg(long)]
    pub level: Option<f64>,
    /// Loop soup intensity.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Metric refinement `m`.
    #[arg(long)]
    pub refine: Option<u32>,
    /// Decide edges from the endpoint values only.
    #[arg(long)]
    pub grid_edges: bool,
    #[arg(long, value_delimiter = ',')]
    pub refine_levels: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub domain_levels: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub thetas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Vec<f64>,
    /// Killing rate at a vertex.
    #[arg(long = "chi", value_name = "V=VALUE", value_parser = parse_indexed)]
    pub chi: Vec<(usize, f64)>,
    /// Number of random Wick test functions.
    #[arg(long)]
    pub random_functions: Option<usize>,
    /// Vertex indicator Wick test functions.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Vec<usize>,
    /// Two relative boxes `X0,Y0,X1,Y1;X0,Y0,X1,Y1`.
    #[arg(long, value_parser = parse_targets)]
    pub targets: Option<[[f64; 4]; 2]>,
    #[arg(long, value_enum)]
    pub statistic: Option<RefineStatistic>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Inner replicas per interface (coupling).
    #[arg(long)]
    pub inner: Option<usize>,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    Ok((w.trim().parse().map_err(|_| "bad width")?, h.trim().parse().map_err(|_| "bad height")?))
}

fn floats<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| e.to_string())?;
    v.try_into().map_err(|_| format!("expected {N} comma-separated numbers"))
}

fn parse_shape(s: &str) -> std::result::Result<Shape, String> {
    match s.split_once(':') {
        None if s == "square" => Ok(Shape::Square),
        None if s == "disk" => Ok(Shape::Disk),
        Some(("box", n)) => Ok(Shape::Box(n.parse().map_err(|_| "bad box size")?)),
        Some(("rect", r)) => Ok(Shape::Rect(floats::<4>(r)?)),
        _ => Err("expected square, disk, box:N or rect:X0,Y0,X1,Y1".into()),
    }
}

fn parse_named(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    Ok((k.to_string(), v.parse().map_err(|_| "bad value")?))
}

fn parse_indexed(s: &str) -> std::result::Result<(usize, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected V=VALUE")?;
    Ok((k.parse().map_err(|_| "bad vertex")?, v.parse().map_err(|_| "bad value")?))
}

fn parse_rect(s: &str) -> std::result::Result<RectValue, String> {
    let (r, v) = s.split_once('=').ok_or("expected X0,Y0,X1,Y1=VALUE")?;
    Ok(RectValue { rect: floats::<4>(r)?, value: v.parse().map_err(|_| "bad value")? })
}

fn parse_targets(s: &str) -> std::result::Result<[[f64; 4]; 2], String> {
    let (a, b) = s.split_once(';').ok_or("expected two boxes separated by `;`")?;
    Ok([floats::<4>(a)?, floats::<4>(b)?])
}

fn kind_of(cmd: &Command) -> Option<(ExperimentKind, &KindArgs)> {
    use ExperimentKind as K;
    Some(match cmd {
        Command::SampleGff(a) => (K::SampleGff, a),
        Command::SampleSoup(a) => (K::SampleSoup, a),
        Command::Fps(a) => (K::Fps, a),
        Command::Interface(a) => (K::Interface, a),
        Command::VerifyIso(a) => (K::VerifyIso, a),
        Command::ClusterFps(a) => (K::ClusterFps, a),
        Command::Wick(a) => (K::Wick, a),
        Command::Massive(a) => (K::Massive, a),
        Command::PercCurve(a) => (K::PercCurve, a),
        Command::Fkg(a) => (K::Fkg, a),
        Command::LocalFiniteness(a) => (K::LocalFiniteness, a),
        Command::Coupling(a) => (K::Coupling, a),
        Command::RefineStudy(a) => (K::RefineStudy, a),
        Command::Run { .. } | Command::Networks => return None,
    })
}

fn apply_common(cfg: &mut ExperimentConfig, c: &Common) {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(r) = c.replicas {
        cfg.replicas = r;
    }
    if c.workers.is_some() {
        cfg.workers = c.workers;
    }
    if c.out.is_some() {
        cfg.out.clone_from(&c.out);
    }
    cfg.deterministic |= c.deterministic;
}

const DEFAULT_REPLICAS: usize = 200;

/// Configuration equivalent to a kind subcommand.
pub fn config_from_args(kind: ExperimentKind, a: &KindArgs) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind, DEFAULT_REPLICAS, 0);
    let split = a.split;
    cfg.network = if let Some(name) = &a.network {
        Some(NetworkSource::from_cli(name))
    } else if let Some((width, height)) = a.grid {
        Some(NetworkSource::Grid { width, height })
    } else if let Some(shape) = &a.domain {
        Some(NetworkSource::Domain(DomainSpec { shape: shape.clone(), level: a.n, split }))
    } else if kind == ExperimentKind::Interface {
        Some(NetworkSource::Domain(DomainSpec { shape: Shape::Disk, level: a.n.max(3), split: Some(split.unwrap_or(0.0)) }))
    } else {
        None
    };

    let boundary_given = a.u.is_some() || !a.arcs.is_empty() || !a.rects.is_empty() || !a.vertices.is_empty();
    cfg.boundary = BoundarySpec {
        default: a.u.unwrap_or(0.0),
        arcs: a.arcs.iter().cloned().collect(),
        rects: a.rects.clone(),
        vertices: a.vertices.clone(),
    };
    if kind == ExperimentKind::Interface && !boundary_given {
        let l = a.lambda.unwrap_or(crate::config::LAMBDA);
        cfg.boundary.arcs = [("B1".to_string(), l), ("B2".to_string(), -l)].into_iter().collect();
    }
    if a.u_star.is_some() || !a.arcs_star.is_empty() || !a.rects_star.is_empty() {
        let mut star = cfg.boundary.clone();
        if let Some(u) = a.u_star {
            star.default = u;
        }
        star.arcs.extend(a.arcs_star.iter().cloned());
        star.rects.extend(a.rects_star.iter().cloned());
        cfg.boundary_star = Some(star);
    }

    cfg.level = a.level;
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    cfg.refine = a.refine.unwrap_or(0);
    cfg.exact_edges = !a.grid_edges;
    cfg.refine_levels = a.refine_levels.clone();
    if kind == ExperimentKind::RefineStudy && cfg.refine_levels.is_empty() {
        cfg.refine_levels = vec![0, 1, 2];
    }
    cfg.domain_levels = a.domain_levels.clone();
    cfg.sizes = a.sizes.clone();
    cfg.thetas = if a.thetas.is_empty() && kind == ExperimentKind::PercCurve { DEFAULT_THETAS.to_vec() } else { a.thetas.clone() };
    cfg.epsilons = if a.epsilons.is_empty() && kind == ExperimentKind::LocalFiniteness { vec![0.25] } else { a.epsilons.clone() };
    if kind == ExperimentKind::LocalFiniteness && cfg.domain_levels.is_empty() {
        cfg.domain_levels = vec![a.n, a.n + 1, a.n + 2];
    }
    cfg.chi = a.chi.clone();
    cfg.test_functions = TestFunctions { random: a.random_functions.unwrap_or(0), deltas: a.deltas.clone(), explicit: vec![] };
    cfg.targets = a.targets;
    cfg.statistic = a.statistic;
    cfg.lambda = a.lambda;
    cfg.inner_replicas = a.inner;
    apply_common(&mut cfg, &a.common);
    cfg
}

/// Resolve the command into a configuration (`None` for informational commands).
pub fn config(cmd: &Command) -> Result<Option<ExperimentConfig>> {
    match cmd {
        Command::Run { config, common } => {
            let mut cfg = ExperimentConfig::load(config)?;
            apply_common(&mut cfg, common);
            cfg.validate()?;
            Ok(Some(cfg))
        }
        Command::Networks => Ok(None),
        other => {
            let (kind, args) = kind_of(other).expect("experiment subcommand");
            let cfg = config_from_args(kind, args);
            cfg.validate()?;
            Ok(Some(cfg))
        }
    }
}

fn execute(cli: &Cli) -> Result<Option<Outcome>> {
    let Some(cfg) = config(&cli.command)? else {
        for (name, _) in BUNDLED {
            println!("{name}");
        }
        return Ok(None);
    };
    experiments::run(&cfg).map(Some)
}

/// Exit code `0` on success, `1` on a hard failure or runtime error, `2` on a
/// configuration error.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(outcome)) => {
            for r in &outcome.reports {
                print!("{}", r.summary());
            }
            println!("artifacts: {}", outcome.dir.display());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<Error> for ExitCode {
    fn from(e: Error) -> Self {
        ExitCode::from(e.exit_code())
    }
}
