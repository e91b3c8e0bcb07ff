//! Experiment configuration: versioned JSON, unknown keys rejected.

use std::path::{Path, PathBuf};

use gfflab_core::clusters::ClusterError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::netspec::{BoundarySpec, NetworkSource};
use crate::verify::{RefineStatistic, Tolerances};

pub const SCHEMA_VERSION: u32 = 1;

/// Height gap constant `λ = √(π/8)`.
pub const LAMBDA: f64 = 0.626_657_068_657_750_1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SampleGff,
    SampleSoup,
    Fps,
    Interface,
    VerifyIso,
    ClusterFps,
    Wick,
    Massive,
    PercCurve,
    Fkg,
    LocalFiniteness,
    Coupling,
    RefineStudy,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SampleGff => "sample-gff",
            ExperimentKind::SampleSoup => "sample-soup",
            ExperimentKind::Fps => "fps",
            ExperimentKind::Interface => "interface",
            ExperimentKind::VerifyIso => "verify-iso",
            ExperimentKind::ClusterFps => "cluster-fps",
            ExperimentKind::Wick => "wick",
            ExperimentKind::Massive => "massive",
            ExperimentKind::PercCurve => "perc-curve",
            ExperimentKind::Fkg => "fkg",
            ExperimentKind::LocalFiniteness => "local-finiteness",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::RefineStudy => "refine-study",
        }
    }
}

/// Test functions for the Wick-moment check.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctions {
    /// Number of random functions with i.i.d. uniform(-1, 1) interior values.
    #[serde(default)]
    pub random: usize,
    /// Indicator functions of single vertices.
    #[serde(default)]
    pub deltas: Vec<usize>,
    /// Sparse functions as `(vertex, value)` lists.
    #[serde(default)]
    pub explicit: Vec<Vec<(usize, f64)>>,
}

impl TestFunctions {
    pub fn is_empty(&self) -> bool {
        self.random == 0 && self.deltas.is_empty() && self.explicit.is_empty()
    }
}

fn default_alpha() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSource>,
    #[serde(default)]
    pub boundary: BoundarySpec,
    /// Larger boundary condition `u*` for the coupling experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_star: Option<BoundarySpec>,
    /// FPS level `a` (the set is where the field stays `≥ -a`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Metric refinement `m` (each edge split into `2^m` pieces).
    #[serde(default)]
    pub refine: u32,
    #[serde(default = "yes")]
    pub exact_edges: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refine_levels: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domain_levels: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sizes: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thetas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chi: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "TestFunctions::is_empty")]
    pub test_functions: TestFunctions,
    /// Two boxes `[x0, y0, x1, y1]` relative to the vertex bounding box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<[[f64; 4]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic: Option<RefineStatistic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_replicas: Option<usize>,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub deterministic: bool,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, replicas: usize, seed: u64) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            kind,
            network: None,
            boundary: BoundarySpec::default(),
            boundary_star: None,
            level: None,
            alpha: 0.5,
            refine: 0,
            exact_edges: true,
            refine_levels: vec![],
            domain_levels: vec![],
            sizes: vec![],
            thetas: vec![],
            epsilons: vec![],
            chi: vec![],
            test_functions: TestFunctions::default(),
            targets: None,
            statistic: None,
            lambda: None,
            inner_replicas: None,
            replicas,
            seed,
            workers: None,
            out: None,
            tolerances: Tolerances::default(),
            deterministic: false,
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse { path: origin.to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the configuration with the execution-only keys (`workers`, `out`,
    /// `deterministic`) cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.out = None;
        c.deterministic = false;
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(LAMBDA)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.replicas == 0 {
            return bad("replicas must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if matches!(self.workers, Some(0)) {
            return bad("workers must be positive".into());
        }
        let t = &self.tolerances;
        if !(t.sigmas > 0.0) || !(t.ks_p > 0.0 && t.ks_p < 1.0) || !(0.0..=1.0).contains(&t.ks_fraction) {
            return bad("tolerances: sigmas > 0, 0 < ks_p < 1 and 0 ≤ ks_fraction ≤ 1 are required".into());
        }
        use ExperimentKind::*;
        if matches!(self.kind, VerifyIso | ClusterFps | Wick | Coupling) && self.alpha != 0.5 {
            return Err(ClusterError::WrongIntensity(Some(self.alpha)).into());
        }
        if self.network.is_none() && !matches!(self.kind, PercCurve) {
            return bad(format!("{} needs a `network`", self.kind.name()));
        }
        match self.kind {
            PercCurve => {
                if self.sizes.is_empty() || self.thetas.is_empty() {
                    return bad("perc-curve needs nonempty `sizes` and `thetas`".into());
                }
                if self.thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    return bad("thetas must lie in [0, 1]".into());
                }
            }
            LocalFiniteness => {
                if !matches!(self.network, Some(NetworkSource::Domain(_))) {
                    return bad("local-finiteness needs a `domain` network".into());
                }
                if self.domain_levels.is_empty() || self.epsilons.is_empty() {
                    return bad("local-finiteness needs nonempty `domain_levels` and `epsilons`".into());
                }
            }
            Coupling => {
                if self.boundary_star.is_none() {
                    return bad("coupling needs `boundary_star`".into());
                }
                if self.inner_replicas == Some(0) {
                    return bad("inner_replicas must be positive".into());
                }
            }
            RefineStudy if self.refine_levels.is_empty() => {
                return bad("refine-study needs nonempty `refine_levels`".into());
            }
            Massive if self.chi.iter().any(|&(_, c)| !(c >= 0.0 && c.is_finite())) => {
                return bad("chi must be nonnegative and finite".into());
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(kind: &str, extra: &str) -> String {
        format!(r#"{{"schema_version": 1, "kind": "{kind}", "network": {{"bundled": "p3"}}, "replicas": 10, "seed": 1{extra}}}"#)
    }

    #[test]
    fn lambda_value() {
        assert!((LAMBDA - (std::f64::consts::PI / 8.0).sqrt()).abs() < 1e-16);
    }

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::parse(&minimal("verify-iso", ""), "x").unwrap();
        assert_eq!(c.kind, ExperimentKind::VerifyIso);
        assert_eq!(c.alpha, 0.5);
        let again = ExperimentConfig::parse(&c.to_json(), "y").unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
    }

    #[test]
    fn unknown_keys_report_line_and_name() {
        let text = minimal("fps", ",\n\"tolerence\": {}");
        let err = ExperimentConfig::parse(&text, "cfg.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown field `tolerence`") && msg.contains("line 2"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn cluster_fps_requires_half() {
        let err = ExperimentConfig::parse(&minimal("cluster-fps", r#", "alpha": 0.7"#), "x").unwrap_err();
        assert!(err.to_string().contains("signed isomorphism stated only at α = 1/2"));
        assert_eq!(err.exit_code(), 2);
        assert!(ExperimentConfig::parse(&minimal("sample-soup", r#", "alpha": 0.7"#), "x").is_ok());
    }

    #[test]
    fn execution_keys_do_not_change_the_hash() {
        let a = ExperimentConfig::parse(&minimal("fps", ""), "x").unwrap();
        let mut b = a.clone();
        b.workers = Some(8);
        b.deterministic = true;
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn validation_errors() {
        let v2 = minimal("fps", "").replace(r#""schema_version": 1"#, r#""schema_version": 2"#);
        assert!(ExperimentConfig::parse(&v2, "x").unwrap_err().to_string().contains("schema_version 2"));
        let mut c = ExperimentConfig::new(ExperimentKind::PercCurve, 10, 1);
        assert!(c.validate().is_err());
        c.sizes = vec![8];
        c.thetas = vec![0.5];
        c.validate().unwrap();
        c.thetas = vec![1.5];
        assert!(c.validate().is_err());
    }
}
