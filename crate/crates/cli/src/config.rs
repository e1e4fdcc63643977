//! Experiment configuration, stored as TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use conquer_core::datagen::{DgpKind, DgpSpec};
use conquer_core::inference::VarianceKind;
use conquer_core::kernels::Kernel;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: u64,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub estimators: Vec<String>,
    /// How the multi-round estimators are initialized: `master`, `dc` or
    /// `fresh:<rows>`.
    #[serde(default = "default_init")]
    pub init: String,
    pub dgp: DgpSection,
    #[serde(default)]
    pub smoothing: SmoothingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<InferenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalized: Option<PenalizedSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSection {
    pub kind: String,
    pub p: usize,
    pub n: usize,
    pub m: usize,
    pub tau: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSection {
    /// Bandwidth constant `c` in `b = c ((p + log n)/n)^{1/3}`.
    pub c: f64,
    pub kernel: String,
    /// `fixed` or `dynamic`.
    pub scale: String,
}

impl Default for SmoothingSection {
    fn default() -> Self {
        Self {
            c: 2.5,
            kernel: "gaussian".into(),
            scale: "fixed".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    pub alpha: f64,
    pub methods: Vec<String>,
    /// Coefficients to report; all when empty.
    #[serde(default)]
    pub coefs: Vec<usize>,
    /// Rounds of the point estimator behind the CE methods.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// `full` or `outward:<patience>`.
    #[serde(default = "default_scan")]
    pub score_scan: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenalizedSection {
    pub sparsity: usize,
    /// Constant in the high-dimensional bandwidths.
    pub bandwidth_c: f64,
    pub validation_rows: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_init() -> String {
    "master".into()
}

fn default_rounds() -> usize {
    10
}

fn default_scan() -> String {
    "full".into()
}

/// Estimators known to `fit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Global,
    DcAverage,
    Distributed(usize),
    DistributedSubgradient(usize),
    NewtonVariant(usize),
    TwoStep(usize),
    /// Multi-round l1-penalized conquer.
    PenalizedMultiRound(usize),
    /// l1-conquer on the pooled data.
    PooledL1,
    /// Average of local l1-conquer fits.
    AverageL1,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Global => write!(f, "global"),
            Estimator::DcAverage => write!(f, "dc"),
            Estimator::Distributed(t) => write!(f, "distributed:{t}"),
            Estimator::DistributedSubgradient(t) => write!(f, "subgradient:{t}"),
            Estimator::NewtonVariant(t) => write!(f, "newton:{t}"),
            Estimator::TwoStep(t) => write!(f, "two_step:{t}"),
            Estimator::PenalizedMultiRound(t) => write!(f, "penalized:{t}"),
            Estimator::PooledL1 => write!(f, "pooled_l1"),
            Estimator::AverageL1 => write!(f, "average_l1"),
        }
    }
}

impl FromStr for Estimator {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let (name, arg) = split_arg(s);
        let rounds = || -> CliResult<usize> {
            let t: usize = arg
                .ok_or_else(|| CliError::Config(format!("estimator '{s}' needs a round count, e.g. '{name}:10'")))?
                .parse()
                .map_err(|_| CliError::Config(format!("bad round count in '{s}'")))?;
            if t == 0 {
                return Err(CliError::Config(format!("round count must be positive in '{s}'")));
            }
            Ok(t)
        };
        match name {
            "global" => Ok(Estimator::Global),
            "dc" => Ok(Estimator::DcAverage),
            "distributed" => Ok(Estimator::Distributed(rounds()?)),
            "subgradient" => Ok(Estimator::DistributedSubgradient(rounds()?)),
            "newton" => Ok(Estimator::NewtonVariant(rounds()?)),
            "two_step" => Ok(Estimator::TwoStep(rounds()?)),
            "penalized" => Ok(Estimator::PenalizedMultiRound(rounds()?)),
            "pooled_l1" => Ok(Estimator::PooledL1),
            "average_l1" => Ok(Estimator::AverageL1),
            _ => Err(CliError::Config(format!("unknown estimator '{s}'"))),
        }
    }
}

impl Estimator {
    pub fn is_penalized(self) -> bool {
        matches!(
            self,
            Estimator::PenalizedMultiRound(_) | Estimator::PooledL1 | Estimator::AverageL1
        )
    }
}

/// Inference methods known to `infer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Wald interval around the multi-round estimate.
    CeNormal(VarianceKind),
    /// Wald interval around the averaging estimate.
    DcNormal(VarianceKind),
    /// Score inversion over a grid with the given number of points.
    CeScore(usize),
    CeBootA(usize),
    CeBootB(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::CeNormal(k) => write!(f, "ce_normal:{}", k.name()),
            Method::DcNormal(k) => write!(f, "dc_normal:{}", k.name()),
            Method::CeScore(g) => write!(f, "ce_score:{g}"),
            Method::CeBootA(b) => write!(f, "ce_boot_a:{b}"),
            Method::CeBootB(b) => write!(f, "ce_boot_b:{b}"),
        }
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let (name, arg) = split_arg(s);
        let count = |default: usize| -> CliResult<usize> {
            match arg {
                None => Ok(default),
                Some(a) => a
                    .parse()
                    .ok()
                    .filter(|v| *v > 0)
                    .ok_or_else(|| CliError::Config(format!("bad count in '{s}'"))),
            }
        };
        let kind = || -> CliResult<VarianceKind> {
            arg.unwrap_or("type2").parse().map_err(|e| CliError::Config(format!("{e} in '{s}'")))
        };
        match name {
            "ce_normal" => Ok(Method::CeNormal(kind()?)),
            "dc_normal" => Ok(Method::DcNormal(kind()?)),
            "ce_score" => Ok(Method::CeScore(count(401)?)),
            "ce_boot_a" => Ok(Method::CeBootA(count(1000)?)),
            "ce_boot_b" => Ok(Method::CeBootB(count(1000)?)),
            _ => Err(CliError::Config(format!("unknown inference method '{s}'"))),
        }
    }
}

/// Initializer for the multi-round estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Master,
    Dc,
    Fresh(usize),
}

impl FromStr for Init {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match split_arg(s) {
            ("master", None) => Ok(Init::Master),
            ("dc", None) => Ok(Init::Dc),
            ("fresh", Some(rows)) => rows
                .parse()
                .ok()
                .filter(|r| *r > 0)
                .map(Init::Fresh)
                .ok_or_else(|| CliError::Config(format!("bad row count in init '{s}'"))),
            _ => Err(CliError::Config(format!("unknown init '{s}'"))),
        }
    }
}

/// Score grid traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scan {
    Full,
    Outward(usize),
}

impl FromStr for Scan {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match split_arg(s) {
            ("full", None) => Ok(Scan::Full),
            ("outward", arg) => arg
                .unwrap_or("3")
                .parse()
                .ok()
                .filter(|v| *v > 0)
                .map(Scan::Outward)
                .ok_or_else(|| CliError::Config(format!("bad patience in '{s}'"))),
            _ => Err(CliError::Config(format!("unknown score scan '{s}'"))),
        }
    }
}

fn split_arg(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((a, b)) => (a.trim(), Some(b.trim())),
        None => (s.trim(), None),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(CliError::Config("at least one estimator is required".into()));
        }
        self.parsed_estimators()?;
        self.parsed_init()?;
        self.dgp_spec()?;
        self.kernel()?;
        self.dynamic_scale()?;
        if !(self.smoothing.c > 0.0) {
            return Err(CliError::Config("smoothing.c must be positive".into()));
        }
        if let Some(inf) = &self.inference {
            if !(inf.alpha > 0.0 && inf.alpha < 1.0) {
                return Err(CliError::Config("inference.alpha must lie in (0, 1)".into()));
            }
            if inf.methods.is_empty() {
                return Err(CliError::Config("inference.methods is empty".into()));
            }
            if inf.rounds == 0 {
                return Err(CliError::Config("inference.rounds must be positive".into()));
            }
            self.parsed_methods()?;
            inf.score_scan.parse::<Scan>()?;
            if let Some(k) = inf.coefs.iter().find(|k| **k > self.dgp.p) {
                return Err(CliError::Config(format!("coefficient {k} out of range for p = {}", self.dgp.p)));
            }
        }
        let penalized = self.parsed_estimators()?.iter().any(|e| e.is_penalized());
        match (&self.penalized, penalized) {
            (None, true) => {
                return Err(CliError::Config(
                    "penalized estimators need a [penalized] section".into(),
                ))
            }
            (Some(p), _) if p.sparsity == 0 || !(p.bandwidth_c > 0.0) || p.validation_rows == 0 => {
                return Err(CliError::Config("invalid [penalized] section".into()))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn parsed_estimators(&self) -> CliResult<Vec<Estimator>> {
        self.estimators.iter().map(|e| e.parse()).collect()
    }

    pub fn parsed_methods(&self) -> CliResult<Vec<Method>> {
        match &self.inference {
            Some(inf) => inf.methods.iter().map(|m| m.parse()).collect(),
            None => Ok(Vec::new()),
        }
    }

    pub fn parsed_init(&self) -> CliResult<Init> {
        self.init.parse()
    }

    pub fn dgp_spec(&self) -> CliResult<DgpSpec> {
        let kind: DgpKind = self.dgp.kind.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let d = &self.dgp;
        DgpSpec::new(kind, d.p, d.n, d.m, d.tau, d.nu, self.seed).map_err(|e| CliError::Config(format!("{e}")))
    }

    pub fn kernel(&self) -> CliResult<Kernel> {
        match self.smoothing.kernel.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "uniform" => Ok(Kernel::Uniform),
            k => Err(CliError::Config(format!("unknown kernel '{k}'"))),
        }
    }

    pub fn dynamic_scale(&self) -> CliResult<bool> {
        match self.smoothing.scale.as_str() {
            "fixed" => Ok(false),
            "dynamic" => Ok(true),
            s => Err(CliError::Config(format!("unknown bandwidth scale rule '{s}'"))),
        }
    }

    /// A small example configuration.
    pub fn example() -> Self {
        Self {
            trials: 5,
            seed: 2024,
            output_dir: default_output_dir(),
            estimators: vec!["global".into(), "dc".into(), "distributed:10".into()],
            init: default_init(),
            dgp: DgpSection {
                kind: "linear_hetero(0.2)".into(),
                p: 10,
                n: 300,
                m: 20,
                tau: 0.8,
                nu: 2.0,
            },
            smoothing: SmoothingSection::default(),
            inference: None,
            penalized: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_idempotent() {
        let mut cfg = ExperimentConfig::example();
        cfg.inference = Some(InferenceSection {
            alpha: 0.05,
            methods: vec!["ce_normal:type2".into(), "ce_score:101".into()],
            coefs: vec![1, 2],
            rounds: 10,
            score_scan: "outward:3".into(),
        });
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn estimator_names_round_trip() {
        for s in [
            "global",
            "dc",
            "distributed:10",
            "subgradient:4",
            "newton:3",
            "two_step:10",
            "penalized:1",
            "pooled_l1",
            "average_l1",
        ] {
            assert_eq!(s.parse::<Estimator>().unwrap().to_string(), s);
        }
        assert!("distributed".parse::<Estimator>().is_err());
        assert!("distributed:0".parse::<Estimator>().is_err());
        assert!("magic".parse::<Estimator>().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for s in ["ce_normal:type1", "dc_normal:type3", "ce_score:101", "ce_boot_a:500", "ce_boot_b:1000"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert_eq!("ce_normal".parse::<Method>().unwrap(), Method::CeNormal(VarianceKind::TypeII));
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = ExperimentConfig::example();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::example();
        cfg.estimators.push("pooled_l1".into());
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::example();
        cfg.dgp.tau = 1.5;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml("trials = 1\nbogus = 2").is_err());
    }
}
