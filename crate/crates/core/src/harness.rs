//! Experiment configs, deterministic parallel runs, checkpoints and outputs.
//!
//! A run is a list of work units `(rung, replicate)`. Units are evaluated on
//! a worker pool in batches; results are buffered and written in unit
//! order, so the raw CSV depends neither on the number of workers nor on
//! where a run was interrupted. Replicate `i` always uses the weight field
//! seeded from `(master_seed, i)`, which is what makes resumption exact.
//!
//! Config surface (TOML):
//!
//! ```toml
//! experiment = "sigma_ladder"      # optional; must match the subcommand
//! output_dir = "out/sigma"
//! dump_geodesics = false
//! frame = "symmetry:diagonal"      # or "symmetry:axis", or a table
//!                                  # { theta = 0.3, theta_t = 1.9 }
//! [distribution]
//! kind = "exponential"             # uniform_shifted { lo, hi }, weibull { shape, scale }
//! rate = 1.0
//! [scale]
//! n_ladder = [64, 128, 256]
//! [plan]
//! master_seed = 7
//! n_replicates = 300
//! [window]                         # optional policy overrides
//! inflation = 1.0
//! ```
//!
//! The config hash covers everything except `output_dir`, `dump_geodesics`
//! and `plan.n_replicates`, so a run can be resumed with more replicates.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{EngineError, HSurrogate, WindowPolicy};
use crate::estimators::{
    is_replicate_failure, nonrandom_from_rungs, ConditionalDecomposition, ConditionalKernel,
    ConditionalSample, ConditioningRegion, CorrelationEstimate, CorrelationKernel, Estimate,
    EstimatorError, IncrementKernel, Lab, PassageKernel, ReplicateKernel, ReplicatePlan,
    ReplicateRunner, SampleSummary, TailDiagnostics, WanderingKernel, FAILURE_BUDGET,
};
use crate::fit::{self, FitError};
use crate::formats::{
    self, FitOutcome, FitReport, RawRow, RunManifest, Summary, SummaryRecord, UnitEntry,
    UnitStatus, SCHEMA_VERSION,
};
use crate::geometry::{lattice_point_at, DirectionFrame, LatticePoint};
use crate::weights::WeightDistribution;

pub const RAW_FILE: &str = "raw.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FIT_FILE: &str = "fit.json";
pub const GEODESIC_DIR: &str = "geodesics";
pub const WORKERS_ENV: &str = "FPP_LAB_WORKERS";

/// Seed offset of the pilot replicates that estimate `Delta(n)` when a
/// correlation run is not given one.
const PILOT_SALT: u64 = 0x5049_4c4f_545f_5345;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SigmaLadder,
    WanderingProfile,
    TransverseIncrement,
    IncrementVariance,
    LongRangeCorrelation,
    NonrandomFluctuation,
    ConditionalDecomposition,
    ExponentReport,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::SigmaLadder,
        Experiment::WanderingProfile,
        Experiment::TransverseIncrement,
        Experiment::IncrementVariance,
        Experiment::LongRangeCorrelation,
        Experiment::NonrandomFluctuation,
        Experiment::ConditionalDecomposition,
        Experiment::ExponentReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SigmaLadder => "sigma_ladder",
            Experiment::WanderingProfile => "wandering_profile",
            Experiment::TransverseIncrement => "transverse_increment",
            Experiment::IncrementVariance => "increment_variance",
            Experiment::LongRangeCorrelation => "long_range_correlation",
            Experiment::NonrandomFluctuation => "nonrandom_fluctuation",
            Experiment::ConditionalDecomposition => "conditional_decomposition",
            Experiment::ExponentReport => "exponent_report",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config at `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("cannot write {path}: {reason}")]
    OutputUnwritable { path: String, reason: String },
    #[error("experiment failed: {reason}")]
    ExperimentFailed {
        reason: String,
        failed: usize,
        total: usize,
    },
    #[error("manifest config hash {found} does not match {expected}")]
    ManifestMismatch { expected: String, found: String },
    #[error("cannot read {path}: {reason}")]
    InputUnreadable { path: String, reason: String },
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::ConfigInvalid { .. } => "ConfigInvalid",
            HarnessError::OutputUnwritable { .. } => "OutputUnwritable",
            HarnessError::ExperimentFailed { .. } => "ExperimentFailed",
            HarnessError::ManifestMismatch { .. } => "ManifestMismatch",
            HarnessError::InputUnreadable { .. } => "InputUnreadable",
        }
    }

    /// Machine-readable form printed by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            HarnessError::ConfigInvalid { field, .. } => v["field"] = json!(field),
            HarnessError::OutputUnwritable { path, .. }
            | HarnessError::InputUnreadable { path, .. } => v["path"] = json!(path),
            HarnessError::ExperimentFailed { failed, total, .. } => {
                v["failed"] = json!(failed);
                v["total"] = json!(total);
            }
            HarnessError::ManifestMismatch { expected, found } => {
                v["expected"] = json!(expected);
                v["found"] = json!(found);
            }
        }
        v
    }

    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        HarnessError::ConfigInvalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    fn failed(reason: impl Into<String>) -> Self {
        HarnessError::ExperimentFailed {
            reason: reason.into(),
            failed: 0,
            total: 0,
        }
    }
}

fn unwritable(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::OutputUnwritable {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn unreadable(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::InputUnreadable {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrameSpec {
    /// `"symmetry:diagonal"` or `"symmetry:axis"`.
    Symmetry(String),
    Angles {
        theta: f64,
        theta_t: f64,
    },
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec::Symmetry("symmetry:diagonal".into())
    }
}

impl FrameSpec {
    pub fn resolve(&self) -> Result<DirectionFrame, HarnessError> {
        match self {
            FrameSpec::Symmetry(s) if s == "symmetry:diagonal" => Ok(DirectionFrame::diagonal()),
            FrameSpec::Symmetry(s) if s == "symmetry:axis" => Ok(DirectionFrame::axis()),
            FrameSpec::Symmetry(s) => Err(HarnessError::invalid(
                "frame",
                format!("unknown frame {s:?}"),
            )),
            FrameSpec::Angles { theta, theta_t } => DirectionFrame::new(*theta, *theta_t)
                .map_err(|e| HarnessError::invalid("frame", e.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    /// `{pi1 <= m}` for each `m` of `scale.m_ladder`.
    #[default]
    HalfSpace,
    /// Frozen wet region at the Euclidean ball of radius `k` around the
    /// first target, for each `k` of `scale.k_list`.
    HBall,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleConfig {
    pub n: Option<f64>,
    pub n_ladder: Option<Vec<f64>>,
    pub l: Option<f64>,
    pub l_ladder: Option<Vec<f64>>,
    pub j_ladder: Option<Vec<f64>>,
    /// Absolute values of `k`.
    pub k_list: Option<Vec<f64>>,
    /// `k` as fractions of `n`; defaults to `[0.5]` when `k_list` is absent.
    pub k_fractions: Option<Vec<f64>>,
    pub m: Option<f64>,
    pub m_ladder: Option<Vec<f64>>,
    /// Known `Delta(n)`; correlation runs estimate it from pilot replicates
    /// otherwise.
    pub delta_hat: Option<f64>,
    pub region: Option<RegionKind>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("fpp-lab-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dump_geodesics: bool,
    pub distribution: WeightDistribution,
    #[serde(default)]
    pub frame: FrameSpec,
    #[serde(default)]
    pub scale: ScaleConfig,
    pub plan: ReplicatePlan,
    #[serde(default)]
    pub window: WindowPolicy,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." {
            "<root>".to_string()
        } else {
            path
        };
        HarnessError::ConfigInvalid {
            field,
            reason: e.into_inner().message().trim().to_string(),
        }
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::invalid("<file>", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// SHA-256 of the canonical JSON form (sorted keys) of the config without
/// `output_dir`, `dump_geodesics` and `plan.n_replicates`.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut v = serde_json::to_value(config).expect("serializable config");
    let obj = v.as_object_mut().expect("struct");
    obj.remove("output_dir");
    obj.remove("dump_geodesics");
    if let Some(plan) = obj.get_mut("plan").and_then(|p| p.as_object_mut()) {
        plan.remove("n_replicates");
    }
    hex::encode(Sha256::digest(
        serde_json::to_string(&v).expect("json").as_bytes(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
enum KSpec {
    Absolute(Vec<f64>),
    Fractions(Vec<f64>),
}

impl KSpec {
    fn ks(&self, n: f64) -> Vec<(f64, Option<f64>)> {
        match self {
            KSpec::Absolute(ks) => ks.iter().map(|k| (*k, None)).collect(),
            KSpec::Fractions(fs) => fs.iter().map(|f| (f * n, Some(*f))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Design {
    Sigma {
        ns: Vec<f64>,
    },
    Wandering {
        ns: Vec<f64>,
        ks: KSpec,
    },
    Increments {
        n: f64,
        ls: Vec<f64>,
        delta_hat: Option<f64>,
    },
    Correlation {
        n: f64,
        js: Vec<f64>,
        delta_hat: Option<f64>,
    },
    Nonrandom {
        ns: Vec<f64>,
    },
    Conditional {
        n: f64,
        l: f64,
        region: RegionKind,
        radii: Vec<f64>,
    },
}

/// A config that passed validation, with its experiment fixed.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub config: ExperimentConfig,
    pub experiment: Experiment,
    pub frame: DirectionFrame,
    pub config_hash: String,
    design: Design,
}

fn ladder(
    field: &str,
    v: &Option<Vec<f64>>,
    min: f64,
    min_len: usize,
) -> Result<Vec<f64>, HarnessError> {
    let v = v
        .as_ref()
        .ok_or_else(|| HarnessError::invalid(field, "required"))?;
    if v.len() < min_len {
        return Err(HarnessError::invalid(
            field,
            format!("needs at least {min_len} entries"),
        ));
    }
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= min)) {
        return Err(HarnessError::invalid(
            field,
            format!("entry {x} is below {min} or not finite"),
        ));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::invalid(field, "must be strictly increasing"));
    }
    Ok(v.clone())
}

fn scalar(field: &str, v: Option<f64>, min: f64) -> Result<f64, HarnessError> {
    let v = v.ok_or_else(|| HarnessError::invalid(field, "required"))?;
    if !(v.is_finite() && v >= min) {
        return Err(HarnessError::invalid(
            field,
            format!("{v} is below {min} or not finite"),
        ));
    }
    Ok(v)
}

/// A single value or a ladder, whichever is given.
fn one_or_ladder(
    one: &str,
    v1: Option<f64>,
    many: &str,
    vn: &Option<Vec<f64>>,
    min: f64,
) -> Result<Vec<f64>, HarnessError> {
    match (v1, vn) {
        (Some(_), Some(_)) => Err(HarnessError::invalid(
            many,
            format!("give either {one} or {many}"),
        )),
        (Some(x), None) => Ok(vec![scalar(one, Some(x), min)?]),
        (None, _) => ladder(many, vn, min, 1),
    }
}

fn k_spec(s: &ScaleConfig) -> Result<KSpec, HarnessError> {
    match (&s.k_list, &s.k_fractions) {
        (Some(_), Some(_)) => Err(HarnessError::invalid(
            "scale.k_fractions",
            "give either k_list or k_fractions",
        )),
        (Some(_), None) => Ok(KSpec::Absolute(ladder("scale.k_list", &s.k_list, 0.0, 1)?)),
        (None, Some(_)) => {
            let fs = ladder("scale.k_fractions", &s.k_fractions, 0.0, 1)?;
            if fs.iter().any(|f| *f > 1.0) {
                return Err(HarnessError::invalid(
                    "scale.k_fractions",
                    "fractions must lie in [0, 1]",
                ));
            }
            Ok(KSpec::Fractions(fs))
        }
        (None, None) => Ok(KSpec::Fractions(vec![0.5])),
    }
}

fn positive_opt(field: &str, v: Option<f64>) -> Result<Option<f64>, HarnessError> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => {
            Err(HarnessError::invalid(field, "must be positive"))
        }
        other => Ok(other),
    }
}

/// Checks a config for `experiment` (or the config's own experiment).
pub fn validate(
    config: &ExperimentConfig,
    experiment: Option<Experiment>,
) -> Result<ValidatedConfig, HarnessError> {
    let experiment = match (experiment, config.experiment) {
        (Some(a), Some(b)) if a != b => {
            return Err(HarnessError::invalid(
                "experiment",
                format!("config is for {}, not {}", b.name(), a.name()),
            ))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(HarnessError::invalid("experiment", "required")),
    };
    config
        .distribution
        .validate()
        .map_err(|e| HarnessError::invalid("distribution", e.to_string()))?;
    config
        .window
        .validate()
        .map_err(|e| HarnessError::invalid("window", e.to_string()))?;
    if config.plan.n_replicates < 2 {
        return Err(HarnessError::invalid(
            "plan.n_replicates",
            "variance estimates need at least 2 replicates",
        ));
    }
    let frame = config.frame.resolve()?;
    let s = &config.scale;
    let design = match experiment {
        Experiment::SigmaLadder => Design::Sigma {
            ns: ladder("scale.n_ladder", &s.n_ladder, 4.0, 1)?,
        },
        Experiment::WanderingProfile => Design::Wandering {
            ns: one_or_ladder("scale.n", s.n, "scale.n_ladder", &s.n_ladder, 1.0)?,
            ks: k_spec(s)?,
        },
        Experiment::ExponentReport => {
            let ks = k_spec(s)?;
            if !matches!(ks, KSpec::Fractions(_)) {
                return Err(HarnessError::invalid(
                    "scale.k_list",
                    "exponent reports take k_fractions",
                ));
            }
            Design::Wandering {
                ns: ladder("scale.n_ladder", &s.n_ladder, 4.0, 3)?,
                ks,
            }
        }
        Experiment::TransverseIncrement | Experiment::IncrementVariance => Design::Increments {
            n: scalar("scale.n", s.n, 1.0)?,
            ls: one_or_ladder("scale.l", s.l, "scale.l_ladder", &s.l_ladder, 0.0)?,
            delta_hat: positive_opt("scale.delta_hat", s.delta_hat)?,
        },
        Experiment::LongRangeCorrelation => Design::Correlation {
            n: scalar("scale.n", s.n, 2.0)?,
            js: ladder("scale.j_ladder", &s.j_ladder, 0.0, 1)?,
            delta_hat: positive_opt("scale.delta_hat", s.delta_hat)?,
        },
        Experiment::NonrandomFluctuation => Design::Nonrandom {
            ns: ladder("scale.n_ladder", &s.n_ladder, 1.0, 3)?,
        },
        Experiment::ConditionalDecomposition => {
            let region = s.region.unwrap_or_default();
            let radii = match region {
                RegionKind::HalfSpace => one_or_ladder(
                    "scale.m",
                    s.m,
                    "scale.m_ladder",
                    &s.m_ladder,
                    f64::NEG_INFINITY,
                )?,
                RegionKind::HBall => ladder("scale.k_list", &s.k_list, 0.0, 1)?,
            };
            Design::Conditional {
                n: scalar("scale.n", s.n, 1.0)?,
                l: s.l.map_or(Ok(0.0), |l| scalar("scale.l", Some(l), 0.0))?,
                region,
                radii,
            }
        }
    };
    check_targets(&design, &frame)?;
    if let Design::Correlation {
        n,
        js,
        delta_hat: Some(d),
    } = &design
    {
        let lab = Lab::new(config.distribution, config.plan);
        lab.correlation_pairs(&frame, *n, js, *d)
            .map_err(|e| HarnessError::invalid("scale.j_ladder", e.to_string()))?;
    }
    let mut config = config.clone();
    config.experiment = Some(experiment);
    let config_hash = config_hash(&config);
    Ok(ValidatedConfig {
        config,
        experiment,
        frame,
        config_hash,
        design,
    })
}

fn check_targets(design: &Design, frame: &DirectionFrame) -> Result<(), HarnessError> {
    let origin = |field: &str, n: f64| {
        if lattice_point_at(frame, n, 0.0) == LatticePoint::ORIGIN {
            Err(HarnessError::invalid(
                field,
                format!("target at n = {n} floors to the origin"),
            ))
        } else {
            Ok(())
        }
    };
    match design {
        Design::Sigma { ns } | Design::Nonrandom { ns } | Design::Wandering { ns, .. } => {
            ns.iter().try_for_each(|n| origin("scale.n_ladder", *n))
        }
        Design::Correlation { n, .. } | Design::Conditional { n, .. } => origin("scale.n", *n),
        Design::Increments { n, ls, .. } => IncrementKernel::new(
            WeightDistribution::Exponential { rate: 1.0 },
            ReplicatePlan::new(0, 0),
            WindowPolicy::default(),
            *frame,
            *n,
            ls,
        )
        .map(|_| ())
        .map_err(|e| HarnessError::invalid("scale.l_ladder", e.to_string())),
    }
}

/// Rayon pool with a fixed number of workers. Results come back in index
/// order.
pub struct WorkerPool {
    pool: rayon::ThreadPool,
}

impl WorkerPool {
    pub fn new(workers: usize) -> Result<Self, HarnessError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| HarnessError::failed(format!("cannot start workers: {e}")))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ReplicateRunner for WorkerPool {
    fn map_indices<T, F>(&self, indices: &[usize], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        self.pool
            .install(|| indices.par_iter().map(|&i| f(i)).collect())
    }
}

/// `FPP_LAB_WORKERS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|w| *w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub resume: bool,
    /// Overrides `output_dir`.
    pub output_dir: Option<PathBuf>,
    /// Overrides `dump_geodesics`.
    pub dump_geodesics: Option<bool>,
    /// Stop after this many units have been computed in this invocation,
    /// leaving a checkpoint behind. Used to exercise resumption.
    pub halt_after: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: default_workers(),
            resume: false,
            output_dir: None,
            dump_geodesics: None,
            halt_after: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub manifest: RunManifest,
    /// `None` when the run was halted before completion.
    pub summary: Option<Summary>,
}

enum UnitKernel {
    Passage(PassageKernel),
    Wandering(WanderingKernel),
    Increment(IncrementKernel),
    Correlation {
        kernel: CorrelationKernel,
        js: Vec<f64>,
    },
    Conditional(ConditionalKernel),
}

struct Rung {
    label: String,
    kernel: UnitKernel,
}

struct UnitOutput {
    rows: Vec<(String, f64)>,
    path: Option<Vec<LatticePoint>>,
}

fn named(base: &str, key: &str, v: f64) -> String {
    format!("{base}[{key}={v}]")
}

impl Rung {
    fn run(&self, i: usize) -> Result<UnitOutput, EngineError> {
        match &self.kernel {
            UnitKernel::Passage(k) => {
                let g = k.run(i)?;
                Ok(UnitOutput {
                    rows: vec![("T".into(), g.time)],
                    path: Some(g.path),
                })
            }
            UnitKernel::Wandering(k) => {
                let s = k.run(i)?;
                let mut rows = vec![("T".to_string(), s.geodesic.time)];
                for (kv, w) in k.ks.iter().zip(&s.wandering) {
                    if let Some(w) = w {
                        rows.push((named("W", "k", *kv), *w));
                    }
                }
                Ok(UnitOutput {
                    rows,
                    path: Some(s.geodesic.path),
                })
            }
            UnitKernel::Increment(k) => {
                let s = k.run(i)?;
                let mut rows = Vec::with_capacity(2 * k.lengths.len());
                for (j, l) in k.lengths.iter().enumerate() {
                    rows.push((named("D", "L", *l), s.spread[j]));
                    rows.push((named("inc", "L", *l), s.increment[j]));
                }
                Ok(UnitOutput { rows, path: None })
            }
            UnitKernel::Correlation { kernel, js } => {
                let s = kernel.run(i)?;
                let mut rows = Vec::with_capacity(2 * js.len());
                for (j, (ta, tb)) in js.iter().zip(&s.pairs) {
                    rows.push((named("T_a", "J", *j), *ta));
                    rows.push((named("T_b", "J", *j), *tb));
                }
                Ok(UnitOutput { rows, path: None })
            }
            UnitKernel::Conditional(k) => {
                let s = k.run(i)?;
                let mut rows = vec![
                    ("T_a".to_string(), s.t_a),
                    ("T_b".to_string(), s.t_b),
                    ("T_a_resampled".to_string(), s.t_a_resampled),
                    ("T_b_resampled".to_string(), s.t_b_resampled),
                ];
                if let Some(f) = s.frozen {
                    rows.push(("frozen".into(), f as f64));
                }
                Ok(UnitOutput { rows, path: None })
            }
        }
    }
}

struct UnitState {
    status: UnitStatus,
    rows: Vec<(String, f64)>,
}

#[derive(Default)]
struct Store {
    units: HashMap<(String, usize), UnitState>,
}

impl Store {
    fn done(&self, rung: &str, i: usize) -> bool {
        self.units.contains_key(&(rung.to_string(), i))
    }

    /// Values of `name` over succeeded replicates `0..n`, plus the number of
    /// failed replicates.
    fn column(&self, rung: &str, name: &str, n: usize) -> (Vec<f64>, usize) {
        let mut vals = Vec::new();
        let mut failed = 0;
        for i in 0..n {
            match self.units.get(&(rung.to_string(), i)) {
                Some(UnitState {
                    status: UnitStatus::Succeeded,
                    rows,
                }) => {
                    if let Some((_, v)) = rows.iter().find(|(s, _)| s == name) {
                        vals.push(*v);
                    }
                }
                Some(UnitState {
                    status: UnitStatus::Failed,
                    ..
                }) => failed += 1,
                _ => {}
            }
        }
        (vals, failed)
    }

    fn succeeded(&self, rung: &str, n: usize) -> usize {
        (0..n)
            .filter(|i| {
                matches!(
                    self.units.get(&(rung.to_string(), *i)),
                    Some(UnitState {
                        status: UnitStatus::Succeeded,
                        ..
                    })
                )
            })
            .count()
    }

    fn complete(&self, rung: &str, n: usize) -> bool {
        (0..n).all(|i| self.done(rung, i))
    }
}

fn n_label(n: f64) -> String {
    format!("n={n}")
}

struct Context<'a> {
    cfg: &'a ValidatedConfig,
}

impl Context<'_> {
    fn dist(&self) -> WeightDistribution {
        self.cfg.config.distribution
    }

    fn plan(&self) -> ReplicatePlan {
        self.cfg.config.plan
    }

    fn policy(&self) -> WindowPolicy {
        self.cfg.config.window
    }

    fn n_reps(&self) -> usize {
        self.cfg.config.plan.n_replicates
    }

    fn passage(&self, label: String, plan: ReplicatePlan, n: f64) -> Rung {
        let target = lattice_point_at(&self.cfg.frame, n, 0.0);
        Rung {
            label,
            kernel: UnitKernel::Passage(PassageKernel {
                distribution: self.dist(),
                plan,
                policy: self.policy(),
                target,
            }),
        }
    }

    fn pilot_plan(&self) -> ReplicatePlan {
        ReplicatePlan::new(self.plan().master_seed ^ PILOT_SALT, self.n_reps())
    }

    /// Pilot estimate of `Delta(n) = (n sigma(n))^{1/2}`.
    fn pilot_delta(&self, store: &Store, n: f64) -> Result<(f64, f64), HarnessError> {
        let (vals, _) = store.column("pilot", "T", self.n_reps());
        let s = SampleSummary::from_values(&vals, 0)
            .map_err(|e| HarnessError::failed(format!("pilot: {e}")))?;
        let sigma = s.std_dev();
        if !(sigma > 0.0) {
            return Err(HarnessError::failed("pilot replicates have zero spread"));
        }
        Ok((sigma, (n * sigma).sqrt()))
    }

    /// Rungs that can be planned given what is already computed.
    fn rungs(&self, store: &Store) -> Result<Vec<Rung>, HarnessError> {
        let cfg = self.cfg;
        let frame = cfg.frame;
        Ok(match &cfg.design {
            Design::Sigma { ns } | Design::Nonrandom { ns } => ns
                .iter()
                .map(|n| self.passage(n_label(*n), self.plan(), *n))
                .collect(),
            Design::Wandering { ns, ks } => ns
                .iter()
                .map(|n| Rung {
                    label: n_label(*n),
                    kernel: UnitKernel::Wandering(WanderingKernel {
                        distribution: self.dist(),
                        plan: self.plan(),
                        policy: self.policy(),
                        frame,
                        n: *n,
                        ks: ks.ks(*n).into_iter().map(|(k, _)| k).collect(),
                    }),
                })
                .collect(),
            Design::Increments { n, ls, .. } => {
                let k =
                    IncrementKernel::new(self.dist(), self.plan(), self.policy(), frame, *n, ls)
                        .map_err(|e| HarnessError::invalid("scale.l_ladder", e.to_string()))?;
                vec![Rung {
                    label: "all".into(),
                    kernel: UnitKernel::Increment(k),
                }]
            }
            Design::Correlation { n, js, delta_hat } => {
                let mut rungs = Vec::new();
                let delta = match delta_hat {
                    Some(d) => *d,
                    None => {
                        rungs.push(self.passage("pilot".into(), self.pilot_plan(), *n));
                        if !store.complete("pilot", self.n_reps()) {
                            return Ok(rungs);
                        }
                        self.pilot_delta(store, *n)?.1
                    }
                };
                let lab = Lab::new(self.dist(), self.plan());
                let pairs = lab
                    .correlation_pairs(&frame, *n, js, delta)
                    .map_err(|e| HarnessError::failed(format!("with Delta(n) = {delta}: {e}")))?;
                let kernel = CorrelationKernel {
                    distribution: self.dist(),
                    plan: self.plan(),
                    policy: self.policy(),
                    pairs: pairs.iter().map(|(_, a, b)| (*a, *b)).collect(),
                };
                rungs.push(Rung {
                    label: "all".into(),
                    kernel: UnitKernel::Correlation {
                        kernel,
                        js: js.clone(),
                    },
                });
                rungs
            }
            Design::Conditional {
                n,
                l,
                region,
                radii,
            } => {
                let (a, b) = self.conditional_targets(*n, *l);
                radii
                    .iter()
                    .map(|r| {
                        let (label, region) = conditioning(*region, *r);
                        Rung {
                            label,
                            kernel: UnitKernel::Conditional(ConditionalKernel {
                                distribution: self.dist(),
                                plan: self.plan(),
                                policy: self.policy(),
                                frame,
                                region,
                                a,
                                b,
                            }),
                        }
                    })
                    .collect()
            }
        })
    }

    fn conditional_targets(&self, n: f64, l: f64) -> (LatticePoint, LatticePoint) {
        (
            lattice_point_at(&self.cfg.frame, n, 0.0),
            lattice_point_at(&self.cfg.frame, n, l),
        )
    }
}

fn conditioning(kind: RegionKind, r: f64) -> (String, ConditioningRegion) {
    match kind {
        RegionKind::HalfSpace => (format!("m={r}"), ConditioningRegion::HalfSpace { m: r }),
        RegionKind::HBall => (
            format!("k={r}"),
            ConditioningRegion::HBall {
                k: r,
                surrogate: HSurrogate::Euclidean,
            },
        ),
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| unwritable(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| unwritable(path, e))
}

struct Checkpoint<'a> {
    dir: &'a Path,
    cfg: &'a ValidatedConfig,
    started_at: String,
}

impl Checkpoint<'_> {
    fn raw_rows(&self, rungs: &[Rung], store: &Store) -> Vec<RawRow> {
        let mut rows = Vec::new();
        for r in rungs {
            for i in 0..self.cfg.config.plan.n_replicates {
                if let Some(u) = store.units.get(&(r.label.clone(), i)) {
                    rows.extend(u.rows.iter().map(|(s, v)| RawRow {
                        replicate: i,
                        statistic: format!("{}:{s}", r.label),
                        value: *v,
                    }));
                }
            }
        }
        rows
    }

    fn manifest(&self, rungs: &[Rung], store: &Store, complete: bool) -> RunManifest {
        let n = self.cfg.config.plan.n_replicates;
        let units = rungs
            .iter()
            .flat_map(|r| {
                (0..n).map(move |i| UnitEntry {
                    rung: r.label.clone(),
                    replicate: i,
                    status: store
                        .units
                        .get(&(r.label.clone(), i))
                        .map_or(UnitStatus::Pending, |u| u.status),
                })
            })
            .collect();
        RunManifest {
            schema_version: SCHEMA_VERSION,
            experiment: self.cfg.experiment.name().into(),
            config_hash: self.cfg.config_hash.clone(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            started_at: self.started_at.clone(),
            finished_at: complete.then(now),
            n_replicates: n,
            units,
            complete,
        }
    }

    fn write(
        &self,
        rungs: &[Rung],
        store: &Store,
        complete: bool,
    ) -> Result<RunManifest, HarnessError> {
        let raw = formats::write_raw_csv(&self.cfg.config_hash, &self.raw_rows(rungs, store));
        write_atomic(&self.dir.join(RAW_FILE), &raw)?;
        let m = self.manifest(rungs, store, complete);
        write_atomic(&self.dir.join(MANIFEST_FILE), &formats::to_json(&m))?;
        Ok(m)
    }
}

/// Loads a prior checkpoint into `store`; returns the original start time.
fn load_checkpoint(
    dir: &Path,
    cfg: &ValidatedConfig,
    store: &mut Store,
) -> Result<Option<String>, HarnessError> {
    let mpath = dir.join(MANIFEST_FILE);
    if !mpath.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&mpath).map_err(|e| unreadable(&mpath, e))?;
    let manifest = formats::parse_manifest(&text).map_err(|e| unreadable(&mpath, e))?;
    if manifest.config_hash != cfg.config_hash {
        return Err(HarnessError::ManifestMismatch {
            expected: cfg.config_hash.clone(),
            found: manifest.config_hash,
        });
    }
    let rpath = dir.join(RAW_FILE);
    let table = match fs::read_to_string(&rpath) {
        Ok(t) => formats::parse_raw_csv(&t).map_err(|e| unreadable(&rpath, e))?,
        Err(_) => formats::RawTable {
            config_hash: cfg.config_hash.clone(),
            rows: Vec::new(),
        },
    };
    if table.config_hash != cfg.config_hash {
        return Err(HarnessError::ManifestMismatch {
            expected: cfg.config_hash.clone(),
            found: table.config_hash,
        });
    }
    let mut rows: HashMap<(String, usize), Vec<(String, f64)>> = HashMap::new();
    for r in &table.rows {
        rows.entry((r.rung().to_string(), r.replicate))
            .or_default()
            .push((r.name().to_string(), r.value));
    }
    for u in manifest.units {
        if u.status == UnitStatus::Pending {
            continue;
        }
        let key = (u.rung, u.replicate);
        let unit_rows = rows.remove(&key).unwrap_or_default();
        store.units.insert(
            key,
            UnitState {
                status: u.status,
                rows: unit_rows,
            },
        );
    }
    Ok(Some(manifest.started_at))
}

fn dump_name(label: &str, i: usize) -> String {
    let clean: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{clean}_{i:06}.txt")
}

/// Runs (or, with `opts.resume`, continues) an experiment.
pub fn run(cfg: &ValidatedConfig, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
    let dir = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| cfg.config.output_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| unwritable(&dir, e))?;
    let dump = opts.dump_geodesics.unwrap_or(cfg.config.dump_geodesics);
    if dump {
        let g = dir.join(GEODESIC_DIR);
        fs::create_dir_all(&g).map_err(|e| unwritable(&g, e))?;
    }
    let mut store = Store::default();
    let started_at = if opts.resume {
        load_checkpoint(&dir, cfg, &mut store)?
    } else {
        None
    }
    .unwrap_or_else(now);
    let ckpt = Checkpoint {
        dir: &dir,
        cfg,
        started_at,
    };
    let pool = WorkerPool::new(opts.workers)?;
    let ctx = Context { cfg };
    let n = ctx.n_reps();
    let batch_size = (pool.workers() * 8).max(32);
    let mut computed = 0usize;

    let rungs = loop {
        let rungs = ctx.rungs(&store)?;
        let pending: Vec<(usize, usize)> = rungs
            .iter()
            .enumerate()
            .flat_map(|(ri, r)| {
                (0..n)
                    .filter(|i| !store.done(&r.label, *i))
                    .map(move |i| (ri, i))
                    .collect::<Vec<_>>()
            })
            .collect();
        if pending.is_empty() {
            break rungs;
        }
        for batch in pending.chunks(batch_size) {
            let take = opts
                .halt_after
                .map_or(batch.len(), |h| batch.len().min(h.saturating_sub(computed)));
            let batch = &batch[..take];
            if batch.is_empty() {
                let manifest = ckpt.write(&rungs, &store, false)?;
                return Ok(RunOutcome {
                    output_dir: dir,
                    manifest,
                    summary: None,
                });
            }
            let idx: Vec<usize> = (0..batch.len()).collect();
            let results = pool.map_indices(&idx, |j| rungs[batch[j].0].run(batch[j].1));
            for ((ri, i), res) in batch.iter().zip(results) {
                let label = rungs[*ri].label.clone();
                let state = match res {
                    Ok(out) => {
                        if let (true, Some(path)) = (dump, &out.path) {
                            let p = dir.join(GEODESIC_DIR).join(dump_name(&label, *i));
                            write_atomic(
                                &p,
                                &formats::write_geodesic_dump(&cfg.config_hash, path),
                            )?;
                        }
                        UnitState {
                            status: UnitStatus::Succeeded,
                            rows: out.rows,
                        }
                    }
                    Err(e) if is_replicate_failure(&e) => UnitState {
                        status: UnitStatus::Failed,
                        rows: Vec::new(),
                    },
                    Err(e) => {
                        ckpt.write(&rungs, &store, false)?;
                        return Err(HarnessError::failed(format!(
                            "rung {label}, replicate {i}: {e}"
                        )));
                    }
                };
                store.units.insert((label, *i), state);
            }
            computed += batch.len();
            ckpt.write(&rungs, &store, false)?;
        }
    };

    for r in &rungs {
        let failed = n - store.succeeded(&r.label, n);
        if failed as f64 > FAILURE_BUDGET * n as f64 {
            ckpt.write(&rungs, &store, false)?;
            return Err(HarnessError::ExperimentFailed {
                reason: format!(
                    "rung {}: {failed} of {n} replicates failed, above the {FAILURE_BUDGET} budget",
                    r.label
                ),
                failed,
                total: n,
            });
        }
    }
    let records = aggregate(&ctx, &rungs, &store)?;
    let fits = compute_fits(cfg.experiment, &records);
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.config_hash.clone(),
        experiment: cfg.experiment.name().into(),
        records,
        fits,
    };
    write_atomic(&dir.join(SUMMARY_FILE), &formats::to_json(&summary))?;
    let manifest = ckpt.write(&rungs, &store, true)?;
    Ok(RunOutcome {
        output_dir: dir,
        manifest,
        summary: Some(summary),
    })
}

/// Continues the run recorded in the output directory; fails with
/// `ManifestMismatch` when the config hash differs.
pub fn checkpoint_resume(
    cfg: &ValidatedConfig,
    opts: &RunOptions,
) -> Result<RunOutcome, HarnessError> {
    run(
        cfg,
        &RunOptions {
            resume: true,
            ..opts.clone()
        },
    )
}

fn est_err(e: EstimatorError) -> HarnessError {
    HarnessError::failed(e.to_string())
}

fn summary_of(vals: &[f64], failed: usize) -> Result<SampleSummary, HarnessError> {
    let mut s = SampleSummary::from_values(vals, failed).map_err(est_err)?;
    s.raw_path = Some(RAW_FILE.into());
    Ok(s)
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn aggregate(
    ctx: &Context,
    rungs: &[Rung],
    store: &Store,
) -> Result<Vec<SummaryRecord>, HarnessError> {
    let cfg = ctx.cfg;
    let n_reps = ctx.n_reps();
    let frame = cfg.frame;
    let mut records = Vec::new();
    match &cfg.design {
        Design::Sigma { ns } => {
            for n in ns {
                let (vals, failed) = store.column(&n_label(*n), "T", n_reps);
                records.push(time_record(&frame, *n, &vals, failed)?);
            }
        }
        Design::Wandering { ns, ks } => {
            for n in ns {
                let label = n_label(*n);
                let (vals, failed) = store.column(&label, "T", n_reps);
                records.push(time_record(&frame, *n, &vals, failed)?);
                let ok = store.succeeded(&label, n_reps);
                for (k, frac) in ks.ks(*n) {
                    let (w, _) = store.column(&label, &named("W", "k", k), n_reps);
                    let mut p = params(&[("n", *n), ("k", k)]);
                    if let Some(f) = frac {
                        p.insert("k_fraction".into(), f);
                    }
                    let summary = if w.is_empty() {
                        None
                    } else {
                        Some(summary_of(&w, failed)?)
                    };
                    records.push(SummaryRecord {
                        statistic: "W".into(),
                        parameters: p,
                        derived: json!({ "no_crossing": ok - w.len(), "median": summary.as_ref().map(|s| s.median()) }),
                        summary,
                    });
                }
            }
        }
        Design::Nonrandom { ns } => {
            let mut rungs_in = Vec::new();
            for n in ns {
                let (vals, failed) = store.column(&n_label(*n), "T", n_reps);
                let target = lattice_point_at(&frame, *n, 0.0);
                let est = Estimate::from_values(vals, (0..failed).collect()).map_err(est_err)?;
                rungs_in.push((*n, target.euclidean_distance(LatticePoint::ORIGIN), est));
            }
            for ((n, _, est), point) in rungs_in.iter().zip(nonrandom_from_rungs(&rungs_in)) {
                let mut s = est.summary.clone();
                s.raw_path = Some(RAW_FILE.into());
                records.push(SummaryRecord {
                    statistic: "T".into(),
                    parameters: params(&[("n", *n)]),
                    summary: Some(s),
                    derived: serde_json::to_value(point).expect("json"),
                });
            }
        }
        Design::Increments { n, ls, delta_hat } => {
            let UnitKernel::Increment(kernel) = &rungs[0].kernel else {
                unreachable!("increment design has one increment rung")
            };
            for (j, l) in ls.iter().enumerate() {
                let (d, failed) = store.column("all", &named("D", "L", *l), n_reps);
                let (inc, _) = store.column("all", &named("inc", "L", *l), n_reps);
                let p = params(&[("n", *n), ("L", *l)]);
                let sd = summary_of(&d, failed)?;
                let si = summary_of(&inc, failed)?;
                records.push(SummaryRecord {
                    statistic: "D".into(),
                    parameters: p.clone(),
                    derived: json!({
                        "lattice_points": kernel.segment(j).len(),
                        "beyond_delta": delta_hat.map(|dh| *l > dh),
                    }),
                    summary: Some(sd),
                });
                records.push(SummaryRecord {
                    statistic: "increment".into(),
                    parameters: p,
                    derived: json!({ "variance": si.variance, "variance_std_error": si.variance_std_error }),
                    summary: Some(si),
                });
            }
        }
        Design::Correlation { n, js, delta_hat } => {
            let delta = match delta_hat {
                Some(d) => *d,
                None => {
                    let (sigma, delta) = ctx.pilot_delta(store, *n)?;
                    let (vals, failed) = store.column("pilot", "T", n_reps);
                    let mut rec = time_record(&frame, *n, &vals, failed)?;
                    rec.statistic = "pilot_T".into();
                    rec.derived = json!({ "sigma_hat": sigma, "delta_hat": delta });
                    records.push(rec);
                    delta
                }
            };
            let UnitKernel::Correlation { kernel, .. } =
                &rungs.last().expect("correlation rung").kernel
            else {
                unreachable!("last rung of a correlation design")
            };
            for (k, j) in js.iter().enumerate() {
                let (ta, failed) = store.column("all", &named("T_a", "J", *j), n_reps);
                let (tb, _) = store.column("all", &named("T_b", "J", *j), n_reps);
                let pairs: Vec<(f64, f64)> = ta.into_iter().zip(tb).collect();
                if pairs.is_empty() {
                    return Err(est_err(EstimatorError::EmptySample));
                }
                let (a, b) = kernel.pairs[k];
                let offset = j * delta * n.ln().sqrt();
                let est = CorrelationEstimate::from_pairs(
                    *j,
                    offset,
                    a,
                    b,
                    &pairs,
                    failed,
                    cfg.config.plan.master_seed ^ k as u64,
                );
                records.push(SummaryRecord {
                    statistic: "correlation".into(),
                    parameters: params(&[("n", *n), ("J", *j), ("delta", delta)]),
                    summary: None,
                    derived: serde_json::to_value(est).expect("json"),
                });
            }
        }
        Design::Conditional {
            n,
            l,
            region,
            radii,
        } => {
            let (a, b) = ctx.conditional_targets(*n, *l);
            for r in radii {
                let (label, reg) = conditioning(*region, *r);
                let col = |name: &str| store.column(&label, name, n_reps);
                let (ta, failed) = col("T_a");
                let (tb, _) = col("T_b");
                let (ra, _) = col("T_a_resampled");
                let (rb, _) = col("T_b_resampled");
                let (fz, _) = col("frozen");
                if ta.is_empty() {
                    return Err(est_err(EstimatorError::EmptySample));
                }
                let samples: Vec<ConditionalSample> = (0..ta.len())
                    .map(|i| ConditionalSample {
                        t_a: ta[i],
                        t_b: tb[i],
                        t_a_resampled: ra[i],
                        t_b_resampled: rb[i],
                        frozen: fz.get(i).map(|f| *f as usize),
                    })
                    .collect();
                let d = ConditionalDecomposition::from_samples(
                    reg,
                    a,
                    b,
                    &samples,
                    failed,
                    cfg.config.plan.master_seed,
                );
                let key = match region {
                    RegionKind::HalfSpace => "m",
                    RegionKind::HBall => "k",
                };
                records.push(SummaryRecord {
                    statistic: "conditional".into(),
                    parameters: params(&[("n", *n), ("L", *l), (key, *r)]),
                    summary: Some(summary_of(&ta, failed)?),
                    derived: serde_json::to_value(d).expect("json"),
                });
            }
        }
    }
    Ok(records)
}

fn time_record(
    frame: &DirectionFrame,
    n: f64,
    vals: &[f64],
    failed: usize,
) -> Result<SummaryRecord, HarnessError> {
    let s = summary_of(vals, failed)?;
    Ok(SummaryRecord {
        statistic: "T".into(),
        parameters: params(&[("n", n)]),
        derived: json!({
            "target": lattice_point_at(frame, n, 0.0),
            "sigma_hat": s.std_dev(),
            "tails": TailDiagnostics::from_values(vals),
        }),
        summary: Some(s),
    })
}

fn outcome(r: Result<fit::ExponentFit, FitError>) -> FitOutcome {
    match r {
        Ok(f) => FitOutcome::Fitted(f),
        Err(e) => FitOutcome::Skipped {
            reason: e.to_string(),
        },
    }
}

fn points(
    records: &[SummaryRecord],
    statistic: &str,
    x: &str,
    y: impl Fn(&SummaryRecord) -> Option<f64>,
) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter(|r| r.statistic == statistic)
        .filter_map(|r| Some((*r.parameters.get(x)?, y(r)?)))
        .collect()
}

/// Exponent fits for the records of a summary. Also what `fit` recomputes
/// from a summary file.
pub fn compute_fits(
    experiment: Experiment,
    records: &[SummaryRecord],
) -> BTreeMap<String, FitOutcome> {
    let mut fits = BTreeMap::new();
    let sd = |r: &SummaryRecord| r.summary.as_ref().map(|s| s.std_dev());
    let mean = |r: &SummaryRecord| r.summary.as_ref().map(|s| s.mean);
    let median = |r: &SummaryRecord| r.summary.as_ref().map(|s| s.median());
    let wander_fits = |fits: &mut BTreeMap<String, FitOutcome>| -> Vec<(f64, FitOutcome)> {
        let mut fracs: Vec<f64> = records
            .iter()
            .filter(|r| r.statistic == "W")
            .filter_map(|r| r.parameters.get("k_fraction").copied())
            .collect();
        fracs.sort_by(f64::total_cmp);
        fracs.dedup();
        let mut out = Vec::new();
        for f in fracs {
            let pts: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.statistic == "W" && r.parameters.get("k_fraction") == Some(&f))
                .filter_map(|r| Some((*r.parameters.get("n")?, median(r)?)))
                .collect();
            let o = outcome(fit::fit_power_law(&pts));
            fits.insert(format!("xi[k_fraction={f}]"), o.clone());
            out.push((f, o));
        }
        out
    };
    match experiment {
        Experiment::SigmaLadder => {
            fits.insert(
                "chi".into(),
                outcome(fit::fit_power_law(&points(records, "T", "n", sd))),
            );
        }
        Experiment::WanderingProfile => {
            wander_fits(&mut fits);
        }
        Experiment::ExponentReport => {
            let chi = outcome(fit::fit_power_law(&points(records, "T", "n", sd)));
            fits.insert("chi".into(), chi.clone());
            let xis = wander_fits(&mut fits);
            let xi = xis
                .iter()
                .find(|(f, _)| *f == 0.5)
                .or(xis.first())
                .map(|(_, o)| o.clone());
            let report = match (&chi, xi) {
                (FitOutcome::Fitted(c), Some(FitOutcome::Fitted(x))) => {
                    FitOutcome::Report(fit::chi_xi_report(c, &x))
                }
                _ => FitOutcome::Skipped {
                    reason: "needs both the chi and xi fits".into(),
                },
            };
            fits.insert("chi_xi".into(), report);
        }
        Experiment::TransverseIncrement => {
            fits.insert(
                "transverse".into(),
                outcome(fit::transverse_exponent(&points(records, "D", "L", mean))),
            );
            fits.insert(
                "transverse_median".into(),
                outcome(fit::transverse_exponent(&points(records, "D", "L", median))),
            );
        }
        Experiment::IncrementVariance => {
            let var = |r: &SummaryRecord| r.summary.as_ref().map(|s| s.variance);
            let pts: Vec<(f64, f64)> = points(records, "increment", "L", var)
                .into_iter()
                .filter(|p| p.0 > 0.0)
                .collect();
            fits.insert(
                "increment_variance".into(),
                outcome(fit::fit_power_law(&pts)),
            );
        }
        Experiment::LongRangeCorrelation => {
            let corr = |r: &SummaryRecord| r.derived.get("correlation").and_then(|c| c.as_f64());
            let pts: Vec<(f64, f64)> = points(records, "correlation", "J", corr)
                .into_iter()
                .filter(|p| p.0 > 0.0)
                .collect();
            let o = match fit::correlation_exponent(&pts) {
                Ok(c) => FitOutcome::Correlation(c),
                Err(e) => FitOutcome::Skipped {
                    reason: e.to_string(),
                },
            };
            fits.insert("correlation".into(), o);
        }
        Experiment::NonrandomFluctuation | Experiment::ConditionalDecomposition => {}
    }
    fits
}

/// Recomputes the fits of a finished run from `dir/summary.json` and writes
/// `dir/fit.json`.
pub fn fit_outputs(dir: &Path) -> Result<FitReport, HarnessError> {
    let spath = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&spath).map_err(|e| unreadable(&spath, e))?;
    let summary = formats::parse_summary(&text).map_err(|e| unreadable(&spath, e))?;
    let experiment = Experiment::from_name(&summary.experiment).ok_or_else(|| {
        unreadable(
            &spath,
            format!("unknown experiment {:?}", summary.experiment),
        )
    })?;
    let report = FitReport {
        schema_version: SCHEMA_VERSION,
        config_hash: summary.config_hash.clone(),
        experiment: summary.experiment.clone(),
        fits: compute_fits(experiment, &summary.records),
    };
    write_atomic(&dir.join(FIT_FILE), &formats::to_json(&report))?;
    Ok(report)
}
