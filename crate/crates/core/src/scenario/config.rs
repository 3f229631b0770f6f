use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::assignment::greedy::DEFAULT_MAX_ITERATIONS;
use crate::assignment::{BaselinePolicy, Objective};
use crate::demand::{GravityParams, ProviderId};
use crate::metrics::ReportFormat;

pub const DEFAULT_QUANTA: usize = 100;
pub const DEFAULT_TOP_K: usize = 10;
pub const BUILTIN_ABILENE: &str = "builtin:abilene";

/// One failed constraint, named by its schema path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            Self::Invalid(v) => v,
            Self::Io { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    Abilene,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemandSource {
    File(PathBuf),
    Generator(GravityParams),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Participants {
    TopK(usize),
    Explicit(BTreeSet<ProviderId>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Iterative sorted greedy over whole bins.
    Offline,
    /// Per-request greedy over a request stream derived from each bin.
    Online,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub provider: ProviderId,
    pub factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<ReportFormat>,
    /// Divisor of the normalized utilization columns; the largest baseline
    /// maximum of the run when absent.
    pub normalization: Option<f64>,
    /// Also dump every treated assignment as CSV.
    pub assignments: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub topology: TopologySource,
    pub demand: DemandSource,
    pub objectives: Vec<Objective>,
    pub participants: Participants,
    pub baseline: BaselinePolicy,
    pub engine: Engine,
    pub quanta: usize,
    pub shuffle_seed: Option<u64>,
    pub max_iterations: usize,
    pub warm_start: bool,
    pub what_if: BTreeMap<ProviderId, f64>,
    pub sweep: Option<Sweep>,
    /// Solve the LP per bin (when small enough) and report the gap.
    pub lp_check: bool,
    pub output: OutputConfig,
    pub workers: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    topology: Option<String>,
    demand: Option<RawDemand>,
    objectives: Option<Vec<String>>,
    participants: Option<RawParticipants>,
    baseline: Option<BaselinePolicy>,
    engine: Option<Engine>,
    quanta: Option<i64>,
    shuffle_seed: Option<u64>,
    max_iterations: Option<i64>,
    warm_start: Option<bool>,
    what_if: Option<BTreeMap<String, f64>>,
    sweep: Option<RawSweep>,
    lp_check: Option<bool>,
    output: Option<RawOutput>,
    workers: Option<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDemand {
    file: Option<String>,
    generator: Option<GravityParams>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParticipants {
    top_k: Option<i64>,
    providers: Option<Vec<u32>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    provider: u32,
    factors: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    formats: Option<Vec<ReportFormat>>,
    normalization: Option<f64>,
    assignments: Option<bool>,
}

struct Checker(Vec<Violation>);

impl Checker {
    fn fail(&mut self, field: impl Into<String>, constraint: impl Into<String>) {
        self.0.push(Violation { field: field.into(), constraint: constraint.into() });
    }

    fn count(&mut self, field: &str, value: Option<i64>, min: i64, default: usize) -> usize {
        match value {
            Some(v) if v < min => {
                self.fail(field, format!("{field} ≥ {min}"));
                default
            }
            Some(v) => v as usize,
            None => default,
        }
    }
}

fn resolve(base: Option<&Path>, path: &str) -> PathBuf {
    let p = PathBuf::from(path);
    match base {
        Some(base) if p.is_relative() => base.join(p),
        _ => p,
    }
}

/// Parses and validates a config document, reporting every violation.
/// Relative paths are resolved against `base_dir`.
pub fn validate_config(text: &str, base_dir: Option<&Path>) -> Result<ScenarioConfig, ConfigError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        ConfigError::Invalid(vec![Violation { field: "(document)".into(), constraint: format!("valid JSON ({e})") }])
    })?;
    validate_value(doc, base_dir)
}

pub fn validate_value(doc: Value, base_dir: Option<&Path>) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_value(doc).map_err(|e| {
        ConfigError::Invalid(vec![Violation {
            field: "(document)".into(),
            constraint: format!("matches schema ({e})"),
        }])
    })?;
    let mut c = Checker(Vec::new());

    let topology = match raw.topology.as_deref() {
        None => {
            c.fail("topology", "required");
            TopologySource::Abilene
        }
        Some(BUILTIN_ABILENE) => TopologySource::Abilene,
        Some(path) => TopologySource::File(resolve(base_dir, path)),
    };

    let demand = match raw.demand {
        Some(RawDemand { file: Some(file), generator: None }) => DemandSource::File(resolve(base_dir, &file)),
        Some(RawDemand { file: None, generator: Some(params) }) => {
            if !(params.total_volume >= 0.0 && params.total_volume.is_finite()) {
                c.fail("demand.generator.total_volume", "total_volume ≥ 0");
            }
            if params.bins == 0 {
                c.fail("demand.generator.bins", "bins ≥ 1");
            }
            if !(0.0..1.0).contains(&params.jitter) {
                c.fail("demand.generator.jitter", "0 ≤ jitter < 1");
            }
            DemandSource::Generator(params)
        }
        _ => {
            c.fail("demand", "exactly one demand source (file or generator)");
            DemandSource::Generator(GravityParams::new(0.0, 0))
        }
    };

    let objectives = match raw.objectives {
        None => vec![Objective::MaxLinkUtilization],
        Some(names) => {
            if names.is_empty() {
                c.fail("objectives", "at least one objective");
            }
            let mut out = Vec::new();
            for (i, name) in names.iter().enumerate() {
                match name.parse::<Objective>() {
                    Ok(o) if out.contains(&o) => c.fail(format!("objectives[{i}]"), "no duplicates"),
                    Ok(o) => out.push(o),
                    Err(e) => c.fail(format!("objectives[{i}]"), e),
                }
            }
            out
        }
    };

    let participants = match raw.participants {
        None => Participants::TopK(DEFAULT_TOP_K),
        Some(RawParticipants { top_k: Some(k), providers: None }) => {
            if k < 0 {
                c.fail("participants.top_k", "K ≥ 0");
            }
            Participants::TopK(k.max(0) as usize)
        }
        Some(RawParticipants { top_k: None, providers: Some(ids) }) => {
            Participants::Explicit(ids.into_iter().map(ProviderId).collect())
        }
        Some(_) => {
            c.fail("participants", "exactly one of top_k or providers");
            Participants::TopK(0)
        }
    };

    let quanta = c.count("quanta", raw.quanta, 1, DEFAULT_QUANTA);
    let max_iterations = c.count("max_iterations", raw.max_iterations, 1, DEFAULT_MAX_ITERATIONS);
    let workers = raw.workers.map(|w| c.count("workers", Some(w), 1, 1));

    let mut what_if = BTreeMap::new();
    for (key, factor) in raw.what_if.unwrap_or_default() {
        let field = format!("what_if.{key}");
        match key.parse::<u32>() {
            Ok(id) => {
                if !(factor >= 0.0 && factor.is_finite()) {
                    c.fail(field, "factor ≥ 0");
                }
                what_if.insert(ProviderId(id), factor);
            }
            Err(_) => c.fail(field, "key is a provider id"),
        }
    }

    let sweep = raw.sweep.map(|s| {
        if s.factors.is_empty() {
            c.fail("sweep.factors", "at least one factor");
        }
        for (i, f) in s.factors.iter().enumerate() {
            if !(*f >= 0.0 && f.is_finite()) {
                c.fail(format!("sweep.factors[{i}]"), "factor ≥ 0");
            }
        }
        Sweep { provider: ProviderId(s.provider), factors: s.factors }
    });

    let output = {
        let raw = raw.output.unwrap_or(RawOutput { dir: None, formats: None, normalization: None, assignments: None });
        let formats = raw.formats.unwrap_or_else(|| vec![ReportFormat::Csv, ReportFormat::Json]);
        if formats.is_empty() {
            c.fail("output.formats", "at least one format");
        }
        if let Some(n) = raw.normalization {
            if !(n > 0.0 && n.is_finite()) {
                c.fail("output.normalization", "normalization > 0");
            }
        }
        OutputConfig {
            dir: resolve(base_dir, raw.dir.as_deref().unwrap_or("out")),
            formats,
            normalization: raw.normalization,
            assignments: raw.assignments.unwrap_or(false),
        }
    };

    let name = raw.name.unwrap_or_else(|| "scenario".into());
    if name.is_empty() || !name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
        c.fail("name", "nonempty, letters, digits, '_' or '-' only");
    }
    if !c.0.is_empty() {
        return Err(ConfigError::Invalid(c.0));
    }
    Ok(ScenarioConfig {
        name,
        topology,
        demand,
        objectives,
        participants,
        baseline: raw.baseline.unwrap_or_default(),
        engine: raw.engine.unwrap_or(Engine::Offline),
        quanta,
        shuffle_seed: raw.shuffle_seed,
        max_iterations,
        warm_start: raw.warm_start.unwrap_or(false),
        what_if,
        sweep,
        lp_check: raw.lp_check.unwrap_or(false),
        output,
        workers,
    })
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        validate_config(&text, path.parent())
    }
}

/// Sets the value at a dotted schema path (`output.dir`, `participants.top_k`),
/// creating intermediate objects.
pub fn apply_override(doc: &mut Value, path: &str, value: Value) {
    let mut node = doc;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().expect("object");
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return;
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
}
