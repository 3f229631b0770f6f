use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{DemandSource, Engine, Participants, ScenarioConfig, TopologySource};
use crate::assignment::{
    baseline_assign, greedy_sort_flow, greedy_sort_flow_warm, objective_value, online_assign_bin, write_assignment_csv,
    AssignmentError, FlowAssignment, GreedyConfig, Objective,
};
use crate::demand::{
    apply_scenario_multiplier, generate_gravity_demands, split_adjustable, ContentDemandMatrix, DemandError, ProviderId,
};
use crate::lp::{build_lp, solve_lp, LpError, MAX_LP_VARIABLES};
use crate::metrics::{compute_metrics, timeseries_report, BinComparison, MetricsError};
use crate::topology::{abilene, Network, NetworkTopology, TopologyError};

const LP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BinError {
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("demand: {0}")]
    Demand(#[from] DemandError),
    #[error("{variant}: objective {objective}, bin {bin}: {source}")]
    Bin { variant: String, objective: Objective, bin: usize, source: BinError },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Per-bin outcome for one objective.
#[derive(Debug, Clone)]
pub struct BinResult {
    pub comparison: BinComparison,
    pub adjustable_volume: f64,
    pub iterations_used: usize,
    pub converged: bool,
    pub objective_history: Vec<f64>,
    /// Optimal max utilization, when the LP was requested and small enough.
    pub lp_l_star: Option<f64>,
    pub assignment: Option<FlowAssignment>,
}

#[derive(Debug, Clone)]
pub struct ObjectiveRun {
    pub objective: Objective,
    pub bins: Vec<BinResult>,
}

impl ObjectiveRun {
    pub fn comparisons(&self) -> Vec<BinComparison> {
        self.bins.iter().map(|b| b.comparison.clone()).collect()
    }

    pub fn summary(&self) -> ObjectiveSummary {
        let n = self.bins.len().max(1) as f64;
        let reductions: Vec<_> = self.bins.iter().map(|b| &b.comparison.reduction).collect();
        let finite = |vals: Vec<f64>| vals.into_iter().filter(|v| v.is_finite()).collect::<Vec<_>>();
        let mlu = finite(reductions.iter().map(|r| r.max_link_utilization).collect());
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let improved = self
            .bins
            .iter()
            .filter(|b| b.comparison.treated.max_link_utilization < b.comparison.baseline.max_link_utilization)
            .count();
        let gaps: Vec<f64> = self
            .bins
            .iter()
            .filter_map(|b| b.lp_l_star.map(|l| relative_gap(b.comparison.treated.max_link_utilization, l)))
            .collect();
        ObjectiveSummary {
            objective: self.objective,
            bins: self.bins.len(),
            improved_bins: improved,
            improved_fraction: improved as f64 / n,
            mean_max_utilization_reduction: mean(&mlu),
            min_max_utilization_reduction: mlu.iter().copied().fold(f64::INFINITY, f64::min),
            max_max_utilization_reduction: mlu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_total_traffic_reduction: mean(&finite(reductions.iter().map(|r| r.total_traffic).collect())),
            mean_path_length_reduction: mean(&finite(reductions.iter().map(|r| r.mean_path_length).collect())),
            worst_path_length_increase: reductions
                .iter()
                .map(|r| -r.mean_path_length)
                .filter(|v| v.is_finite())
                .fold(0.0, f64::max),
            worst_delay_increase: reductions
                .iter()
                .map(|r| -r.accumulated_delay)
                .filter(|v| v.is_finite())
                .fold(0.0, f64::max),
            max_iterations_used: self.bins.iter().map(|b| b.iterations_used).max().unwrap_or(0),
            converged_bins: self.bins.iter().filter(|b| b.converged).count(),
            lp_bins: gaps.len(),
            max_lp_gap: gaps.iter().copied().fold(0.0, f64::max),
        }
    }
}

fn relative_gap(value: f64, optimum: f64) -> f64 {
    if optimum > 0.0 {
        value / optimum - 1.0
    } else {
        value
    }
}

/// Aggregates over the bins of one objective. Reductions are relative to the
/// baseline; the `worst_*_increase` fields are the largest relative
/// worsening of any bin (zero when none got worse).
#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveSummary {
    pub objective: Objective,
    pub bins: usize,
    pub improved_bins: usize,
    pub improved_fraction: f64,
    pub mean_max_utilization_reduction: f64,
    pub min_max_utilization_reduction: f64,
    pub max_max_utilization_reduction: f64,
    pub mean_total_traffic_reduction: f64,
    pub mean_path_length_reduction: f64,
    pub worst_path_length_increase: f64,
    pub worst_delay_increase: f64,
    pub max_iterations_used: usize,
    pub converged_bins: usize,
    pub lp_bins: usize,
    pub max_lp_gap: f64,
}

/// One demand matrix evaluated under every objective.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub label: String,
    /// Sweep factor applied to the sweep provider, if any.
    pub factor: Option<f64>,
    pub participants: BTreeSet<ProviderId>,
    pub runs: Vec<ObjectiveRun>,
}

impl VariantRun {
    pub fn run(&self, objective: Objective) -> Option<&ObjectiveRun> {
        self.runs.iter().find(|r| r.objective == objective)
    }
}

#[derive(Serialize)]
struct VariantSummary<'a> {
    scenario: &'a str,
    variant: &'a str,
    factor: Option<f64>,
    participants: Vec<u32>,
    engine: Engine,
    objectives: Vec<ObjectiveSummary>,
}

#[derive(Debug)]
pub struct ScenarioOutcome {
    pub variants: Vec<VariantRun>,
    /// Every file written, in write order.
    pub files: Vec<PathBuf>,
}

/// Providers with the `k` largest total volumes; ties go to the lower id.
pub fn select_top_k(matrix: &ContentDemandMatrix, k: usize) -> BTreeSet<ProviderId> {
    matrix.ranked_providers().into_iter().take(k).map(|(id, _)| id).collect()
}

pub fn load_inputs(config: &ScenarioConfig) -> Result<(Network, ContentDemandMatrix), ScenarioError> {
    let topo = match &config.topology {
        TopologySource::Abilene => abilene(),
        TopologySource::File(path) => NetworkTopology::load(path)?,
    };
    let matrix = match &config.demand {
        DemandSource::File(path) => ContentDemandMatrix::load(path, &topo)?,
        DemandSource::Generator(params) => generate_gravity_demands(&topo, params)?,
    };
    Ok((Network::new(topo)?, matrix))
}

/// Loads inputs, evaluates every variant and writes the reports.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let (net, matrix) = load_inputs(config)?;
    let variants = match config.workers {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| ScenarioError::Pool(e.to_string()))?
            .install(|| execute(config, &net, &matrix))?,
        None => execute(config, &net, &matrix)?,
    };
    let files = write_reports(config, &variants)?;
    Ok(ScenarioOutcome { variants, files })
}

/// The matrix after the static what-if factors, and the participants chosen
/// on it.
pub fn prepare(
    config: &ScenarioConfig,
    matrix: &ContentDemandMatrix,
) -> Result<(ContentDemandMatrix, BTreeSet<ProviderId>), DemandError> {
    let mut base = matrix.clone();
    for (&provider, &factor) in &config.what_if {
        base = apply_scenario_multiplier(&base, provider, factor)?;
    }
    let participants = match &config.participants {
        Participants::TopK(k) => select_top_k(&base, *k),
        Participants::Explicit(ids) => ids.clone(),
    };
    Ok((base, participants))
}

/// Evaluates the scenario in memory. Participants are chosen once, by
/// [`prepare`], and shared by all sweep points.
pub fn execute(
    config: &ScenarioConfig,
    net: &Network,
    matrix: &ContentDemandMatrix,
) -> Result<Vec<VariantRun>, ScenarioError> {
    let (base, participants) = prepare(config, matrix)?;
    let points: Vec<(String, Option<f64>, ContentDemandMatrix)> = match &config.sweep {
        None => vec![(config.name.clone(), None, base)],
        Some(sweep) => sweep
            .factors
            .iter()
            .map(|&f| {
                let m = apply_scenario_multiplier(&base, sweep.provider, f)?;
                Ok((format!("{}_x{}", config.name, f), Some(f), m))
            })
            .collect::<Result<_, DemandError>>()?,
    };
    points
        .into_iter()
        .map(|(label, factor, m)| {
            let runs = config
                .objectives
                .iter()
                .map(|&objective| run_objective(config, net, &m, &participants, objective, &label))
                .collect::<Result<_, _>>()?;
            Ok(VariantRun { label, factor, participants: participants.clone(), runs })
        })
        .collect()
}

fn run_objective(
    config: &ScenarioConfig,
    net: &Network,
    matrix: &ContentDemandMatrix,
    participants: &BTreeSet<ProviderId>,
    objective: Objective,
    label: &str,
) -> Result<ObjectiveRun, ScenarioError> {
    let wrap =
        |bin: usize| move |source: BinError| ScenarioError::Bin { variant: label.to_string(), objective, bin, source };
    let bins: Vec<BinResult> = if config.warm_start && config.engine == Engine::Offline {
        let mut previous: Option<FlowAssignment> = None;
        let mut out = Vec::with_capacity(matrix.bin_count());
        for t in 0..matrix.bin_count() {
            let r = run_bin(config, net, matrix, participants, objective, t, previous.as_ref()).map_err(wrap(t))?;
            previous = r.1;
            out.push(r.0);
        }
        out
    } else {
        (0..matrix.bin_count())
            .into_par_iter()
            .map(|t| run_bin(config, net, matrix, participants, objective, t, None).map(|r| r.0).map_err(wrap(t)))
            .collect::<Result<_, _>>()?
    };
    Ok(ObjectiveRun { objective, bins })
}

fn run_bin(
    config: &ScenarioConfig,
    net: &Network,
    matrix: &ContentDemandMatrix,
    participants: &BTreeSet<ProviderId>,
    objective: Objective,
    t: usize,
    warm: Option<&FlowAssignment>,
) -> Result<(BinResult, Option<FlowAssignment>), BinError> {
    let bin = split_adjustable(matrix, t, participants)?;
    let (base_a, base_s) = baseline_assign(&bin, net, &config.baseline)?;
    let (assignment, state, iterations_used, converged, objective_history) = match config.engine {
        Engine::Offline => {
            let greedy_config =
                GreedyConfig { objective, max_iterations: config.max_iterations, baseline: config.baseline };
            let out = match warm {
                Some(w) => greedy_sort_flow_warm(&bin, net, &greedy_config, w)?,
                None => greedy_sort_flow(&bin, net, &greedy_config)?,
            };
            (out.assignment, out.state, out.iterations_used, out.converged, out.objective_history)
        }
        Engine::Online => {
            let shuffle = config.shuffle_seed.map(|s| s.wrapping_add(t as u64));
            let (a, s) = online_assign_bin(&bin, net, &config.baseline, objective, config.quanta, shuffle)?;
            let value = objective_value(objective, net, &a, &s);
            (a, s, 1, true, vec![value])
        }
    };
    let lp_l_star = if config.lp_check {
        let inst = build_lp(&bin, net, &config.baseline)?;
        if inst.variable_count() <= MAX_LP_VARIABLES {
            Some(solve_lp(&inst, LP_TOLERANCE)?.l_star)
        } else {
            None
        }
    } else {
        None
    };
    let comparison =
        BinComparison::new(compute_metrics(t, &base_a, &base_s, net)?, compute_metrics(t, &assignment, &state, net)?)?;
    let keep = config.output.assignments || config.warm_start;
    let result = BinResult {
        comparison,
        adjustable_volume: bin.adjustable_total(),
        iterations_used,
        converged,
        objective_history,
        lp_l_star,
        assignment: config.output.assignments.then(|| assignment.clone()),
    };
    Ok((result, keep.then_some(assignment)))
}

/// Writes `path` through a temporary file in the same directory, so readers
/// never observe a partial report.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ScenarioError> {
    let err = |source: std::io::Error| ScenarioError::Write { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

/// Per variant: one time-series report per objective and format, an
/// optional assignments CSV, and a summary JSON. Sweeps add a combined
/// `{name}_sweep.json`.
pub fn write_reports(config: &ScenarioConfig, variants: &[VariantRun]) -> Result<Vec<PathBuf>, ScenarioError> {
    let dir = &config.output.dir;
    let mut files = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<(), ScenarioError> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        files.push(path);
        Ok(())
    };
    let mut sweep = Vec::new();
    for v in variants {
        for run in &v.runs {
            let rows = run.comparisons();
            for &format in &config.output.formats {
                let text = timeseries_report(&rows, format, config.output.normalization);
                put(format!("{}_{}.{}", v.label, run.objective.name(), format.extension()), text.into_bytes())?;
            }
            if config.output.assignments {
                let pairs: Vec<(usize, &FlowAssignment)> =
                    run.bins.iter().filter_map(|b| b.assignment.as_ref().map(|a| (b.comparison.bin, a))).collect();
                let name = format!("{}_{}_assignments.csv", v.label, run.objective.name());
                let mut bytes = Vec::new();
                write_assignment_csv(&mut bytes, &pairs)
                    .map_err(|e| ScenarioError::Write { path: dir.join(&name), source: e.into() })?;
                put(name, bytes)?;
            }
        }
        let summary = VariantSummary {
            scenario: &config.name,
            variant: &v.label,
            factor: v.factor,
            participants: v.participants.iter().map(|p| p.0).collect(),
            engine: config.engine,
            objectives: v.runs.iter().map(ObjectiveRun::summary).collect(),
        };
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        put(format!("{}_summary.json", v.label), text.into_bytes())?;
        sweep.push(summary);
    }
    if config.sweep.is_some() {
        let text = serde_json::to_string_pretty(&sweep).expect("sweep serializes");
        put(format!("{}_sweep.json", config.name), text.into_bytes())?;
    }
    Ok(files)
}
