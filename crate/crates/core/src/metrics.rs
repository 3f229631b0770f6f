//! Per-bin evaluation metrics and baseline-versus-treated reductions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{FlowAssignment, LinkLoadState};
use crate::topology::{LinkId, Network};

/// Relative tolerance of the consistency and total-traffic identity checks.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("link {link}: incremental load {incremental} differs from recomputed load {recomputed}")]
    InconsistentState { link: LinkId, incremental: f64, recomputed: f64 },
    #[error("total traffic identity failed: link sum {link_sum}, flow sum {flow_sum}")]
    TrafficIdentity { link_sum: f64, flow_sum: f64 },
    #[error("cannot compare bin {baseline} with bin {treated}")]
    BinMismatch { baseline: usize, treated: usize },
    #[error("cannot compare reports over {baseline} and {treated} links")]
    LinkCountMismatch { baseline: usize, treated: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bin: usize,
    pub max_link_utilization: f64,
    /// Indexed by link id.
    pub link_loads: Vec<f64>,
    pub link_utilizations: Vec<f64>,
    /// Sum of carried volume over all links.
    pub total_traffic: f64,
    /// Volume of all flows, counted once each.
    pub total_volume: f64,
    /// Volume per hop count; bucket 0 is co-located traffic.
    pub path_length_distribution: Vec<f64>,
    /// Sum of volume times backbone path delay.
    pub accumulated_delay: f64,
    /// |link sum - flow sum| / max(1, link sum).
    pub identity_residual: f64,
}

impl MetricsReport {
    /// Volume-weighted mean hop count; 0 without traffic.
    pub fn mean_path_length(&self) -> f64 {
        if self.total_volume > 0.0 {
            self.total_traffic / self.total_volume
        } else {
            0.0
        }
    }

    /// (utilization, cumulative share of carried volume) per link, sorted by
    /// utilization. Empty when no link carries traffic.
    pub fn utilization_cdf_by_volume(&self) -> Vec<(f64, f64)> {
        let total: f64 = self.link_loads.iter().sum();
        if total <= 0.0 {
            return Vec::new();
        }
        cdf(&self.link_utilizations, &self.link_loads, total)
    }

    /// (utilization, cumulative fraction of links), ending at 1.
    pub fn utilization_cdf_by_links(&self) -> Vec<(f64, f64)> {
        let ones = vec![1.0; self.link_utilizations.len()];
        cdf(&self.link_utilizations, &ones, self.link_utilizations.len() as f64)
    }
}

fn cdf(values: &[f64], weights: &[f64], total: f64) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut out: Vec<(f64, f64)> = order
        .into_iter()
        .map(|i| {
            acc += weights[i];
            (values[i], acc / total)
        })
        .collect();
    if let Some(last) = out.last_mut() {
        last.1 = 1.0;
    }
    out
}

/// Computes the report for one bin. `state` must match `assignment`.
pub fn compute_metrics(
    bin: usize,
    assignment: &FlowAssignment,
    state: &LinkLoadState,
    net: &Network,
) -> Result<MetricsReport, MetricsError> {
    let recomputed = LinkLoadState::from_assignment(net, assignment);
    for (e, (&a, &b)) in state.loads().iter().zip(recomputed.loads()).enumerate() {
        if (a - b).abs() > IDENTITY_TOL * b.abs().max(1.0) {
            return Err(MetricsError::InconsistentState { link: LinkId(e), incremental: a, recomputed: b });
        }
    }

    let mut distribution: Vec<f64> = Vec::new();
    let mut flow_sum = 0.0;
    let mut total_volume = 0.0;
    let mut accumulated_delay = 0.0;
    let mut record = |origin, destination, volume: f64| {
        let hops = net.hops(origin, destination);
        if distribution.len() <= hops {
            distribution.resize(hops + 1, 0.0);
        }
        distribution[hops] += volume;
        flow_sum += volume * hops as f64;
        total_volume += volume;
        accumulated_delay += volume * net.delay(origin, destination);
    };
    for od in assignment.background() {
        record(od.origin, od.destination, od.volume);
    }
    for (key, volume) in assignment.flows() {
        record(key.location, key.consumer, volume);
    }

    let link_sum = state.total_carried();
    let identity_residual = (link_sum - flow_sum).abs() / link_sum.abs().max(1.0);
    if identity_residual > IDENTITY_TOL {
        return Err(MetricsError::TrafficIdentity { link_sum, flow_sum });
    }
    Ok(MetricsReport {
        bin,
        max_link_utilization: state.max_utilization(),
        link_loads: state.loads().to_vec(),
        link_utilizations: state.utilizations(),
        total_traffic: link_sum,
        total_volume,
        path_length_distribution: distribution,
        accumulated_delay,
        identity_residual,
    })
}

/// `(baseline - treated) / baseline`; 0 when both are 0, NaN when only the
/// baseline is.
pub fn relative_reduction(baseline: f64, treated: f64) -> f64 {
    if baseline == treated {
        0.0
    } else if baseline == 0.0 {
        f64::NAN
    } else {
        (baseline - treated) / baseline
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub bin: usize,
    pub max_link_utilization: f64,
    pub total_traffic: f64,
    pub accumulated_delay: f64,
    pub mean_path_length: f64,
    /// Share of baseline carried volume on links whose utilization dropped.
    pub decreased_volume_fraction: f64,
}

pub fn compare_reports(baseline: &MetricsReport, treated: &MetricsReport) -> Result<Reduction, MetricsError> {
    if baseline.bin != treated.bin {
        return Err(MetricsError::BinMismatch { baseline: baseline.bin, treated: treated.bin });
    }
    if baseline.link_loads.len() != treated.link_loads.len() {
        return Err(MetricsError::LinkCountMismatch {
            baseline: baseline.link_loads.len(),
            treated: treated.link_loads.len(),
        });
    }
    let total: f64 = baseline.link_loads.iter().sum();
    let decreased: f64 = baseline
        .link_utilizations
        .iter()
        .zip(&treated.link_utilizations)
        .zip(&baseline.link_loads)
        .filter(|((b, t), _)| t < b)
        .map(|(_, y)| y)
        .sum();
    Ok(Reduction {
        bin: baseline.bin,
        max_link_utilization: relative_reduction(baseline.max_link_utilization, treated.max_link_utilization),
        total_traffic: relative_reduction(baseline.total_traffic, treated.total_traffic),
        accumulated_delay: relative_reduction(baseline.accumulated_delay, treated.accumulated_delay),
        mean_path_length: relative_reduction(baseline.mean_path_length(), treated.mean_path_length()),
        decreased_volume_fraction: if total > 0.0 { decreased / total } else { 0.0 },
    })
}

/// Baseline and treated reports of one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinComparison {
    pub bin: usize,
    pub baseline: MetricsReport,
    pub treated: MetricsReport,
    pub reduction: Reduction,
}

impl BinComparison {
    pub fn new(baseline: MetricsReport, treated: MetricsReport) -> Result<Self, MetricsError> {
        let reduction = compare_reports(&baseline, &treated)?;
        Ok(Self { bin: baseline.bin, baseline, treated, reduction })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// Fixed CSV columns; `hops_*` bucket columns follow, one pair per hop count
/// up to the largest seen.
pub const CSV_COLUMNS: [&str; 17] = [
    "bin",
    "baseline_max_utilization",
    "treated_max_utilization",
    "max_utilization_reduction",
    "baseline_max_utilization_normalized",
    "treated_max_utilization_normalized",
    "baseline_total_traffic",
    "treated_total_traffic",
    "total_traffic_reduction",
    "baseline_accumulated_delay",
    "treated_accumulated_delay",
    "accumulated_delay_reduction",
    "baseline_mean_path_length",
    "treated_mean_path_length",
    "mean_path_length_reduction",
    "decreased_volume_fraction",
    "total_volume",
];

#[derive(Serialize)]
struct JsonRow<'a> {
    #[serde(flatten)]
    row: &'a BinComparison,
    baseline_max_utilization_normalized: f64,
    treated_max_utilization_normalized: f64,
}

/// Renders per-bin comparisons (sorted by bin) as a CSV or JSON document.
///
/// Normalized columns divide by `normalization`, or by the largest baseline
/// maximum utilization across the rows when `None`.
pub fn timeseries_report(rows: &[BinComparison], format: ReportFormat, normalization: Option<f64>) -> String {
    let mut rows: Vec<&BinComparison> = rows.iter().collect();
    rows.sort_by_key(|r| r.bin);
    let scale =
        normalization.unwrap_or_else(|| rows.iter().map(|r| r.baseline.max_link_utilization).fold(0.0, f64::max));
    let normalize = |v: f64| if scale > 0.0 { v / scale } else { 0.0 };
    match format {
        ReportFormat::Json => {
            let doc: Vec<JsonRow<'_>> = rows
                .iter()
                .map(|row| JsonRow {
                    row,
                    baseline_max_utilization_normalized: normalize(row.baseline.max_link_utilization),
                    treated_max_utilization_normalized: normalize(row.treated.max_link_utilization),
                })
                .collect();
            let mut text = serde_json::to_string_pretty(&doc).expect("reports serialize");
            text.push('\n');
            text
        }
        ReportFormat::Csv => {
            let buckets = rows
                .iter()
                .map(|r| r.baseline.path_length_distribution.len().max(r.treated.path_length_distribution.len()))
                .max()
                .unwrap_or(0);
            let mut out = csv::Writer::from_writer(Vec::new());
            let mut header: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
            for h in 0..buckets {
                header.push(format!("baseline_hops_{h}"));
                header.push(format!("treated_hops_{h}"));
            }
            out.write_record(&header).expect("in-memory write");
            for r in rows {
                let mut record = vec![
                    r.bin.to_string(),
                    r.baseline.max_link_utilization.to_string(),
                    r.treated.max_link_utilization.to_string(),
                    r.reduction.max_link_utilization.to_string(),
                    normalize(r.baseline.max_link_utilization).to_string(),
                    normalize(r.treated.max_link_utilization).to_string(),
                    r.baseline.total_traffic.to_string(),
                    r.treated.total_traffic.to_string(),
                    r.reduction.total_traffic.to_string(),
                    r.baseline.accumulated_delay.to_string(),
                    r.treated.accumulated_delay.to_string(),
                    r.reduction.accumulated_delay.to_string(),
                    r.baseline.mean_path_length().to_string(),
                    r.treated.mean_path_length().to_string(),
                    r.reduction.mean_path_length.to_string(),
                    r.reduction.decreased_volume_fraction.to_string(),
                    r.baseline.total_volume.to_string(),
                ];
                let bucket = |d: &[f64], h: usize| d.get(h).copied().unwrap_or(0.0).to_string();
                for h in 0..buckets {
                    record.push(bucket(&r.baseline.path_length_distribution, h));
                    record.push(bucket(&r.treated.path_length_distribution, h));
                }
                out.write_record(&record).expect("in-memory write");
            }
            String::from_utf8(out.into_inner().expect("in-memory flush")).expect("utf-8 csv")
        }
    }
}
