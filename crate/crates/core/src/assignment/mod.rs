//! Restricted flow load balancing: placing each content demand `d_jk` on the
//! eligible server locations `M_jk`.
//!
//! Three engines share the same [`FlowAssignment`] / [`LinkLoadState`] pair:
//! the baselines in [`baseline`], the per-request online greedy in
//! [`online`], and the iterative sorted greedy in [`greedy`].

pub mod baseline;
pub mod greedy;
mod objective;
pub mod online;

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::demand::{ContentDemand, OdDemand, ProviderId};
use crate::topology::{LinkId, Network, NodeId};

pub use baseline::{baseline_assign, place_fixed, BaselinePolicy};
pub use greedy::{greedy_sort_flow, greedy_sort_flow_warm, objective_value, GreedyConfig, GreedyOutcome};
pub use objective::{evaluate_candidate, Candidate, Objective, Score};
pub use online::{online_assign_bin, online_greedy_assign, requests_from_demands, EligibleSets, Request};

/// Relative tolerance for demand satisfaction and state consistency checks.
pub const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AssignmentError {
    #[error("provider {provider} has no eligible location for consumer {consumer}")]
    EmptyEligibleSet { provider: ProviderId, consumer: NodeId },
    #[error("demand (consumer {consumer}, provider {provider}) served {served}, expected {expected}")]
    DemandNotSatisfied { provider: ProviderId, consumer: NodeId, served: f64, expected: f64 },
    #[error("flow from ineligible location {location} for (consumer {consumer}, provider {provider})")]
    Restriction { provider: ProviderId, consumer: NodeId, location: NodeId },
    #[error("request {arrival}: quantum must be positive, got {volume}")]
    InvalidQuantum { arrival: usize, volume: f64 },
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
}

/// Key of a sub-flow `f_ijk`, ordered (provider, consumer, location).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub provider: ProviderId,
    pub consumer: NodeId,
    pub location: NodeId,
}

/// The decision variables `f_ijk` of one bin plus the background OD demand
/// that rides along unchanged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowAssignment {
    flows: BTreeMap<FlowKey, f64>,
    background: Vec<OdDemand>,
}

impl FlowAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_background(background: Vec<OdDemand>) -> Self {
        Self { flows: BTreeMap::new(), background }
    }

    pub fn add(&mut self, provider: ProviderId, consumer: NodeId, location: NodeId, volume: f64) {
        if volume != 0.0 {
            *self.flows.entry(FlowKey { provider, consumer, location }).or_default() += volume;
        }
    }

    /// Replaces every sub-flow of (provider, consumer) with `split`.
    pub fn set_split(&mut self, provider: ProviderId, consumer: NodeId, split: &[(NodeId, f64)]) {
        self.clear_demand(provider, consumer);
        for &(location, volume) in split {
            self.add(provider, consumer, location, volume);
        }
    }

    pub fn clear_demand(&mut self, provider: ProviderId, consumer: NodeId) {
        let keys: Vec<_> = self.demand_flows(provider, consumer).map(|(k, _)| k).collect();
        for key in keys {
            self.flows.remove(&key);
        }
    }

    pub fn demand_flows(&self, provider: ProviderId, consumer: NodeId) -> impl Iterator<Item = (FlowKey, f64)> + '_ {
        let lo = FlowKey { provider, consumer, location: NodeId(0) };
        let hi = FlowKey { provider, consumer, location: NodeId(usize::MAX) };
        self.flows.range(lo..=hi).map(|(k, v)| (*k, *v))
    }

    pub fn get(&self, provider: ProviderId, consumer: NodeId, location: NodeId) -> f64 {
        self.flows.get(&FlowKey { provider, consumer, location }).copied().unwrap_or(0.0)
    }

    /// Sub-flows in (provider, consumer, location) order.
    pub fn flows(&self) -> impl Iterator<Item = (FlowKey, f64)> + '_ {
        self.flows.iter().map(|(k, v)| (*k, *v))
    }

    pub fn background(&self) -> &[OdDemand] {
        &self.background
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn content_volume(&self) -> f64 {
        self.flows.values().sum()
    }

    /// Per-OD aggregate `f_ij = sum_k f_ijk`, keyed (location, consumer).
    pub fn od_aggregate(&self) -> BTreeMap<(NodeId, NodeId), f64> {
        let mut out = BTreeMap::new();
        for (k, v) in &self.flows {
            *out.entry((k.location, k.consumer)).or_default() += v;
        }
        out
    }

    /// Checks demand satisfaction and the restriction constraint for every
    /// demand in `demands`.
    pub fn check_demands<'a>(
        &self,
        demands: impl IntoIterator<Item = &'a ContentDemand>,
    ) -> Result<(), AssignmentError> {
        for d in demands {
            let mut served = 0.0;
            for (key, volume) in self.demand_flows(d.provider, d.consumer) {
                if volume != 0.0 && !d.eligible.contains(&key.location) {
                    return Err(AssignmentError::Restriction {
                        provider: d.provider,
                        consumer: d.consumer,
                        location: key.location,
                    });
                }
                if volume < -CHECK_TOL {
                    return Err(AssignmentError::DemandNotSatisfied {
                        provider: d.provider,
                        consumer: d.consumer,
                        served: volume,
                        expected: d.volume,
                    });
                }
                served += volume;
            }
            if (served - d.volume).abs() > CHECK_TOL * d.volume.max(1.0) {
                return Err(AssignmentError::DemandNotSatisfied {
                    provider: d.provider,
                    consumer: d.consumer,
                    served,
                    expected: d.volume,
                });
            }
        }
        Ok(())
    }

    /// CSV dump with columns bin, provider, consumer, location, volume.
    pub fn write_csv<W: Write>(&self, bin: usize, writer: &mut csv::Writer<W>) -> csv::Result<()> {
        for (key, volume) in &self.flows {
            writer.write_record([
                bin.to_string(),
                key.provider.to_string(),
                key.consumer.to_string(),
                key.location.to_string(),
                volume.to_string(),
            ])?;
        }
        Ok(())
    }
}

/// Writes a full assignment dump for several bins, rows sorted by
/// (bin, provider, consumer, location).
pub fn write_assignment_csv<W: Write>(writer: W, bins: &[(usize, &FlowAssignment)]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["bin", "provider", "consumer", "location", "volume"])?;
    let mut sorted: Vec<_> = bins.to_vec();
    sorted.sort_by_key(|(bin, _)| *bin);
    for (bin, assignment) in sorted {
        assignment.write_csv(bin, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

/// Carried volume `y_e` and capacity of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkLoadState {
    loads: Vec<f64>,
    capacities: Vec<f64>,
}

impl LinkLoadState {
    pub fn empty(net: &Network) -> Self {
        Self { loads: vec![0.0; net.topology().link_count()], capacities: net.topology().capacities() }
    }

    /// Recomputes `y = A x` from scratch.
    pub fn from_assignment(net: &Network, assignment: &FlowAssignment) -> Self {
        let mut state = Self::empty(net);
        for od in &assignment.background {
            state.add_path(net.path(od.origin, od.destination), od.volume);
        }
        for (key, volume) in &assignment.flows {
            state.add_path(net.path(key.location, key.consumer), *volume);
        }
        state
    }

    pub fn add_path(&mut self, path: &[LinkId], volume: f64) {
        for l in path {
            self.loads[l.0] += volume;
        }
    }

    pub(crate) fn set_load(&mut self, link: LinkId, load: f64) {
        self.loads[link.0] = load;
    }

    pub fn load(&self, link: LinkId) -> f64 {
        self.loads[link.0]
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn capacity(&self, link: LinkId) -> f64 {
        self.capacities[link.0]
    }

    pub fn utilization(&self, link: LinkId) -> f64 {
        self.loads[link.0] / self.capacities[link.0]
    }

    pub fn utilizations(&self) -> Vec<f64> {
        self.loads.iter().zip(&self.capacities).map(|(y, c)| y / c).collect()
    }

    /// L = max_e y_e / c_e (0 for a network without links).
    pub fn max_utilization(&self) -> f64 {
        self.loads.iter().zip(&self.capacities).map(|(y, c)| y / c).fold(0.0, f64::max)
    }

    /// Highest utilization on `path`; 0 for the empty path.
    pub fn path_level(&self, path: &[LinkId]) -> f64 {
        path.iter().map(|&l| self.utilization(l)).fold(0.0, f64::max)
    }

    /// Highest utilization on `path` after adding `volume` to it.
    pub fn path_level_with(&self, path: &[LinkId], volume: f64) -> f64 {
        path.iter().map(|&l| (self.loads[l.0] + volume) / self.capacities[l.0]).fold(0.0, f64::max)
    }

    /// Volume that fits on `path` before any link exceeds utilization `level`.
    pub fn headroom(&self, path: &[LinkId], level: f64) -> f64 {
        path.iter().map(|&l| level * self.capacities[l.0] - self.loads[l.0]).fold(f64::INFINITY, f64::min)
    }

    pub fn total_carried(&self) -> f64 {
        self.loads.iter().sum()
    }

    /// Largest per-link load difference to `other`.
    pub fn max_load_difference(&self, other: &Self) -> f64 {
        self.loads.iter().zip(&other.loads).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests;
