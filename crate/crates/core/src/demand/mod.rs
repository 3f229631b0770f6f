//! Time-binned content demand with per-provider location diversity.
//!
//! A [`ContentDemandMatrix`] holds, for every bin, the volume `d_jk` each
//! consumer router `j` requests from each content provider `k`, the eligible
//! server locations of every provider, and the OD-level background demand
//! that no provider can redirect. [`split_adjustable`] cuts one bin into the
//! adjustable part (re-assignable by the engines) and the fixed remainder.

mod file;
mod gravity;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NetworkTopology, NodeId};

pub use file::{BackgroundRecord, BinsRecord, DemandDocument, DemandRecord, Locations, ProviderRecord};
pub use gravity::{default_cp_profiles, diurnal_profile, generate_gravity_demands, CpProfile, GravityParams};

/// Default bin length in minutes.
pub const DEFAULT_BIN_MINUTES: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProviderId(pub u32);

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("malformed demand document: {0}")]
    Malformed(String),
    #[error("cannot read demand file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: unknown node id {node}")]
    UnknownNode { context: String, node: usize },
    #[error("{context}: volume must be finite and nonnegative, got {volume}")]
    NegativeVolume { context: String, volume: f64 },
    #[error("bin {bin}: provider {provider} has demand from consumer {consumer} but an empty eligible set")]
    EmptyEligibleSet { bin: usize, provider: ProviderId, consumer: NodeId },
    #[error("unknown provider {0}")]
    UnknownProvider(ProviderId),
    #[error("duplicate provider id {0}")]
    DuplicateProvider(ProviderId),
    #[error("bin {bin} out of range (matrix has {count} bins)")]
    BinOutOfRange { bin: usize, count: usize },
    #[error("provider {provider}: expected locations for {expected} bins, found {found}")]
    LocationsLength { provider: ProviderId, expected: usize, found: usize },
    #[error("profile has {found} entries but the matrix has {expected} bins")]
    ProfileLength { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("provider {provider} needs {requested} locations but only {available} peering points exist")]
    NotEnoughPeeringPoints { provider: ProviderId, requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentProvider {
    pub id: ProviderId,
    pub name: String,
    /// Sorted, deduplicated server locations for each bin.
    pub locations_by_bin: Vec<Vec<NodeId>>,
}

impl ContentProvider {
    pub fn locations(&self, bin: usize) -> &[NodeId] {
        self.locations_by_bin.get(bin).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// OD-level demand that routing alone decides (part of `x_s`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdDemand {
    pub origin: NodeId,
    pub destination: NodeId,
    pub volume: f64,
}

/// One `d_jk` together with its eligible set `M_jk`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentDemand {
    pub provider: ProviderId,
    pub consumer: NodeId,
    pub volume: f64,
    pub eligible: Vec<NodeId>,
}

/// Demands of one time bin, keyed for deterministic iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemandBin {
    pub content: BTreeMap<(ProviderId, NodeId), f64>,
    pub background: BTreeMap<(NodeId, NodeId), f64>,
}

impl DemandBin {
    pub fn content_total(&self) -> f64 {
        self.content.values().sum()
    }

    pub fn background_total(&self) -> f64 {
        self.background.values().sum()
    }

    pub fn total(&self) -> f64 {
        self.content_total() + self.background_total()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentDemandMatrix {
    bin_minutes: f64,
    providers: BTreeMap<ProviderId, ContentProvider>,
    bins: Vec<DemandBin>,
}

impl ContentDemandMatrix {
    /// Validates against `topo`. Zero-volume entries are dropped.
    pub fn new(
        bin_minutes: f64,
        providers: Vec<ContentProvider>,
        bins: Vec<DemandBin>,
        topo: &NetworkTopology,
    ) -> Result<Self, DemandError> {
        if !(bin_minutes > 0.0) || !bin_minutes.is_finite() {
            return Err(DemandError::InvalidParameter(format!("bin duration must be positive, got {bin_minutes}")));
        }
        let check_node = |context: &dyn Fn() -> String, node: NodeId| {
            if topo.contains(node) {
                Ok(())
            } else {
                Err(DemandError::UnknownNode { context: context(), node: node.0 })
            }
        };
        let check_volume = |context: &dyn Fn() -> String, volume: f64| {
            if volume >= 0.0 && volume.is_finite() {
                Ok(())
            } else {
                Err(DemandError::NegativeVolume { context: context(), volume })
            }
        };

        let mut by_id = BTreeMap::new();
        for mut provider in providers {
            if provider.locations_by_bin.len() != bins.len() {
                return Err(DemandError::LocationsLength {
                    provider: provider.id,
                    expected: bins.len(),
                    found: provider.locations_by_bin.len(),
                });
            }
            for (bin, locations) in provider.locations_by_bin.iter_mut().enumerate() {
                for &node in locations.iter() {
                    check_node(&|| format!("provider {} bin {bin} location", provider.id), node)?;
                }
                locations.sort();
                locations.dedup();
            }
            let id = provider.id;
            if by_id.insert(id, provider).is_some() {
                return Err(DemandError::DuplicateProvider(id));
            }
        }

        let mut bins = bins;
        for (t, bin) in bins.iter_mut().enumerate() {
            for (&(k, j), &volume) in &bin.content {
                let context = || format!("bin {t} demand (consumer {j}, provider {k})");
                check_node(&context, j)?;
                check_volume(&context, volume)?;
                let provider = by_id.get(&k).ok_or(DemandError::UnknownProvider(k))?;
                if volume > 0.0 && provider.locations(t).is_empty() {
                    return Err(DemandError::EmptyEligibleSet { bin: t, provider: k, consumer: j });
                }
            }
            for (&(o, d), &volume) in &bin.background {
                let context = || format!("bin {t} background ({o}, {d})");
                check_node(&context, o)?;
                check_node(&context, d)?;
                check_volume(&context, volume)?;
            }
            bin.content.retain(|_, v| *v > 0.0);
            bin.background.retain(|_, v| *v > 0.0);
        }
        Ok(Self { bin_minutes, providers: by_id, bins })
    }

    pub fn from_json(text: &str, topo: &NetworkTopology) -> Result<Self, DemandError> {
        let doc: DemandDocument = serde_json::from_str(text).map_err(|e| DemandError::Malformed(e.to_string()))?;
        doc.into_matrix(topo)
    }

    /// Reads and validates a demand file.
    pub fn load(path: impl AsRef<Path>, topo: &NetworkTopology) -> Result<Self, DemandError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| DemandError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text, topo)
    }

    pub fn to_document(&self) -> DemandDocument {
        DemandDocument::from_matrix(self)
    }

    pub fn bin_minutes(&self) -> f64 {
        self.bin_minutes
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[DemandBin] {
        &self.bins
    }

    pub fn bin(&self, t: usize) -> Result<&DemandBin, DemandError> {
        self.bins.get(t).ok_or(DemandError::BinOutOfRange { bin: t, count: self.bins.len() })
    }

    pub fn providers(&self) -> impl Iterator<Item = &ContentProvider> {
        self.providers.values()
    }

    pub fn provider(&self, id: ProviderId) -> Option<&ContentProvider> {
        self.providers.get(&id)
    }

    pub fn eligible(&self, provider: ProviderId, bin: usize) -> &[NodeId] {
        self.providers.get(&provider).map(|p| p.locations(bin)).unwrap_or(&[])
    }

    pub fn bin_total(&self, t: usize) -> f64 {
        self.bins.get(t).map(DemandBin::total).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().map(DemandBin::total).sum()
    }

    pub fn provider_bin_total(&self, provider: ProviderId, t: usize) -> f64 {
        self.bins.get(t).map_or(0.0, |bin| {
            bin.content.range((provider, NodeId(0))..=(provider, NodeId(usize::MAX))).map(|(_, v)| v).sum()
        })
    }

    /// Volume of a provider summed over all bins.
    pub fn provider_total(&self, provider: ProviderId) -> f64 {
        (0..self.bins.len()).map(|t| self.provider_bin_total(provider, t)).sum()
    }

    /// Providers by decreasing summed volume, ties by ascending id.
    pub fn ranked_providers(&self) -> Vec<(ProviderId, f64)> {
        let mut ranked: Vec<_> = self.providers.keys().map(|&k| (k, self.provider_total(k))).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }

    /// All content demands of a bin with their eligible sets, in
    /// (provider, consumer) order.
    pub fn content_demands(&self, t: usize) -> Result<Vec<ContentDemand>, DemandError> {
        let bin = self.bin(t)?;
        Ok(bin
            .content
            .iter()
            .map(|(&(provider, consumer), &volume)| ContentDemand {
                provider,
                consumer,
                volume,
                eligible: self.eligible(provider, t).to_vec(),
            })
            .collect())
    }

    /// One potential vector per provider with demand in bin `t`.
    pub fn potential_vectors(&self, t: usize) -> Result<Vec<PotentialVector>, DemandError> {
        let mut out: BTreeMap<ProviderId, PotentialVector> = BTreeMap::new();
        for demand in self.content_demands(t)? {
            out.entry(demand.provider)
                .or_insert_with(|| PotentialVector { provider: demand.provider, bin: t, entries: Vec::new() })
                .entries
                .push(PotentialEntry { consumer: demand.consumer, volume: demand.volume, ingress: demand.eligible });
        }
        Ok(out.into_values().collect())
    }

    fn map_volumes(
        &self,
        mut content: impl FnMut(usize, ProviderId, f64) -> f64,
        mut background: impl FnMut(usize, f64) -> f64,
    ) -> Self {
        let bins = self
            .bins
            .iter()
            .enumerate()
            .map(|(t, bin)| DemandBin {
                content: bin
                    .content
                    .iter()
                    .map(|(&key, &v)| (key, content(t, key.0, v)))
                    .filter(|(_, v)| *v > 0.0)
                    .collect(),
                background: bin
                    .background
                    .iter()
                    .map(|(&key, &v)| (key, background(t, v)))
                    .filter(|(_, v)| *v > 0.0)
                    .collect(),
            })
            .collect();
        Self { bin_minutes: self.bin_minutes, providers: self.providers.clone(), bins }
    }
}

/// Multiplies every volume of bin `t` by `profile[t]`.
pub fn scale_diurnal(matrix: &ContentDemandMatrix, profile: &[f64]) -> Result<ContentDemandMatrix, DemandError> {
    if profile.len() != matrix.bin_count() {
        return Err(DemandError::ProfileLength { expected: matrix.bin_count(), found: profile.len() });
    }
    if let Some(bad) = profile.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
        return Err(DemandError::InvalidParameter(format!("diurnal multiplier must be nonnegative, got {bad}")));
    }
    Ok(matrix.map_volumes(|t, _, v| v * profile[t], |t, v| v * profile[t]))
}

/// Scales one provider's demand in every bin; a factor of zero removes it.
pub fn apply_scenario_multiplier(
    matrix: &ContentDemandMatrix,
    provider: ProviderId,
    factor: f64,
) -> Result<ContentDemandMatrix, DemandError> {
    if matrix.provider(provider).is_none() {
        return Err(DemandError::UnknownProvider(provider));
    }
    if !(factor >= 0.0) || !factor.is_finite() {
        return Err(DemandError::InvalidParameter(format!("factor must be >= 0, got {factor}")));
    }
    Ok(matrix.map_volumes(|_, k, v| if k == provider { v * factor } else { v }, |_, v| v))
}

/// The part of a bin that stays put: demands of non-participating or
/// single-location providers plus background OD demand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixedDemands {
    pub content: Vec<ContentDemand>,
    pub background: Vec<OdDemand>,
}

impl FixedDemands {
    pub fn total(&self) -> f64 {
        self.content.iter().map(|d| d.volume).sum::<f64>() + self.background.iter().map(|d| d.volume).sum::<f64>()
    }
}

/// One bin split into `x_r` (adjustable) and `x_s` (fixed).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinDemand {
    pub bin: usize,
    pub adjustable: Vec<ContentDemand>,
    pub fixed: FixedDemands,
}

impl BinDemand {
    pub fn adjustable_total(&self) -> f64 {
        self.adjustable.iter().map(|d| d.volume).sum()
    }

    pub fn total(&self) -> f64 {
        self.adjustable_total() + self.fixed.total()
    }

    /// Every content demand, adjustable first.
    pub fn all_content(&self) -> impl Iterator<Item = &ContentDemand> {
        self.adjustable.iter().chain(self.fixed.content.iter())
    }
}

/// Splits bin `t`: participating providers with at least two eligible
/// locations go to the adjustable part, everything else is fixed.
pub fn split_adjustable(
    matrix: &ContentDemandMatrix,
    t: usize,
    participating: &BTreeSet<ProviderId>,
) -> Result<BinDemand, DemandError> {
    let bin = matrix.bin(t)?;
    let mut out = BinDemand { bin: t, ..Default::default() };
    for demand in matrix.content_demands(t)? {
        if participating.contains(&demand.provider) && demand.eligible.len() >= 2 {
            out.adjustable.push(demand);
        } else {
            out.fixed.content.push(demand);
        }
    }
    out.fixed.background = bin
        .background
        .iter()
        .map(|(&(origin, destination), &volume)| OdDemand { origin, destination, volume })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialEntry {
    pub consumer: NodeId,
    pub volume: f64,
    pub ingress: Vec<NodeId>,
}

/// How a provider's demand in one bin could enter the network: for each
/// consumer, the volume and the ingress nodes that may carry it. Any split
/// of each volume over its ingress nodes is a valid realization.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialVector {
    pub provider: ProviderId,
    pub bin: usize,
    pub entries: Vec<PotentialEntry>,
}

impl PotentialVector {
    /// Even split over the ingress nodes, as (ingress, consumer, volume).
    pub fn uniform_realization(&self) -> Vec<(NodeId, NodeId, f64)> {
        self.entries
            .iter()
            .flat_map(|e| {
                let share = e.volume / e.ingress.len() as f64;
                e.ingress.iter().map(move |&i| (i, e.consumer, share))
            })
            .collect()
    }

    /// Whether `flows` (ingress, consumer, volume) only uses eligible ingress
    /// nodes and reproduces every consumer volume within `tol`.
    pub fn is_realization(&self, flows: &[(NodeId, NodeId, f64)], tol: f64) -> bool {
        self.entries.iter().all(|e| {
            let mut sum = 0.0;
            for &(i, _, v) in flows.iter().filter(|f| f.1 == e.consumer) {
                if v < 0.0 || (v > 0.0 && !e.ingress.contains(&i)) {
                    return false;
                }
                sum += v;
            }
            (sum - e.volume).abs() <= tol * e.volume.max(1.0)
        }) && flows.iter().all(|f| self.entries.iter().any(|e| e.consumer == f.1))
    }
}
