use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ContentDemandMatrix, ContentProvider, DemandBin, DemandError, ProviderId, DEFAULT_BIN_MINUTES};
use crate::topology::{NetworkTopology, NodeId};

/// On-disk demand format.
///
/// ```json
/// {"bins": {"count": 2, "duration_minutes": 10},
///  "providers": [{"id": 0, "name": "cp0", "locations": [[1, 3], [1]]}],
///  "demands": [{"bin": 0, "consumer": 2, "provider": 0, "volume": 5}],
///  "background": [{"bin": 0, "origin": 1, "destination": 2, "volume": 3}]}
/// ```
///
/// `locations` is either one list per bin or a single list used for every
/// bin. Repeated (bin, consumer, provider) records are summed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandDocument {
    pub bins: BinsRecord,
    pub providers: Vec<ProviderRecord>,
    #[serde(default)]
    pub demands: Vec<DemandRecord>,
    #[serde(default)]
    pub background: Vec<BackgroundRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsRecord {
    pub count: usize,
    #[serde(default = "default_minutes")]
    pub duration_minutes: f64,
}

fn default_minutes() -> f64 {
    DEFAULT_BIN_MINUTES
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderRecord {
    pub id: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub locations: Locations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Locations {
    Static(Vec<usize>),
    PerBin(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandRecord {
    pub bin: usize,
    pub consumer: usize,
    pub provider: u32,
    pub volume: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundRecord {
    pub bin: usize,
    pub origin: usize,
    pub destination: usize,
    pub volume: f64,
}

fn check_record_volume(context: impl FnOnce() -> String, volume: f64) -> Result<(), DemandError> {
    if volume >= 0.0 && volume.is_finite() {
        Ok(())
    } else {
        Err(DemandError::NegativeVolume { context: context(), volume })
    }
}

impl DemandDocument {
    pub fn into_matrix(self, topo: &NetworkTopology) -> Result<ContentDemandMatrix, DemandError> {
        let count = self.bins.count;
        let providers = self
            .providers
            .into_iter()
            .map(|p| {
                let locations_by_bin = match p.locations {
                    Locations::Static(nodes) => vec![nodes.into_iter().map(NodeId).collect(); count],
                    Locations::PerBin(per_bin) => {
                        per_bin.into_iter().map(|nodes| nodes.into_iter().map(NodeId).collect()).collect()
                    }
                };
                ContentProvider {
                    id: ProviderId(p.id),
                    name: p.name.unwrap_or_else(|| format!("cp{}", p.id)),
                    locations_by_bin,
                }
            })
            .collect();

        let mut bins = vec![DemandBin::default(); count];
        for (i, r) in self.demands.iter().enumerate() {
            check_record_volume(|| format!("demand record {i}"), r.volume)?;
            let bin = bins.get_mut(r.bin).ok_or(DemandError::BinOutOfRange { bin: r.bin, count })?;
            *bin.content.entry((ProviderId(r.provider), NodeId(r.consumer))).or_default() += r.volume;
        }
        for (i, r) in self.background.iter().enumerate() {
            check_record_volume(|| format!("background record {i}"), r.volume)?;
            let bin = bins.get_mut(r.bin).ok_or(DemandError::BinOutOfRange { bin: r.bin, count })?;
            *bin.background.entry((NodeId(r.origin), NodeId(r.destination))).or_default() += r.volume;
        }
        ContentDemandMatrix::new(self.bins.duration_minutes, providers, bins, topo)
    }

    pub fn from_matrix(matrix: &ContentDemandMatrix) -> Self {
        let providers = matrix
            .providers()
            .map(|p| {
                let as_usize = |nodes: &Vec<NodeId>| nodes.iter().map(|n| n.0).collect::<Vec<_>>();
                let first = p.locations_by_bin.first();
                let locations = match first {
                    Some(first) if p.locations_by_bin.iter().all(|l| l == first) => Locations::Static(as_usize(first)),
                    _ => Locations::PerBin(p.locations_by_bin.iter().map(as_usize).collect()),
                };
                ProviderRecord { id: p.id.0, name: Some(p.name.clone()), locations }
            })
            .collect();
        let mut demands = Vec::new();
        let mut background = Vec::new();
        for (t, bin) in matrix.bins().iter().enumerate() {
            // file order is (bin, consumer, provider)
            let mut rows: BTreeMap<(NodeId, ProviderId), f64> = BTreeMap::new();
            for (&(k, j), &v) in &bin.content {
                rows.insert((j, k), v);
            }
            demands.extend(rows.into_iter().map(|((j, k), volume)| DemandRecord {
                bin: t,
                consumer: j.0,
                provider: k.0,
                volume,
            }));
            background.extend(bin.background.iter().map(|(&(o, d), &volume)| BackgroundRecord {
                bin: t,
                origin: o.0,
                destination: d.0,
                volume,
            }));
        }
        Self {
            bins: BinsRecord { count: matrix.bin_count(), duration_minutes: matrix.bin_minutes() },
            providers,
            demands,
            background,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("demand document serializes")
    }
}
