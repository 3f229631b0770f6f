//! Per-request greedy server selection.
//!
//! Each request goes, whole, to the eligible location whose path scores best
//! under the objective given the load placed so far. Earlier decisions are
//! never revisited.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::objective::best_candidate;
use super::{place_fixed, AssignmentError, BaselinePolicy, Candidate, FlowAssignment, LinkLoadState, Objective};
use crate::demand::{BinDemand, ContentDemand, ProviderId};
use crate::topology::{Network, NodeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub arrival: usize,
    pub provider: ProviderId,
    pub consumer: NodeId,
    pub volume: f64,
}

/// Eligible locations keyed by (provider, consumer).
#[derive(Debug, Clone, Default)]
pub struct EligibleSets(BTreeMap<(ProviderId, NodeId), Vec<NodeId>>);

impl EligibleSets {
    pub fn from_demands<'a>(demands: impl IntoIterator<Item = &'a ContentDemand>) -> Self {
        Self(demands.into_iter().map(|d| ((d.provider, d.consumer), d.eligible.clone())).collect())
    }

    pub fn insert(&mut self, provider: ProviderId, consumer: NodeId, eligible: Vec<NodeId>) {
        self.0.insert((provider, consumer), eligible);
    }

    pub fn get(&self, provider: ProviderId, consumer: NodeId) -> &[NodeId] {
        self.0.get(&(provider, consumer)).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Splits every demand into `quanta` equal requests and interleaves them
/// round-robin in demand order; `shuffle` permutes the stream with a seeded
/// generator instead.
pub fn requests_from_demands(demands: &[ContentDemand], quanta: usize, shuffle: Option<u64>) -> Vec<Request> {
    let quanta = quanta.max(1);
    let mut out = Vec::with_capacity(demands.len() * quanta);
    for _ in 0..quanta {
        for d in demands {
            out.push(Request {
                arrival: 0,
                provider: d.provider,
                consumer: d.consumer,
                volume: d.volume / quanta as f64,
            });
        }
    }
    if let Some(seed) = shuffle {
        out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    for (i, r) in out.iter_mut().enumerate() {
        r.arrival = i;
    }
    out
}

/// Processes `requests` in arrival order on top of `initial`.
pub fn online_greedy_assign(
    requests: &[Request],
    net: &Network,
    eligible: &EligibleSets,
    initial: (FlowAssignment, LinkLoadState),
    objective: Objective,
) -> Result<(FlowAssignment, LinkLoadState), AssignmentError> {
    let (mut assignment, mut state) = initial;
    let mut candidates = Vec::new();
    for r in requests {
        if !(r.volume > 0.0 && r.volume.is_finite()) {
            return Err(AssignmentError::InvalidQuantum { arrival: r.arrival, volume: r.volume });
        }
        let locations = eligible.get(r.provider, r.consumer);
        if locations.is_empty() {
            return Err(AssignmentError::EmptyEligibleSet { provider: r.provider, consumer: r.consumer });
        }
        candidates.clear();
        candidates.extend(locations.iter().map(|&i| Candidate {
            location: i,
            links: net.path(i, r.consumer),
            hops: net.hops(i, r.consumer),
            delay_ms: net.delay(i, r.consumer),
        }));
        let best = candidates[best_candidate(&state, &candidates, r.volume, objective).expect("nonempty")];
        state.add_path(best.links, r.volume);
        assignment.add(r.provider, r.consumer, best.location, r.volume);
    }
    Ok((assignment, state))
}

/// Online greedy over the adjustable demand of one bin, on top of the fixed
/// demand placed by `baseline`.
pub fn online_assign_bin(
    bin: &BinDemand,
    net: &Network,
    baseline: &BaselinePolicy,
    objective: Objective,
    quanta: usize,
    shuffle: Option<u64>,
) -> Result<(FlowAssignment, LinkLoadState), AssignmentError> {
    let initial = place_fixed(bin, net, baseline)?;
    let requests = requests_from_demands(&bin.adjustable, quanta, shuffle);
    online_greedy_assign(&requests, net, &EligibleSets::from_demands(&bin.adjustable), initial, objective)
}
