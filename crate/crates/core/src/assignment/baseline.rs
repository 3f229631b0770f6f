//! Reference placements that ignore link load.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AssignmentError, FlowAssignment, LinkLoadState};
use crate::demand::{BinDemand, ContentDemand};
use crate::topology::{Network, NodeId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselinePolicy {
    /// Whole demand from the eligible location with the fewest hops to the
    /// consumer, lowest id on ties.
    #[default]
    NearestByHops,
    /// Demand split over the eligible locations with weights drawn uniformly
    /// from a generator keyed by (seed, bin, provider, consumer).
    VolumeProportionalRandom { seed: u64 },
}

impl BaselinePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::NearestByHops => "nearest-by-hops",
            Self::VolumeProportionalRandom { .. } => "volume-proportional-random",
        }
    }

    /// Split of one demand over its eligible locations.
    pub fn split(
        &self,
        net: &Network,
        bin: usize,
        demand: &ContentDemand,
    ) -> Result<Vec<(NodeId, f64)>, AssignmentError> {
        if demand.eligible.is_empty() {
            return Err(AssignmentError::EmptyEligibleSet { provider: demand.provider, consumer: demand.consumer });
        }
        match *self {
            Self::NearestByHops => {
                let best = demand
                    .eligible
                    .iter()
                    .copied()
                    .min_by_key(|&i| (net.hops(i, demand.consumer), i))
                    .expect("nonempty");
                Ok(vec![(best, demand.volume)])
            }
            Self::VolumeProportionalRandom { seed } => {
                let key = [bin as u64, demand.provider.0 as u64, demand.consumer.0 as u64]
                    .into_iter()
                    .fold(seed, |acc, x| splitmix(acc ^ x));
                let mut rng = ChaCha8Rng::seed_from_u64(key);
                let weights: Vec<f64> = demand.eligible.iter().map(|_| rng.gen::<f64>()).collect();
                let sum: f64 = weights.iter().sum();
                let n = demand.eligible.len() as f64;
                Ok(demand
                    .eligible
                    .iter()
                    .zip(weights)
                    .map(|(&i, w)| (i, if sum > 0.0 { demand.volume * w / sum } else { demand.volume / n }))
                    .collect())
            }
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn place<'a>(
    net: &Network,
    policy: &BaselinePolicy,
    bin: usize,
    assignment: &mut FlowAssignment,
    state: &mut LinkLoadState,
    demands: impl IntoIterator<Item = &'a ContentDemand>,
) -> Result<(), AssignmentError> {
    for d in demands {
        for (location, volume) in policy.split(net, bin, d)? {
            assignment.add(d.provider, d.consumer, location, volume);
            state.add_path(net.path(location, d.consumer), volume);
        }
    }
    Ok(())
}

/// Background plus the fixed content demand placed by `policy`. This is the
/// starting state every engine builds on.
pub fn place_fixed(
    bin: &BinDemand,
    net: &Network,
    policy: &BaselinePolicy,
) -> Result<(FlowAssignment, LinkLoadState), AssignmentError> {
    let mut assignment = FlowAssignment::with_background(bin.fixed.background.clone());
    let mut state = LinkLoadState::from_assignment(net, &assignment);
    place(net, policy, bin.bin, &mut assignment, &mut state, &bin.fixed.content)?;
    Ok((assignment, state))
}

/// Every content demand of the bin placed by `policy`.
pub fn baseline_assign(
    bin: &BinDemand,
    net: &Network,
    policy: &BaselinePolicy,
) -> Result<(FlowAssignment, LinkLoadState), AssignmentError> {
    let (mut assignment, mut state) = place_fixed(bin, net, policy)?;
    place(net, policy, bin.bin, &mut assignment, &mut state, &bin.adjustable)?;
    Ok((assignment, state))
}
