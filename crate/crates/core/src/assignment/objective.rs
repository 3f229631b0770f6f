use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LinkLoadState;
use crate::topology::{LinkId, NodeId};

/// Traffic engineering goal. Lower scores are better for every kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    MaxLinkUtilization,
    PathLength,
    PathDelay,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Self::MaxLinkUtilization, Self::PathLength, Self::PathDelay];

    pub fn name(self) -> &'static str {
        match self {
            Self::MaxLinkUtilization => "max-link-utilization",
            Self::PathLength => "path-length",
            Self::PathDelay => "path-delay",
        }
    }

    /// Whether the candidate score depends on the volume being placed.
    pub fn is_load_dependent(self) -> bool {
        matches!(self, Self::MaxLinkUtilization)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|o| o.name() == s).ok_or_else(|| {
            format!("unknown objective {s:?} (expected one of max-link-utilization, path-length, path-delay)")
        })
    }
}

/// One eligible location for a demand, with its routed path to the consumer.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub location: NodeId,
    pub links: &'a [LinkId],
    pub hops: usize,
    pub delay_ms: f64,
}

/// Objective value of a candidate plus the fixed tie-break chain: fewer hops,
/// then lower delay, then lower location id.
#[derive(Debug, Clone, Copy)]
pub struct Score {
    pub value: f64,
    pub hops: usize,
    pub delay_ms: f64,
    pub location: NodeId,
}

/// Values closer than this (relative) count as equal, so rounding noise never
/// overrides the tie-break chain.
const SCORE_EPS: f64 = 1e-12;

fn approx_cmp(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= SCORE_EPS * a.abs().max(b.abs()).max(1.0) {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

impl Score {
    pub fn for_candidate(value: f64, candidate: &Candidate<'_>) -> Self {
        Self { value, hops: candidate.hops, delay_ms: candidate.delay_ms, location: candidate.location }
    }

    pub fn compare(&self, other: &Self) -> Ordering {
        approx_cmp(self.value, other.value)
            .then(self.hops.cmp(&other.hops))
            .then(approx_cmp(self.delay_ms, other.delay_ms))
            .then(self.location.cmp(&other.location))
    }
}

/// Score of placing `volume` on `candidate` given the current link loads.
///
/// Max-link-utilization scores by the highest post-assignment utilization
/// along the path, path-length by hop count, path-delay by delay. The empty
/// path (consumer co-located with the server) scores 0 under every objective.
pub fn evaluate_candidate(
    state: &LinkLoadState,
    candidate: &Candidate<'_>,
    volume: f64,
    objective: Objective,
) -> Score {
    let value = match objective {
        Objective::MaxLinkUtilization => state.path_level_with(candidate.links, volume),
        Objective::PathLength => candidate.hops as f64,
        Objective::PathDelay => candidate.delay_ms,
    };
    Score::for_candidate(value, candidate)
}

/// Index of the best candidate (lowest score).
pub(crate) fn best_candidate(
    state: &LinkLoadState,
    candidates: &[Candidate<'_>],
    volume: f64,
    objective: Objective,
) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, evaluate_candidate(state, c, volume, objective)))
        .min_by(|a, b| a.1.compare(&b.1))
        .map(|(i, _)| i)
}
