//! Iterative sorted greedy.
//!
//! Sub-flows are visited providers-by-volume, consumers-by-volume. Each one is
//! lifted out of the network and placed again against the residual load; the
//! new placement is kept only when it strictly improves the objective. Passes
//! repeat until one pass changes nothing or the iteration cap is reached.
//!
//! Under max-link-utilization a placement is judged on the links its eligible
//! paths can touch: their utilizations, clamped from below to a band under
//! the network maximum and sorted in decreasing order, are compared
//! lexicographically, with differences under [`MIN_GAIN`] of the maximum
//! treated as ties. When they tie, the move must not raise any entry and must
//! shorten volume-weighted hops (then delay). A move therefore never raises
//! the network maximum, can still make progress when several links share it,
//! and otherwise keeps traffic on short paths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{place_fixed, AssignmentError, BaselinePolicy, Candidate, FlowAssignment, LinkLoadState, Objective};
use crate::demand::{BinDemand, ContentDemand, ProviderId};
use crate::topology::{LinkId, Network, NodeId};

pub const DEFAULT_MAX_ITERATIONS: usize = 10;
const BISECTION_STEPS: usize = 100;

/// Links more than this fraction below the network maximum are not worth
/// balancing; among them only path length counts.
const BALANCE_BAND: f64 = 0.15;

/// Relative margin by which a re-placement must beat the old one.
const IMPROVE_TOL: f64 = 1e-9;

/// Utilization changes within this fraction of the sub-flow's highest link
/// utilization count as ties.
const MIN_GAIN: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyConfig {
    pub objective: Objective,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Placement of the fixed demand and starting placement of the
    /// adjustable demand.
    #[serde(default)]
    pub baseline: BaselinePolicy,
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

impl GreedyConfig {
    pub fn new(objective: Objective) -> Self {
        Self { objective, max_iterations: DEFAULT_MAX_ITERATIONS, baseline: BaselinePolicy::NearestByHops }
    }
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    pub assignment: FlowAssignment,
    pub state: LinkLoadState,
    /// Passes run, including the final pass that found nothing to change.
    pub iterations_used: usize,
    pub converged: bool,
    /// Objective value after the initial placement and after every pass.
    pub objective_history: Vec<f64>,
    pub reassignments: usize,
}

/// Objective value of a whole placement: maximum utilization, total carried
/// volume (volume times hops) or volume times delay.
pub fn objective_value(objective: Objective, net: &Network, assignment: &FlowAssignment, state: &LinkLoadState) -> f64 {
    match objective {
        Objective::MaxLinkUtilization => state.max_utilization(),
        Objective::PathLength => state.total_carried(),
        Objective::PathDelay => {
            let background: f64 =
                assignment.background().iter().map(|od| od.volume * net.delay(od.origin, od.destination)).sum();
            let content: f64 = assignment.flows().map(|(k, v)| v * net.delay(k.location, k.consumer)).sum();
            background + content
        }
    }
}

/// Visiting order: providers by decreasing adjustable volume, then consumers
/// by decreasing volume; ids break ties.
pub fn sort_subflows(adjustable: &[ContentDemand]) -> Vec<&ContentDemand> {
    let mut per_provider: BTreeMap<ProviderId, f64> = BTreeMap::new();
    for d in adjustable {
        *per_provider.entry(d.provider).or_default() += d.volume;
    }
    let mut order: Vec<&ContentDemand> = adjustable.iter().collect();
    order.sort_by(|a, b| {
        per_provider[&b.provider]
            .total_cmp(&per_provider[&a.provider])
            .then(a.provider.cmp(&b.provider))
            .then(b.volume.total_cmp(&a.volume))
            .then(a.consumer.cmp(&b.consumer))
    });
    order
}

pub fn greedy_sort_flow(
    bin: &BinDemand,
    net: &Network,
    config: &GreedyConfig,
) -> Result<GreedyOutcome, AssignmentError> {
    run(bin, net, config, None)
}

/// Like [`greedy_sort_flow`] but starts the adjustable demand from `warm`
/// (typically the previous bin's result). Demands absent from `warm` start
/// from the baseline; present ones are rescaled to the current volume.
pub fn greedy_sort_flow_warm(
    bin: &BinDemand,
    net: &Network,
    config: &GreedyConfig,
    warm: &FlowAssignment,
) -> Result<GreedyOutcome, AssignmentError> {
    run(bin, net, config, Some(warm))
}

struct Subflow<'a> {
    demand: &'a ContentDemand,
    /// In (hops, delay, location) order.
    candidates: Vec<Candidate<'a>>,
    /// Union of the candidates' links, sorted.
    touched: Vec<LinkId>,
    /// Each candidate's path as indices into `touched`.
    local_paths: Vec<Vec<usize>>,
}

fn run(
    bin: &BinDemand,
    net: &Network,
    config: &GreedyConfig,
    warm: Option<&FlowAssignment>,
) -> Result<GreedyOutcome, AssignmentError> {
    if config.max_iterations == 0 {
        return Err(AssignmentError::InvalidConfig("max_iterations must be at least 1".into()));
    }
    let (mut assignment, mut state) = place_fixed(bin, net, &config.baseline)?;

    for d in &bin.adjustable {
        let split = initial_split(net, bin.bin, d, &config.baseline, warm)?;
        for &(location, volume) in &split {
            state.add_path(net.path(location, d.consumer), volume);
        }
        assignment.set_split(d.provider, d.consumer, &split);
    }

    let subflows: Vec<Subflow<'_>> = sort_subflows(&bin.adjustable)
        .into_iter()
        .map(|d| {
            let mut candidates: Vec<Candidate<'_>> = d
                .eligible
                .iter()
                .map(|&i| Candidate {
                    location: i,
                    links: net.path(i, d.consumer),
                    hops: net.hops(i, d.consumer),
                    delay_ms: net.delay(i, d.consumer),
                })
                .collect();
            candidates.sort_by(|a, b| {
                a.hops.cmp(&b.hops).then(a.delay_ms.total_cmp(&b.delay_ms)).then(a.location.cmp(&b.location))
            });
            let mut touched: Vec<LinkId> = candidates.iter().flat_map(|c| c.links.iter().copied()).collect();
            touched.sort();
            touched.dedup();
            let local_paths = candidates
                .iter()
                .map(|c| c.links.iter().map(|l| touched.binary_search(l).expect("touched")).collect())
                .collect();
            Subflow { demand: d, candidates, touched, local_paths }
        })
        .collect();

    let mut history = vec![objective_value(config.objective, net, &assignment, &state)];
    let mut reassignments = 0;
    let mut iterations_used = 0;
    let mut converged = false;
    for _ in 0..config.max_iterations {
        iterations_used += 1;
        let mut changed = false;
        for sub in &subflows {
            if reassign(sub, &mut assignment, &mut state, config.objective) {
                changed = true;
                reassignments += 1;
            }
        }
        history.push(objective_value(config.objective, net, &assignment, &state));
        if !changed {
            converged = true;
            break;
        }
    }

    Ok(GreedyOutcome { assignment, state, iterations_used, converged, objective_history: history, reassignments })
}

fn initial_split(
    net: &Network,
    bin: usize,
    d: &ContentDemand,
    baseline: &BaselinePolicy,
    warm: Option<&FlowAssignment>,
) -> Result<Vec<(NodeId, f64)>, AssignmentError> {
    if let Some(warm) = warm {
        let kept: Vec<(NodeId, f64)> = warm
            .demand_flows(d.provider, d.consumer)
            .filter(|(k, v)| *v > 0.0 && d.eligible.contains(&k.location))
            .map(|(k, v)| (k.location, v))
            .collect();
        let sum: f64 = kept.iter().map(|(_, v)| v).sum();
        if sum > 0.0 {
            return Ok(kept.into_iter().map(|(i, v)| (i, v / sum * d.volume)).collect());
        }
    }
    baseline.split(net, bin, d)
}

/// Lexicographic comparison where components within `slack` (plus a
/// relative rounding margin) tie. `None` when every component ties.
fn lex_verdict(new: &[f64], old: &[f64], slack: f64) -> Option<bool> {
    for (&a, &b) in new.iter().zip(old) {
        let tol = slack + IMPROVE_TOL * a.abs().max(b.abs()).max(1.0);
        if a < b - tol {
            return Some(true);
        }
        if a > b + tol {
            return Some(false);
        }
    }
    None
}

fn strictly_better(new: &[f64], old: &[f64]) -> bool {
    lex_verdict(new, old, 0.0).unwrap_or(false)
}

fn reassign(
    sub: &Subflow<'_>,
    assignment: &mut FlowAssignment,
    state: &mut LinkLoadState,
    objective: Objective,
) -> bool {
    let d = sub.demand;
    if sub.candidates.len() < 2 || d.volume <= 0.0 {
        return false;
    }
    let old: Vec<(usize, f64)> = assignment
        .demand_flows(d.provider, d.consumer)
        .filter_map(|(k, v)| sub.candidates.iter().position(|c| c.location == k.location).map(|c| (c, v)))
        .collect();
    let snapshot: Vec<f64> = sub.touched.iter().map(|&l| state.load(l)).collect();
    let top = sub.touched.iter().map(|&l| state.utilization(l)).fold(0.0, f64::max);
    let floor =
        if objective == Objective::MaxLinkUtilization { (1.0 - BALANCE_BAND) * state.max_utilization() } else { 0.0 };
    for &(c, v) in &old {
        state.add_path(sub.candidates[c].links, -v);
    }
    let new = match objective {
        Objective::MaxLinkUtilization => min_max_fill(state, sub, d.volume, floor),
        Objective::PathLength => vec![(0, d.volume)],
        Objective::PathDelay => {
            let best = (0..sub.candidates.len())
                .min_by(|&a, &b| sub.candidates[a].delay_ms.total_cmp(&sub.candidates[b].delay_ms).then(a.cmp(&b)))
                .expect("nonempty");
            vec![(best, d.volume)]
        }
    };
    for &(c, v) in &new {
        state.add_path(sub.candidates[c].links, v);
    }

    let improved = if objective == Objective::MaxLinkUtilization {
        let sorted_utils = |loads: &mut dyn Iterator<Item = f64>| {
            let mut u: Vec<f64> = loads.zip(&sub.touched).map(|(y, &l)| (y / state.capacity(l)).max(floor)).collect();
            u.sort_by(|a, b| b.total_cmp(a));
            u
        };
        let old_key = sorted_utils(&mut snapshot.iter().copied());
        let new_key = sorted_utils(&mut sub.touched.iter().map(|&l| state.load(l)));
        let no_higher = new_key.first().zip(old_key.first()).is_none_or(|(n, o)| *n <= *o);
        let dominated = new_key.iter().zip(&old_key).all(|(n, o)| *n <= *o + IMPROVE_TOL * o.abs().max(1.0));
        no_higher
            && match lex_verdict(&new_key, &old_key, MIN_GAIN * top) {
                Some(better) => better,
                None => dominated && strictly_better(&path_totals(sub, &new), &path_totals(sub, &old)),
            }
    } else {
        let (mut old_key, mut new_key) = (path_totals(sub, &old), path_totals(sub, &new));
        if objective == Objective::PathDelay {
            old_key.reverse();
            new_key.reverse();
        }
        strictly_better(&new_key, &old_key)
    };

    if improved {
        let mut merged: BTreeMap<NodeId, f64> = BTreeMap::new();
        for &(c, v) in &new {
            *merged.entry(sub.candidates[c].location).or_default() += v;
        }
        let split: Vec<(NodeId, f64)> = merged.into_iter().collect();
        assignment.set_split(d.provider, d.consumer, &split);
        true
    } else {
        for (&l, &y) in sub.touched.iter().zip(&snapshot) {
            state.set_load(l, y);
        }
        false
    }
}

/// Volume-weighted hops and delay of a placement.
fn path_totals(sub: &Subflow<'_>, split: &[(usize, f64)]) -> [f64; 2] {
    let hops = split.iter().map(|&(c, v)| v * sub.candidates[c].hops as f64).sum();
    let delay = split.iter().map(|&(c, v)| v * sub.candidates[c].delay_ms).sum();
    [hops, delay]
}

/// Fills candidates in tie-break order up to utilization `level` on a local
/// copy of the touched links. Returns the split and the volume that did not
/// fit.
fn fill_to_level(sub: &Subflow<'_>, loads: &[f64], caps: &[f64], volume: f64, level: f64) -> (Vec<(usize, f64)>, f64) {
    let mut loads = loads.to_vec();
    let mut remaining = volume;
    let mut split = Vec::new();
    for (c, path) in sub.local_paths.iter().enumerate() {
        if remaining <= 0.0 {
            break;
        }
        let room = path.iter().map(|&e| level * caps[e] - loads[e]).fold(f64::INFINITY, f64::min);
        if room > 0.0 {
            let put = remaining.min(room);
            for &e in path {
                loads[e] += put;
            }
            split.push((c, put));
            remaining -= put;
        }
    }
    (split, remaining)
}

/// Split of `volume` that (approximately) minimizes the highest utilization
/// over the sub-flow's links, never aiming below `floor`: bisection on the
/// level, feasibility by sequential fill in tie-break order.
fn min_max_fill(state: &LinkLoadState, sub: &Subflow<'_>, volume: f64, floor: f64) -> Vec<(usize, f64)> {
    let loads: Vec<f64> = sub.touched.iter().map(|&l| state.load(l)).collect();
    let caps: Vec<f64> = sub.touched.iter().map(|&l| state.capacity(l)).collect();
    let mut lo = sub
        .local_paths
        .iter()
        .map(|path| path.iter().map(|&e| loads[e] / caps[e]).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
        .max(floor);
    let mut hi = loads.iter().zip(&caps).map(|(y, c)| (y + volume) / c).fold(0.0, f64::max);
    let slack = volume * 1e-12;
    let (split, remaining) = fill_to_level(sub, &loads, &caps, volume, lo);
    if remaining <= slack {
        return finish(split, remaining);
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if fill_to_level(sub, &loads, &caps, volume, mid).1 <= slack {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1e-300) {
            break;
        }
    }
    let (split, remaining) = fill_to_level(sub, &loads, &caps, volume, hi);
    finish(split, remaining)
}

/// Rounding leftovers go to the first path used.
fn finish(mut split: Vec<(usize, f64)>, remaining: f64) -> Vec<(usize, f64)> {
    if remaining > 0.0 {
        match split.first_mut() {
            Some(first) => first.1 += remaining,
            None => split.push((0, remaining)),
        }
    }
    split
}
