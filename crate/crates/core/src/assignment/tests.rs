use proptest::prelude::*;

use super::greedy::{greedy_sort_flow, objective_value, sort_subflows};
use super::online::{online_assign_bin, requests_from_demands};
use super::*;
use crate::demand::{BinDemand, ContentDemand, FixedDemands, OdDemand, ProviderId};
use crate::instances::{random_instance, two_bottleneck, RandomSpec};
use crate::topology::{Network, NetworkTopology, NodeId};

fn net(json: &str) -> Network {
    Network::new(NetworkTopology::from_json(json).unwrap()).unwrap()
}

fn demand(provider: u32, consumer: usize, volume: f64, eligible: &[usize]) -> ContentDemand {
    ContentDemand {
        provider: ProviderId(provider),
        consumer: NodeId(consumer),
        volume,
        eligible: eligible.iter().copied().map(NodeId).collect(),
    }
}

fn bin_of(adjustable: Vec<ContentDemand>, background: Vec<(usize, usize, f64)>) -> BinDemand {
    BinDemand {
        bin: 0,
        adjustable,
        fixed: FixedDemands {
            content: vec![],
            background: background
                .into_iter()
                .map(|(o, d, volume)| OdDemand { origin: NodeId(o), destination: NodeId(d), volume })
                .collect(),
        },
    }
}

/// Servers 0 and 1 each reach consumer 2 over a direct capacity-10 link.
fn fork() -> Network {
    net(r#"{"symmetric": true,
            "nodes": [{"id":0},{"id":1},{"id":2}],
            "links": [{"src":0,"dst":2,"capacity":10},
                      {"src":1,"dst":2,"capacity":10}]}"#)
}

/// Line 0-1-2-3-4 plus a shortcut-free branch; node 0 is 4 hops from 4,
/// node 2 is 2 hops from 4, node 1 is 3 hops from 4.
fn line5() -> Network {
    net(r#"{"symmetric": true,
            "nodes": [{"id":0},{"id":1},{"id":2},{"id":3},{"id":4}],
            "links": [{"src":0,"dst":1,"capacity":10},
                      {"src":1,"dst":2,"capacity":10},
                      {"src":2,"dst":3,"capacity":10},
                      {"src":3,"dst":4,"capacity":10}]}"#)
}

fn assert_consistent(net: &Network, assignment: &FlowAssignment, state: &LinkLoadState, tol: f64) {
    let fresh = LinkLoadState::from_assignment(net, assignment);
    let diff = fresh.max_load_difference(state);
    assert!(diff <= tol, "incremental state drifted by {diff}");
}

#[test]
fn single_location_is_always_chosen() {
    let net = fork();
    let bin = bin_of(vec![demand(0, 2, 3.0, &[1])], vec![(1, 2, 9.0)]);
    for objective in Objective::ALL {
        let (a, _) = online_assign_bin(&bin, &net, &BaselinePolicy::NearestByHops, objective, 10, None).unwrap();
        assert!((a.get(ProviderId(0), NodeId(2), NodeId(1)) - 3.0).abs() < 1e-12);
        let g = greedy_sort_flow(&bin, &net, &GreedyConfig::new(objective)).unwrap();
        assert_eq!(g.assignment.flow_count(), 1);
    }
    for policy in [BaselinePolicy::NearestByHops, BaselinePolicy::VolumeProportionalRandom { seed: 4 }] {
        let (a, _) = baseline_assign(&bin, &net, &policy).unwrap();
        assert_eq!(a.get(ProviderId(0), NodeId(2), NodeId(1)), 3.0);
    }
}

#[test]
fn lower_bottleneck_wins_under_max_utilization() {
    let net = fork();
    // link 0->2 at 0.5, link 1->2 at 0.2
    let bin = bin_of(vec![demand(0, 2, 0.1, &[0, 1])], vec![(0, 2, 5.0), (1, 2, 2.0)]);
    let (a, state) =
        online_assign_bin(&bin, &net, &BaselinePolicy::NearestByHops, Objective::MaxLinkUtilization, 1, None).unwrap();
    assert_eq!(a.get(ProviderId(0), NodeId(2), NodeId(1)), 0.1);
    assert_eq!(a.get(ProviderId(0), NodeId(2), NodeId(0)), 0.0);
    assert_consistent(&net, &a, &state, 1e-12);
}

#[test]
fn empty_eligible_set_is_an_error() {
    let net = fork();
    let requests = vec![Request { arrival: 0, provider: ProviderId(3), consumer: NodeId(2), volume: 1.0 }];
    let initial = (FlowAssignment::new(), LinkLoadState::empty(&net));
    let err =
        online_greedy_assign(&requests, &net, &EligibleSets::default(), initial, Objective::PathLength).unwrap_err();
    assert!(matches!(err, AssignmentError::EmptyEligibleSet { .. }));
}

#[test]
fn nonpositive_quantum_is_an_error() {
    let net = fork();
    let mut sets = EligibleSets::default();
    sets.insert(ProviderId(0), NodeId(2), vec![NodeId(0)]);
    let requests = vec![Request { arrival: 7, provider: ProviderId(0), consumer: NodeId(2), volume: 0.0 }];
    let initial = (FlowAssignment::new(), LinkLoadState::empty(&net));
    let err = online_greedy_assign(&requests, &net, &sets, initial, Objective::PathLength).unwrap_err();
    assert!(matches!(err, AssignmentError::InvalidQuantum { arrival: 7, .. }));
}

fn bottleneck_loads(inst: &crate::instances::Instance, state: &LinkLoadState) -> (f64, f64) {
    let topo = inst.network.topology();
    let find = |s: usize, d: usize| topo.links().iter().find(|l| l.src == NodeId(s) && l.dst == NodeId(d)).unwrap().id;
    (state.load(find(0, 2)), state.load(find(1, 2)))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn two_bottleneck_unit_stream_balances_in_every_order() {
    let inst = two_bottleneck();
    let unit = requests_from_demands(&inst.bin.adjustable, 1, None);
    assert_eq!(unit.len(), 6);

    // brute force over all 2^6 whole-request placements
    let best = (0u32..64)
        .map(|mask| {
            let x = mask.count_ones() as f64;
            x.max(6.0 - x)
        })
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, 3.0);

    let eligible = EligibleSets::from_demands(&inst.bin.adjustable);
    let orders = permutations(6);
    assert_eq!(orders.len(), 720);
    for order in orders {
        let requests: Vec<Request> =
            order.iter().enumerate().map(|(i, &r)| Request { arrival: i, ..unit[r] }).collect();
        let initial = place_fixed(&inst.bin, &inst.network, &BaselinePolicy::NearestByHops).unwrap();
        let (a, state) =
            online_greedy_assign(&requests, &inst.network, &eligible, initial, Objective::MaxLinkUtilization).unwrap();
        assert_eq!(bottleneck_loads(&inst, &state), (3.0, 3.0), "order {order:?}");
        a.check_demands(&inst.bin.adjustable).unwrap();
    }
}

#[test]
fn candidate_scores() {
    let net = net(r#"{"symmetric": true,
            "nodes": [{"id":0},{"id":1},{"id":2}],
            "links": [{"src":0,"dst":1,"capacity":10},
                      {"src":1,"dst":2,"capacity":10}]}"#);
    let mut state = LinkLoadState::empty(&net);
    let path = net.path(NodeId(0), NodeId(2));
    state.add_path(&path[..1], 4.0);
    state.add_path(&path[1..], 8.0);
    let cand = Candidate { location: NodeId(0), links: path, hops: 2, delay_ms: 3.0 };
    let s = evaluate_candidate(&state, &cand, 1.0, Objective::MaxLinkUtilization);
    assert!((s.value - 0.9).abs() < 1e-12);
    assert_eq!(evaluate_candidate(&state, &cand, 1.0, Objective::PathLength).value, 2.0);
    assert_eq!(evaluate_candidate(&state, &cand, 1.0, Objective::PathDelay).value, 3.0);

    let empty = Candidate { location: NodeId(2), links: &[], hops: 0, delay_ms: 0.0 };
    for objective in Objective::ALL {
        assert_eq!(evaluate_candidate(&state, &empty, 5.0, objective).value, 0.0);
    }
}

#[test]
fn path_length_prefers_fewer_hops() {
    let net = line5();
    // locations 1 (3 hops) and 2 (2 hops) toward consumer 4; load the 2-hop path
    let bin = bin_of(vec![demand(0, 4, 1.0, &[1, 2])], vec![(2, 4, 9.0)]);
    let (a, _) = online_assign_bin(&bin, &net, &BaselinePolicy::NearestByHops, Objective::PathLength, 4, None).unwrap();
    assert_eq!(a.get(ProviderId(0), NodeId(4), NodeId(2)), 1.0);
    let g = greedy_sort_flow(&bin, &net, &GreedyConfig::new(Objective::PathLength)).unwrap();
    assert_eq!(g.assignment.get(ProviderId(0), NodeId(4), NodeId(2)), 1.0);
}

#[test]
fn score_ties_fall_back_to_hops_delay_then_id() {
    let a = Score { value: 0.5, hops: 2, delay_ms: 1.0, location: NodeId(9) };
    let b = Score { value: 0.5 + 1e-15, hops: 3, delay_ms: 0.0, location: NodeId(1) };
    assert!(a.compare(&b).is_lt());
    let c = Score { hops: 2, delay_ms: 1.0, location: NodeId(3), ..b };
    assert!(c.compare(&a).is_lt());
    let d = Score { value: 0.4, ..b };
    assert!(d.compare(&a).is_lt());
}

#[test]
fn nearest_takes_the_closer_location() {
    let net = line5();
    let bin = bin_of(vec![demand(0, 4, 5.0, &[0, 2])], vec![]);
    let (a, state) = baseline_assign(&bin, &net, &BaselinePolicy::NearestByHops).unwrap();
    assert_eq!(a.get(ProviderId(0), NodeId(4), NodeId(2)), 5.0);
    assert_eq!(a.get(ProviderId(0), NodeId(4), NodeId(0)), 0.0);
    assert_eq!(state.total_carried(), 10.0);
}

#[test]
fn random_baseline_is_seeded() {
    let inst = random_instance(11, RandomSpec::default());
    let policy = BaselinePolicy::VolumeProportionalRandom { seed: 99 };
    let first = baseline_assign(&inst.bin, &inst.network, &policy).unwrap();
    let second = baseline_assign(&inst.bin, &inst.network, &policy).unwrap();
    assert_eq!(first.0, second.0);
    assert_eq!(first.1, second.1);
    first.0.check_demands(inst.bin.all_content()).unwrap();
    let other =
        baseline_assign(&inst.bin, &inst.network, &BaselinePolicy::VolumeProportionalRandom { seed: 100 }).unwrap();
    assert_ne!(first.0, other.0);
}

#[test]
fn greedy_balances_two_bottlenecks() {
    let inst = two_bottleneck();
    let out = greedy_sort_flow(&inst.bin, &inst.network, &GreedyConfig::new(Objective::MaxLinkUtilization)).unwrap();
    let (x, y) = bottleneck_loads(&inst, &out.state);
    assert!((x - 3.0).abs() < 1e-9 && (y - 3.0).abs() < 1e-9, "{x} {y}");
    assert!((out.state.max_utilization() - 0.5).abs() < 1e-12);
    assert!(out.converged);
    assert!(out.iterations_used <= 3, "{} iterations", out.iterations_used);
    assert_eq!(out.objective_history[0], 1.0);
    out.assignment.check_demands(&inst.bin.adjustable).unwrap();
}

#[test]
fn greedy_conserves_volume_on_symmetric_tie() {
    let net = fork();
    let bin = bin_of(vec![demand(0, 2, 4.0, &[0, 1])], vec![]);
    let out = greedy_sort_flow(&bin, &net, &GreedyConfig::new(Objective::MaxLinkUtilization)).unwrap();
    out.assignment.check_demands(&bin.adjustable).unwrap();
    assert!((out.assignment.content_volume() - 4.0).abs() < 1e-12);
    assert!((out.state.max_utilization() - 0.2).abs() < 1e-9);
}

#[test]
fn greedy_rejects_zero_iterations() {
    let inst = two_bottleneck();
    let config = GreedyConfig { max_iterations: 0, ..GreedyConfig::new(Objective::PathLength) };
    assert!(matches!(greedy_sort_flow(&inst.bin, &inst.network, &config), Err(AssignmentError::InvalidConfig(_))));
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let inst = two_bottleneck();
    let config = GreedyConfig { max_iterations: 1, ..GreedyConfig::new(Objective::MaxLinkUtilization) };
    let out = greedy_sort_flow(&inst.bin, &inst.network, &config).unwrap();
    assert_eq!(out.iterations_used, 1);
    assert!(!out.converged);
    assert_eq!(out.objective_history.len(), 2);
}

#[test]
fn warm_start_from_optimum_converges_immediately() {
    let inst = two_bottleneck();
    let config = GreedyConfig::new(Objective::MaxLinkUtilization);
    let cold = greedy_sort_flow(&inst.bin, &inst.network, &config).unwrap();
    let warm = greedy::greedy_sort_flow_warm(&inst.bin, &inst.network, &config, &cold.assignment).unwrap();
    assert_eq!(warm.iterations_used, 1);
    assert_eq!(warm.reassignments, 0);
    assert!((warm.state.max_utilization() - 0.5).abs() < 1e-12);
}

#[test]
fn subflows_sorted_by_provider_then_consumer_volume() {
    let adjustable = vec![
        demand(0, 1, 1.0, &[0, 2]),
        demand(1, 1, 5.0, &[0, 2]),
        demand(0, 2, 3.0, &[0, 1]),
        demand(1, 3, 1.0, &[0, 2]),
        demand(0, 3, 3.0, &[0, 1]),
    ];
    let order: Vec<(u32, usize)> =
        sort_subflows(&adjustable).into_iter().map(|d| (d.provider.0, d.consumer.0)).collect();
    assert_eq!(order, vec![(0, 2), (0, 3), (0, 1), (1, 1), (1, 3)]);
}

#[test]
fn restriction_violation_is_detected() {
    let d = demand(0, 2, 1.0, &[0]);
    let mut a = FlowAssignment::new();
    a.add(ProviderId(0), NodeId(2), NodeId(1), 1.0);
    assert!(matches!(a.check_demands([&d]), Err(AssignmentError::Restriction { .. })));
    let mut b = FlowAssignment::new();
    b.add(ProviderId(0), NodeId(2), NodeId(0), 0.5);
    assert!(matches!(b.check_demands([&d]), Err(AssignmentError::DemandNotSatisfied { .. })));
}

#[test]
fn csv_dump_is_sorted() {
    let mut a = FlowAssignment::new();
    a.add(ProviderId(1), NodeId(0), NodeId(2), 1.5);
    a.add(ProviderId(0), NodeId(3), NodeId(1), 2.0);
    a.add(ProviderId(0), NodeId(3), NodeId(0), 0.25);
    let mut b = FlowAssignment::new();
    b.add(ProviderId(0), NodeId(0), NodeId(0), 1.0);
    let mut out = Vec::new();
    write_assignment_csv(&mut out, &[(1, &b), (0, &a)]).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text, "bin,provider,consumer,location,volume\n0,0,3,0,0.25\n0,0,3,1,2\n0,1,0,2,1.5\n1,0,0,0,1\n");
}

#[test]
fn random_requests_shuffle_is_seeded() {
    let inst = random_instance(5, RandomSpec::default());
    let a = requests_from_demands(&inst.bin.adjustable, 3, Some(1));
    let b = requests_from_demands(&inst.bin.adjustable, 3, Some(1));
    let plain = requests_from_demands(&inst.bin.adjustable, 3, None);
    assert_eq!(a, b);
    assert_ne!(a, plain);
    assert!(a.iter().enumerate().all(|(i, r)| r.arrival == i));
    let total: f64 = a.iter().map(|r| r.volume).sum();
    assert!((total - inst.bin.adjustable_total()).abs() < 1e-9);
}

fn objective_strategy() -> impl Strategy<Value = Objective> {
    prop_oneof![Just(Objective::MaxLinkUtilization), Just(Objective::PathLength), Just(Objective::PathDelay)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engines_satisfy_demand_and_stay_consistent(seed in any::<u64>(), objective in objective_strategy(), q in 1usize..20) {
        let inst = random_instance(seed, RandomSpec::default());
        let policy = BaselinePolicy::VolumeProportionalRandom { seed };

        let (a, s) = online_assign_bin(&inst.bin, &inst.network, &policy, objective, q, Some(seed)).unwrap();
        a.check_demands(inst.bin.all_content()).unwrap();
        assert_consistent(&inst.network, &a, &s, 1e-9);

        let config = GreedyConfig { baseline: policy, ..GreedyConfig::new(objective) };
        let g = greedy_sort_flow(&inst.bin, &inst.network, &config).unwrap();
        g.assignment.check_demands(inst.bin.all_content()).unwrap();
        assert_consistent(&inst.network, &g.assignment, &g.state, 1e-9);
        prop_assert!(g.assignment.flows().all(|(_, v)| v >= 0.0));
    }

    #[test]
    fn greedy_objective_never_increases(seed in any::<u64>(), objective in objective_strategy()) {
        let inst = random_instance(seed, RandomSpec { nodes: 7, ..RandomSpec::default() });
        let g = greedy_sort_flow(&inst.bin, &inst.network, &GreedyConfig::new(objective)).unwrap();
        for w in g.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", g.objective_history);
        }
        let final_value = objective_value(objective, &inst.network, &g.assignment, &g.state);
        prop_assert!((final_value - g.objective_history.last().unwrap()).abs() <= 1e-9 * final_value.max(1.0));
        prop_assert!(g.iterations_used >= 1 && g.iterations_used <= 10);
    }

    #[test]
    fn fixed_point_admits_no_improving_move(seed in any::<u64>()) {
        let inst = random_instance(seed, RandomSpec { nodes: 6, ..RandomSpec::default() });
        let config = GreedyConfig { max_iterations: 50, ..GreedyConfig::new(Objective::MaxLinkUtilization) };
        let g = greedy_sort_flow(&inst.bin, &inst.network, &config).unwrap();
        prop_assume!(g.converged);
        let again = greedy::greedy_sort_flow_warm(&inst.bin, &inst.network, &config, &g.assignment).unwrap();
        prop_assert_eq!(again.reassignments, 0);
    }
}
