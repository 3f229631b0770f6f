//! Small reproducible problem instances for tests, benchmarks and demos.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::demand::{split_adjustable, BinDemand, ContentDemandMatrix, ContentProvider, DemandBin, ProviderId};
use crate::topology::{Link, LinkId, Network, NetworkTopology, Node, NodeId};

/// A network, a one-bin demand matrix and that bin with every provider
/// participating.
#[derive(Debug, Clone)]
pub struct Instance {
    pub network: Network,
    pub matrix: ContentDemandMatrix,
    pub bin: BinDemand,
}

impl Instance {
    fn assemble(topology: NetworkTopology, matrix_of: impl FnOnce(&NetworkTopology) -> ContentDemandMatrix) -> Self {
        let matrix = matrix_of(&topology);
        let network = Network::new(topology).expect("instance topology routes");
        let all: BTreeSet<ProviderId> = matrix.providers().map(|p| p.id).collect();
        let bin = split_adjustable(&matrix, 0, &all).expect("bin 0 exists");
        Self { network, matrix, bin }
    }
}

fn build_topology(labels: &[(&str, bool)], arcs: &[(usize, usize, f64, f64, f64)]) -> NetworkTopology {
    let nodes = labels
        .iter()
        .enumerate()
        .map(|(i, &(label, peering))| Node { id: NodeId(i), label: label.into(), is_peering_point: peering })
        .collect();
    let links = arcs
        .iter()
        .enumerate()
        .map(|(e, &(s, d, capacity, weight, delay_ms))| Link {
            id: LinkId(e),
            src: NodeId(s),
            dst: NodeId(d),
            capacity,
            weight,
            delay_ms,
        })
        .collect();
    NetworkTopology::new(nodes, links).expect("valid instance topology")
}

/// Two server sites X (node 0) and Y (node 1) reach a hub H (node 2) over
/// capacity-6 links; the hub feeds consumers C1..C3 (nodes 3-5) over
/// capacity-100 links. Providers 0 and 1 are both hosted at X and Y and each
/// send 1 unit to every consumer.
///
/// Nearest-by-hops sends all 6 units through X (utilization 1.0); the even
/// split reaches 0.5, which is optimal.
pub fn two_bottleneck() -> Instance {
    let labels = [("X", true), ("Y", true), ("H", false), ("C1", false), ("C2", false), ("C3", false)];
    let mut arcs = vec![(0, 2, 6.0, 1.0, 1.0), (2, 0, 6.0, 1.0, 1.0), (1, 2, 6.0, 1.0, 1.0), (2, 1, 6.0, 1.0, 1.0)];
    for c in 3..6 {
        arcs.push((2, c, 100.0, 1.0, 1.0));
        arcs.push((c, 2, 100.0, 1.0, 1.0));
    }
    let topology = build_topology(&labels, &arcs);
    Instance::assemble(topology, |topo| {
        let providers = (0..2)
            .map(|k| ContentProvider {
                id: ProviderId(k),
                name: format!("cp{k}"),
                locations_by_bin: vec![vec![NodeId(0), NodeId(1)]],
            })
            .collect();
        let content = (0..2).flat_map(|k| (3..6).map(move |j| ((ProviderId(k), NodeId(j)), 1.0))).collect();
        let bins = vec![DemandBin { content, background: BTreeMap::new() }];
        ContentDemandMatrix::new(10.0, providers, bins, topo).expect("valid instance demand")
    })
}

/// Parameters of [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub nodes: usize,
    /// Extra bidirectional chords on top of the ring.
    pub chords: usize,
    pub providers: usize,
    pub max_locations: usize,
    /// Background OD pairs with random volume.
    pub background_pairs: usize,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self { nodes: 8, chords: 4, providers: 3, max_locations: 3, background_pairs: 6 }
    }
}

/// Seeded random instance: a bidirectional ring plus chords with capacities
/// in [5, 20] and integer weights in [1, 5]; providers with 2 to
/// `max_locations` locations; every (provider, consumer) pair has demand in
/// [0.5, 3] with probability 0.7.
pub fn random_instance(seed: u64, spec: RandomSpec) -> Instance {
    assert!(spec.nodes >= 3, "need at least three nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.nodes;

    let mut pairs: BTreeSet<(usize, usize)> = (0..n).map(|i| (i.min((i + 1) % n), i.max((i + 1) % n))).collect();
    let mut attempts = 0;
    while pairs.len() < n + spec.chords && attempts < 100 * (spec.chords + 1) {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
        attempts += 1;
    }
    let mut arcs = Vec::new();
    for &(a, b) in &pairs {
        let weight = rng.gen_range(1..=5) as f64;
        for (s, d) in [(a, b), (b, a)] {
            arcs.push((s, d, rng.gen_range(5.0..=20.0), weight, weight));
        }
    }
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let labels: Vec<(&str, bool)> = names.iter().map(|s| (s.as_str(), true)).collect();
    let topology = build_topology(&labels, &arcs);

    Instance::assemble(topology, |topo| {
        let upper = spec.max_locations.clamp(2, n);
        let providers: Vec<ContentProvider> = (0..spec.providers)
            .map(|k| {
                let count = rng.gen_range(2..=upper);
                let mut locations: Vec<NodeId> = sample(&mut rng, n, count).into_iter().map(NodeId).collect();
                locations.sort();
                ContentProvider { id: ProviderId(k as u32), name: format!("cp{k}"), locations_by_bin: vec![locations] }
            })
            .collect();
        let mut content = BTreeMap::new();
        for p in &providers {
            for j in 0..n {
                if rng.gen_bool(0.7) {
                    content.insert((p.id, NodeId(j)), rng.gen_range(0.5..=3.0));
                }
            }
        }
        let mut background = BTreeMap::new();
        for _ in 0..spec.background_pairs {
            let o = rng.gen_range(0..n);
            let d = rng.gen_range(0..n);
            if o != d {
                background.insert((NodeId(o), NodeId(d)), rng.gen_range(0.0..=1.0));
            }
        }
        ContentDemandMatrix::new(10.0, providers, vec![DemandBin { content, background }], topo)
            .expect("valid instance demand")
    })
}
