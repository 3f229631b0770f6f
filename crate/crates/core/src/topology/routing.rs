use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{LinkId, NetworkTopology, NodeId, TopologyError};

/// Relative tolerance used when comparing accumulated path weights.
const WEIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OdPair {
    pub origin: NodeId,
    pub destination: NodeId,
}

impl OdPair {
    pub fn new(origin: NodeId, destination: NodeId) -> Self {
        Self { origin, destination }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathProperties {
    pub od: OdPair,
    pub hop_count: usize,
    pub delay_ms: f64,
    /// Minimum capacity along the path, `+inf` for the empty path.
    pub bottleneck_capacity: f64,
}

/// Single-path routing for every OD pair: the boolean matrix A together with
/// the ordered link list of each routed path.
///
/// Among all minimum-weight paths the one with the lexicographically smallest
/// node-id sequence is selected, so the result is a pure function of the
/// topology and every prefix of a routed path is itself a routed path.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrix {
    node_count: usize,
    link_count: usize,
    paths: Vec<Vec<LinkId>>,
    weights: Vec<f64>,
    delays: Vec<f64>,
    on_link: Vec<Vec<OdPair>>,
}

#[derive(PartialEq)]
struct Visit(f64, usize);

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(topo: &NetworkTopology, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; topo.node_count()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Visit(0.0, source));
    while let Some(Visit(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &l in topo.out_links(NodeId(u)) {
            let link = topo.link(l);
            let nd = d + link.weight;
            if nd < dist[link.dst.0] {
                dist[link.dst.0] = nd;
                heap.push(Visit(nd, link.dst.0));
            }
        }
    }
    dist
}

fn same_weight(a: f64, b: f64) -> bool {
    (a - b).abs() <= WEIGHT_EPS * a.abs().max(b.abs()).max(1.0)
}

impl RoutingMatrix {
    pub fn compute(topo: &NetworkTopology) -> Result<Self, TopologyError> {
        let n = topo.node_count();
        let dist: Vec<Vec<f64>> = (0..n).map(|s| dijkstra(topo, s)).collect();

        // Cheapest link per ordered node pair (lowest id among equal weights),
        // with neighbours listed in ascending id order.
        let mut hops_out: Vec<Vec<(usize, LinkId, f64)>> = vec![Vec::new(); n];
        for u in 0..n {
            let mut best: Vec<(usize, LinkId, f64)> = Vec::new();
            for &l in topo.out_links(NodeId(u)) {
                let link = topo.link(l);
                match best.iter_mut().find(|(v, _, _)| *v == link.dst.0) {
                    Some(entry) => {
                        if link.weight < entry.2 || (link.weight == entry.2 && l < entry.1) {
                            *entry = (link.dst.0, l, link.weight);
                        }
                    }
                    None => best.push((link.dst.0, l, link.weight)),
                }
            }
            best.sort_by_key(|(v, _, _)| *v);
            hops_out[u] = best;
        }

        let zero_weights = topo.has_zero_weight();
        let mut paths = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        let mut delays = Vec::with_capacity(n * n);
        let mut on_link = vec![Vec::new(); topo.link_count()];
        for o in 0..n {
            for d in 0..n {
                let od = OdPair::new(NodeId(o), NodeId(d));
                if !dist[o][d].is_finite() {
                    return Err(TopologyError::Unreachable { origin: od.origin, destination: od.destination });
                }
                let path = lexicographic_path(&dist, &hops_out, o, d, zero_weights);
                let delay = path.iter().map(|&l| topo.link(l).delay_ms).sum();
                for &l in &path {
                    on_link[l.0].push(od);
                }
                weights.push(dist[o][d]);
                delays.push(delay);
                paths.push(path);
            }
        }
        Ok(Self { node_count: n, link_count: topo.link_count(), paths, weights, delays, on_link })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn link_count(&self) -> usize {
        self.link_count
    }

    fn index(&self, origin: NodeId, destination: NodeId) -> usize {
        origin.0 * self.node_count + destination.0
    }

    fn check(&self, origin: NodeId, destination: NodeId) -> Result<usize, TopologyError> {
        if origin.0 < self.node_count && destination.0 < self.node_count {
            Ok(self.index(origin, destination))
        } else {
            Err(TopologyError::UnknownOd { origin, destination })
        }
    }

    /// Unchecked path lookup.
    pub fn path(&self, origin: NodeId, destination: NodeId) -> &[LinkId] {
        &self.paths[self.index(origin, destination)]
    }

    pub fn delay(&self, origin: NodeId, destination: NodeId) -> f64 {
        self.delays[self.index(origin, destination)]
    }

    /// Total routing weight of the routed path.
    pub fn weight(&self, origin: NodeId, destination: NodeId) -> f64 {
        self.weights[self.index(origin, destination)]
    }

    pub fn links_on_path(&self, origin: NodeId, destination: NodeId) -> Result<&[LinkId], TopologyError> {
        let i = self.check(origin, destination)?;
        Ok(&self.paths[i])
    }

    /// The incidence predicate A\[m\]\[l\].
    pub fn traverses(&self, od: OdPair, link: LinkId) -> bool {
        self.check(od.origin, od.destination).map(|i| self.paths[i].contains(&link)).unwrap_or(false)
    }

    /// OD pairs whose routed path uses `link`, in (origin, destination) order.
    pub fn ods_on_link(&self, link: LinkId) -> &[OdPair] {
        &self.on_link[link.0]
    }

    pub fn path_properties(
        &self,
        topo: &NetworkTopology,
        origin: NodeId,
        destination: NodeId,
    ) -> Result<PathProperties, TopologyError> {
        let i = self.check(origin, destination)?;
        let path = &self.paths[i];
        Ok(PathProperties {
            od: OdPair::new(origin, destination),
            hop_count: path.len(),
            delay_ms: self.delays[i],
            bottleneck_capacity: path.iter().map(|&l| topo.link(l).capacity).fold(f64::INFINITY, f64::min),
        })
    }

    /// Node sequence of the routed path, starting at `origin`.
    pub fn node_sequence(&self, topo: &NetworkTopology, origin: NodeId, destination: NodeId) -> Vec<NodeId> {
        let mut nodes = vec![origin];
        nodes.extend(self.path(origin, destination).iter().map(|&l| topo.link(l).dst));
        nodes
    }
}

/// Walks from `o` towards `d`, always stepping to the smallest-id neighbour
/// that still lies on some minimum-weight `o -> d` path.
fn lexicographic_path(
    dist: &[Vec<f64>],
    hops_out: &[Vec<(usize, LinkId, f64)>],
    o: usize,
    d: usize,
    zero_weights: bool,
) -> Vec<LinkId> {
    let target = dist[o][d];
    let n = dist.len();
    let mut visited = vec![false; n];
    let mut path = Vec::new();
    let mut u = o;
    visited[o] = true;
    while u != d {
        let next = hops_out[u].iter().find(|&&(v, _, w)| {
            !visited[v]
                && same_weight(dist[o][u] + w, dist[o][v])
                && same_weight(dist[o][v] + dist[v][d], target)
                && (!zero_weights || tight_reachable(dist, hops_out, o, v, d, &visited))
        });
        let &(v, l, _) = next.expect("a tight successor exists on every shortest path");
        path.push(l);
        visited[v] = true;
        u = v;
    }
    path
}

/// With zero-weight links the tight subgraph may contain cycles, so check that
/// `d` is still reachable from `from` through tight links without revisiting
/// the nodes already on the path.
fn tight_reachable(
    dist: &[Vec<f64>],
    hops_out: &[Vec<(usize, LinkId, f64)>],
    o: usize,
    from: usize,
    d: usize,
    visited: &[bool],
) -> bool {
    let target = dist[o][d];
    let mut seen = visited.to_vec();
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(u) = stack.pop() {
        if u == d {
            return true;
        }
        for &(v, _, w) in &hops_out[u] {
            if !seen[v] && same_weight(dist[o][u] + w, dist[o][v]) && same_weight(dist[o][v] + dist[v][d], target) {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{abilene, Network};

    fn build(doc: &str) -> (NetworkTopology, RoutingMatrix) {
        let topo = NetworkTopology::from_json(doc).unwrap();
        let routing = RoutingMatrix::compute(&topo).unwrap();
        (topo, routing)
    }

    fn line() -> (NetworkTopology, RoutingMatrix) {
        build(
            r#"{"symmetric": true, "nodes": [{"id":0},{"id":1},{"id":2}],
                "links": [{"src":0,"dst":1,"capacity":10,"delay_ms":2},
                          {"src":1,"dst":2,"capacity":5,"delay_ms":3}]}"#,
        )
    }

    fn link_between(topo: &NetworkTopology, a: usize, b: usize) -> LinkId {
        topo.links().iter().find(|l| l.src.0 == a && l.dst.0 == b).unwrap().id
    }

    #[test]
    fn triangle_uses_direct_link() {
        let (topo, routing) = build(crate::topology::tests::triangle_json());
        let props = routing.path_properties(&topo, NodeId(0), NodeId(1)).unwrap();
        assert_eq!(props.hop_count, 1);
        assert_eq!(routing.path(NodeId(0), NodeId(1)), &[link_between(&topo, 0, 1)]);
    }

    #[test]
    fn line_routes_through_middle() {
        let (topo, routing) = line();
        let links = routing.links_on_path(NodeId(0), NodeId(2)).unwrap();
        assert_eq!(links, &[link_between(&topo, 0, 1), link_between(&topo, 1, 2)]);
        let props = routing.path_properties(&topo, NodeId(0), NodeId(2)).unwrap();
        assert_eq!(props.hop_count, 2);
        assert_eq!(props.delay_ms, 5.0);
        assert_eq!(props.bottleneck_capacity, 5.0);
    }

    #[test]
    fn self_pair_is_empty() {
        let (topo, routing) = line();
        let props = routing.path_properties(&topo, NodeId(1), NodeId(1)).unwrap();
        assert_eq!(props.hop_count, 0);
        assert_eq!(props.delay_ms, 0.0);
        assert!(routing.links_on_path(NodeId(1), NodeId(1)).unwrap().is_empty());
    }

    #[test]
    fn unknown_od_is_an_error() {
        let (topo, routing) = line();
        assert!(matches!(routing.path_properties(&topo, NodeId(0), NodeId(7)), Err(TopologyError::UnknownOd { .. })));
        assert!(routing.links_on_path(NodeId(9), NodeId(0)).is_err());
    }

    #[test]
    fn square_tie_breaks_to_lower_neighbour() {
        // Both 0-1-2 and 0-3-2 weigh 2; node sequence [0,1,2] < [0,3,2].
        let (topo, routing) = build(
            r#"{"symmetric": true, "nodes": [{"id":0},{"id":1},{"id":2},{"id":3}],
                "links": [{"src":0,"dst":3,"capacity":1},{"src":3,"dst":2,"capacity":1},
                          {"src":0,"dst":1,"capacity":1},{"src":1,"dst":2,"capacity":1}]}"#,
        );
        assert_eq!(routing.node_sequence(&topo, NodeId(0), NodeId(2)), vec![NodeId(0), NodeId(1), NodeId(2)]);
        let links = routing.links_on_path(NodeId(0), NodeId(2)).unwrap();
        assert_eq!(links, &[link_between(&topo, 0, 1), link_between(&topo, 1, 2)]);
        let via_three = link_between(&topo, 0, 3);
        assert!(!routing.traverses(OdPair::new(NodeId(0), NodeId(2)), via_three));
    }

    #[test]
    fn weights_override_hop_count() {
        let (topo, routing) = build(
            r#"{"symmetric": true, "nodes": [{"id":0},{"id":1},{"id":2}],
                "links": [{"src":0,"dst":2,"capacity":1,"weight":5},
                          {"src":0,"dst":1,"capacity":1,"weight":1},
                          {"src":1,"dst":2,"capacity":1,"weight":1}]}"#,
        );
        assert_eq!(routing.path_properties(&topo, NodeId(0), NodeId(2)).unwrap().hop_count, 2);
        assert_eq!(routing.weight(NodeId(0), NodeId(2)), 2.0);
    }

    #[test]
    fn zero_weight_cycle_still_yields_simple_paths() {
        let (topo, routing) = build(
            r#"{"symmetric": true, "nodes": [{"id":0},{"id":1},{"id":2},{"id":3}],
                "links": [{"src":0,"dst":1,"capacity":1,"weight":0},
                          {"src":1,"dst":2,"capacity":1,"weight":0},
                          {"src":2,"dst":0,"capacity":1,"weight":0},
                          {"src":2,"dst":3,"capacity":1,"weight":1}]}"#,
        );
        for o in 0..4 {
            for d in 0..4 {
                let seq = routing.node_sequence(&topo, NodeId(o), NodeId(d));
                let mut sorted = seq.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted.len(), seq.len(), "{o}->{d}: {seq:?}");
                assert_eq!(*seq.last().unwrap(), NodeId(d));
            }
        }
    }

    #[test]
    fn abilene_routes_follow_ospf_weights() {
        let net = Network::new(abilene()).unwrap();
        // STTLng -> NYCMng goes the northern way through Denver and Kansas City
        let seq = net.routing().node_sequence(net.topology(), NodeId(10), NodeId(8));
        let labels: Vec<_> = seq.iter().map(|n| net.topology().node(*n).unwrap().label.as_str()).collect();
        assert_eq!(labels, ["STTLng", "DNVRng", "KSCYng", "IPLSng", "CHINng", "NYCMng"]);
    }
}
