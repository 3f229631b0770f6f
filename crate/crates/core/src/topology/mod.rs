//! The backbone model: a capacitated directed graph with routing weights and
//! link delays, plus the deterministic single-path routing derived from it.
//!
//! A [`NetworkTopology`] is immutable once built. Routing is computed once per
//! topology into a [`RoutingMatrix`]; [`Network`] bundles the two so the
//! assignment engines can share them read-only.

mod file;
mod routing;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{LinkRecord, NodeRecord, TopologyDocument};
pub use routing::{OdPair, PathProperties, RoutingMatrix};

/// Index of a router in the topology. Ids are contiguous from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a directed link in the topology's link list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub usize);

impl LinkId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    pub is_peering_point: bool,
}

/// A directed link. Capacity is expressed in volume per time bin, the same
/// unit as every demand volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub src: NodeId,
    pub dst: NodeId,
    pub capacity: f64,
    pub weight: f64,
    pub delay_ms: f64,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("malformed topology document: {0}")]
    Malformed(String),
    #[error("cannot read topology file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(
        "node record {position}: expected id {expected}, found {found} (ids must be unique and contiguous from 0)"
    )]
    NodeIds { position: usize, expected: usize, found: usize },
    #[error("link record {record} ({src}->{dst}): dangling endpoint {node}")]
    DanglingEndpoint { record: usize, src: usize, dst: usize, node: usize },
    #[error("link record {record} ({src}->{dst}): self loop")]
    SelfLoop { record: usize, src: usize, dst: usize },
    #[error("link record {record} ({src}->{dst}): capacity must be positive, got {capacity}")]
    NonPositiveCapacity { record: usize, src: usize, dst: usize, capacity: f64 },
    #[error("link record {record} ({src}->{dst}): {field} must be finite and nonnegative, got {value}")]
    InvalidAttribute { record: usize, src: usize, dst: usize, field: &'static str, value: f64 },
    #[error("topology has no nodes")]
    Empty,
    #[error("graph is not strongly connected: node {to} unreachable from node {from}")]
    Disconnected { from: NodeId, to: NodeId },
    #[error("no route for OD pair ({origin}, {destination})")]
    Unreachable { origin: NodeId, destination: NodeId },
    #[error("unknown OD pair ({origin}, {destination})")]
    UnknownOd { origin: NodeId, destination: NodeId },
}

impl TopologyError {
    /// Rewrites link record indices, e.g. from expanded links back to
    /// document records.
    fn with_document_record(self, map: impl Fn(usize) -> usize) -> Self {
        match self {
            Self::DanglingEndpoint { record, src, dst, node } => {
                Self::DanglingEndpoint { record: map(record), src, dst, node }
            }
            Self::SelfLoop { record, src, dst } => Self::SelfLoop { record: map(record), src, dst },
            Self::NonPositiveCapacity { record, src, dst, capacity } => {
                Self::NonPositiveCapacity { record: map(record), src, dst, capacity }
            }
            Self::InvalidAttribute { record, src, dst, field, value } => {
                Self::InvalidAttribute { record: map(record), src, dst, field, value }
            }
            other => other,
        }
    }
}

/// Capacitated directed graph G(V, E).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    out_links: Vec<Vec<LinkId>>,
}

impl NetworkTopology {
    /// Validates and builds a topology. Node ids must equal their position.
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, TopologyError> {
        if nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        for (position, node) in nodes.iter().enumerate() {
            if node.id.0 != position {
                return Err(TopologyError::NodeIds { position, expected: position, found: node.id.0 });
            }
        }
        let n = nodes.len();
        let mut out_links = vec![Vec::new(); n];
        for (record, link) in links.iter().enumerate() {
            let (src, dst) = (link.src.0, link.dst.0);
            for node in [src, dst] {
                if node >= n {
                    return Err(TopologyError::DanglingEndpoint { record, src, dst, node });
                }
            }
            if src == dst {
                return Err(TopologyError::SelfLoop { record, src, dst });
            }
            if !(link.capacity > 0.0) || !link.capacity.is_finite() {
                return Err(TopologyError::NonPositiveCapacity { record, src, dst, capacity: link.capacity });
            }
            for (field, value) in [("weight", link.weight), ("delay_ms", link.delay_ms)] {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(TopologyError::InvalidAttribute { record, src, dst, field, value });
                }
            }
            debug_assert_eq!(link.id.0, record);
            out_links[src].push(link.id);
        }
        let topo = Self { nodes, links, out_links };
        topo.check_strongly_connected()?;
        Ok(topo)
    }

    /// Loads a topology from a JSON document (see [`TopologyDocument`]).
    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let doc: TopologyDocument = serde_json::from_str(text).map_err(|e| TopologyError::Malformed(e.to_string()))?;
        doc.into_topology()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| TopologyError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0)
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 < self.nodes.len()
    }

    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out_links[node.0]
    }

    pub fn peering_points(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.is_peering_point).map(|n| n.id).collect()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.capacity).collect()
    }

    pub(crate) fn has_zero_weight(&self) -> bool {
        self.links.iter().any(|l| l.weight == 0.0)
    }

    fn check_strongly_connected(&self) -> Result<(), TopologyError> {
        let n = self.nodes.len();
        let mut incoming = vec![Vec::new(); n];
        for link in &self.links {
            incoming[link.dst.0].push(link.src.0);
        }
        let forward = reach(n, 0, |u| self.out_links[u].iter().map(|l| self.links[l.0].dst.0).collect());
        if let Some(to) = forward.iter().position(|seen| !seen) {
            return Err(TopologyError::Disconnected { from: NodeId(0), to: NodeId(to) });
        }
        let backward = reach(n, 0, |u| incoming[u].clone());
        if let Some(from) = backward.iter().position(|seen| !seen) {
            return Err(TopologyError::Disconnected { from: NodeId(from), to: NodeId(0) });
        }
        Ok(())
    }
}

fn reach(n: usize, start: usize, next: impl Fn(usize) -> Vec<usize>) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for v in next(u) {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// The 12-router Abilene backbone with its public OSPF weights. Capacities
/// are in Mbit per unit time (OC-192 = 9920, the ATLA-M5 spur is OC-48).
pub fn abilene() -> NetworkTopology {
    NetworkTopology::from_json(include_str!("../../data/abilene.json")).expect("bundled Abilene topology is valid")
}

/// A topology together with its routing matrix.
#[derive(Debug, Clone)]
pub struct Network {
    topology: NetworkTopology,
    routing: RoutingMatrix,
}

impl Network {
    pub fn new(topology: NetworkTopology) -> Result<Self, TopologyError> {
        let routing = RoutingMatrix::compute(&topology)?;
        Ok(Self { topology, routing })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn routing(&self) -> &RoutingMatrix {
        &self.routing
    }

    /// Routed links from `origin` to `destination`. Panics on out-of-range ids;
    /// use [`RoutingMatrix::links_on_path`] for a checked lookup.
    pub fn path(&self, origin: NodeId, destination: NodeId) -> &[LinkId] {
        self.routing.path(origin, destination)
    }

    pub fn hops(&self, origin: NodeId, destination: NodeId) -> usize {
        self.routing.path(origin, destination).len()
    }

    pub fn delay(&self, origin: NodeId, destination: NodeId) -> f64 {
        self.routing.delay(origin, destination)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn triangle_json() -> &'static str {
        r#"{"symmetric": true,
            "nodes": [{"id":0},{"id":1},{"id":2}],
            "links": [{"src":0,"dst":1,"capacity":1},
                      {"src":1,"dst":2,"capacity":1},
                      {"src":0,"dst":2,"capacity":1}]}"#
    }

    #[test]
    fn triangle_expands_to_six_links() {
        let topo = NetworkTopology::from_json(triangle_json()).unwrap();
        assert_eq!(topo.node_count(), 3);
        assert_eq!(topo.link_count(), 6);
        assert!(topo.links().iter().all(|l| l.weight == 1.0 && l.delay_ms == 0.0));
    }

    #[test]
    fn dangling_endpoint_is_rejected() {
        let doc = r#"{"nodes": [{"id":0},{"id":1},{"id":2}],
                      "links": [{"src":0,"dst":99,"capacity":1}]}"#;
        let err = NetworkTopology::from_json(doc).unwrap_err();
        assert!(matches!(err, TopologyError::DanglingEndpoint { node: 99, record: 0, .. }));
        assert!(err.to_string().contains("dangling endpoint"));
    }

    #[test]
    fn nonpositive_capacity_is_rejected() {
        let doc = r#"{"symmetric": true, "nodes": [{"id":0},{"id":1}],
                      "links": [{"src":0,"dst":1,"capacity":0}]}"#;
        let err = NetworkTopology::from_json(doc).unwrap_err();
        assert!(matches!(err, TopologyError::NonPositiveCapacity { .. }), "{err}");
    }

    #[test]
    fn negative_delay_is_rejected() {
        let doc = r#"{"symmetric": true, "nodes": [{"id":0},{"id":1}],
                      "links": [{"src":0,"dst":1,"capacity":3,"delay_ms":-1}]}"#;
        let err = NetworkTopology::from_json(doc).unwrap_err();
        assert!(matches!(err, TopologyError::InvalidAttribute { field: "delay_ms", .. }));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        // 0 <-> 1, 2 isolated
        let doc = r#"{"symmetric": true, "nodes": [{"id":0},{"id":1},{"id":2}],
                      "links": [{"src":0,"dst":1,"capacity":1}]}"#;
        let err = NetworkTopology::from_json(doc).unwrap_err();
        assert!(matches!(err, TopologyError::Disconnected { .. }));

        // one-way ring is strongly connected, one-way line is not
        let line = r#"{"nodes": [{"id":0},{"id":1},{"id":2}],
                       "links": [{"src":0,"dst":1,"capacity":1},{"src":1,"dst":2,"capacity":1}]}"#;
        assert!(matches!(NetworkTopology::from_json(line).unwrap_err(), TopologyError::Disconnected { .. }));
    }

    #[test]
    fn non_contiguous_ids_are_rejected() {
        let doc = r#"{"nodes": [{"id":0},{"id":2}], "links": []}"#;
        assert!(matches!(NetworkTopology::from_json(doc).unwrap_err(), TopologyError::NodeIds { position: 1, .. }));
    }

    #[test]
    fn malformed_document_is_reported() {
        let err = NetworkTopology::from_json(r#"{"nodes": 3}"#).unwrap_err();
        assert!(matches!(err, TopologyError::Malformed(_)));
    }

    #[test]
    fn abilene_has_twelve_nodes_and_thirty_links() {
        let topo = abilene();
        assert_eq!(topo.node_count(), 12);
        assert_eq!(topo.link_count(), 30);
        assert_eq!(topo.node(NodeId(1)).unwrap().label, "ATLAng");
    }
}
