use serde::{Deserialize, Serialize};

use super::{Link, LinkId, NetworkTopology, Node, NodeId, TopologyError};

/// On-disk topology format.
///
/// ```json
/// {"symmetric": true,
///  "nodes": [{"id": 0, "label": "a", "is_peering_point": true}, ...],
///  "links": [{"src": 0, "dst": 1, "capacity": 10, "weight": 1, "delay_ms": 2}, ...]}
/// ```
///
/// With `symmetric` set every link record also produces the reverse link,
/// placed directly after it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDocument {
    #[serde(default)]
    pub symmetric: bool,
    pub nodes: Vec<NodeRecord>,
    pub links: Vec<LinkRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: usize,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default, alias = "peering")]
    pub is_peering_point: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub src: usize,
    pub dst: usize,
    pub capacity: f64,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default)]
    pub delay_ms: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl TopologyDocument {
    pub fn into_topology(self) -> Result<NetworkTopology, TopologyError> {
        let nodes = self
            .nodes
            .into_iter()
            .map(|r| Node {
                id: NodeId(r.id),
                label: r.label.unwrap_or_else(|| format!("n{}", r.id)),
                is_peering_point: r.is_peering_point,
            })
            .collect();
        let mut links = Vec::with_capacity(self.links.len() * if self.symmetric { 2 } else { 1 });
        for r in &self.links {
            let mut push = |src, dst| {
                links.push(Link {
                    id: LinkId(links.len()),
                    src: NodeId(src),
                    dst: NodeId(dst),
                    capacity: r.capacity,
                    weight: r.weight,
                    delay_ms: r.delay_ms,
                })
            };
            push(r.src, r.dst);
            if self.symmetric {
                push(r.dst, r.src);
            }
        }
        let symmetric = self.symmetric;
        NetworkTopology::new(nodes, links).map_err(|err| {
            if symmetric {
                err.with_document_record(|expanded| expanded / 2)
            } else {
                err
            }
        })
    }

    /// Directed export of a topology (never uses the symmetric shorthand).
    pub fn from_topology(topo: &NetworkTopology) -> Self {
        Self {
            symmetric: false,
            nodes: topo
                .nodes()
                .iter()
                .map(|n| NodeRecord { id: n.id.0, label: Some(n.label.clone()), is_peering_point: n.is_peering_point })
                .collect(),
            links: topo
                .links()
                .iter()
                .map(|l| LinkRecord {
                    src: l.src.0,
                    dst: l.dst.0,
                    capacity: l.capacity,
                    weight: l.weight,
                    delay_ms: l.delay_ms,
                })
                .collect(),
        }
    }
}
