//! Network data model: an undirected multigraph of endpoints and routers
//! whose channels carry cost vectors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{CostVector, Fidelity, OperationCosts, SuccessProb};
use crate::json;

pub const MAX_ID_LEN: usize = 64;
pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("malformed graph document: {0}")]
    Malformed(String),
    #[error("unsupported document version {0} (expected {DOCUMENT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("invalid {kind} id {id:?} at {at}: {reason}")]
    InvalidId {
        kind: &'static str,
        id: String,
        at: String,
        reason: &'static str,
    },
    #[error("duplicate {kind} id {id:?} at {at}")]
    DuplicateId { kind: &'static str, id: String, at: String },
    #[error("edge {edge:?} at {at} references unknown node {node:?}")]
    DanglingEndpoint { edge: String, node: String, at: String },
    #[error("edge {edge:?} at {at} has {field} {value} outside [0, 1]")]
    OutOfRange {
        edge: String,
        field: &'static str,
        value: f64,
        at: String,
    },
    #[error("edge {edge:?} at {at} is a self-loop on {node:?}")]
    SelfLoop { edge: String, node: String, at: String },
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
}

impl GraphError {
    /// The id the error is about, when there is one.
    pub fn token(&self) -> Option<&str> {
        match self {
            GraphError::InvalidId { id, .. } | GraphError::DuplicateId { id, .. } => Some(id),
            GraphError::DanglingEndpoint { edge, .. }
            | GraphError::OutOfRange { edge, .. }
            | GraphError::SelfLoop { edge, .. } => Some(edge),
            GraphError::UnknownNode(id) | GraphError::UnknownChannel(id) => Some(id),
            GraphError::Malformed(_) | GraphError::UnsupportedVersion(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Endpoint,
    Router,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub role: NodeRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub id: String,
    pub a: String,
    pub b: String,
    pub cost: CostVector,
}

impl Channel {
    /// The far end of the channel as seen from `node`.
    pub fn other(&self, node: &str) -> Option<&str> {
        if self.a == node {
            Some(&self.b)
        } else if self.b == node {
            Some(&self.a)
        } else {
            None
        }
    }

    pub fn joins(&self, u: &str, v: &str) -> bool {
        (self.a == u && self.b == v) || (self.a == v && self.b == u)
    }
}

fn check_id(kind: &'static str, id: &str, at: &str) -> Result<(), GraphError> {
    let reason = if id.is_empty() {
        "empty"
    } else if id.chars().count() > MAX_ID_LEN {
        "longer than 64 characters"
    } else if id.chars().any(char::is_whitespace) {
        "contains whitespace"
    } else {
        return Ok(());
    };
    Err(GraphError::InvalidId {
        kind,
        id: id.to_string(),
        at: at.to_string(),
        reason,
    })
}

/// Channel ids of the form `r<digits>` are produced by reduction.
pub fn synthetic_index(id: &str) -> Option<u64> {
    let digits = id.strip_prefix('r')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn is_reserved(id: &str) -> bool {
    id.strip_prefix('r')
        .and_then(|rest| rest.bytes().next())
        .is_some_and(|b| b.is_ascii_digit())
}

/// Undirected multigraph with cost-vector weighted channels.
///
/// Nodes and channels are kept in id order so that every traversal, and
/// therefore every algorithm built on top, is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    nodes: BTreeMap<String, NodeRole>,
    channels: BTreeMap<String, Channel>,
    incidence: BTreeMap<String, BTreeSet<String>>,
    op_costs: OperationCosts,
}

impl NetworkGraph {
    pub fn new(op_costs: OperationCosts) -> Self {
        NetworkGraph {
            nodes: BTreeMap::new(),
            channels: BTreeMap::new(),
            incidence: BTreeMap::new(),
            op_costs,
        }
    }

    pub fn op_costs(&self) -> &OperationCosts {
        &self.op_costs
    }

    pub fn add_node(&mut self, id: &str, role: NodeRole) -> Result<(), GraphError> {
        check_id("node", id, "nodes")?;
        if self.nodes.contains_key(id) {
            return Err(GraphError::DuplicateId {
                kind: "node",
                id: id.to_string(),
                at: "nodes".into(),
            });
        }
        self.nodes.insert(id.to_string(), role);
        self.incidence.insert(id.to_string(), BTreeSet::new());
        Ok(())
    }

    pub fn add_channel(&mut self, id: &str, a: &str, b: &str, cost: CostVector) -> Result<(), GraphError> {
        self.insert_channel(id, a, b, cost, "edges")
    }

    fn insert_channel(&mut self, id: &str, a: &str, b: &str, cost: CostVector, at: &str) -> Result<(), GraphError> {
        check_id("edge", id, at)?;
        if self.channels.contains_key(id) {
            return Err(GraphError::DuplicateId {
                kind: "edge",
                id: id.to_string(),
                at: at.to_string(),
            });
        }
        for end in [a, b] {
            if !self.nodes.contains_key(end) {
                return Err(GraphError::DanglingEndpoint {
                    edge: id.to_string(),
                    node: end.to_string(),
                    at: at.to_string(),
                });
            }
        }
        if a == b {
            return Err(GraphError::SelfLoop {
                edge: id.to_string(),
                node: a.to_string(),
                at: at.to_string(),
            });
        }
        self.incidence.get_mut(a).unwrap().insert(id.to_string());
        self.incidence.get_mut(b).unwrap().insert(id.to_string());
        self.channels.insert(
            id.to_string(),
            Channel {
                id: id.to_string(),
                a: a.to_string(),
                b: b.to_string(),
                cost,
            },
        );
        Ok(())
    }

    pub(crate) fn remove_channel(&mut self, id: &str) -> Option<Channel> {
        let channel = self.channels.remove(id)?;
        self.incidence.get_mut(&channel.a).unwrap().remove(id);
        self.incidence.get_mut(&channel.b).unwrap().remove(id);
        Some(channel)
    }

    /// Removes a node that has no remaining channels.
    pub(crate) fn remove_isolated_node(&mut self, id: &str) {
        debug_assert!(self.incidence.get(id).is_some_and(BTreeSet::is_empty));
        self.nodes.remove(id);
        self.incidence.remove(id);
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn role(&self, id: &str) -> Option<NodeRole> {
        self.nodes.get(id).copied()
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.nodes.iter().map(|(id, role)| Node {
            id: id.clone(),
            role: *role,
        })
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn channels(&self) -> impl Iterator<Item = &Channel> {
        self.channels.values()
    }

    pub fn channel(&self, id: &str) -> Option<&Channel> {
        self.channels.get(id)
    }

    /// Channel ids incident to `node`, in id order.
    pub fn incident(&self, node: &str) -> Result<&BTreeSet<String>, GraphError> {
        self.incidence
            .get(node)
            .ok_or_else(|| GraphError::UnknownNode(node.to_string()))
    }

    /// `(channel id, other node id)` for every channel at `node`.
    pub fn neighbors(&self, node: &str) -> Result<Vec<(String, String)>, GraphError> {
        Ok(self
            .incident(node)?
            .iter()
            .map(|c| {
                let channel = &self.channels[c];
                (c.clone(), channel.other(node).unwrap().to_string())
            })
            .collect())
    }

    /// Parallel channels count separately.
    pub fn degree(&self, node: &str) -> Result<usize, GraphError> {
        self.incident(node).map(BTreeSet::len)
    }

    /// Next free id in the `r<n>` namespace. Always larger than every
    /// synthetic id currently present, so ids never repeat along a
    /// reduction.
    pub fn next_synthetic_id(&self) -> String {
        let next = self
            .channels
            .keys()
            .filter_map(|id| synthetic_index(id))
            .max()
            .map_or(0, |m| m + 1);
        format!("r{next}")
    }

    /// The subgraph spanned by `channel_ids`; `keep_nodes` are retained
    /// even when no selected channel touches them.
    pub fn subgraph<'a>(
        &self,
        channel_ids: impl IntoIterator<Item = &'a str>,
        keep_nodes: &[&str],
    ) -> Result<NetworkGraph, GraphError> {
        let mut selected = Vec::new();
        let mut wanted: BTreeSet<&str> = BTreeSet::new();
        for id in channel_ids {
            let channel = self
                .channels
                .get(id)
                .ok_or_else(|| GraphError::UnknownChannel(id.to_string()))?;
            wanted.insert(&channel.a);
            wanted.insert(&channel.b);
            selected.push(channel);
        }
        for node in keep_nodes {
            if !self.nodes.contains_key(*node) {
                return Err(GraphError::UnknownNode(node.to_string()));
            }
            wanted.insert(node);
        }
        let mut sub = NetworkGraph::new(self.op_costs);
        for node in wanted {
            sub.add_node(node, self.nodes[node])?;
        }
        for channel in selected {
            sub.add_channel(&channel.id, &channel.a, &channel.b, channel.cost)?;
        }
        Ok(sub)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDocument {
    version: u32,
    #[serde(default)]
    op_costs: OperationCosts,
    nodes: Vec<NodeDocument>,
    edges: Vec<EdgeDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDocument {
    id: String,
    role: NodeRole,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDocument {
    id: String,
    a: String,
    b: String,
    fidelity: f64,
    success: f64,
}

/// Parses and validates a version-1 graph document.
pub fn parse_graph(document: &[u8]) -> Result<NetworkGraph, GraphError> {
    let doc: GraphDocument = serde_json::from_slice(document).map_err(|e| GraphError::Malformed(e.to_string()))?;
    if doc.version != DOCUMENT_VERSION {
        return Err(GraphError::UnsupportedVersion(doc.version));
    }
    let mut g = NetworkGraph::new(doc.op_costs);
    for (i, node) in doc.nodes.iter().enumerate() {
        let at = format!("nodes[{i}]");
        check_id("node", &node.id, &at)?;
        if g.contains_node(&node.id) {
            return Err(GraphError::DuplicateId {
                kind: "node",
                id: node.id.clone(),
                at,
            });
        }
        g.add_node(&node.id, node.role)?;
    }
    for (i, edge) in doc.edges.iter().enumerate() {
        let at = format!("edges[{i}]");
        check_id("edge", &edge.id, &at)?;
        if is_reserved(&edge.id) {
            return Err(GraphError::InvalidId {
                kind: "edge",
                id: edge.id.clone(),
                at,
                reason: "ids starting with 'r' and a digit are reserved for reduction",
            });
        }
        let fidelity = Fidelity::new(edge.fidelity).map_err(|_| GraphError::OutOfRange {
            edge: edge.id.clone(),
            field: "fidelity",
            value: edge.fidelity,
            at: at.clone(),
        })?;
        let success = SuccessProb::new(edge.success).map_err(|_| GraphError::OutOfRange {
            edge: edge.id.clone(),
            field: "success",
            value: edge.success,
            at: at.clone(),
        })?;
        g.insert_channel(&edge.id, &edge.a, &edge.b, CostVector { fidelity, success }, &at)?;
    }
    Ok(g)
}

/// The graph as a version-1 document value (canonical order).
pub fn graph_to_value(g: &NetworkGraph) -> serde_json::Value {
    let doc = GraphDocument {
        version: DOCUMENT_VERSION,
        op_costs: g.op_costs,
        nodes: g
            .nodes
            .iter()
            .map(|(id, role)| NodeDocument {
                id: id.clone(),
                role: *role,
            })
            .collect(),
        edges: g
            .channels
            .values()
            .map(|c| EdgeDocument {
                id: c.id.clone(),
                a: c.a.clone(),
                b: c.b.clone(),
                fidelity: c.cost.fidelity.value(),
                success: c.cost.success.value(),
            })
            .collect(),
    };
    serde_json::to_value(doc).expect("graph documents always serialize")
}

/// Deterministic canonical encoding; `parse_graph` inverts it exactly.
pub fn serialize_graph(g: &NetworkGraph) -> Vec<u8> {
    json::to_canonical_string(&graph_to_value(g))
        .expect("graph documents always serialize")
        .into_bytes()
}
