//! Entanglement routing under a dephasing-plus-loss error model.
//!
//! * [`algebra`]: swapping/purification cost-vector algebra and area laws.
//! * [`graph`]: the network multigraph and its JSON document.
//! * [`reduction`]: series-parallel rewriting into strategy trees.
//! * [`routing`]: single-pair optimal subgraph search.
//! * [`montecarlo`]: phase-flip sampler and density-matrix oracle.

pub mod algebra;
pub mod graph;
pub mod json;
pub mod montecarlo;
pub mod reduction;
pub mod routing;
pub mod topologies;

pub use algebra::{CostVector, Fidelity, OperationCosts, SuccessProb};
pub use graph::{parse_graph, serialize_graph, NetworkGraph, NodeRole};
pub use reduction::{evaluate_strategy, reduce_to_fixpoint, StrategyTree};
pub use routing::{route, RouteRequest, RouteResult};
