//! Small reference topologies used throughout the tests and docs.

use std::ops::RangeInclusive;

use rand::Rng;

use crate::algebra::{CostVector, OperationCosts};
use crate::graph::{NetworkGraph, NodeRole};
use crate::reduction::StrategyTree;

fn skeleton(routers: &[&str], ops: OperationCosts) -> NetworkGraph {
    let mut g = NetworkGraph::new(ops);
    g.add_node("A", NodeRole::Endpoint).unwrap();
    g.add_node("B", NodeRole::Endpoint).unwrap();
    for r in routers {
        g.add_node(r, NodeRole::Router).unwrap();
    }
    g
}

/// Two disjoint two-hop paths `A–m1–B` and `A–m2–B`, every channel `cost`.
///
/// Channels: `a1` (A–m1), `b1` (m1–B), `a2` (A–m2), `b2` (m2–B).
pub fn two_path(cost: CostVector, ops: OperationCosts) -> NetworkGraph {
    let mut g = skeleton(&["m1", "m2"], ops);
    for (id, a, b) in [
        ("a1", "A", "m1"),
        ("b1", "m1", "B"),
        ("a2", "A", "m2"),
        ("b2", "m2", "B"),
    ] {
        g.add_channel(id, a, b, cost).unwrap();
    }
    g
}

/// The bridge graph: `A–n1–B`, `A–n2–B` plus the `bridge` channel n1–n2.
pub fn wheatstone(cost: CostVector, ops: OperationCosts) -> NetworkGraph {
    let mut g = skeleton(&["n1", "n2"], ops);
    for (id, a, b) in [
        ("a1", "A", "n1"),
        ("a2", "A", "n2"),
        ("bridge", "n1", "n2"),
        ("b1", "n1", "B"),
        ("b2", "n2", "B"),
    ] {
        g.add_channel(id, a, b, cost).unwrap();
    }
    g
}

/// Uniform channel costs drawn from the given fidelity and success ranges.
#[derive(Debug, Clone)]
pub struct CostRange {
    pub fidelity: RangeInclusive<f64>,
    pub success: RangeInclusive<f64>,
}

impl CostRange {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CostVector {
        CostVector::new(
            rng.random_range(self.fidelity.clone()),
            rng.random_range(self.success.clone()),
        )
        .expect("ranges lie inside [0, 1]")
    }
}

/// A random strategy over `leaves` channels between `A` and `B`, together
/// with the series-parallel graph it is the plan of.
///
/// A swap introduces a fresh router `x{i}`; a purification puts both
/// operands between the same pair of nodes. Channels are `c{i}`.
pub fn random_strategy<R: Rng + ?Sized>(
    rng: &mut R,
    leaves: usize,
    costs: &CostRange,
    ops: OperationCosts,
) -> (NetworkGraph, StrategyTree) {
    assert!(leaves >= 1);
    let mut g = skeleton(&[], ops);
    let mut counters = (0usize, 0usize);
    let tree = grow(rng, &mut g, &mut counters, leaves, "A", "B", costs);
    (g, tree)
}

fn grow<R: Rng + ?Sized>(
    rng: &mut R,
    g: &mut NetworkGraph,
    counters: &mut (usize, usize),
    leaves: usize,
    u: &str,
    v: &str,
    costs: &CostRange,
) -> StrategyTree {
    if leaves == 1 {
        let id = format!("c{}", counters.0);
        counters.0 += 1;
        g.add_channel(&id, u, v, costs.sample(rng)).unwrap();
        return StrategyTree::leaf(id);
    }
    let split = rng.random_range(1..leaves);
    if rng.random_bool(0.5) {
        let x = format!("x{}", counters.1);
        counters.1 += 1;
        g.add_node(&x, NodeRole::Router).unwrap();
        let left = grow(rng, g, counters, split, u, &x, costs);
        let right = grow(rng, g, counters, leaves - split, &x, v, costs);
        StrategyTree::swap(left, right)
    } else {
        let left = grow(rng, g, counters, split, u, v, costs);
        let right = grow(rng, g, counters, leaves - split, u, v, costs);
        StrategyTree::purify(left, right)
    }
}

/// A random multigraph on endpoints `A`, `B` and routers `n0..n{routers}`
/// with `channels` channels `e{i}` between distinct random nodes.
pub fn random_network<R: Rng + ?Sized>(
    rng: &mut R,
    routers: usize,
    channels: usize,
    costs: &CostRange,
    ops: OperationCosts,
) -> NetworkGraph {
    let names: Vec<String> = (0..routers).map(|i| format!("n{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut g = skeleton(&refs, ops);
    let nodes: Vec<String> = g.node_ids().map(String::from).collect();
    for i in 0..channels {
        let a = rng.random_range(0..nodes.len());
        let mut b = rng.random_range(0..nodes.len() - 1);
        if b >= a {
            b += 1;
        }
        g.add_channel(&format!("e{i}"), &nodes[a], &nodes[b], costs.sample(rng))
            .unwrap();
    }
    g
}
