//! Single-pair routing.
//!
//! Swap-only paths are harvested with repeated channel-disjoint Dijkstra
//! searches on log-loss weights until the next path falls below the success
//! threshold. The nodes those paths visit span a candidate subgraph, which
//! is reduced series-parallel. A fully reduced, feasible result is returned
//! directly; otherwise every channel subset of the candidate is searched.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::rc::Rc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::algebra::{to_log_loss, CostVector, Fidelity, SuccessProb};
use crate::graph::{graph_to_value, GraphError, NetworkGraph, NodeRole};
use crate::reduction::{
    canonicalize, evaluate_strategy, is_fully_reduced_pair, reduce_to_fixpoint, ReductionError, StrategyTree,
};

pub const DEFAULT_MAX_BRUTEFORCE_EDGES: usize = 12;
/// Size bound of [`brute_force_best`].
pub const ORACLE_MAX_EDGES: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouteError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error("invalid route request: {0}")]
    InvalidRequest(String),
    #[error("search space of {edges} channels exceeds the bound of {limit}")]
    TooLarge { edges: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteRequest {
    pub source: String,
    pub target: String,
    pub min_success: SuccessProb,
    /// `None` harvests until the threshold or the graph runs out.
    pub max_paths: Option<usize>,
    pub max_bruteforce_edges: usize,
}

impl RouteRequest {
    pub fn new(source: &str, target: &str, min_success: SuccessProb) -> Self {
        RouteRequest {
            source: source.to_string(),
            target: target.to_string(),
            min_success,
            max_paths: None,
            max_bruteforce_edges: DEFAULT_MAX_BRUTEFORCE_EDGES,
        }
    }

    fn validate(&self, g: &NetworkGraph) -> Result<(), RouteError> {
        for node in [&self.source, &self.target] {
            match g.role(node) {
                None => return Err(GraphError::UnknownNode(node.clone()).into()),
                Some(NodeRole::Router) => {
                    return Err(RouteError::InvalidRequest(format!("{node:?} is not an endpoint")))
                }
                Some(NodeRole::Endpoint) => {}
            }
        }
        if self.source == self.target {
            return Err(RouteError::InvalidRequest("source and target coincide".into()));
        }
        if self.min_success.value() <= 0.0 {
            return Err(RouteError::InvalidRequest("min_success must be positive".into()));
        }
        if self.max_paths == Some(0) {
            return Err(RouteError::InvalidRequest("max_paths must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarvestedPath {
    pub channels: Vec<String>,
    pub nodes: Vec<String>,
    /// Channel successes times one swap success per interior router.
    pub success: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SearchKind {
    FullyReduced,
    ExhaustiveSearch,
    Infeasible,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub dijkstra_runs: usize,
    pub paths_examined: usize,
    pub reduction_steps: usize,
    pub subsets_examined: u64,
    pub candidates_evaluated: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteResult {
    /// Channels used by the chosen strategy, with the two users.
    pub subgraph: NetworkGraph,
    pub strategy: Option<StrategyTree>,
    pub cost: Option<CostVector>,
    pub paths: Vec<HarvestedPath>,
    /// Channels of the candidate subgraph spanned by the harvested paths.
    pub candidate_channels: Vec<String>,
    pub search: SearchKind,
    pub diagnostics: Diagnostics,
}

impl RouteResult {
    pub fn paths_harvested(&self) -> usize {
        self.paths.len()
    }

    pub fn to_value(&self) -> Value {
        json!({
            "subgraph": graph_to_value(&self.subgraph),
            "strategy": self.strategy,
            "cost": self.cost,
            "paths": self.paths,
            "paths_harvested": self.paths.len(),
            "candidate_channels": self.candidate_channels,
            "search": self.search,
            "diagnostics": self.diagnostics,
        })
    }
}

#[derive(PartialEq)]
struct QueueEntry {
    dist: f64,
    node: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    // Min-heap on (dist, node).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest log-loss path that only transits routers, over channels not in
/// `removed`.
fn dijkstra(
    g: &NetworkGraph,
    source: &str,
    target: &str,
    removed: &HashSet<String>,
) -> Option<(Vec<String>, Vec<String>)> {
    let ids: Vec<&str> = g.node_ids().collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let swap_loss = to_log_loss(g.op_costs().swap_success).value();
    let (src, dst) = (index[source], index[target]);
    let mut dist = vec![f64::INFINITY; ids.len()];
    let mut prev: Vec<Option<(&str, usize)>> = vec![None; ids.len()];
    let mut done = vec![false; ids.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(QueueEntry { dist: 0.0, node: src });
    while let Some(QueueEntry { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == dst {
            break;
        }
        if u != src && g.role(ids[u]) != Some(NodeRole::Router) {
            continue;
        }
        let hop = if u == src { 0.0 } else { swap_loss };
        for cid in g.incident(ids[u]).unwrap() {
            if removed.contains(cid) {
                continue;
            }
            let channel = g.channel(cid).unwrap();
            let loss = to_log_loss(channel.cost.success);
            if loss.is_infinite() {
                continue;
            }
            let w = index[channel.other(ids[u]).unwrap()];
            let candidate = d + hop + loss.value();
            if !done[w] && candidate < dist[w] {
                dist[w] = candidate;
                prev[w] = Some((cid.as_str(), u));
                heap.push(QueueEntry {
                    dist: candidate,
                    node: w,
                });
            }
        }
    }
    if !dist[dst].is_finite() {
        return None;
    }
    let mut channels = Vec::new();
    let mut nodes = vec![ids[dst].to_string()];
    let mut at = dst;
    while let Some((cid, p)) = prev[at] {
        channels.push(cid.to_string());
        nodes.push(ids[p].to_string());
        at = p;
    }
    channels.reverse();
    nodes.reverse();
    Some((channels, nodes))
}

fn path_success(g: &NetworkGraph, channels: &[String]) -> f64 {
    let swap = g.op_costs().swap_success.value();
    let mut success = 1.0;
    for (i, c) in channels.iter().enumerate() {
        if i > 0 {
            success *= swap;
        }
        success *= g.channel(c).unwrap().cost.success.value();
    }
    success
}

fn harvest(g: &NetworkGraph, req: &RouteRequest) -> (Vec<HarvestedPath>, Diagnostics) {
    let mut diag = Diagnostics::default();
    let mut removed = HashSet::new();
    let mut paths = Vec::new();
    while req.max_paths.is_none_or(|m| paths.len() < m) {
        diag.dijkstra_runs += 1;
        let Some((channels, nodes)) = dijkstra(g, &req.source, &req.target, &removed) else {
            break;
        };
        diag.paths_examined += 1;
        let success = path_success(g, &channels);
        if success < req.min_success.value() {
            break;
        }
        removed.extend(channels.iter().cloned());
        paths.push(HarvestedPath {
            channels,
            nodes,
            success,
        });
    }
    (paths, diag)
}

/// Successive channel-disjoint best paths from source to target whose
/// end-to-end success meets the threshold. Endpoints other than the two
/// users are never transited.
pub fn harvest_paths(g: &NetworkGraph, req: &RouteRequest) -> Result<Vec<HarvestedPath>, RouteError> {
    req.validate(g)?;
    Ok(harvest(g, req).0)
}

#[derive(Debug, Clone)]
struct Candidate {
    tree: StrategyTree,
    cost: CostVector,
    key: String,
}

impl Candidate {
    fn new(tree: StrategyTree, cost: CostVector) -> Self {
        let key = tree.serialization();
        Candidate { tree, cost, key }
    }
}

/// `Greater` means `a` is the better strategy: higher fidelity, then
/// higher success, then the smaller serialization.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    a.cost
        .fidelity
        .value()
        .total_cmp(&b.cost.fidelity.value())
        .then_with(|| a.cost.success.value().total_cmp(&b.cost.success.value()))
        .then_with(|| b.key.cmp(&a.key))
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if rank(&a, &b) == Ordering::Less { b } else { a }),
        (a, None) => a,
        (None, b) => b,
    }
}

fn canonical_candidate(tree: &StrategyTree, g: &NetworkGraph, s: &str, t: &str) -> Result<Candidate, ReductionError> {
    let tree = canonicalize(tree, g, s, t)?;
    let cost = evaluate_strategy(&tree, g)?;
    Ok(Candidate::new(tree, cost))
}

/// Quick structural filter: every node other than `s`, `t` must be a
/// router on at least two selected channels.
fn plausible_subset(g: &NetworkGraph, channels: &[&str], s: &str, t: &str) -> bool {
    let mut degree: HashMap<&str, usize> = HashMap::new();
    for id in channels {
        let c = g.channel(id).unwrap();
        *degree.entry(&c.a).or_default() += 1;
        *degree.entry(&c.b).or_default() += 1;
    }
    degree.contains_key(s)
        && degree.contains_key(t)
        && degree
            .iter()
            .all(|(n, d)| *n == s || *n == t || (*d >= 2 && g.role(n) == Some(NodeRole::Router)))
}

fn evaluate_subset(g: &NetworkGraph, channels: &[&str], s: &str, t: &str) -> Result<Option<Candidate>, RouteError> {
    if !plausible_subset(g, channels, s, t) {
        return Ok(None);
    }
    let sub = g.subgraph(channels.iter().copied(), &[s, t])?;
    let reduced = match reduce_to_fixpoint(&sub) {
        Ok(r) => r,
        Err(ReductionError::Algebra(_)) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    if !is_fully_reduced_pair(&reduced.graph, s, t)? {
        return Ok(None);
    }
    let last = reduced.graph.channels().next().unwrap();
    let tree = reduced
        .strategies
        .get(&last.id)
        .cloned()
        .unwrap_or_else(|| StrategyTree::leaf(last.id.clone()));
    match canonical_candidate(&tree, &sub, s, t) {
        Ok(c) => Ok(Some(c)),
        Err(ReductionError::Algebra(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

struct SearchOutcome {
    best: Option<Candidate>,
    subsets: u64,
    evaluated: u64,
}

fn search_subsets(
    g: &NetworkGraph,
    s: &str,
    t: &str,
    min_success: SuccessProb,
    limit: usize,
) -> Result<SearchOutcome, RouteError> {
    let ids: Vec<&str> = g.channels().map(|c| c.id.as_str()).collect();
    let m = ids.len();
    if m > limit || m >= 64 {
        return Err(RouteError::TooLarge { edges: m, limit });
    }
    let threshold = min_success.value();
    let (best, evaluated) = (1u64..(1u64 << m))
        .into_par_iter()
        .map(|mask| {
            let subset: Vec<&str> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| ids[i]).collect();
            let found = evaluate_subset(g, &subset, s, t)?;
            let evaluated = found.is_some() as u64;
            Ok::<_, RouteError>((found.filter(|c| c.cost.success.value() >= threshold), evaluated))
        })
        .try_reduce(|| (None, 0), |(a, na), (b, nb)| Ok((better(a, b), na + nb)))?;
    Ok(SearchOutcome {
        best,
        subsets: (1u64 << m) - 1,
        evaluated,
    })
}

fn check_pair(g: &NetworkGraph, s: &str, t: &str) -> Result<(), RouteError> {
    for node in [s, t] {
        if !g.contains_node(node) {
            return Err(GraphError::UnknownNode(node.to_string()).into());
        }
    }
    if s == t {
        return Err(RouteError::InvalidRequest("source and target coincide".into()));
    }
    Ok(())
}

/// Exhaustive search over every channel subset of `g` that reduces to a
/// single `s`–`t` channel; returns the best feasible strategy.
pub fn residual_search(
    g: &NetworkGraph,
    s: &str,
    t: &str,
    min_success: SuccessProb,
    max_edges: usize,
) -> Result<Option<(StrategyTree, CostVector)>, RouteError> {
    check_pair(g, s, t)?;
    let outcome = search_subsets(g, s, t, min_success, max_edges)?;
    Ok(outcome.best.map(|c| (c.tree, c.cost)))
}

fn infeasible(
    g: &NetworkGraph,
    req: &RouteRequest,
    paths: Vec<HarvestedPath>,
    candidate: Vec<String>,
    diag: Diagnostics,
) -> Result<RouteResult, RouteError> {
    Ok(RouteResult {
        subgraph: g.subgraph(std::iter::empty(), &[&req.source, &req.target])?,
        strategy: None,
        cost: None,
        paths,
        candidate_channels: candidate,
        search: SearchKind::Infeasible,
        diagnostics: diag,
    })
}

fn strictly_mixed(f: Fidelity) -> bool {
    f.value() > 0.5 && f.value() < 1.0
}

/// Finds the best strategy for one user pair.
///
/// The result maximizes fidelity among strategies whose success meets
/// `req.min_success`, breaking ties by success and then by the canonical
/// serialization of the strategy.
pub fn route(g: &NetworkGraph, req: &RouteRequest) -> Result<RouteResult, RouteError> {
    req.validate(g)?;
    let (s, t) = (req.source.as_str(), req.target.as_str());
    let (paths, mut diag) = harvest(g, req);
    if paths.is_empty() {
        return infeasible(g, req, paths, Vec::new(), diag);
    }
    let visited: BTreeSet<&str> = paths.iter().flat_map(|p| p.nodes.iter().map(String::as_str)).collect();
    let candidate_ids: Vec<&str> = g
        .channels()
        .filter(|c| visited.contains(c.a.as_str()) && visited.contains(c.b.as_str()))
        .map(|c| c.id.as_str())
        .collect();
    let candidate = g.subgraph(candidate_ids.iter().copied(), &[s, t])?;
    let candidate_channels: Vec<String> = candidate_ids.iter().map(|c| c.to_string()).collect();

    let reduced = reduce_to_fixpoint(&candidate)?;
    diag.reduction_steps = reduced.trace.steps.len();
    // With every fidelity strictly inside (1/2, 1) each extra parallel
    // branch strictly helps, so a feasible full reduction is optimal.
    if is_fully_reduced_pair(&reduced.graph, s, t)? && candidate.channels().all(|c| strictly_mixed(c.cost.fidelity)) {
        let last = reduced.graph.channels().next().unwrap();
        let tree = reduced
            .strategies
            .get(&last.id)
            .cloned()
            .unwrap_or_else(|| StrategyTree::leaf(last.id.clone()));
        let best = canonical_candidate(&tree, &candidate, s, t)?;
        if best.cost.success >= req.min_success {
            diag.candidates_evaluated = 1;
            return finish(
                &candidate,
                req,
                best,
                paths,
                candidate_channels,
                SearchKind::FullyReduced,
                diag,
            );
        }
    }

    let outcome = search_subsets(&candidate, s, t, req.min_success, req.max_bruteforce_edges)?;
    diag.subsets_examined = outcome.subsets;
    diag.candidates_evaluated = outcome.evaluated;
    match outcome.best {
        Some(best) => finish(
            &candidate,
            req,
            best,
            paths,
            candidate_channels,
            SearchKind::ExhaustiveSearch,
            diag,
        ),
        None => infeasible(g, req, paths, candidate_channels, diag),
    }
}

fn finish(
    candidate: &NetworkGraph,
    req: &RouteRequest,
    best: Candidate,
    paths: Vec<HarvestedPath>,
    candidate_channels: Vec<String>,
    search: SearchKind,
    diagnostics: Diagnostics,
) -> Result<RouteResult, RouteError> {
    let subgraph = candidate.subgraph(best.tree.leaves(), &[&req.source, &req.target])?;
    Ok(RouteResult {
        subgraph,
        strategy: Some(best.tree),
        cost: Some(best.cost),
        paths,
        candidate_channels,
        search,
        diagnostics,
    })
}

/// Brute-force strategy node with its cost evaluated at construction.
enum OracleTree {
    Leaf(usize),
    Swap(Rc<OracleNode>, Rc<OracleNode>),
    Purify(Rc<OracleNode>, Rc<OracleNode>),
}

type Trees = Rc<Vec<Rc<OracleNode>>>;

struct OracleNode {
    tree: OracleTree,
    cost: CostVector,
}

impl OracleNode {
    fn to_strategy(&self, ids: &[&str]) -> StrategyTree {
        match &self.tree {
            OracleTree::Leaf(i) => StrategyTree::leaf(ids[*i]),
            OracleTree::Swap(l, r) => StrategyTree::swap(l.to_strategy(ids), r.to_strategy(ids)),
            OracleTree::Purify(l, r) => StrategyTree::purify(l.to_strategy(ids), r.to_strategy(ids)),
        }
    }
}

/// Enumerates every strategy tree over exact channel subsets: a purification
/// joins two sub-strategies meeting only at its two terminals, a swap joins
/// two meeting only at one router.
struct Oracle<'g> {
    g: &'g NetworkGraph,
    channel_nodes: Vec<u64>,
    channel_ends: Vec<(usize, usize)>,
    costs: Vec<CostVector>,
    routers: u64,
    memo: HashMap<(u32, usize, usize), Trees>,
}

impl<'g> Oracle<'g> {
    fn new(g: &'g NetworkGraph, nodes: &[&str]) -> Self {
        let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut oracle = Oracle {
            g,
            channel_nodes: Vec::new(),
            channel_ends: Vec::new(),
            costs: Vec::new(),
            routers: 0,
            memo: HashMap::new(),
        };
        for (i, n) in nodes.iter().enumerate() {
            if g.role(n) == Some(NodeRole::Router) {
                oracle.routers |= 1 << i;
            }
        }
        for c in g.channels() {
            let (a, b) = (index[c.a.as_str()], index[c.b.as_str()]);
            oracle.channel_nodes.push(1 << a | 1 << b);
            oracle.channel_ends.push((a.min(b), a.max(b)));
            oracle.costs.push(c.cost);
        }
        oracle
    }

    fn nodes_of(&self, mask: u32) -> u64 {
        (0..self.costs.len())
            .filter(|i| mask >> i & 1 == 1)
            .fold(0, |acc, i| acc | self.channel_nodes[i])
    }

    fn trees(&mut self, mask: u32, u: usize, v: usize) -> Trees {
        let (u, v) = (u.min(v), u.max(v));
        if let Some(found) = self.memo.get(&(mask, u, v)) {
            return found.clone();
        }
        let ops = *self.g.op_costs();
        let mut out = Vec::new();
        if mask.count_ones() == 1 {
            let i = mask.trailing_zeros() as usize;
            if self.channel_ends[i] == (u, v) {
                out.push(Rc::new(OracleNode {
                    tree: OracleTree::Leaf(i),
                    cost: self.costs[i],
                }));
            }
        } else {
            let all = self.nodes_of(mask);
            let terminals = 1u64 << u | 1u64 << v;
            if all & terminals == terminals {
                let lowest = mask & mask.wrapping_neg();
                let mut part = (mask - 1) & mask;
                while part != 0 {
                    let rest = mask ^ part;
                    let (left_nodes, right_nodes) = (self.nodes_of(part), self.nodes_of(rest));
                    let shared = left_nodes & right_nodes;
                    if part & lowest != 0 && shared == terminals {
                        let lefts = self.trees(part, u, v);
                        let rights = self.trees(rest, u, v);
                        for l in lefts.iter() {
                            for r in rights.iter() {
                                if let Ok(cost) = l.cost.purify(r.cost, &ops) {
                                    out.push(Rc::new(OracleNode {
                                        tree: OracleTree::Purify(l.clone(), r.clone()),
                                        cost,
                                    }));
                                }
                            }
                        }
                    }
                    if shared.count_ones() == 1
                        && shared & terminals == 0
                        && shared & self.routers != 0
                        && left_nodes >> u & 1 == 1
                        && right_nodes >> v & 1 == 1
                    {
                        let x = shared.trailing_zeros() as usize;
                        let lefts = self.trees(part, u, x);
                        let rights = self.trees(rest, x, v);
                        for l in lefts.iter() {
                            for r in rights.iter() {
                                out.push(Rc::new(OracleNode {
                                    tree: OracleTree::Swap(l.clone(), r.clone()),
                                    cost: l.cost.swap(r.cost, &ops),
                                }));
                            }
                        }
                    }
                    part = (part - 1) & mask;
                }
            }
        }
        let out = Rc::new(out);
        self.memo.insert((mask, u, v), out.clone());
        out
    }
}

/// Reference optimum by exhaustive enumeration of every strategy tree over
/// every channel subset, with no harvesting and no reduction.
pub fn brute_force_best(
    g: &NetworkGraph,
    s: &str,
    t: &str,
    min_success: SuccessProb,
) -> Result<Option<(StrategyTree, CostVector)>, RouteError> {
    check_pair(g, s, t)?;
    let m = g.channel_count();
    if m > ORACLE_MAX_EDGES {
        return Err(RouteError::TooLarge {
            edges: m,
            limit: ORACLE_MAX_EDGES,
        });
    }
    let ids: Vec<&str> = g.channels().map(|c| c.id.as_str()).collect();
    let nodes: Vec<&str> = g
        .node_ids()
        .filter(|n| *n == s || *n == t || g.degree(n).unwrap() > 0)
        .collect();
    let (si, ti) = (
        nodes.iter().position(|n| *n == s).unwrap(),
        nodes.iter().position(|n| *n == t).unwrap(),
    );
    let mut oracle = Oracle::new(g, &nodes);
    let mut best = None;
    for mask in 1u32..(1 << m) {
        let trees = oracle.trees(mask, si, ti);
        // All trees over one subset agree up to rounding; keep the best
        // raw one and compare subsets through their canonical forms.
        let Some(top) = trees.iter().max_by(|a, b| {
            a.cost
                .fidelity
                .value()
                .total_cmp(&b.cost.fidelity.value())
                .then_with(|| a.cost.success.value().total_cmp(&b.cost.success.value()))
        }) else {
            continue;
        };
        let candidate = canonical_candidate(&top.to_strategy(&ids), g, s, t)?;
        if candidate.cost.success >= min_success {
            best = better(best, Some(candidate));
        }
    }
    Ok(best.map(|c| (c.tree, c.cost)))
}
