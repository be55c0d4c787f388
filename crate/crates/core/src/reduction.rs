//! Series-parallel rewriting of network graphs.
//!
//! A router of degree two is eliminated by entanglement swapping (series
//! step); two channels joining the same pair of nodes are merged by
//! purification (parallel step). Each step produces a synthetic channel
//! `r<n>` and is logged in a [`ReductionTrace`], from which the
//! [`StrategyTree`] of every synthetic channel can be rebuilt.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraError, CostVector};
use crate::graph::{GraphError, NetworkGraph, NodeRole};
use crate::json;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("node {0:?} is not a router")]
    NotRouter(String),
    #[error("router {router:?} has degree {degree}, expected 2")]
    WrongDegree { router: String, degree: usize },
    #[error("both channels of router {0:?} lead to the same node")]
    WouldSelfLoop(String),
    #[error("channels {0:?} and {1:?} do not join the same pair of nodes")]
    NotParallel(String, String),
    #[error("strategy uses channel {0:?} more than once")]
    DuplicateLeaf(String),
    #[error("strategy tree does not connect {0:?} and {1:?} as a series-parallel structure")]
    Disconnected(String, String),
}

/// Executable plan of swap and purify operations over concrete channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum StrategyTree {
    Leaf {
        channel: String,
    },
    Swap {
        left: Box<StrategyTree>,
        right: Box<StrategyTree>,
    },
    Purify {
        left: Box<StrategyTree>,
        right: Box<StrategyTree>,
    },
}

impl StrategyTree {
    pub fn leaf(channel: impl Into<String>) -> Self {
        StrategyTree::Leaf {
            channel: channel.into(),
        }
    }

    pub fn swap(left: StrategyTree, right: StrategyTree) -> Self {
        StrategyTree::Swap {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn purify(left: StrategyTree, right: StrategyTree) -> Self {
        StrategyTree::Purify {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Leaf channel ids, left to right.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                StrategyTree::Leaf { channel } => out.push(channel.as_str()),
                StrategyTree::Swap { left, right } | StrategyTree::Purify { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    pub fn size(&self) -> usize {
        match self {
            StrategyTree::Leaf { .. } => 1,
            StrategyTree::Swap { left, right } | StrategyTree::Purify { left, right } => 1 + left.size() + right.size(),
        }
    }

    /// Canonical JSON text; the tie-breaker between equally good strategies.
    pub fn serialization(&self) -> String {
        json::to_canonical_string(self).expect("strategy trees always serialize")
    }
}

impl fmt::Display for StrategyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyTree::Leaf { channel } => f.write_str(channel),
            StrategyTree::Swap { left, right } => write!(f, "swap({left}, {right})"),
            StrategyTree::Purify { left, right } => write!(f, "purify({left}, {right})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Series,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionStep {
    pub kind: StepKind,
    /// Consumed channel ids; the left operand comes first.
    pub consumed: Vec<String>,
    /// Router eliminated by a series step.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub router: Option<String>,
    pub produced: String,
    /// Endpoints of the produced channel.
    pub between: [String; 2],
    pub cost: CostVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalSummary {
    pub nodes: Vec<String>,
    pub channels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionTrace {
    pub steps: Vec<ReductionStep>,
    pub terminal: TerminalSummary,
}

impl ReductionTrace {
    /// Strategy trees of every synthetic channel that survives the trace.
    pub fn strategies(&self) -> BTreeMap<String, StrategyTree> {
        let mut trees: HashMap<&str, StrategyTree> = HashMap::new();
        for step in &self.steps {
            let mut take = |id: &str| trees.remove(id).unwrap_or_else(|| StrategyTree::leaf(id));
            let left = take(&step.consumed[0]);
            let right = take(&step.consumed[1]);
            let tree = match step.kind {
                StepKind::Series => StrategyTree::swap(left, right),
                StepKind::Parallel => StrategyTree::purify(left, right),
            };
            trees.insert(&step.produced, tree);
        }
        self.terminal
            .channels
            .iter()
            .filter_map(|id| trees.remove(id.as_str()).map(|t| (id.clone(), t)))
            .collect()
    }
}

fn apply_series(g: &mut NetworkGraph, router: &str, produced: &str) -> Result<ReductionStep, ReductionError> {
    match g.role(router) {
        None => return Err(GraphError::UnknownNode(router.to_string()).into()),
        Some(NodeRole::Endpoint) => return Err(ReductionError::NotRouter(router.to_string())),
        Some(NodeRole::Router) => {}
    }
    let incident = g.incident(router)?;
    if incident.len() != 2 {
        return Err(ReductionError::WrongDegree {
            router: router.to_string(),
            degree: incident.len(),
        });
    }
    let mut ids = incident.iter();
    let (c1, c2) = (ids.next().unwrap().clone(), ids.next().unwrap().clone());
    let left = g.channel(&c1).unwrap();
    let right = g.channel(&c2).unwrap();
    let u = left.other(router).unwrap().to_string();
    let v = right.other(router).unwrap().to_string();
    if u == v {
        return Err(ReductionError::WouldSelfLoop(router.to_string()));
    }
    let cost = left.cost.swap(right.cost, g.op_costs());
    g.remove_channel(&c1);
    g.remove_channel(&c2);
    g.remove_isolated_node(router);
    g.add_channel(produced, &u, &v, cost)?;
    Ok(ReductionStep {
        kind: StepKind::Series,
        consumed: vec![c1, c2],
        router: Some(router.to_string()),
        produced: produced.to_string(),
        between: [u, v],
        cost,
    })
}

fn apply_parallel(g: &mut NetworkGraph, c1: &str, c2: &str, produced: &str) -> Result<ReductionStep, ReductionError> {
    let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
    let left = g
        .channel(lo)
        .ok_or_else(|| GraphError::UnknownChannel(lo.to_string()))?;
    let right = g
        .channel(hi)
        .ok_or_else(|| GraphError::UnknownChannel(hi.to_string()))?;
    if lo == hi || !left.joins(&right.a, &right.b) {
        return Err(ReductionError::NotParallel(lo.to_string(), hi.to_string()));
    }
    let cost = left.cost.purify(right.cost, g.op_costs())?;
    let (a, b) = (left.a.clone(), left.b.clone());
    g.remove_channel(lo);
    g.remove_channel(hi);
    g.add_channel(produced, &a, &b, cost)?;
    Ok(ReductionStep {
        kind: StepKind::Parallel,
        consumed: vec![lo.to_string(), hi.to_string()],
        router: None,
        produced: produced.to_string(),
        between: [a, b],
        cost,
    })
}

/// Eliminates a degree-2 router by swapping across it.
pub fn series_step(g: &NetworkGraph, router: &str) -> Result<(NetworkGraph, ReductionStep), ReductionError> {
    let mut out = g.clone();
    let produced = g.next_synthetic_id();
    let step = apply_series(&mut out, router, &produced)?;
    Ok((out, step))
}

/// Merges two parallel channels by purification.
pub fn parallel_step(g: &NetworkGraph, c1: &str, c2: &str) -> Result<(NetworkGraph, ReductionStep), ReductionError> {
    let mut out = g.clone();
    let produced = g.next_synthetic_id();
    let step = apply_parallel(&mut out, c1, c2, &produced)?;
    Ok((out, step))
}

/// A single applicable rewrite.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rewrite {
    Series(String),
    Parallel(String, String),
}

impl Rewrite {
    pub fn apply(&self, g: &NetworkGraph) -> Result<(NetworkGraph, ReductionStep), ReductionError> {
        match self {
            Rewrite::Series(router) => series_step(g, router),
            Rewrite::Parallel(c1, c2) => parallel_step(g, c1, c2),
        }
    }
}

/// Every rewrite applicable to `g`, in sorted order. Quadratic in the size
/// of parallel groups; meant for exploring alternative reduction orders.
pub fn available_rewrites(g: &NetworkGraph) -> Vec<Rewrite> {
    let mut groups: BTreeMap<(String, String), Vec<&str>> = BTreeMap::new();
    for c in g.channels() {
        groups.entry(pair_key(&c.a, &c.b)).or_default().push(&c.id);
    }
    let mut out = Vec::new();
    for ids in groups.values() {
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                out.push(Rewrite::Parallel(a.to_string(), b.to_string()));
            }
        }
    }
    for node in g.node_ids() {
        if g.role(node) != Some(NodeRole::Router) {
            continue;
        }
        let incident = g.incident(node).unwrap();
        if incident.len() != 2 {
            continue;
        }
        let ends: Vec<&str> = incident
            .iter()
            .map(|c| g.channel(c).unwrap().other(node).unwrap())
            .collect();
        if ends[0] != ends[1] {
            out.push(Rewrite::Series(node.to_string()));
        }
    }
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub graph: NetworkGraph,
    pub trace: ReductionTrace,
    /// Strategy of every synthetic channel in the terminal graph.
    pub strategies: BTreeMap<String, StrategyTree>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Work queues of the fixpoint scheduler. Entries are validated lazily
/// when popped, so stale ones are simply skipped.
struct Scheduler {
    groups: HashMap<(String, String), BTreeSet<String>>,
    parallel: BTreeSet<String>,
    series: BTreeSet<(String, String)>,
}

impl Scheduler {
    fn new(g: &NetworkGraph) -> Self {
        let mut s = Scheduler {
            groups: HashMap::new(),
            parallel: BTreeSet::new(),
            series: BTreeSet::new(),
        };
        for c in g.channels() {
            s.groups.entry(pair_key(&c.a, &c.b)).or_default().insert(c.id.clone());
        }
        for group in s.groups.values().filter(|grp| grp.len() >= 2) {
            s.parallel.extend(group.iter().cloned());
        }
        for node in g.node_ids() {
            s.push_series(g, node);
        }
        s
    }

    fn push_series(&mut self, g: &NetworkGraph, node: &str) {
        if g.role(node) != Some(NodeRole::Router) {
            return;
        }
        let incident = g.incident(node).unwrap();
        if incident.len() == 2 {
            self.series
                .insert((incident.first().unwrap().clone(), node.to_string()));
        }
    }

    fn add(&mut self, g: &NetworkGraph, channel: &str) {
        let c = g.channel(channel).unwrap();
        let group = self.groups.entry(pair_key(&c.a, &c.b)).or_default();
        group.insert(channel.to_string());
        if group.len() >= 2 {
            self.parallel.extend(group.iter().cloned());
        }
    }

    fn remove(&mut self, a: &str, b: &str, channel: &str) {
        let key = pair_key(a, b);
        if let Some(group) = self.groups.get_mut(&key) {
            group.remove(channel);
            if group.is_empty() {
                self.groups.remove(&key);
            }
        }
    }

    /// Lowest-id channel of a parallel group, with its lowest partner.
    fn next_parallel(&mut self, g: &NetworkGraph) -> Option<(String, String)> {
        while let Some(c) = self.parallel.pop_first() {
            let Some(channel) = g.channel(&c) else { continue };
            let group = &self.groups[&pair_key(&channel.a, &channel.b)];
            if group.len() >= 2 {
                let partner = group.iter().find(|id| **id != c).unwrap().clone();
                return Some((c, partner));
            }
        }
        None
    }

    fn next_series(&mut self, g: &NetworkGraph) -> Option<String> {
        while let Some((first, router)) = self.series.pop_first() {
            if g.role(&router) != Some(NodeRole::Router) {
                continue;
            }
            let incident = g.incident(&router).unwrap();
            if incident.len() != 2 || incident.first() != Some(&first) {
                continue;
            }
            let mut ids = incident.iter();
            let u = g.channel(ids.next().unwrap()).unwrap().other(&router).unwrap();
            let v = g.channel(ids.next().unwrap()).unwrap().other(&router).unwrap();
            if u != v {
                return Some(router);
            }
        }
        None
    }
}

/// Applies parallel and series steps until neither applies.
///
/// Parallel steps are exhausted before any series step; among candidates
/// the lowest channel id goes first. Every step removes a channel, so at
/// most `|E|` steps run, each in logarithmic time.
pub fn reduce_to_fixpoint(g: &NetworkGraph) -> Result<Reduction, ReductionError> {
    let mut work = g.clone();
    let mut sched = Scheduler::new(&work);
    let mut next = work.next_synthetic_id().trim_start_matches('r').parse::<u64>().unwrap();
    let mut steps = Vec::new();
    loop {
        let produced = format!("r{next}");
        let step = if let Some((c1, c2)) = sched.next_parallel(&work) {
            let (a, b) = {
                let c = work.channel(&c1).unwrap();
                (c.a.clone(), c.b.clone())
            };
            let step = apply_parallel(&mut work, &c1, &c2, &produced)?;
            sched.remove(&a, &b, &c1);
            sched.remove(&a, &b, &c2);
            sched.add(&work, &produced);
            sched.push_series(&work, &a);
            sched.push_series(&work, &b);
            step
        } else if let Some(router) = sched.next_series(&work) {
            let step = apply_series(&mut work, &router, &produced)?;
            let [u, v] = &step.between;
            sched.remove(&router, u, &step.consumed[0]);
            sched.remove(&router, v, &step.consumed[1]);
            sched.add(&work, &produced);
            sched.push_series(&work, u);
            sched.push_series(&work, v);
            step
        } else {
            break;
        };
        steps.push(step);
        next += 1;
    }
    let trace = ReductionTrace {
        steps,
        terminal: TerminalSummary {
            nodes: work.node_ids().map(String::from).collect(),
            channels: work.channels().map(|c| c.id.clone()).collect(),
        },
    };
    let strategies = trace.strategies();
    Ok(Reduction {
        graph: work,
        trace,
        strategies,
    })
}

/// Re-applies a trace step by step with the public step functions.
pub fn replay_trace(g: &NetworkGraph, trace: &ReductionTrace) -> Result<NetworkGraph, ReductionError> {
    let mut current = g.clone();
    for step in &trace.steps {
        let (next, _) = match step.kind {
            StepKind::Series => series_step(&current, step.router.as_deref().unwrap_or_default())?,
            StepKind::Parallel => parallel_step(&current, &step.consumed[0], &step.consumed[1])?,
        };
        current = next;
    }
    Ok(current)
}

/// True iff `g` is exactly `s`, `t` and one channel between them.
pub fn is_fully_reduced_pair(g: &NetworkGraph, s: &str, t: &str) -> Result<bool, ReductionError> {
    for node in [s, t] {
        if !g.contains_node(node) {
            return Err(GraphError::UnknownNode(node.to_string()).into());
        }
    }
    Ok(s != t && g.node_count() == 2 && g.channel_count() == 1 && g.channels().next().unwrap().joins(s, t))
}

fn evaluate_inner(tree: &StrategyTree, g: &NetworkGraph) -> Result<CostVector, ReductionError> {
    match tree {
        StrategyTree::Leaf { channel } => g
            .channel(channel)
            .map(|c| c.cost)
            .ok_or_else(|| GraphError::UnknownChannel(channel.clone()).into()),
        StrategyTree::Swap { left, right } => {
            let l = evaluate_inner(left, g)?;
            let r = evaluate_inner(right, g)?;
            Ok(l.swap(r, g.op_costs()))
        }
        StrategyTree::Purify { left, right } => {
            let l = evaluate_inner(left, g)?;
            let r = evaluate_inner(right, g)?;
            Ok(l.purify(r, g.op_costs())?)
        }
    }
}

/// Cost vector of executing `tree` over the channels of `g`.
pub fn evaluate_strategy(tree: &StrategyTree, g: &NetworkGraph) -> Result<CostVector, ReductionError> {
    let mut seen = HashSet::new();
    for leaf in tree.leaves() {
        if !seen.insert(leaf) {
            return Err(ReductionError::DuplicateLeaf(leaf.to_string()));
        }
    }
    evaluate_inner(tree, g)
}

/// A strategy with nested swaps and nested purifications flattened.
enum Flat<'a> {
    Leaf(&'a str),
    Series(Vec<Flat<'a>>),
    Parallel(Vec<Flat<'a>>),
}

fn flatten(tree: &StrategyTree) -> Flat<'_> {
    match tree {
        StrategyTree::Leaf { channel } => Flat::Leaf(channel),
        StrategyTree::Swap { left, right } => {
            let mut parts = Vec::new();
            for child in [flatten(left), flatten(right)] {
                match child {
                    Flat::Series(inner) => parts.extend(inner),
                    other => parts.push(other),
                }
            }
            Flat::Series(parts)
        }
        StrategyTree::Purify { left, right } => {
            let mut parts = Vec::new();
            for child in [flatten(left), flatten(right)] {
                match child {
                    Flat::Parallel(inner) => parts.extend(inner),
                    other => parts.push(other),
                }
            }
            Flat::Parallel(parts)
        }
    }
}

impl Flat<'_> {
    /// The two nodes this sub-strategy connects.
    fn terminals<'g>(&self, g: &'g NetworkGraph) -> Result<(&'g str, &'g str), ReductionError> {
        match self {
            Flat::Leaf(id) => {
                let c = g
                    .channel(id)
                    .ok_or_else(|| GraphError::UnknownChannel(id.to_string()))?;
                Ok((&c.a, &c.b))
            }
            Flat::Parallel(children) => children[0].terminals(g),
            Flat::Series(children) => {
                let mut count: BTreeMap<&str, usize> = BTreeMap::new();
                for child in children {
                    let (a, b) = child.terminals(g)?;
                    *count.entry(a).or_default() += 1;
                    *count.entry(b).or_default() += 1;
                }
                let ends: Vec<&str> = count.iter().filter(|(_, n)| **n % 2 == 1).map(|(k, _)| *k).collect();
                match ends.as_slice() {
                    [a, b] => Ok((a, b)),
                    _ => Err(ReductionError::Disconnected(String::new(), String::new())),
                }
            }
        }
    }

    fn orient(&self, g: &NetworkGraph, from: &str, to: &str) -> Result<StrategyTree, ReductionError> {
        let disconnected = || ReductionError::Disconnected(from.to_string(), to.to_string());
        match self {
            Flat::Leaf(id) => {
                let c = g
                    .channel(id)
                    .ok_or_else(|| GraphError::UnknownChannel(id.to_string()))?;
                if c.joins(from, to) {
                    Ok(StrategyTree::leaf(*id))
                } else {
                    Err(disconnected())
                }
            }
            Flat::Parallel(children) => {
                let mut oriented = children
                    .iter()
                    .map(|c| c.orient(g, from, to).map(|t| (t.serialization(), t)))
                    .collect::<Result<Vec<_>, _>>()?;
                oriented.sort_by(|x, y| x.0.cmp(&y.0));
                let mut it = oriented.into_iter().map(|(_, t)| t);
                let first = it.next().unwrap();
                Ok(it.fold(first, StrategyTree::purify))
            }
            Flat::Series(children) => {
                let ends = children.iter().map(|c| c.terminals(g)).collect::<Result<Vec<_>, _>>()?;
                let mut used = vec![false; children.len()];
                let mut at = from;
                let mut chain = Vec::with_capacity(children.len());
                for _ in 0..children.len() {
                    let i = (0..children.len())
                        .find(|&i| !used[i] && (ends[i].0 == at || ends[i].1 == at))
                        .ok_or_else(disconnected)?;
                    used[i] = true;
                    let next = if ends[i].0 == at { ends[i].1 } else { ends[i].0 };
                    chain.push(children[i].orient(g, at, next)?);
                    at = next;
                }
                if at != to {
                    return Err(disconnected());
                }
                let mut it = chain.into_iter();
                let first = it.next().unwrap();
                Ok(it.fold(first, StrategyTree::swap))
            }
        }
    }
}

/// Rewrites a strategy connecting `s` and `t` into its canonical form.
///
/// Strategies that differ only by the order or grouping of their swaps and
/// purifications share one canonical form, so equal plans always evaluate
/// to bit-identical cost vectors. Swap chains are folded from `s` towards
/// `t`; the operands of a purification are folded in serialization order.
pub fn canonicalize(tree: &StrategyTree, g: &NetworkGraph, s: &str, t: &str) -> Result<StrategyTree, ReductionError> {
    flatten(tree).orient(g, s, t)
}
