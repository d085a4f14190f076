//! Pluggable set-operator reasoners executed over query graphs.
//!
//! [`order_nodes`] fixes an evaluation order (constants first, then the most
//! remote existential frontier node, free variables last); [`execute`] makes
//! one forward pass computing a state per node from its already-computed
//! neighbours. [`CrispOps`] is the exact set-semantics reference operator set.

use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground::GroundedSample;
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::query::{classify_topology, AbstractQueryGraph, GroundedQueryGraph, NodeId, NodeKind, Topology};

/// Set operators a reasoner provides. States are opaque to the scaffold.
pub trait OperatorInterface: Sync {
    type State: Clone;

    fn num_entities(&self) -> usize;
    fn inverse(&self, r: RelationId) -> RelationId;
    fn entity_encode(&self, e: EntityId) -> Self::State;
    fn projection(&self, s: &Self::State, r: RelationId) -> Self::State;
    fn negated_projection(&self, s: &Self::State, r: RelationId) -> Self::State;
    fn intersection(&self, states: &[Self::State]) -> Self::State;
    fn score(&self, s: &Self::State, e: EntityId) -> f64;
}

/// Exact set semantics over one knowledge graph.
pub struct CrispOps<'a> {
    kg: &'a KnowledgeGraph,
}

impl<'a> CrispOps<'a> {
    pub fn new(kg: &'a KnowledgeGraph) -> Self {
        CrispOps { kg }
    }
}

impl OperatorInterface for CrispOps<'_> {
    type State = FixedBitSet;

    fn num_entities(&self) -> usize {
        self.kg.num_entities()
    }

    fn inverse(&self, r: RelationId) -> RelationId {
        self.kg.inverse(r)
    }

    fn entity_encode(&self, e: EntityId) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(self.kg.num_entities());
        s.insert(e as usize);
        s
    }

    fn projection(&self, s: &FixedBitSet, r: RelationId) -> FixedBitSet {
        let mut out = FixedBitSet::with_capacity(self.kg.num_entities());
        for h in s.ones() {
            for &t in self.kg.tails_unchecked(h as EntityId, r) {
                out.insert(t as usize);
            }
        }
        out
    }

    fn negated_projection(&self, s: &FixedBitSet, r: RelationId) -> FixedBitSet {
        let mut out = self.projection(s, r);
        out.toggle_range(..);
        out
    }

    fn intersection(&self, states: &[FixedBitSet]) -> FixedBitSet {
        let mut it = states.iter();
        let mut out = it.next().cloned().unwrap_or_else(|| {
            let mut all = FixedBitSet::with_capacity(self.kg.num_entities());
            all.insert_range(..);
            all
        });
        for s in it {
            out.intersect_with(s);
        }
        out
    }

    fn score(&self, s: &FixedBitSet, e: EntityId) -> f64 {
        if s.contains(e as usize) {
            1.0
        } else {
            0.0
        }
    }
}

/// Evaluation order of the nodes of an abstract graph.
pub type NodeOrdering = Vec<NodeId>;

/// Node ordering: constants first (ascending id); then repeatedly the
/// existential frontier node with the largest summed distance to the free
/// nodes, or, if there is none, the lowest-id free frontier node. Ties go to
/// the lowest node id.
pub fn order_nodes(g: &AbstractQueryGraph) -> Result<NodeOrdering> {
    let n = g.num_nodes();
    let adj = g.adjacency();
    let free = g.free_nodes();
    let remote: Vec<usize> = {
        let per_free: Vec<Vec<Option<usize>>> = free.iter().map(|&f| g.distances_from(&[f])).collect();
        (0..n)
            .map(|u| per_free.iter().map(|d| d[u].unwrap_or(n)).sum())
            .collect()
    };
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let mut explored = vec![false; n];
    let mut s1: BTreeSet<NodeId> = BTreeSet::new();
    let mut s2: BTreeSet<NodeId> = BTreeSet::new();
    let enqueue = |v: NodeId, s1: &mut BTreeSet<NodeId>, s2: &mut BTreeSet<NodeId>| match g.kind(v) {
        NodeKind::Existential => {
            s1.insert(v);
        }
        NodeKind::Free => {
            s2.insert(v);
        }
        NodeKind::Constant => {}
    };
    for u in 0..n {
        if g.kind(u) == NodeKind::Constant {
            order.push(u);
            placed[u] = true;
            for &v in &adj[u] {
                enqueue(v, &mut s1, &mut s2);
            }
        }
    }
    while order.len() < n {
        let next = s1
            .iter()
            .copied()
            .max_by(|&a, &b| remote[a].cmp(&remote[b]).then(b.cmp(&a)))
            .or_else(|| s2.iter().next().copied())
            .ok_or_else(|| Error::contract("query graph is not connected"))?;
        s1.remove(&next);
        s2.remove(&next);
        explored[next] = true;
        for &v in &adj[next] {
            if !explored[v] && !placed[v] {
                enqueue(v, &mut s1, &mut s2);
            }
        }
        order.push(next);
        placed[next] = true;
    }
    Ok(order)
}

/// States per node of the grounded query's shape (variables keep their ids;
/// constant occurrences follow). `None` where no state could be computed.
pub struct Execution<S> {
    pub states: Vec<Option<S>>,
    pub free_vars: Vec<NodeId>,
}

/// Single forward pass: constants are encoded, each variable combines the
/// (negated) projections of its already-computed predecessors.
pub fn execute<O: OperatorInterface>(q: &GroundedQueryGraph, ordering: &[NodeId], ops: &O) -> Result<Execution<O::State>> {
    let shape = q.shape()?;
    let g = &shape.graph;
    if ordering.len() != g.num_nodes() || ordering.iter().collect::<BTreeSet<_>>().len() != g.num_nodes() {
        return Err(Error::contract("ordering does not cover the query graph"));
    }
    let mut position = vec![0; g.num_nodes()];
    for (i, &u) in ordering.iter().enumerate() {
        position[u] = i;
    }
    let mut states: Vec<Option<O::State>> = vec![None; g.num_nodes()];
    for &u in ordering {
        if let Some(e) = shape.binding[u] {
            states[u] = Some(ops.entity_encode(e));
            continue;
        }
        let mut inputs = Vec::new();
        for (i, e) in g.edges().iter().enumerate() {
            if !e.touches(u) {
                continue;
            }
            let w = e.other(u);
            if position[w] >= position[u] {
                continue;
            }
            let Some(sw) = &states[w] else { continue };
            let r = if e.u == w { q.edges[i].r } else { ops.inverse(q.edges[i].r) };
            inputs.push(if e.neg {
                ops.negated_projection(sw, r)
            } else {
                ops.projection(sw, r)
            });
        }
        states[u] = match inputs.len() {
            0 => None,
            1 => inputs.pop(),
            _ => Some(ops.intersection(&inputs)),
        };
    }
    for &f in &q.free_vars {
        if states[f].is_none() {
            return Err(Error::Execution(format!("free variable {f} has no state")));
        }
    }
    Ok(Execution {
        states,
        free_vars: q.free_vars.clone(),
    })
}

/// Per free variable: entities sorted by descending score, ties by id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingTable {
    pub free_vars: Vec<NodeId>,
    pub orders: Vec<Vec<EntityId>>,
    pub scores: Vec<Vec<f64>>,
}

impl RankingTable {
    /// 1-based position of `e` in the ranking of free variable `i`.
    pub fn rank_of(&self, i: usize, e: EntityId) -> usize {
        self.orders[i].iter().position(|&x| x == e).expect("entity in ranking") + 1
    }

    /// `#{x != e : score(x) >= score(e)}` for free variable `i`.
    pub fn ge_count(&self, i: usize, e: EntityId) -> usize {
        let s = self.scores[i][e as usize];
        self.scores[i]
            .iter()
            .enumerate()
            .filter(|&(x, &v)| x != e as usize && v >= s)
            .count()
    }
}

pub fn rank<O: OperatorInterface>(exec: &Execution<O::State>, ops: &O) -> Result<RankingTable> {
    let n = ops.num_entities();
    let mut orders = Vec::new();
    let mut scores = Vec::new();
    for &f in &exec.free_vars {
        let state = exec.states[f]
            .as_ref()
            .ok_or_else(|| Error::Execution(format!("free variable {f} has no state")))?;
        let sc: Vec<f64> = (0..n as EntityId).map(|e| ops.score(state, e)).collect();
        orders.push(sort_by_score(&sc));
        scores.push(sc);
    }
    Ok(RankingTable {
        free_vars: exec.free_vars.clone(),
        orders,
        scores,
    })
}

/// Entity ids by descending score, ascending id on ties.
pub fn sort_by_score(scores: &[f64]) -> Vec<EntityId> {
    let mut order: Vec<EntityId> = (0..scores.len() as EntityId).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    order
}

/// Score and rank information of one entity for one free variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityRank {
    pub entity: EntityId,
    pub score: f64,
    /// Position in the full ranking (1 = best).
    pub rank: usize,
    /// Number of other entities scoring at least as high.
    pub ge_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRanks {
    pub var: NodeId,
    pub entities: Vec<EntityRank>,
}

/// Serialised reasoner output for one sample: ranks of every answer entity
/// (easy or hard) per free variable, enough to compute all metrics without
/// full permutations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub formula_id: String,
    pub sample: usize,
    pub free: Vec<VariableRanks>,
}

impl RankingRecord {
    pub fn lookup(&self, i: usize, e: EntityId) -> Option<&EntityRank> {
        self.free.get(i)?.entities.iter().find(|r| r.entity == e)
    }
}

/// Runs the ordering/execution/ranking scaffold on one sample.
pub fn infer_sample<O: OperatorInterface>(index: usize, s: &GroundedSample, ops: &O) -> Result<RankingRecord> {
    let shape = s.query.shape()?;
    let ordering = order_nodes(&shape.graph)?;
    let exec = execute(&s.query, &ordering, ops)?;
    let table = rank(&exec, ops)?;
    let all = s.all_answers();
    let mut free = Vec::new();
    for (i, &var) in s.query.free_vars.iter().enumerate() {
        let mut entities: Vec<EntityId> = all.tuples().iter().map(|t| t[i]).collect();
        entities.sort_unstable();
        entities.dedup();
        let mut position = vec![0usize; ops.num_entities()];
        for (p, &e) in table.orders[i].iter().enumerate() {
            position[e as usize] = p + 1;
        }
        let ranks = entities
            .into_iter()
            .map(|e| EntityRank {
                entity: e,
                score: table.scores[i][e as usize],
                rank: position[e as usize],
                ge_count: table.ge_count(i, e),
            })
            .collect();
        free.push(VariableRanks { var, entities: ranks });
    }
    Ok(RankingRecord {
        formula_id: s.formula_id.clone(),
        sample: index,
        free,
    })
}

/// Tree-form types: one free variable, no negation, acyclic simple graph, and
/// every leaf other than the free node is a constant. These are exactly the
/// shapes an operator tree of projections and intersections rooted at the
/// free variable can express.
pub fn is_tree_form(g: &AbstractQueryGraph) -> bool {
    let free = g.free_nodes();
    free.len() == 1
        && !g.has_negation()
        && matches!(classify_topology(g), Ok(Topology::Sdag))
        && (0..g.num_nodes()).all(|u| u == free[0] || g.degree(u) != 1 || g.kind(u) == NodeKind::Constant)
}
