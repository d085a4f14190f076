//! Abstract and grounded query graphs, topology classes, canonical forms and
//! answer sets.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Constant,
    Existential,
    Free,
}

impl NodeKind {
    pub fn is_variable(self) -> bool {
        self != NodeKind::Constant
    }

    fn letter(self) -> char {
        match self {
            NodeKind::Constant => 'c',
            NodeKind::Existential => 'e',
            NodeKind::Free => 'f',
        }
    }
}

/// An undirected abstract edge; `neg` marks a negated atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AbstractEdge {
    pub u: NodeId,
    pub v: NodeId,
    #[serde(default)]
    pub neg: bool,
}

impl AbstractEdge {
    pub fn pos(u: NodeId, v: NodeId) -> Self {
        AbstractEdge { u, v, neg: false }
    }

    pub fn neg(u: NodeId, v: NodeId) -> Self {
        AbstractEdge { u, v, neg: true }
    }

    pub fn other(&self, n: NodeId) -> NodeId {
        if self.u == n {
            self.v
        } else {
            self.u
        }
    }

    pub fn touches(&self, n: NodeId) -> bool {
        self.u == n || self.v == n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Topology {
    #[serde(rename = "SDAG")]
    Sdag,
    Multi,
    Cyclic,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Sdag => "SDAG",
            Topology::Multi => "Multi",
            Topology::Cyclic => "Cyclic",
        })
    }
}

/// The (constants, existentials, free, topology) cell a query type falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypeGroup {
    pub constants: usize,
    pub existential: usize,
    pub free: usize,
    pub topology: Topology,
}

/// Query skeleton: node kinds plus undirected, possibly parallel edges.
///
/// Node ids are `0..num_nodes()`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbstractQueryGraph {
    kinds: Vec<NodeKind>,
    edges: Vec<AbstractEdge>,
}

#[derive(Serialize, Deserialize)]
struct RawNode {
    id: NodeId,
    kind: NodeKind,
}

#[derive(Serialize, Deserialize)]
struct RawAbstract {
    nodes: Vec<RawNode>,
    edges: Vec<AbstractEdge>,
}

impl Serialize for AbstractQueryGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawAbstract {
            nodes: self
                .kinds
                .iter()
                .enumerate()
                .map(|(id, &kind)| RawNode { id, kind })
                .collect(),
            edges: self.edges.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AbstractQueryGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawAbstract::deserialize(d)?;
        let n = raw.nodes.len();
        let mut kinds = vec![None; n];
        for node in raw.nodes {
            if node.id >= n {
                return Err(serde::de::Error::custom(format!(
                    "node id {} not in 0..{n}",
                    node.id
                )));
            }
            if kinds[node.id].replace(node.kind).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate node id {}", node.id)));
            }
        }
        let kinds = kinds.into_iter().map(Option::unwrap).collect();
        AbstractQueryGraph::new(kinds, raw.edges).map_err(serde::de::Error::custom)
    }
}

impl AbstractQueryGraph {
    /// Structural construction: ids in range and no self-loops. The semantic
    /// invariants are checked by [`validate`](Self::validate).
    pub fn new(kinds: Vec<NodeKind>, edges: Vec<AbstractEdge>) -> Result<Self> {
        for e in &edges {
            if e.u >= kinds.len() || e.v >= kinds.len() {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 0..{}",
                    e.u,
                    e.v,
                    kinds.len()
                )));
            }
            if e.u == e.v {
                return Err(Error::InvalidGraph(format!("self-loop on node {}", e.u)));
            }
        }
        Ok(AbstractQueryGraph { kinds, edges })
    }

    /// Builds from a compact description such as `"cef"` plus `(u, v, neg)` triples.
    pub fn from_spec(kinds: &str, edges: &[(NodeId, NodeId, bool)]) -> Result<Self> {
        let kinds = kinds
            .chars()
            .map(|c| match c {
                'c' => Ok(NodeKind::Constant),
                'e' => Ok(NodeKind::Existential),
                'f' => Ok(NodeKind::Free),
                other => Err(Error::InvalidGraph(format!("unknown node kind '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = edges
            .iter()
            .map(|&(u, v, neg)| AbstractEdge { u, v, neg })
            .collect();
        Self::new(kinds, edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.kinds[n]
    }

    pub fn edges(&self) -> &[AbstractEdge] {
        &self.edges
    }

    pub fn nodes_of(&self, kind: NodeKind) -> Vec<NodeId> {
        (0..self.kinds.len()).filter(|&i| self.kinds[i] == kind).collect()
    }

    pub fn free_nodes(&self) -> Vec<NodeId> {
        self.nodes_of(NodeKind::Free)
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    pub fn num_negative(&self) -> usize {
        self.edges.iter().filter(|e| e.neg).count()
    }

    pub fn has_negation(&self) -> bool {
        self.edges.iter().any(|e| e.neg)
    }

    /// Neighbour lists (with multiplicity) over all edges.
    pub fn adjacency(&self) -> Vec<Vec<NodeId>> {
        let mut adj = vec![Vec::new(); self.kinds.len()];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        adj
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.edges.iter().filter(|e| e.touches(n)).count()
    }

    /// Undirected hop distances from the nearest source; `None` if unreachable.
    pub fn distances_from(&self, sources: &[NodeId]) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        let mut dist = vec![None; self.kinds.len()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.kinds.is_empty() || self.distances_from(&[0]).iter().all(Option::is_some)
    }

    pub fn group(&self) -> Result<TypeGroup> {
        Ok(TypeGroup {
            constants: self.count(NodeKind::Constant),
            existential: self.count(NodeKind::Existential),
            free: self.count(NodeKind::Free),
            topology: classify_topology(self)?,
        })
    }

    /// Checks every invariant of a query type: connected, at least one free
    /// node, no constant–constant edge, variables connected without the
    /// constants, and every variable incident to a positive edge.
    pub fn validate(&self) -> Result<()> {
        if self.count(NodeKind::Free) == 0 {
            return Err(Error::InvalidGraph("no free node".into()));
        }
        if !self.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        if !crate::enumerate::check_no_redundancy(self) {
            return Err(Error::InvalidGraph(
                "redundant part (constant-constant edge or constant-separated variables)".into(),
            ));
        }
        if !crate::enumerate::check_negation_placement(self) {
            return Err(Error::InvalidGraph(
                "a variable has only negative incident edges".into(),
            ));
        }
        Ok(())
    }

    /// Node permutation `perm[old] = new` applied to ids and edges.
    pub fn relabel(&self, perm: &[NodeId]) -> Self {
        let mut kinds = vec![NodeKind::Constant; self.kinds.len()];
        for (old, &new) in perm.iter().enumerate() {
            kinds[new] = self.kinds[old];
        }
        let edges = self
            .edges
            .iter()
            .map(|e| AbstractEdge {
                u: perm[e.u],
                v: perm[e.v],
                neg: e.neg,
            })
            .collect();
        AbstractQueryGraph { kinds, edges }
    }

    /// Canonical labelling: kinds ordered constant < existential < free and
    /// edges as `(min, max, neg)` sorted ascending. Isomorphic graphs map to
    /// equal values.
    pub fn canonicalize(&self) -> Self {
        let (perm, _) = canonical_labelling(self);
        let mut g = self.relabel(&perm);
        for e in &mut g.edges {
            if e.u > e.v {
                std::mem::swap(&mut e.u, &mut e.v);
            }
        }
        g.edges.sort();
        g
    }

    pub fn canonical_form(&self) -> CanonicalForm {
        canonical_form(self)
    }
}

/// Byte string identifying an abstract graph up to isomorphism.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalForm(pub Vec<u8>);

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

type EdgeKey = (NodeId, NodeId, bool);

/// Returns the best permutation (`perm[old] = new`) and the sorted edge list
/// it produces. Nodes are first bucketed by an isomorphism-invariant key
/// (kind, positive degree, negative degree, neighbour kinds); only
/// permutations inside a bucket are searched.
fn canonical_labelling(g: &AbstractQueryGraph) -> (Vec<NodeId>, Vec<EdgeKey>) {
    let n = g.num_nodes();
    let key = |i: NodeId| {
        let mut pos = 0usize;
        let mut neg = 0usize;
        let mut nbr: Vec<(NodeKind, bool)> = Vec::new();
        for e in g.edges.iter().filter(|e| e.touches(i)) {
            if e.neg {
                neg += 1;
            } else {
                pos += 1;
            }
            nbr.push((g.kinds[e.other(i)], e.neg));
        }
        nbr.sort();
        (g.kinds[i], pos, neg, nbr)
    };
    let keys: Vec<_> = (0..n).map(key).collect();
    let mut order: Vec<NodeId> = (0..n).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));
    let mut classes: Vec<Vec<NodeId>> = Vec::new();
    for &i in &order {
        match classes.last_mut() {
            Some(c) if keys[c[0]] == keys[i] => c.push(i),
            _ => classes.push(vec![i]),
        }
    }

    let mut perm = vec![0; n];
    let mut best: Option<(Vec<NodeId>, Vec<EdgeKey>)> = None;
    let mut members: Vec<Vec<NodeId>> = classes.clone();
    search_classes(g, &classes, &mut members, 0, 0, &mut perm, &mut best);
    best.unwrap_or_default()
}

fn edge_list(g: &AbstractQueryGraph, perm: &[NodeId]) -> Vec<EdgeKey> {
    let mut es: Vec<EdgeKey> = g
        .edges
        .iter()
        .map(|e| {
            let (a, b) = (perm[e.u], perm[e.v]);
            (a.min(b), a.max(b), e.neg)
        })
        .collect();
    es.sort_unstable();
    es
}

fn search_classes(
    g: &AbstractQueryGraph,
    classes: &[Vec<NodeId>],
    members: &mut Vec<Vec<NodeId>>,
    class: usize,
    base: usize,
    perm: &mut Vec<NodeId>,
    best: &mut Option<(Vec<NodeId>, Vec<EdgeKey>)>,
) {
    if class == classes.len() {
        let es = edge_list(g, perm);
        if best.as_ref().is_none_or(|(_, b)| es < *b) {
            *best = Some((perm.clone(), es));
        }
        return;
    }
    permute(g, classes, members, class, base, 0, perm, best);
}

#[allow(clippy::too_many_arguments)]
fn permute(
    g: &AbstractQueryGraph,
    classes: &[Vec<NodeId>],
    members: &mut Vec<Vec<NodeId>>,
    class: usize,
    base: usize,
    pos: usize,
    perm: &mut Vec<NodeId>,
    best: &mut Option<(Vec<NodeId>, Vec<EdgeKey>)>,
) {
    let len = classes[class].len();
    if pos == len {
        search_classes(g, classes, members, class + 1, base + len, perm, best);
        return;
    }
    for i in pos..len {
        members[class].swap(pos, i);
        perm[members[class][pos]] = base + pos;
        permute(g, classes, members, class, base, pos + 1, perm, best);
        members[class].swap(pos, i);
    }
}

/// Canonical byte string, e.g. `ccef|0:2:T,1:2:F,2:3:T`.
pub fn canonical_form(g: &AbstractQueryGraph) -> CanonicalForm {
    let (perm, edges) = canonical_labelling(g);
    let mut kinds = vec![NodeKind::Constant; g.num_nodes()];
    for (old, &new) in perm.iter().enumerate() {
        kinds[new] = g.kinds[old];
    }
    let mut s: String = kinds.iter().map(|k| k.letter()).collect();
    s.push('|');
    let parts: Vec<String> = edges
        .iter()
        .map(|&(u, v, neg)| format!("{u}:{v}:{}", if neg { 'F' } else { 'T' }))
        .collect();
    s.push_str(&parts.join(","));
    CanonicalForm(s.into_bytes())
}

/// Multi iff some node pair carries parallel edges, Cyclic iff the underlying
/// simple graph has a cycle, SDAG otherwise.
pub fn classify_topology(g: &AbstractQueryGraph) -> Result<Topology> {
    let mut pairs: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
    for e in &g.edges {
        *pairs.entry((e.u.min(e.v), e.u.max(e.v))).or_default() += 1;
    }
    let multi = pairs.values().any(|&m| m > 1);
    // Union-find over the simple graph; a merge that fails closes a cycle.
    let mut parent: Vec<usize> = (0..g.num_nodes()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut cyclic = false;
    for &(u, v) in pairs.keys() {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a == b {
            cyclic = true;
        } else {
            parent[a] = b;
        }
    }
    match (multi, cyclic) {
        (true, true) => Err(Error::Classification(
            "graph is both a multigraph and cyclic".into(),
        )),
        (true, false) => Ok(Topology::Multi),
        (false, true) => Ok(Topology::Cyclic),
        (false, false) => Ok(Topology::Sdag),
    }
}

/// One line of a types file: an abstract graph with its identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeRecord {
    pub formula_id: String,
    #[serde(flatten)]
    pub graph: AbstractQueryGraph,
}

/// A term of a grounded atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    #[serde(rename = "const")]
    Const(EntityId),
    #[serde(rename = "var")]
    Var(NodeId),
}

impl Term {
    pub fn var(self) -> Option<NodeId> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundedEdge {
    pub h: Term,
    pub r: RelationId,
    pub t: Term,
    #[serde(default)]
    pub neg: bool,
}

/// A conjunctive query: grounded atoms plus the ordered free variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundedQueryGraph {
    pub edges: Vec<GroundedEdge>,
    pub free_vars: Vec<NodeId>,
}

/// Abstract view of a grounded query: variables keep their node ids, every
/// constant occurrence becomes its own constant node after them.
#[derive(Debug, Clone)]
pub struct GroundedShape {
    pub graph: AbstractQueryGraph,
    /// Entity bound to each node (`None` for variables).
    pub binding: Vec<Option<EntityId>>,
}

impl GroundedQueryGraph {
    /// Distinct variable ids, ascending.
    pub fn variables(&self) -> Vec<NodeId> {
        let vars: BTreeSet<NodeId> = self
            .edges
            .iter()
            .flat_map(|e| [e.h.var(), e.t.var()])
            .flatten()
            .chain(self.free_vars.iter().copied())
            .collect();
        vars.into_iter().collect()
    }

    pub fn existential_vars(&self) -> Vec<NodeId> {
        self.variables()
            .into_iter()
            .filter(|v| !self.free_vars.contains(v))
            .collect()
    }

    pub fn arity(&self) -> usize {
        self.free_vars.len()
    }

    pub fn has_negation(&self) -> bool {
        self.edges.iter().any(|e| e.neg)
    }

    /// Range checks against a graph with `num_entities` entities and
    /// `num_relations` relation ids (inverses included).
    pub fn check_ranges(&self, num_entities: usize, num_relations: usize) -> Result<()> {
        if self.free_vars.is_empty() {
            return Err(Error::InvalidGraph("query has no free variable".into()));
        }
        let mut seen = BTreeSet::new();
        for &f in &self.free_vars {
            if !seen.insert(f) {
                return Err(Error::InvalidGraph(format!("free variable {f} listed twice")));
            }
        }
        for e in &self.edges {
            if e.r as usize >= num_relations {
                return Err(Error::contract(format!(
                    "relation id {} out of range ({num_relations})",
                    e.r
                )));
            }
            for t in [e.h, e.t] {
                if let Term::Const(c) = t {
                    if c as usize >= num_entities {
                        return Err(Error::contract(format!(
                            "entity id {c} out of range ({num_entities})"
                        )));
                    }
                }
            }
            if e.h.var().is_some() && e.h == e.t {
                return Err(Error::InvalidGraph("self-loop atom".into()));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<GroundedShape> {
        let vars = self.variables();
        let max_var = vars.iter().copied().max().map_or(0, |m| m + 1);
        let mut kinds = vec![NodeKind::Existential; max_var];
        let mut binding = vec![None; max_var];
        let mut present = vec![false; max_var];
        for &v in &vars {
            present[v] = true;
        }
        if present.iter().any(|p| !p) {
            return Err(Error::InvalidGraph(
                "variable ids are not contiguous from 0".into(),
            ));
        }
        for &f in &self.free_vars {
            kinds[f] = NodeKind::Free;
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        let node_of = |t: Term, kinds: &mut Vec<NodeKind>, binding: &mut Vec<Option<EntityId>>| match t {
            Term::Var(v) => v,
            Term::Const(c) => {
                kinds.push(NodeKind::Constant);
                binding.push(Some(c));
                kinds.len() - 1
            }
        };
        for e in &self.edges {
            let u = node_of(e.h, &mut kinds, &mut binding);
            let v = node_of(e.t, &mut kinds, &mut binding);
            edges.push(AbstractEdge { u, v, neg: e.neg });
        }
        Ok(GroundedShape {
            graph: AbstractQueryGraph::new(kinds, edges)?,
            binding,
        })
    }
}

/// Constant and relation choices turning an abstract graph into a query.
///
/// Edge `i` is grounded as `(term(u_i), relations[i], term(v_i))`; choosing an
/// inverse relation id expresses the opposite direction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grounding {
    pub constants: BTreeMap<NodeId, EntityId>,
    pub relations: Vec<Option<RelationId>>,
}

impl Grounding {
    pub fn for_graph(g: &AbstractQueryGraph) -> Self {
        Grounding {
            constants: BTreeMap::new(),
            relations: vec![None; g.edges().len()],
        }
    }

    /// Builds the grounded query. Variables are renumbered densely in node-id
    /// order, so free variables keep their relative order.
    pub fn apply(&self, g: &AbstractQueryGraph) -> Result<GroundedQueryGraph> {
        let mut var_id = vec![usize::MAX; g.num_nodes()];
        let mut next = 0;
        for (i, k) in g.kinds().iter().enumerate() {
            if k.is_variable() {
                var_id[i] = next;
                next += 1;
            }
        }
        let term = |n: NodeId| -> Result<Term> {
            if g.kind(n) == NodeKind::Constant {
                self.constants
                    .get(&n)
                    .map(|&e| Term::Const(e))
                    .ok_or_else(|| Error::contract(format!("constant node {n} is not grounded")))
            } else {
                Ok(Term::Var(var_id[n]))
            }
        };
        let mut edges = Vec::with_capacity(g.edges().len());
        for (i, e) in g.edges().iter().enumerate() {
            let r = self
                .relations
                .get(i)
                .copied()
                .flatten()
                .ok_or_else(|| Error::contract(format!("edge {i} has no relation")))?;
            edges.push(GroundedEdge {
                h: term(e.u)?,
                r,
                t: term(e.v)?,
                neg: e.neg,
            });
        }
        let free_vars = g.free_nodes().into_iter().map(|n| var_id[n]).collect();
        Ok(GroundedQueryGraph { edges, free_vars })
    }
}

/// A set of answer tuples of fixed arity, kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct AnswerSet {
    k: usize,
    tuples: Vec<Vec<EntityId>>,
}

impl AnswerSet {
    pub fn empty(k: usize) -> Self {
        AnswerSet {
            k,
            tuples: Vec::new(),
        }
    }

    pub fn from_tuples(k: usize, tuples: impl IntoIterator<Item = Vec<EntityId>>) -> Result<Self> {
        let mut tuples: Vec<Vec<EntityId>> = tuples.into_iter().collect();
        if let Some(t) = tuples.iter().find(|t| t.len() != k) {
            return Err(Error::contract(format!(
                "tuple of arity {} in an answer set of arity {k}",
                t.len()
            )));
        }
        tuples.sort_unstable();
        tuples.dedup();
        Ok(AnswerSet { k, tuples })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tuples(&self) -> &[Vec<EntityId>] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, tuple: &[EntityId]) -> bool {
        self.tuples
            .binary_search_by(|t| t.as_slice().cmp(tuple))
            .is_ok()
    }

    /// Tuples of `self` not in `other`.
    pub fn difference(&self, other: &AnswerSet) -> AnswerSet {
        AnswerSet {
            k: self.k,
            tuples: self
                .tuples
                .iter()
                .filter(|t| !other.contains(t))
                .cloned()
                .collect(),
        }
    }

    pub fn projection(&self, i: usize) -> Result<Vec<EntityId>> {
        free_var_projection(self, i)
    }
}

impl Serialize for AnswerSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tuples.serialize(s)
    }
}

pub fn union_answers(parts: &[AnswerSet]) -> Result<AnswerSet> {
    let Some(first) = parts.first() else {
        return Err(Error::contract("union of zero answer sets has no arity"));
    };
    let k = first.k;
    if let Some(p) = parts.iter().find(|p| p.k != k) {
        return Err(Error::contract(format!(
            "arity mismatch in union: {} vs {k}",
            p.k
        )));
    }
    AnswerSet::from_tuples(k, parts.iter().flat_map(|p| p.tuples.iter().cloned()))
}

/// Sorted set of the `i`-th components of all tuples.
pub fn free_var_projection(a: &AnswerSet, i: usize) -> Result<Vec<EntityId>> {
    if i >= a.k {
        return Err(Error::contract(format!(
            "projection index {i} out of range for arity {}",
            a.k
        )));
    }
    let set: BTreeSet<EntityId> = a.tuples.iter().map(|t| t[i]).collect();
    Ok(set.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(kinds: &str, edges: &[(usize, usize, bool)]) -> AbstractQueryGraph {
        AbstractQueryGraph::from_spec(kinds, edges).unwrap()
    }

    #[test]
    fn topology_examples() {
        assert_eq!(classify_topology(&g("cef", &[(0, 1, false), (1, 2, false)])).unwrap(), Topology::Sdag);
        let multi = g("cef", &[(0, 1, false), (0, 1, false), (1, 2, false)]);
        assert_eq!(classify_topology(&multi).unwrap(), Topology::Multi);
        let cyc = g("ceef", &[(0, 1, false), (1, 3, false), (3, 2, false), (2, 0, false)]);
        assert_eq!(classify_topology(&cyc).unwrap(), Topology::Cyclic);
        let both = g(
            "ceef",
            &[(0, 1, false), (1, 3, false), (3, 2, false), (2, 0, false), (0, 1, false)],
        );
        assert!(matches!(classify_topology(&both), Err(Error::Classification(_))));
    }

    #[test]
    fn canonical_form_examples() {
        let a = g("cef", &[(0, 1, false), (1, 2, false)]);
        let b = g("fec", &[(2, 1, false), (0, 1, false)]);
        assert_eq!(a.canonical_form(), b.canonical_form());
        // free node in the middle instead of the existential
        let c = g("cfe", &[(0, 1, false), (1, 2, false)]);
        assert_ne!(a.canonical_form(), c.canonical_form());
        let pos = g("cf", &[(0, 1, false)]);
        let neg = g("cf", &[(0, 1, true)]);
        assert_ne!(pos.canonical_form(), neg.canonical_form());
    }

    /// Isomorphism by brute force over all kind-preserving bijections.
    fn isomorphic(a: &AbstractQueryGraph, b: &AbstractQueryGraph) -> bool {
        use itertools_free::permutations;
        if a.kinds.len() != b.kinds.len() || a.edges.len() != b.edges.len() {
            return false;
        }
        let target = edge_list(b, &(0..b.num_nodes()).collect::<Vec<_>>());
        permutations(a.num_nodes()).into_iter().any(|p| {
            (0..a.num_nodes()).all(|i| a.kinds[i] == b.kinds[p[i]]) && edge_list(a, &p) == target
        })
    }

    mod itertools_free {
        pub fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for i in 0..n {
                    let mut q = p.clone();
                    q.insert(i, n - 1);
                    out.push(q);
                }
            }
            out
        }
    }

    fn arb_graph() -> impl Strategy<Value = AbstractQueryGraph> {
        (2usize..6)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec(0u8..3, n),
                    proptest::collection::vec((0..n, 0..n, any::<bool>()), 1..7),
                )
            })
            .prop_map(|(kinds, edges)| {
                let kinds = kinds
                    .into_iter()
                    .map(|k| [NodeKind::Constant, NodeKind::Existential, NodeKind::Free][k as usize])
                    .collect();
                let edges = edges
                    .into_iter()
                    .filter(|(u, v, _)| u != v)
                    .map(|(u, v, neg)| AbstractEdge { u, v, neg })
                    .collect();
                AbstractQueryGraph::new(kinds, edges).unwrap()
            })
    }

    proptest! {
        #[test]
        fn canonical_form_is_relabel_invariant(gr in arb_graph(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..gr.num_nodes()).collect();
            perm.shuffle(&mut rng);
            let mut h = gr.relabel(&perm);
            h.edges.shuffle(&mut rng);
            for e in &mut h.edges {
                if rand::Rng::gen_bool(&mut rng, 0.5) {
                    std::mem::swap(&mut e.u, &mut e.v);
                }
            }
            prop_assert_eq!(gr.canonical_form(), h.canonical_form());
            prop_assert_eq!(gr.canonicalize(), h.canonicalize());
        }

        #[test]
        fn canonical_form_equality_matches_isomorphism(a in arb_graph(), b in arb_graph()) {
            prop_assert_eq!(a.canonical_form() == b.canonical_form(), isomorphic(&a, &b));
        }

        #[test]
        fn topology_is_isomorphism_invariant(gr in arb_graph()) {
            let t1 = classify_topology(&gr).ok();
            let t2 = classify_topology(&gr.canonicalize()).ok();
            prop_assert_eq!(t1, t2);
        }

        #[test]
        fn union_is_commutative_and_idempotent(
            a in proptest::collection::vec(proptest::collection::vec(0u32..5, 2), 0..6),
            b in proptest::collection::vec(proptest::collection::vec(0u32..5, 2), 0..6),
        ) {
            let a = AnswerSet::from_tuples(2, a).unwrap();
            let b = AnswerSet::from_tuples(2, b).unwrap();
            let ab = union_answers(&[a.clone(), b.clone()]).unwrap();
            prop_assert_eq!(&ab, &union_answers(&[b.clone(), a.clone()]).unwrap());
            prop_assert_eq!(&ab, &union_answers(&[ab.clone(), ab.clone()]).unwrap());
            prop_assert_eq!(&a, &union_answers(&[a.clone(), AnswerSet::empty(2)]).unwrap());
        }
    }

    #[test]
    fn union_examples() {
        let a = AnswerSet::from_tuples(1, [vec![1]]).unwrap();
        let b = AnswerSet::from_tuples(1, [vec![2], vec![1]]).unwrap();
        let u = union_answers(&[a.clone(), b]).unwrap();
        assert_eq!(u.tuples(), &[vec![1], vec![2]]);
        let c = AnswerSet::empty(2);
        assert!(matches!(union_answers(&[a, c]), Err(Error::Contract(_))));
    }

    #[test]
    fn projection_examples() {
        let a = AnswerSet::from_tuples(2, [vec![1, 2], vec![1, 3], vec![4, 2]]).unwrap();
        assert_eq!(free_var_projection(&a, 0).unwrap(), vec![1, 4]);
        assert_eq!(free_var_projection(&a, 1).unwrap(), vec![2, 3]);
        assert!(free_var_projection(&AnswerSet::empty(2), 1).unwrap().is_empty());
        assert!(matches!(free_var_projection(&a, 2), Err(Error::Contract(_))));
        let k1 = AnswerSet::from_tuples(1, [vec![5], vec![3]]).unwrap();
        assert_eq!(free_var_projection(&k1, 0).unwrap(), vec![3, 5]);
    }

    #[test]
    fn abstract_json_round_trip() {
        let a = g("cef", &[(0, 1, false), (1, 2, true)]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(
            s,
            r#"{"nodes":[{"id":0,"kind":"constant"},{"id":1,"kind":"existential"},{"id":2,"kind":"free"}],"edges":[{"u":0,"v":1,"neg":false},{"u":1,"v":2,"neg":true}]}"#
        );
        let back: AbstractQueryGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(a, back);
        assert!(serde_json::from_str::<AbstractQueryGraph>(
            r#"{"nodes":[{"id":0,"kind":"free"}],"edges":[{"u":0,"v":3}]}"#
        )
        .is_err());
    }

    #[test]
    fn grounding_and_shape() {
        let a = g("cef", &[(0, 1, false), (1, 2, false)]);
        let mut gr = Grounding::for_graph(&a);
        gr.constants.insert(0, 7);
        gr.relations = vec![Some(1), Some(2)];
        let q = gr.apply(&a).unwrap();
        assert_eq!(q.free_vars, vec![1]);
        assert_eq!(q.edges[0].h, Term::Const(7));
        let json = serde_json::to_string(&q).unwrap();
        assert!(json.contains(r#""h":{"const":7}"#), "{json}");
        let shape = q.shape().unwrap();
        assert_eq!(shape.graph.canonical_form(), a.canonical_form());
        assert_eq!(shape.binding[2], Some(7));
    }
}
