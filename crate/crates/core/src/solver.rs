//! Exact answering of grounded queries as binary constraint networks.
//!
//! Domains are entity bitsets. Constant-adjacent atoms restrict domains once
//! when the network is built; positive variable–variable atoms drive arc
//! consistency; negative variable–variable atoms are checked when one side is
//! assigned. Search backtracks over free variables first and decides the
//! existential remainder per connected component, memoised on the values of
//! the free variables bordering that component.

use std::cell::Cell;
use std::collections::{HashMap, HashSet, VecDeque};
use std::time::{Duration, Instant};

use fixedbitset::FixedBitSet;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::query::{AnswerSet, GroundedQueryGraph, NodeId, Term};

/// Binary constraint `(value(a), r, value(b)) ∈ KG` (or `∉` when `neg`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Constraint {
    pub a: usize,
    pub b: usize,
    pub r: RelationId,
    pub neg: bool,
}

#[derive(Debug, Clone)]
pub struct ConstraintNetwork {
    /// Query node id of each network variable.
    pub vars: Vec<NodeId>,
    /// Network indices of the free variables, in answer-tuple order.
    pub free: Vec<usize>,
    pub domains: Vec<FixedBitSet>,
    /// Variable–variable constraints only; constant atoms are folded into domains.
    pub constraints: Vec<Constraint>,
    /// Set when some domain is empty (or a ground atom is false).
    pub empty: bool,
    adj: Vec<Vec<usize>>,
}

impl ConstraintNetwork {
    pub fn domain_sizes(&self) -> Vec<usize> {
        self.domains.iter().map(|d| d.count_ones(..)).collect()
    }

    pub fn var_index(&self, node: NodeId) -> Option<usize> {
        self.vars.iter().position(|&v| v == node)
    }

    fn degree(&self, x: usize) -> usize {
        self.adj[x].len()
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SolveStats {
    pub propagation_rounds: u64,
    pub backtrack_nodes: u64,
    pub wall_time: Duration,
}

/// Limits for materialising full CSP assignment sets.
#[derive(Debug, Clone, Copy)]
pub struct CspLimits {
    /// Upper bound on the product of domain sizes after propagation.
    pub max_domain_product: u128,
    pub max_solutions: usize,
}

impl Default for CspLimits {
    fn default() -> Self {
        CspLimits {
            max_domain_product: 10_000_000_000,
            max_solutions: 2_000_000,
        }
    }
}

fn bitset_of(n: usize, items: &[EntityId]) -> FixedBitSet {
    let mut s = FixedBitSet::with_capacity(n);
    for &i in items {
        s.insert(i as usize);
    }
    s
}

/// Builds the network: one variable per variable term, domains initialised to
/// all entities and cut down by every atom with a constant endpoint.
pub fn build_network(q: &GroundedQueryGraph, kg: &KnowledgeGraph) -> Result<ConstraintNetwork> {
    q.check_ranges(kg.num_entities(), kg.num_relations())?;
    let n = kg.num_entities();
    let vars = q.variables();
    let idx = |node: NodeId| vars.binary_search(&node).expect("listed variable");
    let mut full = FixedBitSet::with_capacity(n);
    full.insert_range(..);
    let mut domains = vec![full; vars.len()];
    let mut constraints = Vec::new();
    let mut empty = false;

    for e in &q.edges {
        match (e.h, e.t) {
            (Term::Const(h), Term::Const(t)) => {
                if kg.contains(h, e.r, t) == e.neg {
                    empty = true;
                }
            }
            (Term::Const(c), Term::Var(x)) | (Term::Var(x), Term::Const(c)) => {
                // Relation read from the constant towards the variable.
                let r = if matches!(e.h, Term::Const(_)) { e.r } else { kg.inverse(e.r) };
                let image = bitset_of(n, kg.tails_unchecked(c, r));
                let d = &mut domains[idx(x)];
                if e.neg {
                    d.difference_with(&image);
                } else {
                    d.intersect_with(&image);
                }
            }
            (Term::Var(a), Term::Var(b)) => constraints.push(Constraint {
                a: idx(a),
                b: idx(b),
                r: e.r,
                neg: e.neg,
            }),
        }
    }
    let mut adj = vec![Vec::new(); vars.len()];
    for (i, c) in constraints.iter().enumerate() {
        adj[c.a].push(i);
        adj[c.b].push(i);
    }
    if domains.iter().any(|d| d.is_clear()) {
        empty = true;
    }
    let free = q.free_vars.iter().map(|&f| idx(f)).collect();
    Ok(ConstraintNetwork {
        vars,
        free,
        domains,
        constraints,
        empty,
        adj,
    })
}

struct Engine<'a> {
    kg: &'a KnowledgeGraph,
    net: &'a ConstraintNetwork,
    rounds: Cell<u64>,
    nodes: Cell<u64>,
}

impl<'a> Engine<'a> {
    fn new(kg: &'a KnowledgeGraph, net: &'a ConstraintNetwork) -> Self {
        Engine {
            kg,
            net,
            rounds: Cell::new(0),
            nodes: Cell::new(0),
        }
    }

    /// Relation to follow from `x` across constraint `c`.
    fn rel_from(&self, c: &Constraint, x: usize) -> RelationId {
        if c.a == x {
            c.r
        } else {
            self.kg.inverse(c.r)
        }
    }

    /// Removes values of `x` without support in the other endpoint of the
    /// positive constraint `c`. Returns whether the domain changed.
    fn revise(&self, doms: &mut [FixedBitSet], c: &Constraint, x: usize) -> bool {
        self.rounds.set(self.rounds.get() + 1);
        let y = if c.a == x { c.b } else { c.a };
        let r = self.rel_from(c, x);
        let (dx, dy) = (doms[x].count_ones(..), doms[y].count_ones(..));
        let kept = if dy <= dx {
            let back = self.kg.inverse(r);
            let mut support = FixedBitSet::with_capacity(doms[x].len());
            for v in doms[y].ones() {
                for &u in self.kg.tails_unchecked(v as EntityId, back) {
                    support.insert(u as usize);
                }
            }
            support.intersect_with(&doms[x]);
            support
        } else {
            let mut kept = doms[x].clone();
            for u in doms[x].ones() {
                let ok = self
                    .kg
                    .tails_unchecked(u as EntityId, r)
                    .iter()
                    .any(|&t| doms[y].contains(t as usize));
                if !ok {
                    kept.set(u, false);
                }
            }
            kept
        };
        if kept.count_ones(..) != dx {
            doms[x] = kept;
            true
        } else {
            false
        }
    }

    /// AC-3 over positive constraints, seeded with arcs pointing into `dirty`
    /// variables' neighbours. Returns false when a domain empties.
    fn propagate(&self, doms: &mut [FixedBitSet], dirty: &[usize]) -> bool {
        let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
        let mut queued = HashSet::new();
        for &d in dirty {
            for &ci in &self.net.adj[d] {
                let c = &self.net.constraints[ci];
                if c.neg {
                    continue;
                }
                let x = if c.a == d { c.b } else { c.a };
                if queued.insert((ci, x)) {
                    queue.push_back((ci, x));
                }
            }
        }
        while let Some((ci, x)) = queue.pop_front() {
            queued.remove(&(ci, x));
            let c = self.net.constraints[ci];
            if self.revise(doms, &c, x) {
                if doms[x].is_clear() {
                    return false;
                }
                for &cj in &self.net.adj[x] {
                    let c2 = &self.net.constraints[cj];
                    if cj == ci || c2.neg {
                        continue;
                    }
                    let z = if c2.a == x { c2.b } else { c2.a };
                    if queued.insert((cj, z)) {
                        queue.push_back((cj, z));
                    }
                }
            }
        }
        true
    }

    fn propagate_all(&self, doms: &mut [FixedBitSet]) -> bool {
        let all: Vec<usize> = (0..doms.len()).collect();
        self.propagate(doms, &all)
    }

    /// Fixes `x = val`, forward-checks every constraint on `x` (negative ones
    /// included) and restores arc consistency.
    fn assign(&self, doms: &mut [FixedBitSet], x: usize, val: usize) -> bool {
        self.nodes.set(self.nodes.get() + 1);
        if !doms[x].contains(val) {
            return false;
        }
        doms[x].clear();
        doms[x].insert(val);
        let mut touched = vec![x];
        for &ci in &self.net.adj[x] {
            let c = self.net.constraints[ci];
            let y = if c.a == x { c.b } else { c.a };
            let tails = self.kg.tails_unchecked(val as EntityId, self.rel_from(&c, x));
            if c.neg {
                for &t in tails {
                    doms[y].set(t as usize, false);
                }
            } else {
                let image = bitset_of(doms[y].len(), tails);
                doms[y].intersect_with(&image);
            }
            if doms[y].is_clear() {
                return false;
            }
            touched.push(y);
        }
        self.propagate(doms, &touched)
    }

    /// Finds one assignment of `vars` consistent with `doms`; every variable
    /// outside `vars` must already be assigned.
    fn find_solution(&self, doms: &[FixedBitSet], vars: &[usize], assigned: &mut Vec<bool>) -> Option<Vec<FixedBitSet>> {
        let next = vars
            .iter()
            .copied()
            .filter(|&v| !assigned[v])
            .min_by_key(|&v| (doms[v].count_ones(..), v));
        let Some(x) = next else {
            return Some(doms.to_vec());
        };
        assigned[x] = true;
        for val in doms[x].ones() {
            let mut d = doms.to_vec();
            if self.assign(&mut d, x, val) {
                if let Some(sol) = self.find_solution(&d, vars, assigned) {
                    assigned[x] = false;
                    return Some(sol);
                }
            }
        }
        assigned[x] = false;
        None
    }

    /// Enumerates every assignment of all variables, stopping with an error
    /// once `limit` solutions have been collected.
    fn all_solutions(
        &self,
        doms: &[FixedBitSet],
        assigned: &mut Vec<bool>,
        out: &mut Vec<Vec<EntityId>>,
        limit: usize,
    ) -> Result<()> {
        let next = (0..doms.len())
            .filter(|&v| !assigned[v])
            .min_by_key(|&v| (doms[v].count_ones(..), v));
        let Some(x) = next else {
            if out.len() >= limit {
                return Err(Error::ResourceLimit(format!(
                    "more than {limit} CSP solutions"
                )));
            }
            out.push(doms.iter().map(|d| d.minimum().unwrap() as EntityId).collect());
            return Ok(());
        };
        assigned[x] = true;
        for val in doms[x].ones() {
            let mut d = doms.to_vec();
            if self.assign(&mut d, x, val) {
                self.all_solutions(&d, assigned, out, limit)?;
            }
        }
        assigned[x] = false;
        Ok(())
    }

    /// Exact solution projections of the variables in `targets` (all
    /// variables are existentially closed otherwise). Values seen in any found
    /// solution are marked for every target, so each value is searched at
    /// most once.
    /// With `limit`, gives up (returns `None`) as soon as some target's
    /// projection is known to exceed it.
    fn projections(&self, doms: &[FixedBitSet], targets: &[usize], limit: Option<usize>) -> Option<Vec<FixedBitSet>> {
        let n = self.net.vars.len();
        let width = doms.first().map_or(0, |d| d.len());
        let mut proj = vec![FixedBitSet::with_capacity(width); n];
        let all: Vec<usize> = (0..n).collect();
        let mut assigned = vec![false; n];
        for &t in targets {
            for val in doms[t].ones() {
                if proj[t].contains(val) {
                    continue;
                }
                let mut d = doms.to_vec();
                if !self.assign(&mut d, t, val) {
                    continue;
                }
                assigned[t] = true;
                if let Some(sol) = self.find_solution(&d, &all, &mut assigned) {
                    for (v, s) in sol.iter().enumerate() {
                        proj[v].union_with(s);
                    }
                    if let Some(limit) = limit {
                        if targets.iter().any(|&t| proj[t].count_ones(..) > limit) {
                            return None;
                        }
                    }
                }
                assigned[t] = false;
            }
        }
        Some(proj)
    }

    fn stats(&self, start: Instant) -> SolveStats {
        SolveStats {
            propagation_rounds: self.rounds.get(),
            backtrack_nodes: self.nodes.get(),
            wall_time: start.elapsed(),
        }
    }
}

/// Arc-consistent fixpoint of the positive constraints. Sets `empty` when a
/// domain becomes empty.
pub fn propagate(net: &ConstraintNetwork, kg: &KnowledgeGraph) -> ConstraintNetwork {
    let mut out = net.clone();
    if out.empty {
        return out;
    }
    let engine = Engine::new(kg, net);
    if !engine.propagate_all(&mut out.domains) {
        out.empty = true;
    }
    out
}

/// Exact projections of the full-assignment set onto each variable, keyed by
/// query node id. These are the candidate sets a variable can take in some
/// solution of the CSP.
pub fn csp_projections(q: &GroundedQueryGraph, kg: &KnowledgeGraph) -> Result<Vec<(NodeId, Vec<EntityId>)>> {
    let net = propagate(&build_network(q, kg)?, kg);
    let width = kg.num_entities();
    let proj = if net.empty {
        vec![FixedBitSet::with_capacity(width); net.vars.len()]
    } else {
        let engine = Engine::new(kg, &net);
        let all: Vec<usize> = (0..net.vars.len()).collect();
        engine
            .projections(&net.domains, &all, None)
            .expect("no limit")
    };
    Ok(net
        .vars
        .iter()
        .zip(proj)
        .map(|(&v, p)| (v, p.ones().map(|x| x as EntityId).collect()))
        .collect())
}

/// Answer projections of each free variable, in `free_vars` order.
pub fn free_projections(q: &GroundedQueryGraph, kg: &KnowledgeGraph) -> Result<Vec<Vec<EntityId>>> {
    Ok(free_projections_bounded(q, kg, usize::MAX)?.expect("unbounded"))
}

/// Like [`free_projections`], but returns `None` once any projection is
/// found to hold more than `bound` entities.
pub fn free_projections_bounded(
    q: &GroundedQueryGraph,
    kg: &KnowledgeGraph,
    bound: usize,
) -> Result<Option<Vec<Vec<EntityId>>>> {
    let net = propagate(&build_network(q, kg)?, kg);
    if net.empty {
        return Ok(Some(vec![Vec::new(); net.free.len()]));
    }
    let engine = Engine::new(kg, &net);
    let Some(proj) = engine.projections(&net.domains, &net.free, Some(bound)) else {
        return Ok(None);
    };
    Ok(Some(
        net.free
            .iter()
            .map(|&f| proj[f].ones().map(|x| x as EntityId).collect())
            .collect(),
    ))
}

pub fn solve_efo(q: &GroundedQueryGraph, kg: &KnowledgeGraph) -> Result<AnswerSet> {
    solve_efo_with_stats(q, kg).map(|(a, _)| a)
}

/// Free-variable tuples for which some existential witness satisfies every atom.
pub fn solve_efo_with_stats(q: &GroundedQueryGraph, kg: &KnowledgeGraph) -> Result<(AnswerSet, SolveStats)> {
    let start = Instant::now();
    let k = q.arity();
    let net = build_network(q, kg)?;
    let engine = Engine::new(kg, &net);
    let mut doms = net.domains.clone();
    if net.empty || !engine.propagate_all(&mut doms) {
        return Ok((AnswerSet::empty(k), engine.stats(start)));
    }

    // Restricting free domains to their exact projections is sound and makes
    // the k = 1 case immediate.
    let proj = engine
        .projections(&doms, &net.free, None)
        .expect("no limit");
    for &f in &net.free {
        doms[f].intersect_with(&proj[f]);
    }
    if k == 1 {
        let tuples = doms[net.free[0]].ones().map(|v| vec![v as EntityId]);
        return Ok((AnswerSet::from_tuples(1, tuples)?, engine.stats(start)));
    }

    let mut order = net.free.clone();
    order.sort_by_key(|&f| (std::cmp::Reverse(net.degree(f)), f));

    let comps = existential_components(&net);
    let mut memo: HashMap<(usize, Vec<usize>), bool> = HashMap::new();
    let mut values = vec![0usize; net.vars.len()];
    let mut tuples = Vec::new();
    let mut ctx = FreeSearch {
        engine: &engine,
        order: &order,
        comps: &comps,
        memo: &mut memo,
        values: &mut values,
        out: &mut tuples,
    };
    ctx.run(&doms, 0);
    let tuples: Vec<Vec<EntityId>> = tuples
        .into_iter()
        .map(|vals: Vec<usize>| net.free.iter().map(|&f| vals[f] as EntityId).collect())
        .collect();
    Ok((AnswerSet::from_tuples(k, tuples)?, engine.stats(start)))
}

/// Existential components with the free variables on their boundary.
struct Component {
    vars: Vec<usize>,
    boundary: Vec<usize>,
}

fn existential_components(net: &ConstraintNetwork) -> Vec<Component> {
    let n = net.vars.len();
    let is_free: Vec<bool> = (0..n).map(|v| net.free.contains(&v)).collect();
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for s in 0..n {
        if is_free[s] || seen[s] {
            continue;
        }
        let mut vars = Vec::new();
        let mut boundary = Vec::new();
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(x) = stack.pop() {
            vars.push(x);
            for &ci in &net.adj[x] {
                let c = &net.constraints[ci];
                let y = if c.a == x { c.b } else { c.a };
                if is_free[y] {
                    boundary.push(y);
                } else if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        vars.sort_unstable();
        boundary.sort_unstable();
        boundary.dedup();
        comps.push(Component { vars, boundary });
    }
    comps
}

struct FreeSearch<'e, 'a> {
    engine: &'e Engine<'a>,
    order: &'e [usize],
    comps: &'e [Component],
    memo: &'e mut HashMap<(usize, Vec<usize>), bool>,
    values: &'e mut Vec<usize>,
    out: &'e mut Vec<Vec<usize>>,
}

impl FreeSearch<'_, '_> {
    fn run(&mut self, doms: &[FixedBitSet], depth: usize) {
        if depth == self.order.len() {
            if self.existentials_ok(doms) {
                self.out.push(self.values.clone());
            }
            return;
        }
        let x = self.order[depth];
        for val in doms[x].ones() {
            let mut d = doms.to_vec();
            if self.engine.assign(&mut d, x, val) {
                self.values[x] = val;
                self.run(&d, depth + 1);
            }
        }
    }

    fn existentials_ok(&mut self, doms: &[FixedBitSet]) -> bool {
        let n = doms.len();
        for (ci, comp) in self.comps.iter().enumerate() {
            let key = (ci, comp.boundary.iter().map(|&b| self.values[b]).collect());
            if let Some(&ok) = self.memo.get(&key) {
                if !ok {
                    return false;
                }
                continue;
            }
            let mut assigned = vec![true; n];
            for &v in &comp.vars {
                assigned[v] = false;
            }
            let ok = self
                .engine
                .find_solution(doms, &comp.vars, &mut assigned)
                .is_some();
            self.memo.insert(key, ok);
            if !ok {
                return false;
            }
        }
        true
    }
}

/// Every satisfying assignment over all variables.
#[derive(Debug, Clone)]
pub struct CspSolutions {
    /// Query node id per assignment position.
    pub vars: Vec<NodeId>,
    /// Sorted assignments.
    pub assignments: Vec<Vec<EntityId>>,
}

impl CspSolutions {
    /// Projects onto the given free variables.
    pub fn project(&self, free_vars: &[NodeId]) -> Result<AnswerSet> {
        let pos: Vec<usize> = free_vars
            .iter()
            .map(|f| {
                self.vars
                    .iter()
                    .position(|v| v == f)
                    .ok_or_else(|| Error::contract(format!("variable {f} not in the CSP")))
            })
            .collect::<Result<_>>()?;
        AnswerSet::from_tuples(
            free_vars.len(),
            self.assignments
                .iter()
                .map(|a| pos.iter().map(|&p| a[p]).collect()),
        )
    }
}

pub fn solve_csp(q: &GroundedQueryGraph, kg: &KnowledgeGraph, limits: CspLimits) -> Result<CspSolutions> {
    let net = build_network(q, kg)?;
    let engine = Engine::new(kg, &net);
    let mut doms = net.domains.clone();
    let mut out = Vec::new();
    if !net.empty && engine.propagate_all(&mut doms) {
        let product = doms
            .iter()
            .map(|d| d.count_ones(..) as u128)
            .try_fold(1u128, |acc, x| acc.checked_mul(x))
            .unwrap_or(u128::MAX);
        if product > limits.max_domain_product {
            return Err(Error::ResourceLimit(format!(
                "domain product {product} exceeds {}",
                limits.max_domain_product
            )));
        }
        let mut assigned = vec![false; doms.len()];
        engine.all_solutions(&doms, &mut assigned, &mut out, limits.max_solutions)?;
    }
    out.sort_unstable();
    Ok(CspSolutions {
        vars: net.vars.clone(),
        assignments: out,
    })
}

/// Exhaustive reference evaluation: every assignment of every variable is
/// tried against a plain set of triples. Fails when `|E|^vars > max_assignments`.
pub fn brute_force_oracle(q: &GroundedQueryGraph, kg: &KnowledgeGraph, max_assignments: u64) -> Result<AnswerSet> {
    q.check_ranges(kg.num_entities(), kg.num_relations())?;
    let triples: HashSet<(EntityId, RelationId, EntityId)> = kg
        .triples()
        .iter()
        .map(|t| (t.head, t.relation, t.tail))
        .collect();
    let vars = q.variables();
    let n = kg.num_entities() as u64;
    let total = (0..vars.len()).try_fold(1u64, |acc, _| acc.checked_mul(n));
    match total {
        Some(t) if t <= max_assignments => {}
        _ => {
            return Err(Error::ResourceLimit(format!(
                "{n}^{} assignments exceed the oracle cap {max_assignments}",
                vars.len()
            )))
        }
    }
    let k = q.arity();
    if n == 0 {
        return Ok(AnswerSet::empty(k));
    }
    let slot = |node: NodeId| vars.iter().position(|&v| v == node).unwrap();
    let free_slots: Vec<usize> = q.free_vars.iter().map(|&f| slot(f)).collect();
    let value = |t: Term, assign: &[EntityId]| match t {
        Term::Const(c) => c,
        Term::Var(v) => assign[slot(v)],
    };
    let mut assign = vec![0 as EntityId; vars.len()];
    let mut answers = HashSet::new();
    loop {
        let ok = q.edges.iter().all(|e| {
            triples.contains(&(value(e.h, &assign), e.r, value(e.t, &assign))) != e.neg
        });
        if ok {
            answers.insert(free_slots.iter().map(|&s| assign[s]).collect::<Vec<_>>());
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == assign.len() {
                return AnswerSet::from_tuples(k, answers);
            }
            assign[i] += 1;
            if (assign[i] as u64) < n {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}
