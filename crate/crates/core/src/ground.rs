//! Two-phase grounding of abstract query types and dataset sampling.
//!
//! The positive part is grounded backward from a witness so it is satisfiable
//! by construction; negative edges are then grounded so that each one cuts at
//! least one candidate of an adjacent variable.

use std::collections::{BTreeMap, HashSet};

use fixedbitset::FixedBitSet;
use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KgPair, KnowledgeGraph, RelationId};
use crate::query::{
    AnswerSet, AbstractQueryGraph, GroundedEdge, GroundedQueryGraph, Grounding, NodeId, NodeKind, Term,
    TypeGroup, TypeRecord,
};
use crate::solver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub num_positive_type: usize,
    pub num_negative_type: usize,
    pub answer_bound_per_free: usize,
    pub seed: u64,
    pub max_retries: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            num_positive_type: 1000,
            num_negative_type: 500,
            answer_bound_per_free: 100,
            seed: 0,
            max_retries: 128,
        }
    }
}

/// Positive part of a type: the nodes touched by positive edges and the
/// indices of those edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveSubgraph {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<usize>,
}

/// Candidate entities per variable node of the abstract graph.
pub type Candidates = BTreeMap<NodeId, Vec<EntityId>>;

/// Splits `g` into its positive subgraph and the indices of negative edges.
pub fn split_positive_subgraph(g: &AbstractQueryGraph) -> Result<(PositiveSubgraph, Vec<usize>)> {
    let mut in_pos = vec![false; g.num_nodes()];
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, e) in g.edges().iter().enumerate() {
        if e.neg {
            neg.push(i);
        } else {
            pos.push(i);
            in_pos[e.u] = true;
            in_pos[e.v] = true;
        }
    }
    for (n, &inside) in in_pos.iter().enumerate() {
        if !inside && g.kind(n) != NodeKind::Constant {
            return Err(Error::Invariant(format!(
                "variable node {n} has no positive edge"
            )));
        }
    }
    let nodes = (0..g.num_nodes()).filter(|&n| in_pos[n]).collect();
    Ok((PositiveSubgraph { nodes, edges: pos }, neg))
}

/// Position of each variable node in grounded queries (dense, node order).
fn var_ids(g: &AbstractQueryGraph) -> Vec<Option<NodeId>> {
    let mut next = 0;
    g.kinds()
        .iter()
        .map(|k| {
            k.is_variable().then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// Grounds only the listed edges of `g` (their endpoints must be grounded).
fn ground_edges(g: &AbstractQueryGraph, gr: &Grounding, edges: &[usize]) -> Result<GroundedQueryGraph> {
    let ids = var_ids(g);
    let term = |n: NodeId| -> Result<Term> {
        match ids[n] {
            Some(v) => Ok(Term::Var(v)),
            None => gr
                .constants
                .get(&n)
                .map(|&c| Term::Const(c))
                .ok_or_else(|| Error::contract(format!("constant node {n} is not grounded"))),
        }
    };
    let mut out = Vec::with_capacity(edges.len());
    for &i in edges {
        let e = g.edges()[i];
        let r = gr.relations[i].ok_or_else(|| Error::contract(format!("edge {i} has no relation")))?;
        out.push(GroundedEdge {
            h: term(e.u)?,
            r,
            t: term(e.v)?,
            neg: e.neg,
        });
    }
    Ok(GroundedQueryGraph {
        edges: out,
        free_vars: g.free_nodes().iter().map(|&n| ids[n].unwrap()).collect(),
    })
}

/// Arc-consistent candidate sets of the variables of the positive part.
fn positive_candidates(g: &AbstractQueryGraph, gr: &Grounding, gp: &PositiveSubgraph, kg: &KnowledgeGraph) -> Result<Candidates> {
    let q = ground_edges(g, gr, &gp.edges)?;
    let net = solver::propagate(&solver::build_network(&q, kg)?, kg);
    let ids = var_ids(g);
    let mut out = Candidates::new();
    for n in (0..g.num_nodes()).filter(|&n| g.kind(n).is_variable()) {
        let v = ids[n].unwrap();
        let set = match net.var_index(v) {
            Some(i) if !net.empty => net.domains[i].ones().map(|x| x as EntityId).collect(),
            _ => Vec::new(),
        };
        out.insert(n, set);
    }
    Ok(out)
}

/// Grounds the positive part of `g` from a random witness: a random entity
/// for one node, then each positive edge is followed by sampling a triple
/// incident to an already-placed node. Edges closing a cycle or running
/// parallel to another edge pick a distinct relation that holds between the
/// placed endpoints. Returns the grounding and arc-consistent candidates.
pub fn ground_positive<R: Rng>(
    g: &AbstractQueryGraph,
    gp: &PositiveSubgraph,
    kg: &KnowledgeGraph,
    rng: &mut R,
) -> Result<(Grounding, Candidates)> {
    let exhausted = |why: &str| Error::SamplingExhausted(why.to_owned());
    if kg.triples().is_empty() {
        return Err(exhausted("knowledge graph has no triples"));
    }
    let mut value: Vec<Option<EntityId>> = vec![None; g.num_nodes()];
    let mut relation: Vec<Option<RelationId>> = vec![None; g.edges().len()];

    let start_nodes: Vec<NodeId> = gp.nodes.iter().copied().filter(|&n| g.kind(n).is_variable()).collect();
    let start = *start_nodes.choose(rng).ok_or_else(|| exhausted("no variable in positive part"))?;
    value[start] = Some(kg.triples()[rng.gen_range(0..kg.triples().len())].head);

    let mut pending: Vec<usize> = gp.edges.clone();
    while !pending.is_empty() {
        // Prefer edges that reach a new node; close cycles/parallels last.
        pending.shuffle(rng);
        let pick = pending
            .iter()
            .position(|&i| {
                let e = g.edges()[i];
                value[e.u].is_some() != value[e.v].is_some()
            })
            .or_else(|| {
                pending.iter().position(|&i| {
                    let e = g.edges()[i];
                    value[e.u].is_some() && value[e.v].is_some()
                })
            });
        let Some(pick) = pick else {
            // The positive part may fall apart into components joined only
            // by negated edges; each gets its own witness.
            let e = g.edges()[pending[0]];
            value[e.u] = Some(kg.triples()[rng.gen_range(0..kg.triples().len())].head);
            continue;
        };
        let i = pending.swap_remove(pick);
        let e = g.edges()[i];
        let used: Vec<RelationId> = g
            .edges()
            .iter()
            .enumerate()
            .filter(|(j, o)| {
                *j != i && (o.u.min(o.v), o.u.max(o.v)) == (e.u.min(e.v), e.u.max(e.v))
            })
            .filter_map(|(j, o)| relation[j].map(|r| if o.u == e.u { r } else { kg.inverse(r) }))
            .collect();
        match (value[e.u], value[e.v]) {
            (Some(a), Some(b)) => {
                let options: Vec<RelationId> = kg
                    .relations_between(a, b)
                    .into_iter()
                    .filter(|r| !used.contains(r))
                    .collect();
                relation[i] = Some(*options.choose(rng).ok_or_else(|| exhausted("no relation closes the edge"))?);
            }
            (Some(a), None) => {
                let out = kg.out_triples(a);
                let t = out.choose(rng).ok_or_else(|| exhausted("dead-end entity"))?;
                relation[i] = Some(t.relation);
                value[e.v] = Some(t.tail);
            }
            (None, Some(b)) => {
                // (b, r, a) in the KG gives (a, inverse(r), b) for u -> v.
                let out = kg.out_triples(b);
                let t = out.choose(rng).ok_or_else(|| exhausted("dead-end entity"))?;
                relation[i] = Some(kg.inverse(t.relation));
                value[e.u] = Some(t.tail);
            }
            (None, None) => unreachable!("picked edges touch a placed node"),
        }
    }

    let mut gr = Grounding::for_graph(g);
    gr.relations = relation;
    for &n in &gp.nodes {
        if g.kind(n) == NodeKind::Constant {
            gr.constants.insert(n, value[n].expect("placed"));
        }
    }
    let cands = positive_candidates(g, &gr, gp, kg)?;
    Ok((gr, cands))
}

/// Grounds every negative edge so that it excludes at least one candidate:
/// between two grounded endpoints the relation must hold for some candidate
/// pair; with a fresh constant, the (constant, relation) pair must reach some
/// candidate of the other endpoint.
pub fn ground_negative<R: Rng>(
    g: &AbstractQueryGraph,
    partial: &Grounding,
    candidates: &Candidates,
    kg: &KnowledgeGraph,
    rng: &mut R,
) -> Result<Grounding> {
    let mut gr = partial.clone();
    let (gp, negs) = split_positive_subgraph(g)?;
    let in_pos: Vec<bool> = (0..g.num_nodes()).map(|n| gp.nodes.contains(&n)).collect();
    let cand_of = |n: NodeId| -> Vec<EntityId> {
        match g.kind(n) {
            NodeKind::Constant => partial.constants.get(&n).map(|&c| vec![c]).unwrap_or_default(),
            _ => candidates.get(&n).cloned().unwrap_or_default(),
        }
    };
    for i in negs {
        let e = g.edges()[i];
        // Relations on positive edges parallel to this one, read u -> v.
        let parallel: Vec<RelationId> = g
            .edges()
            .iter()
            .enumerate()
            .filter(|(j, o)| *j != i && (o.u.min(o.v), o.u.max(o.v)) == (e.u.min(e.v), e.u.max(e.v)))
            .filter_map(|(j, o)| gr.relations[j].map(|r| if o.u == e.u { r } else { kg.inverse(r) }))
            .collect();
        if in_pos[e.u] && in_pos[e.v] {
            let cu = cand_of(e.u);
            let cv = cand_of(e.v);
            let mut target = FixedBitSet::with_capacity(kg.num_entities());
            for &b in &cv {
                target.insert(b as usize);
            }
            let mut options = Vec::new();
            for &a in &cu {
                for t in kg.out_triples(a) {
                    if target.contains(t.tail as usize) && !parallel.contains(&t.relation) {
                        options.push(t.relation);
                    }
                }
            }
            options.sort_unstable();
            options.dedup();
            let r = options
                .choose(rng)
                .ok_or_else(|| Error::SamplingExhausted("no relation links candidate pairs".into()))?;
            gr.relations[i] = Some(*r);
        } else {
            let (fresh, inner) = if in_pos[e.u] { (e.v, e.u) } else { (e.u, e.v) };
            if g.kind(fresh) != NodeKind::Constant {
                return Err(Error::Invariant(format!("node {fresh} outside the positive part is not a constant")));
            }
            let ci = cand_of(inner);
            let b = *ci
                .choose(rng)
                .ok_or_else(|| Error::SamplingExhausted("empty candidate set".into()))?;
            let t = *kg
                .out_triples(b)
                .choose(rng)
                .ok_or_else(|| Error::SamplingExhausted("candidate has no incident triple".into()))?;
            // t = (b, r, a): the constant is a.
            gr.constants.insert(fresh, t.tail);
            gr.relations[i] = Some(if e.u == inner { t.relation } else { kg.inverse(t.relation) });
        }
    }
    Ok(gr)
}

/// A grounded query with its answers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundedSample {
    pub formula_id: String,
    pub group: TypeGroup,
    #[serde(flatten)]
    pub query: GroundedQueryGraph,
    pub easy_answers: AnswerSet,
    pub hard_answers: AnswerSet,
    pub marginal_hard: Vec<Vec<EntityId>>,
}

#[derive(Deserialize)]
struct RawSample {
    formula_id: String,
    group: TypeGroup,
    #[serde(flatten)]
    query: GroundedQueryGraph,
    easy_answers: Vec<Vec<EntityId>>,
    hard_answers: Vec<Vec<EntityId>>,
    marginal_hard: Vec<Vec<EntityId>>,
}

impl<'de> Deserialize<'de> for GroundedSample {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawSample::deserialize(d)?;
        let k = raw.query.free_vars.len();
        let easy = AnswerSet::from_tuples(k, raw.easy_answers).map_err(D::Error::custom)?;
        let hard = AnswerSet::from_tuples(k, raw.hard_answers).map_err(D::Error::custom)?;
        if hard.tuples().iter().any(|t| easy.contains(t)) {
            return Err(D::Error::custom("easy and hard answers overlap"));
        }
        if raw.marginal_hard.len() != k {
            return Err(D::Error::custom(format!(
                "marginal_hard has {} entries for {k} free variables",
                raw.marginal_hard.len()
            )));
        }
        Ok(GroundedSample {
            formula_id: raw.formula_id,
            group: raw.group,
            query: raw.query,
            easy_answers: easy,
            hard_answers: hard,
            marginal_hard: raw.marginal_hard,
        })
    }
}

impl GroundedSample {
    pub fn arity(&self) -> usize {
        self.query.free_vars.len()
    }

    /// Easy ∪ hard: every tuple that is an answer on the full or the observed
    /// graph. With negation this can be larger than the full-graph answers.
    pub fn all_answers(&self) -> AnswerSet {
        crate::query::union_answers(&[self.easy_answers.clone(), self.hard_answers.clone()])
            .expect("same arity")
    }
}

/// Why an attempt was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    Grounding,
    TooManyAnswers,
    NoHardAnswer,
    IneffectiveNegation,
    Duplicate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TypeSamplingReport {
    pub formula_id: String,
    pub requested: usize,
    pub emitted: usize,
    pub attempts: usize,
    pub rejections: BTreeMap<Rejection, usize>,
}

/// 64-bit mixer used to derive independent RNG streams from the master seed.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one attempt of one sample slot of one type.
pub fn derived_rng(seed: u64, type_index: usize, slot: usize, attempt: usize) -> ChaCha8Rng {
    let s = mix(mix(mix(seed ^ 0x6772_6f75_6e64) ^ type_index as u64) ^ slot as u64) ^ attempt as u64;
    ChaCha8Rng::seed_from_u64(mix(s))
}

/// Drops edge `i` from a grounded query.
fn without_edge(q: &GroundedQueryGraph, i: usize) -> GroundedQueryGraph {
    let mut out = q.clone();
    out.edges.remove(i);
    out
}

/// True iff deleting each negative edge strictly enlarges the exact CSP
/// candidate set of at least one variable.
pub fn negations_effective(q: &GroundedQueryGraph, kg: &KnowledgeGraph) -> Result<bool> {
    let with = solver::csp_projections(q, kg)?;
    for (i, e) in q.edges.iter().enumerate() {
        if !e.neg {
            continue;
        }
        let without = solver::csp_projections(&without_edge(q, i), kg)?;
        let enlarged = with.iter().zip(&without).any(|((v1, a), (v2, b))| {
            debug_assert_eq!(v1, v2);
            b.len() > a.len()
        });
        if !enlarged {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One grounding attempt; `Err(Rejection)` for filter failures.
fn attempt(
    record: &TypeRecord,
    group: TypeGroup,
    kgs: &KgPair,
    cfg: &SampleConfig,
    rng: &mut ChaCha8Rng,
) -> Result<std::result::Result<GroundedSample, Rejection>> {
    let g = &record.graph;
    let (gp, _) = split_positive_subgraph(g)?;
    let (pos, cands) = match ground_positive(g, &gp, &kgs.full, rng) {
        Ok(x) => x,
        Err(Error::SamplingExhausted(_)) => return Ok(Err(Rejection::Grounding)),
        Err(e) => return Err(e),
    };
    let gr = match ground_negative(g, &pos, &cands, &kgs.full, rng) {
        Ok(x) => x,
        Err(Error::SamplingExhausted(_)) => return Ok(Err(Rejection::Grounding)),
        Err(e) => return Err(e),
    };
    let q = gr.apply(g)?;
    let k = q.arity();
    let bound = cfg.answer_bound_per_free * k;
    let Some(full_proj) = solver::free_projections_bounded(&q, &kgs.full, bound)? else {
        return Ok(Err(Rejection::TooManyAnswers));
    };
    if full_proj.iter().any(Vec::is_empty) {
        return Ok(Err(Rejection::NoHardAnswer));
    }
    let full = solver::solve_efo(&q, &kgs.full)?;
    let easy = solver::solve_efo(&q, &kgs.observed)?;
    let hard = full.difference(&easy);
    if hard.is_empty() {
        return Ok(Err(Rejection::NoHardAnswer));
    }
    if q.has_negation() && !negations_effective(&q, &kgs.full)? {
        return Ok(Err(Rejection::IneffectiveNegation));
    }
    let marginal_hard = (0..k)
        .map(|i| {
            let f = full.projection(i)?;
            let o = easy.projection(i)?;
            Ok(f.into_iter().filter(|x| o.binary_search(x).is_err()).collect())
        })
        .collect::<Result<Vec<Vec<EntityId>>>>()?;
    Ok(Ok(GroundedSample {
        formula_id: record.formula_id.clone(),
        group,
        query: q,
        easy_answers: easy,
        hard_answers: hard,
        marginal_hard,
    }))
}

fn sample_type(
    type_index: usize,
    record: &TypeRecord,
    kgs: &KgPair,
    cfg: &SampleConfig,
) -> Result<(Vec<GroundedSample>, TypeSamplingReport)> {
    let g = &record.graph;
    let group = g.group()?;
    let requested = if g.has_negation() {
        cfg.num_negative_type
    } else {
        cfg.num_positive_type
    };
    let mut report = TypeSamplingReport {
        formula_id: record.formula_id.clone(),
        requested,
        ..Default::default()
    };
    let mut seen: HashSet<GroundedQueryGraph> = HashSet::new();
    let mut out = Vec::new();
    for slot in 0..requested {
        for a in 0..cfg.max_retries {
            report.attempts += 1;
            let mut rng = derived_rng(cfg.seed, type_index, slot, a);
            match attempt(record, group, kgs, cfg, &mut rng)? {
                Ok(s) if seen.insert(s.query.clone()) => {
                    out.push(s);
                    break;
                }
                Ok(_) => *report.rejections.entry(Rejection::Duplicate).or_default() += 1,
                Err(why) => *report.rejections.entry(why).or_default() += 1,
            }
        }
    }
    report.emitted = out.len();
    if report.emitted < requested {
        info!(
            "{}: emitted {} of {} samples after {} attempts",
            record.formula_id, report.emitted, requested, report.attempts
        );
    }
    Ok((out, report))
}

/// Samples every type in parallel; output is ordered by (type, slot) and is
/// independent of scheduling.
pub fn sample_dataset(
    types: &[TypeRecord],
    kgs: &KgPair,
    cfg: &SampleConfig,
) -> Result<(Vec<GroundedSample>, Vec<TypeSamplingReport>)> {
    if types.is_empty() {
        return Err(Error::contract("no query types to ground"));
    }
    for t in types {
        t.graph.validate()?;
    }
    let per_type: Vec<(Vec<GroundedSample>, TypeSamplingReport)> = types
        .par_iter()
        .enumerate()
        .map(|(i, t)| sample_type(i, t, kgs, cfg))
        .collect::<Result<_>>()?;
    let mut samples = Vec::new();
    let mut reports = Vec::new();
    for (s, r) in per_type {
        samples.extend(s);
        reports.push(r);
    }
    Ok((samples, reports))
}
