//! Ranking metrics over hard answers: marginal, multiply and joint, plus the
//! macro-averaged per-cell report.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground::GroundedSample;
use crate::kg::{EntityId, KgPair};
use crate::query::TypeGroup;
use crate::reasoner::{self, CrispOps, RankingRecord};

/// A sample together with its reasoner output.
pub struct RankContext<'a> {
    pub sample: &'a GroundedSample,
    pub record: &'a RankingRecord,
    /// Per free variable: entities appearing in any easy or hard tuple.
    answers: Vec<BTreeSet<EntityId>>,
    /// Per free variable: entities appearing in some hard tuple.
    hard: Vec<BTreeSet<EntityId>>,
}

impl<'a> RankContext<'a> {
    pub fn new(sample: &'a GroundedSample, record: &'a RankingRecord) -> Result<Self> {
        let k = sample.arity();
        if record.free.len() != k {
            return Err(Error::contract(format!(
                "ranking has {} free variables, sample has {k}",
                record.free.len()
            )));
        }
        let all = sample.all_answers();
        let answers = (0..k)
            .map(|i| all.tuples().iter().map(|t| t[i]).collect())
            .collect();
        let hard = (0..k)
            .map(|i| sample.hard_answers.tuples().iter().map(|t| t[i]).collect())
            .collect();
        Ok(RankContext {
            sample,
            record,
            answers,
            hard,
        })
    }

    fn entry(&self, i: usize, e: EntityId) -> Result<&crate::reasoner::EntityRank> {
        self.record
            .lookup(i, e)
            .ok_or_else(|| Error::contract(format!("no ranking recorded for entity {e} at variable {i}")))
    }
}

/// Rank of hard answer `e` of variable `i` among `{e}` plus the non-answers
/// (entities that are neither full nor observed answers there). Ties with
/// non-answers count against `e`.
pub fn filtered_rank(ctx: &RankContext, i: usize, e: EntityId) -> Result<usize> {
    if i >= ctx.hard.len() || !ctx.hard[i].contains(&e) {
        return Err(Error::contract(format!("entity {e} is not a hard answer of variable {i}")));
    }
    let me = ctx.entry(i, e)?;
    let mut other_answers = 0;
    for &b in &ctx.answers[i] {
        if b != e && ctx.entry(i, b)?.score >= me.score {
            other_answers += 1;
        }
    }
    Ok(1 + me.ge_count - other_answers)
}

/// Filtered rank from a plain score vector: `1 + #{non-answers x : score(x) >= score(e)}`.
pub fn filtered_rank_from_scores(scores: &[f64], answers: &BTreeSet<EntityId>, e: EntityId) -> usize {
    let s = scores[e as usize];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(x, &v)| x != e as usize && !answers.contains(&(x as EntityId)) && v >= s)
        .count()
}

/// MRR and HIT@K of one query (or an average of them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
}

impl Scores {
    fn from_ranks(ranks: &[usize], hits: &[usize]) -> Self {
        let n = ranks.len() as f64;
        Scores {
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            hits: hits
                .iter()
                .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
                .collect(),
        }
    }

    fn mean(items: &[Scores]) -> Option<Scores> {
        let first = items.first()?;
        let n = items.len() as f64;
        Some(Scores {
            mrr: items.iter().map(|s| s.mrr).sum::<f64>() / n,
            hits: first
                .hits
                .keys()
                .map(|&k| (k, items.iter().map(|s| s.hits[&k]).sum::<f64>() / n))
                .collect(),
        })
    }
}

/// Average over free variables that have marginal hard answers; `None` when
/// no variable has one (the query is skipped).
pub fn marginal_metrics(ctx: &RankContext, hits: &[usize]) -> Result<Option<Scores>> {
    let mut per_var = Vec::new();
    for (i, marginal) in ctx.sample.marginal_hard.iter().enumerate() {
        if marginal.is_empty() {
            continue;
        }
        let ranks = marginal
            .iter()
            .map(|&e| filtered_rank(ctx, i, e))
            .collect::<Result<Vec<_>>>()?;
        per_var.push(Scores::from_ranks(&ranks, hits));
    }
    Ok(Scores::mean(&per_var))
}

/// HIT@n^k: share of hard tuples whose every component has filtered rank ≤ n.
pub fn multiply_metrics(ctx: &RankContext, hits: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let tuples = ctx.sample.hard_answers.tuples();
    if tuples.is_empty() {
        return Err(Error::contract("sample has no hard answer"));
    }
    let ranks = tuples
        .iter()
        .map(|t| {
            t.iter()
                .enumerate()
                .map(|(i, &e)| filtered_rank(ctx, i, e))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits
        .iter()
        .map(|&n| {
            let ok = ranks.iter().filter(|r| r.iter().all(|&x| x <= n)).count();
            (n, ok as f64 / tuples.len() as f64)
        })
        .collect())
}

/// Position of the rank pair `(r1, r2)` when pairs are ordered by rank sum,
/// then lexicographically: `C(r1 + r2 - 1, 2) + r1`.
pub fn joint_rank_k2(r1: u64, r2: u64) -> Result<u64> {
    if r1 < 1 || r2 < 1 {
        return Err(Error::contract("ranks start at 1"));
    }
    let overflow = || Error::contract("joint rank overflows u64");
    let n = r1.checked_add(r2).ok_or_else(overflow)? - 1;
    let pairs = if n % 2 == 0 {
        (n / 2).checked_mul(n - 1)
    } else {
        n.checked_mul((n - 1) / 2)
    }
    .ok_or_else(overflow)?;
    pairs.checked_add(r1).ok_or_else(overflow)
}

/// Joint MRR/HIT@K for k = 2: the closed-form rank of each hard tuple from
/// whole-set per-variable ranks, minus the other answer tuples ranked ahead.
pub fn joint_metrics(ctx: &RankContext, hits: &[usize]) -> Result<Scores> {
    let k = ctx.sample.arity();
    if k != 2 {
        return Err(Error::UnsupportedArity(k));
    }
    let raw = |t: &[EntityId]| -> Result<u64> {
        joint_rank_k2(ctx.entry(0, t[0])?.rank as u64, ctx.entry(1, t[1])?.rank as u64)
    };
    let all = ctx.sample.all_answers();
    let all_ranks = all.tuples().iter().map(|t| raw(t)).collect::<Result<Vec<_>>>()?;
    let tuples = ctx.sample.hard_answers.tuples();
    if tuples.is_empty() {
        return Err(Error::contract("sample has no hard answer"));
    }
    let mut ranks = Vec::with_capacity(tuples.len());
    for t in tuples {
        let r = raw(t)?;
        let ahead = all
            .tuples()
            .iter()
            .zip(&all_ranks)
            .filter(|(u, &ru)| u.as_slice() != t.as_slice() && ru < r)
            .count() as u64;
        ranks.push((r - ahead) as usize);
    }
    Ok(Scores::from_ranks(&ranks, hits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Marginal,
    Multiply,
    Joint,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marginal" => Ok(Metric::Marginal),
            "multiply" => Ok(Metric::Multiply),
            "joint" => Ok(Metric::Joint),
            other => Err(Error::contract(format!("unknown metric '{other}'"))),
        }
    }
}

/// All metrics of one query; absent entries were not requested or do not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub formula_id: String,
    pub group: TypeGroup,
    pub marginal: Option<Scores>,
    pub marginal_skipped: bool,
    pub multiply: Option<BTreeMap<usize, f64>>,
    pub joint: Option<Scores>,
}

pub fn evaluate_query(ctx: &RankContext, metrics: &[Metric], hits: &[usize]) -> Result<QueryMetrics> {
    let mut out = QueryMetrics {
        formula_id: ctx.sample.formula_id.clone(),
        group: ctx.sample.group,
        marginal: None,
        marginal_skipped: false,
        multiply: None,
        joint: None,
    };
    if metrics.contains(&Metric::Marginal) {
        out.marginal = marginal_metrics(ctx, hits)?;
        out.marginal_skipped = out.marginal.is_none();
    }
    if metrics.contains(&Metric::Multiply) {
        out.multiply = Some(multiply_metrics(ctx, hits)?);
    }
    if metrics.contains(&Metric::Joint) && ctx.sample.arity() == 2 {
        out.joint = Some(joint_metrics(ctx, hits)?);
    }
    Ok(out)
}

/// Macro averages of one type or one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub queries: usize,
    pub marginal_skipped: usize,
    pub marginal: Option<Scores>,
    pub multiply: Option<BTreeMap<usize, f64>>,
    pub joint: Option<Scores>,
}

fn mean_map(items: &[&BTreeMap<usize, f64>]) -> Option<BTreeMap<usize, f64>> {
    let first = items.first()?;
    let n = items.len() as f64;
    Some(
        first
            .keys()
            .map(|&k| (k, items.iter().map(|m| m[&k]).sum::<f64>() / n))
            .collect(),
    )
}

impl Aggregate {
    fn of_queries(qs: &[&QueryMetrics]) -> Self {
        Aggregate {
            queries: qs.len(),
            marginal_skipped: qs.iter().filter(|q| q.marginal_skipped).count(),
            marginal: Scores::mean(&qs.iter().filter_map(|q| q.marginal.clone()).collect::<Vec<_>>()),
            multiply: mean_map(&qs.iter().filter_map(|q| q.multiply.as_ref()).collect::<Vec<_>>()),
            joint: Scores::mean(&qs.iter().filter_map(|q| q.joint.clone()).collect::<Vec<_>>()),
        }
    }

    fn of_types(ts: &[&Aggregate]) -> Self {
        Aggregate {
            queries: ts.iter().map(|t| t.queries).sum(),
            marginal_skipped: ts.iter().map(|t| t.marginal_skipped).sum(),
            marginal: Scores::mean(&ts.iter().filter_map(|t| t.marginal.clone()).collect::<Vec<_>>()),
            multiply: mean_map(&ts.iter().filter_map(|t| t.multiply.as_ref()).collect::<Vec<_>>()),
            joint: Scores::mean(&ts.iter().filter_map(|t| t.joint.clone()).collect::<Vec<_>>()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub formula_id: String,
    pub group: TypeGroup,
    #[serde(flatten)]
    pub scores: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub group: TypeGroup,
    pub types: usize,
    #[serde(flatten)]
    pub scores: Aggregate,
}

/// Queries are averaged into types, types into (c, e, topology, k) cells.
/// Cells without queries are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub hits: Vec<usize>,
    pub cells: Vec<CellReport>,
    pub types: Vec<TypeReport>,
}

pub fn aggregate(queries: &[QueryMetrics], hits: &[usize]) -> MetricReport {
    let mut by_type: BTreeMap<&str, Vec<&QueryMetrics>> = BTreeMap::new();
    for q in queries {
        by_type.entry(q.formula_id.as_str()).or_default().push(q);
    }
    let types: Vec<TypeReport> = by_type
        .into_iter()
        .map(|(id, qs)| TypeReport {
            formula_id: id.to_owned(),
            group: qs[0].group,
            scores: Aggregate::of_queries(&qs),
        })
        .collect();
    let mut by_cell: BTreeMap<TypeGroup, Vec<&Aggregate>> = BTreeMap::new();
    for t in &types {
        by_cell.entry(t.group).or_default().push(&t.scores);
    }
    let cells = by_cell
        .into_iter()
        .map(|(group, ts)| CellReport {
            group,
            types: ts.len(),
            scores: Aggregate::of_types(&ts),
        })
        .collect();
    MetricReport {
        hits: hits.to_vec(),
        cells,
        types,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{:.4}", v))
}

/// CSV with one row per cell followed by the per-c and per-e averages of
/// the cell scores, for each arity.
pub fn report_csv(report: &MetricReport) -> String {
    let mut header = vec!["k".to_owned(), "row".to_owned(), "marginal_mrr".to_owned()];
    for h in &report.hits {
        header.push(format!("marginal_hit{h}"));
    }
    for h in &report.hits {
        header.push(format!("multiply_hit{h}"));
    }
    header.push("joint_mrr".to_owned());
    for h in &report.hits {
        header.push(format!("joint_hit{h}"));
    }
    let mut lines = vec![header.join(",")];
    let row = |k: usize, label: String, aggs: &[&Aggregate]| {
        let agg = Aggregate::of_types(aggs);
        let mut cols = vec![k.to_string(), label, fmt_opt(agg.marginal.as_ref().map(|s| s.mrr))];
        for h in &report.hits {
            cols.push(fmt_opt(agg.marginal.as_ref().map(|s| s.hits[h])));
        }
        for h in &report.hits {
            cols.push(fmt_opt(agg.multiply.as_ref().map(|m| m[h])));
        }
        cols.push(fmt_opt(agg.joint.as_ref().map(|s| s.mrr)));
        for h in &report.hits {
            cols.push(fmt_opt(agg.joint.as_ref().map(|s| s.hits[h])));
        }
        cols.join(",")
    };
    let arities: BTreeSet<usize> = report.cells.iter().map(|c| c.group.free).collect();
    for k in arities {
        let cells: Vec<&CellReport> = report.cells.iter().filter(|c| c.group.free == k).collect();
        for c in &cells {
            let g = c.group;
            lines.push(row(k, format!("c={} e={} {}", g.constants, g.existential, g.topology), &[&c.scores]));
        }
        let cs: BTreeSet<usize> = cells.iter().map(|c| c.group.constants).collect();
        for cv in cs {
            let sel: Vec<&Aggregate> = cells.iter().filter(|c| c.group.constants == cv).map(|c| &c.scores).collect();
            lines.push(row(k, format!("AVG(c={cv})"), &sel));
        }
        let es: BTreeSet<usize> = cells.iter().map(|c| c.group.existential).collect();
        for ev in es {
            let sel: Vec<&Aggregate> = cells.iter().filter(|c| c.group.existential == ev).map(|c| &c.scores).collect();
            lines.push(row(k, format!("AVG(e={ev})"), &sel));
        }
    }
    lines.join("\n") + "\n"
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SanityReport {
    pub checked_queries: usize,
    pub checked_answers: usize,
    pub passed_answers: usize,
    pub pass_rate: f64,
}

/// Runs the crisp reasoner over the observed graph on every tree-form
/// sample and checks that each easy answer gets score 1.
pub fn crisp_sanity_eval(kgs: &KgPair, samples: &[GroundedSample]) -> Result<SanityReport> {
    let ops = CrispOps::new(&kgs.observed);
    let mut report = SanityReport {
        checked_queries: 0,
        checked_answers: 0,
        passed_answers: 0,
        pass_rate: 1.0,
    };
    for s in samples {
        let shape = s.query.shape()?;
        if !reasoner::is_tree_form(&shape.graph) {
            continue;
        }
        report.checked_queries += 1;
        let ordering = reasoner::order_nodes(&shape.graph)?;
        let exec = reasoner::execute(&s.query, &ordering, &ops)?;
        let state = exec.states[s.query.free_vars[0]].as_ref().expect("checked by execute");
        for t in s.easy_answers.tuples() {
            report.checked_answers += 1;
            if crate::reasoner::OperatorInterface::score(&ops, state, t[0]) == 1.0 {
                report.passed_answers += 1;
            }
        }
    }
    if report.checked_answers > 0 {
        report.pass_rate = report.passed_answers as f64 / report.checked_answers as f64;
    }
    Ok(report)
}
