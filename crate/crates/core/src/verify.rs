//! Differential check of the exact solver against the brute-force oracle
//! and the full CSP enumeration on random graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ground::{ground_negative, ground_positive, split_positive_subgraph};
use crate::kg::KnowledgeGraph;
use crate::query::{AbstractQueryGraph, GroundedQueryGraph, NodeKind};
use crate::solver::{self, CspLimits};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    pub instances: usize,
    pub max_entities: usize,
    pub max_relations: usize,
    /// Cap on `|E|^vars` for the oracle; graphs for wide queries shrink to fit.
    pub max_assignments: u64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            instances: 1000,
            max_entities: 40,
            max_relations: 5,
            max_assignments: 200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Mismatch {
    pub instance: usize,
    pub type_index: usize,
    pub query: GroundedQueryGraph,
    pub against: &'static str,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct OracleReport {
    pub instances: usize,
    pub oracle_agreements: usize,
    pub csp_checked: usize,
    pub csp_agreements: usize,
    pub nonempty_answers: usize,
    pub types_covered: usize,
    pub mismatches: Vec<Mismatch>,
}

impl OracleReport {
    pub fn all_agree(&self) -> bool {
        self.mismatches.is_empty() && self.oracle_agreements == self.instances
    }
}

/// Largest entity count `n <= max` with `n^vars <= cap`.
fn entities_for(vars: usize, max: usize, cap: u64) -> usize {
    let mut n = max.max(1);
    while n > 1 && (n as u64).checked_pow(vars as u32).is_none_or(|t| t > cap) {
        n -= 1;
    }
    n
}

fn random_kg(rng: &mut ChaCha8Rng, n: usize, max_relations: usize) -> Result<KnowledgeGraph> {
    let r = rng.gen_range(1..=max_relations.max(1));
    let m = rng.gen_range(n..=3 * n);
    let triples: Vec<_> = (0..m)
        .map(|_| {
            (
                rng.gen_range(0..n as u32),
                rng.gen_range(0..r as u32),
                rng.gen_range(0..n as u32),
            )
        })
        .collect();
    KnowledgeGraph::from_triples(n, r, triples)
}

/// Grounds `g` on a fresh random graph; retries on graphs that cannot host it.
fn random_instance(
    g: &AbstractQueryGraph,
    cfg: &OracleConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(GroundedQueryGraph, KnowledgeGraph)> {
    let vars = g.num_nodes() - g.count(NodeKind::Constant);
    let n = entities_for(vars, cfg.max_entities, cfg.max_assignments);
    let (gp, _) = split_positive_subgraph(g)?;
    for _ in 0..1000 {
        let kg = random_kg(rng, n, cfg.max_relations)?;
        let grounded = ground_positive(g, &gp, &kg, rng)
            .and_then(|(pos, cands)| ground_negative(g, &pos, &cands, &kg, rng));
        match grounded {
            Ok(gr) => return Ok((gr.apply(g)?, kg)),
            Err(Error::SamplingExhausted(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SamplingExhausted("no random graph could host the type".into()))
}

/// Cycles through `types`, grounding each on its own random graph, and
/// compares `solve_efo` with the oracle and with the projected CSP solutions.
pub fn run_oracle_suite(types: &[AbstractQueryGraph], cfg: &OracleConfig) -> Result<OracleReport> {
    if types.is_empty() {
        return Err(Error::contract("no query types to verify"));
    }
    let mut report = OracleReport::default();
    let mut covered = vec![false; types.len()];
    for i in 0..cfg.instances {
        let t = i % types.len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (q, kg) = random_instance(&types[t], cfg, &mut rng)?;
        covered[t] = true;
        report.instances += 1;
        let got = solver::solve_efo(&q, &kg)?;
        let expected = solver::brute_force_oracle(&q, &kg, cfg.max_assignments)?;
        if !got.is_empty() {
            report.nonempty_answers += 1;
        }
        if got == expected {
            report.oracle_agreements += 1;
        } else {
            report.mismatches.push(Mismatch { instance: i, type_index: t, query: q.clone(), against: "oracle" });
        }
        match solver::solve_csp(&q, &kg, CspLimits::default()) {
            Ok(sol) => {
                report.csp_checked += 1;
                if sol.project(&q.free_vars)? == got {
                    report.csp_agreements += 1;
                } else {
                    report.mismatches.push(Mismatch { instance: i, type_index: t, query: q, against: "csp" });
                }
            }
            Err(Error::ResourceLimit(_)) => {}
            Err(e) => return Err(e),
        }
    }
    report.types_covered = covered.iter().filter(|&&c| c).count();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entity_count_fits_cap() {
        assert_eq!(entities_for(2, 40, 200_000), 40);
        assert_eq!(entities_for(4, 40, 200_000), 21);
        assert_eq!(entities_for(1, 0, 10), 1);
    }

    #[test]
    fn small_suite_agrees() {
        let types = vec![
            AbstractQueryGraph::from_spec("cef", &[(0, 1, false), (1, 2, false)]).unwrap(),
            AbstractQueryGraph::from_spec("ccff", &[(0, 2, false), (1, 3, false), (2, 3, false), (1, 2, true)]).unwrap(),
        ];
        let cfg = OracleConfig { instances: 20, ..Default::default() };
        let r = run_oracle_suite(&types, &cfg).unwrap();
        assert!(r.all_agree(), "{:?}", r.mismatches);
        assert_eq!(r.types_covered, 2);
    }
}
