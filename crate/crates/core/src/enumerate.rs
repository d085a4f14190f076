//! Enumeration of abstract query types under a size budget.
//!
//! Generation runs in four steps: connected simple graphs over the variable
//! nodes, parallel copies of variable–variable edges, constants hung off
//! variables by a single edge each, and finally negation of edges. Every
//! candidate is filtered by the structural checks below and deduplicated by
//! canonical form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::{
    classify_topology, AbstractEdge, AbstractQueryGraph, CanonicalForm, NodeId, NodeKind, TypeGroup,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumBudget {
    pub max_free: usize,
    pub max_exist: usize,
    pub max_const: usize,
    pub max_nodes: usize,
    pub max_edges: usize,
    /// Edges allowed beyond the node count: `|E| <= |V| + max_extra_edges`.
    pub max_extra_edges: usize,
    pub max_neg_edges: usize,
    pub max_dist_to_free: usize,
}

impl Default for EnumBudget {
    fn default() -> Self {
        EnumBudget {
            max_free: 2,
            max_exist: 2,
            max_const: 3,
            max_nodes: 6,
            max_edges: 6,
            max_extra_edges: 0,
            max_neg_edges: 1,
            max_dist_to_free: 3,
        }
    }
}

impl EnumBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_free == 0 {
            return Err(Error::contract("max_free must be at least 1"));
        }
        Ok(())
    }
}

/// How step 4 turns a positive shape into negated types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegationMode {
    /// One negated variant per positive shape and negation count: the valid
    /// placement with the smallest canonical form.
    #[default]
    OnePerShape,
    /// Every valid placement, deduplicated up to isomorphism.
    AllPlacements,
}

impl fmt::Display for NegationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegationMode::OnePerShape => "one",
            NegationMode::AllPlacements => "all",
        })
    }
}

impl FromStr for NegationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" | "one-per-shape" => Ok(NegationMode::OnePerShape),
            "all" | "all-placements" => Ok(NegationMode::AllPlacements),
            other => Err(Error::contract(format!(
                "unknown negation mode '{other}' (expected 'one' or 'all')"
            ))),
        }
    }
}

/// Union-find labels of `nodes` over `edges`; nodes outside `nodes` are ignored.
fn components(n: usize, nodes: &[NodeId], edges: impl Iterator<Item = (NodeId, NodeId)>) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let member: Vec<bool> = (0..n).map(|i| nodes.contains(&i)).collect();
    for (u, v) in edges {
        if member[u] && member[v] {
            let (a, b) = (find(&mut parent, u), find(&mut parent, v));
            parent[a] = b;
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

fn variable_nodes(g: &AbstractQueryGraph) -> Vec<NodeId> {
    (0..g.num_nodes()).filter(|&i| g.kind(i).is_variable()).collect()
}

/// Structural proxy for "no redundant part": no constant–constant edge, and
/// every component left after deleting the constants holds a free variable
/// (a component without one would be a closed sentence).
pub fn check_no_redundancy(g: &AbstractQueryGraph) -> bool {
    let cc = g
        .edges()
        .iter()
        .any(|e| g.kind(e.u) == NodeKind::Constant && g.kind(e.v) == NodeKind::Constant);
    if cc {
        return false;
    }
    let vars = variable_nodes(g);
    let comp = components(g.num_nodes(), &vars, g.edges().iter().map(|e| (e.u, e.v)));
    let with_free: BTreeSet<usize> = vars
        .iter()
        .filter(|&&v| g.kind(v) == NodeKind::Free)
        .map(|&v| comp[v])
        .collect();
    vars.iter().all(|&v| with_free.contains(&comp[v]))
}

/// True iff the variables form one connected component once constants are removed.
pub fn check_no_decomposition(g: &AbstractQueryGraph) -> bool {
    let vars = variable_nodes(g);
    let comp = components(g.num_nodes(), &vars, g.edges().iter().map(|e| (e.u, e.v)));
    vars.iter().map(|&v| comp[v]).collect::<BTreeSet<_>>().len() <= 1
}

/// True iff every variable has at least one positive incident edge.
pub fn check_negation_placement(g: &AbstractQueryGraph) -> bool {
    variable_nodes(g)
        .into_iter()
        .all(|v| g.edges().iter().any(|e| !e.neg && e.touches(v)))
}

/// True iff every connected component of the positive-edge subgraph contains
/// a constant, i.e. no group of variables is tied to the rest of the query
/// only through negated atoms.
pub fn check_positive_anchoring(g: &AbstractQueryGraph) -> bool {
    let touched: Vec<NodeId> = (0..g.num_nodes())
        .filter(|&i| g.edges().iter().any(|e| !e.neg && e.touches(i)))
        .collect();
    let comp = components(
        g.num_nodes(),
        &touched,
        g.edges().iter().filter(|e| !e.neg).map(|e| (e.u, e.v)),
    );
    let anchored: BTreeSet<usize> = touched
        .iter()
        .filter(|&&i| g.kind(i) == NodeKind::Constant)
        .map(|&i| comp[i])
        .collect();
    touched.iter().all(|&i| anchored.contains(&comp[i]))
}

/// True iff every node lies within `d` hops of some free node.
pub fn check_diameter(g: &AbstractQueryGraph, d: usize) -> bool {
    g.distances_from(&g.free_nodes())
        .iter()
        .all(|x| x.is_some_and(|x| x <= d))
}

/// All connected simple graphs on `n` labelled nodes with at most `max_edges` edges.
fn connected_simple_graphs(n: usize, max_edges: usize) -> Vec<Vec<(NodeId, NodeId)>> {
    let pairs: Vec<(NodeId, NodeId)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << pairs.len()) {
        let edges: Vec<(NodeId, NodeId)> = (0..pairs.len())
            .filter(|&b| mask & (1 << b) != 0)
            .map(|b| pairs[b])
            .collect();
        if edges.len() + 1 < n || edges.len() > max_edges {
            continue;
        }
        let all: Vec<NodeId> = (0..n).collect();
        let comp = components(n, &all, edges.iter().copied());
        if comp.iter().all(|&c| c == comp[0]) {
            out.push(edges);
        }
    }
    out
}

/// All multisets of size `size` drawn from `0..n`, as non-decreasing vectors.
fn multisets(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, size, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, size, 0, &mut Vec::new(), &mut out);
    out
}

fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    multisets(n, size)
        .into_iter()
        .filter(|m| m.windows(2).all(|w| w[0] < w[1]))
        .collect()
}

/// Steps 1–3: positive shapes, deduplicated.
fn positive_shapes(budget: &EnumBudget) -> BTreeMap<CanonicalForm, AbstractQueryGraph> {
    let mut shapes = BTreeMap::new();
    let max_vars = (budget.max_free + budget.max_exist).min(budget.max_nodes.saturating_sub(1));
    for nv in 1..=max_vars {
        // Variable-edge budget: |E_var| + c <= |V| + extra with |V| = nv + c.
        let var_edge_cap = (nv + budget.max_extra_edges).min(budget.max_edges.saturating_sub(1));
        let skeletons = connected_simple_graphs(nv, var_edge_cap);
        for k in 1..=budget.max_free.min(nv) {
            let e = nv - k;
            if e > budget.max_exist {
                continue;
            }
            let mut kinds = vec![NodeKind::Existential; e];
            kinds.extend(std::iter::repeat_n(NodeKind::Free, k));

            // Steps 1-2: simple skeleton plus parallel copies.
            let mut var_graphs: BTreeMap<CanonicalForm, Vec<(NodeId, NodeId)>> = BTreeMap::new();
            for simple in &skeletons {
                for extra in 0..=var_edge_cap - simple.len() {
                    for copies in multisets(simple.len(), extra) {
                        let mut edges = simple.clone();
                        edges.extend(copies.iter().map(|&i| simple[i]));
                        let g = graph(&kinds, &edges);
                        var_graphs.entry(g.canonical_form()).or_insert(edges);
                    }
                }
            }

            // Step 3: constants, each attached to one variable.
            for (_, var_edges) in var_graphs {
                for c in 1..=budget.max_const {
                    if nv + c > budget.max_nodes || var_edges.len() + c > budget.max_edges {
                        continue;
                    }
                    for anchors in multisets(nv, c) {
                        let mut all_kinds = kinds.clone();
                        all_kinds.extend(std::iter::repeat_n(NodeKind::Constant, c));
                        let mut edges = var_edges.clone();
                        edges.extend(anchors.iter().enumerate().map(|(i, &v)| (nv + i, v)));
                        let g = graph(&all_kinds, &edges);
                        if classify_topology(&g).is_err()
                            || !check_diameter(&g, budget.max_dist_to_free)
                        {
                            continue;
                        }
                        let g = g.canonicalize();
                        shapes.entry(g.canonical_form()).or_insert(g);
                    }
                }
            }
        }
    }
    shapes
}

fn graph(kinds: &[NodeKind], edges: &[(NodeId, NodeId)]) -> AbstractQueryGraph {
    AbstractQueryGraph::new(
        kinds.to_vec(),
        edges.iter().map(|&(u, v)| AbstractEdge::pos(u, v)).collect(),
    )
    .expect("generated edges are in range and loop-free")
}

/// True iff `g` passes every filter applied to enumerated types.
pub fn admissible(g: &AbstractQueryGraph, budget: &EnumBudget) -> bool {
    g.count(NodeKind::Free) >= 1
        && g.is_connected()
        && check_no_redundancy(g)
        && check_no_decomposition(g)
        && check_negation_placement(g)
        && check_positive_anchoring(g)
        && check_diameter(g, budget.max_dist_to_free)
        && no_parallel_negatives(g)
        && classify_topology(g).is_ok()
}

fn no_parallel_negatives(g: &AbstractQueryGraph) -> bool {
    let mut seen = BTreeSet::new();
    g.edges()
        .iter()
        .filter(|e| e.neg)
        .all(|e| seen.insert((e.u.min(e.v), e.u.max(e.v))))
}

/// Step 4 for one positive shape: valid graphs with exactly `j` negated edges.
fn negated_variants(shape: &AbstractQueryGraph, j: usize, budget: &EnumBudget) -> BTreeMap<CanonicalForm, AbstractQueryGraph> {
    let mut out = BTreeMap::new();
    for chosen in subsets(shape.edges().len(), j) {
        let edges = shape
            .edges()
            .iter()
            .enumerate()
            .map(|(i, e)| AbstractEdge {
                neg: chosen.contains(&i),
                ..*e
            })
            .collect();
        let g = AbstractQueryGraph::new(shape.kinds().to_vec(), edges).expect("same nodes");
        if admissible(&g, budget) {
            let g = g.canonicalize();
            out.entry(g.canonical_form()).or_insert(g);
        }
    }
    out
}

/// Enumerates all admissible abstract query types, canonicalised, ordered by
/// (node count, edge count, canonical form).
pub fn enumerate_abstract(budget: &EnumBudget, mode: NegationMode) -> Result<Vec<AbstractQueryGraph>> {
    budget.validate()?;
    let mut all: BTreeMap<CanonicalForm, AbstractQueryGraph> = BTreeMap::new();
    for (cf, shape) in positive_shapes(budget) {
        if !admissible(&shape, budget) {
            continue;
        }
        for j in 1..=budget.max_neg_edges.min(shape.edges().len()) {
            let variants = negated_variants(&shape, j, budget);
            match mode {
                NegationMode::OnePerShape => {
                    if let Some((cf, g)) = variants.into_iter().next() {
                        all.insert(cf, g);
                    }
                }
                NegationMode::AllPlacements => all.extend(variants),
            }
        }
        all.insert(cf, shape);
    }
    let mut out: Vec<(usize, usize, CanonicalForm, AbstractQueryGraph)> = all
        .into_iter()
        .map(|(cf, g)| (g.num_nodes(), g.edges().len(), cf, g))
        .collect();
    out.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
    Ok(out.into_iter().map(|t| t.3).collect())
}

/// `type_0007`-style identifier for position `i` of an enumeration.
pub fn formula_id(i: usize) -> String {
    format!("type_{i:04}")
}

/// Number of types per (constants, existential, free, topology) cell.
pub fn count_table(types: &[AbstractQueryGraph]) -> Result<BTreeMap<TypeGroup, usize>> {
    let mut table = BTreeMap::new();
    for g in types {
        *table.entry(g.group()?).or_insert(0) += 1;
    }
    Ok(table)
}

/// Renders a count table as a grid of constants by (existential count, topology):
/// one row per constant count, columns per (existential, topology).
pub fn render_count_table(table: &BTreeMap<TypeGroup, usize>, free: usize) -> String {
    use crate::query::Topology;
    let rows: BTreeSet<usize> = table.keys().filter(|g| g.free == free).map(|g| g.constants).collect();
    let cols: BTreeSet<(usize, Topology)> = table
        .keys()
        .filter(|g| g.free == free)
        .map(|g| (g.existential, g.topology))
        .collect();
    let mut s = format!("k={free}");
    for (e, t) in &cols {
        s.push_str(&format!("\te={e} {t}"));
    }
    s.push_str("\tsum\n");
    let mut total = 0;
    for c in &rows {
        s.push_str(&format!("c={c}"));
        let mut row = 0;
        for &(e, t) in &cols {
            let n = table
                .get(&TypeGroup {
                    constants: *c,
                    existential: e,
                    free,
                    topology: t,
                })
                .copied()
                .unwrap_or(0);
            row += n;
            s.push_str(&format!("\t{n}"));
        }
        total += row;
        s.push_str(&format!("\t{row}\n"));
    }
    s.push_str(&format!("total\t{total}\n"));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::Topology;

    fn g(kinds: &str, edges: &[(usize, usize, bool)]) -> AbstractQueryGraph {
        AbstractQueryGraph::from_spec(kinds, edges).unwrap()
    }

    #[test]
    fn redundancy_examples() {
        assert!(!check_no_redundancy(&g("ccf", &[(0, 1, false), (1, 2, false)])));
        assert!(check_no_redundancy(&g("cef", &[(0, 1, false), (1, 2, false)])));
        // x - c - f: x is cut off from every free variable
        assert!(!check_no_redundancy(&g("ecf", &[(0, 1, false), (1, 2, false)])));
    }

    #[test]
    fn decomposition_examples() {
        assert!(!check_no_decomposition(&g("fcf", &[(0, 1, false), (1, 2, false)])));
        assert!(check_no_decomposition(&g(
            "cceff",
            &[(0, 2, false), (1, 2, false), (2, 3, false), (2, 4, false)]
        )));
    }

    #[test]
    fn decomposition_matches_component_count_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let n = rng.gen_range(2..7);
            let kinds: String = (0..n).map(|_| ['c', 'e', 'f'][rng.gen_range(0..3)]).collect();
            let edges: Vec<(usize, usize, bool)> = (0..rng.gen_range(1..7))
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), false))
                .filter(|(u, v, _)| u != v)
                .collect();
            let gr = g(&kinds, &edges);
            // DFS over variables only.
            let vars: Vec<usize> = (0..n).filter(|&i| gr.kind(i).is_variable()).collect();
            let mut seen = vec![false; n];
            let mut count = 0;
            for &s in &vars {
                if seen[s] {
                    continue;
                }
                count += 1;
                let mut stack = vec![s];
                seen[s] = true;
                while let Some(u) = stack.pop() {
                    for e in gr.edges() {
                        if e.touches(u) {
                            let w = e.other(u);
                            if gr.kind(w).is_variable() && !seen[w] {
                                seen[w] = true;
                                stack.push(w);
                            }
                        }
                    }
                }
            }
            assert_eq!(check_no_decomposition(&gr), count <= 1, "{kinds} {edges:?}");
        }
    }

    #[test]
    fn negation_placement_examples() {
        assert!(!check_negation_placement(&g("cf", &[(0, 1, true)])));
        assert!(check_negation_placement(&g("ccf", &[(0, 2, false), (1, 2, true)])));
        assert!(check_negation_placement(&g("cef", &[(0, 1, false), (1, 2, false)])));
    }

    #[test]
    fn smallest_budget_gives_single_edge() {
        let b = EnumBudget {
            max_free: 1,
            max_exist: 0,
            max_const: 1,
            max_nodes: 2,
            max_edges: 1,
            max_extra_edges: 0,
            max_neg_edges: 0,
            max_dist_to_free: 3,
        };
        let types = enumerate_abstract(&b, NegationMode::OnePerShape).unwrap();
        assert_eq!(types.len(), 1);
        assert_eq!(types[0], g("cf", &[(0, 1, false)]));
    }

    #[test]
    fn empty_budget_is_rejected_or_empty() {
        let b = EnumBudget {
            max_const: 0,
            ..EnumBudget::default()
        };
        assert!(enumerate_abstract(&b, NegationMode::OnePerShape).unwrap().is_empty());
    }

    #[test]
    fn outputs_satisfy_all_checks_and_are_unique() {
        let b = EnumBudget::default();
        for mode in [NegationMode::OnePerShape, NegationMode::AllPlacements] {
            let types = enumerate_abstract(&b, mode).unwrap();
            let forms: BTreeSet<_> = types.iter().map(|t| t.canonical_form()).collect();
            assert_eq!(forms.len(), types.len());
            for t in &types {
                t.validate().unwrap();
                assert!(admissible(t, &b));
                assert!(t.num_nodes() <= b.max_nodes && t.edges().len() <= b.max_edges);
                assert!(t.edges().len() <= t.num_nodes() + b.max_extra_edges);
            }
        }
    }

    #[test]
    fn forced_single_free_cells() {
        let types = enumerate_abstract(&EnumBudget::default(), NegationMode::OnePerShape).unwrap();
        let table = count_table(&types).unwrap();
        let cell = |c, e, t| {
            table
                .get(&TypeGroup {
                    constants: c,
                    existential: e,
                    free: 1,
                    topology: t,
                })
                .copied()
                .unwrap_or(0)
        };
        assert_eq!(cell(1, 0, Topology::Sdag), 1);
        assert_eq!(cell(1, 1, Topology::Sdag), 2);
        assert_eq!(cell(1, 1, Topology::Multi), 4);
        assert_eq!(cell(2, 0, Topology::Sdag), 2);
    }

    #[test]
    fn budget_monotonicity() {
        let small = EnumBudget {
            max_free: 1,
            max_exist: 1,
            max_const: 2,
            max_nodes: 4,
            max_edges: 4,
            ..EnumBudget::default()
        };
        let large = EnumBudget {
            max_exist: 2,
            max_nodes: 5,
            max_edges: 5,
            ..small
        };
        {
            let mode = NegationMode::AllPlacements;
            let a: BTreeSet<_> = enumerate_abstract(&small, mode).unwrap().iter().map(|t| t.canonical_form()).collect();
            let b: BTreeSet<_> = enumerate_abstract(&large, mode).unwrap().iter().map(|t| t.canonical_form()).collect();
            assert!(a.is_subset(&b));
        }
    }
}
