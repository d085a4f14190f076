//! Indexed triple store with observed/full splits.
//!
//! Relation ids `0..R` are the relations found in the input files; ids
//! `R..2R` are their materialized inverses, so `inverse(r) = r ± R` and every
//! triple `(h, r, t)` is stored together with `(t, inverse(r), h)`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Label <-> id maps shared by the observed and full graphs.
#[derive(Debug, Default, Clone)]
pub struct Vocabulary {
    entities: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relations: Vec<String>,
    relation_index: HashMap<String, RelationId>,
}

impl Vocabulary {
    fn intern_entity(&mut self, label: &str) -> EntityId {
        if let Some(&id) = self.entity_index.get(label) {
            return id;
        }
        let id = self.entities.len() as EntityId;
        self.entities.push(label.to_owned());
        self.entity_index.insert(label.to_owned(), id);
        id
    }

    fn intern_relation(&mut self, label: &str) -> RelationId {
        if let Some(&id) = self.relation_index.get(label) {
            return id;
        }
        let id = self.relations.len() as RelationId;
        self.relations.push(label.to_owned());
        self.relation_index.insert(label.to_owned(), id);
        id
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_label(&self, id: EntityId) -> Option<&str> {
        self.entities.get(id as usize).map(String::as_str)
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entity_index.get(label).copied()
    }

    /// Label of a relation id, including materialized inverses (`label^-1`).
    pub fn relation_label(&self, id: RelationId) -> Option<String> {
        let base = self.relations.len();
        let id = id as usize;
        if id < base {
            Some(self.relations[id].clone())
        } else if id < 2 * base {
            Some(format!("{}^-1", self.relations[id - base]))
        } else {
            None
        }
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relation_index.get(label).copied()
    }

    /// Writes `entity_id.tsv` and `relation_id.tsv` (`label\tid` per line).
    pub fn write_id_maps(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(File::create(dir.join("entity_id.tsv"))?);
        for (id, label) in self.entities.iter().enumerate() {
            writeln!(out, "{label}\t{id}")?;
        }
        out.flush()?;
        let mut out = BufWriter::new(File::create(dir.join("relation_id.tsv"))?);
        for id in 0..2 * self.relations.len() {
            let label = self.relation_label(id as RelationId).unwrap_or_default();
            writeln!(out, "{label}\t{id}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Compressed adjacency of one relation: sorted distinct heads, each owning
/// a sorted run of tails.
#[derive(Debug, Default, Clone)]
struct RelationIndex {
    heads: Vec<EntityId>,
    offsets: Vec<u32>,
    tails: Vec<EntityId>,
    endpoints: Vec<EntityId>,
}

impl RelationIndex {
    fn tails_of(&self, head: EntityId) -> &[EntityId] {
        match self.heads.binary_search(&head) {
            Ok(i) => &self.tails[self.offsets[i] as usize..self.offsets[i + 1] as usize],
            Err(_) => &[],
        }
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    num_entities: usize,
    num_base_relations: usize,
    /// All triples including inverses, sorted by (head, relation, tail).
    triples: Vec<Triple>,
    /// `triples[out_offsets[h]..out_offsets[h + 1]]` are the triples headed by `h`.
    out_offsets: Vec<u32>,
    by_relation: Vec<RelationIndex>,
    vocab: Arc<Vocabulary>,
}

impl KnowledgeGraph {
    /// Builds a graph over `num_entities` entities and `num_base_relations`
    /// relations. Inverse triples are added; duplicates are dropped.
    pub fn from_triples<I>(num_entities: usize, num_base_relations: usize, triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (EntityId, RelationId, EntityId)>,
    {
        Self::build(
            num_entities,
            num_base_relations,
            triples,
            Arc::new(Vocabulary::default()),
        )
    }

    fn build<I>(
        num_entities: usize,
        num_base_relations: usize,
        triples: I,
        vocab: Arc<Vocabulary>,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (EntityId, RelationId, EntityId)>,
    {
        let r = num_base_relations as RelationId;
        let mut all = Vec::new();
        for (h, rel, t) in triples {
            if h as usize >= num_entities || t as usize >= num_entities {
                return Err(Error::contract(format!(
                    "entity id out of range in ({h}, {rel}, {t}); |E| = {num_entities}"
                )));
            }
            if rel >= r {
                return Err(Error::contract(format!(
                    "relation id {rel} out of range; |R| = {num_base_relations}"
                )));
            }
            all.push(Triple::new(h, rel, t));
            all.push(Triple::new(t, rel + r, h));
        }
        all.sort_unstable();
        all.dedup();

        let mut out_offsets = vec![0u32; num_entities + 1];
        for tr in &all {
            out_offsets[tr.head as usize + 1] += 1;
        }
        for i in 0..num_entities {
            out_offsets[i + 1] += out_offsets[i];
        }

        let mut per_rel: Vec<Vec<(EntityId, EntityId)>> = vec![Vec::new(); 2 * num_base_relations];
        for tr in &all {
            per_rel[tr.relation as usize].push((tr.head, tr.tail));
        }
        let by_relation = per_rel
            .into_iter()
            .map(|mut pairs| {
                pairs.sort_unstable();
                let mut idx = RelationIndex::default();
                for &(h, t) in &pairs {
                    if idx.heads.last() != Some(&h) {
                        idx.heads.push(h);
                        idx.offsets.push(idx.tails.len() as u32);
                    }
                    idx.tails.push(t);
                }
                idx.offsets.push(idx.tails.len() as u32);
                let mut ends: Vec<EntityId> = pairs.iter().flat_map(|&(h, t)| [h, t]).collect();
                ends.sort_unstable();
                ends.dedup();
                idx.endpoints = ends;
                idx
            })
            .collect();

        Ok(KnowledgeGraph {
            num_entities,
            num_base_relations,
            triples: all,
            out_offsets,
            by_relation,
            vocab,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    /// Relations present in the input, not counting inverses.
    pub fn num_base_relations(&self) -> usize {
        self.num_base_relations
    }

    /// Relation id space size, inverses included.
    pub fn num_relations(&self) -> usize {
        2 * self.num_base_relations
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn inverse(&self, relation: RelationId) -> RelationId {
        let r = self.num_base_relations as RelationId;
        if relation < r {
            relation + r
        } else {
            relation - r
        }
    }

    /// Every stored triple, inverses included, sorted.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Triples whose relation is one of the input relations.
    pub fn base_triples(&self) -> impl Iterator<Item = &Triple> + '_ {
        let r = self.num_base_relations as RelationId;
        self.triples.iter().filter(move |t| t.relation < r)
    }

    /// All triples headed by `head`, sorted by (relation, tail).
    pub fn out_triples(&self, head: EntityId) -> &[Triple] {
        let h = head as usize;
        &self.triples[self.out_offsets[h] as usize..self.out_offsets[h + 1] as usize]
    }

    fn check_entity(&self, e: EntityId) -> Result<()> {
        if (e as usize) < self.num_entities {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "entity id {e} out of range (|E| = {})",
                self.num_entities
            )))
        }
    }

    fn check_relation(&self, r: RelationId) -> Result<()> {
        if (r as usize) < self.num_relations() {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "relation id {r} out of range ({} with inverses)",
                self.num_relations()
            )))
        }
    }

    /// Sorted `{t : (head, relation, t) ∈ kg}`.
    pub fn tails(&self, head: EntityId, relation: RelationId) -> Result<&[EntityId]> {
        self.check_entity(head)?;
        self.check_relation(relation)?;
        Ok(self.tails_unchecked(head, relation))
    }

    /// Sorted `{h : (h, relation, tail) ∈ kg}`.
    pub fn heads(&self, tail: EntityId, relation: RelationId) -> Result<&[EntityId]> {
        self.check_entity(tail)?;
        self.check_relation(relation)?;
        Ok(self.tails_unchecked(tail, self.inverse(relation)))
    }

    /// Same as [`tails`](Self::tails) without range checks; panics on bad ids.
    pub fn tails_unchecked(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.by_relation[relation as usize].tails_of(head)
    }

    /// Entities appearing as head or tail of `relation`.
    pub fn endpoints(&self, relation: RelationId) -> Result<&[EntityId]> {
        self.check_relation(relation)?;
        Ok(&self.by_relation[relation as usize].endpoints)
    }

    /// Distinct heads of `relation`, sorted.
    pub fn relation_heads(&self, relation: RelationId) -> &[EntityId] {
        &self.by_relation[relation as usize].heads
    }

    /// Number of stored triples carrying `relation`.
    pub fn relation_size(&self, relation: RelationId) -> usize {
        self.by_relation[relation as usize].tails.len()
    }

    pub fn contains(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        (head as usize) < self.num_entities
            && (relation as usize) < self.num_relations()
            && self
                .tails_unchecked(head, relation)
                .binary_search(&tail)
                .is_ok()
    }

    /// Relations `r` with `(head, r, tail) ∈ kg`, ascending.
    pub fn relations_between(&self, head: EntityId, tail: EntityId) -> Vec<RelationId> {
        self.out_triples(head)
            .iter()
            .filter(|t| t.tail == tail)
            .map(|t| t.relation)
            .collect()
    }
}

/// The observed (training) graph and the full graph over one vocabulary.
#[derive(Debug, Clone)]
pub struct KgPair {
    pub observed: KnowledgeGraph,
    pub full: KnowledgeGraph,
}

impl KgPair {
    /// Builds a pair from base triples. `observed` must be a subset of `full`;
    /// the observed triples are added to the full graph in any case.
    pub fn from_triples(
        num_entities: usize,
        num_base_relations: usize,
        observed: &[(EntityId, RelationId, EntityId)],
        full_only: &[(EntityId, RelationId, EntityId)],
    ) -> Result<Self> {
        let observed_kg =
            KnowledgeGraph::from_triples(num_entities, num_base_relations, observed.iter().copied())?;
        let full = KnowledgeGraph::from_triples(
            num_entities,
            num_base_relations,
            observed.iter().chain(full_only).copied(),
        )?;
        Ok(KgPair {
            observed: observed_kg,
            full,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.full.num_entities()
    }
}

/// Which files make up the observed graph and which only enter the full graph.
#[derive(Debug, Clone, Default)]
pub struct SplitSpec {
    pub observed: Vec<PathBuf>,
    pub held_out: Vec<PathBuf>,
}

impl SplitSpec {
    /// `train.txt` observed; `valid.txt` and `test.txt` held out (if present).
    pub fn standard(dir: &Path) -> Self {
        let held_out = ["valid.txt", "test.txt"]
            .iter()
            .map(|f| dir.join(f))
            .filter(|p| p.exists())
            .collect();
        SplitSpec {
            observed: vec![dir.join("train.txt")],
            held_out,
        }
    }
}

fn read_triples(
    path: &Path,
    vocab: &mut Vocabulary,
    out: &mut Vec<(EntityId, RelationId, EntityId)>,
) -> Result<()> {
    let reader = BufReader::new(File::open(path)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!(
                    "expected 3 tab-separated tokens (head, relation, tail), got {}",
                    fields.len()
                ),
            });
        }
        let h = vocab.intern_entity(fields[0]);
        let r = vocab.intern_relation(fields[1]);
        let t = vocab.intern_entity(fields[2]);
        out.push((h, r, t));
    }
    Ok(())
}

/// Loads tab-separated triple files. Ids are assigned in first-seen order,
/// observed files first.
pub fn load_kg(splits: &SplitSpec) -> Result<KgPair> {
    let mut vocab = Vocabulary::default();
    let mut observed = Vec::new();
    let mut held_out = Vec::new();
    for p in &splits.observed {
        read_triples(p, &mut vocab, &mut observed)?;
    }
    for p in &splits.held_out {
        read_triples(p, &mut vocab, &mut held_out)?;
    }
    let vocab = Arc::new(vocab);
    let n = vocab.num_entities();
    let r = vocab.num_relations();
    let observed_kg = KnowledgeGraph::build(n, r, observed.iter().copied(), vocab.clone())?;
    let full = KnowledgeGraph::build(n, r, observed.into_iter().chain(held_out), vocab)?;
    Ok(KgPair {
        observed: observed_kg,
        full,
    })
}

/// [`load_kg`] over the standard `train/valid/test.txt` layout of `dir`.
pub fn load_kg_dir(dir: &Path) -> Result<KgPair> {
    load_kg(&SplitSpec::standard(dir))
}
