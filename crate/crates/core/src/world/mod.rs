//! Synthetic multi-hop knowledge worlds.
//!
//! A world is a functional entity–relation graph: every `(subject, relation)`
//! pair has at most one object. Tasks are simple paths through the graph; the
//! question reveals the start entity and the relation sequence while the
//! intermediate entities must be recovered by searching.

mod metrics;
mod pivot;
mod retrieval;

pub use metrics::{normalize_answer, score_answer, score_answer_with, AnswerScore, Normalization};
pub use pivot::{label_pivots, pivot_oracle, PivotRule, PivotTracker};
pub use retrieval::{retrieve, RetrievalConfig, RetrievalResult};

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("cannot embed a {hops}-hop chain in a world of {entities} entities (needs at least {})", hops + 1)]
    InfeasibleChain { entities: usize, hops: usize },
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("hop count {requested} outside supported range [2, {max}]")]
    UnsupportedHops { requested: usize, max: usize },
    #[error("no {hops}-hop chain exists in this world")]
    NoChain { hops: usize },
    #[error("empty gold answer set")]
    EmptyGoldSet,
    #[error("malformed world: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl EntityId {
    /// Canonical surface name used by generated worlds, e.g. `e17`.
    pub fn label(self) -> String {
        format!("e{}", self.0)
    }

    /// Inverse of [`EntityId::label`]; tolerant of surrounding whitespace and case.
    pub fn parse_label(text: &str) -> Option<Self> {
        let t = text.trim();
        let digits = t.strip_prefix('e').or_else(|| t.strip_prefix('E'))?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        digits.parse().ok().map(EntityId)
    }
}

impl RelationId {
    pub fn label(self) -> String {
        format!("r{}", self.0)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A `(subject, relation, object)` fact; serialized as `[s, r, o]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(EntityId, RelationId, EntityId)", into = "(EntityId, RelationId, EntityId)")]
pub struct Fact {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Fact {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        Self { subject, relation, object }
    }

    pub fn query(&self) -> Query {
        Query::new(self.subject, self.relation)
    }
}

impl From<(EntityId, RelationId, EntityId)> for Fact {
    fn from((s, r, o): (EntityId, RelationId, EntityId)) -> Self {
        Self::new(s, r, o)
    }
}

impl From<Fact> for (EntityId, RelationId, EntityId) {
    fn from(f: Fact) -> Self {
        (f.subject, f.relation, f.object)
    }
}

/// A search action `(entity, relation)`; serialized as `[e, r]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(EntityId, RelationId)", into = "(EntityId, RelationId)")]
pub struct Query {
    pub entity: EntityId,
    pub relation: RelationId,
}

impl Query {
    pub fn new(entity: EntityId, relation: RelationId) -> Self {
        Self { entity, relation }
    }
}

impl From<(EntityId, RelationId)> for Query {
    fn from((e, r): (EntityId, RelationId)) -> Self {
        Self::new(e, r)
    }
}

impl From<Query> for (EntityId, RelationId) {
    fn from(q: Query) -> Self {
        (q.entity, q.relation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub entities: usize,
    pub relations: usize,
    /// Out-degree of every entity (distinct relations per subject).
    pub branching: usize,
    /// Longest chain the world must be able to host.
    pub max_hops: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self { entities: 50, relations: 5, branching: 3, max_hops: 4, seed: 1 }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.relations == 0 {
            return Err(WorldError::InvalidConfig("relations must be at least 1".into()));
        }
        if self.branching == 0 || self.branching > self.relations {
            return Err(WorldError::InvalidConfig(format!(
                "branching must be in [1, {}], got {}",
                self.relations, self.branching
            )));
        }
        if self.max_hops < 1 {
            return Err(WorldError::InvalidConfig("max_hops must be at least 1".into()));
        }
        if self.entities < self.max_hops + 1 {
            return Err(WorldError::InfeasibleChain { entities: self.entities, hops: self.max_hops });
        }
        Ok(())
    }
}

/// On-disk form of a world; indices are rebuilt on load.
#[derive(Serialize, Deserialize)]
struct WorldRecord {
    seed: u64,
    max_hops: usize,
    entities: Vec<String>,
    relations: Vec<String>,
    edges: Vec<Fact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldRecord", into = "WorldRecord")]
pub struct KnowledgeWorld {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    edges: BTreeMap<Query, EntityId>,
    by_relation: Vec<Vec<Fact>>,
    all_facts: Vec<Fact>,
    seed: u64,
    max_hops: usize,
}

impl TryFrom<WorldRecord> for KnowledgeWorld {
    type Error = WorldError;

    fn try_from(rec: WorldRecord) -> Result<Self, WorldError> {
        KnowledgeWorld::from_parts(rec.entities, rec.relations, rec.edges, rec.seed, rec.max_hops)
    }
}

impl From<KnowledgeWorld> for WorldRecord {
    fn from(w: KnowledgeWorld) -> Self {
        WorldRecord {
            seed: w.seed,
            max_hops: w.max_hops,
            edges: w.all_facts,
            entities: w.entity_names,
            relations: w.relation_names,
        }
    }
}

impl KnowledgeWorld {
    /// Builds a world from explicit names and facts, e.g. for hand-written fixtures.
    pub fn from_parts(
        entity_names: Vec<String>,
        relation_names: Vec<String>,
        facts: Vec<Fact>,
        seed: u64,
        max_hops: usize,
    ) -> Result<Self, WorldError> {
        let mut edges = BTreeMap::new();
        for f in &facts {
            if f.subject.0 as usize >= entity_names.len() || f.object.0 as usize >= entity_names.len() {
                return Err(WorldError::Malformed(format!("fact {f:?} references an unknown entity")));
            }
            if f.relation.0 as usize >= relation_names.len() {
                return Err(WorldError::Malformed(format!("fact {f:?} references an unknown relation")));
            }
            if edges.insert(f.query(), f.object).is_some() {
                return Err(WorldError::Malformed(format!(
                    "duplicate object for ({}, {})",
                    f.subject, f.relation
                )));
            }
        }
        let all_facts: Vec<Fact> = edges.iter().map(|(q, &o)| Fact::new(q.entity, q.relation, o)).collect();
        let mut by_relation = vec![Vec::new(); relation_names.len()];
        for f in &all_facts {
            by_relation[f.relation.0 as usize].push(*f);
        }
        Ok(Self { entity_names, relation_names, edges, by_relation, all_facts, seed, max_hops })
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn max_hops(&self) -> usize {
        self.max_hops
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        &self.entity_names[e.0 as usize]
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        &self.relation_names[r.0 as usize]
    }

    pub fn entity_by_name(&self, name: &str) -> Option<EntityId> {
        self.entity_names.iter().position(|n| n == name).map(|i| EntityId(i as u32))
    }

    pub fn has_entity(&self, e: EntityId) -> bool {
        (e.0 as usize) < self.entity_names.len()
    }

    pub fn has_relation(&self, r: RelationId) -> bool {
        (r.0 as usize) < self.relation_names.len()
    }

    pub fn lookup(&self, q: Query) -> Option<EntityId> {
        self.edges.get(&q).copied()
    }

    /// All facts in canonical `(subject, relation)` order.
    pub fn facts(&self) -> &[Fact] {
        &self.all_facts
    }

    pub fn facts_with_relation(&self, r: RelationId) -> &[Fact] {
        self.by_relation.get(r.0 as usize).map_or(&[], Vec::as_slice)
    }

    pub fn out_edges(&self, e: EntityId) -> impl Iterator<Item = Fact> + '_ {
        let lo = Query::new(e, RelationId(0));
        let hi = Query::new(e, RelationId(u32::MAX));
        self.edges.range(lo..=hi).map(|(q, &o)| Fact::new(q.entity, q.relation, o))
    }

    /// Depth-first search for a simple path of `hops` edges, visiting starts and
    /// out-edges in the order given by `rng` (or canonical order when `None`).
    fn find_chain(&self, hops: usize, mut rng: Option<&mut ChaCha8Rng>) -> Option<Vec<Fact>> {
        let mut starts: Vec<EntityId> = (0..self.num_entities() as u32).map(EntityId).collect();
        if let Some(r) = rng.as_deref_mut() {
            starts.shuffle(r);
        }
        let mut path = Vec::with_capacity(hops);
        let mut visited = HashSet::new();
        for s in starts {
            visited.clear();
            visited.insert(s);
            if self.extend_chain(s, hops, &mut path, &mut visited, &mut rng) {
                return Some(path);
            }
        }
        None
    }

    fn extend_chain(
        &self,
        at: EntityId,
        hops: usize,
        path: &mut Vec<Fact>,
        visited: &mut HashSet<EntityId>,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> bool {
        if path.len() == hops {
            return true;
        }
        let mut next: Vec<Fact> = self.out_edges(at).filter(|f| !visited.contains(&f.object)).collect();
        if let Some(r) = rng.as_deref_mut() {
            next.shuffle(r);
        }
        for f in next {
            path.push(f);
            visited.insert(f.object);
            if self.extend_chain(f.object, hops, path, visited, rng) {
                return true;
            }
            visited.remove(&f.object);
            path.pop();
        }
        false
    }
}

/// Generates a random functional graph that is guaranteed to host at least
/// one simple chain of `config.max_hops` edges.
pub fn generate_world(config: &WorldConfig) -> Result<KnowledgeWorld, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.entities;
    let mut edges: BTreeMap<Query, EntityId> = BTreeMap::new();
    if n > 1 {
        for s in 0..n {
            for r in index::sample(&mut rng, config.relations, config.branching).into_vec() {
                let mut o = rng.gen_range(0..n - 1);
                if o >= s {
                    o += 1;
                }
                edges.insert(Query::new(EntityId(s as u32), RelationId(r as u32)), EntityId(o as u32));
            }
        }
    }
    let names = |prefix: char, k: usize| (0..k).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
    let facts = |edges: &BTreeMap<Query, EntityId>| {
        edges.iter().map(|(q, &o)| Fact::new(q.entity, q.relation, o)).collect::<Vec<_>>()
    };
    let mut world = KnowledgeWorld::from_parts(
        names('e', n),
        names('r', config.relations),
        facts(&edges),
        config.seed,
        config.max_hops,
    )?;
    if world.find_chain(config.max_hops, None).is_none() {
        // Embed a chain through distinct entities, overwriting existing edges.
        let nodes = index::sample(&mut rng, n, config.max_hops + 1).into_vec();
        for w in nodes.windows(2) {
            let r = rng.gen_range(0..config.relations);
            edges.insert(Query::new(EntityId(w[0] as u32), RelationId(r as u32)), EntityId(w[1] as u32));
        }
        world = KnowledgeWorld::from_parts(
            names('e', n),
            names('r', config.relations),
            facts(&edges),
            config.seed,
            config.max_hops,
        )?;
    }
    Ok(world)
}

/// What the agent is told: the start entity and the relation sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuestionEncoding {
    pub start: EntityId,
    pub relations: Vec<RelationId>,
}

impl QuestionEncoding {
    pub fn hop_count(&self) -> usize {
        self.relations.len()
    }
}

/// A question plus its reference solution chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    #[serde(default)]
    pub id: u64,
    #[serde(flatten)]
    pub question: QuestionEncoding,
    pub golden_sub_queries: Vec<Query>,
    pub golden_sub_answers: Vec<EntityId>,
    pub gold_answer: EntityId,
    /// Accepted surface forms of the gold answer.
    pub answers: Vec<String>,
}

impl Task {
    pub fn hop_count(&self) -> usize {
        self.question.hop_count()
    }

    /// Builds a task from a chain of facts, naming the answer through `world`.
    pub fn from_chain(world: &KnowledgeWorld, chain: &[Fact]) -> Self {
        let gold = chain.last().expect("non-empty chain").object;
        Self {
            id: 0,
            question: QuestionEncoding {
                start: chain[0].subject,
                relations: chain.iter().map(|f| f.relation).collect(),
            },
            golden_sub_queries: chain.iter().map(Fact::query).collect(),
            golden_sub_answers: chain.iter().map(|f| f.object).collect(),
            gold_answer: gold,
            answers: vec![world.entity_name(gold).to_string()],
        }
    }

    /// Checks the chain invariants against `world`.
    pub fn check(&self, world: &KnowledgeWorld) -> Result<(), String> {
        let k = self.hop_count();
        if k < 2 {
            return Err(format!("hop count {k} < 2"));
        }
        if self.golden_sub_queries.len() != k || self.golden_sub_answers.len() != k {
            return Err("golden chain length differs from hop count".into());
        }
        if self.golden_sub_answers[k - 1] != self.gold_answer {
            return Err("last sub-answer is not the gold answer".into());
        }
        for i in 0..k {
            let q = self.golden_sub_queries[i];
            if q.relation != self.question.relations[i] {
                return Err(format!("sub-query {i} relation differs from the question"));
            }
            let expected_entity = if i == 0 { self.question.start } else { self.golden_sub_answers[i - 1] };
            if q.entity != expected_entity {
                return Err(format!("sub-query {i} breaks the chain"));
            }
            if world.lookup(q) != Some(self.golden_sub_answers[i]) {
                return Err(format!("sub-answer {i} is not the graph object of its sub-query"));
            }
        }
        Ok(())
    }
}

/// Samples a random simple `hops`-edge chain from `world`.
pub fn sample_task(world: &KnowledgeWorld, hops: usize, rng: &mut ChaCha8Rng) -> Result<Task, WorldError> {
    if hops < 2 || hops > world.max_hops() {
        return Err(WorldError::UnsupportedHops { requested: hops, max: world.max_hops() });
    }
    let chain = world.find_chain(hops, Some(rng)).ok_or(WorldError::NoChain { hops })?;
    Ok(Task::from_chain(world, &chain))
}
