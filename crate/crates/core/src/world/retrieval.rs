use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Fact, KnowledgeWorld, Query};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Probability that the true fact makes it into the top-k.
    pub p_hit: f64,
    pub topk: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { p_hit: 0.85, topk: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub docs: Vec<Fact>,
    pub contains_hit: bool,
}

/// Noisy top-k lookup of `query`.
///
/// The true fact (if the edge exists) is kept with probability `p_hit`; the
/// other slots hold distractors drawn without replacement, preferring facts
/// that share the queried relation. Unknown entities or relations yield an
/// all-distractor result. Document order is shuffled.
pub fn retrieve<R: Rng + ?Sized>(
    world: &KnowledgeWorld,
    query: Query,
    config: &RetrievalConfig,
    rng: &mut R,
) -> RetrievalResult {
    let truth = if world.has_entity(query.entity) && world.has_relation(query.relation) {
        world.lookup(query).map(|o| Fact::new(query.entity, query.relation, o))
    } else {
        None
    };
    let mut docs = Vec::with_capacity(config.topk);
    if let Some(t) = truth {
        if config.topk > 0 && rng.gen_bool(config.p_hit.clamp(0.0, 1.0)) {
            docs.push(t);
        }
    }

    let same_relation: Vec<Fact> = if world.has_relation(query.relation) {
        world.facts_with_relation(query.relation).iter().copied().filter(|f| Some(*f) != truth).collect()
    } else {
        Vec::new()
    };
    let need = config.topk - docs.len();
    let take = need.min(same_relation.len());
    for i in index::sample(rng, same_relation.len(), take) {
        docs.push(same_relation[i]);
    }

    if docs.len() < config.topk {
        let rest: Vec<Fact> = world
            .facts()
            .iter()
            .copied()
            .filter(|f| Some(*f) != truth && !docs.contains(f))
            .collect();
        let take = (config.topk - docs.len()).min(rest.len());
        for i in index::sample(rng, rest.len(), take) {
            docs.push(rest[i]);
        }
    }

    // Degenerate tiny worlds: pad by repeating distractors.
    let pool: Vec<Fact> = docs.iter().copied().filter(|f| Some(*f) != truth).collect();
    while docs.len() < config.topk && !pool.is_empty() {
        docs.push(pool[rng.gen_range(0..pool.len())]);
    }

    docs.shuffle(rng);
    let contains_hit = truth.is_some_and(|t| docs.contains(&t));
    RetrievalResult { docs, contains_hit }
}
