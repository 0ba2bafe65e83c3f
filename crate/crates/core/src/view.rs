//! Agent-side summary of a trajectory prefix.
//!
//! Only the question encoding (start entity, relation sequence) and the
//! observations are used; golden references are never consulted. The view
//! follows the relation chain from the start entity: a search that asks the
//! current frontier for the next question relation and receives a fact for it
//! advances the frontier to that fact's object.

use std::collections::HashSet;

use crate::trajectory::Turn;
use crate::world::{EntityId, Fact, Query, QuestionEncoding, RelationId};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SearchSummary {
    /// Asked the frontier for the next question relation.
    pub next_hop_query: bool,
    /// ... and the observation answered it.
    pub hop_completed: bool,
    /// The completed hop was the last one.
    pub completes_chain: bool,
    /// Asked the frontier for a relation other than the next one.
    pub frontier_wrong_relation: bool,
    /// Asked a non-frontier entity.
    pub entity_not_frontier: bool,
    /// The relation occurs in the question but not at the current position.
    pub relation_elsewhere_in_question: bool,
    pub repeated_query: bool,
    /// Chain was already complete before this search.
    pub after_complete: bool,
    /// Entities not seen before this observation.
    pub new_entities: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AnswerSummary {
    pub is_frontier: bool,
    pub chain_complete: bool,
    pub other_revealed: bool,
    pub unrevealed: bool,
    /// Hops still missing when answering, as a fraction of the hop count.
    pub remaining_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSummary {
    Search(SearchSummary),
    Answer(AnswerSummary),
    Empty,
}

#[derive(Clone, Debug)]
pub struct ChainView {
    relations: Vec<RelationId>,
    start: EntityId,
    frontier: EntityId,
    progress: usize,
    revealed: Vec<EntityId>,
    revealed_set: HashSet<EntityId>,
    answer_objects: HashSet<EntityId>,
    subjects: HashSet<EntityId>,
    asked: HashSet<Query>,
    last_missed: bool,
    turns: usize,
}

impl ChainView {
    pub fn new(question: &QuestionEncoding) -> Self {
        Self {
            relations: question.relations.clone(),
            start: question.start,
            frontier: question.start,
            progress: 0,
            revealed: vec![question.start],
            revealed_set: HashSet::from([question.start]),
            answer_objects: HashSet::new(),
            subjects: HashSet::new(),
            asked: HashSet::new(),
            last_missed: false,
            turns: 0,
        }
    }

    pub fn replay(question: &QuestionEncoding, turns: &[Turn]) -> Self {
        let mut v = Self::new(question);
        for t in turns {
            v.apply(t);
        }
        v
    }

    pub fn hop_count(&self) -> usize {
        self.relations.len()
    }

    pub fn progress(&self) -> usize {
        self.progress
    }

    pub fn is_complete(&self) -> bool {
        self.progress >= self.relations.len()
    }

    pub fn frontier(&self) -> EntityId {
        self.frontier
    }

    pub fn start(&self) -> EntityId {
        self.start
    }

    pub fn next_relation(&self) -> Option<RelationId> {
        self.relations.get(self.progress).copied()
    }

    pub fn in_question(&self, r: RelationId) -> bool {
        self.relations.contains(&r)
    }

    /// Entities seen so far, in order of first appearance.
    pub fn revealed(&self) -> &[EntityId] {
        &self.revealed
    }

    /// Objects of facts that answered one of the agent's own queries.
    pub fn is_answer_object(&self, e: EntityId) -> bool {
        self.answer_objects.contains(&e)
    }

    pub fn was_subject(&self, e: EntityId) -> bool {
        self.subjects.contains(&e)
    }

    pub fn was_asked(&self, q: Query) -> bool {
        self.asked.contains(&q)
    }

    /// The previous search got no fact for its `(entity, relation)`.
    pub fn last_missed(&self) -> bool {
        self.last_missed
    }

    pub fn turns(&self) -> usize {
        self.turns
    }

    pub fn apply(&mut self, turn: &Turn) -> StepSummary {
        self.turns += 1;
        if let Some(q) = turn.search {
            let docs = turn.info.as_deref().unwrap_or(&[]);
            StepSummary::Search(self.apply_search(q, docs))
        } else if let Some(ans) = &turn.answer {
            StepSummary::Answer(self.summarize_answer(ans))
        } else {
            StepSummary::Empty
        }
    }

    fn apply_search(&mut self, q: Query, docs: &[Fact]) -> SearchSummary {
        let mut s = SearchSummary {
            after_complete: self.is_complete(),
            repeated_query: self.asked.contains(&q),
            entity_not_frontier: q.entity != self.frontier,
            ..Default::default()
        };
        let next = self.next_relation();
        let at_frontier = q.entity == self.frontier;
        s.next_hop_query = at_frontier && next == Some(q.relation);
        s.frontier_wrong_relation = at_frontier && next != Some(q.relation);
        s.relation_elsewhere_in_question = self.in_question(q.relation) && next != Some(q.relation);

        let answer = docs.iter().find(|f| f.subject == q.entity && f.relation == q.relation).map(|f| f.object);
        for f in docs {
            for e in [f.subject, f.object] {
                if self.revealed_set.insert(e) {
                    self.revealed.push(e);
                    s.new_entities += 1;
                }
            }
        }
        self.asked.insert(q);
        self.subjects.insert(q.entity);
        self.last_missed = answer.is_none();
        if let Some(o) = answer {
            self.answer_objects.insert(o);
            if s.next_hop_query {
                s.hop_completed = true;
                self.frontier = o;
                self.progress += 1;
                s.completes_chain = self.is_complete();
            }
        }
        s
    }

    /// Summary of answering with `entity` in the current state.
    pub fn answer_summary(&self, entity: Option<EntityId>) -> AnswerSummary {
        let n = self.relations.len().max(1) as f64;
        let remaining = self.relations.len().saturating_sub(self.progress) as f64 / n;
        let is_frontier = entity == Some(self.frontier);
        let known = entity.is_some_and(|e| self.revealed_set.contains(&e));
        AnswerSummary {
            is_frontier,
            chain_complete: self.is_complete(),
            other_revealed: known && !is_frontier,
            unrevealed: !known,
            remaining_fraction: remaining,
        }
    }

    fn summarize_answer(&self, text: &str) -> AnswerSummary {
        self.answer_summary(EntityId::parse_label(text))
    }
}
