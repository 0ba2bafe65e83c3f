//! Exact pivot-step oracle.
//!
//! A search step is a pivot when it issues the next golden sub-query not yet
//! credited and its observation yields the matching golden sub-answer.
//! Crediting is sequential, so a sub-query is consumed at most once.

use serde::{Deserialize, Serialize};

use super::{Fact, Query, Task};
use crate::trajectory::Turn;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PivotRule {
    /// The sub-answer must appear in the observation.
    #[default]
    Strict,
    /// A golden query whose retrieval missed is still credited; the
    /// sub-query is only consumed once its answer is actually observed.
    Lenient,
}

#[derive(Clone, Debug)]
pub struct PivotTracker<'a> {
    task: &'a Task,
    rule: PivotRule,
    consumed: usize,
}

impl<'a> PivotTracker<'a> {
    pub fn new(task: &'a Task, rule: PivotRule) -> Self {
        Self { task, rule, consumed: 0 }
    }

    /// Number of golden sub-queries already credited with their answer.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn is_complete(&self) -> bool {
        self.consumed == self.task.hop_count()
    }

    pub fn next_query(&self) -> Option<Query> {
        self.task.golden_sub_queries.get(self.consumed).copied()
    }

    /// Latest sub-answer derived so far (the start entity before any hop).
    pub fn frontier(&self) -> crate::world::EntityId {
        match self.consumed {
            0 => self.task.question.start,
            k => self.task.golden_sub_answers[k - 1],
        }
    }

    /// Judges one search step and advances the consumption pointer.
    pub fn observe(&mut self, action: Query, docs: &[Fact]) -> bool {
        let Some(expected) = self.next_query() else {
            return false;
        };
        if action != expected {
            return false;
        }
        let answer = Fact::new(expected.entity, expected.relation, self.task.golden_sub_answers[self.consumed]);
        if docs.contains(&answer) {
            self.consumed += 1;
            true
        } else {
            self.rule == PivotRule::Lenient
        }
    }
}

/// Labels `action` (with its observation) given the preceding `history`.
pub fn pivot_oracle(history: &[Turn], action: Query, docs: &[Fact], task: &Task, rule: PivotRule) -> bool {
    let mut tracker = PivotTracker::new(task, rule);
    for turn in history {
        if let Some(q) = turn.search {
            tracker.observe(q, turn.info.as_deref().unwrap_or(&[]));
        }
    }
    tracker.observe(action, docs)
}

/// Pivot labels for every search turn of `turns`, in order.
pub fn label_pivots(task: &Task, turns: &[Turn], rule: PivotRule) -> Vec<bool> {
    let mut tracker = PivotTracker::new(task, rule);
    turns
        .iter()
        .filter_map(|t| t.search.map(|q| tracker.observe(q, t.info.as_deref().unwrap_or(&[]))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{EntityId, KnowledgeWorld, RelationId};

    /// Three-hop fixture: 0 -r0-> 1 -r1-> 2 -r2-> 3, plus a distractor 4 -r0-> 5.
    fn fixture() -> Task {
        let names = (0..6).map(|i| format!("e{i}")).collect();
        let rels = (0..3).map(|i| format!("r{i}")).collect();
        let f = |s, r, o| Fact::new(EntityId(s), RelationId(r), EntityId(o));
        let facts = vec![f(0, 0, 1), f(1, 1, 2), f(2, 2, 3), f(4, 0, 5)];
        let world = KnowledgeWorld::from_parts(names, rels, facts.clone(), 0, 3).unwrap();
        Task::from_chain(&world, &facts[..3])
    }

    fn search(task: &Task, hop: usize, hit: bool) -> Turn {
        let q = task.golden_sub_queries[hop];
        let mut info = vec![Fact::new(EntityId(4), RelationId(0), EntityId(5))];
        if hit {
            info.push(Fact::new(q.entity, q.relation, task.golden_sub_answers[hop]));
        }
        Turn::search(vec![], q, info)
    }

    #[test]
    fn first_golden_query_with_answer_is_pivot() {
        let task = fixture();
        let t = search(&task, 0, true);
        assert!(pivot_oracle(&[], t.search.unwrap(), t.info.as_ref().unwrap(), &task, PivotRule::Strict));
    }

    #[test]
    fn missing_answer_is_not_pivot_under_strict_rule() {
        let task = fixture();
        let t = search(&task, 0, false);
        assert!(!pivot_oracle(&[], t.search.unwrap(), t.info.as_ref().unwrap(), &task, PivotRule::Strict));
        assert!(pivot_oracle(&[], t.search.unwrap(), t.info.as_ref().unwrap(), &task, PivotRule::Lenient));
    }

    /// Brute-force reference: a step is credited iff its query equals the
    /// golden query at position `#earlier credited steps` and the answer fact
    /// is present in its observation.
    fn brute_force(task: &Task, turns: &[Turn]) -> Vec<bool> {
        let mut labels = Vec::new();
        for t in turns {
            let Some(q) = t.search else { continue };
            let credited_before = labels.iter().filter(|&&b| b).count();
            let ok = credited_before < task.hop_count()
                && q == task.golden_sub_queries[credited_before]
                && t.info.as_ref().unwrap().contains(&Fact::new(
                    q.entity,
                    q.relation,
                    task.golden_sub_answers[credited_before],
                ));
            labels.push(ok);
        }
        labels
    }

    #[test]
    fn repeated_golden_query_is_not_credited_twice() {
        let task = fixture();
        let turns = vec![search(&task, 0, true), search(&task, 0, true), search(&task, 1, true)];
        let labels = label_pivots(&task, &turns, PivotRule::Strict);
        assert_eq!(labels, vec![true, false, true]);
        assert_eq!(labels, brute_force(&task, &turns));
    }

    #[test]
    fn exhaustive_sequences_match_brute_force() {
        let task = fixture();
        // All length-4 sequences over {hop0,hop1,hop2} x {hit,miss}.
        let options: Vec<(usize, bool)> = (0..3).flat_map(|h| [(h, true), (h, false)]).collect();
        let mut count = 0;
        for a in &options {
            for b in &options {
                for c in &options {
                    for d in &options {
                        let turns: Vec<Turn> =
                            [a, b, c, d].iter().map(|&&(h, hit)| search(&task, h, hit)).collect();
                        let labels = label_pivots(&task, &turns, PivotRule::Strict);
                        assert_eq!(labels, brute_force(&task, &turns));
                        assert!(labels.iter().filter(|&&b| b).count() <= task.hop_count());
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, 6usize.pow(4));
    }

    #[test]
    fn out_of_order_hop_is_not_pivot() {
        let task = fixture();
        let turns = vec![search(&task, 1, true), search(&task, 0, true)];
        assert_eq!(label_pivots(&task, &turns, PivotRule::Strict), vec![false, true]);
    }
}
