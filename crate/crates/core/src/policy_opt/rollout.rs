use rand::Rng;

use super::{policy_step, AdvantageTrace, Block, Decision, Episode, PolicyParams, SampleMode, TokenSample, STATE_DIM};
use crate::datagen::EnvConfig;
use crate::trajectory::{tokenize_turns, Trajectory, Turn, Vocabulary};
use crate::view::ChainView;
use crate::world::{retrieve, EntityId, KnowledgeWorld, PivotTracker, Query, RelationId, Task};

fn flag(b: bool) -> f64 {
    f64::from(u8::from(b))
}

/// Critic input and search-candidate features for 1-based turn `t`.
pub fn state_features(view: &ChainView, t: usize, max_turns: usize) -> Vec<f64> {
    let hops = view.hop_count().max(1) as f64;
    vec![
        1.0,
        view.progress() as f64 / hops,
        flag(view.is_complete()),
        flag(view.last_missed()),
        (t - 1) as f64 / max_turns.max(1) as f64,
    ]
}

fn search_entity_features(view: &ChainView, e: EntityId) -> Vec<f64> {
    let answer_object = view.is_answer_object(e);
    vec![
        flag(e == view.frontier()),
        flag(e == view.start()),
        flag(answer_object),
        flag(view.was_subject(e)),
        flag(!answer_object && e != view.start()),
    ]
}

fn relation_features(view: &ChainView, e: EntityId, r: RelationId) -> Vec<f64> {
    let next = view.next_relation() == Some(r);
    vec![flag(next && e == view.frontier()), flag(view.in_question(r)), flag(view.was_asked(Query::new(e, r))), flag(next)]
}

fn answer_entity_features(view: &ChainView, e: EntityId) -> Vec<f64> {
    let frontier = e == view.frontier();
    vec![flag(frontier), flag(frontier && view.is_complete()), flag(e == view.start()), flag(view.is_answer_object(e))]
}

/// A rollout with everything PPO needs except advantages.
#[derive(Clone, Debug)]
pub struct PolicyRollout {
    pub trajectory: Trajectory,
    /// Per-token decision (`None` for deterministic and environment tokens).
    pub decisions: Vec<Option<Decision>>,
    pub mask: Vec<u8>,
    pub turn_of: Vec<usize>,
    pub critic_states: Vec<Vec<f64>>,
    /// Rollout-time `V(s_t)` per turn.
    pub values: Vec<f64>,
}

impl PolicyRollout {
    pub fn into_episode(self, trace: &AdvantageTrace) -> Episode {
        let advantages = trace.broadcast(&self.turn_of);
        let tokens = self
            .decisions
            .into_iter()
            .zip(self.mask)
            .zip(advantages)
            .map(|((decision, m), advantage)| TokenSample { masked_in: m == 1, advantage, decision })
            .collect();
        Episode { tokens, critic_states: self.critic_states, returns: trace.returns.clone() }
    }
}

struct Sampler<'a, R: Rng + ?Sized> {
    params: &'a PolicyParams,
    temperature: f64,
    mode: SampleMode,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Sampler<'_, R> {
    fn decide(&mut self, block: Block, candidates: Vec<Vec<f64>>, state: &[f64]) -> Decision {
        let out = policy_step(self.params, block, &candidates, state, self.temperature, self.mode, self.rng);
        Decision { block, candidates, chosen: out.choice, old_log_probs: out.log_probs }
    }
}

/// Runs the policy on `task` until it answers or the turn budget forces an answer.
pub fn rollout_policy<R: Rng + ?Sized>(
    world: &KnowledgeWorld,
    task: &Task,
    params: &PolicyParams,
    env: &EnvConfig,
    temperature: f64,
    mode: SampleMode,
    rng: &mut R,
) -> PolicyRollout {
    let max_turns = env.max_turns.max(1);
    let mut view = ChainView::new(&task.question);
    let mut tracker = PivotTracker::new(task, env.pivot_rule);
    let mut turns = Vec::new();
    let mut labels = Vec::new();
    let mut turn_decisions: Vec<Vec<Option<Decision>>> = Vec::new();
    let mut critic_states = Vec::new();
    let mut values = Vec::new();
    let relations: Vec<RelationId> = (0..world.num_relations() as u32).map(RelationId).collect();
    let mut sampler = Sampler { params, temperature, mode, rng };

    for t in 1..=max_turns {
        let state = state_features(&view, t, max_turns);
        debug_assert_eq!(state.len(), STATE_DIM);
        values.push(params.value(&state));
        let mode_decision = if t < max_turns {
            Some(sampler.decide(Block::Mode, vec![state.clone(), vec![0.0; STATE_DIM]], &state))
        } else {
            None
        };
        let search = mode_decision.as_ref().is_some_and(|d| d.chosen == 0);
        let revealed = view.revealed().to_vec();
        let turn = if search {
            let ed = sampler.decide(Block::SearchEntity, revealed.iter().map(|&e| search_entity_features(&view, e)).collect(), &state);
            let entity = revealed[ed.chosen];
            let rd = sampler.decide(Block::SearchRelation, relations.iter().map(|&r| relation_features(&view, entity, r)).collect(), &state);
            let query = Query::new(entity, relations[rd.chosen]);
            let docs = retrieve(world, query, &env.retrieval, sampler.rng).docs;
            labels.push(tracker.observe(query, &docs));
            turn_decisions.push(vec![mode_decision, Some(ed), Some(rd)]);
            Turn::search(vec![], query, docs)
        } else {
            let ad = sampler.decide(Block::AnswerEntity, revealed.iter().map(|&e| answer_entity_features(&view, e)).collect(), &state);
            let entity = revealed[ad.chosen];
            turn_decisions.push(vec![mode_decision, Some(ad)]);
            Turn::answer(vec![], world.entity_name(entity))
        };
        view.apply(&turn);
        critic_states.push(state);
        let done = turn.is_answer();
        turns.push(turn);
        if done {
            break;
        }
    }

    let tok = tokenize_turns(&turns, &Vocabulary::new(world.num_relations(), world.num_entities()));
    let mut decisions: Vec<Option<Decision>> = vec![None; tok.tokens.len()];
    for (span, ds) in tok.spans.iter().zip(turn_decisions) {
        for (k, d) in ds.into_iter().enumerate() {
            decisions[span.action_open + k] = d;
        }
    }
    PolicyRollout {
        trajectory: Trajectory::new(task.clone(), turns, labels),
        decisions,
        mask: tok.mask,
        turn_of: tok.turn_of,
        critic_states,
        values,
    }
}
