//! Labelled corpus generation.
//!
//! A stochastic scripted policy explores each task several times; every
//! rollout is labelled with the exact pivot oracle and an exact-match outcome.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;
use crate::trajectory::{validate_trajectory, Dataset, Limits, Trajectory, Turn, Violation, THINK_VOCAB};
use crate::world::{
    generate_world, retrieve, sample_task, KnowledgeWorld, PivotRule, PivotTracker, Query, RelationId,
    RetrievalConfig, Task, WorldConfig, WorldError,
};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("invalid behaviour mix: {0}")]
    InvalidMix(String),
    #[error("no trajectory survived filtering ({filtered} discarded)")]
    NothingSurvived { filtered: usize },
}

/// Action probabilities of the scripted behaviour policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorMix {
    /// Issue the next golden sub-query.
    pub golden_next_hop: f64,
    /// Ask the current frontier for a relation other than the golden one.
    pub random_relation: f64,
    /// Repeat the previous query.
    pub repeat_last: f64,
    /// Answer with some revealed entity before the chain is complete.
    pub premature_answer: f64,
    /// Once the chain is complete, answer correctly with this probability.
    pub correct_answer_when_complete: f64,
}

impl Default for BehaviorMix {
    fn default() -> Self {
        Self {
            golden_next_hop: 0.65,
            random_relation: 0.15,
            repeat_last: 0.1,
            premature_answer: 0.1,
            correct_answer_when_complete: 0.9,
        }
    }
}

impl BehaviorMix {
    pub fn golden_only() -> Self {
        Self {
            golden_next_hop: 1.0,
            random_relation: 0.0,
            repeat_last: 0.0,
            premature_answer: 0.0,
            correct_answer_when_complete: 1.0,
        }
    }

    pub fn random_relation_only() -> Self {
        Self {
            golden_next_hop: 0.0,
            random_relation: 1.0,
            repeat_last: 0.0,
            premature_answer: 0.0,
            correct_answer_when_complete: 1.0,
        }
    }

    fn weights(&self) -> [f64; 4] {
        [self.golden_next_hop, self.random_relation, self.repeat_last, self.premature_answer]
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let w = self.weights();
        if w.iter().any(|p| !p.is_finite() || *p < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(DatagenError::InvalidMix(format!("action weights must be non-negative with positive sum, got {w:?}")));
        }
        if !(0.0..=1.0).contains(&self.correct_answer_when_complete) {
            return Err(DatagenError::InvalidMix("correct_answer_when_complete must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Environment settings shared by scripted and learned rollouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub retrieval: RetrievalConfig,
    pub max_turns: usize,
    pub max_think: usize,
    pub pivot_rule: PivotRule,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { retrieval: RetrievalConfig::default(), max_turns: 5, max_think: 4, pivot_rule: PivotRule::Strict }
    }
}

impl EnvConfig {
    pub fn limits(&self) -> Limits {
        Limits { max_turns: self.max_turns, max_think: self.max_think }
    }
}

#[derive(Clone, Copy)]
enum Action {
    Golden,
    RandomRelation,
    RepeatLast,
    Premature,
}

const ACTIONS: [Action; 4] = [Action::Golden, Action::RandomRelation, Action::RepeatLast, Action::Premature];

fn other_relation(world: &KnowledgeWorld, avoid: Option<RelationId>, rng: &mut ChaCha8Rng) -> RelationId {
    let n = world.num_relations() as u32;
    match avoid {
        Some(a) if n > 1 => {
            let mut r = rng.gen_range(0..n - 1);
            if r >= a.0 {
                r += 1;
            }
            RelationId(r)
        }
        _ => RelationId(rng.gen_range(0..n)),
    }
}

/// Rolls out the scripted policy on `task`.
///
/// The final turn is always an answer; when the budget runs out the policy
/// answers with the latest entity it derived.
pub fn rollout_behavior(
    world: &KnowledgeWorld,
    task: &Task,
    mix: &BehaviorMix,
    env: &EnvConfig,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let weights = mix.weights();
    let picker = WeightedIndex::new(weights).expect("validated mix");
    let mut tracker = PivotTracker::new(task, env.pivot_rule);
    let mut turns: Vec<Turn> = Vec::new();
    let mut labels = Vec::new();
    let mut last_query: Option<Query> = None;
    // Entities the behaviour policy has seen, for wrong answers.
    let mut seen = vec![task.question.start];

    for t in 1..=env.max_turns.max(1) {
        let think_len = rng.gen_range(0..=env.max_think);
        let think: Vec<u32> = (0..think_len).map(|_| rng.gen_range(0..THINK_VOCAB)).collect();
        let frontier = tracker.frontier();

        let answer = |text: &str| Turn::answer(think.clone(), text);
        let wrong_answer = |rng: &mut ChaCha8Rng| {
            let pool: Vec<_> = seen.iter().copied().filter(|&e| e != task.gold_answer).collect();
            let e = if pool.is_empty() { frontier } else { pool[rng.gen_range(0..pool.len())] };
            world.entity_name(e).to_string()
        };

        if t == env.max_turns {
            turns.push(answer(world.entity_name(frontier)));
            break;
        }

        let action = if tracker.is_complete() {
            if rng.gen_bool(mix.correct_answer_when_complete) {
                turns.push(answer(world.entity_name(task.gold_answer)));
                break;
            }
            // Anything but the golden action once the chain is done.
            let mut w = weights;
            w[0] = 0.0;
            if w.iter().sum::<f64>() <= 0.0 {
                Action::Premature
            } else {
                ACTIONS[WeightedIndex::new(w).expect("positive weights").sample(rng)]
            }
        } else {
            ACTIONS[picker.sample(rng)]
        };

        let query = match action {
            Action::Premature => {
                let text = wrong_answer(rng);
                turns.push(answer(&text));
                break;
            }
            Action::Golden => tracker.next_query().unwrap_or(Query::new(frontier, RelationId(0))),
            Action::RandomRelation => {
                let avoid = tracker.next_query().map(|q| q.relation);
                Query::new(frontier, other_relation(world, avoid, rng))
            }
            Action::RepeatLast => match (last_query, tracker.next_query()) {
                (Some(q), _) => q,
                (None, Some(g)) => g,
                (None, None) => Query::new(frontier, other_relation(world, None, rng)),
            },
        };
        let result = retrieve(world, query, &env.retrieval, rng);
        labels.push(tracker.observe(query, &result.docs));
        for f in &result.docs {
            for e in [f.subject, f.object] {
                if !seen.contains(&e) {
                    seen.push(e);
                }
            }
        }
        turns.push(Turn::search(think, query, result.docs));
        last_query = Some(query);
    }
    Trajectory::new(task.clone(), turns, labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatagenConfig {
    pub world: WorldConfig,
    pub hops: Vec<usize>,
    pub tasks: usize,
    pub rollouts_per_task: usize,
    pub mix: BehaviorMix,
    pub env: EnvConfig,
    /// Drop rollouts that fail validation.
    pub filter: bool,
    /// Seed for task sampling and rollouts (the world has its own).
    pub seed: u64,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            hops: vec![2, 3, 4],
            tasks: 1000,
            rollouts_per_task: 5,
            mix: BehaviorMix::default(),
            env: EnvConfig::default(),
            filter: true,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatagenReport {
    pub records: usize,
    pub filtered: usize,
    pub successes: usize,
    pub failures: usize,
    pub pivot_steps: usize,
    pub non_pivot_steps: usize,
    pub per_hop: BTreeMap<usize, usize>,
    /// Violation message counts among discarded rollouts.
    pub discarded_reasons: BTreeMap<String, usize>,
}

pub struct DatagenOutput {
    pub world: KnowledgeWorld,
    pub tasks: Vec<Task>,
    pub dataset: Dataset,
    pub report: DatagenReport,
}

/// Samples `count` tasks with hop counts drawn uniformly from `hops`.
pub fn sample_tasks(world: &KnowledgeWorld, hops: &[usize], count: usize, seed: u64) -> Result<Vec<Task>, WorldError> {
    let mut rng = seed::stream(seed, &[0x7a5c]);
    let mut tasks = Vec::with_capacity(count);
    for id in 0..count {
        let k = hops[rng.gen_range(0..hops.len())];
        let mut task = sample_task(world, k, &mut rng)?;
        task.id = id as u64;
        tasks.push(task);
    }
    Ok(tasks)
}

/// Keeps trajectories without violations and tallies the rest.
pub fn filter_trajectories(trajectories: Vec<Trajectory>, limits: &Limits) -> (Vec<Trajectory>, usize, BTreeMap<String, usize>) {
    let mut kept = Vec::with_capacity(trajectories.len());
    let mut reasons = BTreeMap::new();
    let mut dropped = 0;
    for t in trajectories {
        let v: Vec<Violation> = validate_trajectory(&t, limits);
        if v.is_empty() {
            kept.push(t);
        } else {
            dropped += 1;
            for x in v {
                let key = x.to_string().split(':').next().unwrap_or_default().to_string();
                *reasons.entry(key).or_default() += 1;
            }
        }
    }
    (kept, dropped, reasons)
}

pub fn summarize(trajectories: &[Trajectory]) -> DatagenReport {
    let mut r = DatagenReport { records: trajectories.len(), ..Default::default() };
    for t in trajectories {
        if t.label {
            r.successes += 1;
        } else {
            r.failures += 1;
        }
        r.pivot_steps += t.pivot_labels.iter().filter(|&&z| z).count();
        r.non_pivot_steps += t.pivot_labels.iter().filter(|&&z| !z).count();
        *r.per_hop.entry(t.question.hop_count()).or_default() += 1;
    }
    r
}

/// Rolls out every `(task, rollout)` pair; independent seeded streams make the
/// result identical regardless of thread count.
pub fn rollout_tasks(
    world: &KnowledgeWorld,
    tasks: &[Task],
    rollouts_per_task: usize,
    mix: &BehaviorMix,
    env: &EnvConfig,
    seed: u64,
) -> Vec<Trajectory> {
    let jobs: Vec<(usize, usize)> =
        (0..tasks.len()).flat_map(|t| (0..rollouts_per_task).map(move |r| (t, r))).collect();
    jobs.par_iter()
        .map(|&(t, r)| {
            let mut rng = seed::stream(seed, &[tasks[t].id, r as u64]);
            rollout_behavior(world, &tasks[t], mix, env, &mut rng)
        })
        .collect()
}

pub fn build_dataset(config: &DatagenConfig) -> Result<DatagenOutput, DatagenError> {
    config.mix.validate()?;
    let world = generate_world(&config.world)?;
    let tasks = sample_tasks(&world, &config.hops, config.tasks, config.seed)?;
    let all = rollout_tasks(&world, &tasks, config.rollouts_per_task, &config.mix, &config.env, config.seed);
    let (kept, filtered, reasons) = if config.filter {
        filter_trajectories(all, &config.env.limits())
    } else {
        (all, 0, BTreeMap::new())
    };
    if kept.is_empty() {
        return Err(DatagenError::NothingSurvived { filtered });
    }
    let mut report = summarize(&kept);
    report.filtered = filtered;
    report.discarded_reasons = reasons;
    Ok(DatagenOutput { world, tasks, dataset: Dataset::new(kept), report })
}
