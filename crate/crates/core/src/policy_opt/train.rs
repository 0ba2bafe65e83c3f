use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::{advantage_trace, ppo_update, rollout_policy, PolicyError, PolicyParams, PpoConfig, SampleMode};
use crate::datagen::EnvConfig;
use crate::reward_model::RewardModelParams;
use crate::seed;
use crate::shaping::{assemble_with_steps, LocalRewardModel, PenaltySchedule, ShapingConfig, StepRewardSource};
use crate::world::{sample_task, score_answer, KnowledgeWorld, Task};

/// Reward sources compared in the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    /// Outcome reward only.
    Outcome,
    /// Outcome reward plus the step penalty.
    Penalty,
    /// Outcome, step penalty and PiCA step rewards.
    Pica,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Outcome, Arm::Penalty, Arm::Pica];

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Outcome => "outcome",
            Arm::Penalty => "penalty",
            Arm::Pica => "pica",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arm::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| format!("unknown arm `{s}` (expected outcome, penalty or pica)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyTrainConfig {
    pub hops: Vec<usize>,
    pub updates: usize,
    pub tasks_per_update: usize,
    pub n_agent: usize,
    pub train_tasks: usize,
    pub eval_tasks: usize,
    pub eval_rollouts: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    pub shaping: ShapingConfig,
    pub penalty: PenaltySchedule,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        Self {
            hops: vec![2],
            updates: 200,
            tasks_per_update: 16,
            n_agent: 5,
            train_tasks: 200,
            eval_tasks: 100,
            eval_rollouts: 4,
            eval_every: 20,
            seed: 1,
            ppo: PpoConfig::default(),
            env: EnvConfig::default(),
            shaping: ShapingConfig::default(),
            penalty: PenaltySchedule::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub arm: Arm,
    pub success_rate: f64,
    pub f1: f64,
    pub mean_turns: f64,
    pub mean_reward: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopReport {
    pub hops: usize,
    pub episodes: usize,
    pub em: f64,
    pub f1: f64,
    pub mean_turns: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub f1: f64,
    pub mean_turns: f64,
    pub per_hop: Vec<HopReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub arm: Arm,
    pub step: usize,
    pub params: PolicyParams,
    pub config: PolicyTrainConfig,
    /// State of the minibatch-shuffling stream after the last update.
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Debug)]
pub struct PolicyRun {
    pub params: PolicyParams,
    pub curve: Vec<CurvePoint>,
    pub final_eval: EvalReport,
    pub eval_tasks: Vec<Task>,
    pub checkpoint: PolicyCheckpoint,
}

/// Disjoint train and held-out task pools (no shared question).
pub fn task_pools(world: &KnowledgeWorld, cfg: &PolicyTrainConfig) -> Result<(Vec<Task>, Vec<Task>), PolicyError> {
    if cfg.hops.is_empty() {
        return Err(PolicyError::InvalidConfig("hops must not be empty".into()));
    }
    let want = cfg.train_tasks + cfg.eval_tasks;
    let mut rng = seed::stream(cfg.seed, &[0x9001]);
    let mut seen = HashSet::new();
    let mut pool = Vec::with_capacity(want);
    let mut attempts = 0;
    while pool.len() < want && attempts < want * 50 {
        attempts += 1;
        let k = cfg.hops[attempts % cfg.hops.len()];
        let mut task = sample_task(world, k, &mut rng)?;
        if seen.insert((task.question.start, task.question.relations.clone())) {
            task.id = pool.len() as u64;
            pool.push(task);
        }
    }
    let eval_n = cfg.eval_tasks.min(pool.len() / 2).max(1);
    let train = pool.split_off(eval_n);
    if train.is_empty() {
        return Err(PolicyError::InvalidConfig("world too small for disjoint task pools".into()));
    }
    Ok((train, pool))
}

pub fn evaluate(
    world: &KnowledgeWorld,
    params: &PolicyParams,
    tasks: &[Task],
    env: &EnvConfig,
    temperature: f64,
    rollouts_per_task: usize,
    eval_seed: u64,
) -> EvalReport {
    let jobs: Vec<(usize, usize)> = (0..tasks.len()).flat_map(|i| (0..rollouts_per_task).map(move |k| (i, k))).collect();
    let results: Vec<(usize, bool, f64, usize)> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let mut rng = seed::stream(eval_seed, &[tasks[i].id, k as u64]);
            let r = rollout_policy(world, &tasks[i], params, env, temperature, SampleMode::Sample, &mut rng);
            let t = &r.trajectory;
            let f1 = t.final_answer().map_or(0.0, |a| score_answer(a, &tasks[i].answers).map_or(0.0, |s| s.f1));
            (tasks[i].hop_count(), t.label, f1, t.turns.len())
        })
        .collect();
    let summarize = |rows: &[&(usize, bool, f64, usize)]| {
        let n = rows.len().max(1) as f64;
        (
            rows.iter().filter(|r| r.1).count() as f64 / n,
            rows.iter().map(|r| r.2).sum::<f64>() / n,
            rows.iter().map(|r| r.3 as f64).sum::<f64>() / n,
        )
    };
    let all: Vec<_> = results.iter().collect();
    let (success_rate, f1, mean_turns) = summarize(&all);
    let mut by_hop: BTreeMap<usize, Vec<&(usize, bool, f64, usize)>> = BTreeMap::new();
    for r in &results {
        by_hop.entry(r.0).or_default().push(r);
    }
    let per_hop = by_hop
        .into_iter()
        .map(|(hops, rows)| {
            let (em, f1, mean_turns) = summarize(&rows);
            HopReport { hops, episodes: rows.len(), em, f1, mean_turns }
        })
        .collect();
    EvalReport { episodes: results.len(), success_rate, f1, mean_turns, per_hop }
}

/// Sampling seed of the held-out evaluation for a training seed.
pub fn eval_seed(seed: u64) -> u64 {
    seed::derive_seed(seed, &[0xe7a1])
}

/// Rollout, reward assembly, advantages and PPO for `config.updates` steps.
pub fn train_policy(
    world: &KnowledgeWorld,
    arm: Arm,
    reward_model: Option<&RewardModelParams>,
    config: &PolicyTrainConfig,
) -> Result<PolicyRun, PolicyError> {
    let local = reward_model.map(|params| LocalRewardModel { params, scaling: config.shaping.scaling });
    train_policy_with_source(world, arm, local.as_ref().map(|l| l as &dyn StepRewardSource), config)
}

/// [`train_policy`] with PiCA step rewards from an arbitrary source.
pub fn train_policy_with_source(
    world: &KnowledgeWorld,
    arm: Arm,
    source: Option<&dyn StepRewardSource>,
    config: &PolicyTrainConfig,
) -> Result<PolicyRun, PolicyError> {
    config.ppo.validate()?;
    if config.n_agent == 0 || config.tasks_per_update == 0 {
        return Err(PolicyError::InvalidConfig("n_agent and tasks_per_update must be positive".into()));
    }
    let source = match arm {
        Arm::Pica => Some(source.ok_or(PolicyError::MissingRewardModel)?),
        _ => None,
    };
    let penalty = match arm {
        Arm::Outcome => PenaltySchedule::disabled(),
        _ => config.penalty,
    };
    let (train, eval) = task_pools(world, config)?;
    let eval_seed = eval_seed(config.seed);
    let mut params = PolicyParams::zeros();
    let mut rng = seed::stream(config.seed, &[0x5eed]);
    let mut curve = Vec::new();
    let per_update = config.tasks_per_update.min(train.len());

    for u in 0..config.updates {
        let mut pick = seed::stream(config.seed, &[0x7a5c, u as u64]);
        let chosen: Vec<usize> = sample(&mut pick, train.len(), per_update).into_vec();
        let jobs: Vec<(usize, usize)> = chosen.iter().flat_map(|&i| (0..config.n_agent).map(move |k| (i, k))).collect();
        let rollouts: Vec<_> = jobs
            .par_iter()
            .map(|&(i, k)| {
                let mut r = seed::stream(config.seed, &[0x40, u as u64, i as u64, k as u64]);
                rollout_policy(world, &train[i], &params, &config.env, config.ppo.temperature, SampleMode::Sample, &mut r)
            })
            .collect();
        let steps: Vec<Option<_>> = match source {
            Some(src) => {
                let trajs: Vec<_> = rollouts.iter().map(|r| r.trajectory.clone()).collect();
                src.step_rewards(&trajs).map_err(PolicyError::RewardSource)?.into_iter().map(Some).collect()
            }
            None => vec![None; rollouts.len()],
        };
        let batch: Vec<_> = rollouts
            .into_par_iter()
            .zip(steps)
            .map(|(rollout, step)| {
                let schedule = assemble_with_steps(&rollout.trajectory, step, &penalty, &config.shaping)?;
                let trace = advantage_trace(&schedule, &rollout.values, &config.ppo)?;
                Ok((schedule.total(), trace.clone(), rollout.into_episode(&trace)))
            })
            .collect::<Result<Vec<_>, PolicyError>>()?;

        let turns: usize = batch.iter().map(|b| b.1.discounted.len()).sum();
        let mean_abs = batch.iter().flat_map(|b| b.1.discounted.iter()).map(|a| a.abs()).sum::<f64>() / turns.max(1) as f64;
        if mean_abs > config.ppo.max_mean_abs_advantage {
            return Err(PolicyError::Divergence { value: mean_abs, bound: config.ppo.max_mean_abs_advantage });
        }
        let mean_reward = batch.iter().map(|b| b.0).sum::<f64>() / batch.len() as f64;
        let episodes: Vec<_> = batch.into_iter().map(|b| b.2).collect();
        let (next, stats) = ppo_update(&params, &episodes, &config.ppo, &mut rng)?;
        params = next;

        let step = u + 1;
        if step % config.eval_every.max(1) == 0 || step == config.updates {
            let e = evaluate(world, &params, &eval, &config.env, config.ppo.temperature, config.eval_rollouts, eval_seed);
            info!(arm = %arm, step, success = e.success_rate, turns = e.mean_turns, mean_reward, "policy eval");
            curve.push(CurvePoint {
                step,
                arm,
                success_rate: e.success_rate,
                f1: e.f1,
                mean_turns: e.mean_turns,
                mean_reward,
                kl: stats.kl,
                clip_fraction: stats.clip_fraction,
            });
        }
    }
    let final_eval = evaluate(world, &params, &eval, &config.env, config.ppo.temperature, config.eval_rollouts, eval_seed);
    let checkpoint = PolicyCheckpoint { arm, step: config.updates, params: params.clone(), config: config.clone(), rng };
    Ok(PolicyRun { params, curve, final_eval, eval_tasks: eval, checkpoint })
}
