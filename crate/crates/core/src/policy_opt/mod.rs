//! Search policy, critic, turn-level advantages and the masked PPO update.
//!
//! Every model token is either a sampled decision (turn mode, query entity,
//! query relation, answer entity) scored by a linear softmax over legal
//! candidates, or a deterministic marker. Observation tokens come from the
//! environment and are masked out of the loss.

mod advantage;
mod ppo;
mod rollout;
mod train;

pub use advantage::{advantage_from_rewards, advantage_trace, AdvantageTrace};
pub use ppo::{ppo_objective, ppo_update, surrogate_gradient, ObjectiveParts, UpdateStats};
pub use rollout::{rollout_policy, state_features, PolicyRollout};
pub use train::{eval_seed, evaluate, task_pools, train_policy, train_policy_with_source, Arm, CurvePoint, EvalReport, HopReport, PolicyCheckpoint, PolicyRun, PolicyTrainConfig};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::DatagenError;
use crate::reward_model::RewardModelError;
use crate::shaping::ShapingError;
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("batch has no masked-in tokens")]
    NoMaskedTokens,
    #[error("length mismatch: {rewards} rewards vs {values} values")]
    LengthMismatch { rewards: usize, values: usize },
    #[error("divergence: mean |advantage| {value:.3} exceeds bound {bound}")]
    Divergence { value: f64, bound: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("the pica arm needs a reward model")]
    MissingRewardModel,
    #[error("reward source: {0}")]
    RewardSource(crate::shaping::SourceError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Shaping(#[from] ShapingError),
    #[error(transparent)]
    RewardModel(#[from] RewardModelError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
}

/// Decision kinds; each has its own weight block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    /// Search-vs-answer; the answer candidate has all-zero features.
    Mode,
    SearchEntity,
    SearchRelation,
    AnswerEntity,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Mode, Block::SearchEntity, Block::SearchRelation, Block::AnswerEntity];

    pub fn dim(self) -> usize {
        match self {
            Block::Mode => STATE_DIM,
            Block::SearchEntity => 5,
            Block::SearchRelation => 4,
            Block::AnswerEntity => 4,
        }
    }
}

/// Width of the state summary used by the mode decision and the critic.
pub const STATE_DIM: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub mode: Vec<f64>,
    pub search_entity: Vec<f64>,
    pub search_relation: Vec<f64>,
    pub answer_entity: Vec<f64>,
    pub critic: Vec<f64>,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self::zeros()
    }
}

impl PolicyParams {
    pub fn zeros() -> Self {
        Self {
            mode: vec![0.0; Block::Mode.dim()],
            search_entity: vec![0.0; Block::SearchEntity.dim()],
            search_relation: vec![0.0; Block::SearchRelation.dim()],
            answer_entity: vec![0.0; Block::AnswerEntity.dim()],
            critic: vec![0.0; STATE_DIM],
        }
    }

    pub fn block(&self, b: Block) -> &[f64] {
        match b {
            Block::Mode => &self.mode,
            Block::SearchEntity => &self.search_entity,
            Block::SearchRelation => &self.search_relation,
            Block::AnswerEntity => &self.answer_entity,
        }
    }

    pub fn block_mut(&mut self, b: Block) -> &mut Vec<f64> {
        match b {
            Block::Mode => &mut self.mode,
            Block::SearchEntity => &mut self.search_entity,
            Block::SearchRelation => &mut self.search_relation,
            Block::AnswerEntity => &mut self.answer_entity,
        }
    }

    fn parts(&self) -> [&Vec<f64>; 5] {
        [&self.mode, &self.search_entity, &self.search_relation, &self.answer_entity, &self.critic]
    }

    fn parts_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [&mut self.mode, &mut self.search_entity, &mut self.search_relation, &mut self.answer_entity, &mut self.critic]
    }

    /// Total number of weights, policy blocks first, critic last.
    pub fn num_params(&self) -> usize {
        self.parts().iter().map(|p| p.len()).sum()
    }

    /// Number of policy (non-critic) weights.
    pub fn num_policy_params(&self) -> usize {
        self.num_params() - self.critic.len()
    }

    pub fn get(&self, mut i: usize) -> f64 {
        for p in self.parts() {
            if i < p.len() {
                return p[i];
            }
            i -= p.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut i: usize, v: f64) {
        for p in self.parts_mut() {
            if i < p.len() {
                p[i] = v;
                return;
            }
            i -= p.len();
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.parts().iter().all(|p| p.iter().all(|w| w.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        for (a, b) in self.parts_mut().into_iter().zip(other.parts()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn norm_sq(&self, include_critic: bool) -> f64 {
        let parts = self.parts();
        let n = if include_critic { 5 } else { 4 };
        parts[..n].iter().flat_map(|p| p.iter()).map(|x| x * x).sum()
    }

    /// Log-probabilities of each candidate at `temperature`.
    pub fn log_probs(&self, block: Block, candidates: &[Vec<f64>], temperature: f64) -> Vec<f64> {
        let w = self.block(block);
        let logits: Vec<f64> = candidates.iter().map(|x| dot(w, x) / temperature).collect();
        log_softmax(&logits)
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        dot(&self.critic, state)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// One sampled (or forced) token choice with the rollout-time distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub block: Block,
    pub candidates: Vec<Vec<f64>>,
    pub chosen: usize,
    pub old_log_probs: Vec<f64>,
}

impl Decision {
    pub fn old_log_prob(&self) -> f64 {
        self.old_log_probs[self.chosen]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    Sample,
    Greedy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub choice: usize,
    pub log_prob: f64,
    pub log_probs: Vec<f64>,
    pub value: f64,
}

/// Chooses among `candidates` and reports the critic value of `state`.
pub fn policy_step<R: Rng + ?Sized>(
    params: &PolicyParams,
    block: Block,
    candidates: &[Vec<f64>],
    state: &[f64],
    temperature: f64,
    mode: SampleMode,
    rng: &mut R,
) -> StepOutput {
    let log_probs = params.log_probs(block, candidates, temperature);
    let choice = match mode {
        SampleMode::Greedy => {
            let mut best = 0;
            for (i, lp) in log_probs.iter().enumerate() {
                if *lp > log_probs[best] {
                    best = i;
                }
            }
            best
        }
        SampleMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = log_probs.len() - 1;
            for (i, lp) in log_probs.iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        }
    };
    StepOutput { choice, log_prob: log_probs[choice], log_probs, value: params.value(state) }
}

/// Per-token input to the masked surrogate.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSample {
    pub masked_in: bool,
    pub advantage: f64,
    /// `None` for deterministic tokens (markers, observations).
    pub decision: Option<Decision>,
}

/// One trajectory worth of PPO inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub tokens: Vec<TokenSample>,
    /// Critic input per turn.
    pub critic_states: Vec<Vec<f64>>,
    /// Reward-to-go per turn.
    pub returns: Vec<f64>,
}

impl Episode {
    pub fn masked_in(&self) -> usize {
        self.tokens.iter().filter(|t| t.masked_in).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub kl_coef: f64,
    pub gamma: f64,
    pub lambda_gae: f64,
    pub critic_coef: f64,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub ppo_epochs: usize,
    pub minibatch_size: usize,
    pub temperature: f64,
    /// Global gradient-norm bound; non-positive disables clipping.
    pub max_grad_norm: f64,
    /// Abort when mean |Ã| exceeds this.
    pub max_mean_abs_advantage: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            kl_coef: 0.001,
            gamma: 1.0,
            lambda_gae: 1.0,
            critic_coef: 1.0,
            policy_lr: 3.0,
            critic_lr: 0.1,
            ppo_epochs: 2,
            minibatch_size: 40,
            temperature: 1.0,
            max_grad_norm: 0.0,
            max_mean_abs_advantage: 50.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.to_string()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.lambda_gae > 0.0 && self.lambda_gae <= 1.0) {
            return bad("lambda_gae must lie in (0, 1]");
        }
        if self.temperature <= 0.0 {
            return bad("temperature must be positive");
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn candidates() -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.5]]
    }

    #[test]
    fn zero_weights_are_uniform() {
        let p = PolicyParams::zeros();
        let lp = p.log_probs(Block::SearchRelation, &candidates(), 1.0);
        for l in lp {
            assert!((l.exp() - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn greedy_picks_argmax() {
        let mut p = PolicyParams::zeros();
        p.search_relation = vec![0.0, 5.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let out = policy_step(&p, Block::SearchRelation, &candidates(), &[0.0; STATE_DIM], 1.0, SampleMode::Greedy, &mut rng);
            assert_eq!(out.choice, 1);
        }
    }

    #[test]
    fn probabilities_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let mut p = PolicyParams::zeros();
            for i in 0..p.num_params() {
                p.set(i, rng.gen_range(-20.0..20.0));
            }
            let lp = p.log_probs(Block::SearchRelation, &candidates(), 0.7);
            let total: f64 = lp.iter().map(|l| l.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_follows_distribution() {
        let mut p = PolicyParams::zeros();
        p.search_relation = vec![1.0, 0.0, 0.0, 0.0];
        let cands = candidates();
        let probs: Vec<f64> = p.log_probs(Block::SearchRelation, &cands, 1.0).iter().map(|l| l.exp()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 3];
        let n = 20_000;
        for _ in 0..n {
            counts[policy_step(&p, Block::SearchRelation, &cands, &[0.0; STATE_DIM], 1.0, SampleMode::Sample, &mut rng).choice] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.015);
        }
    }

    #[test]
    fn flat_indexing_covers_every_block() {
        let mut p = PolicyParams::zeros();
        for i in 0..p.num_params() {
            p.set(i, i as f64);
        }
        assert_eq!(p.get(0), p.mode[0]);
        assert_eq!(p.get(p.num_policy_params()), p.critic[0]);
        assert_eq!(p.critic[STATE_DIM - 1], (p.num_params() - 1) as f64);
    }
}
