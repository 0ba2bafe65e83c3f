//! Success-probability reward model.
//!
//! `f(t) = σ(h_t)` with `h_0 = w_q·x_q` from question features and
//! `h_t = h_{t-1} + w_s·x_t` from per-turn features of the trajectory prefix.
//! Step rewards are potential differences of `Φ = log f`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::seed;
use crate::trajectory::{Dataset, Trajectory, Turn};
use crate::view::{ChainView, StepSummary};
use crate::world::QuestionEncoding;

#[derive(Debug, Error)]
pub enum RewardModelError {
    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("checkpoint {path}: {source}")]
    Checkpoint { path: String, source: serde_json::Error },
}

type Result<T> = std::result::Result<T, RewardModelError>;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log σ(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `log(e^x - 1)` for `x > 0`.
fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Shape of the feature maps; fixed per checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub max_hops: usize,
    pub max_turns: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { max_hops: 4, max_turns: 5 }
    }
}

const SEARCH_FEATURES: [&str; 10] = [
    "search",
    "next_hop_query",
    "hop_completed",
    "completes_chain",
    "frontier_wrong_relation",
    "entity_not_frontier",
    "relation_elsewhere_in_question",
    "repeated_query",
    "new_entity",
    "after_complete",
];
const ANSWER_FEATURES: [&str; 6] = [
    "answer",
    "answer_frontier_complete",
    "answer_frontier_incomplete",
    "answer_other_revealed",
    "answer_unrevealed",
    "answer_remaining_fraction",
];
const ANSWER_BASE: usize = SEARCH_FEATURES.len();
const POSITION_BASE: usize = ANSWER_BASE + ANSWER_FEATURES.len();

impl FeatureConfig {
    pub fn question_dim(&self) -> usize {
        self.max_hops
    }

    pub fn step_dim(&self) -> usize {
        POSITION_BASE + self.max_turns
    }

    pub fn question_feature_names(&self) -> Vec<String> {
        std::iter::once("bias".to_string()).chain((2..=self.max_hops).map(|k| format!("hops={k}"))).collect()
    }

    pub fn step_feature_names(&self) -> Vec<String> {
        SEARCH_FEATURES
            .iter()
            .chain(ANSWER_FEATURES.iter())
            .map(|s| s.to_string())
            .chain((1..=self.max_turns).map(|t| format!("turn={t}")))
            .collect()
    }

    pub fn question_features(&self, q: &QuestionEncoding) -> Result<Vec<f64>> {
        let k = q.hop_count();
        if !(2..=self.max_hops).contains(&k) {
            return Err(RewardModelError::FeatureMismatch(format!(
                "hop count {k} outside supported range [2, {}]",
                self.max_hops
            )));
        }
        let mut x = vec![0.0; self.question_dim()];
        x[0] = 1.0;
        x[k - 1] = 1.0;
        Ok(x)
    }

    /// Features of every turn, each computed from the prefix ending there.
    pub fn step_features(&self, q: &QuestionEncoding, turns: &[Turn]) -> Result<Vec<Vec<f64>>> {
        if turns.len() > self.max_turns {
            return Err(RewardModelError::FeatureMismatch(format!(
                "{} turns exceed the feature budget of {}",
                turns.len(),
                self.max_turns
            )));
        }
        let mut view = ChainView::new(q);
        Ok(turns
            .iter()
            .enumerate()
            .map(|(i, turn)| {
                let mut x = vec![0.0; self.step_dim()];
                match view.apply(turn) {
                    StepSummary::Search(s) => {
                        let flags = [
                            true,
                            s.next_hop_query,
                            s.hop_completed,
                            s.completes_chain,
                            s.frontier_wrong_relation,
                            s.entity_not_frontier,
                            s.relation_elsewhere_in_question,
                            s.repeated_query,
                            s.new_entities > 0,
                            s.after_complete,
                        ];
                        for (j, f) in flags.into_iter().enumerate() {
                            x[j] = f64::from(u8::from(f));
                        }
                    }
                    StepSummary::Answer(a) => {
                        let flags = [
                            true,
                            a.is_frontier && a.chain_complete,
                            a.is_frontier && !a.chain_complete,
                            a.other_revealed,
                            a.unrevealed,
                        ];
                        for (j, f) in flags.into_iter().enumerate() {
                            x[ANSWER_BASE + j] = f64::from(u8::from(f));
                        }
                        x[ANSWER_BASE + 5] = a.remaining_fraction;
                    }
                    StepSummary::Empty => {}
                }
                x[POSITION_BASE + i] = 1.0;
                x
            })
            .collect())
    }

    pub fn features(&self, traj: &Trajectory) -> Result<TrajectoryFeatures> {
        Ok(TrajectoryFeatures {
            question: self.question_features(&traj.question.question)?,
            steps: self.step_features(&traj.question.question, &traj.turns)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFeatures {
    pub question: Vec<f64>,
    pub steps: Vec<Vec<f64>>,
}

/// Question head and per-turn increment head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardModelParams {
    pub features: FeatureConfig,
    pub question_head: Vec<f64>,
    pub step_head: Vec<f64>,
}

impl RewardModelParams {
    pub fn zeros(features: FeatureConfig) -> Self {
        Self {
            features,
            question_head: vec![0.0; features.question_dim()],
            step_head: vec![0.0; features.step_dim()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.question_head.len() != self.features.question_dim() || self.step_head.len() != self.features.step_dim() {
            return Err(RewardModelError::FeatureMismatch(format!(
                "head sizes ({}, {}) do not match feature config ({}, {})",
                self.question_head.len(),
                self.step_head.len(),
                self.features.question_dim(),
                self.features.step_dim()
            )));
        }
        if self.question_head.iter().chain(&self.step_head).any(|w| !w.is_finite()) {
            return Err(RewardModelError::FeatureMismatch("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.question_head.len() + self.step_head.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        let q = self.question_head.len();
        if i < q {
            self.question_head[i]
        } else {
            self.step_head[i - q]
        }
    }

    pub fn set(&mut self, i: usize, v: f64) {
        let q = self.question_head.len();
        if i < q {
            self.question_head[i] = v;
        } else {
            self.step_head[i - q] = v;
        }
    }

    /// Base logit and cumulative logits `h_0..h_T`.
    pub fn logits(&self, feats: &TrajectoryFeatures) -> Vec<f64> {
        let mut h = Vec::with_capacity(feats.steps.len() + 1);
        h.push(dot(&self.question_head, &feats.question));
        for x in &feats.steps {
            let prev = *h.last().unwrap();
            h.push(prev + dot(&self.step_head, x));
        }
        h
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuccessCurve {
    /// Logits `h(0..T)`.
    pub h: Vec<f64>,
    pub f: Vec<f64>,
    /// Relative gains `g(1..T)`.
    pub g: Vec<f64>,
    pub phi: Vec<f64>,
}

impl SuccessCurve {
    pub fn from_logits(h: Vec<f64>) -> Self {
        let f: Vec<f64> = h.iter().map(|&x| sigmoid(x)).collect();
        let phi = h.iter().map(|&x| log_sigmoid(x)).collect();
        let g = f.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
        Self { h, f, g, phi }
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// `Φ(t) − Φ(t−1)` for `t = 1..T`.
    pub fn raw_rewards(&self) -> Vec<f64> {
        self.phi.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `f(T)` rebuilt as `f(0)·∏(1+g)`.
    pub fn product_form(&self) -> f64 {
        self.g.iter().fold(self.f[0], |acc, g| acc * (1.0 + g))
    }
}

pub fn success_curve(params: &RewardModelParams, traj: &Trajectory) -> Result<SuccessCurve> {
    params.validate()?;
    let feats = params.features.features(traj)?;
    Ok(SuccessCurve::from_logits(params.logits(&feats)))
}

/// Curve over an arbitrary prefix of turns.
pub fn success_curve_for(params: &RewardModelParams, question: &QuestionEncoding, turns: &[Turn]) -> Result<SuccessCurve> {
    params.validate()?;
    let feats = TrajectoryFeatures {
        question: params.features.question_features(question)?,
        steps: params.features.step_features(question, turns)?,
    };
    Ok(SuccessCurve::from_logits(params.logits(&feats)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardScaling {
    pub temperature: f64,
    pub step_reward_scale: f64,
    pub baseline_step_reward: f64,
}

impl Default for RewardScaling {
    fn default() -> Self {
        Self { temperature: 1.0, step_reward_scale: 0.3, baseline_step_reward: 0.55 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReward {
    pub raw: f64,
    pub normalized: f64,
    pub deployed: f64,
}

impl StepReward {
    pub fn from_raw(raw: f64, scaling: &RewardScaling) -> Self {
        let normalized = sigmoid(raw / scaling.temperature);
        let deployed = scaling.step_reward_scale * 2.0 * (normalized - scaling.baseline_step_reward);
        Self { raw, normalized, deployed }
    }
}

/// Step reward of turn `t` (1-based) given the prefix of `traj` through `t`.
pub fn pica_step_reward(params: &RewardModelParams, traj: &Trajectory, t: usize, scaling: &RewardScaling) -> Result<StepReward> {
    if t == 0 || t > traj.turns.len() {
        return Err(RewardModelError::FeatureMismatch(format!("turn {t} outside 1..={}", traj.turns.len())));
    }
    let curve = success_curve_for(params, &traj.question.question, &traj.turns[..t])?;
    Ok(StepReward::from_raw(curve.phi[t] - curve.phi[t - 1], scaling))
}

/// Step rewards for every turn. Features are prefix-causal, so one pass over
/// the full trajectory equals `pica_step_reward` at each `t`.
pub fn step_rewards(params: &RewardModelParams, traj: &Trajectory, scaling: &RewardScaling) -> Result<Vec<StepReward>> {
    let curve = success_curve(params, traj)?;
    Ok(curve.raw_rewards().into_iter().map(|r| StepReward::from_raw(r, scaling)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda_g: f64,
    /// Gains at or below this use the hinge surrogate.
    pub g_min: f64,
    pub margin: f64,
    /// Gains at or above this contribute the constant `-log g_max`.
    pub g_max: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda_g: 1.0, g_min: 1e-4, margin: 0.1, g_max: 3.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub gold_loss: f64,
    pub final_loss: f64,
    pub total: f64,
    pub lambda_g: f64,
}

/// Per-logit loss coefficients `∂L/∂h_t` plus the loss itself.
fn loss_and_logit_grad(h: &[f64], label: bool, pivots: &[Option<bool>], cfg: &LossConfig) -> (LossBreakdown, Vec<f64>) {
    let t_final = h.len() - 1;
    let mut dh = vec![0.0; h.len()];
    let mut gold = 0.0;
    for (i, z) in pivots.iter().enumerate() {
        if *z != Some(true) {
            continue;
        }
        let t = i + 1;
        let dphi = log_sigmoid(h[t]) - log_sigmoid(h[t - 1]);
        let g = dphi.exp_m1();
        if g >= cfg.g_max {
            gold -= cfg.g_max.ln();
        } else if g > cfg.g_min {
            gold -= ln_expm1(dphi);
            // d(-log g)/dΔΦ = -(1+g)/g, and dΦ/dh = 1 - σ(h).
            let c = -(1.0 + 1.0 / g);
            dh[t] += cfg.lambda_g * c * (1.0 - sigmoid(h[t]));
            dh[t - 1] -= cfg.lambda_g * c * (1.0 - sigmoid(h[t - 1]));
        } else {
            let slack = cfg.margin - (h[t] - h[t - 1]);
            if slack > 0.0 {
                gold += slack;
                dh[t] -= cfg.lambda_g;
                dh[t - 1] += cfg.lambda_g;
            }
        }
    }
    let ht = h[t_final];
    let final_loss = if label {
        dh[t_final] += sigmoid(ht) - 1.0;
        softplus(-ht)
    } else {
        dh[t_final] += sigmoid(ht);
        softplus(ht)
    };
    let total = final_loss + cfg.lambda_g * gold;
    (LossBreakdown { gold_loss: gold, final_loss, total, lambda_g: cfg.lambda_g }, dh)
}

/// Gradient with respect to `(question_head, step_head)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RmGradient {
    pub question: Vec<f64>,
    pub step: Vec<f64>,
}

impl RmGradient {
    fn zeros(cfg: &FeatureConfig) -> Self {
        Self { question: vec![0.0; cfg.question_dim()], step: vec![0.0; cfg.step_dim()] }
    }

    pub fn get(&self, i: usize) -> f64 {
        let q = self.question.len();
        if i < q {
            self.question[i]
        } else {
            self.step[i - q]
        }
    }
}

fn accumulate(params: &RewardModelParams, feats: &TrajectoryFeatures, label: bool, pivots: &[Option<bool>], cfg: &LossConfig, grad: &mut RmGradient, scale: f64) -> LossBreakdown {
    let h = params.logits(feats);
    let (loss, dh) = loss_and_logit_grad(&h, label, pivots, cfg);
    // h_t = w_q·x_q + Σ_{k≤t} w_s·x_k, so x_k collects the suffix sum of dh.
    let total: f64 = dh.iter().sum();
    for (g, x) in grad.question.iter_mut().zip(&feats.question) {
        *g += scale * total * x;
    }
    let mut suffix = 0.0;
    for k in (1..h.len()).rev() {
        suffix += dh[k];
        for (g, x) in grad.step.iter_mut().zip(&feats.steps[k - 1]) {
            *g += scale * suffix * x;
        }
    }
    loss
}

pub fn reward_model_losses(params: &RewardModelParams, traj: &Trajectory, cfg: &LossConfig) -> Result<LossBreakdown> {
    Ok(loss_with_gradient(params, traj, cfg)?.0)
}

pub fn loss_with_gradient(params: &RewardModelParams, traj: &Trajectory, cfg: &LossConfig) -> Result<(LossBreakdown, RmGradient)> {
    params.validate()?;
    let feats = params.features.features(traj)?;
    let mut grad = RmGradient::zeros(&params.features);
    let loss = accumulate(params, &feats, traj.label, &traj.pivot_by_turn(), cfg, &mut grad, 1.0);
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub features: FeatureConfig,
}

impl Default for RmTrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, batch_size: 64, epochs: 20, seed: 1, loss: LossConfig::default(), features: FeatureConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 0 is the initialization.
    pub epoch: usize,
    pub gold_loss: f64,
    pub final_loss: f64,
    pub total: f64,
}

struct Example {
    feats: TrajectoryFeatures,
    label: bool,
    pivots: Vec<Option<bool>>,
}

fn prepare(dataset: &Dataset, cfg: &FeatureConfig) -> Result<Vec<Example>> {
    dataset
        .trajectories
        .iter()
        .map(|t| Ok(Example { feats: cfg.features(t)?, label: t.label, pivots: t.pivot_by_turn() }))
        .collect()
}

fn mean_losses(params: &RewardModelParams, data: &[Example], cfg: &LossConfig) -> LossBreakdown {
    let mut sink = RmGradient::zeros(&params.features);
    let mut acc = LossBreakdown { lambda_g: cfg.lambda_g, ..Default::default() };
    for ex in data {
        let l = accumulate(params, &ex.feats, ex.label, &ex.pivots, cfg, &mut sink, 0.0);
        acc.gold_loss += l.gold_loss;
        acc.final_loss += l.final_loss;
        acc.total += l.total;
    }
    let n = data.len().max(1) as f64;
    acc.gold_loss /= n;
    acc.final_loss /= n;
    acc.total /= n;
    acc
}

/// Mean losses of `params` over a dataset.
pub fn dataset_losses(params: &RewardModelParams, dataset: &Dataset, cfg: &LossConfig) -> Result<LossBreakdown> {
    params.validate()?;
    Ok(mean_losses(params, &prepare(dataset, &params.features)?, cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedRewardModel {
    pub params: RewardModelParams,
    pub history: Vec<EpochLog>,
}

pub fn train_reward_model(dataset: &Dataset, config: &RmTrainConfig) -> Result<TrainedRewardModel> {
    if dataset.is_empty() {
        return Err(RewardModelError::EmptyDataset);
    }
    let positives = dataset.trajectories.iter().filter(|t| t.label).count();
    if positives == 0 || positives == dataset.len() {
        warn!(positives, total = dataset.len(), "dataset has a single outcome class; final loss is degenerate");
    }
    let data = prepare(dataset, &config.features)?;
    let mut params = RewardModelParams::zeros(config.features);
    let log = |epoch, l: LossBreakdown| EpochLog { epoch, gold_loss: l.gold_loss, final_loss: l.final_loss, total: l.total };
    let mut history = vec![log(0, mean_losses(&params, &data, &config.loss))];
    let mut rng = seed::stream(config.seed, &[0x7b]);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = config.batch_size.max(1);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut grad = RmGradient::zeros(&config.features);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let ex = &data[i];
                accumulate(&params, &ex.feats, ex.label, &ex.pivots, &config.loss, &mut grad, scale);
            }
            for (w, g) in params.question_head.iter_mut().zip(&grad.question) {
                *w -= config.learning_rate * g;
            }
            for (w, g) in params.step_head.iter_mut().zip(&grad.step) {
                *w -= config.learning_rate * g;
            }
        }
        let l = mean_losses(&params, &data, &config.loss);
        info!(epoch, gold = l.gold_loss, final_loss = l.final_loss, total = l.total, "reward model epoch");
        history.push(log(epoch, l));
    }
    Ok(TrainedRewardModel { params, history })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub seed: u64,
    pub lambda_g: f64,
    pub train: RmTrainConfig,
    pub history: Vec<EpochLog>,
    pub question_features: Vec<String>,
    pub step_features: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmCheckpoint {
    pub params: RewardModelParams,
    pub metadata: CheckpointMetadata,
}

impl RmCheckpoint {
    pub fn new(model: TrainedRewardModel, train: &RmTrainConfig) -> Self {
        let f = model.params.features;
        Self {
            metadata: CheckpointMetadata {
                seed: train.seed,
                lambda_g: train.loss.lambda_g,
                train: *train,
                history: model.history,
                question_features: f.question_feature_names(),
                step_features: f.step_feature_names(),
            },
            params: model.params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|source| RewardModelError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| RewardModelError::Io { path: path.display().to_string(), source })?;
        Self::from_slice(&bytes, &path.display().to_string())
    }

    pub fn from_slice(bytes: &[u8], origin: &str) -> Result<Self> {
        let ckpt: Self =
            serde_json::from_slice(bytes).map_err(|source| RewardModelError::Checkpoint { path: origin.to_string(), source })?;
        ckpt.params.validate()?;
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::alma_mater_fixture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, scale: f64) -> RewardModelParams {
        let mut p = RewardModelParams::zeros(FeatureConfig::default());
        for i in 0..p.num_params() {
            p.set(i, rng.gen_range(-scale..scale));
        }
        p
    }

    #[test]
    fn zero_params_give_flat_half_curve() {
        let (_, traj) = alma_mater_fixture();
        let c = success_curve(&RewardModelParams::zeros(FeatureConfig::default()), &traj).unwrap();
        assert!(c.f.iter().all(|&f| f == 0.5));
        assert!(c.g.iter().all(|&g| g == 0.0));
        assert!(c.phi.iter().all(|&p| (p - 0.5f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn no_increment_curve_is_constant() {
        let (_, traj) = alma_mater_fixture();
        let mut p = RewardModelParams::zeros(FeatureConfig::default());
        p.question_head[0] = (0.2f64 / 0.8).ln();
        let c = success_curve(&p, &traj).unwrap();
        assert!(c.f.iter().all(|&f| (f - 0.2).abs() < 1e-12));
    }

    #[test]
    fn curve_identities_on_fixture() {
        let (_, traj) = alma_mater_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = success_curve(&random_params(&mut rng, 2.0), &traj).unwrap();
            assert_eq!(c.len(), 3);
            let mut prod = c.f[0];
            for g in &c.g {
                prod *= 1.0 + g;
            }
            assert!((prod - c.f[3]).abs() < 1e-9);
            let raw: f64 = c.raw_rewards().iter().sum();
            assert!((raw - (c.phi[3] - c.phi[0])).abs() < 1e-9);
            for (r, g) in c.raw_rewards().iter().zip(&c.g) {
                assert!((r - g.ln_1p()).abs() < 1e-9);
                assert_eq!(*r > 0.0, *g > 0.0);
            }
        }
    }

    #[test]
    fn step_reward_constants() {
        let s = RewardScaling::default();
        let zero = StepReward::from_raw(0.0, &s);
        assert_eq!(zero.normalized, 0.5);
        assert!((zero.deployed + 0.03).abs() < 1e-12);
        let doubled = StepReward::from_raw(0.5f64.ln() - 0.25f64.ln(), &s);
        assert!((doubled.raw - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn prefix_rewards_match_full_pass() {
        let (_, traj) = alma_mater_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_params(&mut rng, 1.0);
        let s = RewardScaling::default();
        let all = step_rewards(&p, &traj, &s).unwrap();
        for t in 1..=traj.turns.len() {
            assert_eq!(pica_step_reward(&p, &traj, t, &s).unwrap(), all[t - 1]);
        }
        assert!(pica_step_reward(&p, &traj, 0, &s).is_err());
    }

    #[test]
    fn final_loss_values() {
        let h = [0.0, (0.9f64 / 0.1).ln()];
        let (l, _) = loss_and_logit_grad(&h, true, &[None], &LossConfig::default());
        assert!((l.final_loss - 0.10536051565782628).abs() < 1e-12);
        let (l, _) = loss_and_logit_grad(&[0.0, 0.0], false, &[None], &LossConfig::default());
        assert!((l.final_loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unit_gain_has_zero_gold_loss() {
        // f: 0.25 -> 0.5 gives g = 1.
        let h = [(1.0f64 / 3.0).ln(), 0.0];
        let (l, _) = loss_and_logit_grad(&h, true, &[Some(true)], &LossConfig::default());
        assert!(l.gold_loss.abs() < 1e-12);
        assert!((l.total - (l.final_loss + l.gold_loss)).abs() < 1e-15);
    }

    #[test]
    fn hinge_replaces_nonpositive_gain() {
        let (l, dh) = loss_and_logit_grad(&[0.3, 0.3], false, &[Some(true)], &LossConfig::default());
        assert!((l.gold_loss - 0.1).abs() < 1e-12);
        assert_eq!(dh[0], 1.0);
        let (l, _) = loss_and_logit_grad(&[0.3, 0.0], false, &[Some(true)], &LossConfig::default());
        assert!((l.gold_loss - 0.4).abs() < 1e-12);
        assert!(l.gold_loss.is_finite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (_, traj) = alma_mater_fixture();
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut p = random_params(&mut rng, 1.0);
            let (_, grad) = loss_with_gradient(&p, &traj, &cfg).unwrap();
            for i in 0..p.num_params() {
                let w = p.get(i);
                let eps = 1e-6;
                p.set(i, w + eps);
                let up = reward_model_losses(&p, &traj, &cfg).unwrap().total;
                p.set(i, w - eps);
                let down = reward_model_losses(&p, &traj, &cfg).unwrap().total;
                p.set(i, w);
                let fd = (up - down) / (2.0 * eps);
                let a = grad.get(i);
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "coord {i}: analytic {a} vs numeric {fd}");
            }
        }
    }

    #[test]
    fn mismatched_checkpoint_is_rejected() {
        let (_, traj) = alma_mater_fixture();
        let mut p = RewardModelParams::zeros(FeatureConfig::default());
        p.step_head.pop();
        assert!(matches!(success_curve(&p, &traj), Err(RewardModelError::FeatureMismatch(_))));
        let narrow = RewardModelParams::zeros(FeatureConfig { max_hops: 2, max_turns: 2 });
        assert!(success_curve(&narrow, &traj).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = TrainedRewardModel { params: random_params(&mut rng, 1.0), history: vec![] };
        let ckpt = RmCheckpoint::new(model, &RmTrainConfig::default());
        let back = RmCheckpoint::from_slice(ckpt.to_json().as_bytes(), "mem").unwrap();
        assert_eq!(back, ckpt);
    }
}
