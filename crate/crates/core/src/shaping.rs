//! Per-turn reward schedules: PiCA step reward, step penalty and outcome reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward_model::{step_rewards, RewardModelError, RewardModelParams, RewardScaling, StepReward};
use crate::trajectory::{tokenize_with_mask, validate_trajectory, Limits, Trajectory, Vocabulary};
use crate::world::{score_answer, WorldError};

#[derive(Debug, Error)]
pub enum ShapingError {
    #[error("penalty {name} = {value} outside [{lo}, {hi}]")]
    PenaltyRange { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("trajectory has no final answer turn")]
    NoFinalAnswer,
    #[error("expected {expected} step rewards, got {got}")]
    StepCount { expected: usize, got: usize },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    RewardModel(#[from] RewardModelError),
}

/// Exponential step penalty; ranges are checked on construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPenalty")]
pub struct PenaltySchedule {
    lambda: f64,
    alpha: f64,
}

#[derive(Deserialize)]
struct RawPenalty {
    lambda: f64,
    alpha: f64,
}

impl TryFrom<RawPenalty> for PenaltySchedule {
    type Error = ShapingError;

    fn try_from(r: RawPenalty) -> Result<Self, Self::Error> {
        Self::new(r.lambda, r.alpha)
    }
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self { lambda: 0.1, alpha: 1.2 }
    }
}

impl PenaltySchedule {
    pub const LAMBDA_RANGE: (f64, f64) = (0.0, 0.5);
    pub const ALPHA_RANGE: (f64, f64) = (1.0, 1.5);

    pub fn new(lambda: f64, alpha: f64) -> Result<Self, ShapingError> {
        let check = |name, value: f64, (lo, hi): (f64, f64)| {
            if (lo..=hi).contains(&value) {
                Ok(())
            } else {
                Err(ShapingError::PenaltyRange { name, value, lo, hi })
            }
        };
        check("lambda", lambda, Self::LAMBDA_RANGE)?;
        check("alpha", alpha, Self::ALPHA_RANGE)?;
        Ok(Self { lambda, alpha })
    }

    pub fn disabled() -> Self {
        Self { lambda: 0.0, alpha: 1.0 }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Penalty for 1-based turn `t`.
pub fn step_penalty(t: usize, schedule: &PenaltySchedule) -> f64 {
    if t < 3 {
        0.0
    } else {
        schedule.lambda * schedule.alpha.powi((t - 3) as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeConfig {
    pub outcome_reward_scale: f64,
    pub format_penalty: f64,
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        Self { outcome_reward_scale: 1.5, format_penalty: -1.0 }
    }
}

pub fn outcome_reward<S: AsRef<str>>(prediction: &str, golds: &[S], format_valid: bool, cfg: &OutcomeConfig) -> Result<f64, ShapingError> {
    let score = score_answer(prediction, golds)?;
    Ok(if format_valid { cfg.outcome_reward_scale * score.f1 } else { cfg.format_penalty })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapingConfig {
    pub scaling: RewardScaling,
    pub outcome: OutcomeConfig,
    pub limits: Limits,
}

pub type SourceError = Box<dyn std::error::Error + Send + Sync>;

/// Anything that scores every turn of a batch of trajectories.
pub trait StepRewardSource: Sync {
    fn step_rewards(&self, batch: &[Trajectory]) -> Result<Vec<Vec<StepReward>>, SourceError>;
}

/// In-process reward model.
pub struct LocalRewardModel<'a> {
    pub params: &'a RewardModelParams,
    pub scaling: RewardScaling,
}

impl StepRewardSource for LocalRewardModel<'_> {
    fn step_rewards(&self, batch: &[Trajectory]) -> Result<Vec<Vec<StepReward>>, SourceError> {
        Ok(batch.iter().map(|t| step_rewards(self.params, t, &self.scaling)).collect::<Result<_, _>>()?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnComponents {
    pub pica_deployed: f64,
    pub penalty: f64,
    pub outcome: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnRewardSchedule {
    pub rewards: Vec<f64>,
    /// Token index of each turn's final model token.
    pub anchors: Vec<usize>,
    pub components: Vec<TurnComponents>,
    /// PiCA step rewards, when a reward model was supplied.
    pub step: Option<Vec<StepReward>>,
    pub f1: f64,
    pub format_valid: bool,
}

impl TurnRewardSchedule {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Builds `R_t` for every turn. Without a reward model the PiCA component is 0.
pub fn assemble_turn_rewards(
    traj: &Trajectory,
    params: Option<&RewardModelParams>,
    penalty: &PenaltySchedule,
    config: &ShapingConfig,
) -> Result<TurnRewardSchedule, ShapingError> {
    let step = params.map(|p| step_rewards(p, traj, &config.scaling)).transpose()?;
    assemble_with_steps(traj, step, penalty, config)
}

/// Like [`assemble_turn_rewards`] with step rewards computed elsewhere.
pub fn assemble_with_steps(
    traj: &Trajectory,
    step: Option<Vec<StepReward>>,
    penalty: &PenaltySchedule,
    config: &ShapingConfig,
) -> Result<TurnRewardSchedule, ShapingError> {
    let prediction = traj.final_answer().ok_or(ShapingError::NoFinalAnswer)?;
    let n = traj.turns.len();
    if let Some(s) = &step {
        if s.len() != n {
            return Err(ShapingError::StepCount { expected: n, got: s.len() });
        }
    }
    let format_valid = validate_trajectory(traj, &config.limits).iter().all(|v| !v.is_structural());
    let f1 = score_answer(prediction, &traj.question.answers)?.f1;
    let outcome = if format_valid { config.outcome.outcome_reward_scale * f1 } else { config.outcome.format_penalty };

    let components: Vec<TurnComponents> = (0..n)
        .map(|i| TurnComponents {
            pica_deployed: step.as_ref().map_or(0.0, |s| s[i].deployed),
            penalty: step_penalty(i + 1, penalty),
            outcome: if i + 1 == n { outcome } else { 0.0 },
        })
        .collect();
    let rewards = components.iter().map(|c| c.pica_deployed - c.penalty + c.outcome).collect();
    // Anchors only depend on token layout, so vocabulary bounds are irrelevant here.
    let vocab = Vocabulary::new(0, 0);
    let anchors = tokenize_with_mask(traj, &vocab).anchors();
    Ok(TurnRewardSchedule { rewards, anchors, components, step, f1, format_valid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward_model::FeatureConfig;
    use crate::trajectory::{alma_mater_fixture, Marker, Turn};
    use crate::world::{EntityId, Fact, Query, RelationId};

    #[test]
    fn penalty_values() {
        let s = PenaltySchedule::default();
        assert_eq!(step_penalty(1, &s), 0.0);
        assert_eq!(step_penalty(2, &s), 0.0);
        assert!((step_penalty(3, &s) - 0.1).abs() < 1e-15);
        assert!((step_penalty(5, &s) - 0.144).abs() < 1e-12);
        let strong = PenaltySchedule::new(0.5, 1.5).unwrap();
        for t in 3..10 {
            assert!(step_penalty(t + 1, &strong) > step_penalty(t, &strong));
        }
    }

    #[test]
    fn penalty_ranges_are_enforced() {
        assert!(matches!(PenaltySchedule::new(0.1, 1.6), Err(ShapingError::PenaltyRange { name: "alpha", .. })));
        assert!(matches!(PenaltySchedule::new(0.6, 1.2), Err(ShapingError::PenaltyRange { name: "lambda", .. })));
        assert!(serde_json::from_str::<PenaltySchedule>(r#"{"lambda":0.1,"alpha":0.9}"#).is_err());
        let ok: PenaltySchedule = serde_json::from_str(r#"{"lambda":0.2,"alpha":1.1}"#).unwrap();
        assert_eq!((ok.lambda(), ok.alpha()), (0.2, 1.1));
    }

    #[test]
    fn outcome_values() {
        let c = OutcomeConfig::default();
        assert_eq!(outcome_reward("1873", &["1873"], true, &c).unwrap(), 1.5);
        assert_eq!(outcome_reward("x", &["y"], false, &c).unwrap(), -1.0);
        let r = outcome_reward("the university of kansas", &["university of kansas"], true, &c).unwrap();
        assert!((r - 1.5 * 6.0 / 7.0).abs() < 1e-12);
        assert!(outcome_reward::<&str>("x", &[], true, &c).is_err());
    }

    #[test]
    fn fixture_schedule_composes_components() {
        let (_, traj) = alma_mater_fixture();
        let params = RewardModelParams::zeros(FeatureConfig::default());
        let s = assemble_turn_rewards(&traj, Some(&params), &PenaltySchedule::default(), &ShapingConfig::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.format_valid);
        let c = -0.03;
        let expected = [c, c, c - 0.1 + 1.5];
        for (r, e) in s.rewards.iter().zip(expected) {
            assert!((r - e).abs() < 1e-12);
        }
        assert_eq!(s.components.iter().filter(|c| c.outcome != 0.0).count(), 1);
    }

    #[test]
    fn five_turn_schedule_with_constant_step_reward() {
        let (_, fixture) = alma_mater_fixture();
        let mut turns: Vec<Turn> = (0..4).map(|i| fixture.turns[i % 2].clone()).collect();
        turns.push(fixture.turns[2].clone());
        let traj = Trajectory::new(fixture.question.clone(), turns, vec![true, true, false, false]);
        let params = RewardModelParams::zeros(FeatureConfig::default());
        let s = assemble_turn_rewards(&traj, Some(&params), &PenaltySchedule::default(), &ShapingConfig::default()).unwrap();
        let c = -0.03;
        let expected = [c, c, c - 0.1, c - 0.12, c - 0.144 + 1.5];
        for (r, e) in s.rewards.iter().zip(expected) {
            assert!((r - e).abs() < 1e-12, "{r} vs {e}");
        }
        let flat = assemble_turn_rewards(&traj, Some(&params), &PenaltySchedule::disabled(), &ShapingConfig::default()).unwrap();
        assert!(flat.components.iter().all(|c| c.penalty == 0.0));
    }

    #[test]
    fn direct_answer_schedule() {
        let (_, fixture) = alma_mater_fixture();
        let traj = Trajectory::new(fixture.question.clone(), vec![Turn::answer(vec![], "1873")], vec![]);
        let params = RewardModelParams::zeros(FeatureConfig::default());
        let s = assemble_turn_rewards(&traj, Some(&params), &PenaltySchedule::default(), &ShapingConfig::default()).unwrap();
        assert_eq!(s.rewards.len(), 1);
        assert!((s.rewards[0] - (s.components[0].pica_deployed + 1.5)).abs() < 1e-15);
    }

    #[test]
    fn anchors_point_at_closing_markers() {
        let (_, traj) = alma_mater_fixture();
        let s = assemble_turn_rewards(&traj, None, &PenaltySchedule::disabled(), &ShapingConfig::default()).unwrap();
        let tok = tokenize_with_mask(&traj, &Vocabulary::new(3, 6));
        for (i, &a) in s.anchors.iter().enumerate() {
            let want = if i + 1 < traj.turns.len() { Marker::SearchClose } else { Marker::AnswerClose };
            assert_eq!(tok.tokens[a].id, want as u32);
            assert_eq!(tok.mask[a], 1);
        }
    }

    #[test]
    fn missing_answer_is_an_error() {
        let (_, fixture) = alma_mater_fixture();
        let q = Query::new(EntityId(0), RelationId(0));
        let turns = vec![Turn::search(vec![], q, vec![Fact::new(EntityId(0), RelationId(0), EntityId(1))])];
        let traj = Trajectory::new(fixture.question, turns, vec![true]);
        let err = assemble_turn_rewards(&traj, None, &PenaltySchedule::default(), &ShapingConfig::default());
        assert!(matches!(err, Err(ShapingError::NoFinalAnswer)));
    }

    #[test]
    fn malformed_trajectory_gets_format_penalty() {
        let (_, mut traj) = alma_mater_fixture();
        traj.turns[0].answer = Some("oops".into());
        let s = assemble_turn_rewards(&traj, None, &PenaltySchedule::disabled(), &ShapingConfig::default()).unwrap();
        assert!(!s.format_valid);
        assert_eq!(*s.rewards.last().unwrap(), -1.0);
    }
}
