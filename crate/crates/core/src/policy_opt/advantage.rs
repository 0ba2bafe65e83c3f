use serde::{Deserialize, Serialize};

use super::{PolicyError, PpoConfig};
use crate::shaping::TurnRewardSchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageTrace {
    /// One-step advantages `A_t = R_t + γV(s_{t+1}) − V(s_t)`.
    pub turn: Vec<f64>,
    /// `Ã_t = Σ_l (γλ)^l A_{t+l}`.
    pub discounted: Vec<f64>,
    /// Discounted reward-to-go, the critic target.
    pub returns: Vec<f64>,
    pub gamma: f64,
    pub lambda_gae: f64,
}

impl AdvantageTrace {
    /// `Ã` for every token, given each token's turn index.
    pub fn broadcast(&self, turn_of: &[usize]) -> Vec<f64> {
        turn_of.iter().map(|&t| self.discounted[t]).collect()
    }
}

pub fn advantage_from_rewards(rewards: &[f64], values: &[f64], gamma: f64, lambda_gae: f64) -> Result<AdvantageTrace, PolicyError> {
    if rewards.len() != values.len() {
        return Err(PolicyError::LengthMismatch { rewards: rewards.len(), values: values.len() });
    }
    let n = rewards.len();
    let turn: Vec<f64> = (0..n)
        .map(|t| {
            let next = if t + 1 < n { values[t + 1] } else { 0.0 };
            rewards[t] + gamma * next - values[t]
        })
        .collect();
    let mut discounted = vec![0.0; n];
    let mut returns = vec![0.0; n];
    let (mut acc, mut ret) = (0.0, 0.0);
    for t in (0..n).rev() {
        acc = turn[t] + gamma * lambda_gae * acc;
        ret = rewards[t] + gamma * ret;
        discounted[t] = acc;
        returns[t] = ret;
    }
    Ok(AdvantageTrace { turn, discounted, returns, gamma, lambda_gae })
}

pub fn advantage_trace(schedule: &TurnRewardSchedule, values: &[f64], config: &PpoConfig) -> Result<AdvantageTrace, PolicyError> {
    advantage_from_rewards(&schedule.rewards, values, config.gamma, config.lambda_gae)
}
