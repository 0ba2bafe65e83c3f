use pica_core::reward_model::StepReward;
use pica_core::trajectory::Trajectory;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardRequest {
    pub trajectories: Vec<Trajectory>,
}

/// Reward for 1-based turn `turn`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnReward {
    pub turn: usize,
    pub raw: f64,
    pub normalized: f64,
    pub deployed: f64,
}

impl TurnReward {
    pub fn new(turn: usize, r: StepReward) -> Self {
        Self { turn, raw: r.raw, normalized: r.normalized, deployed: r.deployed }
    }

    pub fn step(&self) -> StepReward {
        StepReward { raw: self.raw, normalized: self.normalized, deployed: self.deployed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardResponse {
    pub rewards: Vec<Vec<TurnReward>>,
    pub model_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
