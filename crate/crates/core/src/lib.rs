//! Pivot-based credit assignment for multi-hop search agents, at desk scale.
//!
//! The crate is organised along the training pipeline:
//!
//! - [`world`]: synthetic knowledge graphs, tasks, noisy retrieval, answer
//!   scoring and the exact pivot oracle.
//! - [`trajectory`]: turns, token masks, validation and JSONL storage.
//! - [`datagen`]: scripted behaviour rollouts labelled by the oracle.
//! - [`reward_model`]: the success-probability estimator and its losses.
//! - [`shaping`]: per-turn reward schedules (step reward, penalty, outcome).
//! - [`policy_opt`]: linear-softmax search policy, advantages and masked PPO.

pub mod datagen;
pub mod policy_opt;
pub mod reward_model;
pub mod seed;
pub mod shaping;
pub mod trajectory;
pub mod view;
pub mod world;
