//! Serves a frozen reward model over HTTP and fetches rewards from it.
//!
//! `POST /get_reward` takes `{"trajectories": [...]}` and answers with one list of
//! `{"turn", "raw", "normalized", "deployed"}` per trajectory plus the checkpoint's
//! `model_version`. `GET /healthz` reports the same version.

mod client;
mod server;
mod wire;

pub use client::{ClientError, RewardClient};
pub use server::{model_version, router, serve, RewardService, ServerHandle, ServiceConfig, ServiceError};
pub use wire::{ErrorBody, Health, RewardRequest, RewardResponse, TurnReward};
