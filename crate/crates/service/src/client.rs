use std::time::Duration;

use pica_core::reward_model::StepReward;
use pica_core::shaping::{SourceError, StepRewardSource};
use pica_core::trajectory::Trajectory;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Serialize;
use thiserror::Error;
use tracing::warn;

use crate::wire::{ErrorBody, Health, RewardResponse};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error after {attempts} attempts to {url}: {message}")]
    Transport { url: String, attempts: usize, message: String },
    #[error("request rejected: {0}")]
    Validation(String),
    #[error("service error {status}: {message}")]
    Service { status: u16, message: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

/// Blocking client for `/get_reward`.
#[derive(Clone, Debug)]
pub struct RewardClient {
    url: String,
    http: Client,
    attempts: usize,
    backoff: Duration,
}

fn with_scheme(endpoint: &str) -> String {
    if endpoint.contains("://") {
        endpoint.to_string()
    } else {
        format!("http://{endpoint}")
    }
}

impl RewardClient {
    /// `endpoint` may omit the scheme, e.g. `localhost:5000/get_reward`.
    pub fn new(endpoint: &str) -> Self {
        let http = Client::builder().timeout(Duration::from_secs(60)).build().expect("http client builds");
        Self { url: with_scheme(endpoint), http, attempts: 3, backoff: Duration::from_millis(100) }
    }

    pub fn with_attempts(mut self, attempts: usize) -> Self {
        self.attempts = attempts.max(1);
        self
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn get_rewards(&self, trajectories: &[Trajectory]) -> Result<RewardResponse, ClientError> {
        #[derive(Serialize)]
        struct Req<'a> {
            trajectories: &'a [Trajectory],
        }
        let body = serde_json::to_vec(&Req { trajectories }).map_err(|e| ClientError::Decode(e.to_string()))?;
        let bytes = self.send(&self.url, || self.http.post(&self.url).header("content-type", "application/json").body(body.clone()))?;
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub fn health(&self) -> Result<Health, ClientError> {
        let url = reqwest::Url::parse(&self.url).and_then(|u| u.join("/healthz")).map_err(|e| ClientError::Transport {
            url: self.url.clone(),
            attempts: 0,
            message: e.to_string(),
        })?;
        let bytes = self.send(url.as_str(), || self.http.get(url.clone()))?;
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn send(&self, url: &str, build: impl Fn() -> reqwest::blocking::RequestBuilder) -> Result<Vec<u8>, ClientError> {
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            match build().send() {
                Ok(resp) => {
                    let status = resp.status();
                    let bytes = resp.bytes().map_err(|e| ClientError::Decode(e.to_string()))?.to_vec();
                    if status.is_success() {
                        return Ok(bytes);
                    }
                    let message = serde_json::from_slice::<ErrorBody>(&bytes)
                        .map(|b| b.error)
                        .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
                    if status == StatusCode::BAD_REQUEST {
                        return Err(ClientError::Validation(message));
                    }
                    if !matches!(status, StatusCode::BAD_GATEWAY | StatusCode::SERVICE_UNAVAILABLE | StatusCode::GATEWAY_TIMEOUT) {
                        return Err(ClientError::Service { status: status.as_u16(), message });
                    }
                    last = format!("{status}: {message}");
                }
                Err(e) => last = e.to_string(),
            }
            warn!(attempt, url, error = %last, "reward request failed");
            if attempt < self.attempts {
                std::thread::sleep(self.backoff * attempt as u32);
            }
        }
        Err(ClientError::Transport { url: url.to_string(), attempts: self.attempts, message: last })
    }
}

impl StepRewardSource for RewardClient {
    fn step_rewards(&self, batch: &[Trajectory]) -> Result<Vec<Vec<StepReward>>, SourceError> {
        let resp = self.get_rewards(batch)?;
        if resp.rewards.len() != batch.len() {
            return Err(Box::new(ClientError::Decode(format!("{} reward lists for {} trajectories", resp.rewards.len(), batch.len()))));
        }
        Ok(resp.rewards.into_iter().map(|turns| turns.iter().map(|t| t.step()).collect()).collect())
    }
}
