use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use pica_core::reward_model::{step_rewards, RewardModelError, RewardModelParams, RewardScaling, RmCheckpoint};
use pica_core::trajectory::{validate_trajectory, Limits};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::oneshot;
use tracing::{debug, info};

use crate::wire::{ErrorBody, Health, RewardRequest, RewardResponse, TurnReward};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("reading checkpoint {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error(transparent)]
    Checkpoint(#[from] RewardModelError),
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server: {0}")]
    Server(std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceConfig {
    pub max_batch: usize,
    pub scaling: RewardScaling,
    pub limits: Limits,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { max_batch: 256, scaling: RewardScaling::default(), limits: Limits::default() }
    }
}

/// Hex SHA-256 of the checkpoint bytes.
pub fn model_version(checkpoint_bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(checkpoint_bytes))
}

/// Immutable snapshot of a reward model plus the request limits.
#[derive(Debug)]
pub struct RewardService {
    params: RewardModelParams,
    model_version: String,
    config: ServiceConfig,
}

impl RewardService {
    pub fn from_checkpoint_bytes(bytes: &[u8], config: ServiceConfig) -> Result<Self, ServiceError> {
        let ckpt = RmCheckpoint::from_slice(bytes, "<request>")?;
        Ok(Self { params: ckpt.params, model_version: model_version(bytes), config })
    }

    pub fn from_path(path: &Path, config: ServiceConfig) -> Result<Self, ServiceError> {
        let bytes = std::fs::read(path).map_err(|source| ServiceError::Read { path: path.display().to_string(), source })?;
        let ckpt = RmCheckpoint::from_slice(&bytes, &path.display().to_string())?;
        Ok(Self { params: ckpt.params, model_version: model_version(&bytes), config })
    }

    pub fn model_version(&self) -> &str {
        &self.model_version
    }

    pub fn params(&self) -> &RewardModelParams {
        &self.params
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Handles a raw request body; returns the status and the JSON body.
    pub fn handle(&self, body: &[u8]) -> (StatusCode, Vec<u8>) {
        match self.rewards(body) {
            Ok(resp) => (StatusCode::OK, to_json(&resp)),
            Err((status, error)) => (status, to_json(&ErrorBody { error })),
        }
    }

    fn rewards(&self, body: &[u8]) -> Result<RewardResponse, (StatusCode, String)> {
        let de = &mut serde_json::Deserializer::from_slice(body);
        let req: RewardRequest = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let msg = if path == "." { e.inner().to_string() } else { format!("{path}: {}", e.inner()) };
            (StatusCode::BAD_REQUEST, msg)
        })?;
        if req.trajectories.len() > self.config.max_batch {
            return Err((
                StatusCode::PAYLOAD_TOO_LARGE,
                format!("batch of {} trajectories exceeds the limit of {}", req.trajectories.len(), self.config.max_batch),
            ));
        }
        let mut rewards = Vec::with_capacity(req.trajectories.len());
        for (i, traj) in req.trajectories.iter().enumerate() {
            let violations = validate_trajectory(traj, &self.config.limits);
            if !violations.is_empty() {
                let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
                return Err((StatusCode::BAD_REQUEST, format!("trajectories[{i}]: {}", list.join("; "))));
            }
            let steps = step_rewards(&self.params, traj, &self.config.scaling)
                .map_err(|e| (StatusCode::BAD_REQUEST, format!("trajectories[{i}]: {e}")))?;
            rewards.push(steps.into_iter().enumerate().map(|(t, r)| TurnReward::new(t + 1, r)).collect());
        }
        Ok(RewardResponse { rewards, model_version: self.model_version.clone() })
    }
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("response serializes")
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn get_reward(State(svc): State<Arc<RewardService>>, body: Bytes) -> Response {
    let (status, body) = svc.handle(&body);
    debug!(%status, bytes = body.len(), "get_reward");
    json_response(status, body)
}

async fn healthz(State(svc): State<Arc<RewardService>>) -> Response {
    json_response(StatusCode::OK, to_json(&Health { status: "ok".into(), model_version: svc.model_version.clone() }))
}

pub fn router(service: Arc<RewardService>) -> Router {
    Router::new()
        .route("/get_reward", post(get_reward))
        .route("/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(256 * 1024 * 1024))
        .with_state(service)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    service: Arc<RewardService>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    info!(addr = ?listener.local_addr().ok(), version = %service.model_version, "serving reward model");
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await.map_err(ServiceError::Server)
}

/// A server running on its own thread and runtime; stops when dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), ServiceError>>>,
}

impl ServerHandle {
    pub fn start(service: Arc<RewardService>, addr: &str) -> Result<Self, ServiceError> {
        let bind_err = |source| ServiceError::Bind { addr: addr.to_string(), source };
        let std_listener = std::net::TcpListener::bind(addr).map_err(bind_err)?;
        std_listener.set_nonblocking(true).map_err(bind_err)?;
        let local = std_listener.local_addr().map_err(bind_err)?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().map_err(ServiceError::Server)?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).map_err(ServiceError::Server)?;
                serve(service, listener, async {
                    let _ = rx.await;
                })
                .await
            })
        });
        Ok(Self { addr: local, stop: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}/get_reward", self.addr)
    }

    /// Stops the server and waits for it.
    pub fn shutdown(mut self) -> Result<(), ServiceError> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> Result<(), ServiceError> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}
