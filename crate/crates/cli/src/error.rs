use std::path::Path;

use pica_core::policy_opt::PolicyError;
use pica_service::ClientError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("missing {what}: {detail}")]
    Missing { what: &'static str, detail: String },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("{0}")]
    Transport(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub const CONFIG: u8 = 2;
    pub const MISSING: u8 = 3;
    pub const DIVERGENCE: u8 = 4;
    pub const TRANSPORT: u8 = 5;

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => Self::CONFIG,
            CliError::Missing { .. } => Self::MISSING,
            CliError::Divergence(_) => Self::DIVERGENCE,
            CliError::Transport(_) => Self::TRANSPORT,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn missing_file(what: &'static str, path: &Path) -> Self {
        CliError::Missing { what, detail: format!("{} does not exist", path.display()) }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::Divergence { .. } => CliError::Divergence(e.to_string()),
            PolicyError::MissingRewardModel => {
                CliError::Missing { what: "reward model", detail: "the pica arm needs --checkpoint or --remote".into() }
            }
            PolicyError::InvalidConfig(m) => CliError::Usage(m),
            PolicyError::RewardSource(src) => match src.downcast_ref::<ClientError>() {
                Some(ClientError::Transport { .. }) => CliError::Transport(src.to_string()),
                _ => CliError::Runtime(anyhow::anyhow!("reward service: {src}")),
            },
            other => CliError::Runtime(other.into()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Transport { .. } => CliError::Transport(e.to_string()),
            other => CliError::Runtime(other.into()),
        }
    }
}
