//! HTTP service and command-line client over the siat platform: every
//! endpoint delegates to one catalog, runtime, knowledge or object-store
//! operation.

mod app;
pub mod cli;
mod error;
mod server;
mod sessions;

use thiserror::Error;

pub use app::{default_data_dir, ApiRequest, ApiResponse, App, Method};
pub use error::ApiError;
pub use server::{spawn, ServerHandle, TOKEN_HEADER};
pub use sessions::{now_secs, Session, Sessions, DEFAULT_TTL_SECS};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("address {0} is already in use")]
    PortInUse(String),
    #[error("data directory unusable: {0}")]
    DataDir(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
