//! Executes services as typed stage chains over consumed batches.

mod pipeline;
mod service;

use thiserror::Error;

use crate::acquisition::AcquisitionError;
use crate::broker::BrokerError;
use crate::catalog::CatalogError;
use crate::knowledge::KnowledgeError;
use crate::stages::StageError;
use crate::userspace::UserspaceError;

pub use pipeline::{build_pipeline, parallel_process, process_batch, process_items, BatchContext, ExecutablePipeline, StageOutput};
pub use service::{
    chain_services, ingest, run_biva, run_chain, run_service, ChainBinding, FaultHook, FaultPoint, IngestSummary, RunOptions,
    RunSummary,
};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("unknown service '{0}'")]
    UnknownService(String),
    #[error("unknown algorithm '{0}'")]
    UnknownAlgorithm(String),
    #[error("pipeline type error: {0}")]
    PipelineTypeError(String),
    #[error("missing model '{0}'")]
    MissingModel(String),
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("stage {index} ({algorithm_id}) failed: {source}")]
    Stage {
        index: usize,
        algorithm_id: String,
        source: StageError,
    },
    #[error("service {0} has no active subscription")]
    NoSubscription(String),
    #[error("kind mismatch: {0}")]
    KindMismatch(String),
    #[error("object {object} does not decode: {reason}")]
    Decode { object: String, reason: String },
    #[error("fault injected at {0:?}")]
    InjectedFault(FaultPoint),
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Userspace(#[from] UserspaceError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

pub type Result<T, E = RuntimeError> = std::result::Result<T, E>;

#[cfg(test)]
mod tests;
