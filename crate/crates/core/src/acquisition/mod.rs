//! Stream acquisition (VSAS), stream consumption (VSCS) and result publishing
//! (LVSM) around the broker.

mod records;
mod source;

use thiserror::Error;

pub use records::{AnomalyRecord, IrKey, IrKind, IrRecord, ResultRecord};
pub use source::{open_source, Segment, SourceHandle, SourceKind, SourceSpec};

use crate::broker::{Broker, BrokerError, ServiceTopics};
use crate::framewire::{decode_minibatch, encode_minibatch, Compression, MiniBatch, WireError};

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("unknown source kind '{0}'")]
    UnknownKind(String),
    #[error("bad source parameters: {0}")]
    BadParams(String),
    #[error("source path missing or not a directory")]
    MissingPath,
    #[error("source error: {0}")]
    Source(String),
    #[error("batch_size must be positive")]
    BadBatchSize,
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("cannot encode batch: {0}")]
    Encode(WireError),
    #[error("message at offset {offset} on '{topic}' does not decode: {source}")]
    Decode {
        topic: String,
        offset: u64,
        source: WireError,
    },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

/// A batch read from a stream topic together with its broker offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumedBatch {
    pub offset: u64,
    pub batch: MiniBatch,
}

/// Drains `handle` into mini-batches of `batch_size` frames published to
/// `RIVA_<service_id>`. The last partial batch is published too. Returns the
/// number of batches.
pub fn run_vsas(
    handle: &mut SourceHandle,
    service_id: &str,
    batch_size: usize,
    compression: Compression,
    broker: &Broker,
) -> Result<u64, AcquisitionError> {
    run_vsas_from(handle, service_id, batch_size, compression, broker, 0)
}

/// As [`run_vsas`], numbering batches from `first_seq`.
pub fn run_vsas_from(
    handle: &mut SourceHandle,
    service_id: &str,
    batch_size: usize,
    compression: Compression,
    broker: &Broker,
    first_seq: u64,
) -> Result<u64, AcquisitionError> {
    if batch_size == 0 {
        return Err(AcquisitionError::BadBatchSize);
    }
    let topic = ServiceTopics::for_service(service_id).stream;
    broker.topic(&topic)?;

    let interval = handle.frame_interval_micros();
    let start = handle.start_ts_micros();
    let source_id = handle.source_id().to_string();
    let mut seq = first_seq;
    let mut frame_no = handle.frames_produced();
    let mut published = 0;
    loop {
        let mut frames = Vec::with_capacity(batch_size);
        while frames.len() < batch_size {
            match handle.next_frame()? {
                Some(f) => frames.push(f),
                None => break,
            }
        }
        if frames.is_empty() {
            break;
        }
        let n = frames.len() as u64;
        let batch = MiniBatch {
            source_id: source_id.clone(),
            batch_seq: seq,
            start_ts_micros: start + frame_no * interval as u64,
            frame_interval_micros: interval,
            frames,
            compression,
        };
        let bytes = encode_minibatch(&batch).map_err(AcquisitionError::Encode)?;
        broker.publish(&topic, Some(&source_id), &bytes)?;
        published += 1;
        seq += 1;
        frame_no += n;
        if n < batch_size as u64 {
            break;
        }
    }
    Ok(published)
}

/// Reads and decodes the group's next batch from `RIVA_<service_id>`, or
/// `None` when the group has caught up.
pub fn next_batch(group_id: &str, service_id: &str, broker: &Broker) -> Result<Option<ConsumedBatch>, AcquisitionError> {
    let topic = ServiceTopics::for_service(service_id).stream;
    next_batch_from(group_id, &topic, broker)
}

pub fn next_batch_from(group_id: &str, topic: &str, broker: &Broker) -> Result<Option<ConsumedBatch>, AcquisitionError> {
    let Some(msg) = broker.poll(group_id, topic, 1)?.into_iter().next() else {
        return Ok(None);
    };
    let batch = decode_minibatch(&msg.payload).map_err(|source| AcquisitionError::Decode {
        topic: topic.to_string(),
        offset: msg.offset,
        source,
    })?;
    Ok(Some(ConsumedBatch {
        offset: msg.offset,
        batch,
    }))
}

/// Publishes an IR record to `RIVA_IR_<sid>` or an anomaly to `RIVA_A_<sid>`
/// as one line of JSON.
pub fn publish_result(record: &ResultRecord, broker: &Broker) -> Result<u64, AcquisitionError> {
    let topics = ServiceTopics::for_service(record.service_id());
    let (topic, line, key) = match record {
        ResultRecord::Ir(r) => {
            r.validate().map_err(AcquisitionError::InvalidRecord)?;
            (topics.ir, r.to_json_line(), &r.source_id)
        }
        ResultRecord::Anomaly(r) => {
            r.validate().map_err(AcquisitionError::InvalidRecord)?;
            (topics.anomalies, r.to_json_line(), &r.source_id)
        }
    };
    Ok(broker.publish(&topic, Some(key), line.as_bytes())?)
}
