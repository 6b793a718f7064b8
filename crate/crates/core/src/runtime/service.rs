use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::pipeline::{build_pipeline, parallel_process, process_items, BatchContext, ExecutablePipeline, StageOutput};
use super::{Result, RuntimeError};
use crate::access::{Actor, Role};
use crate::acquisition::{
    next_batch_from, open_source, publish_result, run_vsas_from, IrKind, IrRecord, ResultRecord,
};
use crate::broker::ServiceTopics;
use crate::catalog::{Catalog, CatalogError, ServiceMode, ServiceSpec};
use crate::framewire::{decode_minibatch, Compression};
use crate::knowledge::KnowledgeBase;
use crate::stages::{DataKind, Item};
use crate::userspace::{ObjectRef, UserspaceError};

/// Where a run loop stands when the fault hook is consulted: results for the
/// message at `offset` are published and recorded but not yet committed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultPoint {
    pub service_id: String,
    pub topic: String,
    pub offset: u64,
    pub batch_seq: u64,
}

/// Returns `true` to abort the loop at the given point.
pub type FaultHook = Arc<dyn Fn(&FaultPoint) -> bool + Send + Sync>;

#[derive(Clone, Default)]
pub struct RunOptions {
    pub max_batches: Option<u64>,
    /// Worker threads per batch; 0 is treated as 1.
    pub n_workers: usize,
    pub fault: Option<FaultHook>,
}

impl fmt::Debug for RunOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunOptions")
            .field("max_batches", &self.max_batches)
            .field("n_workers", &self.n_workers)
            .field("fault", &self.fault.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub batches: u64,
    pub ir: u64,
    pub anomalies: u64,
}

impl RunSummary {
    fn add(&mut self, out: &StageOutput) {
        self.batches += 1;
        self.ir += out.ir.len() as u64;
        self.anomalies += out.anomalies.len() as u64;
    }
}

fn service(catalog: &Catalog, service_id: &str) -> Result<ServiceSpec> {
    catalog
        .service(service_id)
        .ok_or_else(|| RuntimeError::UnknownService(service_id.to_string()))
}

fn pipeline_for(catalog: &Catalog, spec: &ServiceSpec) -> Result<ExecutablePipeline> {
    build_pipeline(spec, catalog, catalog.userspaces().map(|s| s.as_ref()))
}

/// Publishes (when `publish`), records and maps every output record.
fn deliver(catalog: &Catalog, knowledge: Option<&KnowledgeBase>, out: &StageOutput, publish: bool) -> Result<()> {
    if publish {
        for r in &out.ir {
            publish_result(&ResultRecord::Ir(r.clone()), catalog.broker())?;
        }
        for a in &out.anomalies {
            publish_result(&ResultRecord::Anomaly(a.clone()), catalog.broker())?;
        }
    }
    for r in &out.ir {
        catalog.record_ir(r)?;
    }
    for a in &out.anomalies {
        catalog.record_anomaly(a)?;
    }
    if let Some(kb) = knowledge {
        for r in &out.ir {
            kb.ingest(r)?;
        }
    }
    Ok(())
}

fn check_fault(opts: &RunOptions, point: FaultPoint) -> Result<()> {
    match &opts.fault {
        Some(hook) if hook(&point) => Err(RuntimeError::InjectedFault(point)),
        _ => Ok(()),
    }
}

/// Consumes `RIVA_<id>` with group `svc_<id>` until caught up or
/// `max_batches` are done. Each batch's results are published and recorded
/// before its offset is committed, so a failed run is picked up again from
/// the last commit.
pub fn run_service(
    service_id: &str,
    catalog: &Catalog,
    knowledge: Option<&KnowledgeBase>,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let spec = service(catalog, service_id)?;
    if spec.mode != ServiceMode::Riva {
        return Err(RuntimeError::KindMismatch(format!("service {service_id} is not a RIVA service")));
    }
    if catalog.active_subscriptions(service_id).is_empty() {
        return Err(RuntimeError::NoSubscription(service_id.to_string()));
    }
    let p = pipeline_for(catalog, &spec)?;
    let broker = catalog.broker();
    let topic = ServiceTopics::for_service(service_id).stream;
    let group = format!("svc_{service_id}");
    broker.reset_to_committed(&group, &topic)?;

    let mut summary = RunSummary::default();
    while opts.max_batches.is_none_or(|m| summary.batches < m) {
        let Some(c) = next_batch_from(&group, &topic, broker)? else {
            break;
        };
        let out = parallel_process(&p, &c.batch, opts.n_workers)?;
        deliver(catalog, knowledge, &out, true)?;
        check_fault(
            opts,
            FaultPoint {
                service_id: service_id.to_string(),
                topic: topic.clone(),
                offset: c.offset,
                batch_seq: c.batch.batch_seq,
            },
        )?;
        broker.commit(&group, &topic, c.offset as i64)?;
        summary.add(&out);
    }
    Ok(summary)
}

/// Processes stored SVB1 objects as batches, in order. Results go to the
/// catalog only.
pub fn run_biva(
    service_id: &str,
    objects: &[ObjectRef],
    catalog: &Catalog,
    knowledge: Option<&KnowledgeBase>,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let spec = service(catalog, service_id)?;
    if spec.mode != ServiceMode::Biva {
        return Err(RuntimeError::KindMismatch(format!("service {service_id} is not a BIVA service")));
    }
    let p = pipeline_for(catalog, &spec)?;
    let mut summary = RunSummary::default();
    if objects.is_empty() {
        return Ok(summary);
    }
    let spaces = catalog
        .userspaces()
        .ok_or_else(|| UserspaceError::NoUserSpace(objects[0].user_id.clone()))?;
    for obj in objects {
        if opts.max_batches.is_some_and(|m| summary.batches >= m) {
            break;
        }
        let reader = Actor::new(obj.user_id.clone(), Role::Consumer);
        let bytes = spaces.get_object(&reader, &obj.user_id, obj.space, &obj.path)?;
        let batch = decode_minibatch(&bytes).map_err(|e| RuntimeError::Decode {
            object: format!("{}/{}/{}", obj.user_id, obj.space, obj.path),
            reason: e.to_string(),
        })?;
        let out = parallel_process(&p, &batch, opts.n_workers)?;
        deliver(catalog, knowledge, &out, false)?;
        summary.add(&out);
    }
    Ok(summary)
}

/// A downstream service consuming an upstream service's feature IR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainBinding {
    pub upstream_id: String,
    pub downstream_id: String,
    pub topic: String,
    pub group: String,
    /// Only feature records from this algorithm are consumed when set.
    #[serde(default)]
    pub algorithm_id: Option<String>,
}

pub fn chain_services(upstream_id: &str, downstream_id: &str, catalog: &Catalog) -> Result<ChainBinding> {
    let up = service(catalog, upstream_id)?;
    let down = service(catalog, downstream_id)?;
    if up.mode != ServiceMode::Riva || down.mode != ServiceMode::Riva {
        return Err(RuntimeError::KindMismatch("only RIVA services can be chained".into()));
    }
    let first = down
        .pipeline
        .first()
        .and_then(|s| catalog.algorithm(&s.algorithm_id))
        .ok_or_else(|| RuntimeError::UnknownAlgorithm(format!("first stage of service {downstream_id}")))?;
    if first.input_kind != DataKind::Vectors {
        return Err(RuntimeError::KindMismatch(format!(
            "service {downstream_id} reads {}, chained input is VECTORS",
            first.input_kind
        )));
    }
    Ok(ChainBinding {
        upstream_id: upstream_id.to_string(),
        downstream_id: downstream_id.to_string(),
        topic: ServiceTopics::for_service(upstream_id).ir,
        group: format!("chain_{downstream_id}"),
        algorithm_id: None,
    })
}

/// Runs the downstream side of a chain: each upstream feature record becomes
/// one vector item, processed and delivered as in [`run_service`]. Other
/// records are skipped. `batches` counts consumed messages.
pub fn run_chain(
    binding: &ChainBinding,
    catalog: &Catalog,
    knowledge: Option<&KnowledgeBase>,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let spec = service(catalog, &binding.downstream_id)?;
    let p = pipeline_for(catalog, &spec)?;
    if p.input_kind() != DataKind::Vectors {
        return Err(RuntimeError::KindMismatch(format!(
            "service {} reads {}",
            binding.downstream_id,
            p.input_kind()
        )));
    }
    let broker = catalog.broker();
    broker.reset_to_committed(&binding.group, &binding.topic)?;

    let mut summary = RunSummary::default();
    while opts.max_batches.is_none_or(|m| summary.batches < m) {
        let Some(msg) = broker.poll(&binding.group, &binding.topic, 1)?.into_iter().next() else {
            break;
        };
        let rec = IrRecord::from_json(&msg.payload).map_err(|reason| RuntimeError::Decode {
            object: format!("{}@{}", binding.topic, msg.offset),
            reason,
        })?;
        let wanted = rec.kind == IrKind::Feature
            && binding.algorithm_id.as_ref().is_none_or(|a| *a == rec.algorithm_id);
        let out = match rec.vector {
            Some(v) if wanted => {
                let ctx = BatchContext {
                    source_id: rec.source_id.clone(),
                    batch_seq: rec.batch_seq,
                    start_ts_micros: rec.ts_micros,
                    frame_interval_micros: 0,
                };
                process_items(&p, &ctx, vec![Item::from_vector(rec.frame_index, v)], 1)?
            }
            _ => StageOutput::default(),
        };
        deliver(catalog, knowledge, &out, true)?;
        check_fault(
            opts,
            FaultPoint {
                service_id: binding.downstream_id.clone(),
                topic: binding.topic.clone(),
                offset: msg.offset,
                batch_seq: rec.batch_seq,
            },
        )?;
        broker.commit(&binding.group, &binding.topic, msg.offset as i64)?;
        summary.add(&out);
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub batches: u64,
    pub frames: u64,
    pub first_seq: u64,
}

/// Streams up to `frames` frames of a source onto `RIVA_<service_id>`. The
/// actor must be able to read the source and the pair must have an active
/// subscription. Batch numbering continues from the source's last batch on
/// the topic.
pub fn ingest(
    catalog: &Catalog,
    actor: &str,
    service_id: &str,
    source_id: &str,
    frames: Option<u64>,
    batch_size: usize,
    compression: Compression,
) -> Result<IngestSummary> {
    let me = catalog.actor(actor)?;
    let src = catalog
        .source(source_id)
        .ok_or_else(|| CatalogError::UnknownSource(source_id.to_string()))?;
    if !src.readable_by(&me.user_id, me.role) {
        return Err(RuntimeError::AccessDenied(format!("source {source_id} is not readable by {actor}")));
    }
    let spec = service(catalog, service_id)?;
    if spec.mode != ServiceMode::Riva {
        return Err(RuntimeError::KindMismatch(format!("service {service_id} is not a RIVA service")));
    }
    if !catalog
        .active_subscriptions(service_id)
        .iter()
        .any(|s| s.source_id == source_id)
    {
        return Err(RuntimeError::NoSubscription(service_id.to_string()));
    }

    let broker = catalog.broker();
    let topic = ServiceTopics::for_service(service_id).stream;
    let first_seq = broker
        .find_last(&topic, |m| {
            decode_minibatch(&m.payload)
                .ok()
                .filter(|b| b.source_id == source_id)
                .map(|b| b.batch_seq + 1)
        })?
        .unwrap_or(0);
    let mut handle = open_source(&src.spec)?;
    if let Some(n) = frames {
        handle = handle.limit(n);
    }
    let batches = run_vsas_from(&mut handle, service_id, batch_size, compression, broker, first_seq)?;
    Ok(IngestSummary {
        batches,
        frames: handle.frames_produced(),
        first_seq,
    })
}
