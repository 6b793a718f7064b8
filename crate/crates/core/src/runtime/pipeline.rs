use std::thread;

use serde::{Deserialize, Serialize};

use super::{Result, RuntimeError};
use crate::access::{Actor, Role};
use crate::acquisition::{AnomalyRecord, IrRecord};
use crate::catalog::{Catalog, ServiceSpec};
use crate::framewire::MiniBatch;
use crate::stages::{BoundStage, DataKind, Item, StageError};
use crate::userspace::{Space, UserSpaces};

/// A type-checked chain of bound stages for one service.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutablePipeline {
    pub service_id: String,
    pub stages: Vec<BoundStage>,
}

impl ExecutablePipeline {
    /// Checks that there is at least one stage and that each stage reads what
    /// the previous one writes.
    pub fn new(service_id: impl Into<String>, stages: Vec<BoundStage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(RuntimeError::PipelineTypeError("pipeline is empty".into()));
        }
        for (i, w) in stages.windows(2).enumerate() {
            if w[0].output != w[1].input {
                return Err(RuntimeError::PipelineTypeError(format!(
                    "stage {} ({}) writes {} but stage {} ({}) reads {}",
                    i,
                    w[0].implementation,
                    w[0].output,
                    i + 1,
                    w[1].implementation,
                    w[1].input
                )));
            }
        }
        Ok(Self {
            service_id: service_id.into(),
            stages,
        })
    }

    pub fn input_kind(&self) -> DataKind {
        self.stages[0].input
    }
}

fn bind_error(algorithm_id: &str, e: StageError) -> RuntimeError {
    match e {
        StageError::UnknownImplementation(name) => RuntimeError::UnknownAlgorithm(format!("{algorithm_id} ({name})")),
        StageError::MissingModel(path) => RuntimeError::MissingModel(path),
        StageError::BadInput(msg) => RuntimeError::PipelineTypeError(format!("{algorithm_id}: {msg}")),
        other => RuntimeError::BadParam(format!("{algorithm_id}: {other}")),
    }
}

/// Resolves every step of `spec` against the catalog, binds parameters and
/// loads models from the owner's model space.
pub fn build_pipeline(spec: &ServiceSpec, catalog: &Catalog, spaces: Option<&UserSpaces>) -> Result<ExecutablePipeline> {
    let owner = Actor::new(spec.owner.clone(), Role::Consumer);
    let mut load = |path: &str| spaces.and_then(|s| s.get_object(&owner, &spec.owner, Space::Model, path).ok());
    let mut stages = Vec::with_capacity(spec.pipeline.len());
    for step in &spec.pipeline {
        let d = catalog
            .algorithm(&step.algorithm_id)
            .ok_or_else(|| RuntimeError::UnknownAlgorithm(step.algorithm_id.clone()))?;
        let stage = BoundStage::bind(
            &d.algorithm_id,
            &d.name,
            d.input_kind,
            Some(&d.params_schema),
            &step.params,
            step.emit_ir,
            &mut load,
        )
        .map_err(|e| bind_error(&d.algorithm_id, e))?;
        stages.push(stage);
    }
    ExecutablePipeline::new(spec.service_id.clone(), stages)
}

/// Provenance stamped on every record produced from one input batch. The
/// timestamp of item `i` is `start_ts_micros + i * frame_interval_micros`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchContext {
    pub source_id: String,
    pub batch_seq: u64,
    pub start_ts_micros: i64,
    pub frame_interval_micros: i64,
}

impl BatchContext {
    pub fn of(b: &MiniBatch) -> Self {
        Self {
            source_id: b.source_id.clone(),
            batch_seq: b.batch_seq,
            start_ts_micros: b.start_ts_micros as i64,
            frame_interval_micros: b.frame_interval_micros as i64,
        }
    }

    fn ts(&self, frame_index: i64) -> i64 {
        self.start_ts_micros + frame_index * self.frame_interval_micros
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageOutput {
    pub ir: Vec<IrRecord>,
    pub anomalies: Vec<AnomalyRecord>,
}

impl StageOutput {
    /// IR lines followed by anomaly lines, as published.
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.ir {
            s.push_str(&r.to_json_line());
            s.push('\n');
        }
        for a in &self.anomalies {
            s.push_str(&a.to_json_line());
            s.push('\n');
        }
        s
    }

    pub fn extend(&mut self, other: StageOutput) {
        self.ir.extend(other.ir);
        self.anomalies.extend(other.anomalies);
    }
}

fn run_stage(stage: &BoundStage, items: Vec<Item>, n_workers: usize) -> Result<Vec<Item>, StageError> {
    let n = items.len();
    let w = n_workers.min(n);
    if w <= 1 || !stage.partitionable() {
        return stage.apply(items);
    }
    let mut chunks = Vec::with_capacity(w);
    let mut rest = items;
    for i in 0..w {
        let size = n / w + usize::from(i < n % w);
        let tail = rest.split_off(size);
        chunks.push(rest);
        rest = tail;
    }
    let results: Vec<Result<Vec<Item>, StageError>> = thread::scope(|s| {
        let handles: Vec<_> = chunks.into_iter().map(|c| s.spawn(move || stage.apply(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("stage worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(n);
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Runs `items` through every stage. Partitionable stages are split into
/// `n_workers` contiguous slices and merged back in order.
pub fn process_items(p: &ExecutablePipeline, ctx: &BatchContext, items: Vec<Item>, n_workers: usize) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let mut items = items;
    for (index, stage) in p.stages.iter().enumerate() {
        items = run_stage(stage, items, n_workers.max(1)).map_err(|source| RuntimeError::Stage {
            index,
            algorithm_id: stage.algorithm_id.clone(),
            source,
        })?;
        if stage.emit_ir {
            for it in &items {
                if let Some(ir) = stage.ir_payload(it) {
                    out.ir.push(IrRecord {
                        service_id: p.service_id.clone(),
                        algorithm_id: stage.algorithm_id.clone(),
                        source_id: ctx.source_id.clone(),
                        batch_seq: ctx.batch_seq,
                        frame_index: it.frame_index,
                        ts_micros: ctx.ts(it.frame_index),
                        kind: ir.kind,
                        vector: ir.vector,
                        label: ir.label,
                        score: ir.score,
                    });
                }
            }
        }
        for it in &items {
            if let Some(d) = &it.detection {
                out.anomalies.push(AnomalyRecord {
                    service_id: p.service_id.clone(),
                    source_id: ctx.source_id.clone(),
                    batch_seq: ctx.batch_seq,
                    frame_index: it.frame_index,
                    anomaly_type: d.anomaly_type.clone(),
                    score: d.score,
                    details: d.details.clone(),
                });
            }
        }
    }
    Ok(out)
}

fn frame_items(p: &ExecutablePipeline, b: &MiniBatch) -> Result<Vec<Item>> {
    if p.input_kind() != DataKind::Frames {
        return Err(RuntimeError::KindMismatch(format!(
            "service {} reads {}, not frames",
            p.service_id,
            p.input_kind()
        )));
    }
    Ok(b.frames
        .iter()
        .enumerate()
        .map(|(i, f)| Item::from_frame(i as i64, f.clone()))
        .collect())
}

pub fn process_batch(p: &ExecutablePipeline, b: &MiniBatch) -> Result<StageOutput> {
    parallel_process(p, b, 1)
}

/// As [`process_batch`], fanning per-frame stages out over `n_workers`
/// threads. The output does not depend on `n_workers`.
pub fn parallel_process(p: &ExecutablePipeline, b: &MiniBatch, n_workers: usize) -> Result<StageOutput> {
    let items = frame_items(p, b)?;
    process_items(p, &BatchContext::of(b), items, n_workers)
}
