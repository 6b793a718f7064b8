use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde_json::json;

use super::*;
use crate::access::Role;
use crate::acquisition::{run_vsas, open_source, IrKind, SourceSpec};
use crate::broker::{Broker, ServiceTopics};
use crate::catalog::{AlgorithmRequest, Catalog, PipelineStep, ServiceMode, ServiceRequest, SourceMode};
use crate::framewire::{encode_minibatch, Compression, Frame, MiniBatch, PixelFormat};
use crate::knowledge::KnowledgeBase;
use crate::mining::KMeansModel;
use crate::stages::{lookup, DataKind};
use crate::userspace::{Space, UserSpaces};
use crate::Actor;

struct Fixture {
    _dir: tempfile::TempDir,
    cat: Catalog,
}

const DEV: &str = "2";
const CON: &str = "3";

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let broker = Arc::new(Broker::in_memory());
    let spaces = Arc::new(UserSpaces::open(dir.path().join("userspace")).unwrap());
    let cat = Catalog::open(dir.path().join("catalog"), broker, Some(spaces)).unwrap();
    cat.register_user("1", "dev", Role::Developer).unwrap();
    cat.register_user("1", "con", Role::Consumer).unwrap();
    Fixture { _dir: dir, cat }
}

fn register(cat: &Catalog, name: &str, input: DataKind) -> String {
    let imp = lookup(name).unwrap();
    cat.register_algorithm(
        DEV,
        AlgorithmRequest {
            name: name.into(),
            version: "1.0".into(),
            stage_kind: imp.stage_kind,
            input_kind: input,
            output_kind: imp.output,
            params_schema: vec![],
        },
    )
    .unwrap()
    .algorithm_id
}

fn service(cat: &Catalog, mode: ServiceMode, steps: Vec<PipelineStep>) -> String {
    cat.create_service(
        DEV,
        ServiceRequest {
            name: None,
            mode,
            pipeline: steps,
        },
    )
    .unwrap()
    .service_id
}

fn scene_source(cat: &Catalog) -> String {
    let spec = SourceSpec::synthetic(
        "",
        json!({"width": 8, "height": 8, "format": "GRAY8",
               "scene_plan": [{"frames": 100, "fill": 0}, {"frames": 100, "fill": 255}]}),
    );
    cat.add_data_source(CON, SourceMode::Stream, spec).unwrap().source_id
}

/// Boundary service subscribed by the consumer: (service id, source id).
fn boundary_service(f: &Fixture) -> (String, String) {
    let g = register(&f.cat, "grayscale", DataKind::Frames);
    let b = register(&f.cat, "boundary-detector", DataKind::Frames);
    let p = register(&f.cat, "promote-boundary", DataKind::Vectors);
    let sid = service(
        &f.cat,
        ServiceMode::Riva,
        vec![
            PipelineStep::new(g, json!({})),
            PipelineStep::new(b, json!({"tau": 50.0})),
            PipelineStep::new(p, json!({})),
        ],
    );
    let src = scene_source(&f.cat);
    f.cat.subscribe(CON, &src, &sid).unwrap();
    (sid, src)
}

fn gray_batch(seq: u64, fills: &[u8]) -> MiniBatch {
    MiniBatch {
        source_id: "cam".into(),
        batch_seq: seq,
        start_ts_micros: 1_000,
        frame_interval_micros: 40_000,
        frames: fills.iter().map(|&v| Frame::filled(4, 4, PixelFormat::Gray8, v)).collect(),
        compression: Compression::None,
    }
}

#[test]
fn build_checks_types_and_models() {
    let f = fixture();
    let g = register(&f.cat, "grayscale", DataKind::Frames);
    let h = register(&f.cat, "histogram", DataKind::Frames);
    let km = register(&f.cat, "kmeans-scorer", DataKind::Vectors);
    let th = register(&f.cat, "threshold", DataKind::Labels);
    let steps = vec![
        PipelineStep::new(&g, json!({})),
        PipelineStep::new(&h, json!({"bins": 8})),
        PipelineStep::new(&km, json!({"model": "m.json"})),
        PipelineStep::new(&th, json!({"theta": 3.0, "type": "outlier"})),
    ];
    let sid = service(&f.cat, ServiceMode::Riva, steps);
    let spec = f.cat.service(&sid).unwrap();
    let spaces = f.cat.userspaces().unwrap();
    assert!(matches!(
        build_pipeline(&spec, &f.cat, Some(spaces)),
        Err(RuntimeError::MissingModel(p)) if p == "m.json"
    ));

    let model = KMeansModel {
        centroids: vec![vec![0.0; 8], vec![1.0; 8]],
        inertia: 0.0,
        iterations: 0,
    };
    let dev = Actor::new(DEV, Role::Developer);
    spaces
        .put_object(&dev, DEV, Space::Model, "m.json", &serde_json::to_vec(&model).unwrap())
        .unwrap();
    let p = build_pipeline(&spec, &f.cat, Some(spaces)).unwrap();
    assert_eq!(p.stages.len(), 4);
    assert_eq!(p.input_kind(), DataKind::Frames);

    let gs = p.stages[0].clone();
    let hs = p.stages[1].clone();
    assert!(matches!(
        ExecutablePipeline::new("x", vec![hs, gs]),
        Err(RuntimeError::PipelineTypeError(_))
    ));
    assert!(matches!(ExecutablePipeline::new("x", vec![]), Err(RuntimeError::PipelineTypeError(_))));
}

#[test]
fn constant_batch_features_and_empty_batch() {
    let f = fixture();
    let g = register(&f.cat, "grayscale", DataKind::Frames);
    let h = register(&f.cat, "histogram", DataKind::Frames);
    let sid = service(
        &f.cat,
        ServiceMode::Riva,
        vec![PipelineStep::new(g, json!({})), PipelineStep::new(h, json!({}))],
    );
    let p = build_pipeline(&f.cat.service(&sid).unwrap(), &f.cat, None).unwrap();
    let out = process_batch(&p, &gray_batch(7, &[9; 5])).unwrap();
    assert_eq!(out.ir.len(), 5);
    assert!(out.anomalies.is_empty());
    assert!(out.ir.iter().all(|r| r.kind == IrKind::Feature && r.vector == out.ir[0].vector));
    assert!(out.ir.iter().all(|r| r.batch_seq == 7 && r.source_id == "cam" && r.service_id == sid));
    assert_eq!(out.ir[2].ts_micros, 1_000 + 2 * 40_000);
    assert_eq!(process_batch(&p, &gray_batch(0, &[])).unwrap(), StageOutput::default());
}

#[test]
fn scene_change_gives_one_anomaly() {
    let f = fixture();
    let (sid, _) = boundary_service(&f);
    let p = build_pipeline(&f.cat.service(&sid).unwrap(), &f.cat, None).unwrap();
    let out = process_batch(&p, &gray_batch(0, &[0, 0, 0, 200, 200, 200])).unwrap();
    assert_eq!(out.anomalies.len(), 1);
    assert_eq!(out.anomalies[0].frame_index, 3);
    assert_eq!(out.anomalies[0].anomaly_type, "shot_boundary");
    assert_eq!(out.anomalies[0].score, 200.0);
}

#[test]
fn worker_count_does_not_change_output() {
    let f = fixture();
    let (sid, _) = boundary_service(&f);
    let h = register(&f.cat, "histogram", DataKind::Frames);
    let g = register(&f.cat, "grayscale", DataKind::Frames);
    let hist = service(
        &f.cat,
        ServiceMode::Riva,
        vec![PipelineStep::new(g, json!({})), PipelineStep::new(h, json!({}))],
    );
    let fills: Vec<u8> = (0..13).map(|i| (i * 19 % 256) as u8).collect();
    let batch = gray_batch(2, &fills);
    for s in [&sid, &hist] {
        let p = build_pipeline(&f.cat.service(s).unwrap(), &f.cat, None).unwrap();
        let base = process_batch(&p, &batch).unwrap().to_json_lines();
        for n in [2, 4, 8, 64] {
            assert_eq!(parallel_process(&p, &batch, n).unwrap().to_json_lines(), base, "n_workers={n}");
        }
    }
}

#[test]
fn run_service_end_to_end() {
    let f = fixture();
    let (sid, src) = boundary_service(&f);
    let kb = KnowledgeBase::default();
    assert!(matches!(
        ingest(&f.cat, DEV, &sid, &src, None, 32, Compression::None),
        Err(RuntimeError::AccessDenied(_))
    ));
    let s = ingest(&f.cat, CON, &sid, &src, Some(96), 32, Compression::Deflate).unwrap();
    assert_eq!((s.batches, s.frames, s.first_seq), (3, 96, 0));

    let opts = RunOptions {
        max_batches: Some(3),
        ..Default::default()
    };
    let sum = run_service(&sid, &f.cat, Some(&kb), &opts).unwrap();
    assert_eq!(sum.batches, 3);
    assert_eq!(sum.anomalies, 0);
    let topic = ServiceTopics::for_service(&sid).stream;
    let st = f.cat.broker().group_state(&format!("svc_{sid}"), &topic).unwrap();
    assert_eq!(st.committed_offset, 2);

    let s = ingest(&f.cat, CON, &sid, &src, None, 32, Compression::None).unwrap();
    assert_eq!(s.first_seq, 3);
    run_service(&sid, &f.cat, Some(&kb), &RunOptions::default()).unwrap();
    // The second ingest replays the source from its first frame.
    let anomalies = f.cat.query_anomalies(CON, &sid, None).unwrap();
    assert_eq!(anomalies.len(), 1);
    let a = &anomalies[0];
    assert_eq!(a.batch_seq * 32 + a.frame_index as u64 - 3 * 32, 100);
    assert_eq!(f.cat.broker().topic_stats(&ServiceTopics::for_service(&sid).anomalies).unwrap().length, 1);
    let rows = kb.query("SELECT ?x WHERE { ?x rdf:type onto:ShotBoundary . }").unwrap();
    assert_eq!(rows.len(), 1);
}

#[test]
fn ingest_sequence_continues_after_broker_replay() {
    let dir = tempfile::tempdir().unwrap();
    let open = |dir: &std::path::Path| {
        let broker = Arc::new(Broker::open(dir.join("broker")).unwrap());
        let spaces = Arc::new(UserSpaces::open(dir.join("userspace")).unwrap());
        Catalog::open(dir.join("catalog"), broker, Some(spaces)).unwrap()
    };
    let cat = open(dir.path());
    cat.register_user("1", "dev", Role::Developer).unwrap();
    cat.register_user("1", "con", Role::Consumer).unwrap();
    let f = Fixture { _dir: dir, cat };
    let (sid, src) = boundary_service(&f);
    let s = ingest(&f.cat, CON, &sid, &src, Some(64), 32, Compression::Deflate).unwrap();
    assert_eq!(s.first_seq, 0);

    let Fixture { _dir: dir, cat } = f;
    drop(cat);
    let cat = open(dir.path());
    let s = ingest(&cat, CON, &sid, &src, Some(32), 32, Compression::None).unwrap();
    assert_eq!(s.first_seq, 2);
}

#[test]
fn run_service_needs_subscription() {
    let f = fixture();
    let g = register(&f.cat, "grayscale", DataKind::Frames);
    let h = register(&f.cat, "histogram", DataKind::Frames);
    let sid = service(
        &f.cat,
        ServiceMode::Riva,
        vec![PipelineStep::new(g, json!({})), PipelineStep::new(h, json!({}))],
    );
    assert!(matches!(
        run_service(&sid, &f.cat, None, &RunOptions::default()),
        Err(RuntimeError::NoSubscription(_))
    ));
    assert!(matches!(
        run_service("99", &f.cat, None, &RunOptions::default()),
        Err(RuntimeError::UnknownService(_))
    ));
}

#[test]
fn crash_before_commit_reprocesses_batch() {
    let f = fixture();
    let (sid, src) = boundary_service(&f);
    ingest(&f.cat, CON, &sid, &src, Some(96), 32, Compression::None).unwrap();
    let fired = Arc::new(AtomicBool::new(false));
    let hook_fired = fired.clone();
    let opts = RunOptions {
        fault: Some(Arc::new(move |p: &FaultPoint| p.batch_seq == 1 && !hook_fired.swap(true, Ordering::SeqCst))),
        ..Default::default()
    };
    assert!(matches!(
        run_service(&sid, &f.cat, None, &opts),
        Err(RuntimeError::InjectedFault(p)) if p.offset == 1
    ));
    let sum = run_service(&sid, &f.cat, None, &opts).unwrap();
    assert_eq!(sum.batches, 2);
    let ir = f.cat.query_ir(CON, &sid, &Default::default(), None).unwrap();
    let seqs: Vec<u64> = ir.iter().map(|r| r.batch_seq).collect();
    assert_eq!(seqs.iter().filter(|&&s| s == 0).count(), 32);
    assert_eq!(seqs.iter().filter(|&&s| s == 1).count(), 64);
    assert_eq!(seqs.iter().filter(|&&s| s == 2).count(), 32);
    let mut keys: Vec<_> = ir.iter().map(|r| r.dedup_key()).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 96);
}

#[test]
fn biva_objects() {
    let f = fixture();
    let g = register(&f.cat, "grayscale", DataKind::Frames);
    let h = register(&f.cat, "histogram", DataKind::Frames);
    let sid = service(
        &f.cat,
        ServiceMode::Biva,
        vec![PipelineStep::new(g, json!({})), PipelineStep::new(h, json!({}))],
    );
    let spaces = f.cat.userspaces().unwrap();
    let con = Actor::new(CON, Role::Consumer);
    let a = spaces
        .put_object(&con, CON, Space::RawVideo, "a.svb", &encode_minibatch(&gray_batch(0, &[1, 2])).unwrap())
        .unwrap();
    let b = spaces
        .put_object(&con, CON, Space::RawVideo, "b.svb", &encode_minibatch(&gray_batch(1, &[3, 4, 5])).unwrap())
        .unwrap();
    let sum = run_biva(&sid, &[a.clone(), b], &f.cat, None, &RunOptions::default()).unwrap();
    assert_eq!((sum.batches, sum.ir, sum.anomalies), (2, 5, 0));
    assert_eq!(run_biva(&sid, &[], &f.cat, None, &RunOptions::default()).unwrap(), RunSummary::default());
    let junk = spaces.put_object(&con, CON, Space::RawVideo, "junk.bin", b"nope").unwrap();
    match run_biva(&sid, &[a, junk], &f.cat, None, &RunOptions::default()) {
        Err(RuntimeError::Decode { object, .. }) => assert!(object.ends_with("junk.bin")),
        other => panic!("{other:?}"),
    }
    assert_eq!(f.cat.broker().list_topics().len(), 0);
}

#[test]
fn chained_services() {
    let f = fixture();
    let g = register(&f.cat, "grayscale", DataKind::Frames);
    let h = register(&f.cat, "histogram", DataKind::Frames);
    let up = service(
        &f.cat,
        ServiceMode::Riva,
        vec![PipelineStep::new(&g, json!({})), PipelineStep::new(&h, json!({}))],
    );
    let km = register(&f.cat, "kmeans-scorer", DataKind::Vectors);
    let th = register(&f.cat, "threshold", DataKind::Labels);
    let down = service(
        &f.cat,
        ServiceMode::Riva,
        vec![
            PipelineStep::new(&km, json!({"model": "km.json"})),
            PipelineStep::new(&th, json!({"theta": 0.5})),
        ],
    );
    let model = KMeansModel {
        centroids: vec![{
            let mut c = vec![0.0; 8];
            c[0] = 1.0;
            c
        }],
        inertia: 0.0,
        iterations: 0,
    };
    f.cat
        .userspaces()
        .unwrap()
        .put_object(&Actor::new(DEV, Role::Developer), DEV, Space::Model, "km.json", &serde_json::to_vec(&model).unwrap())
        .unwrap();
    assert!(matches!(chain_services(&up, &up, &f.cat), Err(RuntimeError::KindMismatch(_))));
    assert!(matches!(chain_services("77", &down, &f.cat), Err(RuntimeError::UnknownService(_))));
    let binding = chain_services(&up, &down, &f.cat).unwrap();
    assert_eq!(run_chain(&binding, &f.cat, None, &RunOptions::default()).unwrap().batches, 0);

    let src = scene_source(&f.cat);
    f.cat.subscribe(CON, &src, &up).unwrap();
    ingest(&f.cat, CON, &up, &src, Some(10), 4, Compression::None).unwrap();
    // Frames 0..10 are all black: histogram mass sits in bin 0, so nothing
    // is far from the centroid.
    run_service(&up, &f.cat, None, &RunOptions::default()).unwrap();
    let sum = run_chain(&binding, &f.cat, None, &RunOptions::default()).unwrap();
    assert_eq!((sum.batches, sum.ir, sum.anomalies), (10, 10, 0));
    let ir = f.cat.query_ir(DEV, &down, &Default::default(), None).unwrap();
    assert!(ir.iter().all(|r| r.kind == IrKind::Label && r.source_id == src));
}

#[test]
fn stream_helper_smoke() {
    let broker = Broker::in_memory();
    broker.provision_service_topics("s").unwrap();
    let spec = SourceSpec::synthetic("cam", json!({"width": 2, "height": 2, "scene_plan": [[5, 0]]}));
    let mut h = open_source(&spec).unwrap();
    assert_eq!(run_vsas(&mut h, "s", 2, Compression::None, &broker).unwrap(), 3);
    let last = broker.last_with_key("RIVA_s", "cam").unwrap().unwrap();
    assert_eq!(last.offset, 2);
    assert!(broker.last_with_key("RIVA_s", "other").unwrap().is_none());
}
