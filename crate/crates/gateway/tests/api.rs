use std::sync::Arc;

use serde_json::{json, Value};
use siat_gateway::{now_secs, spawn, ApiRequest, App, GatewayError, Method, TOKEN_HEADER};

fn call(app: &App, token: Option<&str>, method: Method, path: &str, body: Value) -> (u16, Value) {
    let mut req = ApiRequest::new(method, path).body(body);
    if let Some(t) = token {
        req = req.token(t);
    }
    let r = app.handle(&req);
    (r.status, r.body)
}

fn login(app: &App, name: &str) -> String {
    let (st, body) = call(app, None, Method::Post, "/sessions", json!({ "name": name }));
    assert_eq!(st, 201, "{body}");
    body["token"].as_str().unwrap().to_string()
}

fn synthetic_spec(frames: u64) -> Value {
    json!({"kind": "SYNTHETIC", "params": {"width": 4, "height": 4,
        "scene_plan": [{"frames": frames / 2, "fill": 0}, {"frames": frames - frames / 2, "fill": 255}]}})
}

struct World {
    app: App,
    root: String,
    dev: String,
    con: String,
}

fn world(app: App) -> World {
    let root = login(&app, "root");
    for (name, role) in [("dev", "DEVELOPER"), ("con", "CONSUMER")] {
        let (st, _) = call(&app, Some(&root), Method::Post, "/users", json!({"name": name, "role": role}));
        assert_eq!(st, 201);
    }
    let dev = login(&app, "dev");
    let con = login(&app, "con");
    World { app, root, dev, con }
}

fn register(w: &World, name: &str, input: &str, stage: &str, output: &str) -> String {
    let (st, b) = call(
        &w.app,
        Some(&w.dev),
        Method::Post,
        "/algorithms",
        json!({"name": name, "stage_kind": stage, "input_kind": input, "output_kind": output}),
    );
    assert_eq!(st, 201, "{b}");
    b["algorithm_id"].as_str().unwrap().to_string()
}

fn boundary_service(w: &World) -> String {
    let g = register(w, "grayscale", "FRAMES", "PREPROCESS", "FRAMES");
    let d = register(w, "boundary-detector", "FRAMES", "FEATURE", "VECTORS");
    let p = register(w, "promote-boundary", "VECTORS", "DETECT", "ANOMALIES");
    let (st, b) = call(
        &w.app,
        Some(&w.dev),
        Method::Post,
        "/services",
        json!({"mode": "RIVA", "pipeline": [
            {"algorithm_id": g}, {"algorithm_id": d, "params": {"tau": 50.0}}, {"algorithm_id": p}]}),
    );
    assert_eq!(st, 201, "{b}");
    b["service_id"].as_str().unwrap().to_string()
}

#[test]
fn fresh_instance_reports_health_without_a_token() {
    let app = App::in_memory();
    let (st, b) = call(&app, None, Method::Get, "/health", Value::Null);
    assert_eq!(st, 200);
    assert_eq!(b["status"], "ok");
    assert_eq!(b["services"], 0);
}

#[test]
fn missing_unknown_and_expired_tokens_are_rejected() {
    let app = App::in_memory();
    assert_eq!(call(&app, None, Method::Get, "/users", Value::Null).0, 401);
    assert_eq!(call(&app, Some("00"), Method::Get, "/users", Value::Null).0, 401);
    let t = login(&app, "root");
    assert_eq!(call(&app, Some(&t), Method::Get, "/users", Value::Null).0, 200);
    app.sessions().set_expiry(&t, now_secs() - 1);
    let (st, b) = call(&app, Some(&t), Method::Get, "/users", Value::Null);
    assert_eq!(st, 401);
    assert_eq!(b["code"], "Unauthenticated");
    assert_eq!(call(&app, None, Method::Post, "/sessions", json!({"name": "ghost"})).0, 404);
}

#[test]
fn errors_map_to_status_codes_with_json_bodies() {
    let w = world(App::in_memory());
    let (st, b) = call(
        &w.app,
        Some(&w.con),
        Method::Post,
        "/algorithms",
        json!({"name": "grayscale", "stage_kind": "PREPROCESS", "input_kind": "FRAMES", "output_kind": "FRAMES"}),
    );
    assert_eq!(st, 403);
    assert_eq!(b["code"], "AccessDenied");
    assert!(b["error"].is_string());

    let (st, b) = call(&w.app, Some(&w.root), Method::Post, "/users", json!({"name": "dev", "role": "CONSUMER"}));
    assert_eq!((st, b["code"].as_str()), (409, Some("DuplicateName")));
    assert_eq!(call(&w.app, Some(&w.root), Method::Get, "/services/99", Value::Null).0, 404);
    assert_eq!(call(&w.app, Some(&w.root), Method::Get, "/nowhere", Value::Null).0, 404);
    let (st, b) = call(&w.app, Some(&w.root), Method::Post, "/users", json!({"name": 3}));
    assert_eq!((st, b["code"].as_str()), (400, Some("BadRequest")));
    let (st, b) = call(&w.app, Some(&w.root), Method::Post, "/query", json!({"q": "SELECT ?x WHERE {"}));
    assert_eq!((st, b["code"].as_str()), (400, Some("QuerySyntax")));
}

#[test]
fn batch_source_cannot_feed_a_riva_service() {
    let w = world(App::in_memory());
    let svc = boundary_service(&w);
    let (st, b) = call(
        &w.app,
        Some(&w.con),
        Method::Post,
        "/sources",
        json!({"kind": "BATCH", "spec": synthetic_spec(4)}),
    );
    assert_eq!(st, 201, "{b}");
    let src = b["source_id"].as_str().unwrap();
    let (st, b) = call(
        &w.app,
        Some(&w.con),
        Method::Post,
        "/subscriptions",
        json!({"source_id": src, "service_id": svc}),
    );
    assert_eq!((st, b["code"].as_str()), (400, Some("KindMismatch")));
}

#[test]
fn ingest_run_and_query_through_the_dispatcher() {
    let w = world(App::in_memory());
    let svc = boundary_service(&w);
    let (_, b) = call(&w.app, Some(&w.con), Method::Post, "/sources", json!({"kind": "STREAM", "spec": synthetic_spec(40)}));
    let src = b["source_id"].as_str().unwrap().to_string();
    let (st, _) = call(&w.app, Some(&w.con), Method::Post, "/subscriptions", json!({"source_id": src, "service_id": svc}));
    assert_eq!(st, 201);

    let (st, b) = call(
        &w.app,
        Some(&w.dev),
        Method::Post,
        &format!("/services/{svc}/ingest"),
        json!({"source_id": src, "batch_size": 16}),
    );
    assert_eq!(st, 403, "the developer cannot read the consumer's source: {b}");
    let (st, b) = call(
        &w.app,
        Some(&w.con),
        Method::Post,
        &format!("/services/{svc}/ingest"),
        json!({"source_id": src, "batch_size": 16}),
    );
    assert_eq!(st, 200, "{b}");
    assert_eq!(b["batches"], 3);
    assert_eq!(b["frames"], 40);

    let (st, b) = call(&w.app, Some(&w.con), Method::Post, &format!("/services/{svc}/run"), json!({"n_workers": 2}));
    assert_eq!(st, 200, "{b}");
    assert_eq!(b["batches"], 3);
    assert_eq!(b["anomalies"], 1);

    let (st, b) = call(&w.app, Some(&w.con), Method::Get, &format!("/services/{svc}/anomalies"), Value::Null);
    assert_eq!(st, 200);
    let rows = b.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0]["batch_seq"].as_u64(), rows[0]["frame_index"].as_i64()), (Some(1), Some(4)));

    let r = w.app.handle(
        &ApiRequest::new(Method::Get, &format!("/services/{svc}/ir"))
            .token(&w.con)
            .query("seq_from", 2)
            .query("kind", "feature"),
    );
    assert_eq!(r.status, 200);
    assert_eq!(r.body.as_array().unwrap().len(), 8);
    let r = w.app.handle(&ApiRequest::new(Method::Get, &format!("/services/{svc}/ir")).token(&w.con).query("limit", "x"));
    assert_eq!(r.status, 400);

    let (st, b) = call(
        &w.app,
        Some(&w.con),
        Method::Post,
        "/query",
        json!({"q": "SELECT ?x ?f WHERE { ?x rdf:type onto:ShotBoundary . ?x onto:atFrame ?f . }"}),
    );
    assert_eq!(st, 200);
    assert_eq!(b["count"], 1);
    assert_eq!(b["rows"][0]["f"], "4");

    let (st, b) = call(&w.app, Some(&w.root), Method::Post, &format!("/services/{svc}/run"), Value::Null);
    assert_eq!((st, b["batches"].as_u64()), (200, Some(0)));
    let outsider = {
        call(&w.app, Some(&w.root), Method::Post, "/users", json!({"name": "other", "role": "CONSUMER"}));
        login(&w.app, "other")
    };
    assert_eq!(call(&w.app, Some(&outsider), Method::Post, &format!("/services/{svc}/run"), Value::Null).0, 403);
}

#[test]
fn objects_round_trip_through_base64() {
    let dir = tempfile::tempdir().unwrap();
    let w = world(App::open(dir.path()).unwrap());
    let dev_id = w.app.catalog().user_by_name("dev").unwrap().user_id;
    let (st, b) = call(
        &w.app,
        Some(&w.dev),
        Method::Post,
        "/objects",
        json!({"owner": dev_id, "space": "MODEL", "path": "m/a.json", "data_b64": "aGVsbG8="}),
    );
    assert_eq!(st, 201, "{b}");
    assert_eq!(b["size"], 5);
    let (st, b) = call(&w.app, Some(&w.dev), Method::Get, &format!("/objects/{dev_id}/MODEL/m/a.json"), Value::Null);
    assert_eq!((st, b["data_b64"].as_str()), (200, Some("aGVsbG8=")));
    let (st, b) = call(&w.app, Some(&w.dev), Method::Get, &format!("/objects/{dev_id}/model"), Value::Null);
    assert_eq!((st, b.as_array().map(Vec::len)), (200, Some(1)));
    assert_eq!(call(&w.app, Some(&w.con), Method::Get, &format!("/objects/{dev_id}/MODEL/m/a.json"), Value::Null).0, 403);
    assert_eq!(call(&w.app, Some(&w.dev), Method::Get, &format!("/objects/{dev_id}/NOPE"), Value::Null).0, 400);
}

#[test]
fn reopening_a_data_dir_replays_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let w = world(App::open(dir.path()).unwrap());
        assert!(w.app.is_fresh());
        boundary_service(&w);
        w.app.catalog().snapshot()
    };
    let app = App::open(dir.path()).unwrap();
    assert!(!app.is_fresh());
    assert_eq!(app.catalog().snapshot(), before);
    let t = login(&app, "dev");
    let (st, b) = call(&app, Some(&t), Method::Get, "/services", Value::Null);
    assert_eq!((st, b.as_array().map(Vec::len)), (200, Some(1)));
}

#[test]
fn http_server_serves_the_api_and_rejects_a_taken_port() {
    let app = Arc::new(App::in_memory());
    let server = spawn(app.clone(), "127.0.0.1:0").unwrap();
    let again = spawn(app.clone(), &server.addr().to_string());
    assert!(matches!(again, Err(GatewayError::PortInUse(_))));

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut r = agent.get(format!("{}/health", server.url())).call().unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let b: Value = r.body_mut().read_json().unwrap();
    assert_eq!(b["status"], "ok");

    let mut r = agent.post(format!("{}/sessions", server.url())).send_json(json!({"name": "root"})).unwrap();
    assert_eq!(r.status().as_u16(), 201);
    let token = r.body_mut().read_json::<Value>().unwrap()["token"].as_str().unwrap().to_string();
    let mut r = agent
        .get(format!("{}/services", server.url()))
        .header(TOKEN_HEADER, &token)
        .query("mode", "RIVA")
        .call()
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);
    assert_eq!(r.body_mut().read_json::<Value>().unwrap(), json!([]));
    let r = agent
        .get(format!("{}/users", server.url()))
        .header("authorization", &format!("Bearer {token}"))
        .call()
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);

    let mut r = agent
        .post(format!("{}/users", server.url()))
        .header(TOKEN_HEADER, &token)
        .header("content-type", "application/json")
        .send("{not json")
        .unwrap();
    assert_eq!(r.status().as_u16(), 400);
    assert_eq!(r.body_mut().read_json::<Value>().unwrap()["code"], "BadRequest");
    server.stop().unwrap();
}
