use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use siat_core::acquisition::{IrKind, SourceSpec};
use siat_core::broker::Broker;
use siat_core::catalog::{
    AlgorithmRequest, Catalog, IrFilter, ServiceMode, ServiceRequest, ServiceSpec, SourceMode, SubscriptionStatus,
};
use siat_core::framewire::Compression;
use siat_core::knowledge::{bindings_to_maps, KnowledgeBase};
use siat_core::runtime::{self, RunOptions};
use siat_core::userspace::{Space, UserSpaces};
use siat_core::Role;

use crate::error::ApiError;
use crate::sessions::{Session, Sessions, DEFAULT_TTL_SECS};
use crate::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
    Put,
    Delete,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GET" => Some(Method::Get),
            "POST" => Some(Method::Post),
            "PUT" => Some(Method::Put),
            "DELETE" => Some(Method::Delete),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiRequest {
    pub method: Method,
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub token: Option<String>,
    pub body: Value,
}

impl ApiRequest {
    pub fn new(method: Method, path: &str) -> Self {
        Self {
            method,
            path: path.to_string(),
            query: BTreeMap::new(),
            token: None,
            body: Value::Null,
        }
    }

    pub fn token(mut self, token: &str) -> Self {
        self.token = Some(token.to_string());
        self
    }

    pub fn body(mut self, body: Value) -> Self {
        self.body = body;
        self
    }

    pub fn query(mut self, key: &str, value: impl ToString) -> Self {
        self.query.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl ApiResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

type Reply = Result<(u16, Value), ApiError>;

fn ok<T: Serialize>(v: T) -> Reply {
    Ok((200, serde_json::to_value(v).expect("response serializes")))
}

fn created<T: Serialize>(v: T) -> Reply {
    Ok((201, serde_json::to_value(v).expect("response serializes")))
}

fn parse<T: DeserializeOwned>(body: &Value) -> Result<T, ApiError> {
    let body = if body.is_null() { json!({}) } else { body.clone() };
    serde_json::from_value(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn query_num<T: std::str::FromStr>(q: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    q.get(key)
        .map(|v| v.parse().map_err(|_| ApiError::bad_request(format!("query parameter '{key}' is not a number"))))
        .transpose()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoginBody {
    name: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UserBody {
    name: String,
    role: Role,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RoleBody {
    role: Role,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceBody {
    kind: SourceMode,
    spec: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GrantBody {
    user_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubscribeBody {
    source_id: String,
    service_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StatusBody {
    status: SubscriptionStatus,
}

fn default_batch_size() -> usize {
    32
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestBody {
    source_id: String,
    #[serde(default)]
    frames: Option<u64>,
    #[serde(default = "default_batch_size")]
    batch_size: usize,
    #[serde(default)]
    compression: Compression,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectLocator {
    user_id: String,
    space: Space,
    path: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBody {
    #[serde(default)]
    max_batches: Option<u64>,
    #[serde(default)]
    n_workers: Option<usize>,
    /// Consume this service's feature IR instead of the service's own stream.
    #[serde(default)]
    upstream_id: Option<String>,
    /// Stored SVB1 objects for a BIVA run.
    #[serde(default)]
    objects: Vec<ObjectLocator>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    q: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PutObjectBody {
    owner: String,
    space: Space,
    path: String,
    data_b64: String,
}

/// Everything one server instance serves: catalog (with broker and object
/// store), knowledge base and sessions.
pub struct App {
    catalog: Catalog,
    knowledge: KnowledgeBase,
    sessions: Sessions,
    busy: Mutex<HashSet<String>>,
    fresh: bool,
}

/// Releases a per-service run slot on drop.
struct Slot<'a> {
    busy: &'a Mutex<HashSet<String>>,
    key: String,
}

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        self.busy.lock().unwrap_or_else(|e| e.into_inner()).remove(&self.key);
    }
}

impl App {
    /// Non-persistent instance without an object store.
    pub fn in_memory() -> Self {
        Self {
            catalog: Catalog::in_memory(Arc::new(Broker::in_memory())),
            knowledge: KnowledgeBase::default(),
            sessions: Sessions::new(DEFAULT_TTL_SECS),
            busy: Mutex::new(HashSet::new()),
            fresh: true,
        }
    }

    /// Opens (or initialises) the state under `data_dir`: `broker/`,
    /// `catalog/` and `userspace/`. The knowledge base is rebuilt from the
    /// stored IR.
    pub fn open(data_dir: &Path) -> Result<Self, GatewayError> {
        let dd = |e: &dyn std::fmt::Display| GatewayError::DataDir(format!("{}: {e}", data_dir.display()));
        fs::create_dir_all(data_dir).map_err(|e| dd(&e))?;
        let fresh = !data_dir.join("catalog").exists();
        let broker = Arc::new(Broker::open(data_dir.join("broker")).map_err(|e| dd(&e))?);
        let spaces = Arc::new(UserSpaces::open(data_dir.join("userspace")).map_err(|e| dd(&e))?);
        let catalog = Catalog::open(data_dir.join("catalog"), broker, Some(spaces)).map_err(|e| dd(&e))?;
        let knowledge = KnowledgeBase::default();
        for r in catalog.all_ir() {
            knowledge.ingest(&r).map_err(|e| dd(&e))?;
        }
        Ok(Self {
            catalog,
            knowledge,
            sessions: Sessions::new(DEFAULT_TTL_SECS),
            busy: Mutex::new(HashSet::new()),
            fresh,
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn knowledge(&self) -> &KnowledgeBase {
        &self.knowledge
    }

    pub fn sessions(&self) -> &Sessions {
        &self.sessions
    }

    /// Whether this instance bootstrapped a new catalog.
    pub fn is_fresh(&self) -> bool {
        self.fresh
    }

    /// A new session for the bootstrap administrator.
    pub fn root_session(&self) -> Session {
        self.sessions.create(siat_core::catalog::ROOT_USER_ID)
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        match self.dispatch(req) {
            Ok((status, body)) => ApiResponse { status, body },
            Err(e) => ApiResponse {
                status: e.status,
                body: e.body(),
            },
        }
    }

    fn authenticate(&self, req: &ApiRequest) -> Result<String, ApiError> {
        let token = req
            .token
            .as_deref()
            .ok_or_else(|| ApiError::new(401, "Unauthenticated", "missing X-SIAT-Token header"))?;
        let s = self
            .sessions
            .resolve(token)
            .ok_or_else(|| ApiError::new(401, "Unauthenticated", "unknown or expired token"))?;
        // A token may outlive a catalog restore; the user must still exist.
        self.catalog
            .user(&s.user_id)
            .map(|u| u.user_id)
            .ok_or_else(|| ApiError::new(401, "Unauthenticated", "token user no longer exists"))
    }

    fn dispatch(&self, req: &ApiRequest) -> Reply {
        use Method::*;
        let segs: Vec<&str> = req.path.split('/').filter(|s| !s.is_empty()).collect();
        match (req.method, segs.as_slice()) {
            (Get, ["health"]) => {
                let stats = self.catalog.stats();
                ok(json!({
                    "status": "ok",
                    "services": stats.services,
                    "users": stats.users,
                    "topics": self.catalog.broker().list_topics().len(),
                }))
            }
            (Post, ["sessions"]) => {
                let b: LoginBody = parse(&req.body)?;
                let u = self
                    .catalog
                    .user_by_name(&b.name)
                    .ok_or_else(|| ApiError::new(404, "UnknownUser", format!("no user named '{}'", b.name)))?;
                let s = self.sessions.create(&u.user_id);
                created(json!({"token": s.token, "user_id": u.user_id, "role": u.role, "expiry_ts": s.expiry_ts}))
            }
            _ => {
                let actor = self.authenticate(req)?;
                self.route(&actor, req, &segs)
            }
        }
    }

    fn route(&self, actor: &str, req: &ApiRequest, segs: &[&str]) -> Reply {
        use Method::*;
        let c = &self.catalog;
        match (req.method, segs) {
            (Post, ["users"]) => {
                let b: UserBody = parse(&req.body)?;
                created(c.register_user(actor, &b.name, b.role)?)
            }
            (Get, ["users"]) => ok(c.list_users(actor)?),
            (Post, ["users", id, "role"]) => {
                let b: RoleBody = parse(&req.body)?;
                ok(c.set_role(actor, id, b.role)?)
            }
            (Get, ["users", id, "log"]) => ok(c.user_log(actor, id)?),

            (Post, ["sources"]) => {
                let b: SourceBody = parse(&req.body)?;
                let mut spec = b.spec;
                if let Some(obj) = spec.as_object_mut() {
                    obj.entry("source_id").or_insert(json!(""));
                }
                let spec = SourceSpec::from_json(&spec).map_err(|e| ApiError::new(400, "BadSpec", e.to_string()))?;
                created(c.add_data_source(actor, b.kind, spec)?)
            }
            (Get, ["sources"]) => ok(c.list_sources(actor)?),
            (Post, ["sources", id, "grant"]) => {
                let b: GrantBody = parse(&req.body)?;
                ok(c.grant_source(actor, id, &b.user_id)?)
            }
            (Delete, ["sources", id]) => {
                c.delete_source(actor, id)?;
                ok(json!({"deleted": id}))
            }

            (Post, ["algorithms"]) => {
                let b: AlgorithmRequest = parse(&req.body)?;
                created(c.register_algorithm(actor, b)?)
            }
            (Get, ["algorithms"]) => ok(c.list_algorithms()),
            (Delete, ["algorithms", id]) => {
                c.delete_algorithm(actor, id)?;
                ok(json!({"deleted": id}))
            }

            (Post, ["services"]) => {
                let b: ServiceRequest = parse(&req.body)?;
                created(c.create_service(actor, b)?)
            }
            (Get, ["services"]) => ok(c.discover_services(&req.query)),
            (Get, ["services", id]) => ok(self.service(id)?),
            (Delete, ["services", id]) => {
                c.delete_service(actor, id)?;
                ok(json!({"deleted": id}))
            }
            (Post, ["services", id, "ingest"]) => {
                let b: IngestBody = parse(&req.body)?;
                let _slot = self.claim(&format!("ingest:{id}"))?;
                ok(runtime::ingest(c, actor, id, &b.source_id, b.frames, b.batch_size, b.compression)?)
            }
            (Post, ["services", id, "run"]) => self.run(actor, id, parse(&req.body)?),
            (Get, ["services", id, "ir"]) => {
                let kind = req
                    .query
                    .get("kind")
                    .map(|k| k.parse::<IrKind>().map_err(ApiError::bad_request))
                    .transpose()?;
                let filter = IrFilter {
                    seq_from: query_num(&req.query, "seq_from")?,
                    seq_to: query_num(&req.query, "seq_to")?,
                    kind,
                };
                ok(c.query_ir(actor, id, &filter, query_num(&req.query, "limit")?)?)
            }
            (Get, ["services", id, "anomalies"]) => ok(c.query_anomalies(actor, id, query_num(&req.query, "limit")?)?),

            (Post, ["subscriptions"]) => {
                let b: SubscribeBody = parse(&req.body)?;
                created(c.subscribe(actor, &b.source_id, &b.service_id)?)
            }
            (Get, ["subscriptions"]) => ok(c.list_subscriptions(actor)?),
            (Post, ["subscriptions", id, "status"]) => {
                let b: StatusBody = parse(&req.body)?;
                ok(c.set_subscription_status(actor, id, b.status)?)
            }
            (Delete, ["subscriptions", id]) => {
                c.unsubscribe(actor, id)?;
                ok(json!({"deleted": id}))
            }

            (Post, ["query"]) => {
                let b: QueryBody = parse(&req.body)?;
                let rows = self.knowledge.query(&b.q)?;
                ok(json!({"count": rows.len(), "rows": bindings_to_maps(&rows)}))
            }

            (Post, ["objects"]) => {
                let b: PutObjectBody = parse(&req.body)?;
                let bytes = B64
                    .decode(b.data_b64.as_bytes())
                    .map_err(|e| ApiError::bad_request(format!("data_b64: {e}")))?;
                let me = c.actor(actor)?;
                created(self.spaces()?.put_object(&me, &b.owner, b.space, &b.path, &bytes)?)
            }
            (Get, ["objects", owner, space]) => {
                let space = parse_space(space)?;
                let me = c.actor(actor)?;
                let prefix = req.query.get("prefix").map(String::as_str).unwrap_or("");
                ok(self.spaces()?.list_objects(&me, owner, space, prefix)?)
            }
            (Get, ["objects", owner, space, rest @ ..]) => {
                let space = parse_space(space)?;
                let path = rest.join("/");
                let me = c.actor(actor)?;
                let spaces = self.spaces()?;
                let meta = spaces.stat_object(&me, owner, space, &path)?;
                let bytes = spaces.get_object(&me, owner, space, &path)?;
                ok(json!({"object": meta, "data_b64": B64.encode(bytes)}))
            }

            _ => Err(ApiError::new(
                404,
                "NoRoute",
                format!("no endpoint {:?} /{}", req.method, segs.join("/")),
            )),
        }
    }

    fn service(&self, id: &str) -> Result<ServiceSpec, ApiError> {
        self.catalog
            .service(id)
            .ok_or_else(|| ApiError::new(404, "UnknownService", format!("unknown service '{id}'")))
    }

    fn spaces(&self) -> Result<&UserSpaces, ApiError> {
        self.catalog
            .userspaces()
            .map(|s| s.as_ref())
            .ok_or_else(|| ApiError::new(404, "NoUserSpace", "this server has no object store"))
    }

    fn claim(&self, key: &str) -> Result<Slot<'_>, ApiError> {
        let mut busy = self.busy.lock().unwrap_or_else(|e| e.into_inner());
        if !busy.insert(key.to_string()) {
            return Err(ApiError::new(409, "Busy", format!("{key} is already in progress")));
        }
        Ok(Slot {
            busy: &self.busy,
            key: key.to_string(),
        })
    }

    /// Runs a service for its owner, an administrator or an active
    /// subscriber.
    fn run(&self, actor: &str, id: &str, b: RunBody) -> Reply {
        let c = &self.catalog;
        let me = c.actor(actor)?;
        let spec = self.service(id)?;
        let subscribed = c.active_subscriptions(id).iter().any(|s| s.user_id == actor);
        if !(me.is_admin() || spec.owner == actor || subscribed) {
            return Err(ApiError::new(
                403,
                "AccessDenied",
                format!("service {id} may be run by its owner or an active subscriber"),
            ));
        }
        let opts = RunOptions {
            max_batches: b.max_batches,
            n_workers: b.n_workers.unwrap_or(1),
            fault: None,
        };
        let _slot = self.claim(&format!("run:{id}"))?;
        let kb = Some(&self.knowledge);
        let summary = match (&b.upstream_id, spec.mode) {
            (Some(up), _) => {
                let binding = runtime::chain_services(up, id, c)?;
                runtime::run_chain(&binding, c, kb, &opts)?
            }
            (None, ServiceMode::Riva) => runtime::run_service(id, c, kb, &opts)?,
            (None, ServiceMode::Biva) => {
                let spaces = self.spaces()?;
                let mut objects = Vec::with_capacity(b.objects.len());
                for o in &b.objects {
                    objects.push(spaces.stat_object(&me, &o.user_id, o.space, &o.path)?);
                }
                runtime::run_biva(id, &objects, c, kb, &opts)?
            }
        };
        ok(summary)
    }
}

fn parse_space(s: &str) -> Result<Space, ApiError> {
    s.parse::<Space>().map_err(|e| ApiError::bad_request(e.to_string()))
}

/// `SIAT_DATA_DIR`, or `./siat-data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os("SIAT_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("siat-data"))
}
