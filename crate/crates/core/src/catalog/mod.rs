//! Meta-stores for users and their logs, data sources, algorithms, services,
//! subscriptions, intermediate results and anomalies.
//!
//! All state lives in memory behind one reader-writer lock. With a data
//! directory, every change is first appended to the store's journal
//! (`<store>.jsonl`, one `{"op", "value"}` object per line) and the journals
//! are replayed on open. Ids are per-store counters rendered as decimal
//! strings; the bootstrap administrator "root" is user "1".

mod journal;
mod types;

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::access::{Actor, Role};
use crate::acquisition::{AnomalyRecord, IrRecord, SourceSpec};
use crate::broker::{Broker, BrokerError, ServiceTopics};
use crate::stages::{bind_params, lookup, DataKind};
use crate::userspace::{UserSpaces, UserspaceError};
use crate::util::now_micros;

use journal::{Journal, JournalOp, STORES};
pub use types::{
    AlgorithmDescriptor, AlgorithmRequest, DataSource, IrFilter, LogEntry, PipelineStep, ServiceMode, ServiceSpec,
    SourceMode, Subscription, SubscriptionStatus, User,
};

pub const ROOT_USER_ID: &str = "1";
pub const ROOT_USER_NAME: &str = "root";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error("unknown user '{0}'")]
    UnknownUser(String),
    #[error("duplicate name '{0}'")]
    DuplicateName(String),
    #[error("bad spec: {0}")]
    BadSpec(String),
    #[error("kind mismatch: {0}")]
    KindMismatch(String),
    #[error("unknown implementation '{0}'")]
    UnknownImplementation(String),
    #[error("unknown algorithm '{0}'")]
    UnknownAlgorithm(String),
    #[error("pipeline type error: {0}")]
    PipelineTypeError(String),
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("unknown source '{0}'")]
    UnknownSource(String),
    #[error("unknown service '{0}'")]
    UnknownService(String),
    #[error("unknown subscription '{0}'")]
    UnknownSubscription(String),
    #[error("already subscribed: {0}")]
    AlreadySubscribed(String),
    #[error("still referenced: {0}")]
    Referenced(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Userspace(#[from] UserspaceError),
    #[error("corrupt journal {store}.jsonl line {line}: {reason}")]
    CorruptJournal { store: String, line: usize, reason: String },
    #[error("catalog I/O error: {0}")]
    Io(String),
}

impl From<io::Error> for CatalogError {
    fn from(e: io::Error) -> Self {
        CatalogError::Io(e.to_string())
    }
}

pub type Result<T, E = CatalogError> = std::result::Result<T, E>;

/// The full in-memory contents of the catalog.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CatalogState {
    pub users: BTreeMap<String, User>,
    pub logs: BTreeMap<String, Vec<LogEntry>>,
    pub sources: BTreeMap<String, DataSource>,
    pub algorithms: BTreeMap<String, AlgorithmDescriptor>,
    pub services: BTreeMap<String, ServiceSpec>,
    pub subscriptions: BTreeMap<String, Subscription>,
    pub ir: BTreeMap<String, Vec<IrRecord>>,
    pub anomalies: BTreeMap<String, Vec<AnomalyRecord>>,
    last_ids: BTreeMap<&'static str, u64>,
}

impl CatalogState {
    fn next_id(&mut self, store: &'static str) -> String {
        let n = self.last_ids.entry(store).or_insert(0);
        *n += 1;
        n.to_string()
    }

    fn saw_id(&mut self, store: &'static str, id: &str) {
        if let Ok(v) = id.parse::<u64>() {
            let n = self.last_ids.entry(store).or_insert(0);
            *n = (*n).max(v);
        }
    }

    fn has_active_subscription(&self, user_id: &str, service_id: &str) -> bool {
        self.subscriptions
            .values()
            .any(|s| s.user_id == user_id && s.service_id == service_id && s.status == SubscriptionStatus::Active)
    }
}

/// Orders decimal ids numerically.
fn id_order(a: &str, b: &str) -> std::cmp::Ordering {
    (a.len(), a).cmp(&(b.len(), b))
}

fn sorted_by_id<T: Clone>(items: impl Iterator<Item = (String, T)>) -> Vec<T> {
    let mut v: Vec<(String, T)> = items.collect();
    v.sort_by(|a, b| id_order(&a.0, &b.0));
    v.into_iter().map(|(_, t)| t).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceRequest {
    #[serde(default)]
    pub name: Option<String>,
    pub mode: ServiceMode,
    pub pipeline: Vec<PipelineStep>,
}

/// Entity counts, as reported by health checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct CatalogStats {
    pub users: usize,
    pub sources: usize,
    pub algorithms: usize,
    pub services: usize,
    pub subscriptions: usize,
    pub ir: usize,
    pub anomalies: usize,
}

#[derive(Debug)]
pub struct Catalog {
    state: RwLock<CatalogState>,
    journal: Option<Journal>,
    broker: Arc<Broker>,
    spaces: Option<Arc<UserSpaces>>,
}

impl Catalog {
    /// A catalog without persistence or user spaces.
    pub fn in_memory(broker: Arc<Broker>) -> Self {
        let c = Self {
            state: RwLock::new(CatalogState::default()),
            journal: None,
            broker,
            spaces: None,
        };
        c.bootstrap().expect("in-memory bootstrap cannot fail");
        c
    }

    /// Opens (or initialises) the journals under `dir` and replays them.
    pub fn open(dir: impl AsRef<Path>, broker: Arc<Broker>, spaces: Option<Arc<UserSpaces>>) -> Result<Self> {
        let journal = Journal::open(dir.as_ref())?;
        let mut st = CatalogState::default();
        for store in STORES {
            for e in journal.replay(store)? {
                apply(&mut st, store, e.op, e.value)?;
            }
        }
        let c = Self {
            state: RwLock::new(st),
            journal: Some(journal),
            broker,
            spaces,
        };
        c.bootstrap()?;
        c.reconcile()?;
        Ok(c)
    }

    fn bootstrap(&self) -> Result<()> {
        let mut st = self.write();
        if !st.users.is_empty() {
            return Ok(());
        }
        let id = st.next_id("users");
        debug_assert_eq!(id, ROOT_USER_ID);
        let root = User {
            user_id: id.clone(),
            name: ROOT_USER_NAME.to_string(),
            role: Role::Admin,
            created_ts: now_micros(),
        };
        self.persist("users", JournalOp::Put, &root)?;
        st.users.insert(id.clone(), root);
        self.log(&mut st, &id, "bootstrap", "ok".into())?;
        Ok(())
    }

    /// Re-creates derived resources (user spaces, service topics) that may be
    /// missing after a crash or when the broker is not persistent.
    fn reconcile(&self) -> Result<()> {
        let st = self.read();
        if let Some(spaces) = &self.spaces {
            for id in st.users.keys() {
                if !spaces.exists(id) {
                    spaces.create_user_space(id)?;
                }
            }
        }
        for s in st.services.values().filter(|s| s.mode == ServiceMode::Riva) {
            for t in ServiceTopics::for_service(&s.service_id).names() {
                if !self.broker.topic_exists(t) {
                    self.broker.create_topic(t)?;
                }
            }
        }
        Ok(())
    }

    fn read(&self) -> RwLockReadGuard<'_, CatalogState> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, CatalogState> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    fn persist<T: Serialize>(&self, store: &'static str, op: JournalOp, value: &T) -> Result<()> {
        match &self.journal {
            Some(j) => j.append(store, op, value),
            None => Ok(()),
        }
    }

    fn log(&self, st: &mut CatalogState, user_id: &str, op: &str, outcome: String) -> Result<()> {
        let e = LogEntry {
            user_id: user_id.to_string(),
            ts: now_micros(),
            op: op.to_string(),
            outcome,
        };
        self.persist("logs", JournalOp::Put, &e)?;
        st.logs.entry(user_id.to_string()).or_default().push(e);
        Ok(())
    }

    /// Runs a mutating operation under the write lock and appends exactly one
    /// entry to the actor's log, whatever the outcome.
    fn mutate<T>(&self, actor: &str, op: &str, f: impl FnOnce(&mut CatalogState, &User) -> Result<T>) -> Result<T> {
        let mut st = self.write();
        let user = st
            .users
            .get(actor)
            .cloned()
            .ok_or_else(|| CatalogError::UnknownUser(actor.to_string()))?;
        let res = f(&mut st, &user);
        let outcome = match &res {
            Ok(_) => "ok".to_string(),
            Err(e) => format!("error: {e}"),
        };
        self.log(&mut st, actor, op, outcome)?;
        res
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.broker
    }

    pub fn userspaces(&self) -> Option<&Arc<UserSpaces>> {
        self.spaces.as_ref()
    }

    /// Deep copy of every store, for comparisons and diagnostics.
    pub fn snapshot(&self) -> CatalogState {
        self.read().clone()
    }

    // ---- users -----------------------------------------------------------

    pub fn actor(&self, user_id: &str) -> Result<Actor> {
        self.read()
            .users
            .get(user_id)
            .map(|u| Actor::new(&u.user_id, u.role))
            .ok_or_else(|| CatalogError::UnknownUser(user_id.to_string()))
    }

    pub fn user(&self, user_id: &str) -> Option<User> {
        self.read().users.get(user_id).cloned()
    }

    pub fn user_by_name(&self, name: &str) -> Option<User> {
        self.read().users.values().find(|u| u.name == name).cloned()
    }

    /// Every user for an administrator, otherwise only the caller.
    pub fn list_users(&self, actor: &str) -> Result<Vec<User>> {
        let st = self.read();
        let me = st.users.get(actor).ok_or_else(|| CatalogError::UnknownUser(actor.to_string()))?;
        if me.role == Role::Admin {
            Ok(sorted_by_id(st.users.iter().map(|(k, v)| (k.clone(), v.clone()))))
        } else {
            Ok(vec![me.clone()])
        }
    }

    pub fn user_log(&self, actor: &str, user_id: &str) -> Result<Vec<LogEntry>> {
        let a = self.actor(actor)?;
        if !a.may_act_for(user_id) {
            return Err(CatalogError::AccessDenied(format!("log of user {user_id}")));
        }
        let st = self.read();
        if !st.users.contains_key(user_id) {
            return Err(CatalogError::UnknownUser(user_id.to_string()));
        }
        Ok(st.logs.get(user_id).cloned().unwrap_or_default())
    }

    pub fn register_user(&self, actor: &str, name: &str, role: Role) -> Result<User> {
        self.mutate(actor, "register_user", |st, me| {
            if me.role != Role::Admin {
                return Err(CatalogError::AccessDenied("only ADMIN may register users".into()));
            }
            let name = name.trim();
            if name.is_empty() {
                return Err(CatalogError::BadSpec("user name must be non-empty".into()));
            }
            if st.users.values().any(|u| u.name == name) {
                return Err(CatalogError::DuplicateName(name.to_string()));
            }
            let id = st.next_id("users");
            let user = User {
                user_id: id.clone(),
                name: name.to_string(),
                role,
                created_ts: now_micros(),
            };
            self.persist("users", JournalOp::Put, &user)?;
            st.users.insert(id.clone(), user.clone());
            if let Some(spaces) = &self.spaces {
                let outcome = match spaces.create_user_space(&id) {
                    Ok(s) => format!("ok {}", s.root.display()),
                    Err(UserspaceError::AlreadyExists(_)) => "ok (existing)".to_string(),
                    Err(e) => return Err(e.into()),
                };
                self.log(st, &id, "create_user_space", outcome)?;
            }
            Ok(user)
        })
    }

    pub fn set_role(&self, actor: &str, user_id: &str, role: Role) -> Result<User> {
        self.mutate(actor, "set_role", |st, me| {
            if me.role != Role::Admin {
                return Err(CatalogError::AccessDenied("only ADMIN may change roles".into()));
            }
            let mut u = st
                .users
                .get(user_id)
                .cloned()
                .ok_or_else(|| CatalogError::UnknownUser(user_id.to_string()))?;
            u.role = role;
            self.persist("users", JournalOp::Put, &u)?;
            st.users.insert(u.user_id.clone(), u.clone());
            Ok(u)
        })
    }

    // ---- sources ---------------------------------------------------------

    pub fn add_data_source(&self, actor: &str, kind: SourceMode, mut spec: SourceSpec) -> Result<DataSource> {
        self.mutate(actor, "add_data_source", |st, me| {
            spec.validate().map_err(|e| CatalogError::BadSpec(e.to_string()))?;
            let id = st.next_id("sources");
            spec.source_id = id.clone();
            let src = DataSource {
                source_id: id.clone(),
                owner: me.user_id.clone(),
                kind,
                spec,
                access: Vec::new(),
            };
            self.persist("sources", JournalOp::Put, &src)?;
            st.sources.insert(id, src.clone());
            Ok(src)
        })
    }

    pub fn grant_source(&self, actor: &str, source_id: &str, user_id: &str) -> Result<DataSource> {
        self.mutate(actor, "grant_source", |st, me| {
            let mut src = st
                .sources
                .get(source_id)
                .cloned()
                .ok_or_else(|| CatalogError::UnknownSource(source_id.to_string()))?;
            if me.role != Role::Admin && src.owner != me.user_id {
                return Err(CatalogError::AccessDenied(format!("source {source_id} belongs to another user")));
            }
            if !st.users.contains_key(user_id) {
                return Err(CatalogError::UnknownUser(user_id.to_string()));
            }
            if !src.access.iter().any(|u| u == user_id) {
                src.access.push(user_id.to_string());
            }
            self.persist("sources", JournalOp::Put, &src)?;
            st.sources.insert(src.source_id.clone(), src.clone());
            Ok(src)
        })
    }

    pub fn delete_source(&self, actor: &str, source_id: &str) -> Result<()> {
        self.mutate(actor, "delete_source", |st, me| {
            let src = st
                .sources
                .get(source_id)
                .cloned()
                .ok_or_else(|| CatalogError::UnknownSource(source_id.to_string()))?;
            if me.role != Role::Admin && src.owner != me.user_id {
                return Err(CatalogError::AccessDenied(format!("source {source_id} belongs to another user")));
            }
            if let Some(s) = st.subscriptions.values().find(|s| s.source_id == source_id) {
                return Err(CatalogError::Referenced(format!(
                    "source {source_id} is used by subscription {}",
                    s.subscription_id
                )));
            }
            self.persist("sources", JournalOp::Delete, &src)?;
            st.sources.remove(source_id);
            Ok(())
        })
    }

    pub fn source(&self, source_id: &str) -> Option<DataSource> {
        self.read().sources.get(source_id).cloned()
    }

    /// Sources the actor owns or was granted; all sources for ADMIN.
    pub fn list_sources(&self, actor: &str) -> Result<Vec<DataSource>> {
        let a = self.actor(actor)?;
        let st = self.read();
        Ok(sorted_by_id(
            st.sources
                .iter()
                .filter(|(_, s)| s.readable_by(&a.user_id, a.role))
                .map(|(k, v)| (k.clone(), v.clone())),
        ))
    }

    // ---- algorithms ------------------------------------------------------

    pub fn register_algorithm(&self, actor: &str, req: AlgorithmRequest) -> Result<AlgorithmDescriptor> {
        self.mutate(actor, "register_algorithm", |st, me| {
            if !me.role.can_develop() {
                return Err(CatalogError::AccessDenied(
                    "only ADMIN and DEVELOPER may register algorithms".into(),
                ));
            }
            if !req.stage_kind.allows(req.input_kind, req.output_kind) {
                return Err(CatalogError::KindMismatch(format!(
                    "{} stages cannot map {} to {}",
                    req.stage_kind, req.input_kind, req.output_kind
                )));
            }
            let imp = lookup(&req.name).ok_or_else(|| CatalogError::UnknownImplementation(req.name.clone()))?;
            if imp.stage_kind != req.stage_kind || !imp.accepts_input(req.input_kind) || imp.output != req.output_kind {
                return Err(CatalogError::KindMismatch(format!(
                    "'{}' is a {} stage, not {} {}→{}",
                    imp.name, imp.stage_kind, req.stage_kind, req.input_kind, req.output_kind
                )));
            }
            let params_schema = if req.params_schema.is_empty() {
                imp.params.clone()
            } else {
                for p in &req.params_schema {
                    match imp.params.iter().find(|q| q.name == p.name) {
                        Some(q) if q.param_type == p.param_type => {}
                        Some(_) => return Err(CatalogError::BadSpec(format!("parameter '{}' has the wrong type", p.name))),
                        None => return Err(CatalogError::BadSpec(format!("'{}' has no parameter '{}'", imp.name, p.name))),
                    }
                }
                // Parameters the schema leaves out keep the built-in definition.
                let mut merged = req.params_schema.clone();
                for q in &imp.params {
                    if !merged.iter().any(|p| p.name == q.name) {
                        merged.push(q.clone());
                    }
                }
                merged
            };
            let id = st.next_id("algorithms");
            let d = AlgorithmDescriptor {
                algorithm_id: id.clone(),
                owner: me.user_id.clone(),
                name: req.name.clone(),
                version: req.version.clone(),
                stage_kind: req.stage_kind,
                input_kind: req.input_kind,
                output_kind: req.output_kind,
                params_schema,
            };
            self.persist("algorithms", JournalOp::Put, &d)?;
            st.algorithms.insert(id, d.clone());
            Ok(d)
        })
    }

    pub fn delete_algorithm(&self, actor: &str, algorithm_id: &str) -> Result<()> {
        self.mutate(actor, "delete_algorithm", |st, me| {
            let d = st
                .algorithms
                .get(algorithm_id)
                .cloned()
                .ok_or_else(|| CatalogError::UnknownAlgorithm(algorithm_id.to_string()))?;
            if me.role != Role::Admin && !(me.role.can_develop() && d.owner == me.user_id) {
                return Err(CatalogError::AccessDenied(format!("algorithm {algorithm_id} belongs to another user")));
            }
            if let Some(s) = st
                .services
                .values()
                .find(|s| s.pipeline.iter().any(|p| p.algorithm_id == algorithm_id))
            {
                return Err(CatalogError::Referenced(format!(
                    "algorithm {algorithm_id} is used by service {}",
                    s.service_id
                )));
            }
            self.persist("algorithms", JournalOp::Delete, &d)?;
            st.algorithms.remove(algorithm_id);
            Ok(())
        })
    }

    pub fn algorithm(&self, algorithm_id: &str) -> Option<AlgorithmDescriptor> {
        self.read().algorithms.get(algorithm_id).cloned()
    }

    /// Registered algorithms are visible to every user.
    pub fn list_algorithms(&self) -> Vec<AlgorithmDescriptor> {
        sorted_by_id(self.read().algorithms.iter().map(|(k, v)| (k.clone(), v.clone())))
    }

    // ---- services --------------------------------------------------------

    pub fn create_service(&self, actor: &str, req: ServiceRequest) -> Result<ServiceSpec> {
        self.mutate(actor, "create_service", |st, me| {
            if !me.role.can_develop() {
                return Err(CatalogError::AccessDenied("only ADMIN and DEVELOPER may create services".into()));
            }
            check_pipeline(st, req.mode, &req.pipeline)?;
            let id = st.next_id("services");
            let topics = match req.mode {
                ServiceMode::Riva => self.broker.provision_service_topics(&id)?,
                ServiceMode::Biva => Vec::new(),
            };
            let spec = ServiceSpec {
                service_id: id.clone(),
                owner: me.user_id.clone(),
                name: req
                    .name
                    .clone()
                    .filter(|n| !n.trim().is_empty())
                    .unwrap_or_else(|| format!("service-{id}")),
                mode: req.mode,
                pipeline: req.pipeline.clone(),
                topics,
            };
            if let Err(e) = self.persist("services", JournalOp::Put, &spec) {
                let _ = self.broker.delete_service_topics(&id);
                return Err(e);
            }
            st.services.insert(id, spec.clone());
            Ok(spec)
        })
    }

    pub fn delete_service(&self, actor: &str, service_id: &str) -> Result<()> {
        self.mutate(actor, "delete_service", |st, me| {
            if !me.role.can_develop() {
                return Err(CatalogError::AccessDenied("only ADMIN and DEVELOPER may delete services".into()));
            }
            let spec = st
                .services
                .get(service_id)
                .cloned()
                .ok_or_else(|| CatalogError::UnknownService(service_id.to_string()))?;
            if me.role != Role::Admin && spec.owner != me.user_id {
                return Err(CatalogError::AccessDenied(format!("service {service_id} belongs to another user")));
            }
            if let Some(s) = st.subscriptions.values().find(|s| s.service_id == service_id) {
                return Err(CatalogError::Referenced(format!(
                    "service {service_id} is used by subscription {}",
                    s.subscription_id
                )));
            }
            self.persist("services", JournalOp::Delete, &spec)?;
            st.services.remove(service_id);
            self.broker.delete_service_topics(service_id)?;
            Ok(())
        })
    }

    pub fn service(&self, service_id: &str) -> Option<ServiceSpec> {
        self.read().services.get(service_id).cloned()
    }

    /// Services matching every given key of `filter` (`mode`, `name`,
    /// `owner`); other keys are ignored.
    pub fn discover_services(&self, filter: &BTreeMap<String, String>) -> Vec<ServiceSpec> {
        let st = self.read();
        let keep = |s: &ServiceSpec| {
            filter.iter().all(|(k, v)| match k.as_str() {
                "mode" => s.mode.as_str().eq_ignore_ascii_case(v),
                "name" => &s.name == v,
                "owner" => &s.owner == v,
                _ => true,
            })
        };
        sorted_by_id(
            st.services
                .iter()
                .filter(|(_, s)| keep(s))
                .map(|(k, v)| (k.clone(), v.clone())),
        )
    }

    // ---- subscriptions ---------------------------------------------------

    pub fn subscribe(&self, actor: &str, source_id: &str, service_id: &str) -> Result<Subscription> {
        self.mutate(actor, "subscribe", |st, me| {
            let src = st
                .sources
                .get(source_id)
                .ok_or_else(|| CatalogError::UnknownSource(source_id.to_string()))?;
            let svc = st
                .services
                .get(service_id)
                .ok_or_else(|| CatalogError::UnknownService(service_id.to_string()))?;
            if !src.readable_by(&me.user_id, me.role) {
                return Err(CatalogError::AccessDenied(format!("source {source_id} is not readable")));
            }
            if src.kind.service_mode() != svc.mode {
                return Err(CatalogError::KindMismatch(format!(
                    "{} source {source_id} cannot feed {} service {service_id}",
                    src.kind, svc.mode
                )));
            }
            let dup = st.subscriptions.values().any(|s| {
                s.user_id == me.user_id
                    && s.source_id == source_id
                    && s.service_id == service_id
                    && s.status == SubscriptionStatus::Active
            });
            if dup {
                return Err(CatalogError::AlreadySubscribed(format!("source {source_id} → service {service_id}")));
            }
            let id = st.next_id("subscriptions");
            let sub = Subscription {
                subscription_id: id.clone(),
                user_id: me.user_id.clone(),
                source_id: source_id.to_string(),
                service_id: service_id.to_string(),
                status: SubscriptionStatus::Active,
                created_ts: now_micros(),
            };
            self.persist("subscriptions", JournalOp::Put, &sub)?;
            st.subscriptions.insert(id, sub.clone());
            Ok(sub)
        })
    }

    pub fn set_subscription_status(&self, actor: &str, subscription_id: &str, status: SubscriptionStatus) -> Result<Subscription> {
        self.mutate(actor, "set_subscription_status", |st, me| {
            let mut sub = st
                .subscriptions
                .get(subscription_id)
                .cloned()
                .ok_or_else(|| CatalogError::UnknownSubscription(subscription_id.to_string()))?;
            if me.role != Role::Admin && sub.user_id != me.user_id {
                return Err(CatalogError::AccessDenied(format!(
                    "subscription {subscription_id} belongs to another user"
                )));
            }
            sub.status = status;
            self.persist("subscriptions", JournalOp::Put, &sub)?;
            st.subscriptions.insert(sub.subscription_id.clone(), sub.clone());
            Ok(sub)
        })
    }

    pub fn unsubscribe(&self, actor: &str, subscription_id: &str) -> Result<()> {
        self.mutate(actor, "unsubscribe", |st, me| {
            let sub = st
                .subscriptions
                .get(subscription_id)
                .cloned()
                .ok_or_else(|| CatalogError::UnknownSubscription(subscription_id.to_string()))?;
            if me.role != Role::Admin && sub.user_id != me.user_id {
                return Err(CatalogError::AccessDenied(format!(
                    "subscription {subscription_id} belongs to another user"
                )));
            }
            self.persist("subscriptions", JournalOp::Delete, &sub)?;
            st.subscriptions.remove(subscription_id);
            Ok(())
        })
    }

    /// The actor's subscriptions; all of them for ADMIN.
    pub fn list_subscriptions(&self, actor: &str) -> Result<Vec<Subscription>> {
        let a = self.actor(actor)?;
        let st = self.read();
        Ok(sorted_by_id(
            st.subscriptions
                .iter()
                .filter(|(_, s)| a.is_admin() || s.user_id == a.user_id)
                .map(|(k, v)| (k.clone(), v.clone())),
        ))
    }

    pub fn active_subscriptions(&self, service_id: &str) -> Vec<Subscription> {
        sorted_by_id(
            self.read()
                .subscriptions
                .iter()
                .filter(|(_, s)| s.service_id == service_id && s.status == SubscriptionStatus::Active)
                .map(|(k, v)| (k.clone(), v.clone())),
        )
    }

    // ---- results ---------------------------------------------------------

    pub fn record_ir(&self, record: &IrRecord) -> Result<()> {
        record.validate().map_err(CatalogError::InvalidRecord)?;
        let mut st = self.write();
        if !st.services.contains_key(&record.service_id) {
            return Err(CatalogError::UnknownService(record.service_id.clone()));
        }
        self.persist("ir", JournalOp::Put, record)?;
        st.ir.entry(record.service_id.clone()).or_default().push(record.clone());
        Ok(())
    }

    pub fn record_anomaly(&self, record: &AnomalyRecord) -> Result<()> {
        record.validate().map_err(CatalogError::InvalidRecord)?;
        let mut st = self.write();
        if !st.services.contains_key(&record.service_id) {
            return Err(CatalogError::UnknownService(record.service_id.clone()));
        }
        self.persist("anomalies", JournalOp::Put, record)?;
        st.anomalies
            .entry(record.service_id.clone())
            .or_default()
            .push(record.clone());
        Ok(())
    }

    fn check_result_access(&self, st: &CatalogState, actor: &str, service_id: &str) -> Result<()> {
        let me = st.users.get(actor).ok_or_else(|| CatalogError::UnknownUser(actor.to_string()))?;
        let svc = st
            .services
            .get(service_id)
            .ok_or_else(|| CatalogError::UnknownService(service_id.to_string()))?;
        if me.role == Role::Admin || svc.owner == me.user_id || st.has_active_subscription(actor, service_id) {
            Ok(())
        } else {
            Err(CatalogError::AccessDenied(format!(
                "results of service {service_id} need ownership or an active subscription"
            )))
        }
    }

    /// IR of a service in (batch_seq, frame_index) order, insertion order
    /// among equal keys.
    pub fn query_ir(&self, actor: &str, service_id: &str, filter: &IrFilter, limit: Option<usize>) -> Result<Vec<IrRecord>> {
        let st = self.read();
        self.check_result_access(&st, actor, service_id)?;
        let mut out: Vec<IrRecord> = st
            .ir
            .get(service_id)
            .map(|v| {
                v.iter()
                    .filter(|r| filter.seq_from.is_none_or(|s| r.batch_seq >= s))
                    .filter(|r| filter.seq_to.is_none_or(|s| r.batch_seq <= s))
                    .filter(|r| filter.kind.is_none_or(|k| r.kind == k))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();
        out.sort_by_key(|r| (r.batch_seq, r.frame_index));
        out.truncate(limit.unwrap_or(usize::MAX));
        Ok(out)
    }

    pub fn query_anomalies(&self, actor: &str, service_id: &str, limit: Option<usize>) -> Result<Vec<AnomalyRecord>> {
        let st = self.read();
        self.check_result_access(&st, actor, service_id)?;
        let mut out = st.anomalies.get(service_id).cloned().unwrap_or_default();
        out.sort_by_key(|r| (r.batch_seq, r.frame_index));
        out.truncate(limit.unwrap_or(usize::MAX));
        Ok(out)
    }

    pub fn stats(&self) -> CatalogStats {
        let st = self.read();
        CatalogStats {
            users: st.users.len(),
            sources: st.sources.len(),
            algorithms: st.algorithms.len(),
            services: st.services.len(),
            subscriptions: st.subscriptions.len(),
            ir: st.ir.values().map(Vec::len).sum(),
            anomalies: st.anomalies.values().map(Vec::len).sum(),
        }
    }

    /// Every stored IR record, for rebuilding derived indexes.
    pub fn all_ir(&self) -> Vec<IrRecord> {
        self.read().ir.values().flatten().cloned().collect()
    }
}

fn check_pipeline(st: &CatalogState, mode: ServiceMode, pipeline: &[PipelineStep]) -> Result<()> {
    if pipeline.is_empty() {
        return Err(CatalogError::PipelineTypeError("pipeline is empty".into()));
    }
    let mut prev: Option<DataKind> = None;
    for (i, step) in pipeline.iter().enumerate() {
        let d = st
            .algorithms
            .get(&step.algorithm_id)
            .ok_or_else(|| CatalogError::UnknownAlgorithm(step.algorithm_id.clone()))?;
        match prev {
            None if mode == ServiceMode::Biva && d.input_kind != DataKind::Frames => {
                return Err(CatalogError::PipelineTypeError(format!(
                    "BIVA pipelines read stored frames, but stage 0 expects {}",
                    d.input_kind
                )))
            }
            None if !matches!(d.input_kind, DataKind::Frames | DataKind::Vectors) => {
                return Err(CatalogError::PipelineTypeError(format!(
                    "stage 0 must read FRAMES or VECTORS, not {}",
                    d.input_kind
                )))
            }
            Some(p) if p != d.input_kind => {
                return Err(CatalogError::PipelineTypeError(format!(
                    "stage {} outputs {p} but stage {i} ({}) expects {}",
                    i - 1,
                    d.name,
                    d.input_kind
                )))
            }
            _ => {}
        }
        bind_params(&d.params_schema, &step.params).map_err(|e| CatalogError::BadParam(format!("stage {i}: {e}")))?;
        prev = Some(d.output_kind);
    }
    Ok(())
}

fn decode<T: DeserializeOwned>(store: &str, v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| CatalogError::CorruptJournal {
        store: store.to_string(),
        line: 0,
        reason: e.to_string(),
    })
}

fn apply(st: &mut CatalogState, store: &'static str, op: JournalOp, v: Value) -> Result<()> {
    let put = op == JournalOp::Put;
    match store {
        "users" => {
            let u: User = decode(store, v)?;
            st.saw_id(store, &u.user_id);
            if put {
                st.users.insert(u.user_id.clone(), u);
            } else {
                st.users.remove(&u.user_id);
            }
        }
        "logs" => {
            let e: LogEntry = decode(store, v)?;
            st.logs.entry(e.user_id.clone()).or_default().push(e);
        }
        "sources" => {
            let s: DataSource = decode(store, v)?;
            st.saw_id(store, &s.source_id);
            if put {
                st.sources.insert(s.source_id.clone(), s);
            } else {
                st.sources.remove(&s.source_id);
            }
        }
        "algorithms" => {
            let a: AlgorithmDescriptor = decode(store, v)?;
            st.saw_id(store, &a.algorithm_id);
            if put {
                st.algorithms.insert(a.algorithm_id.clone(), a);
            } else {
                st.algorithms.remove(&a.algorithm_id);
            }
        }
        "services" => {
            let s: ServiceSpec = decode(store, v)?;
            st.saw_id(store, &s.service_id);
            if put {
                st.services.insert(s.service_id.clone(), s);
            } else {
                st.services.remove(&s.service_id);
            }
        }
        "subscriptions" => {
            let s: Subscription = decode(store, v)?;
            st.saw_id(store, &s.subscription_id);
            if put {
                st.subscriptions.insert(s.subscription_id.clone(), s);
            } else {
                st.subscriptions.remove(&s.subscription_id);
            }
        }
        "ir" => {
            let r: IrRecord = decode(store, v)?;
            st.ir.entry(r.service_id.clone()).or_default().push(r);
        }
        "anomalies" => {
            let r: AnomalyRecord = decode(store, v)?;
            st.anomalies.entry(r.service_id.clone()).or_default().push(r);
        }
        _ => unreachable!("unknown store {store}"),
    }
    Ok(())
}
