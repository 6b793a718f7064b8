//! The `siat` command line: a thin client over the HTTP API, or over an
//! embedded instance with `--local`.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use siat_core::stages::lookup;

use crate::app::{ApiRequest, ApiResponse, App, Method};
use crate::server::{self, TOKEN_HEADER};

#[derive(Debug, Parser)]
#[command(name = "siat", version, about = "Video analytics platform: server and client")]
pub struct Cli {
    /// Server base URL.
    #[arg(long, global = true, env = "SIAT_SERVER", default_value = "http://127.0.0.1:8080")]
    server: String,
    /// Session token from `siat login`.
    #[arg(long, global = true, env = "SIAT_TOKEN")]
    token: Option<String>,
    /// Print raw JSON responses.
    #[arg(long, global = true)]
    json: bool,
    /// Operate on the data directory in-process instead of through a server.
    #[arg(long, global = true)]
    local: bool,
    /// Identity used in --local mode.
    #[arg(long = "as", global = true, default_value = "root")]
    local_user: String,
    #[arg(long, global = true, env = "SIAT_DATA_DIR", default_value = "siat-data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Open a session and print its token.
    Login { name: String },
    Health,
    #[command(subcommand)]
    User(UserCmd),
    #[command(subcommand)]
    Source(SourceCmd),
    #[command(subcommand)]
    Algorithm(AlgorithmCmd),
    #[command(subcommand)]
    Service(ServiceCmd),
    /// Subscribe a source to a service.
    Subscribe {
        #[arg(long)]
        source: String,
        #[arg(long)]
        service: String,
    },
    #[command(subcommand)]
    Subscription(SubscriptionCmd),
    /// Read frames from a source into a service's input topic.
    Ingest {
        service: String,
        #[arg(long)]
        source: String,
        #[arg(long)]
        frames: Option<u64>,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        /// none or deflate.
        #[arg(long, default_value = "none")]
        compression: String,
    },
    /// Process pending batches of a service.
    Run(RunArgs),
    /// List a service's intermediate results.
    Ir {
        service: String,
        #[arg(long)]
        seq_from: Option<u64>,
        #[arg(long)]
        seq_to: Option<u64>,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// List a service's anomalies.
    Anomalies {
        service: String,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run a knowledge query.
    Kq { query: String },
    #[command(subcommand)]
    Object(ObjectCmd),
}

#[derive(Debug, Subcommand)]
enum UserCmd {
    Create {
        name: String,
        #[arg(long)]
        role: String,
    },
    List,
    Role { user_id: String, role: String },
    Log { user_id: String },
}

#[derive(Debug, Subcommand)]
enum SourceCmd {
    /// Register a source; the spec is JSON or @file.
    Add {
        /// STREAM or BATCH.
        #[arg(long, default_value = "STREAM")]
        kind: String,
        #[arg(long)]
        spec: String,
    },
    List,
    Grant { source_id: String, user_id: String },
    Delete { source_id: String },
}

#[derive(Debug, Subcommand)]
enum AlgorithmCmd {
    /// Register a built-in implementation; kinds default to its signature.
    Register {
        name: String,
        #[arg(long)]
        stage_kind: Option<String>,
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        output: Option<String>,
        #[arg(long)]
        version: Option<String>,
    },
    List,
    Delete { algorithm_id: String },
}

#[derive(Debug, Subcommand)]
enum ServiceCmd {
    /// Create a service from a pipeline (JSON array of steps, or a full
    /// request object) given as JSON or a file path.
    Create {
        #[arg(long)]
        pipeline: String,
        #[arg(long, default_value = "RIVA")]
        mode: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// List services, optionally filtered by key=value pairs.
    List { filters: Vec<String> },
    Show { service_id: String },
    Delete { service_id: String },
}

#[derive(Debug, Subcommand)]
enum SubscriptionCmd {
    List,
    Status { subscription_id: String, status: String },
    Delete { subscription_id: String },
}

#[derive(Debug, Args)]
struct RunArgs {
    service: String,
    #[arg(long)]
    max_batches: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Consume the feature results of this upstream service.
    #[arg(long)]
    upstream: Option<String>,
    /// Stored objects (owner/SPACE/path) for a BIVA service.
    #[arg(long = "object")]
    objects: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum ObjectCmd {
    Put {
        owner: String,
        space: String,
        path: String,
        file: PathBuf,
    },
    Get {
        owner: String,
        space: String,
        path: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    List {
        owner: String,
        space: String,
        #[arg(long, default_value = "")]
        prefix: String,
    },
}

/// Client-side failure, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Api(ApiResponse),
    Transport(String),
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Api(r) if r.status < 500 => 1,
            _ => 2,
        }
    }
}

enum Client {
    Http {
        agent: ureq::Agent,
        base: String,
        token: Option<String>,
    },
    Local {
        app: Box<App>,
        token: Option<String>,
    },
}

impl Client {
    fn call(&self, mut req: ApiRequest) -> Result<Value, Failure> {
        let resp = match self {
            Client::Local { app, token } => {
                req.token = token.clone();
                app.handle(&req)
            }
            Client::Http { agent, base, token } => http_call(agent, base, token.as_deref(), &req)?,
        };
        if resp.is_success() {
            Ok(resp.body)
        } else {
            Err(Failure::Api(resp))
        }
    }
}

fn http_call(agent: &ureq::Agent, base: &str, token: Option<&str>, req: &ApiRequest) -> Result<ApiResponse, Failure> {
    let url = format!("{}{}", base.trim_end_matches('/'), req.path);
    let transport = |e: ureq::Error| Failure::Transport(format!("{url}: {e}"));
    let mut resp = match req.method {
        Method::Get | Method::Delete => {
            let mut r = if req.method == Method::Get {
                agent.get(&url)
            } else {
                agent.delete(&url)
            };
            if let Some(t) = token {
                r = r.header(TOKEN_HEADER, t);
            }
            r.query_pairs(req.query.iter().map(|(k, v)| (k.as_str(), v.as_str())))
                .call()
                .map_err(transport)?
        }
        Method::Post | Method::Put => {
            let mut r = if req.method == Method::Post {
                agent.post(&url)
            } else {
                agent.put(&url)
            };
            if let Some(t) = token {
                r = r.header(TOKEN_HEADER, t);
            }
            r.query_pairs(req.query.iter().map(|(k, v)| (k.as_str(), v.as_str())))
                .send_json(&req.body)
                .map_err(transport)?
        }
    };
    let status = resp.status().as_u16();
    let body: Value = resp
        .body_mut()
        .read_json()
        .map_err(|e| Failure::Transport(format!("{url}: unreadable response: {e}")))?;
    Ok(ApiResponse { status, body })
}

/// A JSON argument given inline or as `@file` or as a path to an existing
/// file.
fn json_arg(arg: &str) -> Result<Value, Failure> {
    let text = if let Some(p) = arg.strip_prefix('@') {
        fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{p}: {e}")))?
    } else if !arg.trim_start().starts_with(['{', '[']) && std::path::Path::new(arg).is_file() {
        fs::read_to_string(arg).map_err(|e| Failure::Usage(format!("{arg}: {e}")))?
    } else {
        arg.to_string()
    };
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid JSON: {e}")))
}

fn post(path: &str, body: Value) -> ApiRequest {
    ApiRequest::new(Method::Post, path).body(body)
}

fn get(path: &str) -> ApiRequest {
    ApiRequest::new(Method::Get, path)
}

fn delete(path: &str) -> ApiRequest {
    ApiRequest::new(Method::Delete, path)
}

/// How a successful response is shown without `--json`.
enum Show {
    /// One field of the body.
    Field(&'static str),
    /// One line per element, with the named fields tab-separated.
    Rows(&'static [&'static str]),
    Bindings,
    Pretty,
}

fn render(v: &Value, show: &Show) -> String {
    let text = |v: &Value| match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".to_string(),
        other => other.to_string(),
    };
    match show {
        Show::Field(f) => text(&v[*f]),
        Show::Rows(fields) => v
            .as_array()
            .map(|rows| {
                rows.iter()
                    .map(|r| fields.iter().map(|f| text(&r[*f])).collect::<Vec<_>>().join("\t"))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .unwrap_or_default(),
        Show::Bindings => {
            let rows = v["rows"].as_array().cloned().unwrap_or_default();
            let mut out: Vec<String> = rows
                .iter()
                .map(|r| {
                    r.as_object()
                        .map(|m| m.iter().map(|(k, x)| format!("?{k}={}", text(x))).collect::<Vec<_>>().join("\t"))
                        .unwrap_or_default()
                })
                .collect();
            out.push(format!("({} rows)", rows.len()));
            out.join("\n")
        }
        Show::Pretty => serde_json::to_string_pretty(v).unwrap_or_default(),
    }
}

fn request(cmd: Command) -> Result<(ApiRequest, Show), Failure> {
    use Command as C;
    Ok(match cmd {
        C::Serve { .. } => unreachable!("serve is handled before dispatch"),
        C::Login { name } => (post("/sessions", json!({ "name": name })), Show::Field("token")),
        C::Health => (get("/health"), Show::Field("status")),
        C::User(u) => match u {
            UserCmd::Create { name, role } => (
                post("/users", json!({"name": name, "role": role.to_ascii_uppercase()})),
                Show::Field("user_id"),
            ),
            UserCmd::List => (get("/users"), Show::Rows(&["user_id", "name", "role"])),
            UserCmd::Role { user_id, role } => (
                post(&format!("/users/{user_id}/role"), json!({"role": role.to_ascii_uppercase()})),
                Show::Field("role"),
            ),
            UserCmd::Log { user_id } => (
                get(&format!("/users/{user_id}/log")),
                Show::Rows(&["ts", "op", "outcome"]),
            ),
        },
        C::Source(s) => match s {
            SourceCmd::Add { kind, spec } => (
                post("/sources", json!({"kind": kind.to_ascii_uppercase(), "spec": json_arg(&spec)?})),
                Show::Field("source_id"),
            ),
            SourceCmd::List => (get("/sources"), Show::Rows(&["source_id", "owner", "kind"])),
            SourceCmd::Grant { source_id, user_id } => (
                post(&format!("/sources/{source_id}/grant"), json!({ "user_id": user_id })),
                Show::Field("source_id"),
            ),
            SourceCmd::Delete { source_id } => (delete(&format!("/sources/{source_id}")), Show::Field("deleted")),
        },
        C::Algorithm(a) => match a {
            AlgorithmCmd::Register {
                name,
                stage_kind,
                input,
                output,
                version,
            } => {
                let imp = lookup(&name);
                let pick = |given: Option<String>, default: Option<String>, what: &str| {
                    given
                        .map(|s| s.to_ascii_uppercase())
                        .or(default)
                        .ok_or_else(|| Failure::Usage(format!("unknown implementation '{name}': --{what} is required")))
                };
                let mut body = json!({
                    "name": name,
                    "stage_kind": pick(stage_kind, imp.map(|i| i.stage_kind.to_string()), "stage-kind")?,
                    "input_kind": pick(input, imp.map(|i| i.inputs[0].to_string()), "input")?,
                    "output_kind": pick(output, imp.map(|i| i.output.to_string()), "output")?,
                });
                if let Some(v) = version {
                    body["version"] = json!(v);
                }
                (post("/algorithms", body), Show::Field("algorithm_id"))
            }
            AlgorithmCmd::List => (
                get("/algorithms"),
                Show::Rows(&["algorithm_id", "name", "stage_kind", "input_kind", "output_kind"]),
            ),
            AlgorithmCmd::Delete { algorithm_id } => {
                (delete(&format!("/algorithms/{algorithm_id}")), Show::Field("deleted"))
            }
        },
        C::Service(s) => match s {
            ServiceCmd::Create { pipeline, mode, name } => {
                let body = match json_arg(&pipeline)? {
                    steps @ Value::Array(_) => {
                        let mut b = json!({"mode": mode.to_ascii_uppercase(), "pipeline": steps});
                        if let Some(n) = name {
                            b["name"] = json!(n);
                        }
                        b
                    }
                    full @ Value::Object(_) => full,
                    _ => return Err(Failure::Usage("pipeline must be a JSON array or object".into())),
                };
                (post("/services", body), Show::Field("service_id"))
            }
            ServiceCmd::List { filters } => {
                let mut req = get("/services");
                for f in filters {
                    let (k, v) = f
                        .split_once('=')
                        .ok_or_else(|| Failure::Usage(format!("filter '{f}' is not key=value")))?;
                    req = req.query(k, v);
                }
                (req, Show::Rows(&["service_id", "owner", "mode", "name"]))
            }
            ServiceCmd::Show { service_id } => (get(&format!("/services/{service_id}")), Show::Pretty),
            ServiceCmd::Delete { service_id } => (delete(&format!("/services/{service_id}")), Show::Field("deleted")),
        },
        C::Subscribe { source, service } => (
            post("/subscriptions", json!({"source_id": source, "service_id": service})),
            Show::Field("subscription_id"),
        ),
        C::Subscription(s) => match s {
            SubscriptionCmd::List => (
                get("/subscriptions"),
                Show::Rows(&["subscription_id", "user_id", "source_id", "service_id", "status"]),
            ),
            SubscriptionCmd::Status { subscription_id, status } => (
                post(
                    &format!("/subscriptions/{subscription_id}/status"),
                    json!({"status": status.to_ascii_uppercase()}),
                ),
                Show::Field("status"),
            ),
            SubscriptionCmd::Delete { subscription_id } => (
                delete(&format!("/subscriptions/{subscription_id}")),
                Show::Field("deleted"),
            ),
        },
        C::Ingest {
            service,
            source,
            frames,
            batch_size,
            compression,
        } => (
            post(
                &format!("/services/{service}/ingest"),
                json!({
                    "source_id": source,
                    "frames": frames,
                    "batch_size": batch_size,
                    "compression": compression.to_ascii_uppercase(),
                }),
            ),
            Show::Pretty,
        ),
        C::Run(r) => {
            let mut objects = Vec::new();
            for o in &r.objects {
                let mut it = o.splitn(3, '/');
                match (it.next(), it.next(), it.next()) {
                    (Some(u), Some(s), Some(p)) => {
                        objects.push(json!({"user_id": u, "space": s.to_ascii_uppercase(), "path": p}))
                    }
                    _ => return Err(Failure::Usage(format!("object '{o}' is not owner/SPACE/path"))),
                }
            }
            let mut body = json!({"max_batches": r.max_batches, "n_workers": r.workers});
            if let Some(up) = r.upstream {
                body["upstream_id"] = json!(up);
            }
            if !objects.is_empty() {
                body["objects"] = json!(objects);
            }
            (post(&format!("/services/{}/run", r.service), body), Show::Pretty)
        }
        C::Ir {
            service,
            seq_from,
            seq_to,
            kind,
            limit,
        } => {
            let mut req = get(&format!("/services/{service}/ir"));
            let params: [(&str, Option<String>); 4] = [
                ("seq_from", seq_from.map(|v| v.to_string())),
                ("seq_to", seq_to.map(|v| v.to_string())),
                ("kind", kind),
                ("limit", limit.map(|v| v.to_string())),
            ];
            for (k, v) in params {
                if let Some(v) = v {
                    req = req.query(k, v);
                }
            }
            (req, Show::Rows(&["batch_seq", "frame_index", "kind", "algorithm_id"]))
        }
        C::Anomalies { service, limit } => {
            let mut req = get(&format!("/services/{service}/anomalies"));
            if let Some(l) = limit {
                req = req.query("limit", l);
            }
            (req, Show::Rows(&["batch_seq", "frame_index", "type", "score"]))
        }
        C::Kq { query } => (post("/query", json!({ "q": query })), Show::Bindings),
        C::Object(o) => match o {
            ObjectCmd::Put {
                owner,
                space,
                path,
                file,
            } => {
                let bytes = fs::read(&file).map_err(|e| Failure::Usage(format!("{}: {e}", file.display())))?;
                (
                    post(
                        "/objects",
                        json!({
                            "owner": owner,
                            "space": space.to_ascii_uppercase(),
                            "path": path,
                            "data_b64": B64.encode(bytes),
                        }),
                    ),
                    Show::Field("path"),
                )
            }
            ObjectCmd::Get { owner, space, path, .. } => (get(&format!("/objects/{owner}/{space}/{path}")), Show::Pretty),
            ObjectCmd::List { owner, space, prefix } => (
                get(&format!("/objects/{owner}/{space}")).query("prefix", prefix),
                Show::Rows(&["path", "size"]),
            ),
        },
    })
}

fn serve(cli: &Cli, host: &str, port: u16) -> Result<(), Failure> {
    let app = App::open(&cli.data_dir).map_err(|e| Failure::Transport(e.to_string()))?;
    let root = app.is_fresh().then(|| app.root_session());
    let handle = server::spawn(Arc::new(app), &format!("{host}:{port}")).map_err(|e| Failure::Transport(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    if let Some(s) = root {
        let _ = writeln!(out, "root token: {}", s.token);
    }
    let _ = writeln!(out, "listening on {}", handle.url());
    let _ = out.flush();
    drop(out);
    handle.wait().map_err(|e| Failure::Transport(e.to_string()))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Command::Serve { host, port } = &cli.command {
        return serve(&cli, host, *port);
    }
    let client = if cli.local {
        let app = App::open(&cli.data_dir).map_err(|e| Failure::Transport(e.to_string()))?;
        let token = match &cli.token {
            Some(t) => Some(t.clone()),
            None => {
                let r = app.handle(&post("/sessions", json!({ "name": cli.local_user })));
                if !r.is_success() {
                    return Err(Failure::Api(r));
                }
                r.body["token"].as_str().map(str::to_string)
            }
        };
        Client::Local { app: Box::new(app), token }
    } else {
        let config = ureq::Agent::config_builder().http_status_as_error(false).build();
        Client::Http {
            agent: config.into(),
            base: cli.server.clone(),
            token: cli.token.clone(),
        }
    };
    let save_to = match &cli.command {
        Command::Object(ObjectCmd::Get { out, .. }) => out.clone(),
        _ => None,
    };
    let (req, show) = request(cli.command)?;
    let body = client.call(req)?;
    if let Some(path) = save_to {
        let data = B64
            .decode(body["data_b64"].as_str().unwrap_or_default())
            .map_err(|e| Failure::Transport(format!("bad object payload: {e}")))?;
        fs::write(&path, data).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    let text = if cli.json {
        body.to_string()
    } else {
        render(&body, &show)
    };
    if !text.is_empty() {
        println!("{text}");
    }
    Ok(())
}

/// Runs the command line and returns the process exit code: 0 on success, 1
/// for usage and client errors, 2 for server and transport errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let json = cli.json;
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            let code = f.exit_code();
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Transport(m) => eprintln!("error: {m}"),
                Failure::Api(r) if json => println!("{}", r.body),
                Failure::Api(r) => eprintln!(
                    "error ({}): {}: {}",
                    r.status,
                    r.body["code"].as_str().unwrap_or("Error"),
                    r.body["error"].as_str().unwrap_or("")
                ),
            }
            code
        }
    }
}

