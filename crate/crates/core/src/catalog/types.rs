use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::access::Role;
use crate::acquisition::SourceSpec;
use crate::stages::{DataKind, ParamSpec, StageKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub user_id: String,
    pub name: String,
    pub role: Role,
    pub created_ts: i64,
}

/// One line of a user's action log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub user_id: String,
    pub ts: i64,
    pub op: String,
    pub outcome: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SourceMode {
    Stream,
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ServiceMode {
    Riva,
    Biva,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SubscriptionStatus {
    Active,
    Stopped,
}

macro_rules! text_enum {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl $t {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$v => $s),+ }
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s.to_ascii_uppercase().as_str() {
                    $($s => Ok(Self::$v),)+
                    other => Err(format!("unknown {} '{other}'", stringify!($t))),
                }
            }
        }
    };
}

text_enum!(SourceMode, Stream => "STREAM", Batch => "BATCH");
text_enum!(ServiceMode, Riva => "RIVA", Biva => "BIVA");
text_enum!(SubscriptionStatus, Active => "ACTIVE", Stopped => "STOPPED");

impl SourceMode {
    /// The only service mode a source of this kind may feed.
    pub fn service_mode(self) -> ServiceMode {
        match self {
            SourceMode::Stream => ServiceMode::Riva,
            SourceMode::Batch => ServiceMode::Biva,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub source_id: String,
    pub owner: String,
    pub kind: SourceMode,
    pub spec: SourceSpec,
    #[serde(default)]
    pub access: Vec<String>,
}

impl DataSource {
    pub fn readable_by(&self, user_id: &str, role: Role) -> bool {
        role == Role::Admin || self.owner == user_id || self.access.iter().any(|u| u == user_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmDescriptor {
    pub algorithm_id: String,
    pub owner: String,
    /// Name of the built-in implementation this descriptor binds.
    pub name: String,
    pub version: String,
    pub stage_kind: StageKind,
    pub input_kind: DataKind,
    pub output_kind: DataKind,
    #[serde(default)]
    pub params_schema: Vec<ParamSpec>,
}

/// What a caller supplies to register an algorithm; the catalog assigns the
/// id and owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmRequest {
    pub name: String,
    #[serde(default = "default_version")]
    pub version: String,
    pub stage_kind: StageKind,
    pub input_kind: DataKind,
    pub output_kind: DataKind,
    #[serde(default)]
    pub params_schema: Vec<ParamSpec>,
}

fn default_version() -> String {
    "1.0".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineStep {
    pub algorithm_id: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    /// Overrides the implementation's default IR emission.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit_ir: Option<bool>,
}

impl PipelineStep {
    pub fn new(algorithm_id: impl Into<String>, params: Value) -> Self {
        Self {
            algorithm_id: algorithm_id.into(),
            params: match params {
                Value::Object(m) => m,
                _ => Map::new(),
            },
            emit_ir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub service_id: String,
    pub owner: String,
    pub name: String,
    pub mode: ServiceMode,
    pub pipeline: Vec<PipelineStep>,
    #[serde(default)]
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub subscription_id: String,
    pub user_id: String,
    pub source_id: String,
    pub service_id: String,
    pub status: SubscriptionStatus,
    pub created_ts: i64,
}

/// Filter for IR queries; bounds on `batch_seq` are inclusive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IrFilter {
    #[serde(default)]
    pub seq_from: Option<u64>,
    #[serde(default)]
    pub seq_to: Option<u64>,
    #[serde(default)]
    pub kind: Option<crate::acquisition::IrKind>,
}
