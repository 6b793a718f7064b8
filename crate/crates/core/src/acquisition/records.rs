//! Intermediate-result and anomaly records, and their one-line JSON encoding.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IrKind {
    Feature,
    Label,
    Scalar,
    Boundary,
}

impl IrKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IrKind::Feature => "feature",
            IrKind::Label => "label",
            IrKind::Scalar => "scalar",
            IrKind::Boundary => "boundary",
        }
    }
}

impl fmt::Display for IrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for IrKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feature" => Ok(IrKind::Feature),
            "label" => Ok(IrKind::Label),
            "scalar" => Ok(IrKind::Scalar),
            "boundary" => Ok(IrKind::Boundary),
            other => Err(format!("unknown IR kind '{other}'")),
        }
    }
}

/// Output of one algorithm stage for one frame (or a whole batch when
/// `frame_index` is -1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrRecord {
    pub service_id: String,
    pub algorithm_id: String,
    pub source_id: String,
    pub batch_seq: u64,
    pub frame_index: i64,
    pub ts_micros: i64,
    pub kind: IrKind,
    #[serde(default)]
    pub vector: Option<Vec<f64>>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub score: Option<f64>,
}

/// Identifies the logical record so that at-least-once duplicates can be dropped.
pub type IrKey = (String, String, u64, i64, String);

impl IrRecord {
    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            IrKind::Feature if self.vector.is_none() => {
                return Err("feature record without vector".into())
            }
            IrKind::Label if self.label.is_none() => return Err("label record without label".into()),
            _ => {}
        }
        if let Some(v) = &self.vector {
            if v.iter().any(|x| !x.is_finite()) {
                return Err("vector holds a non-finite value".into());
            }
        }
        if matches!(self.score, Some(s) if !s.is_finite()) {
            return Err("score is not finite".into());
        }
        Ok(())
    }

    pub fn dedup_key(&self) -> IrKey {
        (
            self.service_id.clone(),
            self.source_id.clone(),
            self.batch_seq,
            self.frame_index,
            self.algorithm_id.clone(),
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("IR record serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, String> {
        let r: Self = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        r.validate()?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyRecord {
    pub service_id: String,
    pub source_id: String,
    pub batch_seq: u64,
    pub frame_index: i64,
    #[serde(rename = "type")]
    pub anomaly_type: String,
    pub score: f64,
    pub details: String,
}

impl AnomalyRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !self.score.is_finite() {
            return Err("anomaly score is not finite".into());
        }
        Ok(())
    }

    pub fn dedup_key(&self) -> IrKey {
        (
            self.service_id.clone(),
            self.source_id.clone(),
            self.batch_seq,
            self.frame_index,
            self.anomaly_type.clone(),
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("anomaly record serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, String> {
        let r: Self = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        r.validate()?;
        Ok(r)
    }
}

/// Either kind of pipeline output.
#[derive(Debug, Clone, PartialEq)]
pub enum ResultRecord {
    Ir(IrRecord),
    Anomaly(AnomalyRecord),
}

impl ResultRecord {
    pub fn service_id(&self) -> &str {
        match self {
            ResultRecord::Ir(r) => &r.service_id,
            ResultRecord::Anomaly(r) => &r.service_id,
        }
    }
}

impl From<IrRecord> for ResultRecord {
    fn from(r: IrRecord) -> Self {
        ResultRecord::Ir(r)
    }
}

impl From<AnomalyRecord> for ResultRecord {
    fn from(r: AnomalyRecord) -> Self {
        ResultRecord::Anomaly(r)
    }
}
