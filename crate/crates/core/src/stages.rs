//! Registry of built-in stage implementations and their execution over
//! per-frame items.
//!
//! Every implementation declares a stage kind, the data kinds it reads and
//! writes, a parameter schema and whether it may run on a slice of a batch
//! independently of the rest ("partitionable").

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::acquisition::IrKind;
use crate::framewire::{Frame, PixelFormat};
use crate::mining::{kmeans_assign, knn_predict, KMeansModel, KnnModel, LinRegModel, MiningError};
use crate::processing::{
    adjust, crop, detect_shot_boundaries, equalize, histogram_feature, mean_abs_diff, resize, to_grayscale,
    PcaModel, ProcessingError, ResizeMethod,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StageKind {
    Preprocess,
    Feature,
    Reduce,
    Model,
    Detect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DataKind {
    Frames,
    Vectors,
    Labels,
    Anomalies,
}

macro_rules! upper_enum_text {
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
                    _ => Err(format!("unknown {} '{s}'", stringify!($t))),
                }
            }
        }
    };
}

upper_enum_text!(StageKind, Preprocess => "PREPROCESS", Feature => "FEATURE", Reduce => "REDUCE", Model => "MODEL", Detect => "DETECT");
upper_enum_text!(DataKind, Frames => "FRAMES", Vectors => "VECTORS", Labels => "LABELS", Anomalies => "ANOMALIES");

impl StageKind {
    /// Whether `input → output` is a legal signature for this kind of stage.
    pub fn allows(self, input: DataKind, output: DataKind) -> bool {
        use DataKind::*;
        match self {
            StageKind::Preprocess => input == Frames && output == Frames,
            StageKind::Feature => input == Frames && output == Vectors,
            StageKind::Reduce => input == Vectors && output == Vectors,
            StageKind::Model => input == Vectors && output == Labels,
            StageKind::Detect => matches!(input, Labels | Vectors) && output == Anomalies,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Int,
    Float,
    String,
    Bool,
    /// Path of a JSON model blob in the service owner's MODEL space.
    Model,
}

impl ParamType {
    fn accepts(self, v: &Value) -> bool {
        match self {
            ParamType::Int => v.is_i64() || v.is_u64(),
            ParamType::Float => v.is_number(),
            ParamType::String | ParamType::Model => v.is_string(),
            ParamType::Bool => v.is_boolean(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub param_type: ParamType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

impl ParamSpec {
    fn new(name: &str, param_type: ParamType, default: Option<Value>) -> Self {
        Self {
            name: name.to_string(),
            param_type,
            default,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Implementation {
    pub name: &'static str,
    pub stage_kind: StageKind,
    pub inputs: &'static [DataKind],
    pub output: DataKind,
    pub params: Vec<ParamSpec>,
    /// Needs frame adjacency, so it always sees the whole batch.
    pub needs_whole_batch: bool,
    pub emit_ir_default: bool,
}

impl Implementation {
    pub fn accepts_input(&self, kind: DataKind) -> bool {
        self.inputs.contains(&kind)
    }
}

static REGISTRY: LazyLock<Vec<Implementation>> = LazyLock::new(|| {
    use DataKind::*;
    use ParamType as P;
    use StageKind as S;
    let p = ParamSpec::new;
    let imp = |name, stage_kind, inputs, output, params, whole| Implementation {
        name,
        stage_kind,
        inputs,
        output,
        params,
        needs_whole_batch: whole,
        emit_ir_default: matches!(stage_kind, S::Feature | S::Reduce | S::Model),
    };
    vec![
        imp("grayscale", S::Preprocess, &[Frames], Frames, vec![], false),
        imp(
            "resize",
            S::Preprocess,
            &[Frames],
            Frames,
            vec![
                p("width", P::Int, None),
                p("height", P::Int, None),
                p("method", P::String, Some(Value::from("bilinear"))),
            ],
            false,
        ),
        imp(
            "adjust",
            S::Preprocess,
            &[Frames],
            Frames,
            vec![p("alpha", P::Float, Some(Value::from(1.0))), p("beta", P::Float, Some(Value::from(0.0)))],
            false,
        ),
        imp("equalize", S::Preprocess, &[Frames], Frames, vec![], false),
        imp(
            "crop",
            S::Preprocess,
            &[Frames],
            Frames,
            vec![
                p("x", P::Int, Some(Value::from(0))),
                p("y", P::Int, Some(Value::from(0))),
                p("width", P::Int, None),
                p("height", P::Int, None),
            ],
            false,
        ),
        imp(
            "extract-frames",
            S::Preprocess,
            &[Frames],
            Frames,
            vec![
                p("policy", P::String, Some(Value::from("ALL"))),
                p("k", P::Int, Some(Value::from(1))),
                p("tau", P::Float, Some(Value::from(50.0))),
            ],
            false,
        ),
        imp("histogram", S::Feature, &[Frames], Vectors, vec![p("bins", P::Int, Some(Value::from(8)))], false),
        imp("motion-energy", S::Feature, &[Frames], Vectors, vec![], true),
        imp(
            "boundary-detector",
            S::Feature,
            &[Frames],
            Vectors,
            vec![p("tau", P::Float, Some(Value::from(50.0)))],
            true,
        ),
        imp(
            "pca-transform",
            S::Reduce,
            &[Vectors],
            Vectors,
            vec![p("model", P::Model, None), p("k", P::Int, Some(Value::from(0)))],
            false,
        ),
        imp("kmeans-scorer", S::Model, &[Vectors], Labels, vec![p("model", P::Model, None)], false),
        imp(
            "knn-classifier",
            S::Model,
            &[Vectors],
            Labels,
            vec![p("model", P::Model, None), p("k", P::Int, Some(Value::from(1)))],
            false,
        ),
        imp("linreg-predictor", S::Model, &[Vectors], Labels, vec![p("model", P::Model, None)], false),
        imp(
            "threshold",
            S::Detect,
            &[Labels, Vectors],
            Anomalies,
            vec![
                p("field", P::String, Some(Value::from("score"))),
                p("theta", P::Float, Some(Value::from(0.0))),
                p("type", P::String, Some(Value::from("outlier"))),
            ],
            false,
        ),
        imp(
            "promote-boundary",
            S::Detect,
            &[Vectors, Labels],
            Anomalies,
            vec![p("type", P::String, Some(Value::from("shot_boundary")))],
            false,
        ),
    ]
});

pub fn registry() -> &'static [Implementation] {
    &REGISTRY
}

pub fn lookup(name: &str) -> Option<&'static Implementation> {
    REGISTRY.iter().find(|i| i.name == name)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("unknown implementation '{0}'")]
    UnknownImplementation(String),
    #[error("bad parameter '{name}': {reason}")]
    BadParam { name: String, reason: String },
    #[error("missing model '{0}'")]
    MissingModel(String),
    #[error("model '{path}' is invalid: {reason}")]
    BadModel { path: String, reason: String },
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Processing(#[from] ProcessingError),
    #[error(transparent)]
    Mining(#[from] MiningError),
}

/// Checks `bindings` against `schema` and fills in defaults. Unknown names,
/// wrong types and missing required values are rejected.
pub fn bind_params(schema: &[ParamSpec], bindings: &Map<String, Value>) -> Result<BTreeMap<String, Value>, StageError> {
    for name in bindings.keys() {
        if !schema.iter().any(|p| &p.name == name) {
            return Err(StageError::BadParam {
                name: name.clone(),
                reason: "not in the parameter schema".into(),
            });
        }
    }
    let mut out = BTreeMap::new();
    for spec in schema {
        let v = match bindings.get(&spec.name).or(spec.default.as_ref()) {
            Some(v) => v,
            None => {
                return Err(StageError::BadParam {
                    name: spec.name.clone(),
                    reason: "required".into(),
                })
            }
        };
        if !spec.param_type.accepts(v) {
            return Err(StageError::BadParam {
                name: spec.name.clone(),
                reason: format!("expected {:?}, got {v}", spec.param_type).to_lowercase(),
            });
        }
        out.insert(spec.name.clone(), v.clone());
    }
    Ok(out)
}

/// Model blob formats, one per model-backed implementation.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedModel {
    KMeans(KMeansModel),
    Pca(PcaModel),
    Knn(KnnModel),
    LinReg(LinRegModel),
}

impl LoadedModel {
    pub fn parse(implementation: &str, path: &str, bytes: &[u8]) -> Result<Self, StageError> {
        let bad = |reason: String| StageError::BadModel {
            path: path.to_string(),
            reason,
        };
        let m = match implementation {
            "kmeans-scorer" => {
                let m: KMeansModel = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
                m.validate().map_err(|e| bad(e.to_string()))?;
                LoadedModel::KMeans(m)
            }
            "pca-transform" => {
                let m: PcaModel = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
                if m.components.is_empty() || m.components.iter().any(|c| c.len() != m.mean.len()) {
                    return Err(bad("components must be non-empty rows matching the mean length".into()));
                }
                if m.eigenvalues.len() != m.components.len() {
                    return Err(bad("one eigenvalue per component required".into()));
                }
                LoadedModel::Pca(m)
            }
            "knn-classifier" => {
                let m: KnnModel = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
                m.validate().map_err(|e| bad(e.to_string()))?;
                LoadedModel::Knn(m)
            }
            "linreg-predictor" => {
                let m: LinRegModel = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
                m.validate().map_err(|e| bad(e.to_string()))?;
                LoadedModel::LinReg(m)
            }
            other => return Err(bad(format!("'{other}' takes no model"))),
        };
        Ok(m)
    }
}

/// A detection produced by a DETECT stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub anomaly_type: String,
    pub score: f64,
    pub details: String,
}

/// One frame's worth of data flowing between stages. `frame_index` is
/// relative to the batch the item came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Item {
    pub frame_index: i64,
    pub frame: Option<Frame>,
    pub vector: Option<Vec<f64>>,
    pub label: Option<String>,
    pub score: Option<f64>,
    pub boundary: bool,
    pub detection: Option<Detection>,
}

impl Item {
    pub fn from_frame(frame_index: i64, frame: Frame) -> Self {
        Self {
            frame_index,
            frame: Some(frame),
            ..Default::default()
        }
    }

    pub fn from_vector(frame_index: i64, vector: Vec<f64>) -> Self {
        Self {
            frame_index,
            vector: Some(vector),
            ..Default::default()
        }
    }
}

/// The IR payload a stage emits for one output item.
#[derive(Debug, Clone, PartialEq)]
pub struct IrPayload {
    pub kind: IrKind,
    pub vector: Option<Vec<f64>>,
    pub label: Option<String>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum KeyPolicy {
    All,
    Step(i64),
    Key(f64),
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Grayscale,
    Resize { w: u16, h: u16, method: ResizeMethod },
    Adjust { alpha: f64, beta: f64 },
    Equalize,
    Crop { x: u16, y: u16, w: u16, h: u16 },
    Extract(KeyPolicy),
    Histogram { bins: usize },
    MotionEnergy,
    Boundary { tau: f64 },
    Pca(PcaModel),
    KMeans(KMeansModel),
    Knn { model: KnnModel, k: usize },
    LinReg(LinRegModel),
    Threshold { boundary: bool, theta: f64, anomaly_type: String },
}

/// An implementation with validated parameters and, where needed, its model.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundStage {
    pub algorithm_id: String,
    pub implementation: &'static str,
    pub input: DataKind,
    pub output: DataKind,
    pub params: BTreeMap<String, Value>,
    pub emit_ir: bool,
    op: Op,
}

fn int_param(params: &BTreeMap<String, Value>, name: &str, min: i64, max: i64) -> Result<i64, StageError> {
    let v = params.get(name).and_then(Value::as_i64).filter(|v| (min..=max).contains(v));
    v.ok_or_else(|| StageError::BadParam {
        name: name.to_string(),
        reason: format!("expected an integer in {min}..={max}"),
    })
}

fn float_param(params: &BTreeMap<String, Value>, name: &str) -> Result<f64, StageError> {
    params
        .get(name)
        .and_then(Value::as_f64)
        .filter(|v| v.is_finite())
        .ok_or_else(|| StageError::BadParam {
            name: name.to_string(),
            reason: "expected a finite number".into(),
        })
}

fn str_param<'a>(params: &'a BTreeMap<String, Value>, name: &str) -> &'a str {
    params.get(name).and_then(Value::as_str).unwrap_or("")
}

impl BoundStage {
    /// Binds `implementation` with the given parameter schema (the
    /// implementation's own schema when `schema` is `None`). `load_model` maps
    /// a model path to its bytes, or `None` if absent.
    pub fn bind(
        algorithm_id: &str,
        implementation: &str,
        input: DataKind,
        schema: Option<&[ParamSpec]>,
        bindings: &Map<String, Value>,
        emit_ir: Option<bool>,
        load_model: &mut dyn FnMut(&str) -> Option<Vec<u8>>,
    ) -> Result<Self, StageError> {
        let imp = lookup(implementation).ok_or_else(|| StageError::UnknownImplementation(implementation.to_string()))?;
        if !imp.accepts_input(input) {
            return Err(StageError::BadInput(format!("'{implementation}' cannot read {input}")));
        }
        let params = bind_params(schema.unwrap_or(&imp.params), bindings)?;
        let model = match params.get("model").and_then(Value::as_str) {
            Some(path) => {
                let bytes = load_model(path).ok_or_else(|| StageError::MissingModel(path.to_string()))?;
                Some(LoadedModel::parse(implementation, path, &bytes)?)
            }
            None => None,
        };
        let u16_max = u16::MAX as i64;
        let op = match (implementation, model) {
            ("grayscale", _) => Op::Grayscale,
            ("resize", _) => Op::Resize {
                w: int_param(&params, "width", 1, u16_max)? as u16,
                h: int_param(&params, "height", 1, u16_max)? as u16,
                method: match str_param(&params, "method").to_ascii_lowercase().as_str() {
                    "nearest" => ResizeMethod::Nearest,
                    "bilinear" => ResizeMethod::Bilinear,
                    other => {
                        return Err(StageError::BadParam {
                            name: "method".into(),
                            reason: format!("expected nearest or bilinear, got '{other}'"),
                        })
                    }
                },
            },
            ("adjust", _) => Op::Adjust {
                alpha: float_param(&params, "alpha")?,
                beta: float_param(&params, "beta")?,
            },
            ("equalize", _) => Op::Equalize,
            ("crop", _) => Op::Crop {
                x: int_param(&params, "x", 0, u16_max)? as u16,
                y: int_param(&params, "y", 0, u16_max)? as u16,
                w: int_param(&params, "width", 1, u16_max)? as u16,
                h: int_param(&params, "height", 1, u16_max)? as u16,
            },
            ("extract-frames", _) => Op::Extract(match str_param(&params, "policy").to_ascii_uppercase().as_str() {
                "ALL" => KeyPolicy::All,
                "STEP" => KeyPolicy::Step(int_param(&params, "k", 1, i64::MAX)?),
                "KEY" => {
                    let tau = float_param(&params, "tau")?;
                    if tau < 0.0 {
                        return Err(StageError::BadParam {
                            name: "tau".into(),
                            reason: "must be >= 0".into(),
                        });
                    }
                    KeyPolicy::Key(tau)
                }
                other => {
                    return Err(StageError::BadParam {
                        name: "policy".into(),
                        reason: format!("expected ALL, STEP or KEY, got '{other}'"),
                    })
                }
            }),
            ("histogram", _) => {
                let bins = int_param(&params, "bins", 1, 256)? as usize;
                if 256 % bins != 0 {
                    return Err(StageError::BadParam {
                        name: "bins".into(),
                        reason: "must divide 256".into(),
                    });
                }
                Op::Histogram { bins }
            }
            ("motion-energy", _) => Op::MotionEnergy,
            ("boundary-detector", _) => {
                let tau = float_param(&params, "tau")?;
                if tau < 0.0 {
                    return Err(StageError::BadParam {
                        name: "tau".into(),
                        reason: "must be >= 0".into(),
                    });
                }
                Op::Boundary { tau }
            }
            ("pca-transform", Some(LoadedModel::Pca(m))) => {
                let k = int_param(&params, "k", 0, m.k() as i64)? as usize;
                Op::Pca(if k == 0 { m } else { m.truncated(k)? })
            }
            ("kmeans-scorer", Some(LoadedModel::KMeans(m))) => Op::KMeans(m),
            ("knn-classifier", Some(LoadedModel::Knn(m))) => {
                let k = int_param(&params, "k", 1, m.len() as i64)? as usize;
                Op::Knn { model: m, k }
            }
            ("linreg-predictor", Some(LoadedModel::LinReg(m))) => Op::LinReg(m),
            ("threshold", _) => Op::Threshold {
                boundary: match str_param(&params, "field") {
                    "score" => false,
                    "boundary" => true,
                    other => {
                        return Err(StageError::BadParam {
                            name: "field".into(),
                            reason: format!("expected score or boundary, got '{other}'"),
                        })
                    }
                },
                theta: float_param(&params, "theta")?,
                anomaly_type: non_empty_type(&params)?,
            },
            ("promote-boundary", _) => Op::Threshold {
                boundary: true,
                theta: 0.0,
                anomaly_type: non_empty_type(&params)?,
            },
            (name, _) => {
                return Err(StageError::BadParam {
                    name: "model".into(),
                    reason: format!("'{name}' needs a model parameter"),
                })
            }
        };
        Ok(BoundStage {
            algorithm_id: algorithm_id.to_string(),
            implementation: imp.name,
            input,
            output: imp.output,
            params,
            emit_ir: emit_ir.unwrap_or(imp.emit_ir_default),
            op,
        })
    }

    /// Whether the stage may run on any contiguous slice of a batch with the
    /// same per-item result as on the whole batch.
    pub fn partitionable(&self) -> bool {
        !matches!(
            self.op,
            Op::MotionEnergy | Op::Boundary { .. } | Op::Extract(KeyPolicy::Key(_))
        )
    }

    pub fn apply(&self, items: Vec<Item>) -> Result<Vec<Item>, StageError> {
        match &self.op {
            Op::Grayscale => map_frames(items, |f| Ok(to_grayscale(f))),
            Op::Resize { w, h, method } => map_frames(items, |f| Ok(resize(f, *w, *h, *method)?)),
            Op::Adjust { alpha, beta } => map_frames(items, |f| Ok(adjust(f, *alpha, *beta))),
            Op::Equalize => map_frames(items, |f| Ok(equalize(f)?)),
            Op::Crop { x, y, w, h } => map_frames(items, |f| Ok(crop(f, *x, *y, *w, *h)?)),
            Op::Extract(KeyPolicy::All) => Ok(items),
            Op::Extract(KeyPolicy::Step(k)) => Ok(items.into_iter().filter(|it| it.frame_index % k == 0).collect()),
            Op::Extract(KeyPolicy::Key(tau)) => {
                let gray = frames_of(&items)?.into_iter().map(to_grayscale).collect::<Vec<_>>();
                if gray.is_empty() {
                    return Ok(items);
                }
                let mut keep = vec![false; gray.len()];
                keep[0] = true;
                for i in detect_shot_boundaries(&gray, *tau)? {
                    keep[i] = true;
                }
                Ok(items.into_iter().zip(keep).filter(|(_, k)| *k).map(|(it, _)| it).collect())
            }
            Op::Histogram { bins } => {
                let mut out = Vec::with_capacity(items.len());
                for it in items {
                    let f = frame_of(&it)?;
                    let v = histogram_feature(f, *bins)?;
                    out.push(Item::from_vector(it.frame_index, v));
                }
                Ok(out)
            }
            Op::MotionEnergy | Op::Boundary { .. } => {
                let frames = frames_of(&items)?;
                let refs: Vec<&Frame> = frames.clone();
                crate::processing::check_uniform(&refs)?;
                if frames.iter().any(|f| f.format() != PixelFormat::Gray8) {
                    return Err(ProcessingError::NotGray(self.implementation).into());
                }
                let mut out = Vec::with_capacity(items.len());
                for (i, it) in items.iter().enumerate() {
                    let mad = if i == 0 { 0.0 } else { mean_abs_diff(frames[i - 1], frames[i]) };
                    let mut o = Item::from_vector(it.frame_index, vec![mad]);
                    o.score = Some(mad);
                    if let Op::Boundary { tau } = self.op {
                        o.boundary = i > 0 && mad > tau;
                    }
                    out.push(o);
                }
                Ok(out)
            }
            Op::Pca(m) => map_vectors(items, |v| {
                let y = m.project(v)?;
                Ok(Item {
                    vector: Some(y),
                    ..Default::default()
                })
            }),
            Op::KMeans(m) => map_vectors(items, |v| {
                let (c, d) = kmeans_assign(m, v)?;
                Ok(Item {
                    vector: Some(v.to_vec()),
                    label: Some(c.to_string()),
                    score: Some(d),
                    ..Default::default()
                })
            }),
            Op::Knn { model, k } => map_vectors(items, |v| {
                let (label, frac) = knn_predict(model, v, *k)?;
                Ok(Item {
                    vector: Some(v.to_vec()),
                    label: Some(label),
                    score: Some(frac),
                    ..Default::default()
                })
            }),
            Op::LinReg(m) => map_vectors(items, |v| {
                let y = m.predict(v)?;
                Ok(Item {
                    vector: Some(v.to_vec()),
                    score: Some(y),
                    ..Default::default()
                })
            }),
            Op::Threshold {
                boundary,
                theta,
                anomaly_type,
            } => Ok(items
                .into_iter()
                .filter_map(|it| {
                    let hit = if *boundary {
                        it.boundary
                    } else {
                        it.score.is_some_and(|s| s > *theta)
                    };
                    if !hit {
                        return None;
                    }
                    let score = it.score.unwrap_or(0.0);
                    let details = if *boundary {
                        format!("{}: boundary, score {score}", self.algorithm_id)
                    } else {
                        format!("{}: score {score} > {theta}", self.algorithm_id)
                    };
                    Some(Item {
                        frame_index: it.frame_index,
                        detection: Some(Detection {
                            anomaly_type: anomaly_type.clone(),
                            score,
                            details,
                        }),
                        ..Default::default()
                    })
                })
                .collect()),
        }
    }

    /// IR emitted for one output item of this stage, if the stage produces IR.
    pub fn ir_payload(&self, item: &Item) -> Option<IrPayload> {
        match &self.op {
            Op::Histogram { .. } | Op::Pca(_) => Some(IrPayload {
                kind: IrKind::Feature,
                vector: item.vector.clone(),
                label: None,
                score: None,
            }),
            Op::MotionEnergy | Op::LinReg(_) => Some(IrPayload {
                kind: IrKind::Scalar,
                vector: None,
                label: None,
                score: item.score,
            }),
            Op::Boundary { .. } => Some(IrPayload {
                kind: if item.boundary { IrKind::Boundary } else { IrKind::Feature },
                vector: item.vector.clone(),
                label: None,
                score: item.score,
            }),
            Op::KMeans(_) | Op::Knn { .. } => Some(IrPayload {
                kind: IrKind::Label,
                vector: None,
                label: item.label.clone(),
                score: item.score,
            }),
            _ => None,
        }
    }
}

fn non_empty_type(params: &BTreeMap<String, Value>) -> Result<String, StageError> {
    match str_param(params, "type") {
        "" => Err(StageError::BadParam {
            name: "type".into(),
            reason: "must be non-empty".into(),
        }),
        t => Ok(t.to_string()),
    }
}

fn frame_of(it: &Item) -> Result<&Frame, StageError> {
    it.frame
        .as_ref()
        .ok_or_else(|| StageError::BadInput(format!("item {} carries no frame", it.frame_index)))
}

fn frames_of(items: &[Item]) -> Result<Vec<&Frame>, StageError> {
    items.iter().map(frame_of).collect()
}

fn map_frames(items: Vec<Item>, f: impl Fn(&Frame) -> Result<Frame, StageError>) -> Result<Vec<Item>, StageError> {
    items
        .into_iter()
        .map(|it| {
            let out = f(frame_of(&it)?)?;
            Ok(Item::from_frame(it.frame_index, out))
        })
        .collect()
}

fn map_vectors(items: Vec<Item>, f: impl Fn(&[f64]) -> Result<Item, StageError>) -> Result<Vec<Item>, StageError> {
    items
        .into_iter()
        .map(|it| {
            let v = it
                .vector
                .as_deref()
                .ok_or_else(|| StageError::BadInput(format!("item {} carries no vector", it.frame_index)))?;
            let mut out = f(v)?;
            out.frame_index = it.frame_index;
            Ok(out)
        })
        .collect()
}
