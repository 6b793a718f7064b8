use serde::{Deserialize, Serialize};

use super::term::{word_term, Term, Triple};
use super::KnowledgeError;
use crate::acquisition::{IrKind, IrRecord};

pub const RDF_TYPE: &str = "rdf:type";
pub const ONTO_DETECTION: &str = "onto:Detection";
pub const ONTO_SHOT_BOUNDARY: &str = "onto:ShotBoundary";
pub const ONTO_SOURCE: &str = "onto:source";
pub const ONTO_AT_FRAME: &str = "onto:atFrame";
pub const ONTO_LABEL: &str = "onto:label";
pub const ONTO_SCORE: &str = "onto:score";

/// The fixed vocabulary rule predicates and constants are drawn from.
pub const VOCABULARY: [&str; 7] = [
    RDF_TYPE,
    ONTO_DETECTION,
    ONTO_SHOT_BOUNDARY,
    ONTO_SOURCE,
    ONTO_AT_FRAME,
    ONTO_LABEL,
    ONTO_SCORE,
];

/// Where an emitted object comes from. Constants are written in term syntax
/// (`onto:Detection`, `"text"`, `3`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueSource {
    Field(String),
    Constant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emit {
    pub predicate: String,
    pub value: ValueSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRule {
    #[serde(rename = "match")]
    pub kind: IrKind,
    pub emit: Vec<Emit>,
}

const FIELDS: [&str; 9] = [
    "service_id",
    "algorithm_id",
    "source_id",
    "batch_seq",
    "frame_index",
    "ts_micros",
    "kind",
    "label",
    "score",
];

impl MappingRule {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        for e in &self.emit {
            if !VOCABULARY.contains(&e.predicate.as_str()) {
                return Err(KnowledgeError::BadRule(format!("predicate '{}' is not in the vocabulary", e.predicate)));
            }
            match &e.value {
                ValueSource::Field(f) if !FIELDS.contains(&f.as_str()) => {
                    return Err(KnowledgeError::BadRule(format!("unknown record field '{f}'")))
                }
                ValueSource::Constant(c) => {
                    parse_constant(c)?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn parse_constant(c: &str) -> Result<Term, KnowledgeError> {
    match c.strip_prefix('"').and_then(|s| s.strip_suffix('"')) {
        Some(inner) => Ok(Term::literal(inner)),
        None => word_term(c).map_err(|_| KnowledgeError::BadRule(format!("bad constant '{c}'"))),
    }
}

fn emit(predicate: &str, value: ValueSource) -> Emit {
    Emit {
        predicate: predicate.to_string(),
        value,
    }
}

fn field(name: &str) -> ValueSource {
    ValueSource::Field(name.to_string())
}

fn constant(name: &str) -> ValueSource {
    ValueSource::Constant(name.to_string())
}

/// Label and scalar records become detections, boundary records become shot
/// boundaries. Feature vectors have no rule.
pub fn default_rules() -> Vec<MappingRule> {
    let body = |class: &str| {
        vec![
            emit(RDF_TYPE, constant(class)),
            emit(ONTO_SOURCE, field("source_id")),
            emit(ONTO_AT_FRAME, field("frame_index")),
            emit(ONTO_LABEL, field("label")),
            emit(ONTO_SCORE, field("score")),
        ]
    };
    vec![
        MappingRule {
            kind: IrKind::Label,
            emit: body(ONTO_DETECTION),
        },
        MappingRule {
            kind: IrKind::Scalar,
            emit: body(ONTO_DETECTION),
        },
        MappingRule {
            kind: IrKind::Boundary,
            emit: body(ONTO_SHOT_BOUNDARY),
        },
    ]
}

/// Subject IRI `ir:<service>_<seq>_<frame>`.
pub fn subject_for(r: &IrRecord) -> Result<Term, KnowledgeError> {
    Term::iri(format!("ir:{}_{}_{}", r.service_id, r.batch_seq, r.frame_index))
}

fn field_value(r: &IrRecord, name: &str) -> Result<Option<Term>, KnowledgeError> {
    Ok(match name {
        "service_id" => Some(Term::literal(&r.service_id)),
        "algorithm_id" => Some(Term::literal(&r.algorithm_id)),
        "source_id" => Some(Term::literal(&r.source_id)),
        "batch_seq" => Some(Term::Number(r.batch_seq.to_string())),
        "frame_index" => Some(Term::integer(r.frame_index)),
        "ts_micros" => Some(Term::integer(r.ts_micros)),
        "kind" => Some(Term::literal(r.kind.as_str())),
        "label" => r.label.as_ref().map(Term::literal),
        "score" => r.score.map(Term::number).transpose()?,
        other => return Err(KnowledgeError::BadRule(format!("unknown record field '{other}'"))),
    })
}

/// Applies the first rule matching the record's kind. Fields the record does
/// not carry (label, score) produce no triple.
pub fn map_ir_to_triples(r: &IrRecord, rules: &[MappingRule]) -> Result<Vec<Triple>, KnowledgeError> {
    let rule = rules
        .iter()
        .find(|rule| rule.kind == r.kind)
        .ok_or(KnowledgeError::NoRule(r.kind))?;
    let subject = subject_for(r)?;
    let mut out = Vec::with_capacity(rule.emit.len());
    for e in &rule.emit {
        let object = match &e.value {
            ValueSource::Field(f) => field_value(r, f)?,
            ValueSource::Constant(c) => Some(parse_constant(c)?),
        };
        if let Some(o) = object {
            out.push(Triple::new(subject.clone(), Term::iri(e.predicate.as_str())?, o)?);
        }
    }
    Ok(out)
}
