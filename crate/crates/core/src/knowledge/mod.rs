//! Maps intermediate results to triples with configurable rules and answers
//! conjunctive SELECT queries over them.
//!
//! Rule-based reasoning over the ontology is not implemented.

mod mapping;
mod query;
mod store;
mod term;

use thiserror::Error;

use crate::acquisition::{IrKind, IrRecord};

pub use mapping::{default_rules, map_ir_to_triples, subject_for, Emit, MappingRule, ValueSource, VOCABULARY};
pub use query::{bindings_to_maps, execute_query, parse_query, render_query, Binding, Pattern, Query, Slot};
pub use store::TripleStore;
pub use term::{Term, Triple};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnowledgeError {
    #[error("no mapping rule for IR kind '{0}'")]
    NoRule(IrKind),
    #[error("invalid term '{0}'")]
    InvalidTerm(String),
    #[error("invalid mapping rule: {0}")]
    BadRule(String),
    #[error("syntax error at {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("bad dump line {line}: {reason}")]
    BadDump { line: usize, reason: String },
}

/// A triple store together with the rules used to populate it.
#[derive(Debug)]
pub struct KnowledgeBase {
    rules: Vec<MappingRule>,
    store: TripleStore,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new(default_rules()).expect("default rules are valid")
    }
}

impl KnowledgeBase {
    pub fn new(rules: Vec<MappingRule>) -> Result<Self, KnowledgeError> {
        for r in &rules {
            r.validate()?;
        }
        Ok(Self {
            rules,
            store: TripleStore::new(),
        })
    }

    pub fn rules(&self) -> &[MappingRule] {
        &self.rules
    }

    pub fn store(&self) -> &TripleStore {
        &self.store
    }

    /// Maps and inserts one record; kinds without a rule insert nothing.
    pub fn ingest(&self, r: &IrRecord) -> Result<usize, KnowledgeError> {
        match map_ir_to_triples(r, &self.rules) {
            Ok(t) => Ok(self.store.insert_triples(t)),
            Err(KnowledgeError::NoRule(_)) => Ok(0),
            Err(e) => Err(e),
        }
    }

    pub fn query(&self, text: &str) -> Result<Vec<Binding>, KnowledgeError> {
        let q = parse_query(text)?;
        Ok(execute_query(&self.store, &q))
    }
}
