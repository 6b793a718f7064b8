use std::collections::{BTreeSet, HashMap};
use std::sync::{RwLock, RwLockReadGuard};

use super::term::{tokenize, word_term, Term, Token, Triple};
use super::KnowledgeError;

#[derive(Debug, Default)]
pub(crate) struct Indexed {
    all: BTreeSet<Triple>,
    by_s: HashMap<Term, Vec<Triple>>,
    by_p: HashMap<Term, Vec<Triple>>,
    by_o: HashMap<Term, Vec<Triple>>,
}

static EMPTY: Vec<Triple> = Vec::new();

impl Indexed {
    fn insert(&mut self, t: Triple) -> bool {
        if !self.all.insert(t.clone()) {
            return false;
        }
        self.by_s.entry(t.s.clone()).or_default().push(t.clone());
        self.by_p.entry(t.p.clone()).or_default().push(t.clone());
        self.by_o.entry(t.o.clone()).or_default().push(t);
        true
    }

    /// Triples that may match the given constant positions: the shortest
    /// applicable index list, or everything when nothing is fixed. Callers
    /// still check every position.
    pub(crate) fn candidates<'a>(
        &'a self,
        s: Option<&Term>,
        p: Option<&Term>,
        o: Option<&Term>,
    ) -> Box<dyn Iterator<Item = &'a Triple> + 'a> {
        let lists = [(s, &self.by_s), (p, &self.by_p), (o, &self.by_o)];
        let best = lists
            .iter()
            .filter_map(|(k, idx)| k.map(|k| idx.get(k).unwrap_or(&EMPTY)))
            .min_by_key(|l| l.len());
        match best {
            Some(l) => Box::new(l.iter()),
            None => Box::new(self.all.iter()),
        }
    }
}

/// A set of triples with subject, predicate and object indexes. Inserts are
/// serialised; readers work on a consistent snapshot under a read lock.
#[derive(Debug, Default)]
pub struct TripleStore {
    inner: RwLock<Indexed>,
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn read(&self) -> RwLockReadGuard<'_, Indexed> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Returns how many of `triples` were new.
    pub fn insert_triples(&self, triples: impl IntoIterator<Item = Triple>) -> usize {
        let mut g = self.inner.write().unwrap_or_else(|e| e.into_inner());
        triples.into_iter().filter(|t| g.insert(t.clone())).count()
    }

    pub fn len(&self) -> usize {
        self.read().all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.read().all.contains(t)
    }

    /// All triples in sorted order.
    pub fn triples(&self) -> Vec<Triple> {
        self.read().all.iter().cloned().collect()
    }

    /// One `s p o .` line per triple, sorted.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for t in self.read().all.iter() {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }

    /// Loads lines in the `dump` format; blank lines are skipped. Returns the
    /// number of new triples.
    pub fn load(&self, text: &str) -> Result<usize, KnowledgeError> {
        let mut triples = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            triples.push(parse_triple_line(line).map_err(|reason| KnowledgeError::BadDump { line: n + 1, reason })?);
        }
        Ok(self.insert_triples(triples))
    }
}

fn parse_triple_line(line: &str) -> Result<Triple, String> {
    let toks = tokenize(line).map_err(|e| e.to_string())?;
    let term = |t: &Token| match t {
        Token::Word(w) => word_term(w).map_err(|e| e.to_string()),
        Token::Literal(s) => Ok(Term::literal(s.clone())),
        other => Err(format!("unexpected {}", other.describe())),
    };
    match toks.as_slice() {
        [(_, s), (_, p), (_, o), (_, Token::Dot)] => Triple::new(term(s)?, term(p)?, term(o)?).map_err(|e| e.to_string()),
        _ => Err("expected `subject predicate object .`".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str, p: &str, o: Term) -> Triple {
        Triple::new(Term::iri(s).unwrap(), Term::iri(p).unwrap(), o).unwrap()
    }

    #[test]
    fn set_semantics() {
        let st = TripleStore::new();
        let a = t("ir:1_0_0", "onto:label", Term::literal("person"));
        assert_eq!(st.insert_triples(vec![a.clone()]), 1);
        assert_eq!(st.insert_triples(vec![a.clone()]), 0);
        assert_eq!(st.insert_triples(Vec::new()), 0);
        assert_eq!(st.len(), 1);
    }

    #[test]
    fn dump_and_load() {
        let st = TripleStore::new();
        st.insert_triples(vec![
            t("ir:1_0_0", "onto:label", Term::literal("a \"quoted\" label.")),
            t("ir:1_0_0", "onto:score", Term::number(-2.5).unwrap()),
            t("ir:1_0_0", "rdf:type", Term::iri("onto:Detection").unwrap()),
        ]);
        let text = st.dump();
        assert!(text.contains("ir:1_0_0 onto:score -2.5 .\n"));
        let back = TripleStore::new();
        assert_eq!(back.load(&text).unwrap(), 3);
        assert_eq!(back.triples(), st.triples());
        assert!(matches!(back.load("a b\n"), Err(KnowledgeError::BadDump { line: 1, .. })));
    }
}
