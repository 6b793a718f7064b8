//! Conjunctive SELECT queries: parsing, canonical rendering and evaluation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::store::TripleStore;
use super::term::{tokenize, word_term, Term, Token, Triple};
use super::KnowledgeError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Slot {
    Var(String),
    Term(Term),
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Var(v) => write!(f, "?{v}"),
            Slot::Term(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub s: Slot,
    pub p: Slot,
    pub o: Slot,
}

impl Pattern {
    pub fn slots(&self) -> [&Slot; 3] {
        [&self.s, &self.p, &self.o]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    pub vars: Vec<String>,
    pub patterns: Vec<Pattern>,
}

/// One solution: the selected variables, in SELECT order, with their values.
pub type Binding = Vec<(String, Term)>;

impl fmt::Display for Query {
    /// Canonical form: `SELECT ?a ?b WHERE { s p o . s p o . }`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT")?;
        for v in &self.vars {
            write!(f, " ?{v}")?;
        }
        f.write_str(" WHERE {")?;
        for p in &self.patterns {
            write!(f, " {} {} {} .", p.s, p.p, p.o)?;
        }
        f.write_str(" }")
    }
}

pub fn render_query(q: &Query) -> String {
    q.to_string()
}

struct Parser {
    toks: Vec<(usize, Token)>,
    i: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.i).map(|t| &t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map(|t| t.0).unwrap_or(self.end)
    }

    fn fail<T>(&self, expected: &str) -> Result<T, KnowledgeError> {
        let found = match self.peek() {
            Some(t) => t.describe(),
            None => "end of input".into(),
        };
        Err(KnowledgeError::Syntax {
            position: self.pos(),
            expected: format!("{expected}, found {found}"),
        })
    }

    fn keyword(&mut self, kw: &str) -> Result<(), KnowledgeError> {
        match self.peek() {
            Some(Token::Word(w)) if w.eq_ignore_ascii_case(kw) => {
                self.i += 1;
                Ok(())
            }
            _ => self.fail(kw),
        }
    }

    fn expect(&mut self, tok: Token, what: &str) -> Result<(), KnowledgeError> {
        if self.peek() == Some(&tok) {
            self.i += 1;
            Ok(())
        } else {
            self.fail(what)
        }
    }

    fn slot(&mut self, subject_or_predicate: bool) -> Result<Slot, KnowledgeError> {
        let pos = self.pos();
        let slot = match self.peek() {
            Some(Token::Var(v)) => Slot::Var(v.clone()),
            Some(Token::Word(w)) => {
                let t = word_term(w).map_err(|_| KnowledgeError::Syntax {
                    position: pos,
                    expected: format!("an IRI or number, found '{w}'"),
                })?;
                Slot::Term(t)
            }
            Some(Token::Literal(s)) => Slot::Term(Term::literal(s.clone())),
            _ => return self.fail("a term or variable"),
        };
        if subject_or_predicate && matches!(&slot, Slot::Term(t) if !t.is_iri()) {
            return Err(KnowledgeError::Syntax {
                position: pos,
                expected: "an IRI or variable in subject/predicate position".into(),
            });
        }
        self.i += 1;
        Ok(slot)
    }
}

/// Parses `SELECT ?v+ WHERE { (s p o .)+ }` with case-insensitive keywords.
pub fn parse_query(text: &str) -> Result<Query, KnowledgeError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        i: 0,
        end: text.len(),
    };
    p.keyword("SELECT")?;
    let mut vars = Vec::new();
    let mut var_pos = Vec::new();
    while let Some(Token::Var(v)) = p.peek() {
        vars.push(v.clone());
        var_pos.push(p.pos());
        p.i += 1;
    }
    if vars.is_empty() {
        return p.fail("a variable");
    }
    p.keyword("WHERE")?;
    p.expect(Token::LBrace, "'{'")?;
    let mut patterns = Vec::new();
    loop {
        if p.peek() == Some(&Token::RBrace) && !patterns.is_empty() {
            p.i += 1;
            break;
        }
        let s = p.slot(true)?;
        let pr = p.slot(true)?;
        let o = p.slot(false)?;
        p.expect(Token::Dot, "'.'")?;
        patterns.push(Pattern { s, p: pr, o });
    }
    if p.peek().is_some() {
        return p.fail("end of query");
    }
    for (v, pos) in vars.iter().zip(var_pos) {
        let used = patterns
            .iter()
            .any(|pat| pat.slots().iter().any(|s| matches!(s, Slot::Var(x) if x == v)));
        if !used {
            return Err(KnowledgeError::Syntax {
                position: pos,
                expected: format!("?{v} to appear in the WHERE patterns"),
            });
        }
    }
    Ok(Query { vars, patterns })
}

type Solution = HashMap<String, Term>;

fn resolve<'a>(slot: &'a Slot, sol: &'a Solution) -> Option<&'a Term> {
    match slot {
        Slot::Term(t) => Some(t),
        Slot::Var(v) => sol.get(v),
    }
}

fn extend(pat: &Pattern, t: &Triple, sol: &Solution) -> Option<Solution> {
    let mut out = sol.clone();
    for (slot, term) in [(&pat.s, &t.s), (&pat.p, &t.p), (&pat.o, &t.o)] {
        match slot {
            Slot::Term(c) => {
                if c != term {
                    return None;
                }
            }
            Slot::Var(v) => match out.get(v) {
                Some(bound) if bound != term => return None,
                Some(_) => {}
                None => {
                    out.insert(v.clone(), term.clone());
                }
            },
        }
    }
    Some(out)
}

/// Orders patterns greedily: most constant slots first, then preferring
/// patterns that share a variable with those already placed.
fn plan(patterns: &[Pattern]) -> Vec<&Pattern> {
    let constants = |p: &Pattern| p.slots().iter().filter(|s| matches!(s, Slot::Term(_))).count();
    let mut left: Vec<&Pattern> = patterns.iter().collect();
    let mut bound: Vec<&str> = Vec::new();
    let mut out = Vec::with_capacity(left.len());
    while !left.is_empty() {
        let score = |p: &Pattern| {
            let shared = p
                .slots()
                .iter()
                .filter(|s| matches!(s, Slot::Var(v) if bound.contains(&v.as_str())))
                .count();
            constants(p) + shared
        };
        let best = (0..left.len()).max_by_key(|&i| (score(left[i]), usize::MAX - i)).expect("non-empty");
        let p = left.remove(best);
        for s in p.slots() {
            if let Slot::Var(v) = s {
                bound.push(v);
            }
        }
        out.push(p);
    }
    out
}

/// Evaluates the conjunction by index nested-loop join and projects onto the
/// selected variables. Solutions are distinct over all pattern variables;
/// after projection duplicates are kept. Rows are sorted by their rendered
/// values.
pub fn execute_query(store: &TripleStore, q: &Query) -> Vec<Binding> {
    let snapshot = store.read();
    let mut sols: Vec<Solution> = vec![Solution::new()];
    for pat in plan(&q.patterns) {
        let mut next = Vec::new();
        for sol in &sols {
            let s = resolve(&pat.s, sol);
            let p = resolve(&pat.p, sol);
            let o = resolve(&pat.o, sol);
            for t in snapshot.candidates(s, p, o) {
                if let Some(ext) = extend(pat, t, sol) {
                    next.push(ext);
                }
            }
        }
        sols = next;
        if sols.is_empty() {
            break;
        }
    }
    let mut rows: Vec<(Vec<String>, Binding)> = sols
        .into_iter()
        .map(|sol| {
            let b: Binding = q.vars.iter().map(|v| (v.clone(), sol[v].clone())).collect();
            (b.iter().map(|(_, t)| t.to_string()).collect(), b)
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    rows.into_iter().map(|(_, b)| b).collect()
}

/// Renders bindings as `{var: rendered term}` maps, in row order.
pub fn bindings_to_maps(rows: &[Binding]) -> Vec<BTreeMap<String, String>> {
    rows.iter()
        .map(|b| b.iter().map(|(v, t)| (v.clone(), t.to_string())).collect())
        .collect()
}
