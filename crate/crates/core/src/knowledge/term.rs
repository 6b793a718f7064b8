use std::fmt;

use super::KnowledgeError;

/// An RDF-like term. Numbers keep their literal text, so `1` and `1.0` are
/// distinct terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Iri(String),
    Literal(String),
    Number(String),
}

fn is_iri_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | ':' | '.' | '-')
}

/// `-?\d+(\.\d+)?`
pub(crate) fn is_number(s: &str) -> bool {
    let s = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    digits(int) && frac.is_none_or(digits)
}

impl Term {
    /// A bare token of `[A-Za-z0-9_:.-]`, not ending in '.', and not itself a
    /// number.
    pub fn iri(s: impl Into<String>) -> Result<Self, KnowledgeError> {
        let s = s.into();
        if s.is_empty() || !s.chars().all(is_iri_char) || s.ends_with('.') || is_number(&s) {
            return Err(KnowledgeError::InvalidTerm(s));
        }
        Ok(Term::Iri(s))
    }

    pub fn literal(s: impl Into<String>) -> Self {
        Term::Literal(s.into())
    }

    pub fn number_text(s: impl Into<String>) -> Result<Self, KnowledgeError> {
        let s = s.into();
        if !is_number(&s) {
            return Err(KnowledgeError::InvalidTerm(s));
        }
        Ok(Term::Number(s))
    }

    /// Decimal rendering of a finite float (never exponent notation).
    pub fn number(v: f64) -> Result<Self, KnowledgeError> {
        if !v.is_finite() {
            return Err(KnowledgeError::InvalidTerm(v.to_string()));
        }
        Self::number_text(format!("{v}"))
    }

    pub fn integer(v: i64) -> Self {
        Term::Number(v.to_string())
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }

    pub fn text(&self) -> &str {
        match self {
            Term::Iri(s) | Term::Literal(s) | Term::Number(s) => s,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(s) | Term::Number(s) => f.write_str(s),
            Term::Literal(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub s: Term,
    pub p: Term,
    pub o: Term,
}

impl Triple {
    pub fn new(s: Term, p: Term, o: Term) -> Result<Self, KnowledgeError> {
        if !s.is_iri() || !p.is_iri() {
            return Err(KnowledgeError::InvalidTerm(format!("subject and predicate must be IRIs: {s} {p}")));
        }
        Ok(Triple { s, p, o })
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.s, self.p, self.o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Token {
    Word(String),
    Var(String),
    Literal(String),
    Dot,
    LBrace,
    RBrace,
}

impl Token {
    pub(crate) fn describe(&self) -> String {
        match self {
            Token::Word(w) => format!("'{w}'"),
            Token::Var(v) => format!("'?{v}'"),
            Token::Literal(_) => "a string literal".into(),
            Token::Dot => "'.'".into(),
            Token::LBrace => "'{'".into(),
            Token::RBrace => "'}'".into(),
        }
    }
}

/// Splits `text` into tokens with their byte offsets. A '.' ends a bare word
/// only when followed by whitespace, '}' or the end of input.
pub(crate) fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, KnowledgeError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let at_end_of_word = |j: usize| j + 1 >= chars.len() || chars[j + 1].1.is_whitespace() || chars[j + 1].1 == '}';
    while i < chars.len() {
        let (pos, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '{' => {
                out.push((pos, Token::LBrace));
                i += 1;
            }
            '}' => {
                out.push((pos, Token::RBrace));
                i += 1;
            }
            '.' => {
                out.push((pos, Token::Dot));
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    let Some(&(p, c)) = chars.get(i) else {
                        return Err(KnowledgeError::Syntax {
                            position: text.len(),
                            expected: "closing '\"'".into(),
                        });
                    };
                    i += 1;
                    match c {
                        '"' => break,
                        '\\' => {
                            let Some(&(_, e)) = chars.get(i) else {
                                return Err(KnowledgeError::Syntax {
                                    position: text.len(),
                                    expected: "escape character".into(),
                                });
                            };
                            i += 1;
                            s.push(match e {
                                '"' => '"',
                                '\\' => '\\',
                                'n' => '\n',
                                'r' => '\r',
                                't' => '\t',
                                _ => {
                                    return Err(KnowledgeError::Syntax {
                                        position: p,
                                        expected: "one of \\\" \\\\ \\n \\r \\t".into(),
                                    })
                                }
                            });
                        }
                        c => s.push(c),
                    }
                }
                out.push((pos, Token::Literal(s)));
            }
            '?' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && (chars[j].1.is_ascii_alphanumeric() || chars[j].1 == '_') {
                    j += 1;
                }
                if j == start {
                    return Err(KnowledgeError::Syntax {
                        position: pos,
                        expected: "variable name after '?'".into(),
                    });
                }
                out.push((pos, Token::Var(chars[start..j].iter().map(|c| c.1).collect())));
                i = j;
            }
            c if is_iri_char(c) => {
                let mut j = i;
                while j < chars.len() && is_iri_char(chars[j].1) {
                    if chars[j].1 == '.' && at_end_of_word(j) {
                        break;
                    }
                    j += 1;
                }
                out.push((pos, Token::Word(chars[i..j].iter().map(|c| c.1).collect())));
                i = j;
            }
            _ => {
                return Err(KnowledgeError::Syntax {
                    position: pos,
                    expected: format!("a term, variable or punctuation, found '{c}'"),
                })
            }
        }
    }
    Ok(out)
}

/// Interprets a bare word as a number or an IRI.
pub(crate) fn word_term(w: &str) -> Result<Term, KnowledgeError> {
    if is_number(w) {
        Ok(Term::Number(w.to_string()))
    } else {
        Term::iri(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers() {
        for ok in ["0", "-3", "12.5", "-0.25"] {
            assert!(is_number(ok), "{ok}");
        }
        for bad in ["", "-", "1.", ".5", "1.2.3", "1e5", "+1"] {
            assert!(!is_number(bad), "{bad}");
        }
        assert_eq!(Term::number(0.9).unwrap(), Term::Number("0.9".into()));
        assert_eq!(Term::number(1e-7).unwrap(), Term::Number("0.0000001".into()));
        assert!(Term::number(f64::NAN).is_err());
    }

    #[test]
    fn iris() {
        assert!(Term::iri("onto:Detection").is_ok());
        assert!(Term::iri("ir:42_3_-1").is_ok());
        for bad in ["", "a b", "x.", "42", "\"q\""] {
            assert!(Term::iri(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn literal_escapes_round_trip() {
        let t = Term::literal("a \"b\"\\\n");
        let toks = tokenize(&t.to_string()).unwrap();
        assert_eq!(toks, vec![(0, Token::Literal("a \"b\"\\\n".into()))]);
    }

    #[test]
    fn dot_handling() {
        let toks: Vec<Token> = tokenize("a:b.c d.}").unwrap().into_iter().map(|t| t.1).collect();
        assert_eq!(
            toks,
            vec![Token::Word("a:b.c".into()), Token::Word("d".into()), Token::Dot, Token::RBrace]
        );
    }
}
