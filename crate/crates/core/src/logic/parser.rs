//! Recursive-descent parser for quantified temporal formulas.
//!
//! Grammar (tightest binding last):
//! ```text
//! formula := (("forall" | "exists") IDENT ".")+ body
//! body    := or (("->" | "<->") body)?          right-associative
//! or      := and ("|" or)?
//! and     := until ("&" and)?
//! until   := unary ("U" until)?                 right-associative
//! unary   := ("!" | "X" | "F" | "G") unary | "true" | "false"
//!          | "(" body ")" | ATOMREF
//! ```
//! An `ATOMREF` is an identifier split at the rightmost underscore whose
//! suffix names a bound path variable: `a_p1` is atom `a` on path `p1`.
//! `#` starts a comment running to the end of the line, as in the system
//! format.

use thiserror::Error;

use super::ast::{Body, Formula, Quantifier};

#[derive(Debug, Error)]
pub enum FormulaError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unbound path variable `{name}`")]
    UnboundVar { name: String },
    #[error("duplicate path variable `{name}`")]
    DuplicateVar { name: String },
    #[error("formula needs at least one quantifier")]
    EmptyPrefix,
    #[error("atom `{atom}` is not declared by the system")]
    UnknownAtom { atom: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Forall,
    Exists,
    Dot,
    LParen,
    RParen,
    Not,
    And,
    Or,
    Arrow,
    DArrow,
    Next,
    Until,
    Eventually,
    Globally,
    True,
    False,
    Ident(String),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Forall => "`forall`".into(),
            Tok::Exists => "`exists`".into(),
            Tok::Dot => "`.`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Not => "`!`".into(),
            Tok::And => "`&`".into(),
            Tok::Or => "`|`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::DArrow => "`<->`".into(),
            Tok::Next => "`X`".into(),
            Tok::Until => "`U`".into(),
            Tok::Eventually => "`F`".into(),
            Tok::Globally => "`G`".into(),
            Tok::True => "`true`".into(),
            Tok::False => "`false`".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

type Spanned = (Tok, usize);

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<Spanned>, FormulaError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<Spanned>, FormulaError> {
        let bytes = self.src.as_bytes();
        loop {
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            // `#` starts a comment running to the end of the line.
            if self.pos < bytes.len() && bytes[self.pos] == b'#' {
                while self.pos < bytes.len() && bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        if self.pos >= bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = bytes[self.pos];
        let tok = match c {
            b'.' => {
                self.pos += 1;
                Tok::Dot
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'!' => {
                self.pos += 1;
                Tok::Not
            }
            b'&' => {
                self.pos += 1;
                Tok::And
            }
            b'|' => {
                self.pos += 1;
                Tok::Or
            }
            b'-' => {
                if bytes.get(self.pos + 1) == Some(&b'>') {
                    self.pos += 2;
                    Tok::Arrow
                } else {
                    return Err(syntax_at(self.src, start, "expected `->`"));
                }
            }
            b'<' => {
                if self.src[self.pos..].starts_with("<->") {
                    self.pos += 3;
                    Tok::DArrow
                } else {
                    return Err(syntax_at(self.src, start, "expected `<->`"));
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = self.pos;
                while end < bytes.len()
                    && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                let word = &self.src[self.pos..end];
                self.pos = end;
                match word {
                    "forall" => Tok::Forall,
                    "exists" => Tok::Exists,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "X" => Tok::Next,
                    "U" => Tok::Until,
                    "F" => Tok::Eventually,
                    "G" => Tok::Globally,
                    _ => Tok::Ident(word.to_string()),
                }
            }
            other => {
                return Err(syntax_at(
                    self.src,
                    start,
                    &format!("unexpected character `{}`", other as char),
                ))
            }
        };
        Ok(Some((tok, start)))
    }
}

fn syntax_at(src: &str, pos: usize, msg: &str) -> FormulaError {
    let mut line = 1;
    let mut col = 1;
    for (i, c) in src.char_indices() {
        if i >= pos {
            break;
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    FormulaError::Syntax {
        line,
        col,
        msg: msg.to_string(),
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Spanned>,
    at: usize,
    vars: Vec<String>,
}

pub fn parse(text: &str) -> Result<Formula, FormulaError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser {
        src: text,
        toks,
        at: 0,
        vars: Vec::new(),
    };
    let mut prefix = Vec::new();
    loop {
        let q = match p.peek() {
            Some(Tok::Forall) => Quantifier::Forall,
            Some(Tok::Exists) => Quantifier::Exists,
            _ => break,
        };
        p.bump();
        let name = match p.peek().cloned() {
            Some(Tok::Ident(n)) => {
                p.bump();
                n
            }
            _ => return Err(p.err_here("expected path variable name")),
        };
        if p.vars.contains(&name) {
            return Err(FormulaError::DuplicateVar { name });
        }
        match p.peek() {
            Some(Tok::Dot) => p.bump(),
            _ => return Err(p.err_here("expected `.` after path variable")),
        }
        p.vars.push(name.clone());
        prefix.push((q, name));
    }
    if prefix.is_empty() {
        return Err(FormulaError::EmptyPrefix);
    }
    let body = p.parse_body()?;
    if p.at < p.toks.len() {
        return Err(p.err_here("unexpected trailing input"));
    }
    Formula::new(prefix, body)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn bump(&mut self) {
        self.at += 1;
    }

    fn err_here(&self, msg: &str) -> FormulaError {
        match self.toks.get(self.at) {
            Some((tok, pos)) => syntax_at(
                self.src,
                *pos,
                &format!("{msg}, found {}", tok.describe()),
            ),
            None => syntax_at(self.src, self.src.len(), &format!("{msg}, found end of input")),
        }
    }

    fn parse_body(&mut self) -> Result<Body, FormulaError> {
        let left = self.parse_or()?;
        match self.peek() {
            Some(Tok::Arrow) => {
                self.bump();
                let right = self.parse_body()?;
                Ok(Body::Implies(Box::new(left), Box::new(right)))
            }
            Some(Tok::DArrow) => {
                self.bump();
                let right = self.parse_body()?;
                Ok(Body::Iff(Box::new(left), Box::new(right)))
            }
            _ => Ok(left),
        }
    }

    fn parse_or(&mut self) -> Result<Body, FormulaError> {
        let left = self.parse_and()?;
        if let Some(Tok::Or) = self.peek() {
            self.bump();
            let right = self.parse_or()?;
            Ok(Body::Or(Box::new(left), Box::new(right)))
        } else {
            Ok(left)
        }
    }

    fn parse_and(&mut self) -> Result<Body, FormulaError> {
        let left = self.parse_until()?;
        if let Some(Tok::And) = self.peek() {
            self.bump();
            let right = self.parse_and()?;
            Ok(Body::And(Box::new(left), Box::new(right)))
        } else {
            Ok(left)
        }
    }

    fn parse_until(&mut self) -> Result<Body, FormulaError> {
        let left = self.parse_unary()?;
        if let Some(Tok::Until) = self.peek() {
            self.bump();
            let right = self.parse_until()?;
            Ok(Body::Until(Box::new(left), Box::new(right)))
        } else {
            Ok(left)
        }
    }

    fn parse_unary(&mut self) -> Result<Body, FormulaError> {
        let wrap = match self.peek() {
            Some(Tok::Not) => Some(Body::Not as fn(Box<Body>) -> Body),
            Some(Tok::Next) => Some(Body::Next as fn(Box<Body>) -> Body),
            Some(Tok::Eventually) => Some(Body::Eventually as fn(Box<Body>) -> Body),
            Some(Tok::Globally) => Some(Body::Globally as fn(Box<Body>) -> Body),
            _ => None,
        };
        if let Some(ctor) = wrap {
            self.bump();
            let inner = self.parse_unary()?;
            return Ok(ctor(Box::new(inner)));
        }
        match self.peek().cloned() {
            Some(Tok::True) => {
                self.bump();
                Ok(Body::True)
            }
            Some(Tok::False) => {
                self.bump();
                Ok(Body::False)
            }
            Some(Tok::LParen) => {
                self.bump();
                let inner = self.parse_body()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.bump();
                        Ok(inner)
                    }
                    _ => Err(self.err_here("expected `)`")),
                }
            }
            Some(Tok::Ident(word)) => {
                self.bump();
                self.atom_ref(&word)
            }
            _ => Err(self.err_here("expected a formula")),
        }
    }

    /// Splits `atom_var` at the rightmost underscore whose suffix is a bound
    /// path variable.
    fn atom_ref(&self, word: &str) -> Result<Body, FormulaError> {
        let positions: Vec<usize> = word
            .char_indices()
            .filter(|(_, c)| *c == '_')
            .map(|(i, _)| i)
            .collect();
        for &i in positions.iter().rev() {
            if i == 0 {
                continue; // empty atom part
            }
            let (atom, suffix) = (&word[..i], &word[i + 1..]);
            if let Some(var) = self.vars.iter().position(|v| v == suffix) {
                return Ok(Body::Atom {
                    atom: atom.to_string(),
                    var,
                });
            }
        }
        match positions.last() {
            Some(&i) if i + 1 < word.len() => Err(FormulaError::UnboundVar {
                name: word[i + 1..].to_string(),
            }),
            _ => Err(FormulaError::UnboundVar {
                name: word.to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::ast::{Body, Quantifier};
    use super::*;

    fn atom(a: &str, var: usize) -> Body {
        Body::Atom {
            atom: a.into(),
            var,
        }
    }

    #[test]
    fn parses_delayed_copy_formula() {
        let f = parse("forall p1. exists p2. G (a_p1 <-> X a_p2)").unwrap();
        assert_eq!(
            f.prefix(),
            &[
                (Quantifier::Forall, "p1".to_string()),
                (Quantifier::Exists, "p2".to_string())
            ]
        );
        let expected = Body::Globally(Box::new(Body::Iff(
            Box::new(atom("a", 0)),
            Box::new(Body::Next(Box::new(atom("a", 1)))),
        )));
        assert_eq!(f.body(), &expected);
    }

    #[test]
    fn parses_observational_determinism() {
        let f =
            parse("forall p1. forall p2. (l_p1 <-> l_p2) -> G (o_p1 <-> o_p2)").unwrap();
        assert_eq!(f.num_vars(), 2);
        assert_eq!(f.quantifier(0), Quantifier::Forall);
        assert_eq!(f.quantifier(1), Quantifier::Forall);
        match f.body() {
            Body::Implies(l, r) => {
                assert!(matches!(**l, Body::Iff(_, _)));
                assert!(matches!(**r, Body::Globally(_)));
            }
            other => panic!("unexpected body {other:?}"),
        }
    }

    #[test]
    fn unbound_variable_is_reported() {
        let err = parse("exists p1. a_p2").unwrap_err();
        match err {
            FormulaError::UnboundVar { name } => assert_eq!(name, "p2"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn duplicate_variable_rejected() {
        let err = parse("forall p. exists p. a_p").unwrap_err();
        assert!(matches!(err, FormulaError::DuplicateVar { .. }));
    }

    #[test]
    fn atom_split_uses_rightmost_bound_suffix() {
        // Variable named `p_1`: the split must skip the last underscore
        // (suffix `1` is no variable) and use the one before it.
        let f = parse("exists p_1. my_atom_p_1").unwrap();
        assert_eq!(f.body(), &atom("my_atom", 0));
    }

    #[test]
    fn until_is_right_associative_and_binds_tighter_than_and() {
        let f = parse("exists p. a_p U b_p U c_p & d_p").unwrap();
        // (a U (b U c)) & d
        let expected = Body::And(
            Box::new(Body::Until(
                Box::new(atom("a", 0)),
                Box::new(Body::Until(Box::new(atom("b", 0)), Box::new(atom("c", 0)))),
            )),
            Box::new(atom("d", 0)),
        );
        assert_eq!(f.body(), &expected);
    }

    #[test]
    fn unary_binds_tightest() {
        let f = parse("exists p. ! a_p U X b_p").unwrap();
        let expected = Body::Until(
            Box::new(Body::Not(Box::new(atom("a", 0)))),
            Box::new(Body::Next(Box::new(atom("b", 0)))),
        );
        assert_eq!(f.body(), &expected);
    }

    #[test]
    fn implication_chain_is_right_associative() {
        let f = parse("exists p. a_p -> b_p <-> c_p").unwrap();
        let expected = Body::Implies(
            Box::new(atom("a", 0)),
            Box::new(Body::Iff(Box::new(atom("b", 0)), Box::new(atom("c", 0)))),
        );
        assert_eq!(f.body(), &expected);
    }

    #[test]
    fn or_looser_than_and() {
        let f = parse("exists p. a_p | b_p & c_p").unwrap();
        let expected = Body::Or(
            Box::new(atom("a", 0)),
            Box::new(Body::And(Box::new(atom("b", 0)), Box::new(atom("c", 0)))),
        );
        assert_eq!(f.body(), &expected);
    }

    #[test]
    fn missing_dot_reports_position() {
        let err = parse("forall p a_p").unwrap_err();
        match err {
            FormulaError::Syntax { line, col, msg } => {
                assert_eq!(line, 1);
                assert!(col > 1);
                assert!(msg.contains('.'), "{msg}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn empty_prefix_rejected() {
        assert!(matches!(parse("a_p"), Err(FormulaError::EmptyPrefix)));
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "forall p1. exists p2. G (a_p1 <-> X a_p2)",
            "exists p. a_p U b_p U (c_p & d_p)",
            "forall p1. forall p2. (l_p1 <-> l_p2) -> G (o_p1 <-> o_p2)",
            "exists p. ! (a_p | b_p) & X F G c_p",
            "exists p. true U (false | ! a_p)",
        ] {
            let f = parse(text).unwrap();
            let printed = f.to_string();
            let back = parse(&printed).unwrap();
            assert_eq!(f, back, "display of `{text}` was `{printed}`");
        }
    }
}
