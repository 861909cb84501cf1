//! Three-valued bounded evaluation of temporal bodies on finite path
//! prefixes.
//!
//! `True` and `False` are determined verdicts: they hold on *every* infinite
//! extension of the given prefixes. `Unknown` means the prefix is too short
//! to decide. Evaluation is the standard position-wise Kleene semantics: a
//! temporal operator peeking past the end of the trace yields `Unknown`, and
//! boolean connectives combine three-valued.

use std::collections::HashMap;

use thiserror::Error;

use super::ast::Body;
use crate::system::{LocId, TransitionSystem};

/// Three-valued verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tv3 {
    True,
    False,
    Unknown,
}

impl Tv3 {
    pub fn from_bool(b: bool) -> Tv3 {
        if b {
            Tv3::True
        } else {
            Tv3::False
        }
    }

    pub fn not(self) -> Tv3 {
        match self {
            Tv3::True => Tv3::False,
            Tv3::False => Tv3::True,
            Tv3::Unknown => Tv3::Unknown,
        }
    }

    pub fn and(self, other: Tv3) -> Tv3 {
        match (self, other) {
            (Tv3::False, _) | (_, Tv3::False) => Tv3::False,
            (Tv3::True, Tv3::True) => Tv3::True,
            _ => Tv3::Unknown,
        }
    }

    pub fn or(self, other: Tv3) -> Tv3 {
        match (self, other) {
            (Tv3::True, _) | (_, Tv3::True) => Tv3::True,
            (Tv3::False, Tv3::False) => Tv3::False,
            _ => Tv3::Unknown,
        }
    }

    pub fn is_determined(self) -> bool {
        self != Tv3::Unknown
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("path prefixes must all have the same non-zero length")]
    BadPrefixLengths,
    #[error("body references path variable #{0} but only {1} prefixes given")]
    MissingPath(usize, usize),
    #[error("atom `{0}` is not declared by the system")]
    UnknownAtom(String),
}

/// Evaluates `body` on equal-length location prefixes, one per path variable
/// (indexed by quantifier position). Prefixes need not be κ-consistent paths;
/// only the labeling matters.
pub fn eval_prefix_bounded(
    ts: &TransitionSystem,
    prefixes: &[Vec<LocId>],
    body: &Body,
) -> Result<Tv3, EvalError> {
    let len = prefixes.first().map(|p| p.len()).unwrap_or(0);
    if len == 0 || prefixes.iter().any(|p| p.len() != len) {
        return Err(EvalError::BadPrefixLengths);
    }
    if let Some(max) = body.max_var() {
        if max >= prefixes.len() {
            return Err(EvalError::MissingPath(max, prefixes.len()));
        }
    }
    let mut atom_ids = HashMap::new();
    for atom in body.atoms() {
        match ts.atom_id(atom) {
            Some(id) => {
                atom_ids.insert(atom.to_string(), id);
            }
            None => return Err(EvalError::UnknownAtom(atom.to_string())),
        }
    }
    let ev = Evaluator {
        ts,
        prefixes,
        atom_ids,
        len,
    };
    Ok(ev.eval(body, 0))
}

struct Evaluator<'a> {
    ts: &'a TransitionSystem,
    prefixes: &'a [Vec<LocId>],
    atom_ids: HashMap<String, usize>,
    len: usize,
}

impl Evaluator<'_> {
    fn eval(&self, body: &Body, j: usize) -> Tv3 {
        debug_assert!(j < self.len);
        match body {
            Body::True => Tv3::True,
            Body::False => Tv3::False,
            Body::Atom { atom, var } => {
                let loc = self.prefixes[*var][j];
                Tv3::from_bool(self.ts.has_atom(loc, self.atom_ids[atom]))
            }
            Body::Not(a) => self.eval(a, j).not(),
            Body::And(l, r) => self.eval(l, j).and(self.eval(r, j)),
            Body::Or(l, r) => self.eval(l, j).or(self.eval(r, j)),
            Body::Implies(l, r) => self.eval(l, j).not().or(self.eval(r, j)),
            Body::Iff(l, r) => {
                let (lv, rv) = (self.eval(l, j), self.eval(r, j));
                lv.and(rv).or(lv.not().and(rv.not()))
            }
            Body::Next(a) => {
                if j + 1 < self.len {
                    self.eval(a, j + 1)
                } else {
                    Tv3::Unknown
                }
            }
            Body::Eventually(a) => {
                // a(j) ∨ X F a, with Unknown past the end.
                let mut acc = Tv3::Unknown;
                for k in (j..self.len).rev() {
                    acc = self.eval(a, k).or(acc);
                    if acc == Tv3::True {
                        return Tv3::True;
                    }
                }
                acc
            }
            Body::Globally(a) => {
                let mut acc = Tv3::Unknown;
                for k in (j..self.len).rev() {
                    acc = self.eval(a, k).and(acc);
                    if acc == Tv3::False {
                        return Tv3::False;
                    }
                }
                acc
            }
            Body::Until(l, r) => {
                // r(j) ∨ (l(j) ∧ X(l U r)), with Unknown past the end.
                let mut acc = Tv3::Unknown;
                for k in (j..self.len).rev() {
                    acc = self.eval(r, k).or(self.eval(l, k).and(acc));
                }
                acc
            }
        }
    }
}
