//! Formula syntax trees.

use std::collections::BTreeSet;
use std::fmt;

use super::parser::{self, FormulaError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantifier {
    Forall,
    Exists,
}

impl Quantifier {
    pub fn dual(self) -> Quantifier {
        match self {
            Quantifier::Forall => Quantifier::Exists,
            Quantifier::Exists => Quantifier::Forall,
        }
    }
}

/// Temporal body; atoms carry the 0-based index of the path variable they are
/// indexed by (position in the quantifier prefix).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Body {
    True,
    False,
    Atom { atom: String, var: usize },
    Not(Box<Body>),
    And(Box<Body>, Box<Body>),
    Or(Box<Body>, Box<Body>),
    Implies(Box<Body>, Box<Body>),
    Iff(Box<Body>, Box<Body>),
    Next(Box<Body>),
    Until(Box<Body>, Box<Body>),
    Eventually(Box<Body>),
    Globally(Box<Body>),
}

impl Body {
    /// Atom names appearing anywhere in the body.
    pub fn atoms(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Body::True | Body::False => {}
            Body::Atom { atom, .. } => {
                out.insert(atom.as_str());
            }
            Body::Not(a) | Body::Next(a) | Body::Eventually(a) | Body::Globally(a) => {
                a.collect_atoms(out)
            }
            Body::And(a, b)
            | Body::Or(a, b)
            | Body::Implies(a, b)
            | Body::Iff(a, b)
            | Body::Until(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Largest referenced variable index, if any atom exists.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Body::True | Body::False => None,
            Body::Atom { var, .. } => Some(*var),
            Body::Not(a) | Body::Next(a) | Body::Eventually(a) | Body::Globally(a) => a.max_var(),
            Body::And(a, b)
            | Body::Or(a, b)
            | Body::Implies(a, b)
            | Body::Iff(a, b)
            | Body::Until(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, None) => x,
                (None, y) => y,
            },
        }
    }
}

/// A closed formula: non-empty quantifier prefix plus temporal body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    prefix: Vec<(Quantifier, String)>,
    body: Body,
}

impl Formula {
    /// Builds a formula, checking that variable names are unique, the prefix
    /// is non-empty, and every atom references a variable in range.
    pub fn new(prefix: Vec<(Quantifier, String)>, body: Body) -> Result<Self, FormulaError> {
        if prefix.is_empty() {
            return Err(FormulaError::EmptyPrefix);
        }
        let mut seen = BTreeSet::new();
        for (_, name) in &prefix {
            if !seen.insert(name.clone()) {
                return Err(FormulaError::DuplicateVar { name: name.clone() });
            }
        }
        if let Some(max) = body.max_var() {
            if max >= prefix.len() {
                return Err(FormulaError::UnboundVar {
                    name: format!("#{max}"),
                });
            }
        }
        Ok(Formula { prefix, body })
    }

    pub fn parse(text: &str) -> Result<Self, FormulaError> {
        parser::parse(text)
    }

    pub fn prefix(&self) -> &[(Quantifier, String)] {
        &self.prefix
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn num_vars(&self) -> usize {
        self.prefix.len()
    }

    pub fn var_name(&self, i: usize) -> &str {
        &self.prefix[i].1
    }

    pub fn quantifier(&self, i: usize) -> Quantifier {
        self.prefix[i].0
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.prefix.iter().position(|(_, n)| n == name)
    }

    /// 0-based indices of existentially quantified variables, ascending.
    pub fn existential_indices(&self) -> Vec<usize> {
        self.prefix
            .iter()
            .enumerate()
            .filter(|(_, (q, _))| *q == Quantifier::Exists)
            .map(|(i, _)| i)
            .collect()
    }

    /// 0-based indices of universally quantified variables, ascending.
    pub fn universal_indices(&self) -> Vec<usize> {
        self.prefix
            .iter()
            .enumerate()
            .filter(|(_, (q, _))| *q == Quantifier::Forall)
            .map(|(i, _)| i)
            .collect()
    }

    /// The dual formula: every quantifier flipped, body negated. Verifying the
    /// result refutes the original.
    pub fn negated(&self) -> Formula {
        Formula {
            prefix: self
                .prefix
                .iter()
                .map(|(q, n)| (q.dual(), n.clone()))
                .collect(),
            body: Body::Not(Box::new(self.body.clone())),
        }
    }

    /// Atom names appearing in the body.
    pub fn atoms(&self) -> BTreeSet<&str> {
        self.body.atoms()
    }

    /// Checks that every atom of the body is declared by the system.
    pub fn check_atoms_against(
        &self,
        ts: &crate::system::TransitionSystem,
    ) -> Result<(), FormulaError> {
        for atom in self.atoms() {
            if ts.atom_id(atom).is_none() {
                return Err(FormulaError::UnknownAtom {
                    atom: atom.to_string(),
                });
            }
        }
        Ok(())
    }

    fn render_body(&self, b: &Body, level: u8, out: &mut String) {
        // Precedence, loosest to tightest: ->/<-> (0), | (1), & (2), U (3),
        // unary (4). Binary operators are right-associative.
        let (prec, text): (u8, Option<(&Body, &'static str, &Body)>) = match b {
            Body::Iff(l, r) => (0, Some((l, "<->", r))),
            Body::Implies(l, r) => (0, Some((l, "->", r))),
            Body::Or(l, r) => (1, Some((l, "|", r))),
            Body::And(l, r) => (2, Some((l, "&", r))),
            Body::Until(l, r) => (3, Some((l, "U", r))),
            _ => (4, None),
        };
        if let Some((l, op, r)) = text {
            let need = prec < level;
            if need {
                out.push('(');
            }
            self.render_body(l, prec + 1, out);
            out.push(' ');
            out.push_str(op);
            out.push(' ');
            self.render_body(r, prec, out);
            if need {
                out.push(')');
            }
            return;
        }
        match b {
            Body::True => out.push_str("true"),
            Body::False => out.push_str("false"),
            Body::Atom { atom, var } => {
                out.push_str(atom);
                out.push('_');
                out.push_str(self.var_name(*var));
            }
            Body::Not(a) => {
                out.push_str("! ");
                self.render_body(a, 4, out);
            }
            Body::Next(a) => {
                out.push_str("X ");
                self.render_body(a, 4, out);
            }
            Body::Eventually(a) => {
                out.push_str("F ");
                self.render_body(a, 4, out);
            }
            Body::Globally(a) => {
                out.push_str("G ");
                self.render_body(a, 4, out);
            }
            _ => unreachable!("binary handled above"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (q, name) in &self.prefix {
            let kw = match q {
                Quantifier::Forall => "forall",
                Quantifier::Exists => "exists",
            };
            write!(f, "{kw} {name}. ")?;
        }
        let mut body = String::new();
        self.render_body(&self.body, 0, &mut body);
        f.write_str(&body)
    }
}
