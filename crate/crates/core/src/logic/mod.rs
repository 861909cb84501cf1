//! Quantified temporal formulas over path variables.
//!
//! A formula is a quantifier prefix (`forall p.` / `exists p.`) followed by a
//! linear-temporal body whose atoms are indexed by path variable (`a_p`). The
//! module provides the parser, prefix/body classification, negation normal
//! form, and a three-valued bounded evaluator used as the semantic ground
//! truth by the automata and witness layers.

mod ast;
mod classify;
mod eval;
mod parser;

pub use ast::{Body, Formula, Quantifier};
pub use classify::{classify_body, classify_prefix, normalize, to_nnf, BodyClass, Nnf, PrefixClass};
pub use eval::{eval_prefix_bounded, EvalError, Tv3};
pub use parser::FormulaError;
