//! Verification of hyperproperties over finite-state transition systems by
//! compilation to non-deterministic planning.
//!
//! The pipeline: parse a transition system ([`system`]) and a quantified
//! temporal formula ([`logic`]), build a deterministic automaton for the
//! formula body by progression ([`automata`]), compile the verification
//! problem into an explicit or factored planning problem ([`encoding`]),
//! solve it with the built-in planners ([`solver`]) or export it as FOND PDDL
//! for external planners ([`pddl`]), and turn any plan found back into an
//! independently validated strategy witness ([`witness`]).

pub mod automata;
pub mod encoding;
pub mod fuzz;
pub mod logic;
pub mod pddl;
pub mod solver;
pub mod system;
pub mod witness;
