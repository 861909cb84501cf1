//! PDDL emission, grounding, and controller ingestion.
//!
//! The factored encoding is written out as a grounded planning domain plus a
//! problem file. Existential-only instances are deterministic (no `oneof`);
//! instances with universal variables express each action's environment
//! branching — and, in the safe variant, the stop-and-win alternative — as a
//! single `oneof` effect. Prefixes with a trailing universal block are
//! refused: the dialect has no observation model, so those instances are
//! solved in-tool instead.
//!
//! Accepted dialect (both for emission and for [`ground`]):
//!
//! ```text
//! domain   := (define (domain NAME) (:requirements ...) (:types ...)
//!              (:constants typed-list) (:predicates decl*) action*)
//! action   := (:action NAME :parameters () :precondition (and) :effect eff)
//! eff      := atom | (not atom) | (and eff*) | (oneof eff*)
//!           | (when (and atom*) eff)           ; no nested when/oneof
//! problem  := (define (problem NAME) (:domain NAME) (:init atom*)
//!              (:goal (and atom*)))
//! ```
//!
//! All names are derived deterministically from source identifiers
//! (lower-cased, prefixed `pv-`/`loc-`/`q-`/`act-`, numeric suffixes on
//! collisions); the manifest records the inverse mapping so documents and
//! external controllers can be tied back to the source system. Grounding
//! parses the emitted text back, rebuilds the fluent-level problem, and
//! expands it to an explicit graph for structural comparison against the
//! original encoding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde_json::json;
use thiserror::Error;

use crate::automata::DetAutomaton;
use crate::encoding::{
    ground_factored, Effect, ExplicitGraph, FactoredAction, FactoredEncoding, Fluent, QdecPomdp,
    Variant,
};
use crate::logic::PrefixClass;
use crate::solver::Policy;
use crate::system::{DirId, LocId, TransitionSystem};

#[derive(Debug, Error)]
pub enum PddlError {
    #[error("prefix class {0:?} has no PDDL rendering; solve it in-tool instead")]
    UnsupportedClass(PrefixClass),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("document does not match its manifest: {0}")]
    ManifestMismatch(String),
    #[error("bad controller document: {0}")]
    BadController(String),
}

/// Inverse name mapping carried alongside an emitted document pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub domain: String,
    pub problem: String,
    pub variant: Variant,
    /// `(pddl constant, source name)` per path variable, in variable order.
    pub pathvars: Vec<(String, String)>,
    /// `(pddl constant, source name)` per location, in declaration order.
    pub locations: Vec<(String, String)>,
    /// PDDL constant per automaton state index (may include one placeholder
    /// state past the automaton size).
    pub autstates: Vec<String>,
    /// `(pddl action name, source direction names)` in action order.
    pub actions: Vec<(String, Vec<String>)>,
}

impl Manifest {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "format": "pddl-manifest",
            "version": 1,
            "domain": self.domain,
            "problem": self.problem,
            "variant": match self.variant {
                Variant::Safe => "safe",
                Variant::Reach => "reach",
            },
            "pathvars": self.pathvars,
            "locations": self.locations,
            "autstates": self.autstates,
            "actions": self.actions,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Manifest, PddlError> {
        let bad = |what: &str| PddlError::Parse(format!("manifest: {what}"));
        if v.get("format").and_then(|f| f.as_str()) != Some("pddl-manifest") {
            return Err(bad("not a manifest document"));
        }
        if v.get("version").and_then(|x| x.as_u64()) != Some(1) {
            return Err(bad("unsupported version"));
        }
        let text = |key: &str| {
            v.get(key)
                .and_then(|x| x.as_str())
                .map(str::to_string)
                .ok_or_else(|| bad(&format!("missing {key}")))
        };
        let variant = match text("variant")?.as_str() {
            "safe" => Variant::Safe,
            "reach" => Variant::Reach,
            other => return Err(bad(&format!("unknown variant {other:?}"))),
        };
        let pairs = |key: &str| -> Result<Vec<(String, String)>, PddlError> {
            serde_json::from_value(v.get(key).cloned().unwrap_or(serde_json::Value::Null))
                .map_err(|_| bad(&format!("malformed {key}")))
        };
        let autstates: Vec<String> =
            serde_json::from_value(v.get("autstates").cloned().unwrap_or(serde_json::Value::Null))
                .map_err(|_| bad("malformed autstates"))?;
        let actions: Vec<(String, Vec<String>)> =
            serde_json::from_value(v.get("actions").cloned().unwrap_or(serde_json::Value::Null))
                .map_err(|_| bad("malformed actions"))?;
        Ok(Manifest {
            domain: text("domain")?,
            problem: text("problem")?,
            variant,
            pathvars: pairs("pathvars")?,
            locations: pairs("locations")?,
            autstates,
            actions,
        })
    }
}

/// An emitted domain/problem pair plus the name manifest.
#[derive(Debug, Clone)]
pub struct PddlDocumentPair {
    pub domain_text: String,
    pub problem_text: String,
    pub manifest: Manifest,
}

// ---------------------------------------------------------------------------
// Name mangling
// ---------------------------------------------------------------------------

/// Lower-cases and restricts to PDDL-safe characters. Source identifiers
/// contain no hyphens, so prefixes and collision suffixes cannot clash with
/// sanitized bodies.
fn sanitize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        let c = c.to_ascii_lowercase();
        if c.is_ascii_alphanumeric() || c == '_' {
            out.push(c);
        } else {
            out.push('-');
        }
    }
    if !out.starts_with(|c: char| c.is_ascii_alphabetic()) {
        out.insert(0, 'x');
    }
    out
}

/// Deterministic collision-free names: `<prefix><sanitized source>`, with
/// `-2`, `-3`, … appended in first-come order on collisions.
fn unique_names<'a>(prefix: &str, sources: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for src in sources {
        let base = format!("{prefix}{}", sanitize(src));
        let mut name = base.clone();
        let mut k = 2;
        while !used.insert(name.clone()) {
            name = format!("{base}-{k}");
            k += 1;
        }
        out.push(name);
    }
    out
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

const DOMAIN_NAME: &str = "hyperplan";
const PROBLEM_NAME: &str = "hyperplan-instance";

/// Writes the factored encoding as a grounded PDDL document pair.
/// `qdec` supplies the prefix class and the source identifiers the factored
/// form does not carry.
pub fn emit_pddl(
    qdec: &QdecPomdp,
    fenc: &FactoredEncoding,
) -> Result<PddlDocumentPair, PddlError> {
    match qdec.prefix_class() {
        PrefixClass::ExistsOnly | PrefixClass::ForallExists => {}
        other => return Err(PddlError::UnsupportedClass(other)),
    }
    let ts = qdec.ts();
    let num_locs = ts.num_locations();
    let safe = fenc.variant == Variant::Safe;

    let pathvars = unique_names("pv-", qdec.quantifiers().iter().map(|(_, v)| v.as_str()));
    let locations = unique_names("loc-", (0..num_locs).map(|l| ts.loc_name(LocId(l as u32))));
    let num_autstates = fenc
        .fluents
        .iter()
        .filter(|f| matches!(f, Fluent::AutState(_)))
        .count();
    let autstates: Vec<String> = (0..num_autstates).map(|q| format!("q-{q}")).collect();
    let action_names = unique_names(
        "act-",
        fenc.actions
            .iter()
            .map(|a| {
                a.dirs
                    .iter()
                    .map(|&d| ts.dir_name(d))
                    .collect::<Vec<_>>()
                    .join("-")
            })
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str),
    );

    // Rendered once; every later use is a plain append.
    let rendered: Vec<String> = fenc
        .fluents
        .iter()
        .map(|f| match *f {
            Fluent::At { var, loc } => format!("(at {} {})", pathvars[var], locations[loc.idx()]),
            Fluent::AutState(q) => format!("(autstate {})", autstates[q]),
            Fluent::Alive => "(alive)".into(),
            Fluent::Doomed => "(doomed)".into(),
            Fluent::Win => "(win)".into(),
            Fluent::Lose => "(lose)".into(),
        })
        .collect();
    let atom = |f: usize| rendered[f].as_str();

    let nondet = fenc.actions.iter().any(|a| has_oneof(&a.effect));
    let mut dom = String::new();
    let _ = writeln!(dom, "(define (domain {DOMAIN_NAME})");
    let reqs = if nondet {
        ":strips :typing :conditional-effects :non-deterministic"
    } else {
        ":strips :typing :conditional-effects"
    };
    let _ = writeln!(dom, "  (:requirements {reqs})");
    let _ = writeln!(dom, "  (:types pathvar location autstate)");
    let _ = writeln!(dom, "  (:constants");
    let _ = writeln!(dom, "    {} - pathvar", pathvars.join(" "));
    let _ = writeln!(dom, "    {} - location", locations.join(" "));
    let _ = writeln!(dom, "    {} - autstate)", autstates.join(" "));
    let _ = writeln!(dom, "  (:predicates");
    let _ = writeln!(dom, "    (at ?v - pathvar ?l - location)");
    if safe {
        let _ = writeln!(dom, "    (autstate ?q - autstate)");
        let _ = writeln!(dom, "    (alive)");
        let _ = writeln!(dom, "    (doomed)");
        let _ = writeln!(dom, "    (win)");
        let _ = writeln!(dom, "    (lose))");
    } else {
        let _ = writeln!(dom, "    (autstate ?q - autstate))");
    }
    for (i, action) in fenc.actions.iter().enumerate() {
        let _ = writeln!(dom, "  (:action {}", action_names[i]);
        let _ = writeln!(dom, "    :parameters ()");
        let _ = writeln!(dom, "    :precondition (and)");
        let _ = writeln!(dom, "    :effect");
        write_effect(&action.effect, &rendered, 3, &mut dom)?;
        let _ = writeln!(dom, "  )");
    }
    let _ = writeln!(dom, ")");

    let mut prob = String::new();
    let _ = writeln!(prob, "(define (problem {PROBLEM_NAME})");
    let _ = writeln!(prob, "  (:domain {DOMAIN_NAME})");
    let _ = writeln!(prob, "  (:init");
    for (i, &f) in fenc.init.iter().enumerate() {
        let close = if i + 1 == fenc.init.len() { ")" } else { "" };
        let _ = writeln!(prob, "    {}{close}", atom(f));
    }
    let _ = writeln!(
        prob,
        "  (:goal (and {})))",
        fenc.goal.iter().map(|&f| atom(f)).collect::<Vec<_>>().join(" ")
    );

    let manifest = Manifest {
        domain: DOMAIN_NAME.into(),
        problem: PROBLEM_NAME.into(),
        variant: fenc.variant,
        pathvars: pathvars
            .into_iter()
            .zip(qdec.quantifiers().iter().map(|(_, v)| v.clone()))
            .collect(),
        locations: locations
            .into_iter()
            .enumerate()
            .map(|(l, name)| (name, ts.loc_name(LocId(l as u32)).to_string()))
            .collect(),
        autstates,
        actions: action_names
            .into_iter()
            .zip(
                fenc.actions
                    .iter()
                    .map(|a| a.dirs.iter().map(|&d| ts.dir_name(d).to_string()).collect()),
            )
            .collect(),
    };
    Ok(PddlDocumentPair { domain_text: dom, problem_text: prob, manifest })
}

fn has_oneof(e: &Effect) -> bool {
    match e {
        Effect::Oneof(_) => true,
        Effect::And(xs) => xs.iter().any(has_oneof),
        Effect::When { eff, .. } => has_oneof(eff),
        Effect::Add(_) | Effect::Del(_) => false,
    }
}

/// Multi-line rendering: `and`/`oneof` nest, conditional rows stay on one
/// line. `when`/`oneof` never occur inside a row in this encoding.
fn write_effect(
    e: &Effect,
    atoms: &[String],
    pad: usize,
    out: &mut String,
) -> Result<(), PddlError> {
    const IND: &str = "                                        "; // 20 levels
    let owned;
    let ind = match IND.get(..2 * pad) {
        Some(s) => s,
        None => {
            owned = "  ".repeat(pad);
            &owned
        }
    };
    match e {
        Effect::Add(f) => {
            out.push_str(ind);
            out.push_str(&atoms[*f]);
            out.push('\n');
        }
        Effect::Del(f) => {
            out.push_str(ind);
            out.push_str("(not ");
            out.push_str(&atoms[*f]);
            out.push_str(")\n");
        }
        Effect::When { cond, eff } => {
            out.push_str(ind);
            out.push_str("(when (and");
            for &c in cond {
                out.push(' ');
                out.push_str(&atoms[c]);
            }
            out.push_str(") ");
            inline_effect(eff, atoms, out)?;
            out.push_str(")\n");
        }
        Effect::And(xs) if xs.is_empty() => {
            out.push_str(ind);
            out.push_str("(and)\n");
        }
        Effect::And(xs) => {
            out.push_str(ind);
            out.push_str("(and\n");
            for x in xs {
                write_effect(x, atoms, pad + 1, out)?;
            }
            out.push_str(ind);
            out.push_str(")\n");
        }
        Effect::Oneof(xs) => {
            out.push_str(ind);
            out.push_str("(oneof\n");
            for x in xs {
                write_effect(x, atoms, pad + 1, out)?;
            }
            out.push_str(ind);
            out.push_str(")\n");
        }
    }
    Ok(())
}

fn inline_effect(e: &Effect, atoms: &[String], out: &mut String) -> Result<(), PddlError> {
    match e {
        Effect::Add(f) => out.push_str(&atoms[*f]),
        Effect::Del(f) => {
            out.push_str("(not ");
            out.push_str(&atoms[*f]);
            out.push(')');
        }
        Effect::And(xs) if xs.is_empty() => out.push_str("(and)"),
        Effect::And(xs) => {
            out.push_str("(and");
            for x in xs {
                out.push(' ');
                inline_effect(x, atoms, out)?;
            }
            out.push(')');
        }
        Effect::When { .. } | Effect::Oneof(_) => {
            return Err(PddlError::Unsupported(
                "conditional effect nested inside a conditional row".into(),
            ))
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// S-expression parsing
// ---------------------------------------------------------------------------

/// Borrows every atom from the source text; parsing allocates only the
/// list spines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexpr<'a> {
    Atom(&'a str),
    List(Vec<Sexpr<'a>>),
}

impl<'a> Sexpr<'a> {
    fn atom(&self) -> Option<&'a str> {
        match self {
            Sexpr::Atom(a) => Some(a),
            Sexpr::List(_) => None,
        }
    }

    fn list(&self) -> Option<&[Sexpr<'a>]> {
        match self {
            Sexpr::Atom(_) => None,
            Sexpr::List(xs) => Some(xs),
        }
    }

    /// For `(head rest...)` with an atom head, returns `(head, rest)`.
    fn tagged(&self) -> Option<(&'a str, &[Sexpr<'a>])> {
        let xs = self.list()?;
        let head = xs.first()?.atom()?;
        Some((head, &xs[1..]))
    }
}

/// Parses a whole document into top-level s-expressions. `;` starts a
/// comment that runs to the end of the line. Atoms break on ASCII
/// whitespace, parentheses, and `;` — the only delimiters the dialect
/// emits.
pub fn parse_sexprs(text: &str) -> Result<Vec<Sexpr<'_>>, PddlError> {
    let bytes = text.as_bytes();
    let mut stack: Vec<Vec<Sexpr<'_>>> = vec![Vec::new()];
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b';' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' => {
                stack.push(Vec::with_capacity(4));
                i += 1;
            }
            b')' => {
                let done = stack
                    .pop()
                    .ok_or_else(|| PddlError::Parse("unbalanced ')'".into()))?;
                let top = stack
                    .last_mut()
                    .ok_or_else(|| PddlError::Parse("unbalanced ')'".into()))?;
                top.push(Sexpr::List(done));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && !matches!(bytes[i], b'(' | b')' | b';')
                {
                    i += 1;
                }
                // Delimiters are all ASCII, so the slice is char-aligned.
                stack
                    .last_mut()
                    .expect("stack never empties before the end")
                    .push(Sexpr::Atom(&text[start..i]));
            }
        }
    }
    if stack.len() != 1 {
        return Err(PddlError::Parse("unbalanced '('".into()));
    }
    Ok(stack.pop().unwrap())
}

#[derive(Debug)]
pub struct ParsedAction<'a> {
    pub name: &'a str,
    pub precondition: Sexpr<'a>,
    pub effect: Sexpr<'a>,
}

#[derive(Debug)]
pub struct ParsedDomain<'a> {
    pub name: &'a str,
    pub requirements: Vec<&'a str>,
    pub types: Vec<&'a str>,
    /// `(constant name, type)` in declaration order.
    pub constants: Vec<(&'a str, &'a str)>,
    /// `(predicate name, parameter types)` in declaration order.
    pub predicates: Vec<(&'a str, Vec<&'a str>)>,
    pub actions: Vec<ParsedAction<'a>>,
}

#[derive(Debug)]
pub struct ParsedProblem<'a> {
    pub name: &'a str,
    pub domain: &'a str,
    /// Ground atoms as `(predicate, arguments)`.
    pub init: Vec<(&'a str, Vec<&'a str>)>,
    pub goal: Vec<(&'a str, Vec<&'a str>)>,
}

/// `names... - type names... - type ...` into `(name, type)` pairs.
fn parse_typed_list<'a>(items: &[Sexpr<'a>]) -> Result<Vec<(&'a str, &'a str)>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<&'a str> = Vec::new();
    let mut it = items.iter();
    while let Some(item) = it.next() {
        let a = item
            .atom()
            .ok_or_else(|| PddlError::Parse("nested list in typed list".into()))?;
        if a == "-" {
            let ty = it
                .next()
                .and_then(Sexpr::atom)
                .ok_or_else(|| PddlError::Parse("dangling '-' in typed list".into()))?;
            for name in pending.drain(..) {
                out.push((name, ty));
            }
        } else {
            pending.push(a);
        }
    }
    if !pending.is_empty() {
        return Err(PddlError::Parse("untyped names in typed list".into()));
    }
    Ok(out)
}

fn parse_ground_atom<'a>(s: &Sexpr<'a>) -> Result<(&'a str, Vec<&'a str>), PddlError> {
    let (head, rest) = s
        .tagged()
        .ok_or_else(|| PddlError::Parse("expected a ground atom".into()))?;
    let args = rest
        .iter()
        .map(|a| {
            a.atom()
                .ok_or_else(|| PddlError::Parse("nested list in a ground atom".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((head, args))
}

pub fn parse_domain(text: &str) -> Result<ParsedDomain<'_>, PddlError> {
    let top = parse_sexprs(text)?;
    let [doc] = top.as_slice() else {
        return Err(PddlError::Parse("expected exactly one (define ...)".into()));
    };
    let ("define", sections) = doc
        .tagged()
        .ok_or_else(|| PddlError::Parse("expected (define ...)".into()))?
    else {
        return Err(PddlError::Parse("expected (define ...)".into()));
    };
    let name = match sections.first().and_then(Sexpr::tagged) {
        Some(("domain", [Sexpr::Atom(n)])) => *n,
        _ => return Err(PddlError::Parse("expected (domain NAME)".into())),
    };
    let mut dom = ParsedDomain {
        name,
        requirements: Vec::new(),
        types: Vec::new(),
        constants: Vec::new(),
        predicates: Vec::new(),
        actions: Vec::new(),
    };
    for sec in &sections[1..] {
        let (head, rest) = sec
            .tagged()
            .ok_or_else(|| PddlError::Parse("stray atom in domain body".into()))?;
        match head {
            ":requirements" => {
                for r in rest {
                    let a = r
                        .atom()
                        .ok_or_else(|| PddlError::Parse("malformed :requirements".into()))?;
                    dom.requirements.push(a);
                }
            }
            ":types" => {
                for t in rest {
                    let a = t
                        .atom()
                        .ok_or_else(|| PddlError::Parse("malformed :types".into()))?;
                    dom.types.push(a);
                }
            }
            ":constants" => dom.constants = parse_typed_list(rest)?,
            ":predicates" => {
                for p in rest {
                    let (pname, params) = p
                        .tagged()
                        .ok_or_else(|| PddlError::Parse("malformed predicate".into()))?;
                    let typed = parse_typed_list(params)?;
                    for (param, _) in &typed {
                        if !param.starts_with('?') {
                            return Err(PddlError::Parse(format!(
                                "predicate parameter {param:?} must start with '?'"
                            )));
                        }
                    }
                    dom.predicates
                        .push((pname, typed.into_iter().map(|(_, t)| t).collect()));
                }
            }
            ":action" => {
                let name = rest
                    .first()
                    .and_then(Sexpr::atom)
                    .ok_or_else(|| PddlError::Parse("action without a name".into()))?;
                let mut params = None;
                let mut precondition = None;
                let mut effect = None;
                let mut i = 1;
                while i < rest.len() {
                    let key = rest[i]
                        .atom()
                        .ok_or_else(|| PddlError::Parse("expected an action keyword".into()))?;
                    let val = rest
                        .get(i + 1)
                        .ok_or_else(|| PddlError::Parse(format!("{key} without a value")))?;
                    match key {
                        ":parameters" => params = Some(val.clone()),
                        ":precondition" => precondition = Some(val.clone()),
                        ":effect" => effect = Some(val.clone()),
                        other => {
                            return Err(PddlError::Unsupported(format!(
                                "action keyword {other}"
                            )))
                        }
                    }
                    i += 2;
                }
                match params {
                    Some(Sexpr::List(p)) if p.is_empty() => {}
                    _ => {
                        return Err(PddlError::Unsupported(
                            "only grounded actions (:parameters ()) are accepted".into(),
                        ))
                    }
                }
                dom.actions.push(ParsedAction {
                    name,
                    precondition: precondition
                        .ok_or_else(|| PddlError::Parse("action without :precondition".into()))?,
                    effect: effect
                        .ok_or_else(|| PddlError::Parse("action without :effect".into()))?,
                });
            }
            other => return Err(PddlError::Unsupported(format!("domain section {other}"))),
        }
    }
    Ok(dom)
}

pub fn parse_problem(text: &str) -> Result<ParsedProblem<'_>, PddlError> {
    let top = parse_sexprs(text)?;
    let [doc] = top.as_slice() else {
        return Err(PddlError::Parse("expected exactly one (define ...)".into()));
    };
    let ("define", sections) = doc
        .tagged()
        .ok_or_else(|| PddlError::Parse("expected (define ...)".into()))?
    else {
        return Err(PddlError::Parse("expected (define ...)".into()));
    };
    let name = match sections.first().and_then(Sexpr::tagged) {
        Some(("problem", [Sexpr::Atom(n)])) => *n,
        _ => return Err(PddlError::Parse("expected (problem NAME)".into())),
    };
    let mut domain = None;
    let mut init = None;
    let mut goal = None;
    for sec in &sections[1..] {
        let (head, rest) = sec
            .tagged()
            .ok_or_else(|| PddlError::Parse("stray atom in problem body".into()))?;
        match head {
            ":domain" => match rest {
                [Sexpr::Atom(d)] => domain = Some(*d),
                _ => return Err(PddlError::Parse("malformed :domain".into())),
            },
            ":init" => {
                init = Some(
                    rest.iter()
                        .map(|s| parse_ground_atom(s))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
            ":goal" => match rest {
                [g] => match g.tagged() {
                    Some(("and", atoms)) => {
                        goal = Some(
                            atoms
                                .iter()
                                .map(|s| parse_ground_atom(s))
                                .collect::<Result<Vec<_>, _>>()?,
                        )
                    }
                    _ => return Err(PddlError::Unsupported("goal must be (and atom*)".into())),
                },
                _ => return Err(PddlError::Parse("malformed :goal".into())),
            },
            other => return Err(PddlError::Unsupported(format!("problem section {other}"))),
        }
    }
    Ok(ParsedProblem {
        name,
        domain: domain.ok_or_else(|| PddlError::Parse("problem without :domain".into()))?,
        init: init.ok_or_else(|| PddlError::Parse("problem without :init".into()))?,
        goal: goal.ok_or_else(|| PddlError::Parse("problem without :goal".into()))?,
    })
}

// ---------------------------------------------------------------------------
// Well-formedness checking
// ---------------------------------------------------------------------------

const KNOWN_REQUIREMENTS: [&str; 4] =
    [":strips", ":typing", ":conditional-effects", ":non-deterministic"];

/// Standalone structural check of a document pair: balanced s-expressions,
/// declared types/constants/predicates only, correct arities and argument
/// types, matching domain references.
pub fn check_wellformed(domain_text: &str, problem_text: &str) -> Result<(), PddlError> {
    let dom = parse_domain(domain_text)?;
    let prob = parse_problem(problem_text)?;
    check_parsed(&dom, &prob)
}

/// The checking half of [`check_wellformed`], shared with [`ground`] so the
/// documents are only parsed once there.
fn check_parsed(dom: &ParsedDomain, prob: &ParsedProblem) -> Result<(), PddlError> {
    if prob.domain != dom.name {
        return Err(PddlError::Parse(format!(
            "problem references domain {:?}, document defines {:?}",
            prob.domain, dom.name
        )));
    }
    for r in &dom.requirements {
        if !KNOWN_REQUIREMENTS.contains(r) {
            return Err(PddlError::Unsupported(format!("requirement {r}")));
        }
    }
    let types: BTreeSet<&str> = dom.types.iter().copied().collect();
    let mut constants: BTreeMap<&str, &str> = BTreeMap::new();
    for &(c, t) in &dom.constants {
        if !types.contains(t) {
            return Err(PddlError::Parse(format!("constant {c} has undeclared type {t}")));
        }
        if constants.insert(c, t).is_some() {
            return Err(PddlError::Parse(format!("constant {c} declared twice")));
        }
    }
    let mut predicates: BTreeMap<&str, &[&str]> = BTreeMap::new();
    for (p, params) in &dom.predicates {
        for t in params {
            if !types.contains(t) {
                return Err(PddlError::Parse(format!(
                    "predicate {p} uses undeclared type {t}"
                )));
            }
        }
        if predicates.insert(p, params).is_some() {
            return Err(PddlError::Parse(format!("predicate {p} declared twice")));
        }
    }

    let check_atom = |name: &str, args: &[&str]| -> Result<(), PddlError> {
        let params = predicates
            .get(name)
            .ok_or_else(|| PddlError::Parse(format!("undeclared predicate {name}")))?;
        if params.len() != args.len() {
            return Err(PddlError::Parse(format!(
                "predicate {name} takes {} arguments, found {}",
                params.len(),
                args.len()
            )));
        }
        for (&arg, &want) in args.iter().zip(params.iter()) {
            match constants.get(arg) {
                None => {
                    return Err(PddlError::Parse(format!(
                        "undeclared constant {arg} in ({name} ...)"
                    )))
                }
                Some(&ty) if ty != want => {
                    return Err(PddlError::Parse(format!(
                        "argument {arg} of ({name} ...) has type {ty}, expected {want}"
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    };
    fn walk(
        s: &Sexpr,
        check_atom: &impl Fn(&str, &[&str]) -> Result<(), PddlError>,
    ) -> Result<(), PddlError> {
        match s.tagged() {
            Some(("and", xs)) | Some(("oneof", xs)) => {
                xs.iter().try_for_each(|x| walk(x, check_atom))
            }
            Some(("not", [x])) => walk(x, check_atom),
            Some(("when", [gd, eff])) => {
                walk(gd, check_atom)?;
                walk(eff, check_atom)
            }
            Some((_, _)) => {
                let (name, args) = parse_ground_atom(s)?;
                check_atom(name, &args)
            }
            None => Err(PddlError::Parse("expected a formula, found an atom".into())),
        }
    }
    for action in &dom.actions {
        walk(&action.precondition, &check_atom)?;
        walk(&action.effect, &check_atom)?;
    }
    for (name, args) in prob.init.iter().chain(&prob.goal) {
        check_atom(name, args)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Grounding
// ---------------------------------------------------------------------------

/// Parses an emitted document pair back and expands it into an explicit
/// graph (breadth-first over fluent sets) for structural comparison against
/// the original encoding. `ts` and `aut` resolve direction names and decode
/// states; they play no part in the transition structure, which comes
/// entirely from the parsed text. Every atom is validated against the
/// manifest as it is resolved; for a standalone declaration-level audit of
/// a document pair use [`check_wellformed`].
pub fn ground(
    pair: &PddlDocumentPair,
    ts: &TransitionSystem,
    aut: &DetAutomaton,
) -> Result<ExplicitGraph, PddlError> {
    let dom = parse_domain(&pair.domain_text)?;
    let prob = parse_problem(&pair.problem_text)?;
    let m = &pair.manifest;
    if dom.name != m.domain || prob.name != m.problem {
        return Err(PddlError::ManifestMismatch("document names differ".into()));
    }
    let n = m.pathvars.len();
    let num_locs = m.locations.len();
    let num_q = m.autstates.len();
    let safe = m.variant == Variant::Safe;

    let mut fluents = Vec::new();
    for var in 0..n {
        for l in 0..num_locs {
            fluents.push(Fluent::At { var, loc: LocId(l as u32) });
        }
    }
    for q in 0..num_q {
        fluents.push(Fluent::AutState(q));
    }
    if safe {
        fluents.extend([Fluent::Alive, Fluent::Doomed, Fluent::Win, Fluent::Lose]);
    }
    let flag_base = n * num_locs + num_q;

    let var_idx: BTreeMap<&str, usize> =
        m.pathvars.iter().enumerate().map(|(i, (p, _))| (p.as_str(), i)).collect();
    let loc_idx: BTreeMap<&str, usize> =
        m.locations.iter().enumerate().map(|(i, (p, _))| (p.as_str(), i)).collect();
    let q_idx: BTreeMap<&str, usize> =
        m.autstates.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let resolve = |name: &str, args: &[&str]| -> Result<usize, PddlError> {
        let miss =
            |what: &str| PddlError::ManifestMismatch(format!("{what} not in the manifest"));
        match (name, args) {
            ("at", [v, l]) => {
                let var = *var_idx.get(v).ok_or_else(|| miss(v))?;
                let loc = *loc_idx.get(l).ok_or_else(|| miss(l))?;
                Ok(var * num_locs + loc)
            }
            ("autstate", [q]) => Ok(n * num_locs + *q_idx.get(q).ok_or_else(|| miss(q))?),
            ("alive", []) if safe => Ok(flag_base),
            ("doomed", []) if safe => Ok(flag_base + 1),
            ("win", []) if safe => Ok(flag_base + 2),
            ("lose", []) if safe => Ok(flag_base + 3),
            other => Err(PddlError::Unsupported(format!("predicate {:?}", other.0))),
        }
    };

    if dom.actions.len() != m.actions.len() {
        return Err(PddlError::ManifestMismatch(format!(
            "{} actions in the domain, {} in the manifest",
            dom.actions.len(),
            m.actions.len()
        )));
    }
    let mut actions = Vec::with_capacity(dom.actions.len());
    for (i, action) in dom.actions.iter().enumerate() {
        if action.name != m.actions[i].0 {
            return Err(PddlError::ManifestMismatch(format!(
                "action {} is named {:?}, manifest says {:?}",
                i, action.name, m.actions[i].0
            )));
        }
        match action.precondition.tagged() {
            Some(("and", [])) => {}
            _ => {
                return Err(PddlError::Unsupported(
                    "only empty preconditions are accepted".into(),
                ))
            }
        }
        let dirs = m.actions[i]
            .1
            .iter()
            .map(|d| {
                ts.dir_id(d).ok_or_else(|| {
                    PddlError::ManifestMismatch(format!("unknown direction {d:?}"))
                })
            })
            .collect::<Result<Vec<DirId>, _>>()?;
        let effect = sexpr_to_effect(&action.effect, &resolve)?;
        actions.push(FactoredAction { dirs, effect });
    }

    let to_ids = |atoms: &[(&str, Vec<&str>)]| -> Result<Vec<usize>, PddlError> {
        atoms.iter().map(|(p, a)| resolve(p, a)).collect()
    };
    let fe = FactoredEncoding {
        variant: m.variant,
        num_vars: n,
        fluents,
        init: to_ids(&prob.init)?.into_iter().collect(),
        goal: to_ids(&prob.goal)?,
        actions,
    };
    ground_factored(&fe, aut).map_err(PddlError::Unsupported)
}

fn sexpr_to_effect(
    s: &Sexpr,
    resolve: &impl Fn(&str, &[&str]) -> Result<usize, PddlError>,
) -> Result<Effect, PddlError> {
    match s.tagged() {
        Some(("and", xs)) => Ok(Effect::And(
            xs.iter()
                .map(|x| sexpr_to_effect(x, resolve))
                .collect::<Result<_, _>>()?,
        )),
        Some(("oneof", xs)) => Ok(Effect::Oneof(
            xs.iter()
                .map(|x| sexpr_to_effect(x, resolve))
                .collect::<Result<_, _>>()?,
        )),
        Some(("not", [x])) => {
            let (p, a) = parse_ground_atom(x)?;
            Ok(Effect::Del(resolve(p, &a)?))
        }
        Some(("when", [gd, eff])) => {
            let cond = match gd.tagged() {
                Some(("and", atoms)) => atoms
                    .iter()
                    .map(|a| {
                        let (p, args) = parse_ground_atom(a)?;
                        resolve(p, &args)
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                _ => {
                    return Err(PddlError::Unsupported(
                        "when-condition must be (and atom*)".into(),
                    ))
                }
            };
            Ok(Effect::When { cond, eff: Box::new(sexpr_to_effect(eff, resolve)?) })
        }
        Some((_, _)) => {
            let (p, a) = parse_ground_atom(s)?;
            Ok(Effect::Add(resolve(p, &a)?))
        }
        None => Err(PddlError::Parse("expected an effect, found an atom".into())),
    }
}

/// Definitional size of the encoded space, read off the declared constants:
/// |locations|^|pathvars| · |autstates|, plus the two sinks when the safe
/// variant's flags are declared. Reachability pruning happens in [`ground`].
pub fn definitional_count(pair: &PddlDocumentPair) -> Result<u128, PddlError> {
    let dom = parse_domain(&pair.domain_text)?;
    let count = |ty: &str| dom.constants.iter().filter(|&&(_, t)| t == ty).count();
    let products = (count("location") as u128)
        .checked_pow(count("pathvar") as u32)
        .and_then(|p| p.checked_mul(count("autstate") as u128))
        .ok_or_else(|| PddlError::Unsupported("definitional size overflows u128".into()))?;
    let sinks = if dom.predicates.iter().any(|&(p, _)| p == "win") { 2 } else { 0 };
    Ok(products + sinks)
}

// ---------------------------------------------------------------------------
// Controller ingestion
// ---------------------------------------------------------------------------

/// Reads a controller document, resolving actions given as PDDL action
/// names through the manifest; actions given as direction-name arrays pass
/// through unchanged.
pub fn ingest_policy(
    doc: &serde_json::Value,
    ts: &TransitionSystem,
    manifest: &Manifest,
) -> Result<Policy, PddlError> {
    let mut doc = doc.clone();
    if let Some(nodes) = doc.get_mut("nodes").and_then(|n| n.as_array_mut()) {
        for node in nodes {
            let Some(name) = node.get("action").and_then(|a| a.as_str()) else {
                continue;
            };
            let dirs = manifest
                .actions
                .iter()
                .find(|(p, _)| p == name)
                .map(|(_, dirs)| dirs.clone())
                .ok_or_else(|| {
                    PddlError::BadController(format!("action {name:?} is not in the manifest"))
                })?;
            node["action"] = json!(dirs);
        }
    }
    Policy::from_json(&doc, ts).map_err(PddlError::BadController)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode, factor, EncodeLimits};
    use crate::logic::Formula;
    use crate::solver::{solve_classical, solve_fond_strong_cyclic, Verdict};

    const TOGGLE: &str = "\
atoms a
locations lA lB
directions dA dB
init lA
label lA a
trans lA dA lA
trans lA dB lB
trans lB dA lA
trans lB dB lB
";

    fn toggle() -> TransitionSystem {
        TransitionSystem::parse(TOGGLE).unwrap()
    }

    fn delayed_copy() -> (TransitionSystem, QdecPomdp, FactoredEncoding) {
        let ts = toggle();
        let f = Formula::parse("forall p1. exists p2. G (a_p1 <-> X a_p2)").unwrap();
        let qdec = encode(&ts, &f, &EncodeLimits::default()).unwrap();
        let fenc = factor(&qdec);
        (ts, qdec, fenc)
    }

    fn exists_only() -> (TransitionSystem, QdecPomdp, FactoredEncoding) {
        let ts = toggle();
        let f = Formula::parse("exists p1. exists p2. F (a_p1 & ! a_p2)").unwrap();
        let qdec = encode(&ts, &f, &EncodeLimits::default()).unwrap();
        let fenc = factor(&qdec);
        (ts, qdec, fenc)
    }

    #[test]
    fn safe_emission_has_one_action_per_direction_with_three_way_oneof() {
        let (_, qdec, fenc) = delayed_copy();
        let pair = emit_pddl(&qdec, &fenc).unwrap();
        let dom = parse_domain(&pair.domain_text).unwrap();
        // One merged-agent action per direction.
        assert_eq!(dom.actions.len(), 2);
        assert!(dom.requirements.contains(&":non-deterministic"));
        for action in &dom.actions {
            // Top level: lose-collapse rows and exactly one oneof with the
            // two universal branches plus the stop-and-win branch.
            let ("and", items) = action.effect.tagged().unwrap() else {
                panic!("effect must be a conjunction")
            };
            let oneofs: Vec<&[Sexpr]> = items
                .iter()
                .filter_map(|i| match i.tagged() {
                    Some(("oneof", xs)) => Some(xs),
                    _ => None,
                })
                .collect();
            assert_eq!(oneofs.len(), 1);
            assert_eq!(oneofs[0].len(), 3);
        }
    }

    #[test]
    fn existential_only_emission_is_deterministic_pddl() {
        let (_, qdec, fenc) = exists_only();
        let pair = emit_pddl(&qdec, &fenc).unwrap();
        assert!(!pair.domain_text.contains("oneof"));
        assert!(!pair.domain_text.contains(":non-deterministic"));
        check_wellformed(&pair.domain_text, &pair.problem_text).unwrap();
    }

    #[test]
    fn emitted_documents_are_wellformed() {
        let (_, qdec, fenc) = delayed_copy();
        let pair = emit_pddl(&qdec, &fenc).unwrap();
        check_wellformed(&pair.domain_text, &pair.problem_text).unwrap();
    }

    #[test]
    fn partially_observable_prefixes_are_refused() {
        let ts = toggle();
        let f = Formula::parse("forall p1. exists p2. forall p3. G (a_p1 -> a_p2 | a_p3)")
            .unwrap();
        let qdec = encode(&ts, &f, &EncodeLimits::default()).unwrap();
        let fenc = factor(&qdec);
        assert!(matches!(
            emit_pddl(&qdec, &fenc),
            Err(PddlError::UnsupportedClass(PrefixClass::ForallExistsForall))
        ));
    }

    #[test]
    fn regrounding_recovers_the_explicit_encoding() {
        let (ts, qdec, fenc) = delayed_copy();
        let pair = emit_pddl(&qdec, &fenc).unwrap();
        // Declared space before reachability pruning: 2² products of
        // locations times 4 automaton states, plus the two sinks.
        assert_eq!(definitional_count(&pair).unwrap(), 18);
        let g = ground(&pair, &ts, qdec.automaton()).unwrap();
        assert_eq!(g.states.len(), 15);
        assert_eq!(crate::encoding::diff_graphs(&qdec.graph(), &g), None);
    }

    #[test]
    fn one_location_instance_grounds_to_a_few_states() {
        let ts = TransitionSystem::parse(
            "atoms a\nlocations l0\ndirections d0\ninit l0\nlabel l0 a\ntrans l0 d0 l0\n",
        )
        .unwrap();
        let f = Formula::parse("exists p1. G a_p1").unwrap();
        let qdec = encode(&ts, &f, &EncodeLimits::default()).unwrap();
        let pair = emit_pddl(&qdec, &factor(&qdec)).unwrap();
        let g = ground(&pair, &ts, qdec.automaton()).unwrap();
        assert!(g.states.len() <= 3, "got {} states", g.states.len());
        assert_eq!(crate::encoding::diff_graphs(&qdec.graph(), &g), None);
    }

    #[test]
    fn mutated_documents_fail_the_isomorphism_check() {
        let (ts, qdec, fenc) = delayed_copy();
        let pair = emit_pddl(&qdec, &fenc).unwrap();

        // Different initial automaton state.
        let mut mutated = pair.clone();
        mutated.problem_text = pair.problem_text.replacen("(autstate q-0)", "(autstate q-1)", 1);
        let g = ground(&mutated, &ts, qdec.automaton()).unwrap();
        assert!(crate::encoding::diff_graphs(&qdec.graph(), &g).is_some());

        // Existential movement row rewired to stay put: dB behaves like dA
        // for the controlled variable.
        let row = "(when (and (alive) (at pv-p2 loc-la)) \
                   (and (not (at pv-p2 loc-la)) (at pv-p2 loc-lb)))";
        let fixed = "(when (and (alive) (at pv-p2 loc-la)) \
                     (and (not (at pv-p2 loc-la)) (at pv-p2 loc-la)))";
        assert!(pair.domain_text.contains(row), "expected row not found");
        let mut mutated = pair.clone();
        mutated.domain_text = pair.domain_text.replace(row, fixed);
        let g = ground(&mutated, &ts, qdec.automaton()).unwrap();
        assert!(crate::encoding::diff_graphs(&qdec.graph(), &g).is_some());
    }

    #[test]
    fn name_collisions_get_deterministic_suffixes() {
        let ts = TransitionSystem::parse(
            "atoms a\nlocations lA la LA\ndirections d\ninit lA\nlabel lA a\n\
             trans lA d la\ntrans la d LA\ntrans LA d LA\n",
        )
        .unwrap();
        let f = Formula::parse("exists p1. F a_p1").unwrap();
        let qdec = encode(&ts, &f, &EncodeLimits::default()).unwrap();
        let pair = emit_pddl(&qdec, &factor(&qdec)).unwrap();
        let names: Vec<&str> =
            pair.manifest.locations.iter().map(|(p, _)| p.as_str()).collect();
        assert_eq!(names, ["loc-la", "loc-la-2", "loc-la-3"]);
        let sources: BTreeSet<&str> =
            pair.manifest.locations.iter().map(|(_, s)| s.as_str()).collect();
        assert_eq!(sources.len(), 3, "manifest must stay a bijection");
        check_wellformed(&pair.domain_text, &pair.problem_text).unwrap();
    }

    #[test]
    fn controllers_round_trip_through_ingestion() {
        let (ts, qdec, fenc) = delayed_copy();
        let pair = emit_pddl(&qdec, &fenc).unwrap();
        let Verdict::PlanFound { policy, .. } = solve_fond_strong_cyclic(&qdec) else {
            panic!("expected a plan");
        };
        // Direction-array actions pass through unchanged.
        let doc = policy.to_json(&ts);
        assert_eq!(ingest_policy(&doc, &ts, &pair.manifest).unwrap(), policy);

        // PDDL action names resolve through the manifest.
        let mut named = doc.clone();
        for node in named["nodes"].as_array_mut().unwrap() {
            let dirs: Vec<String> =
                serde_json::from_value(node["action"].clone()).unwrap();
            let name = pair
                .manifest
                .actions
                .iter()
                .find(|(_, d)| *d == dirs)
                .map(|(n, _)| n.clone())
                .unwrap();
            node["action"] = json!(name);
        }
        assert_eq!(ingest_policy(&named, &ts, &pair.manifest).unwrap(), policy);

        // Unknown action names are rejected.
        let mut bad = doc;
        bad["nodes"][0]["action"] = json!("act-missing");
        assert!(matches!(
            ingest_policy(&bad, &ts, &pair.manifest),
            Err(PddlError::BadController(_))
        ));
    }

    #[test]
    fn empty_controller_ingests_on_an_initially_solved_instance() {
        let ts = toggle();
        let f = Formula::parse("exists p1. true").unwrap();
        let qdec = encode(&ts, &f, &EncodeLimits::default()).unwrap();
        let Verdict::PlanFound { policy, .. } = solve_classical(&qdec) else {
            panic!("expected a plan");
        };
        assert!(policy.nodes.is_empty());
        let pair = emit_pddl(&qdec, &factor(&qdec)).unwrap();
        let doc = policy.to_json(&ts);
        assert_eq!(ingest_policy(&doc, &ts, &pair.manifest).unwrap(), policy);
    }

    #[test]
    fn emission_is_byte_deterministic() {
        let (_, qdec1, fenc1) = delayed_copy();
        let (_, qdec2, fenc2) = delayed_copy();
        let a = emit_pddl(&qdec1, &fenc1).unwrap();
        let b = emit_pddl(&qdec2, &fenc2).unwrap();
        assert_eq!(a.domain_text, b.domain_text);
        assert_eq!(a.problem_text, b.problem_text);
        assert_eq!(a.manifest.to_json(), b.manifest.to_json());
    }

    #[test]
    fn manifest_survives_json_round_trip() {
        let (_, qdec, fenc) = delayed_copy();
        let pair = emit_pddl(&qdec, &fenc).unwrap();
        let back = Manifest::from_json(&pair.manifest.to_json()).unwrap();
        assert_eq!(back, pair.manifest);
    }

    #[test]
    fn checker_rejects_malformed_documents() {
        let (_, qdec, fenc) = delayed_copy();
        let pair = emit_pddl(&qdec, &fenc).unwrap();
        // Unbalanced parentheses.
        let chopped = &pair.domain_text[..pair.domain_text.len() - 2];
        assert!(matches!(
            check_wellformed(chopped, &pair.problem_text),
            Err(PddlError::Parse(_))
        ));
        // Undeclared constant.
        let broken = pair.problem_text.replacen("loc-la", "loc-xx", 1);
        assert!(matches!(
            check_wellformed(&pair.domain_text, &broken),
            Err(PddlError::Parse(_))
        ));
        // Wrong arity.
        let broken = pair.problem_text.replacen("(autstate q-0)", "(autstate q-0 q-1)", 1);
        assert!(matches!(
            check_wellformed(&pair.domain_text, &broken),
            Err(PddlError::Parse(_))
        ));
        // Wrongly typed argument.
        let broken = pair.problem_text.replacen("(autstate q-0)", "(autstate loc-la)", 1);
        assert!(matches!(
            check_wellformed(&pair.domain_text, &broken),
            Err(PddlError::Parse(_))
        ));
    }
}
