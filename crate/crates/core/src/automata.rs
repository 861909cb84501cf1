//! Deterministic automata over indexed-atom letters, built by formula
//! progression.
//!
//! A letter is the set of (atom, path-variable) pairs holding at one instant.
//! States are normalized residual formulas: consuming a letter rewrites the
//! residue to what must hold of the rest of the word. For a reachability body
//! the automaton is a DFA whose marked state is the residue `true`
//! (obligation discharged); for a safety body it is a safety automaton whose
//! marked state is the residue `false` (violation witnessed). Marked states
//! are absorbing by construction, and each state's outgoing guards partition
//! the alphabet, so the automaton is total and deterministic.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::logic::{classify_body, normalize, to_nnf, BodyClass, Formula, Nnf, Tv3};

/// Default cap on the number of residues before construction aborts.
pub const DEFAULT_MAX_STATES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutomatonKind {
    /// DFA: marked means the body is satisfied on every extension.
    Reach,
    /// Safety automaton: marked means the body is violated on every extension.
    Safety,
}

#[derive(Debug, Error)]
pub enum AutomatonError {
    #[error("automaton exceeds {limit} states; refusing to continue")]
    TooManyStates { limit: usize },
    #[error("body does not classify as {expected} (got {got})")]
    WrongClass {
        expected: &'static str,
        got: &'static str,
    },
    #[error("more than 64 distinct indexed atoms are not supported")]
    TooManyAtoms,
    #[error("invalid automaton: {0}")]
    BadParts(String),
}

/// A letter: the set of (atom, path-variable) pairs that hold right now.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Letter(pub BTreeSet<(String, usize)>);

impl Letter {
    pub fn new() -> Letter {
        Letter::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, usize)>) -> Letter {
        Letter(
            pairs
                .into_iter()
                .map(|(a, v)| (a.to_string(), v))
                .collect(),
        )
    }

    pub fn insert(&mut self, atom: &str, var: usize) {
        self.0.insert((atom.to_string(), var));
    }

    pub fn contains(&self, atom: &str, var: usize) -> bool {
        self.0.contains(&(atom.to_string(), var))
    }
}

#[derive(Debug, Clone)]
struct StateData {
    desc: String,
    marked: bool,
    /// Bits (over the atom table) whose current value the transition reads.
    now_mask: u64,
    /// Successor for each compact valuation of the `now_mask` bits.
    table: Vec<u32>,
}

/// Total deterministic automaton over letters.
#[derive(Debug, Clone)]
pub struct DetAutomaton {
    kind: AutomatonKind,
    /// Bit index → (atom, 0-based path variable).
    atom_table: Vec<(String, usize)>,
    var_names: Vec<String>,
    states: Vec<StateData>,
    initial: usize,
}

/// Builds the reachability DFA for the body of `formula` by progression.
pub fn build_reach_dfa(
    formula: &Formula,
    max_states: usize,
) -> Result<DetAutomaton, AutomatonError> {
    build(formula, AutomatonKind::Reach, max_states)
}

/// Builds the safety automaton for the body of `formula` by progression.
pub fn build_safety_dsa(
    formula: &Formula,
    max_states: usize,
) -> Result<DetAutomaton, AutomatonError> {
    build(formula, AutomatonKind::Safety, max_states)
}

fn class_name(c: BodyClass) -> &'static str {
    match c {
        BodyClass::Reachability => "Reachability",
        BodyClass::Safety => "Safety",
        BodyClass::Neither => "Neither",
    }
}

fn build(
    formula: &Formula,
    kind: AutomatonKind,
    max_states: usize,
) -> Result<DetAutomaton, AutomatonError> {
    let class = classify_body(formula.body());
    let expected = match kind {
        AutomatonKind::Reach => BodyClass::Reachability,
        AutomatonKind::Safety => BodyClass::Safety,
    };
    if class != expected {
        return Err(AutomatonError::WrongClass {
            expected: class_name(expected),
            got: class_name(class),
        });
    }

    let root = normalize(to_nnf(formula.body(), false));
    let var_names: Vec<String> = formula.prefix().iter().map(|(_, n)| n.clone()).collect();

    let mut atom_set = BTreeSet::new();
    collect_atoms(&root, &mut atom_set);
    if atom_set.len() > 64 {
        return Err(AutomatonError::TooManyAtoms);
    }
    let atom_table: Vec<(String, usize)> = atom_set.into_iter().collect();
    let bit_of: HashMap<(String, usize), usize> = atom_table
        .iter()
        .enumerate()
        .map(|(i, k)| (k.clone(), i))
        .collect();

    let mut residues: Vec<Nnf> = vec![root.clone()];
    let mut index: HashMap<Nnf, usize> = HashMap::from([(root, 0)]);
    let mut states: Vec<StateData> = Vec::new();
    let mut at = 0;
    while at < residues.len() {
        let residue = residues[at].clone();
        let now = now_mask(&residue, &bit_of);
        let k = now.count_ones();
        let mut table = Vec::with_capacity(1 << k);
        for compact in 0..(1u64 << k) as u64 {
            let val = expand_mask(now, compact);
            let next = normalize(progress(&residue, val, &bit_of));
            let target = match index.get(&next) {
                Some(&t) => t,
                None => {
                    let t = residues.len();
                    if t >= max_states {
                        return Err(AutomatonError::TooManyStates { limit: max_states });
                    }
                    index.insert(next.clone(), t);
                    residues.push(next);
                    t
                }
            };
            table.push(target as u32);
        }
        let marked = match kind {
            AutomatonKind::Reach => residue == Nnf::True,
            AutomatonKind::Safety => residue == Nnf::False,
        };
        states.push(StateData {
            desc: residue.render(&var_names),
            marked,
            now_mask: now,
            table,
        });
        at += 1;
    }

    Ok(DetAutomaton {
        kind,
        atom_table,
        var_names,
        states,
        initial: 0,
    })
}

fn collect_atoms(n: &Nnf, out: &mut BTreeSet<(String, usize)>) {
    match n {
        Nnf::True | Nnf::False => {}
        Nnf::Lit { atom, var, .. } => {
            out.insert((atom.clone(), *var));
        }
        Nnf::And(xs) | Nnf::Or(xs) => xs.iter().for_each(|x| collect_atoms(x, out)),
        Nnf::Next(a) | Nnf::Eventually(a) | Nnf::Globally(a) => collect_atoms(a, out),
        Nnf::Until(a, b) | Nnf::Release(a, b) => {
            collect_atoms(a, out);
            collect_atoms(b, out);
        }
    }
}

/// Bits whose *current* value the one-step progression of `n` reads.
/// Everything under `X` is shielded for one step.
fn now_mask(n: &Nnf, bit_of: &HashMap<(String, usize), usize>) -> u64 {
    match n {
        Nnf::True | Nnf::False => 0,
        Nnf::Lit { atom, var, .. } => 1u64 << bit_of[&(atom.clone(), *var)],
        Nnf::And(xs) | Nnf::Or(xs) => xs.iter().fold(0, |m, x| m | now_mask(x, bit_of)),
        Nnf::Next(_) => 0,
        Nnf::Eventually(a) | Nnf::Globally(a) => now_mask(a, bit_of),
        Nnf::Until(a, b) | Nnf::Release(a, b) => now_mask(a, bit_of) | now_mask(b, bit_of),
    }
}

/// Spreads the low bits of `compact` onto the set bits of `mask`.
fn expand_mask(mask: u64, compact: u64) -> u64 {
    let mut out = 0u64;
    let mut m = mask;
    let mut j = 0;
    while m != 0 {
        let bit = m & m.wrapping_neg();
        if compact >> j & 1 == 1 {
            out |= bit;
        }
        m ^= bit;
        j += 1;
    }
    out
}

/// One-step progression under a concrete valuation of the current instant.
fn progress(n: &Nnf, val: u64, bit_of: &HashMap<(String, usize), usize>) -> Nnf {
    match n {
        Nnf::True => Nnf::True,
        Nnf::False => Nnf::False,
        Nnf::Lit {
            atom,
            var,
            positive,
        } => {
            let set = val >> bit_of[&(atom.clone(), *var)] & 1 == 1;
            if set == *positive {
                Nnf::True
            } else {
                Nnf::False
            }
        }
        Nnf::And(xs) => Nnf::And(xs.iter().map(|x| progress(x, val, bit_of)).collect()),
        Nnf::Or(xs) => Nnf::Or(xs.iter().map(|x| progress(x, val, bit_of)).collect()),
        Nnf::Next(a) => (**a).clone(),
        Nnf::Eventually(a) => Nnf::Or(vec![progress(a, val, bit_of), n.clone()]),
        Nnf::Globally(a) => Nnf::And(vec![progress(a, val, bit_of), n.clone()]),
        Nnf::Until(l, r) => Nnf::Or(vec![
            progress(r, val, bit_of),
            Nnf::And(vec![progress(l, val, bit_of), n.clone()]),
        ]),
        Nnf::Release(l, r) => Nnf::And(vec![
            progress(r, val, bit_of),
            Nnf::Or(vec![progress(l, val, bit_of), n.clone()]),
        ]),
    }
}

impl DetAutomaton {
    /// Hand-built automaton from explicit guards; validates determinism,
    /// totality, and that marked states absorb. Guards are conjunctions of
    /// (atom-table index, required value) literals.
    pub fn from_parts(
        kind: AutomatonKind,
        var_names: Vec<String>,
        atom_table: Vec<(String, usize)>,
        marked: Vec<bool>,
        initial: usize,
        edges: Vec<Vec<(Vec<(usize, bool)>, usize)>>,
    ) -> Result<DetAutomaton, AutomatonError> {
        let n = marked.len();
        if atom_table.len() > 64 {
            return Err(AutomatonError::TooManyAtoms);
        }
        if edges.len() != n || initial >= n || n == 0 {
            return Err(AutomatonError::BadParts(
                "state count mismatch or empty automaton".into(),
            ));
        }
        let mut states = Vec::with_capacity(n);
        for (s, guards) in edges.iter().enumerate() {
            let mut now = 0u64;
            for (conj, target) in guards {
                if *target >= n {
                    return Err(AutomatonError::BadParts(format!(
                        "state {s}: edge target out of range"
                    )));
                }
                for (bit, _) in conj {
                    if *bit >= atom_table.len() {
                        return Err(AutomatonError::BadParts(format!(
                            "state {s}: guard atom out of range"
                        )));
                    }
                    now |= 1u64 << bit;
                }
            }
            let k = now.count_ones();
            let mut table = Vec::with_capacity(1 << k);
            for compact in 0..(1u64 << k) {
                let val = expand_mask(now, compact);
                let matching: Vec<usize> = guards
                    .iter()
                    .enumerate()
                    .filter(|(_, (conj, _))| {
                        conj.iter()
                            .all(|(bit, want)| (val >> bit & 1 == 1) == *want)
                    })
                    .map(|(i, _)| i)
                    .collect();
                match matching.as_slice() {
                    [one] => table.push(guards[*one].1 as u32),
                    [] => {
                        return Err(AutomatonError::BadParts(format!(
                            "state {s}: guards not total"
                        )))
                    }
                    _ => {
                        return Err(AutomatonError::BadParts(format!(
                            "state {s}: guards overlap"
                        )))
                    }
                }
            }
            if marked[s] && table.iter().any(|&t| t as usize != s) {
                return Err(AutomatonError::BadParts(format!(
                    "marked state {s} must be absorbing"
                )));
            }
            states.push(StateData {
                desc: format!("q{s}"),
                marked: marked[s],
                now_mask: now,
                table,
            });
        }
        Ok(DetAutomaton {
            kind,
            atom_table,
            var_names,
            states,
            initial,
        })
    }

    pub fn kind(&self) -> AutomatonKind {
        self.kind
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_marked(&self, q: usize) -> bool {
        self.states[q].marked
    }

    pub fn marked_states(&self) -> Vec<usize> {
        (0..self.states.len())
            .filter(|&q| self.states[q].marked)
            .collect()
    }

    /// Human-readable residue (or name) of a state.
    pub fn state_desc(&self, q: usize) -> &str {
        &self.states[q].desc
    }

    /// True when the state's residual obligation is the constant false —
    /// every extension of a word arriving here is determined false.
    /// Normalization canonicalizes such residues, so the check is exact.
    pub fn is_false_residue(&self, q: usize) -> bool {
        self.states[q].desc == "false"
    }

    pub fn atom_table(&self) -> &[(String, usize)] {
        &self.atom_table
    }

    /// Compiles a letter into the internal bitmask. Pairs outside the atom
    /// table are irrelevant to every guard and are ignored.
    pub fn letter_mask(&self, letter: &Letter) -> u64 {
        let mut mask = 0u64;
        for (i, key) in self.atom_table.iter().enumerate() {
            if letter.0.contains(key) {
                mask |= 1u64 << i;
            }
        }
        mask
    }

    pub fn step(&self, q: usize, letter: &Letter) -> usize {
        self.step_mask(q, self.letter_mask(letter))
    }

    /// Transition on a pre-compiled letter mask.
    pub fn step_mask(&self, q: usize, letter_mask: u64) -> usize {
        let st = &self.states[q];
        let mut compact = 0u64;
        let mut m = st.now_mask;
        let mut j = 0;
        while m != 0 {
            let bit = m & m.wrapping_neg();
            if letter_mask & bit != 0 {
                compact |= 1 << j;
            }
            m ^= bit;
            j += 1;
        }
        st.table[compact as usize] as usize
    }

    /// States visited on `word`, starting at the initial state
    /// (`word.len() + 1` entries).
    pub fn run(&self, word: &[Letter]) -> Vec<usize> {
        let mut states = Vec::with_capacity(word.len() + 1);
        let mut q = self.initial;
        states.push(q);
        for letter in word {
            q = self.step(q, letter);
            states.push(q);
        }
        states
    }

    /// Three-valued acceptance on a finite word: a visit to a marked state is
    /// a determined verdict (True for reach, False for safety); otherwise the
    /// word is too short to tell.
    pub fn accepts(&self, word: &[Letter]) -> Tv3 {
        let mut q = self.initial;
        let mut hit = self.states[q].marked;
        for letter in word {
            if hit {
                break;
            }
            q = self.step(q, letter);
            hit |= self.states[q].marked;
        }
        if hit {
            match self.kind {
                AutomatonKind::Reach => Tv3::True,
                AutomatonKind::Safety => Tv3::False,
            }
        } else {
            Tv3::Unknown
        }
    }

    /// All letters over the automaton's own atom table (2^|atoms| of them).
    pub fn all_letters(&self) -> Vec<Letter> {
        let n = self.atom_table.len();
        (0..(1usize << n))
            .map(|bits| {
                Letter(
                    self.atom_table
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| bits >> i & 1 == 1)
                        .map(|(_, k)| k.clone())
                        .collect(),
                )
            })
            .collect()
    }

    fn guard_desc(&self, q: usize, target: usize) -> String {
        let st = &self.states[q];
        let k = st.now_mask.count_ones();
        let total = 1u64 << k;
        let hits: Vec<u64> = (0..total)
            .filter(|&c| st.table[c as usize] as usize == target)
            .collect();
        if hits.len() as u64 == total {
            return "true".into();
        }
        let bits: Vec<usize> = (0..64).filter(|b| st.now_mask >> b & 1 == 1).collect();
        let mut terms = Vec::new();
        for c in hits {
            let lits: Vec<String> = bits
                .iter()
                .enumerate()
                .map(|(j, &bit)| {
                    let (atom, var) = &self.atom_table[bit];
                    let name = self
                        .var_names
                        .get(*var)
                        .cloned()
                        .unwrap_or_else(|| format!("p{}", var + 1));
                    if c >> j & 1 == 1 {
                        format!("{atom}_{name}")
                    } else {
                        format!("!{atom}_{name}")
                    }
                })
                .collect();
            terms.push(lits.join(" & "));
        }
        terms.join(" | ")
    }

    /// GraphViz rendering for inspection.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph automaton {\n  rankdir=LR;\n");
        for (q, st) in self.states.iter().enumerate() {
            let shape = if st.marked { "doublecircle" } else { "circle" };
            let _ = writeln!(
                out,
                "  q{q} [shape={shape}, label=\"q{q}: {}\"];",
                st.desc.replace('"', "'")
            );
        }
        let _ = writeln!(out, "  init [shape=point];");
        let _ = writeln!(out, "  init -> q{};", self.initial);
        for q in 0..self.states.len() {
            let targets: BTreeSet<usize> = self.states[q]
                .table
                .iter()
                .map(|&t| t as usize)
                .collect();
            for t in targets {
                let _ = writeln!(
                    out,
                    "  q{q} -> q{t} [label=\"{}\"];",
                    self.guard_desc(q, t).replace('"', "'")
                );
            }
        }
        out.push_str("}\n");
        out
    }
}
