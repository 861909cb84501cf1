//! Skolem witnesses: replaying a controller as a strategy, and validating
//! that strategy against the formula without trusting the encoding.
//!
//! A witness binds a controller to a system and formula. Replay runs the
//! controller directly on the transition function: at each step the current
//! node fixes the existential variables' directions *before* the universal
//! directions of that step are revealed, every variable moves, and the node
//! follows the edge keyed by the new observable locations. This produces one
//! location trace per path variable.
//!
//! Validation decides, for every assignment of universal directions up to a
//! bound, whether the induced traces satisfy the body under the three-valued
//! bounded semantics — safety must never be determined false, reachability
//! must be determined true within the plan's horizon. Rather than
//! enumerating direction sequences, the validator searches the finite
//! configuration graph (locations × controller node × residual obligation),
//! which reaches the same verdict because configurations fully determine the
//! future. Counterexamples are reconstructed shortest-first and
//! lexicographically least, then confirmed by direct evaluation of the body
//! on the replayed traces.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::automata::{build_reach_dfa, build_safety_dsa, DetAutomaton, Letter, DEFAULT_MAX_STATES};
use crate::encoding::Observation;
use crate::logic::{classify_body, eval_prefix_bounded, BodyClass, Formula, Tv3};
use crate::solver::Policy;
use crate::system::{DirId, LocId, TransitionSystem};

#[derive(Debug, Error)]
pub enum WitnessError {
    #[error("malformed policy: {0}")]
    BadPolicy(String),
    #[error("body is neither a reachability nor a safety property")]
    Unsupported,
    #[error("validation exceeds {limit} configurations; refusing to continue")]
    Budget { limit: usize },
    #[error("internal disagreement while validating: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateLimits {
    pub max_configs: usize,
    pub max_automaton_states: usize,
}

impl Default for ValidateLimits {
    fn default() -> Self {
        ValidateLimits {
            max_configs: 1_000_000,
            max_automaton_states: DEFAULT_MAX_STATES,
        }
    }
}

/// A controller bound to its system and formula, readable as a Skolem
/// function from universal behaviour to existential behaviour.
pub struct SkolemWitness {
    ts: TransitionSystem,
    formula: Formula,
    policy: Policy,
    exist_vars: Vec<usize>,
    univ_vars: Vec<usize>,
    obs_len: usize,
}

/// The traces induced by one replay.
#[derive(Debug, Clone)]
pub struct Replay {
    /// One location sequence per path variable, each `steps + 1` long.
    pub prefixes: Vec<Vec<LocId>>,
    /// Joint existential directions chosen at each step, in variable order.
    pub exist_dirs: Vec<Vec<DirId>>,
}

impl SkolemWitness {
    pub fn new(
        ts: &TransitionSystem,
        formula: &Formula,
        policy: Policy,
    ) -> Result<SkolemWitness, WitnessError> {
        let exist_vars = formula.existential_indices();
        let univ_vars = formula.universal_indices();
        let obs_len = exist_vars.iter().copied().max().map_or(0, |v| v + 1);
        if !policy.nodes.is_empty() && policy.start >= policy.nodes.len() {
            return Err(WitnessError::BadPolicy("start node out of range".into()));
        }
        for (i, node) in policy.nodes.iter().enumerate() {
            if node.action.len() != exist_vars.len() {
                return Err(WitnessError::BadPolicy(format!(
                    "node {i}: expected {} directions, found {}",
                    exist_vars.len(),
                    node.action.len()
                )));
            }
            for &d in &node.action {
                if d.idx() >= ts.num_directions() {
                    return Err(WitnessError::BadPolicy(format!(
                        "node {i}: direction out of range"
                    )));
                }
            }
            for &t in node.edges.values() {
                if t >= policy.nodes.len() {
                    return Err(WitnessError::BadPolicy(format!(
                        "node {i}: edge target out of range"
                    )));
                }
            }
        }
        Ok(SkolemWitness {
            ts: ts.clone(),
            formula: formula.clone(),
            policy,
            exist_vars,
            univ_vars,
            obs_len,
        })
    }

    pub fn ts(&self) -> &TransitionSystem {
        &self.ts
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn num_universal(&self) -> usize {
        self.univ_vars.len()
    }

    pub fn start(&self) -> WitnessRun<'_> {
        WitnessRun {
            w: self,
            locs: vec![self.ts.initial(); self.formula.num_vars()],
            node: if self.policy.nodes.is_empty() {
                None
            } else {
                Some(self.policy.start)
            },
        }
    }

    /// Replays `universal[t]` (one direction per universal variable, in
    /// variable order) from the start.
    pub fn replay(&self, universal: &[Vec<DirId>]) -> Result<Replay, WitnessError> {
        let n = self.formula.num_vars();
        let mut run = self.start();
        let mut prefixes: Vec<Vec<LocId>> = (0..n).map(|v| vec![run.locs[v]]).collect();
        let mut exist_dirs = Vec::with_capacity(universal.len());
        for univ in universal {
            exist_dirs.push(run.next_existential_dirs().ok_or_else(|| {
                WitnessError::BadPolicy("empty plan cannot be replayed past step 0".into())
            })?);
            run.step(univ)?;
            for v in 0..n {
                prefixes[v].push(run.locs[v]);
            }
        }
        Ok(Replay { prefixes, exist_dirs })
    }

    /// Three-valued verdict of the body on the traces of one replay.
    pub fn evaluate(&self, replay: &Replay) -> Tv3 {
        eval_prefix_bounded(&self.ts, &replay.prefixes, self.formula.body())
            .expect("replayed prefixes are well-formed by construction")
    }

    /// The letter read at step `t` of a replay: all atom–variable pairs
    /// holding at the current locations.
    pub fn letter_at(&self, replay: &Replay, t: usize) -> Letter {
        let mut letter = Letter::new();
        for v in 0..self.formula.num_vars() {
            let loc = replay.prefixes[v][t];
            for a in 0..self.ts.num_atoms() {
                if self.ts.has_atom(loc, a) {
                    letter.insert(self.ts.atom_name(a), v);
                }
            }
        }
        letter
    }

    /// Plain-text table of one replay: per step, each variable's location,
    /// the letter read, the automaton state, and the chosen existential
    /// directions. The automaton column is omitted for unclassifiable
    /// bodies.
    pub fn trace_table(&self, replay: &Replay) -> String {
        let n = self.formula.num_vars();
        let steps = replay.prefixes[0].len();
        let automaton = match classify_body(self.formula.body()) {
            BodyClass::Reachability => {
                build_reach_dfa(&self.formula, DEFAULT_MAX_STATES).ok()
            }
            BodyClass::Safety => build_safety_dsa(&self.formula, DEFAULT_MAX_STATES).ok(),
            BodyClass::Neither => None,
        };
        let qs: Option<Vec<usize>> = automaton.as_ref().map(|aut| {
            let mut q = aut.initial();
            let mut all = vec![q];
            for t in 0..steps.saturating_sub(1) {
                q = aut.step(q, &self.letter_at(replay, t));
                all.push(q);
            }
            all
        });

        let mut out = String::new();
        let mut header = String::from("step");
        for v in 0..n {
            let _ = write!(header, " | {}", self.formula.var_name(v));
        }
        header.push_str(" | letter | q | chosen");
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{}", "-".repeat(header.len()));
        for t in 0..steps {
            let mut row = format!("{t:>4}");
            for v in 0..n {
                let _ = write!(row, " | {}", self.ts.loc_name(replay.prefixes[v][t]));
            }
            let pairs: Vec<String> = self
                .letter_at(replay, t)
                .0
                .iter()
                .map(|(a, v)| format!("{a}_{}", self.formula.var_name(*v)))
                .collect();
            let _ = write!(
                row,
                " | {{{}}} | {}",
                pairs.join(","),
                qs.as_ref().map_or("-".into(), |qs| format!("q{}", qs[t]))
            );
            if t < replay.exist_dirs.len() {
                let dirs: Vec<&str> = replay.exist_dirs[t]
                    .iter()
                    .map(|&d| self.ts.dir_name(d))
                    .collect();
                let _ = write!(row, " | {}", dirs.join(","));
            } else {
                row.push_str(" | -");
            }
            let _ = writeln!(out, "{row}");
        }
        out
    }
}

/// Step-wise replay. Existential directions for a step are available
/// *before* that step's universal directions are supplied.
pub struct WitnessRun<'w> {
    w: &'w SkolemWitness,
    locs: Vec<LocId>,
    node: Option<usize>,
}

impl WitnessRun<'_> {
    pub fn locations(&self) -> &[LocId] {
        &self.locs
    }

    /// Directions the controller commits to for the next step, one per
    /// existential variable in variable order; `None` for the empty plan.
    pub fn next_existential_dirs(&self) -> Option<Vec<DirId>> {
        self.node.map(|m| self.w.policy.nodes[m].action.clone())
    }

    /// Advances one step: the controller's committed directions and the
    /// given universal directions (one per universal variable, in variable
    /// order) move every variable; the controller then follows the edge for
    /// the new observation, staying put if none exists.
    pub fn step(&mut self, universal: &[DirId]) -> Result<(), WitnessError> {
        let Some(m) = self.node else {
            return Err(WitnessError::BadPolicy(
                "empty plan cannot be replayed past step 0".into(),
            ));
        };
        if universal.len() != self.w.univ_vars.len() {
            return Err(WitnessError::BadPolicy(format!(
                "expected {} universal directions, found {}",
                self.w.univ_vars.len(),
                universal.len()
            )));
        }
        let action = &self.w.policy.nodes[m].action;
        for (k, &v) in self.w.exist_vars.iter().enumerate() {
            self.locs[v] = self.w.ts.successor(self.locs[v], action[k]);
        }
        for (k, &v) in self.w.univ_vars.iter().enumerate() {
            if universal[k].idx() >= self.w.ts.num_directions() {
                return Err(WitnessError::BadPolicy("universal direction out of range".into()));
            }
            self.locs[v] = self.w.ts.successor(self.locs[v], universal[k]);
        }
        let obs = Observation::Locs(self.locs[..self.w.obs_len].to_vec());
        self.node = Some(
            self.w.policy.nodes[m]
                .edges
                .get(&obs)
                .copied()
                .unwrap_or(m),
        );
        Ok(())
    }
}

/// Outcome of validating a witness at a bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validation {
    /// Every universal assignment of `steps` steps meets the claim.
    Validated { steps: usize },
    /// Some assignment breaks the claim; the recorded one is the shortest
    /// and, among those, lexicographically least by direction indices.
    Violated {
        universal_dirs: Vec<Vec<DirId>>,
        /// Direct evaluation of the body on the induced traces: `False` for
        /// a definite violation, `Unknown` for a reachability obligation not
        /// met within the horizon.
        verdict: Tv3,
        step: usize,
    },
    /// A reachability claim promises the goal within the plan's horizon;
    /// a smaller bound can neither confirm nor refute it.
    Indeterminate { bound: usize, needed: usize },
}

/// One node of the configuration graph.
#[derive(Clone, PartialEq, Eq, Hash)]
struct Config {
    locs: Vec<LocId>,
    node: usize,
    q: usize,
}

/// Decides whether the witness meets its claim for *every* universal
/// assignment of up to `bound` steps (exactly the plan horizon for plans
/// that carry one).
pub fn validate_witness(
    witness: &SkolemWitness,
    bound: usize,
    limits: &ValidateLimits,
) -> Result<Validation, WitnessError> {
    let class = classify_body(witness.formula.body());
    let (automaton, reach) = match class {
        BodyClass::Reachability => (
            build_reach_dfa(&witness.formula, limits.max_automaton_states)
                .map_err(|e| WitnessError::Internal(e.to_string()))?,
            true,
        ),
        BodyClass::Safety => (
            build_safety_dsa(&witness.formula, limits.max_automaton_states)
                .map_err(|e| WitnessError::Internal(e.to_string()))?,
            false,
        ),
        BodyClass::Neither => return Err(WitnessError::Unsupported),
    };

    let effective = match witness.policy.horizon {
        Some(h) if bound < h && reach => {
            return Ok(Validation::Indeterminate { bound, needed: h })
        }
        Some(h) => h.min(bound),
        None => bound,
    };

    // Empty plan: only the initial configuration is in scope.
    if witness.policy.nodes.is_empty() || effective == 0 {
        let prefixes: Vec<Vec<LocId>> = (0..witness.formula.num_vars())
            .map(|_| vec![witness.ts.initial()])
            .collect();
        let verdict = eval_prefix_bounded(&witness.ts, &prefixes, witness.formula.body())
            .map_err(|e| WitnessError::Internal(e.to_string()))?;
        let ok = if reach { verdict == Tv3::True } else { verdict != Tv3::False };
        return Ok(if ok {
            Validation::Validated { steps: 0 }
        } else {
            Validation::Violated { universal_dirs: Vec::new(), verdict, step: 0 }
        });
    }

    let graph = explore_configs(witness, &automaton, limits)?;
    let verdict = if reach {
        search_reach_violation(&automaton, &graph, effective)
    } else {
        search_safety_violation(&automaton, &graph, effective)
    };

    match verdict {
        None => Ok(Validation::Validated { steps: effective }),
        Some(universal_dirs) => {
            let step = universal_dirs.len();
            let replay = witness.replay(&universal_dirs)?;
            let verdict = witness.evaluate(&replay);
            let really_bad = if reach { verdict != Tv3::True } else { verdict == Tv3::False };
            if !really_bad {
                return Err(WitnessError::Internal(format!(
                    "search reported a violation at step {step}, but evaluation says {verdict:?}"
                )));
            }
            Ok(Validation::Violated { universal_dirs, verdict, step })
        }
    }
}

struct ConfigGraph {
    configs: Vec<Config>,
    /// succ[config][universal tuple index] = successor config.
    succ: Vec<Vec<usize>>,
    univ_tuples: Vec<Vec<DirId>>,
}

fn explore_configs(
    witness: &SkolemWitness,
    automaton: &DetAutomaton,
    limits: &ValidateLimits,
) -> Result<ConfigGraph, WitnessError> {
    let ts = &witness.ts;
    let n = witness.formula.num_vars();
    // Letter-mask contribution per (variable, location).
    let mut letter_bits = vec![vec![0u64; ts.num_locations()]; n];
    for (bit, (atom, var)) in automaton.atom_table().iter().enumerate() {
        if let Some(aid) = ts.atom_id(atom) {
            for l in 0..ts.num_locations() {
                if ts.has_atom(LocId(l as u32), aid) && *var < n {
                    letter_bits[*var][l] |= 1u64 << bit;
                }
            }
        }
    }
    let univ_tuples: Vec<Vec<DirId>> =
        crate::encoding::tuples(ts.num_directions(), witness.univ_vars.len())
            .into_iter()
            .map(|t| t.into_iter().map(|d| DirId(d as u32)).collect())
            .collect();

    let start = Config {
        locs: vec![ts.initial(); n],
        node: witness.policy.start,
        q: automaton.initial(),
    };
    let mut configs = vec![start.clone()];
    let mut index = HashMap::from([(start, 0usize)]);
    let mut succ: Vec<Vec<usize>> = Vec::new();
    let mut at = 0;
    while at < configs.len() {
        let c = configs[at].clone();
        let mask = c
            .locs
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &l)| m | letter_bits[i][l.idx()]);
        let q2 = automaton.step_mask(c.q, mask);
        let action = &witness.policy.nodes[c.node].action;
        let mut row = Vec::with_capacity(univ_tuples.len());
        for univ in &univ_tuples {
            let mut locs = c.locs.clone();
            for (k, &v) in witness.exist_vars.iter().enumerate() {
                locs[v] = ts.successor(locs[v], action[k]);
            }
            for (k, &v) in witness.univ_vars.iter().enumerate() {
                locs[v] = ts.successor(locs[v], univ[k]);
            }
            let obs = Observation::Locs(locs[..witness.obs_len].to_vec());
            let node = witness.policy.nodes[c.node]
                .edges
                .get(&obs)
                .copied()
                .unwrap_or(c.node);
            let next = Config { locs, node, q: q2 };
            let id = match index.get(&next) {
                Some(&id) => id,
                None => {
                    let id = configs.len();
                    if id >= limits.max_configs {
                        return Err(WitnessError::Budget { limit: limits.max_configs });
                    }
                    index.insert(next.clone(), id);
                    configs.push(next);
                    id
                }
            };
            row.push(id);
        }
        succ.push(row);
        at += 1;
    }
    Ok(ConfigGraph { configs, succ, univ_tuples })
}

/// A configuration is "bad at arrival" when its residual obligation is the
/// marked one. For safety that means determined-false; the shortest
/// lexicographically least path into a marked configuration (within the
/// bound) is the counterexample.
fn search_safety_violation(
    automaton: &DetAutomaton,
    graph: &ConfigGraph,
    effective: usize,
) -> Option<Vec<Vec<DirId>>> {
    let dist = dist_to(graph, |q| automaton.is_marked(q));
    let d0 = dist[0]?;
    if d0 > effective {
        return None;
    }
    Some(greedy_path(graph, &dist, 0, d0))
}

/// For reachability the claim is determined-true within the horizon: a
/// violation is either a path into the determined-false residue (shortest,
/// preferred) or a full-length path that never reaches the accepting
/// residue.
fn search_reach_violation(
    automaton: &DetAutomaton,
    graph: &ConfigGraph,
    effective: usize,
) -> Option<Vec<Vec<DirId>>> {
    let dist = dist_to(graph, |q| automaton.is_false_residue(q));
    if let Some(d0) = dist[0] {
        if d0 <= effective {
            return Some(greedy_path(graph, &dist, 0, d0));
        }
    }
    // Layered survival: alive[t] = configurations at step t from which some
    // continuation of the remaining steps never hits the accepting residue.
    let accepting = |q: usize| automaton.is_marked(q);
    let mut alive: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); effective + 1];
    alive[effective] = (0..graph.configs.len())
        .filter(|&c| !accepting(graph.configs[c].q))
        .collect();
    for t in (0..effective).rev() {
        alive[t] = (0..graph.configs.len())
            .filter(|&c| {
                !accepting(graph.configs[c].q)
                    && graph.succ[c].iter().any(|&s| alive[t + 1].contains(&s))
            })
            .collect();
    }
    if !alive[0].contains(&0) {
        return None;
    }
    let mut path = Vec::with_capacity(effective);
    let mut c = 0;
    for t in 0..effective {
        let (u, next) = graph.succ[c]
            .iter()
            .enumerate()
            .find(|&(_, &s)| alive[t + 1].contains(&s))
            .map(|(u, &s)| (u, s))
            .expect("alive configuration without an alive successor");
        path.push(graph.univ_tuples[u].clone());
        c = next;
    }
    Some(path)
}

/// Shortest distance from each configuration to a bad one (0 when already
/// bad), by reverse breadth-first search.
fn dist_to(graph: &ConfigGraph, bad: impl Fn(usize) -> bool) -> Vec<Option<usize>> {
    let n = graph.configs.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in 0..n {
        for &s in &graph.succ[c] {
            rev[s].push(c);
        }
    }
    let mut dist = vec![None; n];
    let mut queue = VecDeque::new();
    for c in 0..n {
        if bad(graph.configs[c].q) {
            dist[c] = Some(0);
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        let d = dist[c].unwrap();
        for &p in &rev[c] {
            if dist[p].is_none() {
                dist[p] = Some(d + 1);
                queue.push_back(p);
            }
        }
    }
    dist
}

/// Follows strictly decreasing distances, choosing the least universal tuple
/// at every step: the resulting sequence is the lexicographically least
/// among the shortest.
fn greedy_path(
    graph: &ConfigGraph,
    dist: &[Option<usize>],
    start: usize,
    d0: usize,
) -> Vec<Vec<DirId>> {
    let mut path = Vec::with_capacity(d0);
    let mut c = start;
    for remaining in (1..=d0).rev() {
        let (u, next) = graph.succ[c]
            .iter()
            .enumerate()
            .find(|&(_, &s)| dist[s] == Some(remaining - 1))
            .map(|(u, &s)| (u, s))
            .expect("distance without a realizing successor");
        path.push(graph.univ_tuples[u].clone());
        c = next;
    }
    path
}
