//! Compilation of a verification instance into a planning problem.
//!
//! The explicit form ([`QdecPomdp`]) is a graph over joint states
//! ⟨l_1, …, l_n, q⟩: one location per path variable plus the automaton
//! state. A joint action fixes one direction per *existential* variable; the
//! universal variables' directions are resolved by non-determinism, so the
//! image of an action collects one successor per universal assignment. The
//! automaton reads the letter induced by the *source* locations, so the new
//! automaton state is identical across the image.
//!
//! Reachability bodies keep the raw graph with marked-automaton states as
//! goals. Safety bodies get the safe variant: two absorbing sink states are
//! added, every state whose automaton component is marked moves to the losing
//! sink under every action, and every other image additionally offers the
//! winning sink (the environment may stop the game at any non-violating
//! point). The goal is then the winning sink alone.
//!
//! The factored form ([`FactoredEncoding`]) expresses the same graph over
//! boolean fluents with conditional `oneof` effects, and
//! [`ground_factored`] recovers an explicit graph from it so the two can be
//! compared structurally.

use std::collections::BTreeSet;
use std::collections::HashMap;

use serde_json::json;
use thiserror::Error;

use crate::automata::{
    build_reach_dfa, build_safety_dsa, AutomatonError, AutomatonKind, DetAutomaton,
};
use crate::logic::{classify_body, classify_prefix, BodyClass, Formula, FormulaError, PrefixClass, Quantifier};
use crate::system::{DirId, LocId, TransitionSystem};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("body is neither a reachability nor a safety property")]
    BodyNotSupported,
    #[error("explicit encoding exceeds {limit} states; refusing to continue")]
    TooManyStates { limit: usize },
    #[error("too many joint actions or branches ({count}); limit is {limit}")]
    TooManyBranches { count: u128, limit: u128 },
}

/// Which reduction produced the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Goal = states whose automaton component is marked.
    Reach,
    /// Win/Lose sinks added; goal = the winning sink.
    Safe,
}

/// A state of the explicit planning graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlanningState {
    Product { locs: Vec<LocId>, q: usize },
    Win,
    Lose,
}

/// What the merged existential agent sees of a state: the locations of the
/// leading path variables (the automaton state is never observable), or which
/// sink was reached.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Observation {
    Locs(Vec<LocId>),
    Win,
    Lose,
}

impl Observation {
    /// Stable textual key. `#` cannot begin a location name (it starts a
    /// comment in the system format), so the sink keys never collide.
    pub fn key(&self, ts: &TransitionSystem) -> String {
        match self {
            Observation::Win => "#win".into(),
            Observation::Lose => "#lose".into(),
            Observation::Locs(locs) => locs
                .iter()
                .map(|&l| ts.loc_name(l))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    pub fn parse_key(key: &str, ts: &TransitionSystem) -> Option<Observation> {
        match key {
            "#win" => Some(Observation::Win),
            "#lose" => Some(Observation::Lose),
            _ => key
                .split_whitespace()
                .map(|name| ts.loc_id(name))
                .collect::<Option<Vec<_>>>()
                .map(Observation::Locs),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncodeLimits {
    pub max_automaton_states: usize,
    pub max_explicit_states: usize,
}

impl Default for EncodeLimits {
    fn default() -> Self {
        EncodeLimits {
            max_automaton_states: crate::automata::DEFAULT_MAX_STATES,
            max_explicit_states: 1_000_000,
        }
    }
}

/// Explicit planning problem together with the ingredients it was built from.
pub struct QdecPomdp {
    ts: TransitionSystem,
    automaton: DetAutomaton,
    prefix_class: PrefixClass,
    variant: Variant,
    quantifiers: Vec<(Quantifier, String)>,
    exist_vars: Vec<usize>,
    univ_vars: Vec<usize>,
    merged_obs_len: usize,
    states: Vec<PlanningState>,
    actions: Vec<Vec<DirId>>,
    delta: Vec<Vec<Vec<usize>>>,
    goals: BTreeSet<usize>,
    definitional_states: u128,
    /// Letter-mask contribution of "variable i sits at location l".
    letter_bits: Vec<Vec<u64>>,
}

/// The same graph data without the construction context, for structural
/// comparison against independently grounded encodings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplicitGraph {
    pub states: Vec<PlanningState>,
    pub initial: usize,
    pub actions: Vec<Vec<DirId>>,
    pub delta: Vec<Vec<Vec<usize>>>,
    pub goals: BTreeSet<usize>,
}

/// First structural discrepancy between two graphs, if any. Both sides are
/// expected in canonical order (breadth-first from the initial state, images
/// expanded action-major), so isomorphic graphs compare equal component-wise.
pub fn diff_graphs(a: &ExplicitGraph, b: &ExplicitGraph) -> Option<String> {
    if a.actions != b.actions {
        return Some(format!("action sets differ: {:?} vs {:?}", a.actions, b.actions));
    }
    if a.states.len() != b.states.len() {
        return Some(format!(
            "state counts differ: {} vs {}",
            a.states.len(),
            b.states.len()
        ));
    }
    if a.initial != b.initial {
        return Some(format!("initial states differ: {} vs {}", a.initial, b.initial));
    }
    for (i, (sa, sb)) in a.states.iter().zip(&b.states).enumerate() {
        if sa != sb {
            return Some(format!("state {i} differs: {sa:?} vs {sb:?}"));
        }
    }
    for s in 0..a.states.len() {
        for act in 0..a.actions.len() {
            if a.delta[s][act] != b.delta[s][act] {
                return Some(format!(
                    "image of state {s} ({:?}) under action {act} differs: {:?} vs {:?}",
                    a.states[s], a.delta[s][act], b.delta[s][act]
                ));
            }
        }
    }
    if a.goals != b.goals {
        return Some(format!("goal sets differ: {:?} vs {:?}", a.goals, b.goals));
    }
    None
}

/// All length-`len` tuples over `0..base`, lexicographic, earlier positions
/// most significant.
pub(crate) fn tuples(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * base);
        for t in &out {
            for d in 0..base {
                let mut t2 = t.clone();
                t2.push(d);
                next.push(t2);
            }
        }
        out = next;
    }
    out
}

/// Classifies, builds the matching automaton, and encodes in one step.
pub fn encode(
    ts: &TransitionSystem,
    formula: &Formula,
    limits: &EncodeLimits,
) -> Result<QdecPomdp, EncodeError> {
    formula.check_atoms_against(ts)?;
    let (automaton, variant) = match classify_body(formula.body()) {
        BodyClass::Reachability => (
            build_reach_dfa(formula, limits.max_automaton_states)?,
            Variant::Reach,
        ),
        BodyClass::Safety => (
            build_safety_dsa(formula, limits.max_automaton_states)?,
            Variant::Safe,
        ),
        BodyClass::Neither => return Err(EncodeError::BodyNotSupported),
    };
    encode_with(ts, formula, automaton, variant, limits)
}

fn encode_with(
    ts: &TransitionSystem,
    formula: &Formula,
    automaton: DetAutomaton,
    variant: Variant,
    limits: &EncodeLimits,
) -> Result<QdecPomdp, EncodeError> {
    let n = formula.num_vars();
    let exist_vars = formula.existential_indices();
    let univ_vars = formula.universal_indices();
    let merged_obs_len = exist_vars.iter().copied().max().map_or(0, |v| v + 1);

    let branch_limit: u128 = 1 << 20;
    for width in [exist_vars.len(), univ_vars.len()] {
        let count = (ts.num_directions() as u128)
            .checked_pow(width as u32)
            .unwrap_or(u128::MAX);
        if count > branch_limit {
            return Err(EncodeError::TooManyBranches { count, limit: branch_limit });
        }
    }

    let actions: Vec<Vec<DirId>> = tuples(ts.num_directions(), exist_vars.len())
        .into_iter()
        .map(|t| t.into_iter().map(|d| DirId(d as u32)).collect())
        .collect();
    let univ_choices: Vec<Vec<DirId>> = tuples(ts.num_directions(), univ_vars.len())
        .into_iter()
        .map(|t| t.into_iter().map(|d| DirId(d as u32)).collect())
        .collect();

    // Per-(variable, location) contribution to the automaton letter mask.
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

    let definitional_states = (ts.num_locations() as u128)
        .checked_pow(n as u32)
        .and_then(|p| p.checked_mul(automaton.num_states() as u128))
        .map(|p| p + if variant == Variant::Safe { 2 } else { 0 })
        .unwrap_or(u128::MAX);

    let initial_state = PlanningState::Product {
        locs: vec![ts.initial(); n],
        q: automaton.initial(),
    };
    let mut states = vec![initial_state.clone()];
    let mut index = HashMap::from([(initial_state, 0usize)]);
    let mut delta: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut goals = BTreeSet::new();

    let mut at = 0;
    while at < states.len() {
        let state = states[at].clone();
        let mut rows = Vec::with_capacity(actions.len());
        match &state {
            PlanningState::Win | PlanningState::Lose => {
                for _ in &actions {
                    rows.push(vec![at]);
                }
                if state == PlanningState::Win {
                    goals.insert(at);
                }
            }
            PlanningState::Product { locs, q } => {
                let marked = automaton.is_marked(*q);
                match variant {
                    Variant::Reach => {
                        if marked {
                            goals.insert(at);
                        }
                    }
                    Variant::Safe => {}
                }
                if variant == Variant::Safe && marked {
                    let lose = intern(
                        &mut states,
                        &mut index,
                        PlanningState::Lose,
                        limits.max_explicit_states,
                    )?;
                    for _ in &actions {
                        rows.push(vec![lose]);
                    }
                } else {
                    let mask = locs
                        .iter()
                        .enumerate()
                        .fold(0u64, |m, (i, &l)| m | letter_bits[i][l.idx()]);
                    let q2 = automaton.step_mask(*q, mask);
                    for dirs in &actions {
                        let mut image = BTreeSet::new();
                        for univ in &univ_choices {
                            let mut next = locs.clone();
                            for (k, &v) in exist_vars.iter().enumerate() {
                                next[v] = ts.successor(locs[v], dirs[k]);
                            }
                            for (k, &v) in univ_vars.iter().enumerate() {
                                next[v] = ts.successor(locs[v], univ[k]);
                            }
                            let id = intern(
                                &mut states,
                                &mut index,
                                PlanningState::Product { locs: next, q: q2 },
                                limits.max_explicit_states,
                            )?;
                            image.insert(id);
                        }
                        if variant == Variant::Safe {
                            let win = intern(
                                &mut states,
                                &mut index,
                                PlanningState::Win,
                                limits.max_explicit_states,
                            )?;
                            image.insert(win);
                        }
                        rows.push(image.into_iter().collect());
                    }
                }
            }
        }
        delta.push(rows);
        at += 1;
    }

    Ok(QdecPomdp {
        ts: ts.clone(),
        automaton,
        prefix_class: classify_prefix(formula),
        variant,
        quantifiers: formula.prefix().to_vec(),
        exist_vars,
        univ_vars,
        merged_obs_len,
        states,
        actions,
        delta,
        goals,
        definitional_states,
        letter_bits,
    })
}

fn intern(
    states: &mut Vec<PlanningState>,
    index: &mut HashMap<PlanningState, usize>,
    state: PlanningState,
    limit: usize,
) -> Result<usize, EncodeError> {
    match index.get(&state) {
        Some(&id) => Ok(id),
        None => {
            let id = states.len();
            if id >= limit {
                return Err(EncodeError::TooManyStates { limit });
            }
            index.insert(state.clone(), id);
            states.push(state);
            Ok(id)
        }
    }
}

impl QdecPomdp {
    pub fn ts(&self) -> &TransitionSystem {
        &self.ts
    }

    pub fn automaton(&self) -> &DetAutomaton {
        &self.automaton
    }

    pub fn prefix_class(&self) -> PrefixClass {
        self.prefix_class
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn quantifiers(&self) -> &[(Quantifier, String)] {
        &self.quantifiers
    }

    pub fn num_vars(&self) -> usize {
        self.quantifiers.len()
    }

    pub fn existential_vars(&self) -> &[usize] {
        &self.exist_vars
    }

    pub fn universal_vars(&self) -> &[usize] {
        &self.univ_vars
    }

    /// How many leading locations the merged existential agent observes.
    pub fn merged_obs_len(&self) -> usize {
        self.merged_obs_len
    }

    /// Fully observable once the automaton state is tracked internally: the
    /// observation covers every path variable's location.
    pub fn fully_observable(&self) -> bool {
        self.merged_obs_len == self.num_vars()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, id: usize) -> &PlanningState {
        &self.states[id]
    }

    pub fn states(&self) -> &[PlanningState] {
        &self.states
    }

    pub fn state_id(&self, state: &PlanningState) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }

    pub fn initial(&self) -> usize {
        0
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_dirs(&self, a: usize) -> &[DirId] {
        &self.actions[a]
    }

    pub fn actions(&self) -> &[Vec<DirId>] {
        &self.actions
    }

    pub fn image(&self, s: usize, a: usize) -> &[usize] {
        &self.delta[s][a]
    }

    pub fn goals(&self) -> &BTreeSet<usize> {
        &self.goals
    }

    pub fn is_goal(&self, s: usize) -> bool {
        self.goals.contains(&s)
    }

    /// Number of states the definition prescribes before reachability
    /// pruning: |L|^n · |Q|, plus the two sinks in the safe variant.
    pub fn definitional_states(&self) -> u128 {
        self.definitional_states
    }

    pub fn observation(&self, s: usize) -> Observation {
        match &self.states[s] {
            PlanningState::Win => Observation::Win,
            PlanningState::Lose => Observation::Lose,
            PlanningState::Product { locs, .. } => {
                Observation::Locs(locs[..self.merged_obs_len].to_vec())
            }
        }
    }

    /// Automaton letter induced by a tuple of source locations.
    pub fn letter_mask_of(&self, locs: &[LocId]) -> u64 {
        locs.iter()
            .enumerate()
            .fold(0u64, |m, (i, &l)| m | self.letter_bits[i][l.idx()])
    }

    pub fn state_desc(&self, s: usize) -> String {
        match &self.states[s] {
            PlanningState::Win => "win".into(),
            PlanningState::Lose => "lose".into(),
            PlanningState::Product { locs, q } => {
                let names: Vec<&str> = locs.iter().map(|&l| self.ts.loc_name(l)).collect();
                format!("<{}|q{}>", names.join(","), q)
            }
        }
    }

    pub fn graph(&self) -> ExplicitGraph {
        ExplicitGraph {
            states: self.states.clone(),
            initial: 0,
            actions: self.actions.clone(),
            delta: self.delta.clone(),
            goals: self.goals.clone(),
        }
    }

    pub fn action_desc(&self, a: usize) -> String {
        if self.actions[a].is_empty() {
            return "(stop)".into();
        }
        self.actions[a]
            .iter()
            .map(|&d| self.ts.dir_name(d))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Versioned JSON dump of the explicit graph.
    pub fn to_json(&self) -> serde_json::Value {
        let states: Vec<serde_json::Value> = self
            .states
            .iter()
            .map(|s| match s {
                PlanningState::Win => json!("win"),
                PlanningState::Lose => json!("lose"),
                PlanningState::Product { locs, q } => json!({
                    "locs": locs.iter().map(|&l| self.ts.loc_name(l)).collect::<Vec<_>>(),
                    "q": q,
                }),
            })
            .collect();
        let defn = if self.definitional_states <= u64::MAX as u128 {
            json!(self.definitional_states as u64)
        } else {
            json!(self.definitional_states.to_string())
        };
        json!({
            "format": "explicit-planning-graph",
            "version": 1,
            "variant": match self.variant { Variant::Reach => "reach", Variant::Safe => "safe" },
            "prefix_class": format!("{:?}", self.prefix_class),
            "path_vars": self
                .quantifiers
                .iter()
                .map(|(q, name)| json!({
                    "name": name,
                    "quantifier": match q { Quantifier::Forall => "forall", Quantifier::Exists => "exists" },
                }))
                .collect::<Vec<_>>(),
            "observable_prefix_len": self.merged_obs_len,
            "automaton": {
                "kind": match self.automaton.kind() { AutomatonKind::Reach => "reach", AutomatonKind::Safety => "safety" },
                "states": (0..self.automaton.num_states())
                    .map(|q| self.automaton.state_desc(q))
                    .collect::<Vec<_>>(),
                "initial": self.automaton.initial(),
                "marked": self.automaton.marked_states(),
            },
            "actions": self
                .actions
                .iter()
                .map(|dirs| dirs.iter().map(|&d| self.ts.dir_name(d)).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "initial": 0,
            "states": states,
            "observations": (0..self.states.len())
                .map(|s| self.observation(s).key(&self.ts))
                .collect::<Vec<_>>(),
            "transitions": self.delta,
            "goals": self.goals.iter().collect::<Vec<_>>(),
            "definitional_states": defn,
        })
    }
}

// ---------------------------------------------------------------------------
// Factored encoding
// ---------------------------------------------------------------------------

/// A boolean state variable of the factored encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fluent {
    /// Path variable `var` sits at location `loc`.
    At { var: usize, loc: LocId },
    /// The automaton is in state `q`. One index past the automaton size is a
    /// never-added placeholder used when a reachability goal is unsatisfiable.
    AutState(usize),
    /// The play is still running (safe variant only).
    Alive,
    /// A violation occurred; the next step collapses to the losing sink.
    Doomed,
    Win,
    Lose,
}

/// Effects are conditional add/delete trees. `When` guards are conjunctions
/// of *positive* fluents evaluated against the source state; within one
/// outcome all deletes apply before all adds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    And(Vec<Effect>),
    Oneof(Vec<Effect>),
    When { cond: Vec<usize>, eff: Box<Effect> },
    Add(usize),
    Del(usize),
}

#[derive(Debug, Clone)]
pub struct FactoredAction {
    pub dirs: Vec<DirId>,
    pub effect: Effect,
}

/// Fluent-level rendering of the same planning problem.
pub struct FactoredEncoding {
    pub variant: Variant,
    pub num_vars: usize,
    pub fluents: Vec<Fluent>,
    pub init: BTreeSet<usize>,
    /// Goal as a conjunction of positive fluents.
    pub goal: Vec<usize>,
    pub actions: Vec<FactoredAction>,
}

impl FactoredEncoding {
    pub fn fluent_id(&self, f: Fluent) -> usize {
        self.fluents.iter().position(|&g| g == f).expect("fluent not in table")
    }

    /// Decodes a set of fluents back into a planning state; errors signal a
    /// state outside the encoding's invariants.
    pub fn interpret(&self, set: &BTreeSet<usize>, aut: &DetAutomaton) -> Result<PlanningState, String> {
        let has = |f: Fluent| self.fluents.iter().position(|&g| g == f).map_or(false, |i| set.contains(&i));
        if has(Fluent::Win) || has(Fluent::Lose) {
            let expect = if has(Fluent::Win) { PlanningState::Win } else { PlanningState::Lose };
            if set.len() != 1 {
                return Err(format!("sink state carries extra fluents: {set:?}"));
            }
            return Ok(expect);
        }
        let mut locs = Vec::with_capacity(self.num_vars);
        for var in 0..self.num_vars {
            let mut found = None;
            for &i in set {
                if let Fluent::At { var: v, loc } = self.fluents[i] {
                    if v == var {
                        if found.is_some() {
                            return Err(format!("variable {var} at two locations"));
                        }
                        found = Some(loc);
                    }
                }
            }
            locs.push(found.ok_or_else(|| format!("variable {var} has no location"))?);
        }
        let mut q = None;
        for &i in set {
            if let Fluent::AutState(s) = self.fluents[i] {
                if q.is_some() {
                    return Err("two automaton states set".into());
                }
                q = Some(s);
            }
        }
        let q = q.ok_or("no automaton state set")?;
        if self.variant == Variant::Safe {
            let marked = q < aut.num_states() && aut.is_marked(q);
            match (has(Fluent::Alive), has(Fluent::Doomed)) {
                (true, false) if !marked => {}
                (false, true) if marked => {}
                other => return Err(format!("alive/doomed flags {other:?} inconsistent with q{q}")),
            }
        }
        Ok(PlanningState::Product { locs, q })
    }

    /// Human-readable name of a fluent, using the source system's location
    /// names and the encoding's path-variable names.
    pub fn fluent_desc(&self, f: Fluent, qdec: &QdecPomdp) -> String {
        match f {
            Fluent::At { var, loc } => format!(
                "at({},{})",
                qdec.quantifiers()[var].1,
                qdec.ts().loc_name(loc)
            ),
            Fluent::AutState(q) => format!("aut(q{q})"),
            Fluent::Alive => "alive".into(),
            Fluent::Doomed => "doomed".into(),
            Fluent::Win => "win".into(),
            Fluent::Lose => "lose".into(),
        }
    }

    pub fn to_json(&self, qdec: &QdecPomdp) -> serde_json::Value {
        fn eff_json(e: &Effect) -> serde_json::Value {
            match e {
                Effect::And(es) => json!({ "and": es.iter().map(eff_json).collect::<Vec<_>>() }),
                Effect::Oneof(es) => {
                    json!({ "oneof": es.iter().map(eff_json).collect::<Vec<_>>() })
                }
                Effect::When { cond, eff } => {
                    json!({ "when": { "cond": cond, "eff": eff_json(eff) } })
                }
                Effect::Add(f) => json!({ "add": f }),
                Effect::Del(f) => json!({ "del": f }),
            }
        }
        json!({
            "format": "factored-planning-problem",
            "version": 1,
            "variant": match self.variant { Variant::Reach => "reach", Variant::Safe => "safe" },
            "fluents": self
                .fluents
                .iter()
                .map(|&f| self.fluent_desc(f, qdec))
                .collect::<Vec<_>>(),
            "init": self.init.iter().collect::<Vec<_>>(),
            "goal": &self.goal,
            "actions": self
                .actions
                .iter()
                .map(|a| json!({
                    "dirs": a.dirs.iter().map(|&d| qdec.ts().dir_name(d)).collect::<Vec<_>>(),
                    "effect": eff_json(&a.effect),
                }))
                .collect::<Vec<_>>(),
        })
    }
}

/// Builds the factored rendering of an explicit encoding directly from the
/// system and automaton (not from the explicit graph).
pub fn factor(qdec: &QdecPomdp) -> FactoredEncoding {
    let ts = qdec.ts();
    let aut = qdec.automaton();
    let n = qdec.num_vars();
    let num_locs = ts.num_locations();
    let num_q = aut.num_states();
    let marked = aut.marked_states();
    let safe = qdec.variant() == Variant::Safe;

    // Unsatisfiable reachability goals use a placeholder automaton-state
    // fluent that no effect ever adds.
    let phantom_goal = qdec.variant() == Variant::Reach && marked.is_empty();

    let mut fluents = Vec::new();
    for var in 0..n {
        for l in 0..num_locs {
            fluents.push(Fluent::At { var, loc: LocId(l as u32) });
        }
    }
    for q in 0..num_q {
        fluents.push(Fluent::AutState(q));
    }
    if phantom_goal {
        fluents.push(Fluent::AutState(num_q));
    }
    if safe {
        fluents.extend([Fluent::Alive, Fluent::Doomed, Fluent::Win, Fluent::Lose]);
    }
    let id_of: HashMap<Fluent, usize> = fluents.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let at = |var: usize, loc: LocId| id_of[&Fluent::At { var, loc }];
    let autstate = |q: usize| id_of[&Fluent::AutState(q)];

    let mut init: BTreeSet<usize> =
        (0..n).map(|var| at(var, ts.initial())).collect();
    init.insert(autstate(aut.initial()));
    if safe {
        if aut.is_marked(aut.initial()) {
            init.insert(id_of[&Fluent::Doomed]);
        } else {
            init.insert(id_of[&Fluent::Alive]);
        }
    }

    let goal = match qdec.variant() {
        Variant::Safe => vec![id_of[&Fluent::Win]],
        Variant::Reach => {
            if phantom_goal {
                vec![autstate(num_q)]
            } else {
                vec![autstate(marked[0])]
            }
        }
    };

    let loc_tuples: Vec<Vec<usize>> = tuples(num_locs, n);
    let univ_choices: Vec<Vec<DirId>> = tuples(ts.num_directions(), qdec.universal_vars().len())
        .into_iter()
        .map(|t| t.into_iter().map(|d| DirId(d as u32)).collect())
        .collect();

    let mut actions = Vec::with_capacity(qdec.num_actions());
    for dirs in qdec.actions() {
        let alive_key: Vec<usize> = if safe { vec![id_of[&Fluent::Alive]] } else { vec![] };

        let mut branches = Vec::new();
        for univ in &univ_choices {
            let mut dir_of = vec![DirId(0); n];
            for (k, &v) in qdec.existential_vars().iter().enumerate() {
                dir_of[v] = dirs[k];
            }
            for (k, &v) in qdec.universal_vars().iter().enumerate() {
                dir_of[v] = univ[k];
            }
            let mut rows = Vec::new();
            // Movement: each variable leaves its location along its direction.
            for var in 0..n {
                for l in 0..num_locs {
                    let loc = LocId(l as u32);
                    let dest = ts.successor(loc, dir_of[var]);
                    let mut cond = alive_key.clone();
                    cond.push(at(var, loc));
                    rows.push(Effect::When {
                        cond,
                        eff: Box::new(Effect::And(vec![
                            Effect::Del(at(var, loc)),
                            Effect::Add(at(var, dest)),
                        ])),
                    });
                }
            }
            // Automaton step: keyed on the full source location tuple.
            for q in 0..num_q {
                if safe && aut.is_marked(q) {
                    continue; // marked states are doomed-flagged, never alive
                }
                for tuple in &loc_tuples {
                    let locs: Vec<LocId> = tuple.iter().map(|&l| LocId(l as u32)).collect();
                    let q2 = aut.step_mask(q, qdec.letter_mask_of(&locs));
                    let mut cond = alive_key.clone();
                    cond.push(autstate(q));
                    cond.extend(locs.iter().enumerate().map(|(var, &l)| at(var, l)));
                    let mut eff = vec![Effect::Del(autstate(q)), Effect::Add(autstate(q2))];
                    if safe && aut.is_marked(q2) {
                        eff.push(Effect::Del(id_of[&Fluent::Alive]));
                        eff.push(Effect::Add(id_of[&Fluent::Doomed]));
                    }
                    rows.push(Effect::When { cond, eff: Box::new(Effect::And(eff)) });
                }
            }
            branches.push(Effect::And(rows));
        }

        let effect = if safe {
            // The environment may stop the game: clear everything, raise win.
            let mut win_rows = vec![Effect::When {
                cond: vec![id_of[&Fluent::Alive]],
                eff: Box::new(Effect::And(vec![
                    Effect::Del(id_of[&Fluent::Alive]),
                    Effect::Add(id_of[&Fluent::Win]),
                ])),
            }];
            for var in 0..n {
                for l in 0..num_locs {
                    let loc = LocId(l as u32);
                    win_rows.push(Effect::When {
                        cond: vec![id_of[&Fluent::Alive], at(var, loc)],
                        eff: Box::new(Effect::Del(at(var, loc))),
                    });
                }
            }
            for q in 0..num_q {
                win_rows.push(Effect::When {
                    cond: vec![id_of[&Fluent::Alive], autstate(q)],
                    eff: Box::new(Effect::Del(autstate(q))),
                });
            }
            branches.push(Effect::And(win_rows));

            // Deterministic collapse of doomed states into the losing sink.
            let mut lose_rows = vec![Effect::When {
                cond: vec![id_of[&Fluent::Doomed]],
                eff: Box::new(Effect::And(vec![
                    Effect::Del(id_of[&Fluent::Doomed]),
                    Effect::Add(id_of[&Fluent::Lose]),
                ])),
            }];
            for var in 0..n {
                for l in 0..num_locs {
                    let loc = LocId(l as u32);
                    lose_rows.push(Effect::When {
                        cond: vec![id_of[&Fluent::Doomed], at(var, loc)],
                        eff: Box::new(Effect::Del(at(var, loc))),
                    });
                }
            }
            for q in 0..num_q {
                lose_rows.push(Effect::When {
                    cond: vec![id_of[&Fluent::Doomed], autstate(q)],
                    eff: Box::new(Effect::Del(autstate(q))),
                });
            }
            let mut all = lose_rows;
            all.push(Effect::Oneof(branches));
            Effect::And(all)
        } else if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Effect::Oneof(branches)
        };

        actions.push(FactoredAction { dirs: dirs.clone(), effect });
    }

    FactoredEncoding {
        variant: qdec.variant(),
        num_vars: n,
        fluents,
        init,
        goal,
        actions,
    }
}

// ---------------------------------------------------------------------------
// Structural grounding of a factored encoding
// ---------------------------------------------------------------------------

/// One compiled conditional row: if `cond` ⊆ state, delete `del`, add `add`.
#[derive(Debug, Clone, Copy)]
pub struct EffectRow {
    pub cond: u128,
    pub del: u128,
    pub add: u128,
}

/// Effect compiled to rows: deterministic rows always apply; exactly one
/// branch's rows apply on top.
pub struct CompiledEffect {
    pub det: Vec<EffectRow>,
    pub branches: Vec<Vec<EffectRow>>,
}

/// Flattens an effect tree into rows. Fails if `oneof` is nested or the
/// fluent space exceeds 128 bits.
pub fn compile_effect(effect: &Effect, num_fluents: usize) -> Result<CompiledEffect, String> {
    if num_fluents > 128 {
        return Err(format!("{num_fluents} fluents exceed the 128-bit grounding limit"));
    }
    let mut det = Vec::new();
    let mut branches = Vec::new();
    flatten(effect, 0, &mut det, &mut branches, false)?;
    if branches.is_empty() {
        branches.push(Vec::new());
    }
    Ok(CompiledEffect { det, branches })
}

fn flatten(
    e: &Effect,
    cond: u128,
    rows: &mut Vec<EffectRow>,
    branches: &mut Vec<Vec<EffectRow>>,
    in_branch: bool,
) -> Result<(), String> {
    match e {
        Effect::Add(f) => rows.push(EffectRow { cond, del: 0, add: 1u128 << f }),
        Effect::Del(f) => rows.push(EffectRow { cond, del: 1u128 << f, add: 0 }),
        Effect::When { cond: c, eff } => {
            let extra = c.iter().fold(0u128, |m, &f| m | 1u128 << f);
            flatten(eff, cond | extra, rows, branches, in_branch)?;
        }
        Effect::And(xs) => {
            for x in xs {
                flatten(x, cond, rows, branches, in_branch)?;
            }
        }
        Effect::Oneof(xs) => {
            if in_branch || !branches.is_empty() {
                return Err("nested or repeated oneof".into());
            }
            for x in xs {
                let mut branch = Vec::new();
                flatten(x, cond, &mut branch, branches, true)?;
                branches.push(branch);
            }
        }
    }
    Ok(())
}

pub fn apply_rows(state: u128, det: &[EffectRow], branch: &[EffectRow]) -> u128 {
    let mut del = 0u128;
    let mut add = 0u128;
    for row in det.iter().chain(branch) {
        if state & row.cond == row.cond {
            del |= row.del;
            add |= row.add;
        }
    }
    (state & !del) | add
}

/// Expands a factored encoding into an explicit graph by breadth-first
/// search, decoding each fluent set into a planning state.
pub fn ground_factored(
    fe: &FactoredEncoding,
    aut: &DetAutomaton,
) -> Result<ExplicitGraph, String> {
    let compiled: Vec<CompiledEffect> = fe
        .actions
        .iter()
        .map(|a| compile_effect(&a.effect, fe.fluents.len()))
        .collect::<Result<_, _>>()?;
    let to_mask = |set: &BTreeSet<usize>| set.iter().fold(0u128, |m, &f| m | 1u128 << f);
    let init = to_mask(&fe.init);
    let goal_mask = fe.goal.iter().fold(0u128, |m, &f| m | 1u128 << f);

    let mut masks = vec![init];
    let mut index = HashMap::from([(init, 0usize)]);
    let mut states = vec![interpret_mask(fe, aut, init)?];
    let mut delta = Vec::new();
    let mut goals = BTreeSet::new();
    if init & goal_mask == goal_mask {
        goals.insert(0);
    }

    let mut at = 0;
    while at < masks.len() {
        let src = masks[at];
        let mut rows = Vec::with_capacity(fe.actions.len());
        for ce in &compiled {
            let mut image = BTreeSet::new();
            for branch in &ce.branches {
                let next = apply_rows(src, &ce.det, branch);
                let id = match index.get(&next) {
                    Some(&id) => id,
                    None => {
                        let id = masks.len();
                        if id > 5_000_000 {
                            return Err("grounding exceeds 5,000,000 states".into());
                        }
                        index.insert(next, id);
                        masks.push(next);
                        states.push(interpret_mask(fe, aut, next)?);
                        if next & goal_mask == goal_mask {
                            goals.insert(id);
                        }
                        id
                    }
                };
                image.insert(id);
            }
            rows.push(image.into_iter().collect());
        }
        delta.push(rows);
        at += 1;
    }

    Ok(ExplicitGraph {
        states,
        initial: 0,
        actions: fe.actions.iter().map(|a| a.dirs.clone()).collect(),
        delta,
        goals,
    })
}

fn interpret_mask(
    fe: &FactoredEncoding,
    aut: &DetAutomaton,
    mask: u128,
) -> Result<PlanningState, String> {
    let set: BTreeSet<usize> = (0..fe.fluents.len()).filter(|f| mask >> f & 1 == 1).collect();
    fe.interpret(&set, aut)
}
