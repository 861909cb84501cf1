//! Property tests: randomized invariants that must hold for every
//! transition system and formula, not just the hand-picked fixtures.
//! Each test draws a seed, expands it into an instance with the seeded
//! generators from [`hyperplan_core::fuzz`], and checks one structural
//! law, cross-checking against an independent evaluator where one exists.

use proptest::prelude::*;
use rand::Rng;

use hyperplan_core::automata::{build_reach_dfa, build_safety_dsa, DetAutomaton, Letter};
use hyperplan_core::encoding::{encode, EncodeLimits, Observation, PlanningState, Variant};
use hyperplan_core::fuzz;
use hyperplan_core::logic::{classify_body, eval_prefix_bounded, BodyClass, Formula, Tv3};
use hyperplan_core::solver::{solve_fond_strong_cyclic, Verdict};
use hyperplan_core::system::{DirId, TransitionSystem};
use hyperplan_core::witness::SkolemWitness;

/// Random body over two path variables, safety or reachability by coin
/// flip, together with the matching automaton constructor.
fn gen_body(
    r: &mut rand_chacha::ChaCha8Rng,
    num_atoms: usize,
) -> (String, BodyClass) {
    let depth = r.gen_range(2..=4);
    if r.gen_bool(0.5) {
        (fuzz::gen_safety_body(r, num_atoms, 2, depth), BodyClass::Safety)
    } else {
        (fuzz::gen_reach_body(r, num_atoms, 2, depth), BodyClass::Reachability)
    }
}

fn build_for(formula: &Formula, class: BodyClass) -> DetAutomaton {
    match class {
        BodyClass::Safety => build_safety_dsa(formula, 10_000).unwrap(),
        BodyClass::Reachability => build_reach_dfa(formula, 10_000).unwrap(),
        BodyClass::Neither => unreachable!("generators only emit the two buildable classes"),
    }
}

/// Random forall-exists safety instance in the same small regime the
/// soundness sweep uses.
fn gen_safe_instance(r: &mut rand_chacha::ChaCha8Rng) -> (TransitionSystem, Formula) {
    let num_atoms = r.gen_range(1..=2);
    let ts = fuzz::gen_ts(r, 4, 2, num_atoms);
    let depth = r.gen_range(2..=4);
    let body = fuzz::gen_safety_body(r, num_atoms, 2, depth);
    let formula = Formula::parse(&format!("forall p1. exists p2. {body}")).unwrap();
    (ts, formula)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Serializing a system and parsing the result is the identity, both
    /// on the text (serialize is a fixpoint) and on the structure.
    #[test]
    fn serialized_systems_parse_back_identically(seed in any::<u64>()) {
        let mut r = fuzz::rng(seed);
        let ts = fuzz::gen_ts(&mut r, 5, 3, 2);
        let text = ts.serialize();
        let back = TransitionSystem::parse(&text).unwrap();
        prop_assert_eq!(back.serialize(), text.clone());
        prop_assert_eq!(back.num_locations(), ts.num_locations());
        prop_assert_eq!(back.num_directions(), ts.num_directions());
        prop_assert_eq!(back.num_atoms(), ts.num_atoms());
        prop_assert_eq!(back.initial(), ts.initial());
        for l in ts.locations() {
            for d in ts.directions() {
                prop_assert_eq!(back.successor(l, d), ts.successor(l, d));
            }
            for a in 0..ts.num_atoms() {
                prop_assert_eq!(back.has_atom(l, a), ts.has_atom(l, a));
            }
        }
    }

    /// `run_prefix` starts at the initial location and chains `successor`.
    #[test]
    fn run_prefix_chains_successors(seed in any::<u64>()) {
        let mut r = fuzz::rng(seed);
        let ts = fuzz::gen_ts(&mut r, 5, 3, 1);
        let dirs: Vec<DirId> = ts.directions().collect();
        let n = r.gen_range(0..=8);
        let walk: Vec<DirId> = (0..n).map(|_| dirs[r.gen_range(0..dirs.len())]).collect();
        let path = ts.run_prefix(&walk);
        prop_assert_eq!(path.len(), walk.len() + 1);
        prop_assert_eq!(path[0], ts.initial());
        for (i, &d) in walk.iter().enumerate() {
            prop_assert_eq!(path[i + 1], ts.successor(path[i], d));
        }
    }

    /// Printing a parsed formula and re-parsing it reaches a fixpoint and
    /// preserves the body's classification.
    #[test]
    fn formula_display_parse_round_trip(seed in any::<u64>()) {
        let mut r = fuzz::rng(seed);
        let (body, class) = gen_body(&mut r, 2);
        let prefix = ["forall p1. exists p2.", "exists p1. exists p2.",
                      "exists p1. forall p2.", "forall p1. forall p2."]
            [r.gen_range(0..4)];
        let f = Formula::parse(&format!("{prefix} {body}")).unwrap();
        let shown = f.to_string();
        let back = Formula::parse(&shown).unwrap();
        prop_assert_eq!(back.to_string(), shown);
        prop_assert_eq!(back.num_vars(), 2);
        prop_assert_eq!(classify_body(back.body()), class);
        prop_assert_eq!(classify_body(f.body()), class);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Once the bounded three-valued evaluation is determined on a prefix,
    /// every extension of that prefix keeps the same verdict.
    #[test]
    fn determined_verdicts_persist_under_extension(seed in any::<u64>()) {
        let mut r = fuzz::rng(seed);
        let num_atoms = r.gen_range(1..=2);
        let (body, _) = gen_body(&mut r, num_atoms);
        let f = Formula::parse(&format!("forall p1. exists p2. {body}")).unwrap();
        let ts = fuzz::all_labelings_ts(num_atoms);
        let len = r.gen_range(1..=5);
        let ext = r.gen_range(1..=3);
        let word: Vec<Letter> =
            (0..len + ext).map(|_| fuzz::gen_letter(&mut r, num_atoms, 2)).collect();
        let short = eval_prefix_bounded(
            &ts,
            &fuzz::word_prefixes(&word[..len], num_atoms, 2),
            f.body(),
        )
        .unwrap();
        if short != Tv3::Unknown {
            let long =
                eval_prefix_bounded(&ts, &fuzz::word_prefixes(&word, num_atoms, 2), f.body())
                    .unwrap();
            prop_assert_eq!(long, short);
        }
    }

    /// Every automaton transition lands on a real state, marked states are
    /// absorbing under every letter, and `run` chains `step` from the
    /// initial state. In the safety automaton the marked states are exactly
    /// the one whose residue is the constant false.
    #[test]
    fn automaton_transitions_total_and_marked_states_absorb(seed in any::<u64>()) {
        let mut r = fuzz::rng(seed);
        let num_atoms = r.gen_range(1..=2);
        let (body, class) = gen_body(&mut r, num_atoms);
        let f = Formula::parse(&format!("forall p1. exists p2. {body}")).unwrap();
        let aut = build_for(&f, class);
        let letters = aut.all_letters();
        for q in 0..aut.num_states() {
            for letter in &letters {
                let t = aut.step(q, letter);
                prop_assert!(t < aut.num_states());
                if aut.is_marked(q) {
                    prop_assert_eq!(t, q);
                }
            }
            if class == BodyClass::Safety {
                prop_assert_eq!(aut.is_marked(q), aut.is_false_residue(q));
            }
        }
        let word: Vec<Letter> =
            (0..r.gen_range(0..=4)).map(|_| fuzz::gen_letter(&mut r, num_atoms, 2)).collect();
        let trace = aut.run(&word);
        prop_assert_eq!(trace.len(), word.len() + 1);
        prop_assert_eq!(trace[0], aut.initial());
        for (i, letter) in word.iter().enumerate() {
            prop_assert_eq!(trace[i + 1], aut.step(trace[i], letter));
        }
    }

    /// The automaton's verdict on a word equals the direct bounded
    /// evaluation of the body on traces realizing that word.
    #[test]
    fn automaton_verdicts_match_direct_evaluation(seed in any::<u64>()) {
        let mut r = fuzz::rng(seed);
        let num_atoms = r.gen_range(1..=2);
        let (body, class) = gen_body(&mut r, num_atoms);
        let f = Formula::parse(&format!("forall p1. exists p2. {body}")).unwrap();
        let aut = build_for(&f, class);
        let ts = fuzz::all_labelings_ts(num_atoms);
        let word: Vec<Letter> =
            (0..r.gen_range(1..=4)).map(|_| fuzz::gen_letter(&mut r, num_atoms, 2)).collect();
        let direct =
            eval_prefix_bounded(&ts, &fuzz::word_prefixes(&word, num_atoms, 2), f.body())
                .unwrap();
        prop_assert_eq!(aut.accepts(&word), direct);
    }

    /// Structure of the sink-completed encoding: one winning sink which is
    /// the only goal, sinks absorb, violating product states lose under
    /// every action, every other product state can still win, and every
    /// observation key round-trips through its textual form.
    #[test]
    fn safe_encoding_structure_and_observation_keys(seed in any::<u64>()) {
        let mut r = fuzz::rng(seed);
        let (ts, formula) = gen_safe_instance(&mut r);
        let qdec = encode(&ts, &formula, &EncodeLimits::default()).unwrap();
        prop_assert_eq!(qdec.variant(), Variant::Safe);
        prop_assert!((qdec.num_states() as u128) <= qdec.definitional_states());

        let win = qdec
            .states()
            .iter()
            .position(|s| *s == PlanningState::Win)
            .expect("winning sink is always reachable from an unmarked start");
        let lose = qdec.states().iter().position(|s| *s == PlanningState::Lose);
        prop_assert!(qdec.is_goal(win));
        prop_assert_eq!(qdec.goals().len(), 1);

        let aut = qdec.automaton();
        for s in 0..qdec.num_states() {
            for a in 0..qdec.num_actions() {
                let image = qdec.image(s, a);
                prop_assert!(!image.is_empty());
                match qdec.state(s) {
                    PlanningState::Win => prop_assert!(image == [win]),
                    PlanningState::Lose => prop_assert!(image == [lose.unwrap()]),
                    PlanningState::Product { q, .. } => {
                        if aut.is_marked(*q) {
                            let l = lose.expect("violating state needs the losing sink");
                            prop_assert!(image.iter().all(|&t| t == l));
                        } else {
                            prop_assert!(image.contains(&win));
                        }
                    }
                }
            }
            let obs = qdec.observation(s);
            let key = obs.key(&ts);
            let parsed = Observation::parse_key(&key, &ts);
            prop_assert_eq!(parsed.as_ref(), Some(&obs));
            if let Observation::Locs(locs) = &obs {
                prop_assert_eq!(locs.len(), qdec.merged_obs_len());
            }
        }
        prop_assert_eq!(qdec.observation(win), Observation::Win);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A synthesized controller is a function of the history it has
    /// observed: two adversary direction sequences that agree up to step k
    /// produce identical controller outputs and identical traces through
    /// step k, no matter how they continue afterwards.
    #[test]
    fn policy_outputs_depend_only_on_observed_history(seed in any::<u64>()) {
        let mut r = fuzz::rng(seed);
        let (ts, formula) = gen_safe_instance(&mut r);
        let qdec = encode(&ts, &formula, &EncodeLimits::default()).unwrap();
        let Verdict::PlanFound { policy, .. } = solve_fond_strong_cyclic(&qdec) else {
            return Ok(()); // unrealizable instance: nothing to replay
        };
        let witness = SkolemWitness::new(&ts, &formula, policy).unwrap();
        prop_assert_eq!(witness.num_universal(), 1);

        let dirs: Vec<DirId> = ts.directions().collect();
        let len = r.gen_range(1..=5);
        let k = r.gen_range(0..len);
        let pick = |r: &mut rand_chacha::ChaCha8Rng| dirs[r.gen_range(0..dirs.len())];
        let shared: Vec<Vec<DirId>> = (0..k).map(|_| vec![pick(&mut r)]).collect();
        let fork = r.gen_range(0..dirs.len());
        let mut u1 = shared.clone();
        let mut u2 = shared;
        u1.push(vec![dirs[fork]]);
        u2.push(vec![dirs[(fork + 1) % dirs.len()]]);
        for _ in k + 1..len {
            u1.push(vec![pick(&mut r)]);
            u2.push(vec![pick(&mut r)]);
        }

        let r1 = witness.replay(&u1).unwrap();
        let r2 = witness.replay(&u2).unwrap();
        prop_assert_eq!(r1.exist_dirs.len(), len);
        prop_assert_eq!(&r1.exist_dirs[..=k], &r2.exist_dirs[..=k]);
        for v in 0..r1.prefixes.len() {
            prop_assert_eq!(r1.prefixes[v].len(), len + 1);
            prop_assert_eq!(&r1.prefixes[v][..=k], &r2.prefixes[v][..=k]);
        }
    }
}
