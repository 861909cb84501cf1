//! Seeded random generation of transition systems, formula bodies, and
//! letters, for cross-checking independent components against each other.
//!
//! All generators draw from a caller-supplied [`ChaCha8Rng`], so a fixed
//! seed reproduces the exact same instance stream on every run and every
//! platform. Generated artifacts are produced as source text and then run
//! through the ordinary parsers, which keeps the parsers on the tested
//! path and guarantees the instances are expressible in the file formats.
//!
//! The body generators are shaped so that classification is guaranteed by
//! construction: safety bodies are `G`-rooted and avoid `F`/`U` everywhere,
//! reachability bodies are `F`-rooted and avoid `G` everywhere, and neither
//! ever emits the constants `true`/`false` (which simplification could
//! otherwise collapse into the wrong class). Negation, `->`, and `<->` are
//! only applied to literals so that rewriting to negation normal form never
//! flips a temporal operator into its dual.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::automata::Letter;
use crate::system::{LocId, TransitionSystem};

/// Atom names used by all generators, in order. `num_atoms` arguments
/// select a prefix of this list.
pub const ATOMS: [&str; 3] = ["a", "b", "c"];

/// A reproducible RNG: the same seed always yields the same stream.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random transition system with between 1 and `max_locs` locations,
/// exactly `num_dirs` directions, and the first `num_atoms` atoms of
/// [`ATOMS`]. Each atom holds at each location with probability 1/2, every
/// (location, direction) pair gets a uniformly random successor, and the
/// initial location is uniform.
pub fn gen_ts(
    rng: &mut ChaCha8Rng,
    max_locs: usize,
    num_dirs: usize,
    num_atoms: usize,
) -> TransitionSystem {
    assert!(max_locs >= 1 && num_dirs >= 1 && num_atoms >= 1 && num_atoms <= ATOMS.len());
    let n = rng.gen_range(1..=max_locs);
    let mut text = String::new();
    text.push_str(&format!("atoms {}\n", ATOMS[..num_atoms].join(" ")));
    text.push_str("locations");
    for l in 0..n {
        text.push_str(&format!(" l{l}"));
    }
    text.push('\n');
    text.push_str("directions");
    for d in 0..num_dirs {
        text.push_str(&format!(" d{d}"));
    }
    text.push('\n');
    text.push_str(&format!("init l{}\n", rng.gen_range(0..n)));
    for l in 0..n {
        let held: Vec<&str> = ATOMS[..num_atoms]
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.5))
            .collect();
        if !held.is_empty() {
            text.push_str(&format!("label l{l} {}\n", held.join(" ")));
        }
    }
    for l in 0..n {
        for d in 0..num_dirs {
            text.push_str(&format!("trans l{l} d{d} l{}\n", rng.gen_range(0..n)));
        }
    }
    TransitionSystem::parse(&text).expect("generated system is well-formed")
}

fn gen_literal(rng: &mut ChaCha8Rng, num_atoms: usize, num_vars: usize) -> String {
    let a = ATOMS[rng.gen_range(0..num_atoms)];
    let v = rng.gen_range(0..num_vars) + 1;
    format!("{a}_p{v}")
}

fn gen_safety_sub(
    rng: &mut ChaCha8Rng,
    num_atoms: usize,
    num_vars: usize,
    depth: usize,
) -> String {
    if depth <= 1 {
        return gen_literal(rng, num_atoms, num_vars);
    }
    let choice = rng.gen_range(0..8);
    match choice {
        0 => gen_literal(rng, num_atoms, num_vars),
        1 => format!("(! {})", gen_literal(rng, num_atoms, num_vars)),
        2 => format!(
            "({} -> {})",
            gen_literal(rng, num_atoms, num_vars),
            gen_literal(rng, num_atoms, num_vars)
        ),
        3 => format!(
            "({} <-> {})",
            gen_literal(rng, num_atoms, num_vars),
            gen_literal(rng, num_atoms, num_vars)
        ),
        4 => format!(
            "({} & {})",
            gen_safety_sub(rng, num_atoms, num_vars, depth - 1),
            gen_safety_sub(rng, num_atoms, num_vars, depth - 1)
        ),
        5 => format!(
            "({} | {})",
            gen_safety_sub(rng, num_atoms, num_vars, depth - 1),
            gen_safety_sub(rng, num_atoms, num_vars, depth - 1)
        ),
        6 => format!("(X {})", gen_safety_sub(rng, num_atoms, num_vars, depth - 1)),
        _ => format!("(G {})", gen_safety_sub(rng, num_atoms, num_vars, depth - 1)),
    }
}

fn gen_reach_sub(
    rng: &mut ChaCha8Rng,
    num_atoms: usize,
    num_vars: usize,
    depth: usize,
) -> String {
    if depth <= 1 {
        return gen_literal(rng, num_atoms, num_vars);
    }
    let choice = rng.gen_range(0..8);
    match choice {
        0 => gen_literal(rng, num_atoms, num_vars),
        1 => format!("(! {})", gen_literal(rng, num_atoms, num_vars)),
        2 => format!(
            "({} -> {})",
            gen_literal(rng, num_atoms, num_vars),
            gen_literal(rng, num_atoms, num_vars)
        ),
        3 => format!(
            "({} & {})",
            gen_reach_sub(rng, num_atoms, num_vars, depth - 1),
            gen_reach_sub(rng, num_atoms, num_vars, depth - 1)
        ),
        4 => format!(
            "({} | {})",
            gen_reach_sub(rng, num_atoms, num_vars, depth - 1),
            gen_reach_sub(rng, num_atoms, num_vars, depth - 1)
        ),
        5 => format!("(X {})", gen_reach_sub(rng, num_atoms, num_vars, depth - 1)),
        6 => format!("(F {})", gen_reach_sub(rng, num_atoms, num_vars, depth - 1)),
        _ => format!(
            "({} U {})",
            gen_reach_sub(rng, num_atoms, num_vars, depth - 1),
            gen_reach_sub(rng, num_atoms, num_vars, depth - 1)
        ),
    }
}

/// Random safety body over path variables `p1..p{num_vars}`: a `G`-rooted
/// formula whose normal form classifies as a safety property. `depth`
/// bounds the nesting depth including the root.
pub fn gen_safety_body(
    rng: &mut ChaCha8Rng,
    num_atoms: usize,
    num_vars: usize,
    depth: usize,
) -> String {
    assert!(depth >= 2 && num_atoms >= 1 && num_atoms <= ATOMS.len() && num_vars >= 1);
    format!("(G {})", gen_safety_sub(rng, num_atoms, num_vars, depth - 1))
}

/// Random reachability body over path variables `p1..p{num_vars}`: an
/// `F`-rooted formula whose normal form classifies as a reachability
/// property. `depth` bounds the nesting depth including the root.
pub fn gen_reach_body(
    rng: &mut ChaCha8Rng,
    num_atoms: usize,
    num_vars: usize,
    depth: usize,
) -> String {
    assert!(depth >= 2 && num_atoms >= 1 && num_atoms <= ATOMS.len() && num_vars >= 1);
    format!("(F {})", gen_reach_sub(rng, num_atoms, num_vars, depth - 1))
}

/// Random letter over `num_atoms` atoms and `num_vars` path variables:
/// each (atom, variable) pair is included independently with probability
/// 1/2.
pub fn gen_letter(rng: &mut ChaCha8Rng, num_atoms: usize, num_vars: usize) -> Letter {
    let mut letter = Letter::new();
    for a in &ATOMS[..num_atoms] {
        for v in 0..num_vars {
            if rng.gen_bool(0.5) {
                letter.insert(a, v);
            }
        }
    }
    letter
}

/// The letter in which every (atom, variable) pair holds.
pub fn saturated_letter(num_atoms: usize, num_vars: usize) -> Letter {
    let mut letter = Letter::new();
    for a in &ATOMS[..num_atoms] {
        for v in 0..num_vars {
            letter.insert(a, v);
        }
    }
    letter
}

/// A transition system with one location per subset of the first
/// `num_atoms` atoms of [`ATOMS`]. Location `s{m}` carries exactly the
/// atoms whose bit is set in `m`, so [`LocId`] doubles as a label bitmask.
/// Every location loops to itself under the single direction. Used to
/// realize arbitrary letter sequences as location prefixes.
pub fn all_labelings_ts(num_atoms: usize) -> TransitionSystem {
    assert!(num_atoms >= 1 && num_atoms <= ATOMS.len());
    let n = 1usize << num_atoms;
    let mut text = String::new();
    text.push_str(&format!("atoms {}\n", ATOMS[..num_atoms].join(" ")));
    text.push_str("locations");
    for m in 0..n {
        text.push_str(&format!(" s{m}"));
    }
    text.push_str("\ndirections d0\ninit s0\n");
    for m in 0..n {
        let held: Vec<&str> = (0..num_atoms)
            .filter(|i| m >> i & 1 == 1)
            .map(|i| ATOMS[i])
            .collect();
        if !held.is_empty() {
            text.push_str(&format!("label s{m} {}\n", held.join(" ")));
        }
        text.push_str(&format!("trans s{m} d0 s{m}\n"));
    }
    TransitionSystem::parse(&text).expect("generated system is well-formed")
}

/// Realize a word as per-variable location prefixes over
/// [`all_labelings_ts`]`(num_atoms)`: at step `t`, variable `v` sits at the
/// location whose label is exactly the set of atoms paired with `v` in
/// `word[t]`.
pub fn word_prefixes(word: &[Letter], num_atoms: usize, num_vars: usize) -> Vec<Vec<LocId>> {
    (0..num_vars)
        .map(|v| {
            word.iter()
                .map(|letter| {
                    let mask: u32 = (0..num_atoms)
                        .filter(|&i| letter.contains(ATOMS[i], v))
                        .map(|i| 1 << i)
                        .sum();
                    LocId(mask)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{classify_body, eval_prefix_bounded, BodyClass, Formula};

    #[test]
    fn generation_is_reproducible() {
        let mut r1 = rng(7);
        let mut r2 = rng(7);
        for _ in 0..20 {
            assert_eq!(
                gen_ts(&mut r1, 4, 2, 2).serialize(),
                gen_ts(&mut r2, 4, 2, 2).serialize()
            );
            assert_eq!(
                gen_safety_body(&mut r1, 2, 2, 4),
                gen_safety_body(&mut r2, 2, 2, 4)
            );
        }
    }

    #[test]
    fn generated_systems_parse_and_are_total() {
        let mut r = rng(11);
        for _ in 0..50 {
            let ts = gen_ts(&mut r, 4, 2, 2);
            assert!(ts.num_locations() >= 1 && ts.num_locations() <= 4);
            assert_eq!(ts.num_directions(), 2);
            for l in ts.locations() {
                for d in ts.directions() {
                    let s = ts.successor(l, d);
                    assert!((s.0 as usize) < ts.num_locations());
                }
            }
        }
    }

    #[test]
    fn safety_bodies_always_classify_as_safety() {
        let mut r = rng(13);
        for _ in 0..200 {
            let body = gen_safety_body(&mut r, 3, 2, 4);
            let f = Formula::parse(&format!("forall p1. exists p2. {body}")).unwrap();
            assert_eq!(classify_body(f.body()), BodyClass::Safety, "body: {body}");
        }
    }

    #[test]
    fn reach_bodies_always_classify_as_reachability() {
        let mut r = rng(17);
        for _ in 0..200 {
            let body = gen_reach_body(&mut r, 3, 2, 4);
            let f = Formula::parse(&format!("forall p1. exists p2. {body}")).unwrap();
            assert_eq!(
                classify_body(f.body()),
                BodyClass::Reachability,
                "body: {body}"
            );
        }
    }

    #[test]
    fn all_labelings_ts_realizes_every_letter() {
        let ts = all_labelings_ts(2);
        assert_eq!(ts.num_locations(), 4);
        // Location s3 holds both atoms; s0 none; s1 only the first.
        let s = |m: u32| LocId(m);
        assert!(ts.has_atom(s(3), 0) && ts.has_atom(s(3), 1));
        assert!(!ts.has_atom(s(0), 0) && !ts.has_atom(s(0), 1));
        assert!(ts.has_atom(s(1), 0) && !ts.has_atom(s(1), 1));
    }

    #[test]
    fn word_prefixes_evaluate_like_the_word() {
        // On the two-variable word where `a` holds for p1 only at step 0
        // and for p2 only at step 1, the delayed-copy body holds bounded.
        let ts = all_labelings_ts(1);
        let f = Formula::parse("forall p1. exists p2. G (a_p1 <-> X a_p2)").unwrap();
        let w0 = Letter::from_pairs([("a", 0)]);
        let w1 = Letter::from_pairs([("a", 1)]);
        let word = vec![w0, w1];
        let prefixes = word_prefixes(&word, 1, 2);
        assert_eq!(prefixes[0], vec![LocId(1), LocId(0)]);
        assert_eq!(prefixes[1], vec![LocId(0), LocId(1)]);
        let v = eval_prefix_bounded(&ts, &prefixes, f.body()).unwrap();
        assert_eq!(format!("{v:?}"), "Unknown");
    }
}
