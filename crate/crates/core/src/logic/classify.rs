//! Prefix classification and syntactic body fragments.

use super::ast::{Body, Formula, Quantifier};

/// Shape of the quantifier prefix, which determines the planning machinery:
/// ExistsOnly → classical, ForallExists → fully observable non-deterministic,
/// ForallExistsForall → partially observable non-deterministic. Everything
/// else (existential-leading mixtures, all-universal prefixes, deeper
/// alternation) is General: encodable but not solved in-tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixClass {
    ExistsOnly,
    ForallExists,
    ForallExistsForall,
    General,
}

pub fn classify_prefix(formula: &Formula) -> PrefixClass {
    // Run-length blocks of the quantifier word.
    let mut blocks: Vec<Quantifier> = Vec::new();
    for (q, _) in formula.prefix() {
        if blocks.last() != Some(q) {
            blocks.push(*q);
        }
    }
    use Quantifier::{Exists, Forall};
    match blocks.as_slice() {
        [Exists] => PrefixClass::ExistsOnly,
        [Forall, Exists] => PrefixClass::ForallExists,
        [Forall, Exists, Forall] => PrefixClass::ForallExistsForall,
        _ => PrefixClass::General,
    }
}

/// Syntactic fragment of the body, decided on negation normal form:
/// Reachability (co-safe) iff temporal operators ⊆ {X, U, F}; Safety iff
/// ⊆ {X, G} once negated Untils are pushed to their dual (a residual
/// Release that is not a plain G disqualifies). Temporal-free bodies satisfy
/// both definitions and classify as Reachability (checked first).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyClass {
    Reachability,
    Safety,
    Neither,
}

pub fn classify_body(body: &Body) -> BodyClass {
    let nnf = normalize(to_nnf(body, false));
    let mut ops = OpSet::default();
    collect_ops(&nnf, &mut ops);
    if !ops.globally && !ops.release {
        BodyClass::Reachability
    } else if !ops.until && !ops.eventually && !ops.release {
        BodyClass::Safety
    } else {
        BodyClass::Neither
    }
}

#[derive(Default)]
struct OpSet {
    until: bool,
    release: bool,
    eventually: bool,
    globally: bool,
}

fn collect_ops(n: &Nnf, ops: &mut OpSet) {
    match n {
        Nnf::True | Nnf::False | Nnf::Lit { .. } => {}
        Nnf::And(xs) | Nnf::Or(xs) => xs.iter().for_each(|x| collect_ops(x, ops)),
        Nnf::Next(a) => collect_ops(a, ops),
        Nnf::Eventually(a) => {
            ops.eventually = true;
            collect_ops(a, ops);
        }
        Nnf::Globally(a) => {
            ops.globally = true;
            collect_ops(a, ops);
        }
        Nnf::Until(a, b) => {
            ops.until = true;
            collect_ops(a, ops);
            collect_ops(b, ops);
        }
        Nnf::Release(a, b) => {
            ops.release = true;
            collect_ops(a, ops);
            collect_ops(b, ops);
        }
    }
}

/// Negation normal form: negation only on atoms, n-ary ∧/∨, and the release
/// dual for negated until. Used by the classifier and as the state space of
/// the progression automata; the derived `Ord` gives residues a canonical
/// order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Nnf {
    True,
    False,
    Lit {
        atom: String,
        var: usize,
        positive: bool,
    },
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
    Next(Box<Nnf>),
    Until(Box<Nnf>, Box<Nnf>),
    Release(Box<Nnf>, Box<Nnf>),
    Eventually(Box<Nnf>),
    Globally(Box<Nnf>),
}

/// Pushes negations to the atoms. `neg` tracks the parity above this node.
pub fn to_nnf(body: &Body, neg: bool) -> Nnf {
    match body {
        Body::True => {
            if neg {
                Nnf::False
            } else {
                Nnf::True
            }
        }
        Body::False => {
            if neg {
                Nnf::True
            } else {
                Nnf::False
            }
        }
        Body::Atom { atom, var } => Nnf::Lit {
            atom: atom.clone(),
            var: *var,
            positive: !neg,
        },
        Body::Not(a) => to_nnf(a, !neg),
        Body::And(l, r) => {
            let (l, r) = (to_nnf(l, neg), to_nnf(r, neg));
            if neg {
                Nnf::Or(vec![l, r])
            } else {
                Nnf::And(vec![l, r])
            }
        }
        Body::Or(l, r) => {
            let (l, r) = (to_nnf(l, neg), to_nnf(r, neg));
            if neg {
                Nnf::And(vec![l, r])
            } else {
                Nnf::Or(vec![l, r])
            }
        }
        Body::Implies(l, r) => {
            // l -> r == !l | r
            if neg {
                Nnf::And(vec![to_nnf(l, false), to_nnf(r, true)])
            } else {
                Nnf::Or(vec![to_nnf(l, true), to_nnf(r, false)])
            }
        }
        Body::Iff(l, r) => {
            if neg {
                // one side true, the other false
                Nnf::Or(vec![
                    Nnf::And(vec![to_nnf(l, false), to_nnf(r, true)]),
                    Nnf::And(vec![to_nnf(l, true), to_nnf(r, false)]),
                ])
            } else {
                Nnf::And(vec![
                    Nnf::Or(vec![to_nnf(l, true), to_nnf(r, false)]),
                    Nnf::Or(vec![to_nnf(l, false), to_nnf(r, true)]),
                ])
            }
        }
        Body::Next(a) => Nnf::Next(Box::new(to_nnf(a, neg))),
        Body::Eventually(a) => {
            if neg {
                Nnf::Globally(Box::new(to_nnf(a, true)))
            } else {
                Nnf::Eventually(Box::new(to_nnf(a, false)))
            }
        }
        Body::Globally(a) => {
            if neg {
                Nnf::Eventually(Box::new(to_nnf(a, true)))
            } else {
                Nnf::Globally(Box::new(to_nnf(a, false)))
            }
        }
        Body::Until(l, r) => {
            if neg {
                Nnf::Release(Box::new(to_nnf(l, true)), Box::new(to_nnf(r, true)))
            } else {
                Nnf::Until(Box::new(to_nnf(l, false)), Box::new(to_nnf(r, false)))
            }
        }
    }
}

/// Both `small` and `big` sorted ascending.
fn is_subset(small: &[Nnf], big: &[Nnf]) -> bool {
    let mut bi = 0;
    'outer: for s in small {
        while bi < big.len() {
            match big[bi].cmp(s) {
                std::cmp::Ordering::Less => bi += 1,
                std::cmp::Ordering::Equal => {
                    bi += 1;
                    continue 'outer;
                }
                std::cmp::Ordering::Greater => return false,
            }
        }
        return false;
    }
    true
}

/// In a flattened, sorted, deduplicated child list, removes every compound
/// child whose member set strictly contains another child's member set —
/// the smaller sibling absorbs it. `members` views a child as the set it
/// contributes: its own elements when it is the dual connective, a
/// singleton otherwise. Distinct children never have equal member sets
/// (they would be the same node), so strict containment is exact.
fn absorb<F, M>(children: &mut Vec<Nnf>, is_compound: F, members: M)
where
    F: Fn(&Nnf) -> bool,
    M: Fn(&Nnf) -> &[Nnf],
{
    if children.len() < 2 {
        return;
    }
    let n = children.len();
    let mut keep = vec![true; n];
    for i in 0..n {
        if !is_compound(&children[i]) {
            continue;
        }
        let big = members(&children[i]);
        for j in 0..n {
            if i == j {
                continue;
            }
            let small = members(&children[j]);
            if small.len() < big.len() && is_subset(small, big) {
                keep[i] = false;
                break;
            }
        }
    }
    let mut it = keep.iter();
    children.retain(|_| *it.next().unwrap());
}

/// Distributes a conjunction over its disjunctive children, turning
/// `x ∧ (y ∨ z)` into `(x ∧ y) ∨ (x ∧ z)`. Together with flattening and
/// absorption this drives every formula to a monotone disjunctive normal
/// form, so repeated progression ranges over antichains of conjunctions
/// drawn from a fixed subformula pool instead of piling up ever deeper
/// ∧/∨ alternations that never repeat. Returns None when no child is a
/// disjunction or when the expansion would exceed a safety cap (the rare
/// capped conjunction simply stays nested).
fn distribute(children: &[Nnf]) -> Option<Nnf> {
    let mut product = 1usize;
    let mut saw_or = false;
    for c in children {
        if let Nnf::Or(ys) = c {
            saw_or = true;
            product = product.checked_mul(ys.len()).filter(|p| *p <= 4096)?;
        }
    }
    if !saw_or {
        return None;
    }
    // Cross product picking one alternative per child; each pick becomes
    // one conjunction of the resulting disjunction.
    let mut picks: Vec<Vec<&Nnf>> = vec![Vec::new()];
    for c in children {
        let options: Vec<&Nnf> = match c {
            Nnf::Or(ys) => ys.iter().collect(),
            other => vec![other],
        };
        let mut next = Vec::with_capacity(picks.len() * options.len());
        for p in &picks {
            for o in &options {
                let mut grown = p.clone();
                grown.push(*o);
                next.push(grown);
            }
        }
        picks = next;
    }
    let mut terms: Vec<Nnf> = Vec::with_capacity(picks.len());
    for pick in picks {
        // An alternative may itself be a conjunction; flatten it in.
        let mut conj: Vec<Nnf> = Vec::new();
        for e in pick {
            match e {
                Nnf::And(inner) => conj.extend(inner.iter().cloned()),
                other => conj.push(other.clone()),
            }
        }
        conj.sort();
        conj.dedup();
        terms.push(match conj.len() {
            1 => conj.pop().unwrap(),
            _ => Nnf::And(conj),
        });
    }
    terms.sort();
    terms.dedup();
    absorb(&mut terms, |x| matches!(x, Nnf::And(_)), |x| match x {
        Nnf::And(ys) => ys.as_slice(),
        other => std::slice::from_ref(other),
    });
    Some(match terms.len() {
        1 => terms.pop().unwrap(),
        _ => Nnf::Or(terms),
    })
}

/// Canonical form: flattened sorted deduplicated n-ary ∧/∨ with constant
/// folding, absorption (`a ∨ (a ∧ b)` is `a`, dually for ∧), and
/// ∧-over-∨ distribution — a monotone disjunctive normal form. The
/// normal form guarantees the residues of repeated progression stay
/// within a finite set. Deliberately *no* complementary-literal
/// cancellation — the automata built over these residues must stay
/// exactly as determined as the three-valued bounded evaluator, no more.
/// Absorption and distribution are safe for that: both are equivalences
/// of the three-valued semantics as well.
pub fn normalize(n: Nnf) -> Nnf {
    match n {
        Nnf::True | Nnf::False | Nnf::Lit { .. } => n,
        Nnf::And(xs) => {
            let mut flat = Vec::new();
            for x in xs {
                match normalize(x) {
                    Nnf::True => {}
                    Nnf::False => return Nnf::False,
                    Nnf::And(inner) => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            flat.sort();
            flat.dedup();
            absorb(&mut flat, |x| matches!(x, Nnf::Or(_)), |x| match x {
                Nnf::Or(ys) => ys.as_slice(),
                other => std::slice::from_ref(other),
            });
            if flat.len() >= 2 {
                if let Some(distributed) = distribute(&flat) {
                    return distributed;
                }
            }
            match flat.len() {
                0 => Nnf::True,
                1 => flat.pop().unwrap(),
                _ => Nnf::And(flat),
            }
        }
        Nnf::Or(xs) => {
            let mut flat = Vec::new();
            for x in xs {
                match normalize(x) {
                    Nnf::False => {}
                    Nnf::True => return Nnf::True,
                    Nnf::Or(inner) => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            flat.sort();
            flat.dedup();
            absorb(&mut flat, |x| matches!(x, Nnf::And(_)), |x| match x {
                Nnf::And(ys) => ys.as_slice(),
                other => std::slice::from_ref(other),
            });
            match flat.len() {
                0 => Nnf::False,
                1 => flat.pop().unwrap(),
                _ => Nnf::Or(flat),
            }
        }
        Nnf::Next(a) => match normalize(*a) {
            Nnf::True => Nnf::True,
            Nnf::False => Nnf::False,
            other => Nnf::Next(Box::new(other)),
        },
        Nnf::Eventually(a) => match normalize(*a) {
            Nnf::True => Nnf::True,
            Nnf::False => Nnf::False,
            other => Nnf::Eventually(Box::new(other)),
        },
        Nnf::Globally(a) => match normalize(*a) {
            Nnf::True => Nnf::True,
            Nnf::False => Nnf::False,
            other => Nnf::Globally(Box::new(other)),
        },
        Nnf::Until(l, r) => {
            let (l, r) = (normalize(*l), normalize(*r));
            match (&l, &r) {
                (_, Nnf::False) => Nnf::False,
                (_, Nnf::True) => Nnf::True,
                (Nnf::False, _) => r,
                (Nnf::True, _) => Nnf::Eventually(Box::new(r)),
                _ => Nnf::Until(Box::new(l), Box::new(r)),
            }
        }
        Nnf::Release(l, r) => {
            let (l, r) = (normalize(*l), normalize(*r));
            match (&l, &r) {
                (_, Nnf::True) => Nnf::True,
                (_, Nnf::False) => Nnf::False,
                (Nnf::True, _) => r,
                (Nnf::False, _) => Nnf::Globally(Box::new(r)),
                _ => Nnf::Release(Box::new(l), Box::new(r)),
            }
        }
    }
}

impl Nnf {
    /// Renders with explicit operators; variables shown by index when no
    /// formula context is available.
    pub fn render(&self, var_names: &[String]) -> String {
        fn name(var: usize, names: &[String]) -> String {
            names
                .get(var)
                .cloned()
                .unwrap_or_else(|| format!("p{}", var + 1))
        }
        fn go(n: &Nnf, names: &[String], out: &mut String) {
            match n {
                Nnf::True => out.push_str("true"),
                Nnf::False => out.push_str("false"),
                Nnf::Lit {
                    atom,
                    var,
                    positive,
                } => {
                    if !positive {
                        out.push('!');
                    }
                    out.push_str(atom);
                    out.push('_');
                    out.push_str(&name(*var, names));
                }
                Nnf::And(xs) | Nnf::Or(xs) => {
                    let op = if matches!(n, Nnf::And(_)) { " & " } else { " | " };
                    out.push('(');
                    for (i, x) in xs.iter().enumerate() {
                        if i > 0 {
                            out.push_str(op);
                        }
                        go(x, names, out);
                    }
                    out.push(')');
                }
                Nnf::Next(a) => {
                    out.push_str("X ");
                    go(a, names, out);
                }
                Nnf::Eventually(a) => {
                    out.push_str("F ");
                    go(a, names, out);
                }
                Nnf::Globally(a) => {
                    out.push_str("G ");
                    go(a, names, out);
                }
                Nnf::Until(l, r) => {
                    out.push('(');
                    go(l, names, out);
                    out.push_str(" U ");
                    go(r, names, out);
                    out.push(')');
                }
                Nnf::Release(l, r) => {
                    out.push('(');
                    go(l, names, out);
                    out.push_str(" R ");
                    go(r, names, out);
                    out.push(')');
                }
            }
        }
        let mut out = String::new();
        go(self, var_names, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(text: &str) -> Formula {
        Formula::parse(text).unwrap()
    }

    #[test]
    fn prefix_classes_from_examples() {
        assert_eq!(
            classify_prefix(&f("exists p1. exists p2. a_p1")),
            PrefixClass::ExistsOnly
        );
        assert_eq!(
            classify_prefix(&f("forall p1. exists p2. a_p1")),
            PrefixClass::ForallExists
        );
        assert_eq!(
            classify_prefix(&f("exists p1. forall p2. a_p1")),
            PrefixClass::General
        );
        assert_eq!(
            classify_prefix(&f("forall p1. forall p2. a_p1")),
            PrefixClass::General
        );
        assert_eq!(
            classify_prefix(&f("forall p1. exists p2. forall p3. a_p1")),
            PrefixClass::ForallExistsForall
        );
    }

    /// Independent oracle: match the quantifier word against the three
    /// regular patterns ∃+, ∀+∃+, ∀+∃+∀+ by scanning.
    fn oracle(word: &[Quantifier]) -> PrefixClass {
        use Quantifier::{Exists, Forall};
        let all = |w: &[Quantifier], q: Quantifier| w.iter().all(|x| *x == q);
        if !word.is_empty() && all(word, Exists) {
            return PrefixClass::ExistsOnly;
        }
        // ∀+∃+: split at the first ∃.
        if let Some(i) = word.iter().position(|q| *q == Exists) {
            if i > 0 && all(&word[i..], Exists) {
                return PrefixClass::ForallExists;
            }
            // ∀+∃+∀+: a later ∀ block with only ∃ between.
            if i > 0 {
                if let Some(j) = word[i..].iter().position(|q| *q == Forall) {
                    let j = i + j;
                    if all(&word[i..j], Exists) && all(&word[j..], Forall) {
                        return PrefixClass::ForallExistsForall;
                    }
                }
            }
        }
        PrefixClass::General
    }

    #[test]
    fn prefix_classification_matches_pattern_oracle_exhaustively() {
        use Quantifier::{Exists, Forall};
        for len in 1..=5usize {
            for bits in 0..(1u32 << len) {
                let word: Vec<Quantifier> = (0..len)
                    .map(|i| if bits >> i & 1 == 1 { Forall } else { Exists })
                    .collect();
                let prefix: Vec<(Quantifier, String)> = word
                    .iter()
                    .enumerate()
                    .map(|(i, q)| (*q, format!("p{i}")))
                    .collect();
                let formula = Formula::new(prefix, Body::True).unwrap();
                assert_eq!(
                    classify_prefix(&formula),
                    oracle(&word),
                    "word {word:?}"
                );
            }
        }
    }

    #[test]
    fn body_classes_from_examples() {
        let delayed = f("forall p1. exists p2. G (a_p1 <-> X a_p2)");
        assert_eq!(classify_body(delayed.body()), BodyClass::Safety);

        let reach = f("exists p1. exists p2. F (a_p1 & ! a_p2)");
        assert_eq!(classify_body(reach.body()), BodyClass::Reachability);

        let mixed = f("exists p1. F a_p1 & G a_p1");
        assert_eq!(classify_body(mixed.body()), BodyClass::Neither);

        let od = f("forall p1. forall p2. (l_p1 <-> l_p2) -> G (o_p1 <-> o_p2)");
        assert_eq!(classify_body(od.body()), BodyClass::Safety);

        // Negating the OD body flips safety into reachability.
        assert_eq!(
            classify_body(od.negated().body()),
            BodyClass::Reachability
        );
    }

    #[test]
    fn negated_eventually_is_safety() {
        let g = f("exists p. ! F a_p");
        assert_eq!(classify_body(g.body()), BodyClass::Safety);
        // Same through a literal `true U`.
        let u = f("exists p. ! (true U a_p)");
        assert_eq!(classify_body(u.body()), BodyClass::Safety);
    }

    #[test]
    fn residual_release_is_neither() {
        // ¬(a U b) = ¬a R ¬b, not expressible with X/G alone.
        let b = f("exists p. ! (a_p U b_p)");
        assert_eq!(classify_body(b.body()), BodyClass::Neither);
    }

    #[test]
    fn temporal_free_bodies_are_reachability() {
        let b = f("exists p1. exists p2. a_p1 <-> ! a_p2");
        assert_eq!(classify_body(b.body()), BodyClass::Reachability);
    }

    #[test]
    fn normalization_is_canonical() {
        let a = |v: usize| Nnf::Lit {
            atom: "a".into(),
            var: v,
            positive: true,
        };
        // Order and nesting of ∧ do not matter after normalization.
        let left = normalize(Nnf::And(vec![
            a(1),
            Nnf::And(vec![a(0), Nnf::True]),
            a(0),
        ]));
        let right = normalize(Nnf::And(vec![a(0), a(1)]));
        assert_eq!(left, right);
        // Constants fold.
        assert_eq!(normalize(Nnf::Or(vec![Nnf::True, a(0)])), Nnf::True);
        assert_eq!(
            normalize(Nnf::Until(Box::new(Nnf::True), Box::new(a(0)))),
            Nnf::Eventually(Box::new(a(0)))
        );
        assert_eq!(
            normalize(Nnf::Release(Box::new(Nnf::False), Box::new(a(0)))),
            Nnf::Globally(Box::new(a(0)))
        );
        assert_eq!(normalize(Nnf::Globally(Box::new(Nnf::True))), Nnf::True);
    }

    #[test]
    fn no_complement_cancellation() {
        let lit = |positive| Nnf::Lit {
            atom: "a".into(),
            var: 0,
            positive,
        };
        let n = normalize(Nnf::Or(vec![lit(true), lit(false)]));
        assert!(matches!(n, Nnf::Or(_)), "a | !a must not fold to true");
    }
}
