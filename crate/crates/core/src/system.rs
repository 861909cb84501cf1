//! Finite-state transition systems with directed, total transition functions.
//!
//! A system has a finite set of locations, a finite set of directions
//! (actions), a total successor function `location × direction → location`,
//! an initial location, and a labeling of locations with atomic propositions.
//! All iteration follows first-declaration order, so everything downstream
//! (encodings, plans, reports) is deterministic.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Index of a location, in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocId(pub u32);

/// Index of a direction, in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DirId(pub u32);

impl LocId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl DirId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown {kind} `{name}`")]
    Undeclared {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("line {line}: duplicate {kind} `{name}`")]
    Duplicate {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("transition function not total: missing `trans {loc} {dir} <target>`")]
    MissingTransition { loc: String, dir: String },
    #[error("invalid system: {0}")]
    Invalid(String),
}

/// A finite-state transition system with a total successor function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionSystem {
    atoms: Vec<String>,
    locations: Vec<String>,
    directions: Vec<String>,
    initial: LocId,
    /// `labels[loc]` = atom indices that hold at that location.
    labels: Vec<BTreeSet<usize>>,
    /// `succ[loc][dir]` = successor location.
    succ: Vec<Vec<LocId>>,
}

impl TransitionSystem {
    /// Builds a system from parts, checking every structural invariant.
    ///
    /// `labels` maps location index to the atom indices holding there;
    /// `succ[loc][dir]` must be defined for every pair.
    pub fn new(
        atoms: Vec<String>,
        locations: Vec<String>,
        directions: Vec<String>,
        initial: LocId,
        labels: Vec<BTreeSet<usize>>,
        succ: Vec<Vec<LocId>>,
    ) -> Result<Self, SystemError> {
        if locations.is_empty() {
            return Err(SystemError::Invalid("no locations declared".into()));
        }
        if directions.is_empty() {
            return Err(SystemError::Invalid("no directions declared".into()));
        }
        for (group, names) in [
            ("atom", &atoms),
            ("location", &locations),
            ("direction", &directions),
        ] {
            let mut seen = BTreeSet::new();
            for n in names {
                check_ident(n).map_err(SystemError::Invalid)?;
                if !seen.insert(n.clone()) {
                    return Err(SystemError::Invalid(format!("duplicate {group} `{n}`")));
                }
            }
        }
        if initial.idx() >= locations.len() {
            return Err(SystemError::Invalid("initial location out of range".into()));
        }
        if labels.len() != locations.len() {
            return Err(SystemError::Invalid("labels must cover every location".into()));
        }
        for set in &labels {
            if set.iter().any(|&a| a >= atoms.len()) {
                return Err(SystemError::Invalid("label atom out of range".into()));
            }
        }
        if succ.len() != locations.len() {
            return Err(SystemError::Invalid(
                "successor table must cover every location".into(),
            ));
        }
        for row in &succ {
            if row.len() != directions.len() {
                return Err(SystemError::Invalid(
                    "successor table must cover every direction".into(),
                ));
            }
            if row.iter().any(|l| l.idx() >= locations.len()) {
                return Err(SystemError::Invalid("successor out of range".into()));
            }
        }
        Ok(TransitionSystem {
            atoms,
            locations,
            directions,
            initial,
            labels,
            succ,
        })
    }

    /// Parses the line-oriented system format.
    ///
    /// Sections: `atoms`, `locations`, `directions`, `init`, `label` (optional
    /// per location), `trans` (one line per location/direction pair). `#`
    /// starts a comment. Declarations must precede their first use.
    pub fn parse(text: &str) -> Result<Self, SystemError> {
        let mut atoms: Vec<String> = Vec::new();
        let mut locations: Vec<String> = Vec::new();
        let mut directions: Vec<String> = Vec::new();
        let mut atom_ix: HashMap<String, usize> = HashMap::new();
        let mut loc_ix: HashMap<String, usize> = HashMap::new();
        let mut dir_ix: HashMap<String, usize> = HashMap::new();
        let mut init: Option<(usize, LocId)> = None;
        let mut labels: HashMap<usize, BTreeSet<usize>> = HashMap::new();
        let mut trans: HashMap<(usize, usize), LocId> = HashMap::new();

        let syntax = |line: usize, msg: &str| SystemError::Syntax {
            line,
            msg: msg.to_string(),
        };

        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut words = content.split_whitespace();
            let keyword = words.next().unwrap();
            let rest: Vec<&str> = words.collect();
            match keyword {
                "atoms" | "locations" | "directions" => {
                    let (names, index, kind) = match keyword {
                        "atoms" => (&mut atoms, &mut atom_ix, "atom"),
                        "locations" => (&mut locations, &mut loc_ix, "location"),
                        _ => (&mut directions, &mut dir_ix, "direction"),
                    };
                    for name in &rest {
                        check_ident(name).map_err(|msg| syntax(line, &msg))?;
                        if index.contains_key(*name) {
                            return Err(SystemError::Duplicate {
                                line,
                                kind,
                                name: name.to_string(),
                            });
                        }
                        index.insert(name.to_string(), names.len());
                        names.push(name.to_string());
                    }
                }
                "init" => {
                    if rest.len() != 1 {
                        return Err(syntax(line, "expected `init <location>`"));
                    }
                    if init.is_some() {
                        return Err(SystemError::Duplicate {
                            line,
                            kind: "init declaration",
                            name: rest[0].to_string(),
                        });
                    }
                    let loc = lookup(&loc_ix, rest[0], "location", line)?;
                    init = Some((line, LocId(loc as u32)));
                }
                "label" => {
                    if rest.is_empty() {
                        return Err(syntax(line, "expected `label <location> <atoms...>`"));
                    }
                    let loc = lookup(&loc_ix, rest[0], "location", line)?;
                    if labels.contains_key(&loc) {
                        return Err(SystemError::Duplicate {
                            line,
                            kind: "label declaration for location",
                            name: rest[0].to_string(),
                        });
                    }
                    let mut set = BTreeSet::new();
                    for a in &rest[1..] {
                        let atom = lookup(&atom_ix, a, "atom", line)?;
                        if !set.insert(atom) {
                            return Err(SystemError::Duplicate {
                                line,
                                kind: "atom in label",
                                name: a.to_string(),
                            });
                        }
                    }
                    labels.insert(loc, set);
                }
                "trans" => {
                    if rest.len() != 3 {
                        return Err(syntax(line, "expected `trans <from> <direction> <to>`"));
                    }
                    let from = lookup(&loc_ix, rest[0], "location", line)?;
                    let dir = lookup(&dir_ix, rest[1], "direction", line)?;
                    let to = lookup(&loc_ix, rest[2], "location", line)?;
                    if trans.contains_key(&(from, dir)) {
                        return Err(SystemError::Duplicate {
                            line,
                            kind: "transition for",
                            name: format!("{} {}", rest[0], rest[1]),
                        });
                    }
                    trans.insert((from, dir), LocId(to as u32));
                }
                other => {
                    return Err(syntax(
                        line,
                        &format!(
                            "unknown section `{other}` (expected atoms, locations, \
                             directions, init, label, or trans)"
                        ),
                    ));
                }
            }
        }

        if locations.is_empty() {
            return Err(SystemError::Invalid("no locations declared".into()));
        }
        if directions.is_empty() {
            return Err(SystemError::Invalid("no directions declared".into()));
        }
        let (_, initial) = init.ok_or_else(|| SystemError::Invalid("missing `init`".into()))?;

        let mut succ = Vec::with_capacity(locations.len());
        for (li, lname) in locations.iter().enumerate() {
            let mut row = Vec::with_capacity(directions.len());
            for (di, dname) in directions.iter().enumerate() {
                match trans.get(&(li, di)) {
                    Some(&target) => row.push(target),
                    None => {
                        return Err(SystemError::MissingTransition {
                            loc: lname.clone(),
                            dir: dname.clone(),
                        })
                    }
                }
            }
            succ.push(row);
        }
        let labels = (0..locations.len())
            .map(|li| labels.remove(&li).unwrap_or_default())
            .collect();

        TransitionSystem::new(atoms, locations, directions, initial, labels, succ)
    }

    /// Renders the system back into the canonical textual form; parsing the
    /// result yields an identical system.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str("atoms");
        for a in &self.atoms {
            out.push(' ');
            out.push_str(a);
        }
        out.push('\n');
        out.push_str("locations");
        for l in &self.locations {
            out.push(' ');
            out.push_str(l);
        }
        out.push('\n');
        out.push_str("directions");
        for d in &self.directions {
            out.push(' ');
            out.push_str(d);
        }
        out.push('\n');
        out.push_str(&format!("init {}\n", self.loc_name(self.initial)));
        for (li, set) in self.labels.iter().enumerate() {
            if !set.is_empty() {
                out.push_str("label ");
                out.push_str(&self.locations[li]);
                for &a in set {
                    out.push(' ');
                    out.push_str(&self.atoms[a]);
                }
                out.push('\n');
            }
        }
        for (li, row) in self.succ.iter().enumerate() {
            for (di, target) in row.iter().enumerate() {
                out.push_str(&format!(
                    "trans {} {} {}\n",
                    self.locations[li],
                    self.directions[di],
                    self.loc_name(*target)
                ));
            }
        }
        out
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn num_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn initial(&self) -> LocId {
        self.initial
    }

    pub fn loc_name(&self, l: LocId) -> &str {
        &self.locations[l.idx()]
    }

    pub fn dir_name(&self, d: DirId) -> &str {
        &self.directions[d.idx()]
    }

    pub fn atom_name(&self, a: usize) -> &str {
        &self.atoms[a]
    }

    pub fn atom_names(&self) -> impl Iterator<Item = &str> {
        self.atoms.iter().map(|s| s.as_str())
    }

    pub fn loc_id(&self, name: &str) -> Option<LocId> {
        self.locations
            .iter()
            .position(|l| l == name)
            .map(|i| LocId(i as u32))
    }

    pub fn dir_id(&self, name: &str) -> Option<DirId> {
        self.directions
            .iter()
            .position(|d| d == name)
            .map(|i| DirId(i as u32))
    }

    pub fn atom_id(&self, name: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a == name)
    }

    /// Total successor function.
    pub fn successor(&self, l: LocId, d: DirId) -> LocId {
        self.succ[l.idx()][d.idx()]
    }

    /// Atom indices holding at a location.
    pub fn label(&self, l: LocId) -> &BTreeSet<usize> {
        &self.labels[l.idx()]
    }

    pub fn has_atom(&self, l: LocId, atom: usize) -> bool {
        self.labels[l.idx()].contains(&atom)
    }

    pub fn locations(&self) -> impl Iterator<Item = LocId> {
        (0..self.locations.len() as u32).map(LocId)
    }

    pub fn directions(&self) -> impl Iterator<Item = DirId> {
        (0..self.directions.len() as u32).map(DirId)
    }

    /// The unique path from the initial location following `dirs`; returns
    /// `dirs.len() + 1` locations starting with the initial one.
    pub fn run_prefix(&self, dirs: &[DirId]) -> Vec<LocId> {
        let mut path = Vec::with_capacity(dirs.len() + 1);
        let mut cur = self.initial;
        path.push(cur);
        for &d in dirs {
            cur = self.successor(cur, d);
            path.push(cur);
        }
        path
    }
}

impl fmt::Display for TransitionSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn check_ident(name: &str) -> Result<(), String> {
    let mut chars = name.chars();
    let ok_first = chars
        .next()
        .map(|c| c.is_ascii_alphabetic() || c == '_')
        .unwrap_or(false);
    if !ok_first || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("invalid identifier `{name}`"));
    }
    Ok(())
}

fn lookup(
    index: &HashMap<String, usize>,
    name: &str,
    kind: &'static str,
    line: usize,
) -> Result<usize, SystemError> {
    check_ident(name).map_err(|msg| SystemError::Syntax { line, msg })?;
    index.get(name).copied().ok_or(SystemError::Undeclared {
        line,
        kind,
        name: name.to_string(),
    })
}
