//! Word lattices: acyclic transition networks with one start and one final
//! state whose arcs carry words or epsilon.
//!
//! Lattices are built with four combinators ([`wrd`], [`epsilon`], [`seq`],
//! [`or`]) and are immutable afterwards. State ids are dense, and the order of
//! each state's outgoing arcs is part of the value: DEFAULT extraction follows
//! the first arc at every state.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

pub type StateId = usize;

/// A surface token. Non-empty, free of whitespace, and never `*` (reserved
/// for epsilon in the text format).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Arc<str>);

impl Word {
    pub fn new(token: &str) -> Result<Self, LatticeError> {
        if token.is_empty() || token.chars().any(char::is_whitespace) || token == "*" {
            return Err(LatticeError::BadWord(token.to_string()));
        }
        Ok(Word(Arc::from(token)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    Word(Word),
    Epsilon,
}

impl Label {
    pub fn word(&self) -> Option<&Word> {
        match self {
            Label::Word(w) => Some(w),
            Label::Epsilon => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Word(w) => f.write_str(w.as_str()),
            Label::Epsilon => f.write_str("*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub target: StateId,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    start: StateId,
    final_state: StateId,
    arcs: Vec<Vec<Transition>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoStates,
    StartOutOfRange(StateId),
    FinalOutOfRange(StateId),
    StartIsFinal(StateId),
    TargetOutOfRange { from: StateId, to: StateId },
    /// States along a cycle, first state repeated implicitly.
    Cycle(Vec<StateId>),
    Unreachable(StateId),
    /// A state from which the final state cannot be reached.
    NotCoReachable(StateId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "lattice has no states"),
            Violation::StartOutOfRange(s) => write!(f, "start state {s} out of range"),
            Violation::FinalOutOfRange(s) => write!(f, "final state {s} out of range"),
            Violation::StartIsFinal(s) => write!(f, "start and final are the same state {s}"),
            Violation::TargetOutOfRange { from, to } => {
                write!(f, "arc from {from} targets missing state {to}")
            }
            Violation::Cycle(states) => {
                let ids: Vec<String> = states.iter().map(ToString::to_string).collect();
                write!(f, "cycle {} -> {}", ids.join(" -> "), states[0])
            }
            Violation::Unreachable(s) => write!(f, "state {s} is unreachable from start"),
            Violation::NotCoReachable(s) => write!(f, "final state is unreachable from state {s}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("invalid word token {0:?}")]
    BadWord(String),
    #[error("combinator needs at least one part")]
    NoParts,
    #[error("invalid lattice: {0}")]
    Invalid(ValidationReport),
}

pub fn wrd(token: &str) -> Result<Lattice, LatticeError> {
    Ok(Lattice::single(Label::Word(Word::new(token)?)))
}

pub fn epsilon() -> Lattice {
    Lattice::single(Label::Epsilon)
}

/// Concatenation: the final state of each part is merged with the start state
/// of the next.
pub fn seq(parts: Vec<Lattice>) -> Result<Lattice, LatticeError> {
    if parts.is_empty() {
        return Err(LatticeError::NoParts);
    }
    let mut arcs: Vec<Vec<Transition>> = Vec::new();
    let mut start = 0;
    let mut joint: Option<StateId> = None;
    for (i, part) in parts.into_iter().enumerate() {
        let mut map = vec![0; part.arcs.len()];
        for (s, slot) in map.iter_mut().enumerate() {
            *slot = match joint {
                Some(j) if s == part.start => j,
                _ => {
                    arcs.push(Vec::new());
                    arcs.len() - 1
                }
            };
        }
        if i == 0 {
            start = map[part.start];
        }
        for (s, out) in part.arcs.into_iter().enumerate() {
            let from = map[s];
            arcs[from].extend(out.into_iter().map(|t| Transition { target: map[t.target], label: t.label }));
        }
        joint = Some(map[part.final_state]);
    }
    Ok(Lattice { start, final_state: joint.expect("at least one part"), arcs })
}

/// Branching: all alternatives share one new start and one new final state.
/// Alternative `i`'s arcs come before alternative `i + 1`'s at the shared start.
/// Identical branches are kept as separate paths.
pub fn or(alts: Vec<Lattice>) -> Result<Lattice, LatticeError> {
    if alts.is_empty() {
        return Err(LatticeError::NoParts);
    }
    let (start, final_state) = (0, 1);
    let mut arcs: Vec<Vec<Transition>> = vec![Vec::new(), Vec::new()];
    for alt in alts {
        let mut map = vec![0; alt.arcs.len()];
        for (s, slot) in map.iter_mut().enumerate() {
            *slot = if s == alt.start {
                start
            } else if s == alt.final_state {
                final_state
            } else {
                arcs.push(Vec::new());
                arcs.len() - 1
            };
        }
        for (s, out) in alt.arcs.into_iter().enumerate() {
            let from = map[s];
            arcs[from].extend(out.into_iter().map(|t| Transition { target: map[t.target], label: t.label }));
        }
    }
    Ok(Lattice { start, final_state, arcs })
}

impl Lattice {
    fn single(label: Label) -> Self {
        Lattice { start: 0, final_state: 1, arcs: vec![vec![Transition { target: 1, label }], Vec::new()] }
    }

    /// Assembles a lattice from raw parts and validates it.
    pub fn from_parts(
        start: StateId,
        final_state: StateId,
        arcs: Vec<Vec<Transition>>,
    ) -> Result<Self, LatticeError> {
        let lattice = Self::from_parts_unchecked(start, final_state, arcs);
        let report = lattice.validate();
        if report.is_ok() {
            Ok(lattice)
        } else {
            Err(LatticeError::Invalid(report))
        }
    }

    /// Assembles a lattice without checking any invariant. Operations that need
    /// a valid lattice report [`LatticeError::Invalid`] when handed one of these.
    pub fn from_parts_unchecked(start: StateId, final_state: StateId, arcs: Vec<Vec<Transition>>) -> Self {
        Lattice { start, final_state, arcs }
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn final_state(&self) -> StateId {
        self.final_state
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn arcs_from(&self, state: StateId) -> &[Transition] {
        &self.arcs[state]
    }

    pub fn transitions(&self) -> impl Iterator<Item = (StateId, &Transition)> {
        self.arcs.iter().enumerate().flat_map(|(s, out)| out.iter().map(move |t| (s, t)))
    }

    /// Distinct word labels, sorted.
    pub fn vocabulary(&self) -> Vec<Word> {
        let set: BTreeSet<&Word> = self.transitions().filter_map(|(_, t)| t.label.word()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n = self.arcs.len();
        if n == 0 {
            violations.push(Violation::NoStates);
            return ValidationReport { violations };
        }
        if self.start >= n {
            violations.push(Violation::StartOutOfRange(self.start));
        }
        if self.final_state >= n {
            violations.push(Violation::FinalOutOfRange(self.final_state));
        }
        for (s, t) in self.transitions() {
            if t.target >= n {
                violations.push(Violation::TargetOutOfRange { from: s, to: t.target });
            }
        }
        if !violations.is_empty() {
            return ValidationReport { violations };
        }
        if self.start == self.final_state {
            violations.push(Violation::StartIsFinal(self.start));
        }
        if let Some(cycle) = self.find_cycle() {
            violations.push(Violation::Cycle(cycle));
        }
        let forward = self.reach(self.start, false);
        let backward = self.reach(self.final_state, true);
        for s in 0..n {
            if !forward[s] {
                violations.push(Violation::Unreachable(s));
            }
            if !backward[s] {
                violations.push(Violation::NotCoReachable(s));
            }
        }
        ValidationReport { violations }
    }

    fn reach(&self, from: StateId, reverse: bool) -> Vec<bool> {
        let n = self.arcs.len();
        let mut adj: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for (s, t) in self.transitions() {
            if reverse {
                adj[t.target].push(s);
            } else {
                adj[s].push(t.target);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(s) = stack.pop() {
            for &t in &adj[s] {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen
    }

    fn find_cycle(&self) -> Option<Vec<StateId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let n = self.arcs.len();
        let mut mark = vec![Mark::New; n];
        for root in 0..n {
            if mark[root] != Mark::New {
                continue;
            }
            // (state, next arc index)
            let mut stack: Vec<(StateId, usize)> = vec![(root, 0)];
            mark[root] = Mark::Active;
            while let Some(&mut (s, ref mut i)) = stack.last_mut() {
                if let Some(t) = self.arcs[s].get(*i) {
                    *i += 1;
                    match mark[t.target] {
                        Mark::New => {
                            mark[t.target] = Mark::Active;
                            stack.push((t.target, 0));
                        }
                        Mark::Active => {
                            let at = stack.iter().position(|&(x, _)| x == t.target).unwrap();
                            return Some(stack[at..].iter().map(|&(x, _)| x).collect());
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark[s] = Mark::Done;
                    stack.pop();
                }
            }
        }
        None
    }

    /// Topological order of all states, or the validation failure.
    pub fn topological_order(&self) -> Result<Vec<StateId>, LatticeError> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(LatticeError::Invalid(report));
        }
        let n = self.arcs.len();
        let mut indegree = vec![0usize; n];
        for (_, t) in self.transitions() {
            indegree[t.target] += 1;
        }
        let mut ready: Vec<StateId> = (0..n).filter(|&s| indegree[s] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = ready.pop() {
            order.push(s);
            for t in self.arcs[s].iter().rev() {
                indegree[t.target] -= 1;
                if indegree[t.target] == 0 {
                    ready.push(t.target);
                }
            }
        }
        debug_assert_eq!(order.len(), n);
        Ok(order)
    }

    /// Number of complete paths starting at each state.
    pub fn suffix_path_counts(&self) -> Result<Vec<BigUint>, LatticeError> {
        let order = self.topological_order()?;
        let mut counts = vec![BigUint::zero(); self.arcs.len()];
        counts[self.final_state] = BigUint::one();
        for &s in order.iter().rev() {
            if s == self.final_state {
                continue;
            }
            let mut total = BigUint::zero();
            for t in &self.arcs[s] {
                total += &counts[t.target];
            }
            counts[s] = total;
        }
        Ok(counts)
    }

    /// Exact number of start-to-final arc sequences.
    pub fn count_paths(&self) -> Result<BigUint, LatticeError> {
        let mut counts = self.suffix_path_counts()?;
        Ok(std::mem::take(&mut counts[self.start]))
    }

    pub fn stats(&self) -> Result<LatticeStats, LatticeError> {
        let order = self.topological_order()?;
        let vocab = self.vocabulary();
        let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();

        // Words that can be emitted first when leaving each state, looking
        // through epsilon arcs.
        let mut first: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.arcs.len()];
        for &s in order.iter().rev() {
            let mut set = BTreeSet::new();
            for t in &self.arcs[s] {
                match &t.label {
                    Label::Word(w) => {
                        set.insert(index[w.as_str()]);
                    }
                    Label::Epsilon => set.extend(first[t.target].iter().copied()),
                }
            }
            first[s] = set;
        }
        let mut bigrams = BTreeSet::new();
        for (_, t) in self.transitions() {
            if let Label::Word(w) = &t.label {
                let a = index[w.as_str()];
                bigrams.extend(first[t.target].iter().map(|&b| (a, b)));
            }
        }
        Ok(LatticeStats {
            nodes: self.num_states(),
            arcs: self.num_arcs(),
            paths: self.count_paths()?,
            distinct_unigrams: vocab.len(),
            distinct_bigrams: bigrams.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeStats {
    pub nodes: usize,
    pub arcs: usize,
    pub paths: BigUint,
    pub distinct_unigrams: usize,
    pub distinct_bigrams: usize,
}

/// Inserts `,` between groups of three digits.
pub fn group_digits(digits: &str) -> String {
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

impl fmt::Display for LatticeStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} nodes, {} arcs, {} paths;\n{} distinct unigrams, {} distinct bigrams.",
            group_digits(&self.nodes.to_string()),
            group_digits(&self.arcs.to_string()),
            group_digits(&self.paths.to_string()),
            group_digits(&self.distinct_unigrams.to_string()),
            group_digits(&self.distinct_bigrams.to_string()),
        )
    }
}

pub const FORMAT_HEADER: &str = "LATTICE v1";

pub fn write_lattice(lattice: &Lattice) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_HEADER}");
    let _ = writeln!(out, "states {}", lattice.num_states());
    let _ = writeln!(out, "start {}", lattice.start);
    let _ = writeln!(out, "final {}", lattice.final_state);
    for (s, t) in lattice.transitions() {
        let _ = writeln!(out, "arc {} {} {}", s, t.target, t.label);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReadLatticeError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid lattice: {0}")]
    Invalid(ValidationReport),
}

pub fn read_lattice(text: &str) -> Result<Lattice, ReadLatticeError> {
    let syntax = |line: usize, message: String| ReadLatticeError::Syntax { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());

    match lines.next() {
        Some((_, l)) if l.trim() == FORMAT_HEADER => {}
        Some((n, l)) => return Err(syntax(n, format!("expected '{FORMAT_HEADER}', found {l:?}"))),
        None => return Err(syntax(1, "empty lattice file".into())),
    }

    let mut states: Option<usize> = None;
    let mut start: Option<StateId> = None;
    let mut final_state: Option<StateId> = None;
    let mut arcs: Vec<Vec<Transition>> = Vec::new();

    for (n, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let number = |field: Option<&&str>| -> Result<usize, ReadLatticeError> {
            let f = field.ok_or_else(|| syntax(n, "missing number".into()))?;
            f.parse().map_err(|_| syntax(n, format!("bad number {f:?}")))
        };
        let set_once = |slot: &mut Option<usize>, value: usize, what: &str| {
            if slot.replace(value).is_some() {
                Err(syntax(n, format!("duplicate '{what}' line")))
            } else {
                Ok(())
            }
        };
        match fields[0] {
            "states" if fields.len() == 2 => {
                let count = number(fields.get(1))?;
                set_once(&mut states, count, "states")?;
                arcs = vec![Vec::new(); count];
            }
            "start" if fields.len() == 2 => set_once(&mut start, number(fields.get(1))?, "start")?,
            "final" if fields.len() == 2 => set_once(&mut final_state, number(fields.get(1))?, "final")?,
            "arc" if fields.len() == 4 => {
                let count = states.ok_or_else(|| syntax(n, "'arc' before 'states'".into()))?;
                let from = number(fields.get(1))?;
                let to = number(fields.get(2))?;
                if from >= count || to >= count {
                    return Err(syntax(n, format!("arc {from} -> {to} outside {count} states")));
                }
                let label = match fields[3] {
                    "*" => Label::Epsilon,
                    w => Label::Word(Word::new(w).map_err(|e| syntax(n, e.to_string()))?),
                };
                arcs[from].push(Transition { target: to, label });
            }
            _ => return Err(syntax(n, format!("unrecognized line {line:?}"))),
        }
    }

    let start = start.ok_or_else(|| syntax(0, "missing 'start' line".into()))?;
    let final_state = final_state.ok_or_else(|| syntax(0, "missing 'final' line".into()))?;
    if states.is_none() {
        return Err(syntax(0, "missing 'states' line".into()));
    }
    let lattice = Lattice::from_parts_unchecked(start, final_state, arcs);
    let report = lattice.validate();
    if report.is_ok() {
        Ok(lattice)
    } else {
        Err(ReadLatticeError::Invalid(report))
    }
}
