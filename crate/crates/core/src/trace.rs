//! Permission traces and boolean formulas over them.
//!
//! A trace records the promotions (`+p`) and demotions (`-p`) accumulated
//! from enclosing permission tests. Applying consistent traces is
//! order-insensitive for distinct permissions, and repeated literals on the
//! same permission only take effect once, so a trace is stored canonically as
//! a pair of disjoint bitmasks. Appending a literal for a permission the
//! trace already decides is a no-op ("first literal wins").

use std::fmt;

use thiserror::Error;

use crate::perms::{Perm, PermSet, PermissionUniverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub perm: Perm,
    pub sign: Sign,
}

impl Literal {
    pub fn plus(perm: Perm) -> Self {
        Literal { perm, sign: Sign::Plus }
    }

    pub fn minus(perm: Perm) -> Self {
        Literal { perm, sign: Sign::Minus }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("inconsistent permission trace: permission #{0} occurs more than once")]
pub struct InconsistentTrace(pub usize);

/// A consistent permission trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PermissionTrace {
    pos: PermSet,
    neg: PermSet,
}

impl PermissionTrace {
    pub const EPSILON: PermissionTrace = PermissionTrace { pos: PermSet::EMPTY, neg: PermSet::EMPTY };

    pub fn new(pos: PermSet, neg: PermSet) -> Option<Self> {
        pos.intersection(neg).is_empty().then_some(PermissionTrace { pos, neg })
    }

    pub fn literal(lit: Literal) -> Self {
        PermissionTrace::EPSILON.then(lit)
    }

    /// Builds a trace from a literal sequence; each permission may occur once.
    pub fn from_literals(lits: &[Literal]) -> Result<Self, InconsistentTrace> {
        let mut t = PermissionTrace::EPSILON;
        for l in lits {
            if t.decides(l.perm).is_some() {
                return Err(InconsistentTrace(l.perm.index()));
            }
            t = t.then(*l);
        }
        Ok(t)
    }

    /// The trace only `set` entails: `+p` for members and `-p` for the rest of `universe`.
    pub fn exact(set: PermSet, universe: PermSet) -> Self {
        PermissionTrace { pos: set.intersection(universe), neg: universe.difference(set) }
    }

    /// Permissions the trace grants.
    pub fn granted(self) -> PermSet {
        self.pos
    }

    /// Permissions the trace revokes.
    pub fn revoked(self) -> PermSet {
        self.neg
    }

    pub fn domain(self) -> PermSet {
        self.pos.union(self.neg)
    }

    pub fn is_empty(self) -> bool {
        self.domain().is_empty()
    }

    pub fn len(self) -> usize {
        self.domain().len()
    }

    pub fn decides(self, p: Perm) -> Option<Sign> {
        if self.pos.contains(p) {
            Some(Sign::Plus)
        } else if self.neg.contains(p) {
            Some(Sign::Minus)
        } else {
            None
        }
    }

    /// Appends a literal; a no-op when the permission is already decided.
    pub fn then(self, lit: Literal) -> Self {
        if self.decides(lit.perm).is_some() {
            return self;
        }
        match lit.sign {
            Sign::Plus => PermissionTrace { pos: self.pos.with(lit.perm), neg: self.neg },
            Sign::Minus => PermissionTrace { pos: self.pos, neg: self.neg.with(lit.perm) },
        }
    }

    /// Appends every literal of `other`, keeping this trace's decisions.
    pub fn then_trace(self, other: PermissionTrace) -> Self {
        PermissionTrace {
            pos: self.pos.union(other.pos.difference(self.neg)),
            neg: self.neg.union(other.neg.difference(self.pos)),
        }
    }

    /// Boolean conjunction; `None` when the two traces contradict each other.
    pub fn conjoin(self, other: PermissionTrace) -> Option<Self> {
        PermissionTrace::new(self.pos.union(other.pos), self.neg.union(other.neg))
    }

    /// Literals of `self` that do not occur in `other`.
    pub fn minus(self, other: PermissionTrace) -> Self {
        PermissionTrace { pos: self.pos.difference(other.pos), neg: self.neg.difference(other.neg) }
    }

    /// Literals restricted to the permissions in `perms`.
    pub fn restrict(self, perms: PermSet) -> Self {
        PermissionTrace { pos: self.pos.intersection(perms), neg: self.neg.intersection(perms) }
    }

    /// `P ⊨ Λ`: `P` holds every promoted permission and none of the demoted ones.
    pub fn entailed_by(self, set: PermSet) -> bool {
        self.pos.is_subset(set) && set.intersection(self.neg).is_empty()
    }

    /// `self ⊨ other` as formulas: every literal of `other` occurs in `self`.
    pub fn implies(self, other: PermissionTrace) -> bool {
        other.pos.is_subset(self.pos) && other.neg.is_subset(self.neg)
    }

    /// The permission set a base type is read at after applying this trace at `set`.
    #[inline]
    pub fn act(self, set: PermSet) -> PermSet {
        set.union(self.pos).difference(self.neg)
    }

    pub fn literals(self) -> impl Iterator<Item = Literal> {
        let dom = self.domain();
        let pos = self.pos;
        dom.iter().map(move |p| if pos.contains(p) { Literal::plus(p) } else { Literal::minus(p) })
    }

    /// Satisfiable within a universe with `n` permissions.
    pub fn is_satisfiable_in(self, n: usize) -> bool {
        let full = PermSet::from_bits(((1u64 << n) - 1) as u32);
        self.domain().is_subset(full)
    }

    /// Every permission set of an `n`-permission universe that entails this trace.
    pub fn cells(self, n: usize) -> impl Iterator<Item = PermSet> {
        let free = PermSet::from_bits(((1u64 << n) - 1) as u32).difference(self.domain());
        let pos = self.pos;
        subsets(free).map(move |s| s.union(pos))
    }

    pub fn show(self, u: &PermissionUniverse) -> String {
        if self.is_empty() {
            return "ε".to_string();
        }
        self.literals()
            .map(|l| match l.sign {
                Sign::Plus => format!("+{}", u.name(l.perm)),
                Sign::Minus => format!("-{}", u.name(l.perm)),
            })
            .collect::<Vec<_>>()
            .join("")
    }
}

/// Enumerates all subsets of `mask`.
pub fn subsets(mask: PermSet) -> impl Iterator<Item = PermSet> {
    let m = mask.bits();
    let mut next = Some(0u32);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == m { None } else { Some(((cur | !m).wrapping_add(1)) & m) };
        Some(PermSet::from_bits(cur))
    })
}

impl fmt::Display for PermissionTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("ε");
        }
        for l in self.literals() {
            let s = if l.sign == Sign::Plus { '+' } else { '-' };
            write!(f, "{s}#{}", l.perm.index())?;
        }
        Ok(())
    }
}

/// A set of permission sets, as a bitset over `2^n` cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellSet {
    n: usize,
    words: Vec<u64>,
}

impl CellSet {
    pub fn empty(n: usize) -> Self {
        CellSet { n, words: vec![0; (1usize << n).div_ceil(64)] }
    }

    pub fn full(n: usize) -> Self {
        let mut s = CellSet::empty(n);
        for c in 0..(1usize << n) {
            s.insert(PermSet::from_bits(c as u32));
        }
        s
    }

    pub fn of_trace(n: usize, t: PermissionTrace) -> Self {
        let mut s = CellSet::empty(n);
        for c in t.cells(n) {
            s.insert(c);
        }
        s
    }

    pub fn insert(&mut self, c: PermSet) {
        self.words[c.index() / 64] |= 1 << (c.index() % 64);
    }

    pub fn contains(&self, c: PermSet) -> bool {
        self.words[c.index() / 64] & (1 << (c.index() % 64)) != 0
    }

    pub fn union_with(&mut self, o: &CellSet) {
        for (a, b) in self.words.iter_mut().zip(&o.words) {
            *a |= *b;
        }
    }

    pub fn intersect_with(&mut self, o: &CellSet) {
        for (a, b) in self.words.iter_mut().zip(&o.words) {
            *a &= *b;
        }
    }

    pub fn complement(&self) -> CellSet {
        let mut s = CellSet::full(self.n);
        for (a, b) in s.words.iter_mut().zip(&self.words) {
            *a &= !*b;
        }
        s
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = PermSet> + '_ {
        (0..(1usize << self.n)).map(|c| PermSet::from_bits(c as u32)).filter(|c| self.contains(*c))
    }
}

/// A disjunction of consistent traces, paired with its denotation as a set
/// of permission sets. The denotation is authoritative for satisfiability
/// and entailment; the disjuncts mirror the symbolic rule manipulations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFormula {
    n: usize,
    disjuncts: Vec<PermissionTrace>,
    cells: CellSet,
}

impl TraceFormula {
    pub fn falsum(n: usize) -> Self {
        TraceFormula { n, disjuncts: Vec::new(), cells: CellSet::empty(n) }
    }

    pub fn verum(n: usize) -> Self {
        TraceFormula::from_trace(n, PermissionTrace::EPSILON)
    }

    pub fn from_trace(n: usize, t: PermissionTrace) -> Self {
        TraceFormula { n, disjuncts: vec![t], cells: CellSet::of_trace(n, t) }
    }

    fn from_disjuncts(n: usize, ds: Vec<PermissionTrace>) -> Self {
        let mut f = TraceFormula::falsum(n);
        for d in ds {
            f.push(d);
        }
        f.simplify();
        f
    }

    fn push(&mut self, d: PermissionTrace) {
        self.cells.union_with(&CellSet::of_trace(self.n, d));
        self.disjuncts.push(d);
    }

    /// Drops duplicate disjuncts and disjuncts absorbed by a weaker one.
    fn simplify(&mut self) {
        self.disjuncts.sort();
        self.disjuncts.dedup();
        let ds = std::mem::take(&mut self.disjuncts);
        let keep: Vec<PermissionTrace> = ds
            .iter()
            .enumerate()
            .filter(|(i, d)| !ds.iter().enumerate().any(|(j, e)| j != *i && d.implies(*e) && (!e.implies(**d) || j < *i)))
            .map(|(_, d)| *d)
            .collect();
        self.disjuncts = keep;
    }

    /// `and(Λ1, Λ2)` as a formula (empty when they contradict).
    pub fn and_traces(n: usize, a: PermissionTrace, b: PermissionTrace) -> Self {
        match a.conjoin(b) {
            Some(t) => TraceFormula::from_trace(n, t),
            None => TraceFormula::falsum(n),
        }
    }

    /// DNF of `¬Λ`: one single-literal disjunct per negated literal.
    pub fn neg_dnf(n: usize, t: PermissionTrace) -> Self {
        let ds = t
            .literals()
            .map(|l| PermissionTrace::literal(Literal { perm: l.perm, sign: l.sign.flip() }))
            .collect();
        TraceFormula::from_disjuncts(n, ds)
    }

    /// `(Λ1 ∧ Λ2) - Λ2`: literals of `Λ1` absent from `Λ2`.
    pub fn diff(a: PermissionTrace, b: PermissionTrace) -> PermissionTrace {
        a.minus(b)
    }

    pub fn and(&self, other: &TraceFormula) -> TraceFormula {
        let mut ds = Vec::new();
        for a in &self.disjuncts {
            for b in &other.disjuncts {
                if let Some(c) = a.conjoin(*b) {
                    ds.push(c);
                }
            }
        }
        let f = TraceFormula::from_disjuncts(self.n, ds);
        debug_assert_eq!(f.cells, {
            let mut c = self.cells.clone();
            c.intersect_with(&other.cells);
            c
        });
        f
    }

    pub fn and_trace(&self, t: PermissionTrace) -> TraceFormula {
        self.and(&TraceFormula::from_trace(self.n, t))
    }

    pub fn or(&self, other: &TraceFormula) -> TraceFormula {
        let mut ds = self.disjuncts.clone();
        ds.extend(other.disjuncts.iter().copied());
        TraceFormula::from_disjuncts(self.n, ds)
    }

    pub fn not(&self) -> TraceFormula {
        let mut acc = TraceFormula::verum(self.n);
        for d in &self.disjuncts {
            acc = acc.and(&TraceFormula::neg_dnf(self.n, *d));
        }
        debug_assert_eq!(acc.cells, self.cells.complement());
        acc
    }

    /// An equivalent formula whose disjuncts are pairwise unsatisfiable together.
    pub fn disjoint(&self) -> TraceFormula {
        let mut out: Vec<PermissionTrace> = Vec::new();
        for d in &self.disjuncts {
            let mut pieces = vec![*d];
            for r in &out {
                pieces = pieces.into_iter().flat_map(|x| subtract(x, *r)).collect();
            }
            out.extend(pieces);
        }
        let f = TraceFormula { n: self.n, disjuncts: out, cells: self.cells.clone() };
        debug_assert!(f.is_disjoint());
        f
    }

    pub fn is_disjoint(&self) -> bool {
        self.disjuncts
            .iter()
            .enumerate()
            .all(|(i, a)| self.disjuncts[i + 1..].iter().all(|b| a.conjoin(*b).is_none()))
    }

    pub fn is_sat(&self) -> bool {
        !self.cells.is_empty()
    }

    pub fn entailed_by(&self, set: PermSet) -> bool {
        self.cells.contains(set)
    }

    pub fn disjuncts(&self) -> &[PermissionTrace] {
        &self.disjuncts
    }

    pub fn cells(&self) -> &CellSet {
        &self.cells
    }

    pub fn universe_size(&self) -> usize {
        self.n
    }

    pub fn show(&self, u: &PermissionUniverse) -> String {
        if self.disjuncts.is_empty() {
            return "⊥".to_string();
        }
        self.disjuncts.iter().map(|d| d.show(u)).collect::<Vec<_>>().join(" ∨ ")
    }
}

/// `x ∧ ¬r` as pairwise-disjoint cubes.
pub fn subtract(x: PermissionTrace, r: PermissionTrace) -> Vec<PermissionTrace> {
    if x.conjoin(r).is_none() {
        return vec![x];
    }
    let mut out = Vec::new();
    let mut prefix = x;
    for l in r.literals() {
        match prefix.decides(l.perm) {
            Some(s) if s == l.sign => continue,
            Some(_) => unreachable!("x and r are compatible"),
            None => {
                out.push(prefix.then(Literal { perm: l.perm, sign: l.sign.flip() }));
                prefix = prefix.then(l);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u3() -> PermissionUniverse {
        PermissionUniverse::new(&["p", "q", "r"]).unwrap()
    }

    fn tr(u: &PermissionUniverse, s: &str) -> PermissionTrace {
        let mut t = PermissionTrace::EPSILON;
        let mut chars = s.chars().peekable();
        while let Some(c) = chars.next() {
            let name = chars.next().unwrap().to_string();
            let p = u.perm(&name).unwrap();
            t = t.then(if c == '+' { Literal::plus(p) } else { Literal::minus(p) });
        }
        t
    }

    #[test]
    fn entailment() {
        let u = u3();
        let p = u.set_of(&["p"]).unwrap();
        assert!(tr(&u, "+p").entailed_by(p));
        assert!(!tr(&u, "+p+q").entailed_by(p));
        assert!(tr(&u, "+p-q").entailed_by(p));
    }

    #[test]
    fn inconsistent_literal_sequences() {
        let u = u3();
        let p = u.perm("p").unwrap();
        assert!(PermissionTrace::from_literals(&[Literal::plus(p), Literal::minus(p)]).is_err());
        assert!(PermissionTrace::from_literals(&[Literal::plus(p), Literal::plus(p)]).is_err());
        assert!(tr(&u, "+p").conjoin(tr(&u, "-p")).is_none());
        // ⊕p∧⊖p has no model
        assert!(!TraceFormula::and_traces(3, tr(&u, "+p"), tr(&u, "-p")).is_sat());
    }

    #[test]
    fn satisfiable_witness_by_enumeration() {
        let u = PermissionUniverse::new(&["p", "q"]).unwrap();
        let f = TraceFormula::from_trace(2, tr(&u, "+p-q"));
        let models: Vec<PermSet> = u.sets().filter(|s| f.entailed_by(*s)).collect();
        assert_eq!(models, vec![u.set_of(&["p"]).unwrap()]);
    }

    #[test]
    fn worked_dnf_example() {
        // dnf(+p ∧ ¬(+q ∧ -r)) = (+p ∧ -q) ∨ (+p ∧ +r)
        let u = u3();
        let f = TraceFormula::from_trace(3, tr(&u, "+p")).and(&TraceFormula::neg_dnf(3, tr(&u, "+q-r")));
        let mut got: Vec<PermissionTrace> = f.disjuncts().to_vec();
        got.sort();
        let mut want = vec![tr(&u, "+p-q"), tr(&u, "+p+r")];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn negating_epsilon_is_unsat() {
        let f = TraceFormula::neg_dnf(2, PermissionTrace::EPSILON);
        assert!(f.disjuncts().is_empty());
        assert!(!f.is_sat());
    }

    #[test]
    fn and_of_disjoint_literals() {
        let u = u3();
        let f = TraceFormula::and_traces(3, tr(&u, "+p"), tr(&u, "-q"));
        assert_eq!(f.disjuncts(), &[tr(&u, "+p-q")]);
    }

    #[test]
    fn diff_keeps_literals_missing_from_second() {
        let u = u3();
        assert_eq!(TraceFormula::diff(tr(&u, "+p-q"), tr(&u, "+p")), tr(&u, "-q"));
        assert_eq!(TraceFormula::diff(tr(&u, "+p"), tr(&u, "+p")), PermissionTrace::EPSILON);
    }

    #[test]
    fn disjoint_preserves_denotation() {
        let u = u3();
        let f = TraceFormula::from_trace(3, tr(&u, "+p"))
            .or(&TraceFormula::from_trace(3, tr(&u, "+q")))
            .or(&TraceFormula::from_trace(3, tr(&u, "-r")));
        let d = f.disjoint();
        assert!(d.is_disjoint());
        let mut cells = CellSet::empty(3);
        for t in d.disjuncts() {
            cells.union_with(&CellSet::of_trace(3, *t));
        }
        assert_eq!(&cells, f.cells());
    }

    #[test]
    fn first_literal_wins() {
        let u = u3();
        let p = u.perm("p").unwrap();
        let t = tr(&u, "+p").then(Literal::minus(p));
        assert_eq!(t, tr(&u, "+p"));
        assert_eq!(tr(&u, "+p").then_trace(tr(&u, "-p+q")), tr(&u, "+p+q"));
    }

    #[test]
    fn subsets_enumeration() {
        let m = PermSet::from_bits(0b1010);
        let all: Vec<u32> = subsets(m).map(|s| s.bits()).collect();
        assert_eq!(all, vec![0, 2, 8, 10]);
        assert_eq!(subsets(PermSet::EMPTY).count(), 1);
    }
}
