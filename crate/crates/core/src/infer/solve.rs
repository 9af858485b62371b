//! Symbolic constraint solving.
//!
//! The pipeline is generalize, decompose, saturate, merge, unify:
//!
//! * decomposition breaks terms down until every constraint relates a
//!   variable or ground type to a variable or ground type;
//! * alignment splits each simple constraint until both guards mention the
//!   same permissions, which makes every later rewrite an equivalence;
//! * saturation closes the bounds of each variable under transitivity, a
//!   variable-to-variable constraint being a bound of its smaller variable;
//! * merging partitions the permission space of each variable by which of its
//!   bounds are active, giving a full, disjoint family of intervals;
//! * unification instantiates variables from the largest down, each taking
//!   the least value its interval allows.
//!
//! A variable constrained against itself under different guards is split
//! into one slot per assignment of the permissions those guards mention,
//! and the pipeline restarts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lattice::{Lattice, Level};
use crate::perms::{PermSet, PermissionUniverse};
use crate::trace::{subsets, CellSet, PermissionTrace, Sign, TraceFormula};
use crate::types::BaseType;

use super::oracle::least_prefixpoint;
use super::term::{var_count, Constraint, GenConstraint, Substitution, Term, TypeVar};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Side {
    Var(TypeVar),
    Ground(BaseType),
}

impl Side {
    fn var(&self) -> Option<TypeVar> {
        match self {
            Side::Var(v) => Some(*v),
            Side::Ground(_) => None,
        }
    }

    fn term(&self) -> Term {
        match self {
            Side::Var(v) => Term::Var(*v),
            Side::Ground(g) => Term::Ground(g.clone()),
        }
    }
}

/// `(Λ_l, a ≤ Λ_r, b)` with `a`, `b` variables or ground types.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SimpleConstraint {
    pub lguard: PermissionTrace,
    pub lhs: Side,
    pub rguard: PermissionTrace,
    pub rhs: Side,
}

impl SimpleConstraint {
    pub fn general(&self) -> GenConstraint {
        GenConstraint { lguard: self.lguard, lhs: self.lhs.term(), rguard: self.rguard, rhs: self.rhs.term() }
    }

    fn is_aligned(&self) -> bool {
        self.lguard.domain() == self.rguard.domain()
    }
}

/// A ground constraint shown false at `witness`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refutation {
    pub constraint: GenConstraint,
    pub witness: PermSet,
}

/// `lo ≤ (guard, var) ≤ hi`, with every other variable at its solved value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub var: TypeVar,
    pub guard: PermissionTrace,
    pub lo: BaseType,
    pub hi: BaseType,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageTimings {
    pub decompose: Duration,
    pub saturate: Duration,
    pub merge: Duration,
    pub unify: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub constraints: usize,
    /// Simple constraints after decomposition and alignment.
    pub simple: usize,
    /// Distinct bounds once saturated.
    pub saturated: usize,
    pub intervals: usize,
    pub regroupings: usize,
    pub timings: StageTimings,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub theta: Substitution,
    pub intervals: Vec<Interval>,
    pub stats: SolveStats,
}

impl Solution {
    pub fn intervals_of(&self, v: TypeVar) -> impl Iterator<Item = &Interval> {
        self.intervals.iter().filter(move |i| i.var == v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    /// `core` indexes a minimal unsatisfiable subset of the input.
    #[error("constraints are unsatisfiable ({} constraint(s) in the core)", .core.len())]
    Unsat { core: Vec<usize>, witness: Option<(usize, PermSet)> },
    #[error("unsupported term shape: {0}")]
    Unsupported(String),
    #[error("internal solver error: {0}")]
    Internal(String),
}

/// Stage-level failures before they are turned into an unsat core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageError {
    Refuted(Refutation),
    EmptyInterval { var: TypeVar, guard: PermissionTrace, witness: PermSet },
    Unsupported(String),
}

pub fn generalize(cs: &[Constraint]) -> Vec<GenConstraint> {
    cs.iter().map(Constraint::generalize).collect()
}

fn full_trace(n: usize, set: PermSet) -> PermissionTrace {
    PermissionTrace::exact(set, PermSet::from_bits(((1u64 << n) - 1) as u32))
}

fn ground_violation(lat: &Lattice, n: usize, lg: PermissionTrace, l: &BaseType, rg: PermissionTrace, r: &BaseType) -> Option<PermSet> {
    PermissionUniverse::sets_of(n).find(|&p| !lat.leq(l.at(lg.act(p)), r.at(rg.act(p))))
}

fn collapse(lat: &Lattice, n: usize, t: &Term) -> BaseType {
    t.eval(lat, n, &Substitution::bottom(0, BaseType::embed(n, lat.bottom())))
}

/// Rewrites generalized constraints into simple ones.
pub fn decompose(lat: &Lattice, n: usize, cs: &[GenConstraint]) -> Result<Vec<SimpleConstraint>, StageError> {
    let mut out = Vec::new();
    let mut work: Vec<GenConstraint> = cs.iter().rev().cloned().collect();
    while let Some(c) = work.pop() {
        let GenConstraint { lguard: lg, lhs, rguard: rg, rhs } = c;
        match (lhs, rhs) {
            (Term::Join(a, b), r) => {
                work.push(GenConstraint { lguard: lg, lhs: *b, rguard: rg, rhs: r.clone() });
                work.push(GenConstraint { lguard: lg, lhs: *a, rguard: rg, rhs: r });
            }
            (l, Term::Meet(a, b)) => {
                work.push(GenConstraint { lguard: lg, lhs: l.clone(), rguard: rg, rhs: *b });
                work.push(GenConstraint { lguard: lg, lhs: l, rguard: rg, rhs: *a });
            }
            (Term::Project(t, p), r) => work.push(GenConstraint { lguard: full_trace(n, p), lhs: *t, rguard: rg, rhs: r }),
            (l, Term::Project(t, p)) => work.push(GenConstraint { lguard: lg, lhs: l, rguard: full_trace(n, p), rhs: *t }),
            (l, Term::Merge(p, a, b)) => match rg.decides(p) {
                Some(Sign::Plus) => work.push(GenConstraint { lguard: lg, lhs: l, rguard: rg, rhs: *a }),
                Some(Sign::Minus) => work.push(GenConstraint { lguard: lg, lhs: l, rguard: rg, rhs: *b }),
                None => {
                    use crate::trace::Literal;
                    let (plus, minus) = (Literal::plus(p), Literal::minus(p));
                    work.push(GenConstraint { lguard: lg.then(minus), lhs: l.clone(), rguard: rg.then(minus), rhs: *b });
                    work.push(GenConstraint { lguard: lg.then(plus), lhs: l, rguard: rg.then(plus), rhs: *a });
                }
            },
            (l @ (Term::Meet(..) | Term::Merge(..)), r) => {
                if !l.is_ground() {
                    return Err(StageError::Unsupported("meet or merge of variables on a left-hand side".into()));
                }
                work.push(GenConstraint { lguard: lg, lhs: Term::Ground(collapse(lat, n, &l)), rguard: rg, rhs: r });
            }
            (l, r @ Term::Join(..)) => {
                if !r.is_ground() {
                    return Err(StageError::Unsupported("join of variables on a right-hand side".into()));
                }
                work.push(GenConstraint { lguard: lg, lhs: l, rguard: rg, rhs: Term::Ground(collapse(lat, n, &r)) });
            }
            (Term::Ground(a), Term::Ground(b)) => {
                if let Some(w) = ground_violation(lat, n, lg, &a, rg, &b) {
                    let constraint = GenConstraint { lguard: lg, lhs: Term::Ground(a), rguard: rg, rhs: Term::Ground(b) };
                    return Err(StageError::Refuted(Refutation { constraint, witness: w }));
                }
            }
            (Term::Var(a), Term::Var(b)) if a == b && lg == rg => {}
            (l, r) => {
                let side = |t: Term| match t {
                    Term::Var(v) => Side::Var(v),
                    Term::Ground(g) => Side::Ground(g),
                    _ => unreachable!("every compound shape is handled above"),
                };
                out.push(SimpleConstraint { lguard: lg, lhs: side(l), rguard: rg, rhs: side(r) });
            }
        }
    }
    Ok(out)
}

/// Splits `c` on every sign assignment of `perms`, adding the assignment to both guards.
fn split(c: &SimpleConstraint, perms: PermSet) -> Vec<SimpleConstraint> {
    if perms.is_empty() {
        return vec![c.clone()];
    }
    subsets(perms)
        .map(|s| {
            let sigma = PermissionTrace::exact(s, perms);
            SimpleConstraint {
                lguard: c.lguard.then_trace(sigma),
                lhs: c.lhs.clone(),
                rguard: c.rguard.then_trace(sigma),
                rhs: c.rhs.clone(),
            }
        })
        .collect()
}

/// Splits a simple constraint until both guards have the same domain.
pub fn align(c: &SimpleConstraint) -> Vec<SimpleConstraint> {
    let (dl, dr) = (c.lguard.domain(), c.rguard.domain());
    let out = split(c, dl.union(dr).difference(dl.intersection(dr)));
    debug_assert!(out.iter().all(SimpleConstraint::is_aligned));
    out
}

/// A bound of a variable: `(vguard, var)` against `(tguard, term)`.
#[derive(Debug, Clone)]
struct Bound {
    vguard: PermissionTrace,
    term: Side,
    tguard: PermissionTrace,
}

enum Stop {
    Stage(StageError),
    Regroup(TypeVar, PermSet),
}

impl From<StageError> for Stop {
    fn from(e: StageError) -> Self {
        Stop::Stage(e)
    }
}

enum Atom {
    Ground(BaseType),
    Var(TypeVar, PermissionTrace),
}

struct Part {
    guard: PermissionTrace,
    lo: Vec<usize>,
    hi: Vec<usize>,
}

struct Attempt<'a> {
    lat: &'a Lattice,
    n: usize,
    regroup: &'a BTreeMap<TypeVar, PermSet>,
    next_var: u32,
    slots: HashMap<(TypeVar, PermissionTrace), TypeVar>,
    /// Slot variable to its original variable and slot assignment.
    slot_origin: BTreeMap<TypeVar, (TypeVar, PermissionTrace)>,
    seen: HashSet<SimpleConstraint>,
    lowers: BTreeMap<TypeVar, Vec<Bound>>,
    uppers: BTreeMap<TypeVar, Vec<Bound>>,
    stats: SolveStats,
}

impl<'a> Attempt<'a> {
    fn origin(&self, v: TypeVar) -> (TypeVar, PermissionTrace) {
        self.slot_origin.get(&v).copied().unwrap_or((v, PermissionTrace::EPSILON))
    }

    fn slot(&mut self, v: TypeVar, guard: PermissionTrace) -> TypeVar {
        let Some(d) = self.regroup.get(&v) else { return v };
        let sigma = guard.restrict(*d);
        debug_assert_eq!(sigma.domain(), *d);
        if let Some(s) = self.slots.get(&(v, sigma)) {
            return *s;
        }
        let s = TypeVar(self.next_var);
        self.next_var += 1;
        self.slots.insert((v, sigma), s);
        self.slot_origin.insert(s, (v, sigma));
        s
    }

    /// Replaces regrouped variables by their slots, splitting so each guard fixes the slot.
    fn slotify(&mut self, c: SimpleConstraint) -> Vec<SimpleConstraint> {
        let mut need = PermSet::EMPTY;
        for v in [c.lhs.var(), c.rhs.var()].into_iter().flatten() {
            if let Some(d) = self.regroup.get(&v) {
                need = need.union(*d);
            }
        }
        let pieces = split(&c, need.difference(c.lguard.domain()));
        pieces
            .into_iter()
            .map(|mut p| {
                if let Side::Var(v) = p.lhs {
                    p.lhs = Side::Var(self.slot(v, p.lguard));
                }
                if let Side::Var(v) = p.rhs {
                    p.rhs = Side::Var(self.slot(v, p.rguard));
                }
                p
            })
            .collect()
    }

    fn saturate(&mut self, initial: Vec<SimpleConstraint>) -> Result<(), Stop> {
        let mut work: Vec<SimpleConstraint> = initial.into_iter().rev().collect();
        while let Some(c) = work.pop() {
            debug_assert!(c.is_aligned());
            match (&c.lhs, &c.rhs) {
                (Side::Ground(a), Side::Ground(b)) => {
                    if let Some(w) = ground_violation(self.lat, self.n, c.lguard, a, c.rguard, b) {
                        return Err(StageError::Refuted(Refutation { constraint: c.general(), witness: w }).into());
                    }
                    continue;
                }
                (Side::Var(a), Side::Var(b)) if a == b => {
                    if c.lguard == c.rguard {
                        continue;
                    }
                    let differ = c.lguard.granted().union(c.rguard.granted()).difference(c.lguard.granted().intersection(c.rguard.granted()));
                    return Err(Stop::Regroup(self.origin(*a).0, differ));
                }
                _ => {}
            }
            if !self.seen.insert(c.clone()) {
                continue;
            }
            let (owner, bound, lower) = match (&c.lhs, &c.rhs) {
                (Side::Var(a), Side::Var(b)) if a < b => (*a, Bound { vguard: c.lguard, term: c.rhs.clone(), tguard: c.rguard }, false),
                (_, Side::Var(b)) => (*b, Bound { vguard: c.rguard, term: c.lhs.clone(), tguard: c.lguard }, true),
                (Side::Var(a), _) => (*a, Bound { vguard: c.lguard, term: c.rhs.clone(), tguard: c.rguard }, false),
                _ => unreachable!(),
            };
            if lower {
                for up in self.uppers.get(&owner).into_iter().flatten() {
                    work.extend(derive(&bound, up));
                }
                self.lowers.entry(owner).or_default().push(bound);
            } else {
                for lo in self.lowers.get(&owner).into_iter().flatten() {
                    work.extend(derive(lo, &bound));
                }
                self.uppers.entry(owner).or_default().push(bound);
            }
        }
        Ok(())
    }

    /// Cells of the permission space a slot variable covers.
    fn slot_guard(&self, v: TypeVar) -> PermissionTrace {
        self.origin(v).1
    }

    /// Refines `[domain]` by the variable-side guard of each bound.
    fn refine(&self, domain: PermissionTrace, bounds: &[Bound]) -> Vec<(PermissionTrace, Vec<usize>)> {
        let mut parts = vec![(domain, Vec::new())];
        for (i, b) in bounds.iter().enumerate() {
            let mut next = Vec::with_capacity(parts.len() + 1);
            for (t, active) in parts {
                match t.conjoin(b.vguard) {
                    None => next.push((t, active)),
                    Some(inside) => {
                        let mut with = active.clone();
                        with.push(i);
                        next.push((inside, with));
                        next.extend(crate::trace::subtract(t, b.vguard).into_iter().map(|r| (r, active.clone())));
                    }
                }
            }
            parts = next;
        }
        parts
    }

    /// Full, disjoint interval family for one (slot) variable.
    fn merge(&self, v: TypeVar) -> Result<Vec<Part>, StageError> {
        let empty = Vec::new();
        let lowers = self.lowers.get(&v).unwrap_or(&empty);
        let uppers = self.uppers.get(&v).unwrap_or(&empty);
        let domain = self.slot_guard(v);
        let lo_family = self.refine(domain, lowers);
        let hi_family = self.refine(domain, uppers);
        let mut parts: Vec<Part> = Vec::new();
        let mut index: HashMap<PermissionTrace, usize> = HashMap::new();
        for (t, lo) in &lo_family {
            for (s, hi) in &hi_family {
                let Some(g) = t.conjoin(*s) else { continue };
                match index.get(&g) {
                    Some(&k) => {
                        parts[k].lo.extend(lo);
                        parts[k].hi.extend(hi);
                    }
                    None => {
                        index.insert(g, parts.len());
                        parts.push(Part { guard: g, lo: lo.clone(), hi: hi.clone() });
                    }
                }
            }
        }
        self.validate_family(v, domain, &parts)?;
        for part in &parts {
            let lo: Vec<Atom> = part.lo.iter().map(|&i| self.atom(&lowers[i], part.guard)).collect();
            let hi: Vec<Atom> = part.hi.iter().map(|&i| self.atom(&uppers[i], part.guard)).collect();
            if lo.iter().chain(&hi).all(|a| matches!(a, Atom::Ground(_))) {
                let (l, h) = (self.fold(&lo, true, &|_, _| unreachable!()), self.fold(&hi, false, &|_, _| unreachable!()));
                if let Some(w) = part.guard.cells(self.n).find(|&q| !self.lat.leq(l.at(q), h.at(q))) {
                    return Err(StageError::EmptyInterval { var: self.origin(v).0, guard: part.guard, witness: w });
                }
            }
        }
        Ok(parts)
    }

    fn validate_family(&self, v: TypeVar, domain: PermissionTrace, parts: &[Part]) -> Result<(), StageError> {
        let n = self.n;
        let mut covered = CellSet::empty(n);
        let mut total = 0;
        for p in parts {
            let cells = TraceFormula::from_trace(n, p.guard);
            total += cells.cells().len();
            covered.union_with(cells.cells());
        }
        if total != covered.len() || covered != *TraceFormula::from_trace(n, domain).cells() {
            return Err(StageError::Unsupported(format!("interval family of {v} is not a partition")));
        }
        Ok(())
    }

    /// The contribution of a bound on the part `t`: `term·(tguard ∧ (t − vguard))`.
    fn atom(&self, b: &Bound, t: PermissionTrace) -> Atom {
        let guard = b.tguard.then_trace(t.minus(b.vguard));
        match &b.term {
            Side::Ground(g) => Atom::Ground(g.apply(guard)),
            Side::Var(w) => Atom::Var(*w, guard),
        }
    }

    fn fold(&self, atoms: &[Atom], join: bool, var: &dyn Fn(TypeVar, PermSet) -> Level) -> BaseType {
        let lat = self.lat;
        let unit = if join { lat.bottom() } else { lat.top() };
        BaseType::from_fn(self.n, |q| {
            atoms.iter().fold(unit, |acc, a| {
                let x = match a {
                    Atom::Ground(g) => g.at(q),
                    Atom::Var(w, guard) => var(*w, guard.act(q)),
                };
                if join {
                    lat.join(acc, x)
                } else {
                    lat.meet(acc, x)
                }
            })
        })
    }

    fn run(mut self, cs: &[GenConstraint], n_vars: usize) -> Result<(Substitution, Vec<Interval>, SolveStats), Stop> {
        let lat = self.lat;
        let n = self.n;
        let t0 = Instant::now();
        let simple = decompose(lat, n, cs)?;
        let mut initial = Vec::new();
        for c in &simple {
            for a in align(c) {
                initial.extend(self.slotify(a));
            }
        }
        self.stats.simple = initial.len();
        let t1 = Instant::now();
        self.saturate(initial)?;
        self.stats.saturated = self.seen.len();
        let t2 = Instant::now();

        let mut active: Vec<TypeVar> = self.lowers.keys().chain(self.uppers.keys()).copied().collect();
        active.sort();
        active.dedup();
        let mut families = BTreeMap::new();
        for &v in &active {
            families.insert(v, self.merge(v)?);
        }
        let t3 = Instant::now();

        // Largest variable first: every bound of a variable mentions only larger ones.
        let mut solved: BTreeMap<TypeVar, BaseType> = BTreeMap::new();
        let mut intervals: BTreeMap<TypeVar, Vec<(PermissionTrace, BaseType, BaseType)>> = BTreeMap::new();
        let empty = Vec::new();
        for &v in active.iter().rev() {
            let parts = &families[&v];
            let lowers = self.lowers.get(&v).unwrap_or(&empty);
            let uppers = self.uppers.get(&v).unwrap_or(&empty);
            // Bounds only mention larger variables; one without bounds of its own is bottom.
            let read = |w: TypeVar, q: PermSet| {
                debug_assert!(w > v);
                solved.get(&w).map_or(lat.bottom(), |t| t.at(q))
            };
            let mut value = BaseType::embed(n, lat.bottom());
            let mut fam = Vec::new();
            for part in parts {
                let lo: Vec<Atom> = part.lo.iter().map(|&i| self.atom(&lowers[i], part.guard)).collect();
                let hi: Vec<Atom> = part.hi.iter().map(|&i| self.atom(&uppers[i], part.guard)).collect();
                let (l, h) = (self.fold(&lo, true, &read), self.fold(&hi, false, &read));
                for q in part.guard.cells(n) {
                    if !lat.leq(l.at(q), h.at(q)) {
                        return Err(StageError::EmptyInterval { var: self.origin(v).0, guard: part.guard, witness: q }.into());
                    }
                    value.set(q, lat.meet(lat.join(l.at(q), lat.bottom()), h.at(q)));
                }
                fam.push((part.guard, l, h));
            }
            let orig = self.origin(v).0;
            intervals.entry(orig).or_default().extend(fam);
            solved.insert(v, value);
        }

        let total = n_vars.max(self.regroup.keys().map(|v| v.index() + 1).max().unwrap_or(0));
        let bottom = BaseType::embed(n, lat.bottom());
        let mut theta = Substitution::bottom(total, bottom.clone());
        for i in 0..total {
            let v = TypeVar(i as u32);
            let t = match self.regroup.get(&v) {
                None => solved.get(&v).cloned().unwrap_or_else(|| bottom.clone()),
                Some(d) => BaseType::from_fn(n, |q| {
                    let sigma = PermissionTrace::exact(q, *d);
                    self.slots.get(&(v, sigma)).and_then(|s| solved.get(s)).map_or(lat.bottom(), |t| t.at(q))
                }),
            };
            theta.set(v, t);
        }
        let t4 = Instant::now();

        let top = BaseType::embed(n, lat.top());
        let mut out = Vec::new();
        for i in 0..total {
            let v = TypeVar(i as u32);
            let fam = intervals.remove(&v).unwrap_or_default();
            let mut covered = CellSet::empty(n);
            for (g, _, _) in &fam {
                covered.union_with(&CellSet::of_trace(n, *g));
            }
            out.extend(fam.into_iter().map(|(guard, lo, hi)| Interval { var: v, guard, lo, hi }));
            // Slots (or whole variables) nothing constrains range over everything.
            let d = self.regroup.get(&v).copied().unwrap_or(PermSet::EMPTY);
            for s in subsets(d) {
                let sigma = PermissionTrace::exact(s, d);
                if !CellSet::of_trace(n, sigma).iter().any(|c| covered.contains(c)) {
                    out.push(Interval { var: v, guard: sigma, lo: bottom.clone(), hi: top.clone() });
                }
            }
        }
        self.stats.intervals = out.len();
        self.stats.timings = StageTimings { decompose: t1 - t0, saturate: t2 - t1, merge: t3 - t2, unify: t4 - t3 };
        Ok((theta, out, self.stats))
    }
}

/// Transitivity through the owner: `(Λ1, t1 ≤ Λr, v)` and `(Λl, v ≤ Λ2, t2)`
/// give `(Λ1 ⊲ (Λl − Λr), t1 ≤ Λ2 ⊲ (Λr − Λl), t2)` when `Λl ∧ Λr` is satisfiable.
fn derive(lo: &Bound, up: &Bound) -> Option<SimpleConstraint> {
    up.vguard.conjoin(lo.vguard)?;
    Some(SimpleConstraint {
        lguard: lo.tguard.then_trace(up.vguard.minus(lo.vguard)),
        lhs: lo.term.clone(),
        rguard: up.tguard.then_trace(lo.vguard.minus(up.vguard)),
        rhs: up.term.clone(),
    })
}

/// Solves a constraint set over variables `0..var_count(cs)`.
pub fn solve(lat: &Lattice, n: usize, cs: &[Constraint]) -> Result<Solution, SolveError> {
    solve_vars(lat, n, var_count(cs), cs)
}

/// Solves a constraint set, reporting a substitution over at least `n_vars` variables.
pub fn solve_vars(lat: &Lattice, n: usize, n_vars: usize, cs: &[Constraint]) -> Result<Solution, SolveError> {
    let n_vars = n_vars.max(var_count(cs));
    let general = generalize(cs);
    let mut regroup: BTreeMap<TypeVar, PermSet> = BTreeMap::new();
    let mut regroupings = 0;
    let outcome = loop {
        let attempt = Attempt {
            lat,
            n,
            regroup: &regroup,
            next_var: n_vars as u32,
            slots: HashMap::new(),
            slot_origin: BTreeMap::new(),
            seen: HashSet::new(),
            lowers: BTreeMap::new(),
            uppers: BTreeMap::new(),
            stats: SolveStats { constraints: cs.len(), regroupings, ..SolveStats::default() },
        };
        match attempt.run(&general, n_vars) {
            Ok(r) => break Ok(r),
            Err(Stop::Stage(e)) => break Err(e),
            Err(Stop::Regroup(v, perms)) => {
                let d = regroup.entry(v).or_insert(PermSet::EMPTY);
                let grown = d.union(perms);
                if grown == *d {
                    return Err(SolveError::Internal(format!("regrouping {v} made no progress")));
                }
                *d = grown;
                regroupings += 1;
            }
        }
    };
    match outcome {
        Ok((theta, intervals, stats)) => {
            if let Some((i, p)) = cs.iter().enumerate().find_map(|(i, c)| c.violation(lat, n, &theta).map(|p| (i, p))) {
                return Err(SolveError::Internal(format!("solution violates constraint {i} at {p:?}")));
            }
            Ok(Solution { theta, intervals, stats })
        }
        Err(StageError::Unsupported(m)) => Err(SolveError::Unsupported(m)),
        Err(StageError::Refuted(_) | StageError::EmptyInterval { .. }) => {
            let core = unsat_core(lat, n, n_vars, cs)?;
            let sub: Vec<Constraint> = core.iter().map(|&i| cs[i].clone()).collect();
            let witness = least_prefixpoint(lat, n, n_vars, &sub).1.first().map(|&(i, p)| (core[i], p));
            Err(SolveError::Unsat { core, witness })
        }
    }
}

/// Greedy deletion: drops each constraint whose removal keeps the rest unsatisfiable.
fn unsat_core(lat: &Lattice, n: usize, n_vars: usize, cs: &[Constraint]) -> Result<Vec<usize>, SolveError> {
    let unsat = |idx: &[usize]| {
        let sub: Vec<Constraint> = idx.iter().map(|&i| cs[i].clone()).collect();
        !least_prefixpoint(lat, n, n_vars, &sub).1.is_empty()
    };
    let mut core: Vec<usize> = (0..cs.len()).collect();
    if !unsat(&core) {
        return Err(SolveError::Internal("symbolic refutation of a satisfiable constraint set".into()));
    }
    let mut i = 0;
    while i < core.len() {
        let mut trial = core.clone();
        trial.remove(i);
        if unsat(&trial) {
            core = trial;
        } else {
            i += 1;
        }
    }
    Ok(core)
}
