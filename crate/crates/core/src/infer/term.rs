//! Type terms, guarded constraints and substitutions.

use std::fmt;

use crate::ast::Span;
use crate::lattice::{Lattice, Level};
use crate::perms::{Perm, PermSet, PermissionUniverse};
use crate::system::FunId;
use crate::trace::PermissionTrace;
use crate::types::{BaseType, Domain};

/// A type variable; its index is also its position in the variable order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeVar(pub u32);

impl TypeVar {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TypeVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "α{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarRole {
    Param { fun: FunId, index: usize, name: String },
    Return { fun: FunId },
    LetVar { fun: FunId, name: String },
    /// Variables made up by tests and tools rather than by generation.
    Free,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub role: VarRole,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(TypeVar),
    Ground(BaseType),
    Join(Box<Term>, Box<Term>),
    Meet(Box<Term>, Box<Term>),
    Merge(Perm, Box<Term>, Box<Term>),
    Project(Box<Term>, PermSet),
}

impl Term {
    pub fn join(a: Term, b: Term) -> Term {
        Term::Join(Box::new(a), Box::new(b))
    }

    pub fn meet(a: Term, b: Term) -> Term {
        Term::Meet(Box::new(a), Box::new(b))
    }

    pub fn merge(p: Perm, a: Term, b: Term) -> Term {
        Term::Merge(p, Box::new(a), Box::new(b))
    }

    pub fn project(t: Term, p: PermSet) -> Term {
        Term::Project(Box::new(t), p)
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Ground(_) => true,
            Term::Join(a, b) | Term::Meet(a, b) | Term::Merge(_, a, b) => a.is_ground() && b.is_ground(),
            Term::Project(t, _) => t.is_ground(),
        }
    }

    pub fn vars(&self, out: &mut Vec<TypeVar>) {
        match self {
            Term::Var(v) => out.push(*v),
            Term::Ground(_) => {}
            Term::Join(a, b) | Term::Meet(a, b) | Term::Merge(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            Term::Project(t, _) => t.vars(out),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Ground(_) => 1,
            Term::Join(a, b) | Term::Meet(a, b) | Term::Merge(_, a, b) => 1 + a.size() + b.size(),
            Term::Project(t, _) => 1 + t.size(),
        }
    }

    /// The value of the term at one permission set, reading variables through `var`.
    pub fn eval_at(&self, lat: &Lattice, cell: PermSet, var: &dyn Fn(TypeVar, PermSet) -> Level) -> Level {
        match self {
            Term::Var(v) => var(*v, cell),
            Term::Ground(t) => t.at(cell),
            Term::Join(a, b) => lat.join(a.eval_at(lat, cell, var), b.eval_at(lat, cell, var)),
            Term::Meet(a, b) => lat.meet(a.eval_at(lat, cell, var), b.eval_at(lat, cell, var)),
            Term::Merge(p, a, b) => {
                if cell.contains(*p) {
                    a.eval_at(lat, cell, var)
                } else {
                    b.eval_at(lat, cell, var)
                }
            }
            Term::Project(t, q) => t.eval_at(lat, *q, var),
        }
    }

    /// Instantiates the term under a substitution.
    pub fn eval(&self, lat: &Lattice, n: usize, theta: &Substitution) -> BaseType {
        BaseType::from_fn(n, |c| self.eval_at(lat, c, &|v, q| theta.get(v).at(q)))
    }

    pub fn show(&self, d: &Domain) -> String {
        match self {
            Term::Var(v) => v.to_string(),
            Term::Ground(t) => d.show(t),
            Term::Join(a, b) => format!("({} ⊔ {})", a.show(d), b.show(d)),
            Term::Meet(a, b) => format!("({} ⊓ {})", a.show(d), b.show(d)),
            Term::Merge(p, a, b) => format!("⋈({}, {}, {})", d.universe.name(*p), a.show(d), b.show(d)),
            Term::Project(t, q) => format!("app({}, {})", t.show(d), d.universe.show_set(*q)),
        }
    }
}

/// Why a constraint was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OriginKind {
    Assign,
    LetInit,
    Branch,
    Loop,
    CallArg(usize),
    CallResult,
    /// Hand-written or randomly generated.
    External,
}

impl fmt::Display for OriginKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OriginKind::Assign => write!(f, "assignment"),
            OriginKind::LetInit => write!(f, "letvar initializer"),
            OriginKind::Branch => write!(f, "if guard"),
            OriginKind::Loop => write!(f, "while guard"),
            OriginKind::CallArg(i) => write!(f, "call argument {}", i + 1),
            OriginKind::CallResult => write!(f, "call result"),
            OriginKind::External => write!(f, "constraint"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Origin {
    pub fun: Option<FunId>,
    pub span: Span,
    pub kind: OriginKind,
}

impl Origin {
    pub const EXTERNAL: Origin = Origin { fun: None, span: Span { start: 0, end: 0, line: 0, col: 0 }, kind: OriginKind::External };
}

/// `(Λ, t_l ≤ t_r)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub guard: PermissionTrace,
    pub lhs: Term,
    pub rhs: Term,
    pub origin: Origin,
}

impl Constraint {
    pub fn new(guard: PermissionTrace, lhs: Term, rhs: Term) -> Self {
        Constraint { guard, lhs, rhs, origin: Origin::EXTERNAL }
    }

    pub fn generalize(&self) -> GenConstraint {
        GenConstraint { lguard: self.guard, lhs: self.lhs.clone(), rguard: self.guard, rhs: self.rhs.clone() }
    }

    /// `θ ⊨ (Λ, t_l ≤ t_r)`; on failure returns the first failing permission set.
    pub fn violation(&self, lat: &Lattice, n: usize, theta: &Substitution) -> Option<PermSet> {
        self.generalize().violation(lat, n, theta)
    }

    pub fn show(&self, d: &Domain) -> String {
        format!("({}, {} ≤ {})", self.guard.show(&d.universe), self.lhs.show(d), self.rhs.show(d))
    }
}

/// `(Λ_l, t_l ≤ Λ_r, t_r)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenConstraint {
    pub lguard: PermissionTrace,
    pub lhs: Term,
    pub rguard: PermissionTrace,
    pub rhs: Term,
}

impl GenConstraint {
    pub fn violation(&self, lat: &Lattice, n: usize, theta: &Substitution) -> Option<PermSet> {
        let var = |v: TypeVar, q: PermSet| theta.get(v).at(q);
        PermissionUniverse::sets_of(n).find(|&p| {
            let l = self.lhs.eval_at(lat, self.lguard.act(p), &var);
            let r = self.rhs.eval_at(lat, self.rguard.act(p), &var);
            !lat.leq(l, r)
        })
    }

    pub fn show(&self, d: &Domain) -> String {
        let u = &d.universe;
        format!("({}, {} ≤ {}, {})", self.lguard.show(u), self.lhs.show(d), self.rguard.show(u), self.rhs.show(d))
    }
}

/// θ: a type for every variable (unmentioned variables read as `default`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    types: Vec<BaseType>,
    default: BaseType,
}

impl Substitution {
    pub fn new(types: Vec<BaseType>, default: BaseType) -> Self {
        Substitution { types, default }
    }

    pub fn bottom(n_vars: usize, bottom: BaseType) -> Self {
        Substitution { types: vec![bottom.clone(); n_vars], default: bottom }
    }

    pub fn get(&self, v: TypeVar) -> &BaseType {
        self.types.get(v.index()).unwrap_or(&self.default)
    }

    pub fn set(&mut self, v: TypeVar, t: BaseType) {
        if v.index() >= self.types.len() {
            self.types.resize(v.index() + 1, self.default.clone());
        }
        self.types[v.index()] = t;
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn types(&self) -> &[BaseType] {
        &self.types
    }

    pub fn satisfies(&self, lat: &Lattice, n: usize, cs: &[Constraint]) -> bool {
        cs.iter().all(|c| c.violation(lat, n, self).is_none())
    }
}

/// Number of variables mentioned by a constraint set (one past the largest index).
pub fn var_count(cs: &[Constraint]) -> usize {
    let mut vs = Vec::new();
    for c in cs {
        c.lhs.vars(&mut vs);
        c.rhs.vars(&mut vs);
    }
    vs.into_iter().map(|v| v.index() + 1).max().unwrap_or(0)
}
