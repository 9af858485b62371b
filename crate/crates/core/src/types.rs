//! Permission-dependent base types.
//!
//! A base type maps every permission set to a security level. It is stored as
//! a dense table indexed by the permission-set bitmask.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::lattice::{Lattice, Level};
use crate::perms::{Perm, PermError, PermSet, PermissionUniverse};
use crate::trace::PermissionTrace;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("base types range over different permission universes ({0} vs {1} permissions)")]
    UniverseMismatch(usize, usize),
    #[error(transparent)]
    Perm(#[from] PermError),
    #[error("unknown level `{0}`")]
    UnknownLevel(String),
    #[error("permission set {0} is listed twice in a base-type literal")]
    DuplicateSet(String),
    #[error("base-type literal has no entry for {0} and no `_` default")]
    NotTotal(String),
}

/// A total map from permission sets to levels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BaseType {
    n: u8,
    table: Vec<Level>,
}

impl BaseType {
    /// The constant type `l̂` over an `n`-permission universe.
    pub fn embed(n: usize, l: Level) -> Self {
        BaseType { n: n as u8, table: vec![l; 1 << n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(PermSet) -> Level) -> Self {
        BaseType { n: n as u8, table: (0..1u32 << n).map(|c| f(PermSet::from_bits(c))).collect() }
    }

    pub fn from_table(n: usize, table: Vec<Level>) -> Self {
        assert_eq!(table.len(), 1 << n, "base-type table must have 2^n entries");
        BaseType { n: n as u8, table }
    }

    pub fn universe_size(&self) -> usize {
        self.n as usize
    }

    pub fn table(&self) -> &[Level] {
        &self.table
    }

    #[inline]
    pub fn at(&self, p: PermSet) -> Level {
        self.table[p.index()]
    }

    pub fn set(&mut self, p: PermSet, l: Level) {
        self.table[p.index()] = l;
    }

    pub fn sets(&self) -> impl Iterator<Item = PermSet> {
        (0..1u32 << self.n).map(PermSet::from_bits)
    }

    /// The level if every entry agrees.
    pub fn constant(&self) -> Option<Level> {
        let first = self.table[0];
        self.table.iter().all(|l| *l == first).then_some(first)
    }

    fn same_universe(&self, other: &BaseType) -> Result<(), TypeError> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(TypeError::UniverseMismatch(self.n as usize, other.n as usize))
        }
    }

    pub fn leq(&self, lat: &Lattice, other: &BaseType) -> bool {
        self.first_violation(lat, other).is_none()
    }

    /// First permission set (in bitmask order) where `self ≤ other` fails.
    pub fn first_violation(&self, lat: &Lattice, other: &BaseType) -> Option<PermSet> {
        debug_assert_eq!(self.n, other.n);
        self.table
            .iter()
            .zip(&other.table)
            .position(|(a, b)| !lat.leq(*a, *b))
            .map(|i| PermSet::from_bits(i as u32))
    }

    pub fn join(&self, lat: &Lattice, other: &BaseType) -> BaseType {
        self.zip_with(other, |a, b| lat.join(a, b))
    }

    pub fn meet(&self, lat: &Lattice, other: &BaseType) -> BaseType {
        self.zip_with(other, |a, b| lat.meet(a, b))
    }

    pub fn try_leq(&self, lat: &Lattice, other: &BaseType) -> Result<bool, TypeError> {
        self.same_universe(other)?;
        Ok(self.leq(lat, other))
    }

    pub fn try_join(&self, lat: &Lattice, other: &BaseType) -> Result<BaseType, TypeError> {
        self.same_universe(other)?;
        Ok(self.join(lat, other))
    }

    pub fn try_meet(&self, lat: &Lattice, other: &BaseType) -> Result<BaseType, TypeError> {
        self.same_universe(other)?;
        Ok(self.meet(lat, other))
    }

    fn zip_with(&self, other: &BaseType, f: impl Fn(Level, Level) -> Level) -> BaseType {
        debug_assert_eq!(self.n, other.n);
        BaseType { n: self.n, table: self.table.iter().zip(&other.table).map(|(a, b)| f(*a, *b)).collect() }
    }

    /// `t↑p`: `(t↑p)(P) = t(P ∪ {p})`.
    pub fn promote(&self, p: Perm) -> BaseType {
        BaseType::from_fn(self.n as usize, |s| self.at(s.with(p)))
    }

    /// `t↓p`: `(t↓p)(P) = t(P ∖ {p})`.
    pub fn demote(&self, p: Perm) -> BaseType {
        BaseType::from_fn(self.n as usize, |s| self.at(s.without(p)))
    }

    /// `app(t, P)`: the constant type at `t(P)`.
    pub fn project(&self, p: PermSet) -> BaseType {
        BaseType::embed(self.n as usize, self.at(p))
    }

    /// `⋈(p, t1, t2)`: `t1` where `p` is present, `t2` elsewhere.
    pub fn merge(p: Perm, t1: &BaseType, t2: &BaseType) -> BaseType {
        debug_assert_eq!(t1.n, t2.n);
        BaseType::from_fn(t1.n as usize, |s| if s.contains(p) { t1.at(s) } else { t2.at(s) })
    }

    /// `t·Λ`: read `t` at `(P ∪ pos) ∖ neg`.
    pub fn apply(&self, trace: PermissionTrace) -> BaseType {
        if trace.is_empty() {
            return self.clone();
        }
        BaseType::from_fn(self.n as usize, |s| self.at(trace.act(s)))
    }

    /// Partial subtyping `self ≤_Λ other`; returns the first failing set.
    pub fn violation_under(&self, lat: &Lattice, other: &BaseType, trace: PermissionTrace) -> Option<PermSet> {
        self.apply(trace).first_violation(lat, &other.apply(trace))
    }

    pub fn leq_under(&self, lat: &Lattice, other: &BaseType, trace: PermissionTrace) -> bool {
        self.violation_under(lat, other, trace).is_none()
    }
}

/// `t̄ → t'`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunctionType {
    pub params: Vec<BaseType>,
    pub ret: BaseType,
}

/// A base type as written in source, before names are resolved.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeSyntax {
    Level(String),
    /// Entries of `{ {p,q}: H, _: L }`; `None` is the `_` default.
    Table(Vec<(Option<Vec<String>>, String)>),
}

impl fmt::Display for TypeSyntax {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeSyntax::Level(l) => f.write_str(l),
            TypeSyntax::Table(entries) => {
                f.write_str("{ ")?;
                for (i, (set, level)) in entries.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    match set {
                        None => write!(f, "_: {level}")?,
                        Some(names) => write!(f, "{{{}}}: {level}", names.join(","))?,
                    }
                }
                f.write_str(" }")
            }
        }
    }
}

/// The lattice and permission universe a system's types live in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub lattice: Lattice,
    pub universe: PermissionUniverse,
}

impl Domain {
    pub fn new(lattice: Lattice, universe: PermissionUniverse) -> Self {
        Domain { lattice, universe }
    }

    pub fn n(&self) -> usize {
        self.universe.count()
    }

    pub fn embed(&self, l: Level) -> BaseType {
        BaseType::embed(self.n(), l)
    }

    pub fn bottom(&self) -> BaseType {
        self.embed(self.lattice.bottom())
    }

    pub fn top(&self) -> BaseType {
        self.embed(self.lattice.top())
    }

    pub fn level(&self, name: &str) -> Result<Level, TypeError> {
        self.lattice.level(name).ok_or_else(|| TypeError::UnknownLevel(name.to_string()))
    }

    pub fn resolve(&self, syn: &TypeSyntax) -> Result<BaseType, TypeError> {
        match syn {
            TypeSyntax::Level(name) => Ok(self.embed(self.level(name)?)),
            TypeSyntax::Table(entries) => {
                let mut default = None;
                let mut explicit: HashMap<PermSet, Level> = HashMap::new();
                for (set, level) in entries {
                    let l = self.level(level)?;
                    match set {
                        None => {
                            if default.replace(l).is_some() {
                                return Err(TypeError::DuplicateSet("_".into()));
                            }
                        }
                        Some(names) => {
                            let s = self.universe.set_of(names)?;
                            if explicit.insert(s, l).is_some() {
                                return Err(TypeError::DuplicateSet(self.universe.show_set(s)));
                            }
                        }
                    }
                }
                let mut table = Vec::with_capacity(self.universe.set_count());
                for s in self.universe.sets() {
                    match explicit.get(&s).copied().or(default) {
                        Some(l) => table.push(l),
                        None => return Err(TypeError::NotTotal(self.universe.show_set(s))),
                    }
                }
                Ok(BaseType::from_table(self.n(), table))
            }
        }
    }

    /// Source syntax for a base type: constants become a bare level name,
    /// otherwise the most frequent level becomes the `_` default and the
    /// remaining sets are listed in bitmask order.
    pub fn syntax_of(&self, t: &BaseType) -> TypeSyntax {
        if let Some(l) = t.constant() {
            return TypeSyntax::Level(self.lattice.name(l).to_string());
        }
        let mut counts = vec![0usize; self.lattice.len()];
        for l in t.table() {
            counts[l.index()] += 1;
        }
        // Ties go to the lower level index so output is deterministic.
        let default = (0..counts.len()).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
        let mut entries: Vec<(Option<Vec<String>>, String)> = t
            .sets()
            .filter(|s| t.at(*s).index() != default)
            .map(|s| {
                let names = s.iter().map(|p| self.universe.name(p).to_string()).collect();
                (Some(names), self.lattice.name(t.at(s)).to_string())
            })
            .collect();
        entries.push((None, self.lattice.names()[default].clone()));
        TypeSyntax::Table(entries)
    }

    pub fn show(&self, t: &BaseType) -> String {
        self.syntax_of(t).to_string()
    }

    /// Every entry spelled out, in bitmask order: `{}: L, {p}: H, ...`.
    pub fn show_full(&self, t: &BaseType) -> String {
        let parts: Vec<String> = t
            .sets()
            .map(|s| format!("{}: {}", self.universe.show_set(s), self.lattice.name(t.at(s))))
            .collect();
        format!("{{ {} }}", parts.join(", "))
    }

    pub fn display<'a>(&'a self, t: &'a BaseType) -> impl fmt::Display + 'a {
        struct D<'a>(&'a Domain, &'a BaseType);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0.show(self.1))
            }
        }
        D(self, t)
    }

    pub fn show_fn(&self, ft: &FunctionType) -> String {
        let ps: Vec<String> = ft.params.iter().map(|t| self.show(t)).collect();
        format!("({}) -> {}", ps.join(", "), self.show(&ft.ret))
    }
}
