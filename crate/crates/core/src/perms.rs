//! Permission universes and permission sets.

use std::fmt;

use thiserror::Error;

/// Maximum number of permissions in a universe. Base types are dense tables
/// of `2^n` entries, so this keeps them at most 4096 entries long.
pub const MAX_PERMISSIONS: usize = 12;

/// A permission, as an index into its universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm(pub(crate) u8);

impl Perm {
    pub fn from_index(i: usize) -> Perm {
        assert!(i < MAX_PERMISSIONS, "permission index out of range");
        Perm(i as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn bit(self) -> u32 {
        1 << self.0
    }
}

/// A set of permissions, stored as a bitmask over the universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PermSet(pub(crate) u32);

impl PermSet {
    pub const EMPTY: PermSet = PermSet(0);

    pub fn from_bits(bits: u32) -> Self {
        PermSet(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Index of this set in a dense base-type table.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn contains(self, p: Perm) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn with(self, p: Perm) -> Self {
        PermSet(self.0 | p.bit())
    }

    pub fn without(self, p: Perm) -> Self {
        PermSet(self.0 & !p.bit())
    }

    pub fn union(self, other: PermSet) -> Self {
        PermSet(self.0 | other.0)
    }

    pub fn intersection(self, other: PermSet) -> Self {
        PermSet(self.0 & other.0)
    }

    pub fn difference(self, other: PermSet) -> Self {
        PermSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: PermSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Perm> {
        (0..32u8).filter(move |i| self.0 & (1 << i) != 0).map(Perm)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PermError {
    #[error("permission `{0}` is declared twice")]
    DuplicatePermission(String),
    #[error("{0} permissions declared; at most {MAX_PERMISSIONS} are supported")]
    TooManyPermissions(usize),
    #[error("unknown permission `{0}`")]
    UnknownPermission(String),
}

/// The finite, ordered set of permission names a system draws from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PermissionUniverse {
    names: Vec<String>,
}

impl PermissionUniverse {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, PermError> {
        if names.len() > MAX_PERMISSIONS {
            return Err(PermError::TooManyPermissions(names.len()));
        }
        let mut out: Vec<String> = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            if out.iter().any(|m| m == n) {
                return Err(PermError::DuplicatePermission(n.to_string()));
            }
            out.push(n.to_string());
        }
        Ok(PermissionUniverse { names: out })
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    /// Number of permission sets, i.e. `2^count`.
    pub fn set_count(&self) -> usize {
        1 << self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn perm(&self, name: &str) -> Result<Perm, PermError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| Perm(i as u8))
            .ok_or_else(|| PermError::UnknownPermission(name.to_string()))
    }

    pub fn name(&self, p: Perm) -> &str {
        &self.names[p.index()]
    }

    pub fn perms(&self) -> impl Iterator<Item = Perm> {
        (0..self.names.len() as u8).map(Perm)
    }

    /// The set containing every permission.
    pub fn full(&self) -> PermSet {
        PermSet(((1u64 << self.names.len()) - 1) as u32)
    }

    /// All permission sets, in bitmask order.
    pub fn sets(&self) -> impl Iterator<Item = PermSet> {
        (0..self.set_count() as u32).map(PermSet)
    }

    /// All permission sets over `n` permissions, in bitmask order.
    pub fn sets_of(n: usize) -> impl Iterator<Item = PermSet> {
        (0..1u32 << n).map(PermSet)
    }

    pub fn set_of<S: AsRef<str>>(&self, names: &[S]) -> Result<PermSet, PermError> {
        let mut s = PermSet::EMPTY;
        for n in names {
            s = s.with(self.perm(n.as_ref())?);
        }
        Ok(s)
    }

    pub fn contains_set(&self, s: PermSet) -> bool {
        s.is_subset(self.full())
    }

    /// Renders a set as `{p,q}`.
    pub fn show_set(&self, s: PermSet) -> String {
        let names: Vec<&str> = s.iter().map(|p| self.name(p)).collect();
        format!("{{{}}}", names.join(","))
    }

    pub fn display_set(&self, s: PermSet) -> impl fmt::Display + '_ {
        struct D<'a>(&'a PermissionUniverse, PermSet);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0.show_set(self.1))
            }
        }
        D(self, s)
    }
}
