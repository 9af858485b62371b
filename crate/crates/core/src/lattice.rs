//! Finite security-level lattices.
//!
//! A lattice is declared by naming its levels and listing covering pairs
//! `a < b`. Loading computes the reflexive-transitive order and total
//! join/meet tables, rejecting orders that are cyclic or lack a unique least
//! upper bound / greatest lower bound for some pair.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Upper bound on the number of levels a lattice may declare.
pub const MAX_LEVELS: usize = 64;

/// A security level, as an index into its lattice's level table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Level(pub(crate) u8);

impl Level {
    pub fn from_index(i: usize) -> Level {
        assert!(i < MAX_LEVELS, "level index out of range");
        Level(i as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("lattice must declare at least one level")]
    Empty,
    #[error("lattice declares {0} levels; at most {MAX_LEVELS} are supported")]
    TooManyLevels(usize),
    #[error("level `{0}` is declared twice")]
    DuplicateLevel(String),
    #[error("unknown level name `{0}`")]
    UnknownLevelName(String),
    #[error("order contains a cycle through `{0}`")]
    CycleInOrder(String),
    #[error("not a lattice: `{0}` and `{1}` have no unique {2}")]
    NotALattice(String, String, &'static str),
}

/// An immutable, validated finite lattice with precomputed tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    names: Vec<String>,
    leq: Vec<bool>,
    join: Vec<u8>,
    meet: Vec<u8>,
    bottom: Level,
    top: Level,
}

impl Lattice {
    /// Builds a lattice from level names and covering relations `(lower, upper)`.
    pub fn load<S: AsRef<str>>(names: &[S], order: &[(S, S)]) -> Result<Self, LatticeError> {
        let n = names.len();
        if n == 0 {
            return Err(LatticeError::Empty);
        }
        if n > MAX_LEVELS {
            return Err(LatticeError::TooManyLevels(n));
        }
        let mut index = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.as_ref().to_string(), i).is_some() {
                return Err(LatticeError::DuplicateLevel(name.as_ref().to_string()));
            }
        }
        let lookup = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| LatticeError::UnknownLevelName(s.to_string()))
        };

        let mut leq = vec![false; n * n];
        for i in 0..n {
            leq[i * n + i] = true;
        }
        for (lo, hi) in order {
            let (a, b) = (lookup(lo.as_ref())?, lookup(hi.as_ref())?);
            if a == b {
                return Err(LatticeError::CycleInOrder(names[a].as_ref().to_string()));
            }
            leq[a * n + b] = true;
        }
        // Warshall closure.
        for k in 0..n {
            for i in 0..n {
                if leq[i * n + k] {
                    for j in 0..n {
                        if leq[k * n + j] {
                            leq[i * n + j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && leq[i * n + j] && leq[j * n + i] {
                    return Err(LatticeError::CycleInOrder(names[i].as_ref().to_string()));
                }
            }
        }

        let name = |i: usize| names[i].as_ref().to_string();
        let mut join = vec![0u8; n * n];
        let mut meet = vec![0u8; n * n];
        for a in 0..n {
            for b in 0..n {
                let ub: Vec<usize> = (0..n).filter(|&u| leq[a * n + u] && leq[b * n + u]).collect();
                let lub = ub.iter().copied().find(|&u| ub.iter().all(|&v| leq[u * n + v]));
                join[a * n + b] = lub.ok_or_else(|| LatticeError::NotALattice(name(a), name(b), "join"))? as u8;
                let lb: Vec<usize> = (0..n).filter(|&l| leq[l * n + a] && leq[l * n + b]).collect();
                let glb = lb.iter().copied().find(|&l| lb.iter().all(|&v| leq[v * n + l]));
                meet[a * n + b] = glb.ok_or_else(|| LatticeError::NotALattice(name(a), name(b), "meet"))? as u8;
            }
        }
        // Total joins/meets over a finite nonempty carrier give a top and a bottom.
        let top = (0..n).find(|&t| (0..n).all(|x| leq[x * n + t])).expect("finite lattice has a top");
        let bottom = (0..n).find(|&b| (0..n).all(|x| leq[b * n + x])).expect("finite lattice has a bottom");

        Ok(Lattice {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
            leq,
            join,
            meet,
            bottom: Level(bottom as u8),
            top: Level(top as u8),
        })
    }

    /// The two-point lattice `L < H`.
    pub fn two_point() -> Self {
        Lattice::load(&["L", "H"], &[("L", "H")]).expect("two-point lattice")
    }

    /// The four-element diamond `L < l1, l2 < H`.
    pub fn diamond() -> Self {
        Lattice::load(
            &["L", "l1", "l2", "H"],
            &[("L", "l1"), ("L", "l2"), ("l1", "H"), ("l2", "H")],
        )
        .expect("diamond lattice")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn bottom(&self) -> Level {
        self.bottom
    }

    pub fn top(&self) -> Level {
        self.top
    }

    pub fn levels(&self) -> impl Iterator<Item = Level> + '_ {
        (0..self.names.len()).map(|i| Level(i as u8))
    }

    pub fn level(&self, name: &str) -> Option<Level> {
        self.names.iter().position(|n| n == name).map(|i| Level(i as u8))
    }

    pub fn name(&self, l: Level) -> &str {
        &self.names[l.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, l: Level) -> bool {
        l.index() < self.names.len()
    }

    #[inline]
    pub fn leq(&self, a: Level, b: Level) -> bool {
        self.leq[a.index() * self.names.len() + b.index()]
    }

    #[inline]
    pub fn join(&self, a: Level, b: Level) -> Level {
        Level(self.join[a.index() * self.names.len() + b.index()])
    }

    #[inline]
    pub fn meet(&self, a: Level, b: Level) -> Level {
        Level(self.meet[a.index() * self.names.len() + b.index()])
    }

    /// Covering pairs (Hasse diagram edges), in declaration order of the levels.
    pub fn covers(&self) -> Vec<(Level, Level)> {
        let mut out = Vec::new();
        for a in self.levels() {
            for b in self.levels() {
                if a != b && self.leq(a, b) {
                    let between = self.levels().any(|c| c != a && c != b && self.leq(a, c) && self.leq(c, b));
                    if !between {
                        out.push((a, b));
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lattice {{ levels {}; order ", self.names.join(", "))?;
        let covers: Vec<String> = self
            .covers()
            .into_iter()
            .map(|(a, b)| format!("{} < {}", self.name(a), self.name(b)))
            .collect();
        write!(f, "{}; }}", covers.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force least upper bound: scan every candidate.
    fn brute_lub(lat: &Lattice, a: Level, b: Level) -> Option<Level> {
        let ubs: Vec<Level> = lat.levels().filter(|&u| lat.leq(a, u) && lat.leq(b, u)).collect();
        ubs.iter().copied().find(|&u| ubs.iter().all(|&v| lat.leq(u, v)))
    }

    fn brute_glb(lat: &Lattice, a: Level, b: Level) -> Option<Level> {
        let lbs: Vec<Level> = lat.levels().filter(|&l| lat.leq(l, a) && lat.leq(l, b)).collect();
        lbs.iter().copied().find(|&l| lbs.iter().all(|&v| lat.leq(v, l)))
    }

    #[test]
    fn two_point_chain() {
        let lat = Lattice::two_point();
        let (l, h) = (lat.level("L").unwrap(), lat.level("H").unwrap());
        assert_eq!(lat.join(l, h), h);
        assert_eq!(lat.meet(l, h), l);
        assert_eq!(lat.bottom(), l);
        assert_eq!(lat.top(), h);
    }

    #[test]
    fn diamond_tables() {
        let lat = Lattice::diamond();
        let g = |n| lat.level(n).unwrap();
        assert!(lat.leq(g("l1"), g("H")));
        assert!(!lat.leq(g("l1"), g("l2")));
        assert!(!lat.leq(g("l2"), g("l1")));
        assert_eq!(lat.join(g("l1"), g("l2")), g("H"));
        assert_eq!(lat.meet(g("l1"), g("l2")), g("L"));
        assert_eq!(brute_lub(&lat, g("l1"), g("l2")), Some(g("H")));
        assert_eq!(brute_glb(&lat, g("l1"), g("l2")), Some(g("L")));
        for x in lat.levels() {
            assert!(lat.leq(x, x));
            assert_eq!(lat.join(x, lat.bottom()), x);
        }
    }

    #[test]
    fn missing_join_is_rejected() {
        let err = Lattice::load(&["a", "b", "c"], &[("a", "b"), ("a", "c")]).unwrap_err();
        assert!(matches!(err, LatticeError::NotALattice(..)));
    }

    #[test]
    fn cycles_and_unknown_names() {
        assert!(matches!(
            Lattice::load(&["a", "b"], &[("a", "b"), ("b", "a")]),
            Err(LatticeError::CycleInOrder(_))
        ));
        assert!(matches!(
            Lattice::load(&["a", "b"], &[("a", "z")]),
            Err(LatticeError::UnknownLevelName(n)) if n == "z"
        ));
        assert!(matches!(Lattice::load(&["a", "a"], &[]), Err(LatticeError::DuplicateLevel(_))));
        assert!(matches!(Lattice::load::<&str>(&[], &[]), Err(LatticeError::Empty)));
    }

    #[test]
    fn covers_roundtrip() {
        let lat = Lattice::diamond();
        let covers = lat.covers();
        assert_eq!(covers.len(), 4);
        let names: Vec<String> = lat.names().to_vec();
        let order: Vec<(String, String)> = covers
            .iter()
            .map(|&(a, b)| (lat.name(a).to_string(), lat.name(b).to_string()))
            .collect();
        assert_eq!(Lattice::load(&names, &order).unwrap(), lat);
    }

    #[test]
    fn tables_agree_with_brute_force_on_a_five_element_lattice() {
        // M3 with a bottom and top: L < a,b,c < H
        let lat = Lattice::load(
            &["L", "a", "b", "c", "H"],
            &[("L", "a"), ("L", "b"), ("L", "c"), ("a", "H"), ("b", "H"), ("c", "H")],
        )
        .unwrap();
        for x in lat.levels() {
            for y in lat.levels() {
                assert_eq!(Some(lat.join(x, y)), brute_lub(&lat, x, y));
                assert_eq!(Some(lat.meet(x, y)), brute_glb(&lat, x, y));
                assert_eq!(lat.leq(x, y), lat.join(x, y) == y);
                for z in lat.levels() {
                    assert_eq!(lat.join(lat.join(x, y), z), lat.join(x, lat.join(y, z)));
                    assert_eq!(lat.meet(lat.meet(x, y), z), lat.meet(x, lat.meet(y, z)));
                }
            }
        }
    }
}
