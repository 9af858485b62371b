//! Shared fixtures: the example corpus, random generators and a brute-force
//! model of the declarative typing rules.
#![allow(dead_code)]

pub mod declarative;

use std::path::PathBuf;

use permflow::infer::{Constraint, Term, TypeVar};
use permflow::lattice::{Lattice, Level};
use permflow::perms::{Perm, PermSet};
use permflow::trace::{Literal, PermissionTrace};
use permflow::types::BaseType;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus_path(name: &str) -> PathBuf {
    corpus_dir().join(name)
}

pub fn corpus_source(name: &str) -> String {
    std::fs::read_to_string(corpus_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every `.pf` file in the corpus, sorted by name.
pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "pf").then(|| {
                let name = p.file_name().unwrap().to_string_lossy().into_owned();
                let src = std::fs::read_to_string(&p).unwrap();
                (name, src)
            })
        })
        .collect();
    out.sort();
    out
}

pub fn rng(salt: u64) -> ChaCha8Rng {
    let seed = std::env::var("PERMFLOW_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0x5eed_u64);
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// Lattices with at most five elements, including the two non-distributive ones.
pub fn lattices() -> Vec<Lattice> {
    let chain = |k: usize| {
        let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let order: Vec<(String, String)> = (1..k).map(|i| (names[i - 1].clone(), names[i].clone())).collect();
        Lattice::load(&names, &order).unwrap()
    };
    let load = |names: &[&str], order: &[(&str, &str)]| Lattice::load(names, order).unwrap();
    vec![
        Lattice::two_point(),
        chain(3),
        Lattice::diamond(),
        chain(5),
        load(&["L", "a", "b", "c", "H"], &[("L", "a"), ("L", "b"), ("L", "c"), ("a", "H"), ("b", "H"), ("c", "H")]),
        load(&["L", "a", "b", "c", "H"], &[("L", "a"), ("a", "b"), ("b", "H"), ("L", "c"), ("c", "H")]),
        load(&["L", "a", "b", "H", "T"], &[("L", "a"), ("L", "b"), ("a", "H"), ("b", "H"), ("H", "T")]),
    ]
}

pub fn level(rng: &mut ChaCha8Rng, lat: &Lattice) -> Level {
    Level::from_index(rng.gen_range(0..lat.len()))
}

pub fn base_type(rng: &mut ChaCha8Rng, lat: &Lattice, n: usize) -> BaseType {
    BaseType::from_fn(n, |_| level(rng, lat))
}

pub fn literal(rng: &mut ChaCha8Rng, n: usize) -> Literal {
    let p = Perm::from_index(rng.gen_range(0..n));
    if rng.gen_bool(0.5) {
        Literal::plus(p)
    } else {
        Literal::minus(p)
    }
}

/// A random literal sequence; may repeat or contradict permissions.
pub fn literals(rng: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<Literal> {
    if n == 0 {
        return Vec::new();
    }
    let len = rng.gen_range(0..=max);
    (0..len).map(|_| literal(rng, n)).collect()
}

pub fn trace(rng: &mut ChaCha8Rng, n: usize) -> PermissionTrace {
    let mut t = PermissionTrace::EPSILON;
    for p in 0..n {
        match rng.gen_range(0..3) {
            0 => t = t.then(Literal::plus(Perm::from_index(p))),
            1 => t = t.then(Literal::minus(Perm::from_index(p))),
            _ => {}
        }
    }
    t
}

pub fn perm_set(rng: &mut ChaCha8Rng, n: usize) -> PermSet {
    PermSet::from_bits(rng.gen_range(0..1u32 << n))
}

/// Left-hand sides as constraint generation produces them: joins of
/// variables, ground types and projections.
pub fn lhs_term(rng: &mut ChaCha8Rng, lat: &Lattice, n: usize, vars: u32, depth: u32) -> Term {
    if depth == 0 || rng.gen_bool(0.45) {
        return match rng.gen_range(0..5) {
            0 | 1 => Term::Var(TypeVar(rng.gen_range(0..vars))),
            2 => Term::project(Term::Var(TypeVar(rng.gen_range(0..vars))), perm_set(rng, n)),
            _ => Term::Ground(base_type(rng, lat, n)),
        };
    }
    Term::join(lhs_term(rng, lat, n, vars, depth - 1), lhs_term(rng, lat, n, vars, depth - 1))
}

/// Right-hand sides: variables, ground bounds, meets, merges and projections.
pub fn rhs_term(rng: &mut ChaCha8Rng, lat: &Lattice, n: usize, vars: u32, depth: u32) -> Term {
    if depth == 0 || rng.gen_bool(0.45) {
        return match rng.gen_range(0..7) {
            0..=2 => Term::Var(TypeVar(rng.gen_range(0..vars))),
            3 | 4 => Term::Ground(BaseType::embed(n, lat.top())),
            _ => Term::Ground(base_type(rng, lat, n)),
        };
    }
    let sub = |rng: &mut ChaCha8Rng| rhs_term(rng, lat, n, vars, depth - 1);
    match rng.gen_range(0..3) {
        0 if n > 0 => Term::merge(Perm::from_index(rng.gen_range(0..n)), sub(rng), sub(rng)),
        1 if n > 0 => Term::project(sub(rng), perm_set(rng, n)),
        _ => Term::meet(sub(rng), sub(rng)),
    }
}

pub fn constraint_set(
    rng: &mut ChaCha8Rng,
    lat: &Lattice,
    n: usize,
    vars: u32,
    count: usize,
) -> Vec<Constraint> {
    (0..count)
        .map(|_| {
            let g = trace(rng, n);
            Constraint::new(g, lhs_term(rng, lat, n, vars, 2), rhs_term(rng, lat, n, vars, 2))
        })
        .collect()
}
