//! Brute-force noninterference testing.
//!
//! For a function typed `t̄ → t'`, a caller permission set `P` and an
//! observer level `l_O`, the inputs (parameters, the result variable and
//! declared constants) split into observable ones, whose type at `P` is at
//! most `l_O`, and secret ones. Two runs must agree on `r` whenever they
//! agree on the observable inputs. Rather than enumerating pairs, the harness
//! fixes the observable inputs and runs every secret assignment once: all
//! terminating runs in a group must produce the same result.

use std::collections::BTreeMap;

use crate::interp::{Env, ExecError, Interpreter};
use crate::lattice::{Lattice, Level};
use crate::perms::PermSet;
use crate::system::{FunId, System};
use crate::types::{BaseType, FunctionType};

pub const DEFAULT_PAIR_CAP: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct NiConfig {
    /// Observer levels to test; empty means every level of the lattice.
    pub observers: Vec<Level>,
    /// Inclusive value range for every input.
    pub domain: (i64, i64),
    pub fuel: u64,
    /// Caller permission sets; empty means every set.
    pub caller_sets: Vec<PermSet>,
    /// Maximum number of environment pairs per cell.
    pub pair_cap: u64,
    /// Compare final environments on every observable variable and drop the
    /// observable-result gate.
    pub strict: bool,
}

impl Default for NiConfig {
    fn default() -> Self {
        NiConfig {
            observers: Vec::new(),
            domain: (0, 2),
            fuel: crate::interp::DEFAULT_FUEL,
            caller_sets: Vec::new(),
            pair_cap: DEFAULT_PAIR_CAP,
            strict: false,
        }
    }
}

/// Which definition a violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    /// Equal observable inputs, observable result type, different results.
    Function,
    /// Equal observable inputs, different observable final values.
    Command,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub clause: Clause,
    /// Initial values of parameters, the result variable and constants.
    pub env1: Env,
    pub env2: Env,
    /// The variable whose final values differ (the result variable unless strict).
    pub variable: String,
    pub out1: i64,
    pub out2: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// The result type is not observable at this permission set.
    Skipped,
    Violation(Box<Witness>),
    /// The cell has more pairs than the cap allows.
    TooLarge { pairs: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellReport {
    pub function: FunId,
    pub perms: PermSet,
    pub observer: Level,
    pub pairs_tested: u64,
    /// Runs that ran out of fuel; pairs involving them count as inconclusive.
    pub inconclusive_runs: u64,
    pub verdict: Verdict,
}

/// `η =_Γ^{l_O} η'`: variables typed at most `l̂_O` everywhere agree (both undefined counts as equal).
pub fn indistinguishable(lat: &Lattice, gamma: &[(String, BaseType)], observer: Level, a: &Env, b: &Env) -> bool {
    gamma
        .iter()
        .filter(|(_, t)| t.table().iter().all(|l| lat.leq(*l, observer)))
        .all(|(x, _)| a.get(x) == b.get(x))
}

/// `app(Γ, P)`.
pub fn project_env(gamma: &[(String, BaseType)], p: PermSet) -> Vec<(String, BaseType)> {
    gamma.iter().map(|(x, t)| (x.clone(), t.project(p))).collect()
}

/// The typing environment of a function's inputs: parameters, result and constants.
pub fn input_env(sys: &System, id: FunId, ty: &FunctionType) -> Vec<(String, BaseType)> {
    let f = sys.function(id);
    let mut gamma: Vec<(String, BaseType)> = f.params.iter().cloned().zip(ty.params.iter().cloned()).collect();
    gamma.push((f.ret_var.clone(), ty.ret.clone()));
    gamma.extend(sys.consts.values().map(|c| (c.name.clone(), c.ty.clone())));
    gamma
}

fn assignments(count: usize, lo: i64, hi: i64) -> impl Iterator<Item = Vec<i64>> {
    let width = (hi - lo + 1) as u64;
    let total = width.checked_pow(count as u32).unwrap_or(u64::MAX);
    (0..total).map(move |mut k| {
        (0..count)
            .map(|_| {
                let v = lo + (k % width) as i64;
                k /= width;
                v
            })
            .collect()
    })
}

/// Tests one function at every (caller set, observer) cell.
pub fn nitest_function(sys: &System, id: FunId, ty: &FunctionType, cfg: &NiConfig) -> Vec<CellReport> {
    let lat = sys.lattice();
    let sets: Vec<PermSet> =
        if cfg.caller_sets.is_empty() { sys.universe().sets().collect() } else { cfg.caller_sets.clone() };
    let observers: Vec<Level> = if cfg.observers.is_empty() { lat.levels().collect() } else { cfg.observers.clone() };
    let mut out = Vec::new();
    for &p in &sets {
        for &o in &observers {
            out.push(test_cell(sys, id, ty, cfg, p, o));
        }
    }
    out
}

fn test_cell(sys: &System, id: FunId, ty: &FunctionType, cfg: &NiConfig, p: PermSet, observer: Level) -> CellReport {
    let lat = sys.lattice();
    let f = sys.function(id);
    let mut report =
        CellReport { function: id, perms: p, observer, pairs_tested: 0, inconclusive_runs: 0, verdict: Verdict::Ok };
    if !cfg.strict && !lat.leq(ty.ret.at(p), observer) {
        report.verdict = Verdict::Skipped;
        return report;
    }
    let gamma = project_env(&input_env(sys, id, ty), p);
    let (mut visible, mut secret) = (Vec::new(), Vec::new());
    for (x, t) in &gamma {
        if lat.leq(t.at(p), observer) {
            visible.push(x.clone());
        } else {
            secret.push(x.clone());
        }
    }
    let (lo, hi) = cfg.domain;
    let width = (hi - lo + 1).max(1) as u64;
    let groups = width.checked_pow(visible.len() as u32);
    let per_group = width.checked_pow(secret.len() as u32);
    let pairs = groups.zip(per_group).and_then(|(g, s)| s.checked_mul(s).and_then(|s2| s2.checked_mul(g)));
    match pairs {
        Some(n) if n <= cfg.pair_cap => report.pairs_tested = n,
        other => {
            report.verdict = Verdict::TooLarge { pairs: other.unwrap_or(u64::MAX) };
            return report;
        }
    }
    // Observable final variables: strict mode compares all of them, otherwise just the result.
    let compared: Vec<String> = if cfg.strict {
        let mut xs: Vec<String> = f.params.clone();
        xs.push(f.ret_var.clone());
        xs.into_iter().filter(|x| visible.contains(x)).collect()
    } else {
        vec![f.ret_var.clone()]
    };
    let is_const = |x: &str| sys.consts.contains_key(x) && !f.params.iter().any(|y| y == x) && f.ret_var != x;
    for shared in assignments(visible.len(), lo, hi) {
        let mut first: Option<(Env, Env)> = None;
        for own in assignments(secret.len(), lo, hi) {
            let mut init: Env = BTreeMap::new();
            for (x, v) in visible.iter().zip(&shared).chain(secret.iter().zip(&own)) {
                init.insert(x.clone(), *v);
            }
            let mut it = Interpreter::new(sys, cfg.fuel);
            let mut env = Env::new();
            for (x, v) in &init {
                if is_const(x) {
                    it.set_const(x, *v);
                } else {
                    env.insert(x.clone(), *v);
                }
            }
            let fin = match it.run_body(id, env, p) {
                Ok(e) => e,
                Err(ExecError::FuelExhausted(_)) => {
                    report.inconclusive_runs += 1;
                    continue;
                }
                Err(e) => panic!("validated system failed at run time: {e}"),
            };
            match &first {
                None => first = Some((init, fin)),
                Some((init0, fin0)) => {
                    if let Some(x) = compared.iter().find(|x| fin0.get(*x) != fin.get(*x)) {
                        report.verdict = Verdict::Violation(Box::new(Witness {
                            clause: if cfg.strict { Clause::Command } else { Clause::Function },
                            env1: init0.clone(),
                            env2: init,
                            variable: x.clone(),
                            out1: fin0.get(x).copied().unwrap_or_default(),
                            out2: fin.get(x).copied().unwrap_or_default(),
                        }));
                        return report;
                    }
                }
            }
        }
    }
    report
}

/// Tests every function of a system against the given types (indexed by function id).
pub fn nitest_system(sys: &System, types: &[FunctionType], cfg: &NiConfig) -> Vec<CellReport> {
    sys.ids().flat_map(|id| nitest_function(sys, id, &types[id.0], cfg)).collect()
}
