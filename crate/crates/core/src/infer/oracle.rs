//! Semantic fixpoint solver.
//!
//! Treats every (variable, permission set) pair as an unknown lattice element
//! and computes the least solution by Kleene iteration from bottom. Each
//! constraint `lhs ≤ rhs` is read as "push the value of `lhs` into every
//! unknown the right-hand side reaches"; this is exact because right-hand
//! sides are built from meets, merges and projections only.

use thiserror::Error;

use crate::lattice::{Lattice, Level};
use crate::perms::{PermSet, PermissionUniverse};
use crate::types::BaseType;

use super::term::{var_count, Constraint, Substitution, Term, TypeVar};

pub const ORACLE_MAX_PERMISSIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("the oracle enumerates permission sets and accepts at most {ORACLE_MAX_PERMISSIONS} permissions, got {0}")]
    UniverseTooLarge(usize),
    #[error("constraint {index} cannot be satisfied (fails at permission set {witness:?})")]
    Unsat { index: usize, witness: PermSet },
}

/// A constraint index and a permission set where the least prefixpoint violates it.
pub type Violation = (usize, PermSet);

/// The least assignment satisfying every constraint's variable bounds, plus
/// the constraints it still violates (only possible through ground upper bounds,
/// in which case no solution exists).
pub fn least_prefixpoint(lat: &Lattice, n: usize, n_vars: usize, cs: &[Constraint]) -> (Substitution, Vec<Violation>) {
    let cells = 1usize << n;
    let mut table = vec![lat.bottom(); n_vars.max(var_count(cs)) * cells];
    loop {
        let mut changed = false;
        for c in cs {
            for p in PermissionUniverse::sets_of(n) {
                let q = c.guard.act(p);
                let l = c.lhs.eval_at(lat, q, &|v: TypeVar, s: PermSet| table[v.index() * cells + s.index()]);
                push(&c.rhs, q, l, &mut |v, s, l| {
                    let slot = &mut table[v.index() * cells + s.index()];
                    let j = lat.join(*slot, l);
                    if j != *slot {
                        *slot = j;
                        changed = true;
                    }
                });
            }
        }
        if !changed {
            break;
        }
    }
    let nv = table.len() / cells;
    let theta = Substitution::new(
        (0..nv).map(|v| BaseType::from_table(n, table[v * cells..(v + 1) * cells].to_vec())).collect(),
        BaseType::embed(n, lat.bottom()),
    );
    let violations = cs
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.violation(lat, n, &theta).map(|p| (i, p)))
        .collect();
    (theta, violations)
}

/// Raises every unknown reachable from `t` at `cell` to at least `l`.
fn push(t: &Term, cell: PermSet, l: Level, raise: &mut dyn FnMut(TypeVar, PermSet, Level)) {
    match t {
        Term::Var(v) => raise(*v, cell, l),
        Term::Ground(_) => {}
        Term::Meet(a, b) => {
            push(a, cell, l, raise);
            push(b, cell, l, raise);
        }
        Term::Merge(p, a, b) => push(if cell.contains(*p) { a } else { b }, cell, l, raise),
        Term::Project(t, q) => push(t, *q, l, raise),
        Term::Join(a, b) => {
            // Not a right-hand-side form: x ≤ a ⊔ b has no least solution in general.
            // Raising both sides keeps the result a solution when one exists.
            push(a, cell, l, raise);
            push(b, cell, l, raise);
        }
    }
}

/// Least solution of a constraint set over a universe of at most four permissions.
pub fn oracle_solve(lat: &Lattice, n: usize, cs: &[Constraint]) -> Result<Substitution, OracleError> {
    if n > ORACLE_MAX_PERMISSIONS {
        return Err(OracleError::UniverseTooLarge(n));
    }
    let (theta, violations) = least_prefixpoint(lat, n, var_count(cs), cs);
    match violations.first() {
        Some(&(index, witness)) => Err(OracleError::Unsat { index, witness }),
        None => Ok(theta),
    }
}
