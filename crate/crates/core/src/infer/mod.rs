//! Type inference: constraint generation and solving.

pub mod gen;
pub mod oracle;
pub mod solve;
pub mod term;

use thiserror::Error;

use crate::perms::PermSet;
use crate::system::{FunId, System};
use crate::types::{BaseType, FunctionType};

pub use gen::{generate, FunConstraints, Generated, Signature};
pub use oracle::{least_prefixpoint, oracle_solve, OracleError};
pub use solve::{solve, solve_vars, Interval, Solution, SolveError, SolveStats};
pub use term::{Constraint, GenConstraint, Origin, OriginKind, Substitution, Term, TypeVar, VarInfo, VarRole};

/// Inferred types for a whole system.
#[derive(Debug, Clone)]
pub struct Inference {
    pub generated: Generated,
    pub solution: Solution,
    /// Indexed by function id.
    pub types: Vec<FunctionType>,
    /// Letvar types per function, in body order.
    pub letvars: Vec<Vec<(String, BaseType)>>,
}

impl Inference {
    pub fn fun_type(&self, id: FunId) -> &FunctionType {
        &self.types[id.0]
    }

    pub fn intervals(&self, t: &Term) -> Vec<&Interval> {
        match t {
            Term::Var(v) => self.solution.intervals_of(*v).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferError {
    /// `functions` lists, in call-graph order, every function whose own
    /// constraints together with its callees' have no solution.
    #[error("no typing exists: {}", .core.len())]
    Unsat { core: Vec<Constraint>, functions: Vec<FunId>, witness: Option<(Constraint, PermSet)> },
    #[error(transparent)]
    Solver(SolveError),
}

/// Infers a type for every unannotated function (annotated ones are kept and
/// their bodies checked against their annotations).
pub fn infer_system(sys: &System) -> Result<Inference, InferError> {
    let generated = generate(sys);
    let cs = generated.all();
    let lat = sys.lattice();
    let n = sys.universe().count();
    let nv = generated.vars.len();
    match solve_vars(lat, n, nv, &cs) {
        Ok(solution) => {
            let inst = |t: &Term| t.eval(lat, n, &solution.theta);
            let types = generated
                .funs
                .iter()
                .map(|f| FunctionType { params: f.sig.params.iter().map(inst).collect(), ret: inst(&f.sig.ret) })
                .collect();
            let letvars =
                generated.funs.iter().map(|f| f.letvars.iter().map(|(x, t)| (x.clone(), inst(t))).collect()).collect();
            Ok(Inference { generated, solution, types, letvars })
        }
        Err(SolveError::Unsat { core, witness }) => {
            let functions = sys
                .topo_order()
                .iter()
                .copied()
                .filter(|&f| !least_prefixpoint(lat, n, nv, &generated.closure(sys, f)).1.is_empty())
                .collect();
            let witness = witness.map(|(i, p)| (cs[i].clone(), p));
            Err(InferError::Unsat { core: core.into_iter().map(|i| cs[i].clone()).collect(), functions, witness })
        }
        Err(e) => Err(InferError::Solver(e)),
    }
}
