//! Big-step reference interpreter.
//!
//! Commands run under `η; A; P ⊢ c ⇝ η'` where `A` is the app owning the
//! command and `P` the permissions of its caller. A call runs the callee's
//! body under the permissions of the calling app, never those of the
//! transitive caller.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ast::{Cmd, CmdKind, Expr, ExprKind};
use crate::perms::PermSet;
use crate::system::{FunId, System};

pub const DEFAULT_FUEL: u64 = 1_000_000;

/// Evaluation environment η.
pub type Env = BTreeMap<String, i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(u64),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("{function} expects {expected} argument(s), found {found}")]
    ArityMismatch { function: String, expected: usize, found: usize },
}

pub struct Interpreter<'s> {
    sys: &'s System,
    consts: BTreeMap<String, i64>,
    fuel: u64,
    steps: u64,
}

impl<'s> Interpreter<'s> {
    pub fn new(sys: &'s System, fuel: u64) -> Self {
        let consts = sys.consts.values().map(|c| (c.name.clone(), c.value)).collect();
        Interpreter { sys, consts, fuel, steps: 0 }
    }

    /// Replaces the value of a declared constant for subsequent runs.
    pub fn set_const(&mut self, name: &str, value: i64) {
        if let Some(v) = self.consts.get_mut(name) {
            *v = value;
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn tick(&mut self) -> Result<(), ExecError> {
        if self.steps >= self.fuel {
            return Err(ExecError::FuelExhausted(self.steps));
        }
        self.steps += 1;
        Ok(())
    }

    pub fn eval(&mut self, env: &Env, e: &Expr) -> Result<i64, ExecError> {
        self.tick()?;
        match &e.kind {
            ExprKind::Int(n) => Ok(*n),
            ExprKind::Var(x) => env
                .get(x)
                .or_else(|| self.consts.get(x))
                .copied()
                .ok_or_else(|| ExecError::UnboundVariable(x.clone())),
            ExprKind::Bin(op, a, b) => {
                let a = self.eval(env, a)?;
                let b = self.eval(env, b)?;
                Ok(op.eval(a, b))
            }
        }
    }

    /// Runs `c` in app `app` for a caller holding `perms`, updating `env`.
    pub fn exec(&mut self, env: &mut Env, app: &str, perms: PermSet, c: &Cmd) -> Result<(), ExecError> {
        self.tick()?;
        match &c.kind {
            CmdKind::Assign(x, e) => {
                let v = self.eval(env, e)?;
                env.insert(x.clone(), v);
            }
            CmdKind::If(e, a, b) => {
                let branch = if self.eval(env, e)? != 0 { a } else { b };
                self.exec(env, app, perms, branch)?;
            }
            CmdKind::While(e, body) => {
                while self.eval(env, e)? != 0 {
                    self.exec(env, app, perms, body)?;
                    self.tick()?;
                }
            }
            CmdKind::Seq(a, b) => {
                self.exec(env, app, perms, a)?;
                self.exec(env, app, perms, b)?;
            }
            CmdKind::LetVar { name, init, body, .. } => {
                let v = self.eval(env, init)?;
                env.insert(name.clone(), v);
                let r = self.exec(env, app, perms, body);
                env.remove(name);
                r?;
            }
            CmdKind::Test { perm, then, els } => {
                let p = self.sys.universe().perm(perm).expect("validated permission");
                let branch = if perms.contains(p) { then } else { els };
                self.exec(env, app, perms, branch)?;
            }
            CmdKind::Call { target, app: callee_app, fun, args } => {
                let id = self
                    .sys
                    .lookup(callee_app, fun)
                    .ok_or_else(|| ExecError::UnknownFunction(format!("{callee_app}.{fun}")))?;
                let vals = args.iter().map(|a| self.eval(env, a)).collect::<Result<Vec<_>, _>>()?;
                let v = self.call(id, &vals, self.sys.theta(app))?;
                env.insert(target.clone(), v);
            }
        }
        Ok(())
    }

    /// Calls a function on behalf of a caller holding `caller`.
    pub fn call(&mut self, id: FunId, args: &[i64], caller: PermSet) -> Result<i64, ExecError> {
        let f = self.sys.function(id);
        if f.params.len() != args.len() {
            return Err(ExecError::ArityMismatch { function: f.qual(), expected: f.params.len(), found: args.len() });
        }
        let mut env: Env = f.params.iter().cloned().zip(args.iter().copied()).collect();
        env.insert(f.ret_var.clone(), 0);
        self.exec(&mut env, &f.app, caller, &f.body)?;
        Ok(env[&f.ret_var])
    }

    /// Runs a function body from an arbitrary initial environment over its
    /// parameters and result variable (used by the noninterference harness).
    pub fn run_body(&mut self, id: FunId, mut env: Env, caller: PermSet) -> Result<Env, ExecError> {
        let f = self.sys.function(id);
        self.exec(&mut env, &f.app, caller, &f.body)?;
        Ok(env)
    }
}

/// One top-level call with a fresh step budget.
pub fn call_function(sys: &System, id: FunId, args: &[i64], caller: PermSet, fuel: u64) -> Result<i64, ExecError> {
    Interpreter::new(sys, fuel).call(id, args, caller)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_cmd, parse_expr};

    const SRC: &str = r#"
        lattice { levels L, H; order L < H; }
        permissions { p }
        app A perms {} {
          fun f(x) infer { init r = 0 in { r := call B.g(x); return r } }
        }
        app B perms {} {
          fun g(x) infer { init r = 0 in { test(p) r := 0 else r := x; return r } }
        }
        app C perms {p} {
          const SECRET : H = 42;
          fun getsecret() infer { init r = 0 in { test(p) r := SECRET else r := 0; return r } }
        }
        app M perms {p} {
          fun main() infer { init r = 0 in {
            letvar xh = 0 in { xh := call C.getsecret(); r := call A.f(xh) };
            return r
          } }
          fun count(n) infer { init r = 0 in { while n do { n := n - 1; r := r + 2 }; return r } }
        }
    "#;

    fn sys() -> System {
        System::from_source(SRC).unwrap()
    }

    #[test]
    fn expressions() {
        let s = sys();
        let mut it = Interpreter::new(&s, DEFAULT_FUEL);
        let env: Env = [("x".to_string(), 3), ("y".to_string(), 5)].into_iter().collect();
        assert_eq!(it.eval(&env, &parse_expr("x + 1").unwrap()), Ok(4));
        assert_eq!(it.eval(&env, &parse_expr("0 == 0").unwrap()), Ok(1));
        assert_eq!(it.eval(&env, &parse_expr("x < y").unwrap()), Ok(1));
        assert_eq!(it.eval(&env, &parse_expr("SECRET * 2").unwrap()), Ok(84));
        assert_eq!(it.eval(&Env::new(), &parse_expr("z").unwrap()), Err(ExecError::UnboundVariable("z".into())));
    }

    #[test]
    fn test_branches_on_caller_permissions() {
        let s = sys();
        let c = parse_cmd("test(p) r := 1 else r := 0").unwrap();
        let p = s.universe().set_of(&["p"]).unwrap();
        for (perms, want) in [(p, 1), (PermSet::EMPTY, 0)] {
            let mut env = Env::new();
            Interpreter::new(&s, DEFAULT_FUEL).exec(&mut env, "A", perms, &c).unwrap();
            assert_eq!(env["r"], want);
        }
    }

    #[test]
    fn while_and_letvar() {
        let s = sys();
        let mut env: Env = [("x".to_string(), 3)].into_iter().collect();
        let mut it = Interpreter::new(&s, DEFAULT_FUEL);
        it.exec(&mut env, "A", PermSet::EMPTY, &parse_cmd("while x do x := x - 1").unwrap()).unwrap();
        assert_eq!(env["x"], 0);
        let mut env = Env::new();
        it.exec(&mut env, "A", PermSet::EMPTY, &parse_cmd("letvar y = 1 in r := y").unwrap()).unwrap();
        assert_eq!(env.get("r"), Some(&1));
        assert!(!env.contains_key("y"));
    }

    #[test]
    fn callee_runs_under_caller_app_permissions() {
        let s = sys();
        let p = s.universe().set_of(&["p"]).unwrap();
        let main = s.lookup("M", "main").unwrap();
        // Inside B.g the test sees Θ(A) = ∅, so the secret flows back out.
        assert_eq!(call_function(&s, main, &[], p, DEFAULT_FUEL), Ok(42));
        assert_eq!(call_function(&s, main, &[], PermSet::EMPTY, DEFAULT_FUEL), Ok(42));
        let gs = s.lookup("C", "getsecret").unwrap();
        assert_eq!(call_function(&s, gs, &[], p, DEFAULT_FUEL), Ok(42));
        assert_eq!(call_function(&s, gs, &[], PermSet::EMPTY, DEFAULT_FUEL), Ok(0));
    }

    #[test]
    fn fuel_bounds_loops() {
        let s = sys();
        let count = s.lookup("M", "count").unwrap();
        assert_eq!(call_function(&s, count, &[5], PermSet::EMPTY, DEFAULT_FUEL), Ok(10));
        assert!(matches!(call_function(&s, count, &[-1], PermSet::EMPTY, 10_000), Err(ExecError::FuelExhausted(_))));
    }

    #[test]
    fn wrapping_arithmetic() {
        let s = sys();
        let mut it = Interpreter::new(&s, DEFAULT_FUEL);
        let env: Env = [("x".to_string(), i64::MAX)].into_iter().collect();
        assert_eq!(it.eval(&env, &parse_expr("x + 1").unwrap()), Ok(i64::MIN));
    }
}
