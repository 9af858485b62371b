//! Constraint generation.
//!
//! Walks each function body with the trace rules, replacing every unknown
//! type by a fresh variable and collecting the partial-subtyping side
//! conditions as guarded constraints. Functions are visited callees first,
//! so a call site can refer to the callee's (possibly variable) signature.

use crate::ast::{Cmd, CmdKind, Expr, ExprKind, Span};
use crate::perms::PermSet;
use crate::system::{FunId, System};
use crate::trace::{Literal, PermissionTrace};

use super::term::{Constraint, Origin, OriginKind, Term, TypeVar, VarInfo, VarRole};

/// A function signature whose positions are variables or ground types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub params: Vec<Term>,
    pub ret: Term,
}

#[derive(Debug, Clone)]
pub struct FunConstraints {
    pub fun: FunId,
    pub sig: Signature,
    /// Constraints from this function's body alone; call sites refer to the
    /// callee's constraints rather than copying them.
    pub own: Vec<Constraint>,
    /// Letvar name to its (variable or annotated) type.
    pub letvars: Vec<(String, Term)>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub vars: Vec<VarInfo>,
    pub funs: Vec<FunConstraints>,
}

impl Generated {
    pub fn fun(&self, id: FunId) -> &FunConstraints {
        &self.funs[id.0]
    }

    /// Every constraint of the system.
    pub fn all(&self) -> Vec<Constraint> {
        self.funs.iter().flat_map(|f| f.own.iter().cloned()).collect()
    }

    /// The constraints a function's typing depends on: its own and, transitively, its callees'.
    pub fn closure(&self, sys: &System, id: FunId) -> Vec<Constraint> {
        let mut seen = vec![false; self.funs.len()];
        let mut stack = vec![id];
        let mut out = Vec::new();
        while let Some(f) = stack.pop() {
            if std::mem::replace(&mut seen[f.0], true) {
                continue;
            }
            out.extend(self.funs[f.0].own.iter().cloned());
            stack.extend(sys.function(f).callees.iter().copied());
        }
        out
    }

    pub fn letvar(&self, id: FunId, name: &str) -> Option<&Term> {
        self.fun(id).letvars.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Generates constraints for every function. Annotated positions (parameters,
/// results, letvars) are ground; the rest get fresh variables.
pub fn generate(sys: &System) -> Generated {
    let mut vars = Vec::new();
    let mut done: Vec<Option<FunConstraints>> = vec![None; sys.functions.len()];
    for &id in sys.topo_order() {
        let fc = gen_function(sys, id, &mut vars, &done);
        done[id.0] = Some(fc);
    }
    Generated { vars, funs: done.into_iter().map(|f| f.expect("every function is in the topological order")).collect() }
}

fn fresh(vars: &mut Vec<VarInfo>, role: VarRole, span: Span) -> Term {
    let v = TypeVar(vars.len() as u32);
    vars.push(VarInfo { role, span });
    Term::Var(v)
}

fn gen_function(sys: &System, id: FunId, vars: &mut Vec<VarInfo>, done: &[Option<FunConstraints>]) -> FunConstraints {
    let f = sys.function(id);
    let params: Vec<Term> = f
        .param_types
        .iter()
        .enumerate()
        .map(|(i, t)| match t {
            Some(t) => Term::Ground(t.clone()),
            None => fresh(vars, VarRole::Param { fun: id, index: i, name: f.params[i].clone() }, f.span),
        })
        .collect();
    let ret = match &f.ret_type {
        Some(t) => Term::Ground(t.clone()),
        None => fresh(vars, VarRole::Return { fun: id }, f.span),
    };
    let mut env: Vec<(String, Term)> = f.params.iter().cloned().zip(params.iter().cloned()).collect();
    env.push((f.ret_var.clone(), ret.clone()));
    let mut g = Gen { sys, fun: id, theta: sys.theta(&f.app), env, out: Vec::new(), letvars: Vec::new(), vars, done };
    g.cmd(&f.body, PermissionTrace::EPSILON);
    FunConstraints { fun: id, sig: Signature { params, ret }, own: g.out, letvars: g.letvars }
}

struct Gen<'a> {
    sys: &'a System,
    fun: FunId,
    theta: PermSet,
    env: Vec<(String, Term)>,
    out: Vec<Constraint>,
    letvars: Vec<(String, Term)>,
    vars: &'a mut Vec<VarInfo>,
    done: &'a [Option<FunConstraints>],
}

impl Gen<'_> {
    fn lookup(&self, x: &str) -> Term {
        if let Some((_, t)) = self.env.iter().rev().find(|(n, _)| n == x) {
            return t.clone();
        }
        let c = self.sys.consts.get(x).expect("validated: closed function");
        Term::Ground(c.ty.clone())
    }

    fn push(&mut self, guard: PermissionTrace, lhs: Term, rhs: Term, kind: OriginKind, span: Span) {
        let origin = Origin { fun: Some(self.fun), span, kind };
        self.out.push(Constraint { guard, lhs, rhs, origin });
    }

    fn expr(&self, e: &Expr) -> Term {
        match &e.kind {
            ExprKind::Int(_) => Term::Ground(self.sys.domain.bottom()),
            ExprKind::Var(x) => self.lookup(x),
            ExprKind::Bin(_, a, b) => Term::join(self.expr(a), self.expr(b)),
        }
    }

    fn cmd(&mut self, c: &Cmd, guard: PermissionTrace) -> Term {
        match &c.kind {
            CmdKind::Assign(x, e) => {
                let t = self.expr(e);
                let gx = self.lookup(x);
                self.push(guard, t, gx.clone(), OriginKind::Assign, c.span);
                gx
            }
            CmdKind::If(e, a, b) => {
                let t1 = self.cmd(a, guard);
                let t2 = self.cmd(b, guard);
                let te = self.expr(e);
                let m = Term::meet(t1, t2);
                self.push(guard, te, m.clone(), OriginKind::Branch, c.span);
                m
            }
            CmdKind::While(e, body) => {
                let s = self.expr(e);
                let t = self.cmd(body, guard);
                self.push(guard, s, t.clone(), OriginKind::Loop, c.span);
                t
            }
            CmdKind::Seq(a, b) => {
                let t1 = self.cmd(a, guard);
                let t2 = self.cmd(b, guard);
                Term::meet(t1, t2)
            }
            CmdKind::LetVar { name, ann, init, body } => {
                let s = self.expr(init);
                let a = match ann {
                    Some(syn) => Term::Ground(self.sys.domain.resolve(syn).expect("validated annotation")),
                    None => fresh(self.vars, VarRole::LetVar { fun: self.fun, name: name.clone() }, c.span),
                };
                self.letvars.push((name.clone(), a.clone()));
                self.push(guard, s, a.clone(), OriginKind::LetInit, c.span);
                self.env.push((name.clone(), a));
                let t = self.cmd(body, guard);
                self.env.pop();
                t
            }
            CmdKind::Call { target, app, fun, args } => {
                let callee = self.sys.lookup(app, fun).expect("validated call");
                let sig = self.done[callee.0].as_ref().expect("callees are generated first").sig.clone();
                for (i, (arg, pt)) in args.iter().zip(sig.params).enumerate() {
                    let s = self.expr(arg);
                    self.push(guard, s, Term::project(pt, self.theta), OriginKind::CallArg(i), c.span);
                }
                let gx = self.lookup(target);
                self.push(guard, Term::project(sig.ret, self.theta), gx.clone(), OriginKind::CallResult, c.span);
                gx
            }
            CmdKind::Test { perm, then, els } => {
                let p = self.sys.universe().perm(perm).expect("validated permission");
                let t1 = self.cmd(then, guard.then(Literal::plus(p)));
                let t2 = self.cmd(els, guard.then(Literal::minus(p)));
                Term::merge(p, t1, t2)
            }
        }
    }
}
