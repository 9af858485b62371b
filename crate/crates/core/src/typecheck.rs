//! Algorithmic type checking with the syntax-directed trace rules.
//!
//! A command is checked under a typing environment and the permission trace
//! accumulated from enclosing `test`s; each rule's side condition is a
//! partial subtyping `s ≤_Λ t`, and a failure names the first permission set
//! at which it breaks.

use std::fmt;

use thiserror::Error;

use crate::ast::{Cmd, CmdKind, Expr, ExprKind, Span};
use crate::infer::{self, Term};
use crate::perms::PermSet;
use crate::system::{FunId, System};
use crate::trace::{Literal, PermissionTrace};
use crate::types::{BaseType, FunctionType};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeErrorKind {
    /// An assignment or a branch/loop guard flows into a less secure type.
    SubtypeViolation,
    /// The argument at this position exceeds the callee's projected parameter type.
    CallArgViolation(usize),
    /// The callee's projected result exceeds the target's type.
    ReturnViolation,
    /// A letvar initializer exceeds the letvar's annotation.
    AnnotationMismatch,
    /// The function, or a function it calls, has no type annotation.
    MissingAnnotation,
}

impl fmt::Display for TypeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeErrorKind::SubtypeViolation => write!(f, "subtype violation"),
            TypeErrorKind::CallArgViolation(i) => write!(f, "call argument {} violation", i + 1),
            TypeErrorKind::ReturnViolation => write!(f, "return violation"),
            TypeErrorKind::AnnotationMismatch => write!(f, "annotation mismatch"),
            TypeErrorKind::MissingAnnotation => write!(f, "missing annotation"),
        }
    }
}

impl TypeErrorKind {
    pub fn name(&self) -> &'static str {
        match self {
            TypeErrorKind::SubtypeViolation => "SubtypeViolation",
            TypeErrorKind::CallArgViolation(_) => "CallArgViolation",
            TypeErrorKind::ReturnViolation => "ReturnViolation",
            TypeErrorKind::AnnotationMismatch => "AnnotationMismatch",
            TypeErrorKind::MissingAnnotation => "MissingAnnotation",
        }
    }
}

/// `lhs ≤_trace rhs` fails at `witness`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{span}: {function}: {kind}: {detail}")]
pub struct CheckError {
    pub function: String,
    pub kind: TypeErrorKind,
    pub span: Span,
    pub detail: String,
    pub lhs: BaseType,
    pub rhs: BaseType,
    pub trace: PermissionTrace,
    pub witness: PermSet,
}

/// A function that type checks, with the types the derivation used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checked {
    pub ty: FunctionType,
    /// Writing-effect type of the body.
    pub body: BaseType,
    pub letvars: Vec<(String, BaseType)>,
}

#[derive(Debug, Clone)]
pub struct SystemCheck {
    /// One verdict per function, callees before callers.
    pub results: Vec<(FunId, Result<Checked, CheckError>)>,
}

impl SystemCheck {
    pub fn is_well_typed(&self) -> bool {
        self.results.iter().all(|(_, r)| r.is_ok())
    }

    pub fn errors(&self) -> impl Iterator<Item = &CheckError> {
        self.results.iter().filter_map(|(_, r)| r.as_ref().err())
    }
}

/// Checks every function against its annotation, in call-graph order.
pub fn check_system(sys: &System) -> SystemCheck {
    let generated = infer::generate(sys);
    let results = sys.topo_order().iter().map(|&id| (id, check_with(sys, &generated, id))).collect();
    SystemCheck { results }
}

pub fn check_function(sys: &System, id: FunId) -> Result<Checked, CheckError> {
    check_with(sys, &infer::generate(sys), id)
}

fn missing(sys: &System, id: FunId, detail: String) -> CheckError {
    let f = sys.function(id);
    let bottom = sys.domain.bottom();
    CheckError {
        function: f.qual(),
        kind: TypeErrorKind::MissingAnnotation,
        span: f.span,
        detail,
        lhs: bottom.clone(),
        rhs: bottom,
        trace: PermissionTrace::EPSILON,
        witness: PermSet::EMPTY,
    }
}

fn check_with(sys: &System, generated: &infer::Generated, id: FunId) -> Result<Checked, CheckError> {
    let f = sys.function(id);
    let ty = f.declared_type().ok_or_else(|| missing(sys, id, format!("{} is not fully annotated", f.qual())))?;
    for &callee in &f.callees {
        if !sys.function(callee).is_annotated() {
            let q = sys.function(callee).qual();
            return Err(missing(sys, id, format!("callee {q} is not fully annotated")));
        }
    }
    // Unannotated letvars take the least types that satisfy this body's constraints.
    let own = &generated.fun(id).own;
    let (theta, _) = infer::least_prefixpoint(sys.lattice(), sys.universe().count(), generated.vars.len(), own);
    let letvars: Vec<(String, BaseType)> = generated
        .fun(id)
        .letvars
        .iter()
        .map(|(x, t)| {
            let ty = match t {
                Term::Ground(g) => g.clone(),
                other => other.eval(sys.lattice(), sys.universe().count(), &theta),
            };
            (x.clone(), ty)
        })
        .collect();
    let mut gamma: Vec<(String, BaseType)> = f.params.iter().cloned().zip(ty.params.iter().cloned()).collect();
    gamma.push((f.ret_var.clone(), ty.ret.clone()));
    let mut cx = Cx { sys, function: f.qual(), theta: sys.theta(&f.app), gamma, letvars: &letvars };
    let body = cx.cmd(&f.body, PermissionTrace::EPSILON)?;
    Ok(Checked { ty, body, letvars })
}

/// The least type of an expression: literals are bottom, operators join.
pub fn type_expr(sys: &System, e: &Expr, var: &dyn Fn(&str) -> BaseType) -> BaseType {
    match &e.kind {
        ExprKind::Int(_) => sys.domain.bottom(),
        ExprKind::Var(x) => var(x),
        ExprKind::Bin(_, a, b) => type_expr(sys, a, var).join(sys.lattice(), &type_expr(sys, b, var)),
    }
}

struct Cx<'a> {
    sys: &'a System,
    function: String,
    theta: PermSet,
    gamma: Vec<(String, BaseType)>,
    letvars: &'a [(String, BaseType)],
}

impl Cx<'_> {
    fn lookup(&self, x: &str) -> BaseType {
        if let Some((_, t)) = self.gamma.iter().rev().find(|(n, _)| n == x) {
            return t.clone();
        }
        self.sys.consts.get(x).expect("validated: closed function").ty.clone()
    }

    fn expr(&self, e: &Expr) -> BaseType {
        type_expr(self.sys, e, &|x| self.lookup(x))
    }

    fn require(
        &self,
        lhs: BaseType,
        rhs: &BaseType,
        trace: PermissionTrace,
        kind: TypeErrorKind,
        span: Span,
        detail: impl FnOnce() -> String,
    ) -> Result<(), CheckError> {
        match lhs.violation_under(self.sys.lattice(), rhs, trace) {
            None => Ok(()),
            Some(witness) => Err(CheckError {
                function: self.function.clone(),
                kind,
                span,
                detail: detail(),
                lhs,
                rhs: rhs.clone(),
                trace,
                witness,
            }),
        }
    }

    fn cmd(&mut self, c: &Cmd, trace: PermissionTrace) -> Result<BaseType, CheckError> {
        let lat = self.sys.lattice();
        match &c.kind {
            CmdKind::Assign(x, e) => {
                let gx = self.lookup(x);
                self.require(self.expr(e), &gx, trace, TypeErrorKind::SubtypeViolation, c.span, || {
                    format!("assignment to `{x}`")
                })?;
                Ok(gx)
            }
            CmdKind::If(e, a, b) => {
                let t = self.cmd(a, trace)?.meet(lat, &self.cmd(b, trace)?);
                self.require(self.expr(e), &t, trace, TypeErrorKind::SubtypeViolation, c.span, || {
                    "if guard".to_string()
                })?;
                Ok(t)
            }
            CmdKind::While(e, body) => {
                let t = self.cmd(body, trace)?;
                self.require(self.expr(e), &t, trace, TypeErrorKind::SubtypeViolation, c.span, || {
                    "while guard".to_string()
                })?;
                Ok(t)
            }
            CmdKind::Seq(a, b) => Ok(self.cmd(a, trace)?.meet(lat, &self.cmd(b, trace)?)),
            CmdKind::LetVar { name, ann, init, body } => {
                let ty = self.letvars.iter().find(|(x, _)| x == name).expect("letvar collected").1.clone();
                let kind = if ann.is_some() { TypeErrorKind::AnnotationMismatch } else { TypeErrorKind::SubtypeViolation };
                self.require(self.expr(init), &ty, trace, kind, c.span, || format!("initializer of letvar `{name}`"))?;
                self.gamma.push((name.clone(), ty));
                let t = self.cmd(body, trace);
                self.gamma.pop();
                t
            }
            CmdKind::Call { target, app, fun, args } => {
                let callee = self.sys.lookup(app, fun).expect("validated call");
                let ft = self.sys.function(callee).declared_type().expect("callee annotations checked");
                for (i, (arg, pt)) in args.iter().zip(&ft.params).enumerate() {
                    self.require(self.expr(arg), &pt.project(self.theta), trace, TypeErrorKind::CallArgViolation(i), c.span, || {
                        format!("argument {} of call to {app}.{fun}", i + 1)
                    })?;
                }
                let gx = self.lookup(target);
                self.require(ft.ret.project(self.theta), &gx, trace, TypeErrorKind::ReturnViolation, c.span, || {
                    format!("result of {app}.{fun} assigned to `{target}`")
                })?;
                Ok(gx)
            }
            CmdKind::Test { perm, then, els } => {
                let p = self.sys.universe().perm(perm).expect("validated permission");
                let t1 = self.cmd(then, trace.then(Literal::plus(p)))?;
                let t2 = self.cmd(els, trace.then(Literal::minus(p)))?;
                Ok(BaseType::merge(p, &t1, &t2))
            }
        }
    }
}
