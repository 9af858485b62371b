//! Resolved and validated systems.
//!
//! Building a [`System`] from its syntax tree loads the lattice and the
//! permission universe, resolves type annotations, and enforces the
//! well-formedness assumptions the analyses rely on: closed functions, an
//! acyclic call graph, unique bound names, and no permission tested twice on
//! one nesting path.

use std::collections::{HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::ast::*;
use crate::lattice::{Lattice, LatticeError, Level};
use crate::perms::{PermError, PermSet, PermissionUniverse};
use crate::types::{BaseType, Domain, FunctionType, TypeError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SystemError {
    #[error("{span}: {source}")]
    Lattice { source: LatticeError, span: Span },
    #[error("permissions: {0}")]
    Permissions(PermError),
    #[error("{span}: {source}")]
    Type { source: TypeError, span: Span },
    #[error("{span}: {kind} `{name}` is declared more than once")]
    DuplicateName { kind: &'static str, name: String, span: Span },
    #[error("{span}: unknown {kind} `{name}`")]
    UnknownReference { kind: &'static str, name: String, span: Span },
    #[error("{span}: function {function} is not closed: `{var}` is not a parameter, result, letvar or constant")]
    OpenFunction { function: String, var: String, span: Span },
    #[error("recursive call cycle: {}", .cycle.join(" -> "))]
    RecursiveCall { cycle: Vec<String> },
    #[error("{span}: permission `{perm}` is already tested by an enclosing test")]
    RepeatedPermissionTest { perm: String, span: Span },
    #[error("{span}: {callee} expects {expected} argument(s), found {found}")]
    ArityMismatch { callee: String, expected: usize, found: usize, span: Span },
    #[error("{span}: cannot assign to constant `{name}`")]
    AssignToConstant { name: String, span: Span },
    #[error("{span}: letvar `{name}` occurs in its own initializer")]
    LetVarSelfReference { name: String, span: Span },
    #[error("{span}: constant `{name}` must have a permission-independent type (a single level)")]
    NonConstantGlobal { name: String, span: Span },
}

/// All diagnostics from building a system, in source order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemErrors(pub Vec<SystemError>);

impl fmt::Display for SystemErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SystemErrors {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FunId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub app: String,
    pub name: String,
    pub params: Vec<String>,
    pub param_types: Vec<Option<BaseType>>,
    pub ret_type: Option<BaseType>,
    pub ret_var: String,
    pub body: Cmd,
    pub span: Span,
    /// Distinct callees in first-call order.
    pub callees: Vec<FunId>,
    pub rank: usize,
}

impl Function {
    pub fn qual(&self) -> String {
        format!("{}.{}", self.app, self.name)
    }

    /// The declared type, if every position is annotated.
    pub fn declared_type(&self) -> Option<FunctionType> {
        let params = self.param_types.iter().cloned().collect::<Option<Vec<_>>>()?;
        Some(FunctionType { params, ret: self.ret_type.clone()? })
    }

    pub fn is_annotated(&self) -> bool {
        self.ret_type.is_some() && self.param_types.iter().all(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constant {
    pub name: String,
    pub value: i64,
    pub level: Level,
    pub ty: BaseType,
}

#[derive(Debug, Clone)]
pub struct System {
    pub domain: Domain,
    /// Θ: permissions granted to each app, in declaration order.
    pub theta: IndexMap<String, PermSet>,
    pub functions: Vec<Function>,
    pub consts: IndexMap<String, Constant>,
    pub ast: SystemAst,
    index: HashMap<String, FunId>,
    topo: Vec<FunId>,
}

impl System {
    pub fn from_source(src: &str) -> Result<System, BuildError> {
        let ast = crate::parser::parse_system(src)?;
        Ok(System::build(ast)?)
    }

    pub fn build(ast: SystemAst) -> Result<System, SystemErrors> {
        let mut errs = Vec::new();
        let lattice = Lattice::load(&ast.lattice.levels, &ast.lattice.order)
            .map_err(|source| SystemErrors(vec![SystemError::Lattice { source, span: ast.lattice.span }]))?;
        let universe = PermissionUniverse::new(&ast.permissions)
            .map_err(|e| SystemErrors(vec![SystemError::Permissions(e)]))?;
        let domain = Domain::new(lattice, universe);

        let mut consts: IndexMap<String, Constant> = IndexMap::new();
        for c in ast.consts() {
            if consts.contains_key(&c.name) {
                errs.push(SystemError::DuplicateName { kind: "constant", name: c.name.clone(), span: c.span });
                continue;
            }
            match domain.resolve(&c.ty) {
                Ok(ty) => match ty.constant() {
                    Some(level) => {
                        consts.insert(c.name.clone(), Constant { name: c.name.clone(), value: c.value, level, ty });
                    }
                    None => errs.push(SystemError::NonConstantGlobal { name: c.name.clone(), span: c.span }),
                },
                Err(source) => errs.push(SystemError::Type { source, span: c.span }),
            }
        }

        let mut theta = IndexMap::new();
        let mut functions = Vec::new();
        let mut index = HashMap::new();
        for app in ast.apps() {
            if theta.contains_key(&app.name) {
                errs.push(SystemError::DuplicateName { kind: "app", name: app.name.clone(), span: app.span });
                continue;
            }
            let perms = match domain.universe.set_of(&app.perms) {
                Ok(s) => s,
                Err(e) => {
                    let name = match e {
                        PermError::UnknownPermission(n) => n,
                        other => other.to_string(),
                    };
                    errs.push(SystemError::UnknownReference { kind: "permission", name, span: app.span });
                    PermSet::EMPTY
                }
            };
            theta.insert(app.name.clone(), perms);
            for f in app.funs() {
                let qual = format!("{}.{}", app.name, f.name);
                if index.contains_key(&qual) {
                    errs.push(SystemError::DuplicateName { kind: "function", name: qual, span: f.span });
                    continue;
                }
                let mut resolve = |t: &Option<crate::types::TypeSyntax>, span: Span| -> Option<BaseType> {
                    let t = t.as_ref()?;
                    match domain.resolve(t) {
                        Ok(b) => Some(b),
                        Err(source) => {
                            errs.push(SystemError::Type { source, span });
                            None
                        }
                    }
                };
                let param_types = f.params.iter().map(|p| resolve(&p.ann, p.span)).collect();
                let ret_type = resolve(&f.ret_ann, f.span);
                index.insert(qual, FunId(functions.len()));
                functions.push(Function {
                    app: app.name.clone(),
                    name: f.name.clone(),
                    params: f.params.iter().map(|p| p.name.clone()).collect(),
                    param_types,
                    ret_type,
                    ret_var: f.ret_var.clone(),
                    body: f.body.clone(),
                    span: f.span,
                    callees: Vec::new(),
                    rank: 0,
                });
            }
        }

        let mut sys = System { domain, theta, functions, consts, ast, index, topo: Vec::new() };
        for i in 0..sys.functions.len() {
            let callees = sys.check_function(FunId(i), &mut errs);
            sys.functions[i].callees = callees;
        }
        if errs.is_empty() {
            match sys.topological_order() {
                Ok(order) => sys.topo = order,
                Err(cycle) => errs.push(SystemError::RecursiveCall { cycle }),
            }
        }
        if !errs.is_empty() {
            return Err(SystemErrors(errs));
        }
        let mut ranks = vec![0usize; sys.functions.len()];
        for id in &sys.topo {
            ranks[id.0] = cmd_rank(&sys.functions[id.0].body, &|app, fun| {
                sys.lookup(app, fun).map(|c| ranks[c.0]).unwrap_or(0)
            });
        }
        for (f, r) in sys.functions.iter_mut().zip(ranks) {
            f.rank = r;
        }
        Ok(sys)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.domain.lattice
    }

    pub fn universe(&self) -> &PermissionUniverse {
        &self.domain.universe
    }

    pub fn lookup(&self, app: &str, fun: &str) -> Option<FunId> {
        self.index.get(&format!("{app}.{fun}")).copied()
    }

    pub fn lookup_qual(&self, qual: &str) -> Option<FunId> {
        self.index.get(qual).copied()
    }

    pub fn function(&self, id: FunId) -> &Function {
        &self.functions[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = FunId> {
        (0..self.functions.len()).map(FunId)
    }

    /// Functions with every callee before its callers.
    pub fn topo_order(&self) -> &[FunId] {
        &self.topo
    }

    pub fn theta(&self, app: &str) -> PermSet {
        self.theta.get(app).copied().unwrap_or_default()
    }

    pub fn is_fully_annotated(&self) -> bool {
        self.functions.iter().all(Function::is_annotated)
    }

    fn check_function(&self, id: FunId, errs: &mut Vec<SystemError>) -> Vec<FunId> {
        let f = &self.functions[id.0];
        let mut cx = FunCheck { sys: self, qual: f.qual(), errs, bound: HashSet::new(), callees: Vec::new() };
        let mut scope: Vec<String> = Vec::new();
        for p in &f.params {
            cx.bind(p, f.span);
            scope.push(p.clone());
        }
        cx.bind(&f.ret_var, f.span);
        scope.push(f.ret_var.clone());
        cx.cmd(&f.body, &mut scope, &mut Vec::new());
        cx.callees
    }

    /// Post-order DFS over the call graph, in declaration order.
    fn topological_order(&self) -> Result<Vec<FunId>, Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        fn visit(
            sys: &System,
            id: FunId,
            marks: &mut [Mark],
            stack: &mut Vec<FunId>,
            out: &mut Vec<FunId>,
        ) -> Result<(), Vec<String>> {
            match marks[id.0] {
                Mark::Done => return Ok(()),
                Mark::Active => {
                    let from = stack.iter().position(|x| *x == id).unwrap();
                    let mut cycle: Vec<String> = stack[from..].iter().map(|f| sys.function(*f).qual()).collect();
                    cycle.push(sys.function(id).qual());
                    return Err(cycle);
                }
                Mark::New => {}
            }
            marks[id.0] = Mark::Active;
            stack.push(id);
            for c in &sys.functions[id.0].callees {
                visit(sys, *c, marks, stack, out)?;
            }
            stack.pop();
            marks[id.0] = Mark::Done;
            out.push(id);
            Ok(())
        }
        let mut marks = vec![Mark::New; self.functions.len()];
        let mut out = Vec::new();
        for id in self.ids() {
            visit(self, id, &mut marks, &mut Vec::new(), &mut out)?;
        }
        Ok(out)
    }
}

/// Error from parsing plus building.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Parse(#[from] crate::parser::ParseError),
    #[error(transparent)]
    System(#[from] SystemErrors),
}

struct FunCheck<'a> {
    sys: &'a System,
    qual: String,
    errs: &'a mut Vec<SystemError>,
    bound: HashSet<String>,
    callees: Vec<FunId>,
}

impl FunCheck<'_> {
    fn bind(&mut self, name: &str, span: Span) {
        if !self.bound.insert(name.to_string()) {
            self.errs.push(SystemError::DuplicateName { kind: "variable", name: name.to_string(), span });
        } else if self.sys.consts.contains_key(name) {
            self.errs.push(SystemError::DuplicateName { kind: "variable or constant", name: name.to_string(), span });
        }
    }

    fn expr(&mut self, e: &Expr, scope: &[String]) {
        match &e.kind {
            ExprKind::Int(_) => {}
            ExprKind::Var(x) => {
                if !scope.contains(x) && !self.sys.consts.contains_key(x) {
                    self.errs.push(SystemError::OpenFunction { function: self.qual.clone(), var: x.clone(), span: e.span });
                }
            }
            ExprKind::Bin(_, a, b) => {
                self.expr(a, scope);
                self.expr(b, scope);
            }
        }
    }

    fn target(&mut self, x: &str, span: Span, scope: &[String]) {
        if scope.iter().any(|y| y == x) {
            return;
        }
        if self.sys.consts.contains_key(x) {
            self.errs.push(SystemError::AssignToConstant { name: x.to_string(), span });
        } else {
            self.errs.push(SystemError::OpenFunction { function: self.qual.clone(), var: x.to_string(), span });
        }
    }

    fn cmd(&mut self, c: &Cmd, scope: &mut Vec<String>, tested: &mut Vec<String>) {
        match &c.kind {
            CmdKind::Assign(x, e) => {
                self.expr(e, scope);
                self.target(x, c.span, scope);
            }
            CmdKind::If(e, a, b) => {
                self.expr(e, scope);
                self.cmd(a, scope, tested);
                self.cmd(b, scope, tested);
            }
            CmdKind::While(e, body) => {
                self.expr(e, scope);
                self.cmd(body, scope, tested);
            }
            CmdKind::Seq(a, b) => {
                self.cmd(a, scope, tested);
                self.cmd(b, scope, tested);
            }
            CmdKind::LetVar { name, ann, init, body } => {
                if init.mentions(name) {
                    self.errs.push(SystemError::LetVarSelfReference { name: name.clone(), span: c.span });
                } else {
                    self.expr(init, scope);
                }
                if let Some(t) = ann {
                    if let Err(source) = self.sys.domain.resolve(t) {
                        self.errs.push(SystemError::Type { source, span: c.span });
                    }
                }
                self.bind(name, c.span);
                scope.push(name.clone());
                self.cmd(body, scope, tested);
                scope.pop();
            }
            CmdKind::Call { target, app, fun, args } => {
                for a in args {
                    self.expr(a, scope);
                }
                self.target(target, c.span, scope);
                if !self.sys.theta.contains_key(app) {
                    self.errs.push(SystemError::UnknownReference { kind: "app", name: app.clone(), span: c.span });
                    return;
                }
                match self.sys.lookup(app, fun) {
                    None => self.errs.push(SystemError::UnknownReference {
                        kind: "function",
                        name: format!("{app}.{fun}"),
                        span: c.span,
                    }),
                    Some(id) => {
                        let callee = self.sys.function(id);
                        if callee.params.len() != args.len() {
                            self.errs.push(SystemError::ArityMismatch {
                                callee: callee.qual(),
                                expected: callee.params.len(),
                                found: args.len(),
                                span: c.span,
                            });
                        }
                        if !self.callees.contains(&id) {
                            self.callees.push(id);
                        }
                    }
                }
            }
            CmdKind::Test { perm, then, els } => {
                if self.sys.domain.universe.perm(perm).is_err() {
                    self.errs.push(SystemError::UnknownReference { kind: "permission", name: perm.clone(), span: c.span });
                }
                if tested.contains(perm) {
                    self.errs.push(SystemError::RepeatedPermissionTest { perm: perm.clone(), span: c.span });
                }
                tested.push(perm.clone());
                self.cmd(then, scope, tested);
                self.cmd(els, scope, tested);
                tested.pop();
            }
        }
    }
}

/// `rank(c)`: the depth of the call chains rooted at `c`.
pub fn cmd_rank(c: &Cmd, callee_rank: &dyn Fn(&str, &str) -> usize) -> usize {
    match &c.kind {
        CmdKind::Assign(..) => 0,
        CmdKind::If(_, a, b) | CmdKind::Seq(a, b) => cmd_rank(a, callee_rank).max(cmd_rank(b, callee_rank)),
        CmdKind::Test { then, els, .. } => cmd_rank(then, callee_rank).max(cmd_rank(els, callee_rank)),
        CmdKind::While(_, body) | CmdKind::LetVar { body, .. } => cmd_rank(body, callee_rank),
        CmdKind::Call { app, fun, .. } => callee_rank(app, fun) + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "lattice { levels L, H; order L < H; } permissions { p }\n";

    fn build(body: &str) -> Result<System, Vec<SystemError>> {
        let src = format!("{HEADER}{body}");
        match System::from_source(&src) {
            Ok(s) => Ok(s),
            Err(BuildError::System(e)) => Err(e.0),
            Err(BuildError::Parse(e)) => panic!("parse error: {e}"),
        }
    }

    #[test]
    fn self_recursion_is_rejected() {
        let errs = build("app A perms {} { fun f() infer { init r = 0 in { r := call A.f(); return r } } }").unwrap_err();
        assert!(matches!(&errs[0], SystemError::RecursiveCall { cycle } if cycle == &["A.f", "A.f"]));
    }

    #[test]
    fn mutual_recursion_lists_the_cycle() {
        let errs = build(
            "app A perms {} {
               fun f() infer { init r = 0 in { r := call A.g(); return r } }
               fun g() infer { init r = 0 in { r := call A.f(); return r } }
             }",
        )
        .unwrap_err();
        assert!(matches!(&errs[0], SystemError::RecursiveCall { cycle } if cycle.len() == 3));
    }

    #[test]
    fn repeated_permission_test() {
        let errs =
            build("app A perms {} { fun f() infer { init r = 0 in { test(p) { test(p) r := 1 else r := 2 } else r := 0; return r } } }")
                .unwrap_err();
        assert!(matches!(&errs[0], SystemError::RepeatedPermissionTest { perm, .. } if perm == "p"));
        // Sequential tests of the same permission are fine.
        build("app A perms {} { fun f() infer { init r = 0 in { test(p) r := 1 else r := 2; test(p) r := 3 else r := 4; return r } } }")
            .unwrap();
    }

    #[test]
    fn open_functions_and_bad_calls() {
        let errs = build("app A perms {} { fun f() infer { init r = 0 in { r := z; return r } } }").unwrap_err();
        assert!(matches!(&errs[0], SystemError::OpenFunction { var, .. } if var == "z"));
        let errs = build(
            "app A perms {} {
               fun f(x) infer { init r = 0 in { r := x; return r } }
               fun g() infer { init r = 0 in { r := call A.f(1, 2); return r } }
             }",
        )
        .unwrap_err();
        assert!(matches!(&errs[0], SystemError::ArityMismatch { expected: 1, found: 2, .. }));
        let errs = build("app A perms {} { fun g() infer { init r = 0 in { r := call B.f(); return r } } }").unwrap_err();
        assert!(matches!(&errs[0], SystemError::UnknownReference { kind: "app", .. }));
    }

    #[test]
    fn letvar_rules() {
        let errs = build("app A perms {} { fun f() infer { init r = 0 in { letvar y = y + 1 in r := y; return r } } }")
            .unwrap_err();
        assert!(matches!(&errs[0], SystemError::LetVarSelfReference { .. }));
        let errs = build("app A perms {} { fun f(x) infer { init r = 0 in { letvar x = 1 in r := x; return r } } }")
            .unwrap_err();
        assert!(matches!(&errs[0], SystemError::DuplicateName { .. }));
        // Letvar names are not visible after their scope.
        let errs = build("app A perms {} { fun f() infer { init r = 0 in { letvar y = 1 in r := y; r := y; return r } } }")
            .unwrap_err();
        assert!(matches!(&errs[0], SystemError::OpenFunction { .. }));
    }

    #[test]
    fn constants() {
        let errs =
            build("const K : H = 1; app A perms {} { fun f() infer { init r = 0 in { K := 2; return r } } }").unwrap_err();
        assert!(matches!(&errs[0], SystemError::AssignToConstant { .. }));
        let errs = build("const K : { {p}: H, _: L } = 1;").unwrap_err();
        assert!(matches!(&errs[0], SystemError::NonConstantGlobal { .. }));
        let sys = build("const K : H = 1; app A perms {p} { const J : L = 2; }").unwrap();
        assert_eq!(sys.consts.len(), 2);
        assert_eq!(sys.theta("A").len(), 1);
    }

    #[test]
    fn rank_follows_call_chains() {
        let sys = build(
            "app B perms {} { fun g(x) infer { init r = 0 in { test(p) r := 0 else r := x; return r } } }
             app A perms {} { fun f(x) infer { init r = 0 in { r := call B.g(x); return r } } }
             app M perms {p} { fun main() infer { init r = 0 in { r := call A.f(1); return r } } }",
        )
        .unwrap();
        let main = sys.lookup("M", "main").unwrap();
        assert_eq!(sys.function(main).rank, 2);
        let order: Vec<String> = sys.topo_order().iter().map(|f| sys.function(*f).qual()).collect();
        assert_eq!(order, vec!["B.g", "A.f", "M.main"]);
    }

    #[test]
    fn bound_names_may_repeat_across_functions() {
        build(
            "app A perms {} {
               fun f(x) infer { init r = 0 in { r := x; return r } }
               fun g(x) infer { init r = 0 in { r := x; return r } }
             }",
        )
        .unwrap();
    }
}
