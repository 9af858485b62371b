//! Syntax trees for systems of apps and functions.

use std::fmt;

use serde::Serialize;

use crate::types::TypeSyntax;

/// Byte range plus the 1-based line/column of its start.
///
/// Spans are source metadata: all spans compare equal, so syntax trees compare
/// structurally (which is what the print/parse round trip needs).
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span { start: self.start, end: other.end.max(self.end), line: self.line, col: self.col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Lt,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Lt => "<",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Eq | BinOp::Lt => 1,
            BinOp::Add | BinOp::Sub => 2,
            BinOp::Mul => 3,
        }
    }

    pub fn eval(self, a: i64, b: i64) -> i64 {
        match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Eq => (a == b) as i64,
            BinOp::Lt => (a < b) as i64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Int(i64),
    Var(String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn int(n: i64) -> Self {
        Expr::new(ExprKind::Int(n), Span::default())
    }

    pub fn var(x: &str) -> Self {
        Expr::new(ExprKind::Var(x.to_string()), Span::default())
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::new(ExprKind::Bin(op, Box::new(a), Box::new(b)), Span::default())
    }

    pub fn vars(&self, out: &mut Vec<String>) {
        match &self.kind {
            ExprKind::Int(_) => {}
            ExprKind::Var(x) => out.push(x.clone()),
            ExprKind::Bin(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }

    pub fn mentions(&self, x: &str) -> bool {
        match &self.kind {
            ExprKind::Int(_) => false,
            ExprKind::Var(y) => y == x,
            ExprKind::Bin(_, a, b) => a.mentions(x) || b.mentions(x),
        }
    }

    pub fn node_count(&self) -> usize {
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Var(_) => 1,
            ExprKind::Bin(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CmdKind {
    Assign(String, Expr),
    If(Expr, Box<Cmd>, Box<Cmd>),
    While(Expr, Box<Cmd>),
    Seq(Box<Cmd>, Box<Cmd>),
    LetVar { name: String, ann: Option<TypeSyntax>, init: Expr, body: Box<Cmd> },
    Call { target: String, app: String, fun: String, args: Vec<Expr> },
    Test { perm: String, then: Box<Cmd>, els: Box<Cmd> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cmd {
    pub kind: CmdKind,
    pub span: Span,
}

impl Cmd {
    pub fn new(kind: CmdKind, span: Span) -> Self {
        Cmd { kind, span }
    }

    pub fn assign(x: &str, e: Expr) -> Self {
        Cmd::new(CmdKind::Assign(x.to_string(), e), Span::default())
    }

    pub fn seq(a: Cmd, b: Cmd) -> Self {
        Cmd::new(CmdKind::Seq(Box::new(a), Box::new(b)), Span::default())
    }

    pub fn if_(e: Expr, a: Cmd, b: Cmd) -> Self {
        Cmd::new(CmdKind::If(e, Box::new(a), Box::new(b)), Span::default())
    }

    pub fn while_(e: Expr, c: Cmd) -> Self {
        Cmd::new(CmdKind::While(e, Box::new(c)), Span::default())
    }

    pub fn test(p: &str, a: Cmd, b: Cmd) -> Self {
        Cmd::new(CmdKind::Test { perm: p.to_string(), then: Box::new(a), els: Box::new(b) }, Span::default())
    }

    pub fn letvar(x: &str, init: Expr, body: Cmd) -> Self {
        Cmd::new(
            CmdKind::LetVar { name: x.to_string(), ann: None, init, body: Box::new(body) },
            Span::default(),
        )
    }

    pub fn call(x: &str, app: &str, fun: &str, args: Vec<Expr>) -> Self {
        Cmd::new(
            CmdKind::Call { target: x.to_string(), app: app.to_string(), fun: fun.to_string(), args },
            Span::default(),
        )
    }

    /// AST size: one per command and expression node.
    pub fn node_count(&self) -> usize {
        match &self.kind {
            CmdKind::Assign(_, e) => 1 + e.node_count(),
            CmdKind::If(e, a, b) => 1 + e.node_count() + a.node_count() + b.node_count(),
            CmdKind::While(e, c) => 1 + e.node_count() + c.node_count(),
            CmdKind::Seq(a, b) => 1 + a.node_count() + b.node_count(),
            CmdKind::LetVar { init, body, .. } => 1 + init.node_count() + body.node_count(),
            CmdKind::Call { args, .. } => 1 + args.iter().map(Expr::node_count).sum::<usize>(),
            CmdKind::Test { then, els, .. } => 1 + then.node_count() + els.node_count(),
        }
    }

    /// Variables assigned anywhere in the command (letvar-bound names excluded).
    pub fn assigned(&self, out: &mut Vec<String>) {
        match &self.kind {
            CmdKind::Assign(x, _) | CmdKind::Call { target: x, .. } => out.push(x.clone()),
            CmdKind::If(_, a, b) | CmdKind::Seq(a, b) => {
                a.assigned(out);
                b.assigned(out);
            }
            CmdKind::Test { then, els, .. } => {
                then.assigned(out);
                els.assigned(out);
            }
            CmdKind::While(_, c) => c.assigned(out),
            CmdKind::LetVar { name, body, .. } => {
                let mut inner = Vec::new();
                body.assigned(&mut inner);
                out.extend(inner.into_iter().filter(|y| y != name));
            }
        }
    }

    /// Visits every command node, outermost first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Cmd)) {
        f(self);
        match &self.kind {
            CmdKind::Assign(..) | CmdKind::Call { .. } => {}
            CmdKind::If(_, a, b) | CmdKind::Seq(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            CmdKind::Test { then, els, .. } => {
                then.walk(f);
                els.walk(f);
            }
            CmdKind::While(_, c) => c.walk(f),
            CmdKind::LetVar { body, .. } => body.walk(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ann: Option<TypeSyntax>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub ret_ann: Option<TypeSyntax>,
    /// Name of the result variable, `r` in `init r = 0 in { c; return r }`.
    pub ret_var: String,
    pub body: Cmd,
    pub span: Span,
}

impl FunDecl {
    pub fn is_annotated(&self) -> bool {
        self.ret_ann.is_some() && self.params.iter().all(|p| p.ann.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstDecl {
    pub name: String,
    pub ty: TypeSyntax,
    pub value: i64,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppItem {
    Const(ConstDecl),
    Fun(FunDecl),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppDecl {
    pub name: String,
    pub perms: Vec<String>,
    pub items: Vec<AppItem>,
    pub span: Span,
}

impl AppDecl {
    pub fn funs(&self) -> impl Iterator<Item = &FunDecl> {
        self.items.iter().filter_map(|i| match i {
            AppItem::Fun(f) => Some(f),
            AppItem::Const(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopItem {
    Const(ConstDecl),
    App(AppDecl),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeDecl {
    pub levels: Vec<String>,
    pub order: Vec<(String, String)>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemAst {
    pub lattice: LatticeDecl,
    pub permissions: Vec<String>,
    pub items: Vec<TopItem>,
}

impl SystemAst {
    pub fn apps(&self) -> impl Iterator<Item = &AppDecl> {
        self.items.iter().filter_map(|i| match i {
            TopItem::App(a) => Some(a),
            TopItem::Const(_) => None,
        })
    }

    pub fn apps_mut(&mut self) -> impl Iterator<Item = &mut AppDecl> {
        self.items.iter_mut().filter_map(|i| match i {
            TopItem::App(a) => Some(a),
            TopItem::Const(_) => None,
        })
    }

    /// Constants declared anywhere, in source order.
    pub fn consts(&self) -> Vec<&ConstDecl> {
        let mut out = Vec::new();
        for item in &self.items {
            match item {
                TopItem::Const(c) => out.push(c),
                TopItem::App(a) => out.extend(a.items.iter().filter_map(|i| match i {
                    AppItem::Const(c) => Some(c),
                    AppItem::Fun(_) => None,
                })),
            }
        }
        out
    }
}
