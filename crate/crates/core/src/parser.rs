//! Lexer and recursive-descent parser for system files.

use std::fmt;

use thiserror::Error;

use crate::ast::*;
use crate::types::TypeSyntax;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub message: String,
    pub span: Span,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: syntax error: {}", self.span, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const SYMBOLS: &[&str] = &[":=", "==", "{", "}", "(", ")", ",", ";", ":", "=", "<", "+", "-", "*", ".", "_"];

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, n: usize| {
        for _ in 0..n {
            if bytes[*i] == b'\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let start = Span { start: i, end: i, line, col };
        if c.is_ascii_alphabetic() || (c == b'_' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')) {
            let mut j = i;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            let word = src[i..j].to_string();
            let len = j - i;
            advance(&mut i, &mut line, &mut col, len);
            out.push((Tok::Ident(word), Span { end: i, ..start }));
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            let n: u64 = src[i..j].parse().map_err(|_| ParseError {
                message: format!("integer literal `{}` is out of range", &src[i..j]),
                span: start,
            })?;
            let len = j - i;
            advance(&mut i, &mut line, &mut col, len);
            out.push((Tok::Int(n), Span { end: i, ..start }));
            continue;
        }
        match SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            Some(s) => {
                advance(&mut i, &mut line, &mut col, s.len());
                out.push((Tok::Sym(s), Span { end: i, ..start }));
            }
            None => {
                let ch = src[i..].chars().next().unwrap();
                return Err(ParseError { message: format!("unexpected character `{ch}`"), span: start });
            }
        }
    }
    out.push((Tok::Eof, Span { start: i, end: i, line, col }));
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "lattice", "levels", "order", "permissions", "app", "perms", "const", "fun", "infer", "init", "in", "return",
    "if", "then", "else", "while", "do", "test", "letvar", "call",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(src: &str) -> PResult<Self> {
        Ok(Parser { toks: lex(src)?, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError { message: message.into(), span: self.span() })
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        self.error(format!("expected {expected}, found {}", self.peek()))
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<Span> {
        if self.is_sym(s) {
            Ok(self.bump().1)
        } else {
            self.unexpected(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<Span> {
        if self.is_kw(s) {
            Ok(self.bump().1)
        } else {
            self.unexpected(&format!("`{s}`"))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                let sp = self.bump().1;
                Ok((s, sp))
            }
            _ => self.unexpected("an identifier"),
        }
    }

    fn int_literal(&mut self) -> PResult<i64> {
        let neg = self.eat_sym("-");
        match self.peek().clone() {
            Tok::Int(n) => {
                let v = if neg {
                    if n > i64::MAX as u64 + 1 {
                        return self.error("integer literal out of range");
                    }
                    (n as i128).wrapping_neg() as i64
                } else {
                    if n > i64::MAX as u64 {
                        return self.error("integer literal out of range");
                    }
                    n as i64
                };
                self.bump();
                Ok(v)
            }
            _ => self.unexpected("an integer literal"),
        }
    }

    fn ident_list(&mut self, close: &str) -> PResult<Vec<String>> {
        let mut out = Vec::new();
        if self.is_sym(close) {
            return Ok(out);
        }
        loop {
            out.push(self.ident()?.0);
            if !self.eat_sym(",") {
                return Ok(out);
            }
        }
    }

    fn perm_set(&mut self) -> PResult<Vec<String>> {
        self.expect_sym("{")?;
        let names = self.ident_list("}")?;
        self.expect_sym("}")?;
        Ok(names)
    }

    fn system(&mut self) -> PResult<SystemAst> {
        if matches!(self.peek(), Tok::Eof) {
            return self.error("empty input; a system starts with a `lattice` declaration");
        }
        let lattice = self.lattice()?;
        let permissions = if self.is_kw("permissions") {
            self.bump();
            self.perm_set()?
        } else {
            Vec::new()
        };
        let mut items = Vec::new();
        loop {
            if self.is_kw("const") {
                items.push(TopItem::Const(self.const_decl()?));
            } else if self.is_kw("app") {
                items.push(TopItem::App(self.app()?));
            } else if matches!(self.peek(), Tok::Eof) {
                break;
            } else {
                return self.unexpected("`app`, `const` or end of input");
            }
        }
        Ok(SystemAst { lattice, permissions, items })
    }

    fn lattice(&mut self) -> PResult<LatticeDecl> {
        let start = self.expect_kw("lattice")?;
        self.expect_sym("{")?;
        self.expect_kw("levels")?;
        let mut levels = vec![self.ident()?.0];
        while self.eat_sym(",") {
            levels.push(self.ident()?.0);
        }
        self.expect_sym(";")?;
        let mut order = Vec::new();
        if self.is_kw("order") {
            self.bump();
            loop {
                let a = self.ident()?.0;
                self.expect_sym("<")?;
                let b = self.ident()?.0;
                order.push((a, b));
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(";")?;
        }
        let end = self.expect_sym("}")?;
        Ok(LatticeDecl { levels, order, span: start.to(end) })
    }

    fn const_decl(&mut self) -> PResult<ConstDecl> {
        let start = self.expect_kw("const")?;
        let (name, _) = self.ident()?;
        self.expect_sym(":")?;
        let ty = self.type_syntax()?;
        self.expect_sym("=")?;
        let value = self.int_literal()?;
        let end = self.expect_sym(";")?;
        Ok(ConstDecl { name, ty, value, span: start.to(end) })
    }

    fn app(&mut self) -> PResult<AppDecl> {
        let start = self.expect_kw("app")?;
        let (name, _) = self.ident()?;
        self.expect_kw("perms")?;
        let perms = self.perm_set()?;
        self.expect_sym("{")?;
        let mut items = Vec::new();
        loop {
            if self.is_kw("const") {
                items.push(AppItem::Const(self.const_decl()?));
            } else if self.is_kw("fun") {
                items.push(AppItem::Fun(self.fun()?));
            } else if self.is_sym("}") {
                break;
            } else {
                return self.unexpected("`fun`, `const` or `}`");
            }
        }
        let end = self.expect_sym("}")?;
        Ok(AppDecl { name, perms, items, span: start.to(end) })
    }

    fn fun(&mut self) -> PResult<FunDecl> {
        let start = self.expect_kw("fun")?;
        let (name, _) = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let (pname, span) = self.ident()?;
                let ann = if self.eat_sym(":") { Some(self.type_syntax()?) } else { None };
                params.push(Param { name: pname, ann, span });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        let ret_ann = if self.eat_sym(":") {
            Some(self.type_syntax()?)
        } else {
            if self.is_kw("infer") {
                self.bump();
            }
            None
        };
        self.expect_sym("{")?;
        self.expect_kw("init")?;
        let (ret_var, _) = self.ident()?;
        self.expect_sym("=")?;
        if !matches!(self.peek(), Tok::Int(0)) {
            return self.unexpected("`0` (the result variable always starts at zero)");
        }
        self.bump();
        self.expect_kw("in")?;
        self.expect_sym("{")?;
        if self.is_kw("return") {
            return self.error("function body needs at least one command before `return`");
        }
        let mut cmds = vec![self.cmd()?];
        while self.eat_sym(";") {
            if self.is_kw("return") {
                break;
            }
            cmds.push(self.cmd()?);
        }
        let body = fold_seq(cmds);
        self.expect_kw("return")?;
        let (rv, rspan) = self.ident()?;
        if rv != ret_var {
            return Err(ParseError {
                message: format!("function must return its result variable `{ret_var}`, not `{rv}`"),
                span: rspan,
            });
        }
        self.expect_sym("}")?;
        let end = self.expect_sym("}")?;
        Ok(FunDecl { name, params, ret_ann, ret_var, body, span: start.to(end) })
    }

    fn type_syntax(&mut self) -> PResult<TypeSyntax> {
        if !self.is_sym("{") {
            return Ok(TypeSyntax::Level(self.ident()?.0));
        }
        self.bump();
        let mut entries = Vec::new();
        loop {
            if self.is_sym("}") {
                break;
            }
            let set = if self.eat_sym("_") { None } else { Some(self.perm_set()?) };
            self.expect_sym(":")?;
            let level = self.ident()?.0;
            entries.push((set, level));
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym("}")?;
        if entries.is_empty() {
            return self.error("base-type literal needs at least one entry");
        }
        Ok(TypeSyntax::Table(entries))
    }

    /// A command sequence `c1; c2; ...` up to (not including) `}`.
    fn cmd_seq(&mut self) -> PResult<Cmd> {
        let mut cmds = vec![self.cmd()?];
        while self.eat_sym(";") {
            if self.is_sym("}") || matches!(self.peek(), Tok::Eof) {
                break;
            }
            cmds.push(self.cmd()?);
        }
        Ok(fold_seq(cmds))
    }

    fn cmd(&mut self) -> PResult<Cmd> {
        let start = self.span();
        if self.eat_sym("{") {
            if self.is_sym("}") {
                return self.error("empty block");
            }
            let c = self.cmd_seq()?;
            self.expect_sym("}")?;
            return Ok(c);
        }
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.unexpected("a command"),
        };
        let kind = match kw.as_str() {
            "if" => {
                self.bump();
                let e = self.expr()?;
                self.expect_kw("then")?;
                let a = self.cmd()?;
                self.expect_kw("else")?;
                let b = self.cmd()?;
                CmdKind::If(e, Box::new(a), Box::new(b))
            }
            "while" => {
                self.bump();
                let e = self.expr()?;
                self.expect_kw("do")?;
                let c = self.cmd()?;
                CmdKind::While(e, Box::new(c))
            }
            "test" => {
                self.bump();
                self.expect_sym("(")?;
                let (perm, _) = self.ident()?;
                self.expect_sym(")")?;
                let a = self.cmd()?;
                self.expect_kw("else")?;
                let b = self.cmd()?;
                CmdKind::Test { perm, then: Box::new(a), els: Box::new(b) }
            }
            "letvar" => {
                self.bump();
                let (name, _) = self.ident()?;
                let ann = if self.eat_sym(":") { Some(self.type_syntax()?) } else { None };
                self.expect_sym("=")?;
                let init = self.expr()?;
                self.expect_kw("in")?;
                let body = self.cmd()?;
                CmdKind::LetVar { name, ann, init, body: Box::new(body) }
            }
            _ => {
                let (target, _) = self.ident()?;
                self.expect_sym(":=")?;
                if self.is_kw("call") {
                    self.bump();
                    let (app, _) = self.ident()?;
                    self.expect_sym(".")?;
                    let (fun, _) = self.ident()?;
                    self.expect_sym("(")?;
                    let mut args = Vec::new();
                    if !self.is_sym(")") {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    self.expect_sym(")")?;
                    CmdKind::Call { target, app, fun, args }
                } else {
                    CmdKind::Assign(target, self.expr()?)
                }
            }
        };
        Ok(Cmd::new(kind, start.to(self.prev_span())))
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.atom()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("==") => BinOp::Eq,
                Tok::Sym("<") => BinOp::Lt,
                _ => return Ok(lhs),
            };
            if op.precedence() < min_prec {
                return Ok(lhs);
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr::new(ExprKind::Bin(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn atom(&mut self) -> PResult<Expr> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Int(_) => Ok(Expr::new(ExprKind::Int(self.int_literal()?), start)),
            Tok::Sym("-") if matches!(self.peek_at(1), Tok::Int(_)) => {
                let v = self.int_literal()?;
                Ok(Expr::new(ExprKind::Int(v), start.to(self.prev_span())))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let (x, sp) = self.ident()?;
                Ok(Expr::new(ExprKind::Var(x), sp))
            }
            _ => self.unexpected("an expression"),
        }
    }

    fn finish(&self) -> PResult<()> {
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            self.unexpected("end of input")
        }
    }
}

/// Folds `c1; c2; ...; cn` into right-nested sequences.
fn fold_seq(mut cmds: Vec<Cmd>) -> Cmd {
    let mut acc = cmds.pop().expect("at least one command");
    while let Some(c) = cmds.pop() {
        let span = c.span.to(acc.span);
        acc = Cmd::new(CmdKind::Seq(Box::new(c), Box::new(acc)), span);
    }
    acc
}

pub fn parse_system(src: &str) -> Result<SystemAst, ParseError> {
    let mut p = Parser::new(src)?;
    let sys = p.system()?;
    p.finish()?;
    Ok(sys)
}

pub fn parse_type(src: &str) -> Result<TypeSyntax, ParseError> {
    let mut p = Parser::new(src)?;
    let t = p.type_syntax()?;
    p.finish()?;
    Ok(t)
}

pub fn parse_cmd(src: &str) -> Result<Cmd, ParseError> {
    let mut p = Parser::new(src)?;
    let c = p.cmd_seq()?;
    p.finish()?;
    Ok(c)
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}
