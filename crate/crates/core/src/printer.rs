//! Pretty-printer producing source that parses back to the same tree.

use std::fmt::Write;

use crate::ast::*;

const INDENT: &str = "  ";

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr_into(&mut s, e, 0);
    s
}

fn expr_into(out: &mut String, e: &Expr, min_prec: u8) {
    match &e.kind {
        ExprKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ExprKind::Var(x) => out.push_str(x),
        ExprKind::Bin(op, a, b) => {
            let p = op.precedence();
            let paren = p < min_prec;
            if paren {
                out.push('(');
            }
            expr_into(out, a, p);
            let _ = write!(out, " {} ", op.symbol());
            expr_into(out, b, p + 1);
            if paren {
                out.push(')');
            }
        }
    }
}

fn is_simple(c: &Cmd) -> bool {
    matches!(c.kind, CmdKind::Assign(..) | CmdKind::Call { .. })
}

/// Flattens the right spine of a sequence.
fn spine(c: &Cmd) -> Vec<&Cmd> {
    let mut out = Vec::new();
    let mut cur = c;
    while let CmdKind::Seq(a, b) = &cur.kind {
        out.push(a.as_ref());
        cur = b;
    }
    out.push(cur);
    out
}

struct Printer {
    out: String,
}

impl Printer {
    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str(INDENT);
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    /// Prints the commands of a block body, one per line, `;`-separated.
    fn block_body(&mut self, c: &Cmd, depth: usize, trailing_semi: bool) {
        let items = spine(c);
        let last = items.len() - 1;
        for (i, item) in items.into_iter().enumerate() {
            let semi = i < last || trailing_semi;
            self.cmd(item, depth, if semi { ";" } else { "" });
        }
    }

    /// Prints one command (as a sequence element), ending with `suffix`.
    fn cmd(&mut self, c: &Cmd, depth: usize, suffix: &str) {
        match &c.kind {
            CmdKind::Assign(..) | CmdKind::Call { .. } => {
                let s = format!("{}{suffix}", simple(c));
                self.line(depth, &s);
            }
            CmdKind::Seq(..) => {
                self.line(depth, "{");
                self.block_body(c, depth + 1, false);
                self.line(depth, &format!("}}{suffix}"));
            }
            CmdKind::If(e, a, b) => {
                let head = format!("if {} then", print_expr(e));
                self.two_branches(depth, &head, a, b, suffix);
            }
            CmdKind::Test { perm, then, els } => {
                let head = format!("test({perm})");
                self.two_branches(depth, &head, then, els, suffix);
            }
            CmdKind::While(e, body) => {
                let head = format!("while {} do", print_expr(e));
                self.one_branch(depth, &head, body, suffix);
            }
            CmdKind::LetVar { name, ann, init, body } => {
                let ann = ann.as_ref().map(|t| format!(" : {t}")).unwrap_or_default();
                let head = format!("letvar {name}{ann} = {} in", print_expr(init));
                self.one_branch(depth, &head, body, suffix);
            }
        }
    }

    fn one_branch(&mut self, depth: usize, head: &str, body: &Cmd, suffix: &str) {
        if is_simple(body) {
            self.line(depth, &format!("{head} {}{suffix}", simple(body)));
        } else {
            self.line(depth, &format!("{head} {{"));
            self.block_body(body, depth + 1, false);
            self.line(depth, &format!("}}{suffix}"));
        }
    }

    fn two_branches(&mut self, depth: usize, head: &str, a: &Cmd, b: &Cmd, suffix: &str) {
        if is_simple(a) && is_simple(b) {
            self.line(depth, &format!("{head} {} else {}{suffix}", simple(a), simple(b)));
            return;
        }
        self.line(depth, &format!("{head} {{"));
        self.block_body(a, depth + 1, false);
        self.line(depth, "} else {");
        self.block_body(b, depth + 1, false);
        self.line(depth, &format!("}}{suffix}"));
    }

    fn fun(&mut self, f: &FunDecl, depth: usize) {
        let params: Vec<String> = f
            .params
            .iter()
            .map(|p| match &p.ann {
                Some(t) => format!("{} : {t}", p.name),
                None => p.name.clone(),
            })
            .collect();
        let ret = match &f.ret_ann {
            Some(t) => format!(" : {t}"),
            None => " infer".to_string(),
        };
        self.line(depth, &format!("fun {}({}){ret} {{", f.name, params.join(", ")));
        self.line(depth + 1, &format!("init {} = 0 in {{", f.ret_var));
        self.block_body(&f.body, depth + 2, true);
        self.line(depth + 2, &format!("return {}", f.ret_var));
        self.line(depth + 1, "}");
        self.line(depth, "}");
    }

    fn const_decl(&mut self, c: &ConstDecl, depth: usize) {
        self.line(depth, &format!("const {} : {} = {};", c.name, c.ty, c.value));
    }
}

fn simple(c: &Cmd) -> String {
    match &c.kind {
        CmdKind::Assign(x, e) => format!("{x} := {}", print_expr(e)),
        CmdKind::Call { target, app, fun, args } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            format!("{target} := call {app}.{fun}({})", args.join(", "))
        }
        _ => unreachable!("not a simple command"),
    }
}

pub fn print_cmd(c: &Cmd) -> String {
    let mut p = Printer { out: String::new() };
    p.block_body(c, 0, false);
    p.out
}

pub fn print_fun(f: &FunDecl) -> String {
    let mut p = Printer { out: String::new() };
    p.fun(f, 0);
    p.out
}

pub fn print_system(sys: &SystemAst) -> String {
    let mut p = Printer { out: String::new() };
    let order: Vec<String> = sys.lattice.order.iter().map(|(a, b)| format!("{a} < {b}")).collect();
    let order = if order.is_empty() { String::new() } else { format!(" order {};", order.join(", ")) };
    p.line(0, &format!("lattice {{ levels {};{order} }}", sys.lattice.levels.join(", ")));
    p.line(0, &format!("permissions {{ {} }}", sys.permissions.join(", ")));
    for item in &sys.items {
        p.out.push('\n');
        match item {
            TopItem::Const(c) => p.const_decl(c, 0),
            TopItem::App(a) => {
                p.line(0, &format!("app {} perms {{{}}} {{", a.name, a.perms.join(", ")));
                for (i, it) in a.items.iter().enumerate() {
                    match it {
                        AppItem::Const(c) => p.const_decl(c, 1),
                        AppItem::Fun(f) => {
                            if i > 0 {
                                p.out.push('\n');
                            }
                            p.fun(f, 1)
                        }
                    }
                }
                p.line(0, "}");
            }
        }
    }
    p.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_cmd, parse_expr, parse_system};

    #[test]
    fn expressions_round_trip_with_minimal_parentheses() {
        for src in ["a - (b - c)", "(a + b) * c", "a - b - c", "x < (y == z)", "1 + -2", "x * (y < 3)"] {
            let e = parse_expr(src).unwrap();
            let printed = print_expr(&e);
            assert_eq!(parse_expr(&printed).unwrap(), e, "{src} printed as {printed}");
        }
        assert_eq!(print_expr(&parse_expr("(a + b) * c").unwrap()), "(a + b) * c");
        assert_eq!(print_expr(&parse_expr("a + (b * c)").unwrap()), "a + b * c");
    }

    #[test]
    fn commands_round_trip() {
        let srcs = [
            "x := 1; y := 2; z := 3",
            "{ x := 1; y := 2 }; z := 3",
            "test(p) { test(q) r := a else r := 0 } else { r := 1; r := 2 }",
            "while x < 3 do { x := x + 1 }; r := x",
            "letvar y : { {p}: H, _: L } = 0 in { y := call B.g(y, 1); r := y }",
            "if x then { if y then a := 1 else a := 2 } else b := call C.h()",
            "letvar y = 1 in letvar z = 2 in r := y + z",
            "while x do while y do y := y - 1",
        ];
        for src in srcs {
            let c = parse_cmd(src).unwrap();
            let printed = print_cmd(&c);
            assert_eq!(parse_cmd(&printed).unwrap(), c, "{src} printed as\n{printed}");
        }
    }

    #[test]
    fn system_round_trip() {
        let src = r#"
            lattice { levels L, l1, l2, H; order L < l1, L < l2, l1 < H, l2 < H; }
            permissions { p, q }
            const id : l2 = 3;
            app A perms {p} {
              const loc : l1 = 7;
              fun f(x : L) : { {p}: H, _: L } { init r = 0 in { r := x; return r } }
              fun g(y) infer { init r = 0 in { test(p) r := loc else r := id; return r } }
            }
        "#;
        let ast = parse_system(src).unwrap();
        let printed = print_system(&ast);
        assert_eq!(parse_system(&printed).unwrap(), ast);
        assert_eq!(print_system(&parse_system(&printed).unwrap()), printed);
    }
}
