//! Report rendering (JSON and human-readable) and the annotation rewriter.
//!
//! JSON objects use sorted keys and contain no timestamps unless timings are
//! requested, so identical inputs give byte-identical documents.

use serde_json::{json, Value};

use crate::ast::{AppItem, Cmd, CmdKind, SystemAst, TopItem};
use crate::infer::{Inference, InferError, SolveError, Term};
use crate::ni::{CellReport, Clause, Verdict};
use crate::perms::PermSet;
use crate::system::{FunId, System};
use crate::typecheck::{CheckError, SystemCheck};
use crate::types::{BaseType, Domain};

/// A base type as `{"show": ..., "table": [{"perms": [...], "level": ...}, ...]}`, bitmask order.
pub fn type_json(d: &Domain, t: &BaseType) -> Value {
    let table: Vec<Value> = t
        .sets()
        .map(|s| json!({ "perms": perm_names(d, s), "level": d.lattice.name(t.at(s)) }))
        .collect();
    json!({ "show": d.show(t), "table": table })
}

fn perm_names(d: &Domain, s: PermSet) -> Vec<&str> {
    s.iter().map(|p| d.universe.name(p)).collect()
}

fn span_json(span: crate::ast::Span) -> Value {
    json!({ "line": span.line, "col": span.col })
}

pub fn check_error_json(d: &Domain, e: &CheckError) -> Value {
    let mut v = json!({
        "kind": e.kind.name(),
        "span": span_json(e.span),
        "detail": e.detail,
        "lhs": type_json(d, &e.lhs),
        "rhs": type_json(d, &e.rhs),
        "trace": e.trace.show(&d.universe),
        "witness": perm_names(d, e.witness),
    });
    if let crate::typecheck::TypeErrorKind::CallArgViolation(i) = e.kind {
        v["argument"] = json!(i);
    }
    v
}

pub fn check_json(sys: &System, report: &SystemCheck) -> Value {
    let d = &sys.domain;
    let functions: Vec<Value> = report
        .results
        .iter()
        .map(|(id, r)| {
            let name = sys.function(*id).qual();
            match r {
                Ok(c) => json!({
                    "name": name,
                    "ok": true,
                    "params": c.ty.params.iter().map(|t| type_json(d, t)).collect::<Vec<_>>(),
                    "return": type_json(d, &c.ty.ret),
                    "body": type_json(d, &c.body),
                }),
                Err(e) => json!({ "name": name, "ok": false, "error": check_error_json(d, e) }),
            }
        })
        .collect();
    json!({ "command": "check", "well_typed": report.is_well_typed(), "functions": functions })
}

pub fn check_text(sys: &System, report: &SystemCheck) -> String {
    let d = &sys.domain;
    let mut out = String::new();
    for (id, r) in &report.results {
        let f = sys.function(*id);
        match r {
            Ok(c) => out.push_str(&format!("ok    {} : {}\n", f.qual(), d.show_fn(&c.ty))),
            Err(e) => {
                out.push_str(&format!("error {} at {}: {}\n", f.qual(), e.span, e.kind));
                out.push_str(&format!("      {}\n", e.detail));
                out.push_str(&format!(
                    "      {} ≰ {} under {}, first failing at {}\n",
                    d.show(&e.lhs),
                    d.show(&e.rhs),
                    e.trace.show(&d.universe),
                    d.universe.show_set(e.witness)
                ));
            }
        }
    }
    let verdict = if report.is_well_typed() { "well-typed" } else { "ill-typed" };
    out.push_str(&format!("system is {verdict}\n"));
    out
}

fn interval_json(d: &Domain, inf: &Inference, t: &Term) -> Vec<Value> {
    inf.intervals(t)
        .into_iter()
        .map(|i| {
            json!({
                "guard": i.guard.show(&d.universe),
                "lower": type_json(d, &i.lo),
                "upper": type_json(d, &i.hi),
            })
        })
        .collect()
}

pub fn infer_json(sys: &System, inf: &Inference, timings: bool) -> Value {
    let d = &sys.domain;
    let functions: Vec<Value> = sys
        .ids()
        .map(|id| {
            let f = sys.function(id);
            let fc = inf.generated.fun(id);
            let ty = inf.fun_type(id);
            let params: Vec<Value> = f
                .params
                .iter()
                .zip(&ty.params)
                .zip(&fc.sig.params)
                .map(|((x, t), term)| {
                    json!({ "name": x, "type": type_json(d, t), "intervals": interval_json(d, inf, term) })
                })
                .collect();
            let letvars: Vec<Value> =
                inf.letvars[id.0].iter().map(|(x, t)| json!({ "name": x, "type": type_json(d, t) })).collect();
            json!({
                "name": f.qual(),
                "annotated": f.is_annotated(),
                "params": params,
                "return": type_json(d, &ty.ret),
                "return_intervals": interval_json(d, inf, &fc.sig.ret),
                "letvars": letvars,
                "constraints": fc.own.len(),
            })
        })
        .collect();
    let st = &inf.solution.stats;
    let mut stats = json!({
        "constraints": st.constraints,
        "simple": st.simple,
        "saturated": st.saturated,
        "intervals": st.intervals,
        "regroupings": st.regroupings,
    });
    if timings {
        let t = &st.timings;
        stats["timings_us"] = json!({
            "decompose": t.decompose.as_micros() as u64,
            "saturate": t.saturate.as_micros() as u64,
            "merge": t.merge.as_micros() as u64,
            "unify": t.unify.as_micros() as u64,
        });
    }
    json!({ "command": "infer", "ok": true, "functions": functions, "stats": stats })
}

pub fn infer_text(sys: &System, inf: &Inference) -> String {
    let d = &sys.domain;
    let mut out = String::new();
    for id in sys.ids() {
        let f = sys.function(id);
        out.push_str(&format!("{} : {}\n", f.qual(), d.show_fn(inf.fun_type(id))));
        out.push_str(&format!("    return {}\n", d.show_full(&inf.fun_type(id).ret)));
        for (x, t) in &inf.letvars[id.0] {
            out.push_str(&format!("    letvar {x} : {}\n", d.show(t)));
        }
    }
    out
}

fn origin_json(sys: &System, c: &crate::infer::Constraint) -> Value {
    json!({
        "function": c.origin.fun.map(|f| sys.function(f).qual()),
        "span": span_json(c.origin.span),
        "kind": c.origin.kind.to_string(),
        "constraint": c.show(&sys.domain),
    })
}

fn fun_names(sys: &System, ids: &[FunId]) -> Vec<String> {
    ids.iter().map(|&f| sys.function(f).qual()).collect()
}

pub fn infer_error_json(sys: &System, e: &InferError) -> Value {
    match e {
        InferError::Unsat { core, functions, witness } => json!({
            "command": "infer",
            "ok": false,
            "error": "Unsat",
            "functions": fun_names(sys, functions),
            "core": core.iter().map(|c| origin_json(sys, c)).collect::<Vec<_>>(),
            "witness": witness.as_ref().map(|(c, p)| json!({
                "constraint": origin_json(sys, c),
                "perms": perm_names(&sys.domain, *p),
            })),
        }),
        InferError::Solver(SolveError::Unsupported(m)) => {
            json!({ "command": "infer", "ok": false, "error": "Unsupported", "detail": m })
        }
        InferError::Solver(other) => {
            json!({ "command": "infer", "ok": false, "error": "Internal", "detail": other.to_string() })
        }
    }
}

pub fn infer_error_text(sys: &System, e: &InferError) -> String {
    match e {
        InferError::Unsat { core, functions, witness } => {
            let mut out = format!("no typing exists for: {}\n", fun_names(sys, functions).join(", "));
            out.push_str("conflicting constraints:\n");
            for c in core {
                let fun = c.origin.fun.map(|f| sys.function(f).qual()).unwrap_or_default();
                out.push_str(&format!("    {fun} at {} ({}): {}\n", c.origin.span, c.origin.kind, c.show(&sys.domain)));
            }
            if let Some((c, p)) = witness {
                out.push_str(&format!(
                    "least solution violates {} at {}\n",
                    c.show(&sys.domain),
                    sys.universe().show_set(*p)
                ));
            }
            out
        }
        other => format!("{other}\n"),
    }
}

fn env_json(env: &crate::interp::Env) -> Value {
    json!(env)
}

pub fn nitest_json(sys: &System, cells: &[CellReport]) -> Value {
    let d = &sys.domain;
    let out: Vec<Value> = cells
        .iter()
        .map(|c| {
            let mut v = json!({
                "function": sys.function(c.function).qual(),
                "perms": perm_names(d, c.perms),
                "observer": d.lattice.name(c.observer),
                "pairs_tested": c.pairs_tested,
                "inconclusive_runs": c.inconclusive_runs,
            });
            match &c.verdict {
                Verdict::Ok => v["verdict"] = json!("ok"),
                Verdict::Skipped => v["verdict"] = json!("skipped"),
                Verdict::TooLarge { pairs } => {
                    v["verdict"] = json!("inconclusive");
                    v["pairs_required"] = json!(pairs);
                }
                Verdict::Violation(w) => {
                    v["verdict"] = json!("violation");
                    v["witness"] = json!({
                        "clause": match w.clause { Clause::Function => "function", Clause::Command => "command" },
                        "variable": w.variable,
                        "env1": env_json(&w.env1),
                        "env2": env_json(&w.env2),
                        "out1": w.out1,
                        "out2": w.out2,
                    });
                }
            }
            v
        })
        .collect();
    let violations = cells.iter().filter(|c| matches!(c.verdict, Verdict::Violation(_))).count();
    let inconclusive = cells.iter().filter(|c| matches!(c.verdict, Verdict::TooLarge { .. })).count();
    json!({ "command": "nitest", "violations": violations, "inconclusive": inconclusive, "cells": out })
}

/// The `run` invocation that replays one side of a witness.
pub fn replay_command(sys: &System, path: &str, id: FunId, perms: PermSet, env: &crate::interp::Env) -> String {
    let f = sys.function(id);
    let args: Vec<String> = f.params.iter().map(|x| env.get(x).copied().unwrap_or_default().to_string()).collect();
    let init: Vec<String> =
        env.iter().filter(|(x, _)| !f.params.contains(x)).map(|(x, v)| format!("{x}={v}")).collect();
    let names = perm_names(&sys.domain, perms).join(",");
    let mut cmd = format!("permflow run {path} --entry {} --args '{}'", f.qual(), args.join(","));
    cmd.push_str(&format!(" --caller-perms '{names}'"));
    if !init.is_empty() {
        cmd.push_str(&format!(" --init '{}'", init.join(",")));
    }
    cmd
}

pub fn nitest_text(sys: &System, path: &str, cells: &[CellReport]) -> String {
    let d = &sys.domain;
    let mut out = String::new();
    for c in cells {
        let f = sys.function(c.function);
        let head = format!("{} perms {} observer {}", f.qual(), d.universe.show_set(c.perms), d.lattice.name(c.observer));
        match &c.verdict {
            Verdict::Ok => out.push_str(&format!("ok           {head} ({} pairs)\n", c.pairs_tested)),
            Verdict::Skipped => out.push_str(&format!("skipped      {head} (result not observable)\n")),
            Verdict::TooLarge { pairs } => {
                out.push_str(&format!("inconclusive {head} ({pairs} pairs exceed the cap)\n"))
            }
            Verdict::Violation(w) => {
                out.push_str(&format!("VIOLATION    {head}: `{}` is {} vs {}\n", w.variable, w.out1, w.out2));
                out.push_str(&format!("    replay: {}\n", replay_command(sys, path, c.function, c.perms, &w.env1)));
                out.push_str(&format!("    replay: {}\n", replay_command(sys, path, c.function, c.perms, &w.env2)));
            }
        }
    }
    out
}

/// Writes inferred types into every unannotated parameter, result and letvar.
pub fn annotate(sys: &System, inf: &Inference) -> SystemAst {
    let d = &sys.domain;
    let mut ast = sys.ast.clone();
    for app in ast.items.iter_mut().filter_map(|i| match i {
        TopItem::App(a) => Some(a),
        TopItem::Const(_) => None,
    }) {
        let app_name = app.name.clone();
        for item in &mut app.items {
            let AppItem::Fun(f) = item else { continue };
            let id = sys.lookup(&app_name, &f.name).expect("built system has every declared function");
            let ty = inf.fun_type(id);
            for (p, t) in f.params.iter_mut().zip(&ty.params) {
                p.ann.get_or_insert_with(|| d.syntax_of(t));
            }
            f.ret_ann.get_or_insert_with(|| d.syntax_of(&ty.ret));
            annotate_letvars(&mut f.body, &|x| inf.letvars[id.0].iter().find(|(y, _)| y == x).map(|(_, t)| d.syntax_of(t)));
        }
    }
    ast
}

fn annotate_letvars(c: &mut Cmd, ty: &dyn Fn(&str) -> Option<crate::types::TypeSyntax>) {
    match &mut c.kind {
        CmdKind::LetVar { name, ann, body, .. } => {
            if ann.is_none() {
                *ann = ty(name);
            }
            annotate_letvars(body, ty);
        }
        CmdKind::If(_, a, b) | CmdKind::Seq(a, b) | CmdKind::Test { then: a, els: b, .. } => {
            annotate_letvars(a, ty);
            annotate_letvars(b, ty);
        }
        CmdKind::While(_, a) => annotate_letvars(a, ty),
        CmdKind::Assign(..) | CmdKind::Call { .. } => {}
    }
}
