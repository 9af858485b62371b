//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod support;

use std::time::{Duration, Instant};

use permflow::ast::{Cmd, Expr};
use permflow::cli::run_cli;
use permflow::infer::{infer_system, least_prefixpoint, solve_vars, InferError, SolveError};
use permflow::ni::{nitest_function, NiConfig, Verdict};
use permflow::perms::{Perm, PermSet, PermissionUniverse};
use permflow::system::System;
use permflow::trace::{Literal, PermissionTrace, Sign};
use permflow::typecheck::{check_function, check_system, TypeErrorKind};
use permflow::types::{BaseType, FunctionType};
use rand::Rng;
use support::declarative::Declarative;

type Outcome = Result<String, String>;

fn ret_table(sys: &System, qual: &str) -> Result<Vec<String>, String> {
    let inf = infer_system(sys).map_err(|e| e.to_string())?;
    let id = sys.lookup_qual(qual).ok_or(format!("no {qual}"))?;
    let t = &inf.fun_type(id).ret;
    Ok(t.table().iter().map(|l| sys.lattice().name(*l).to_string()).collect())
}

fn golden(file: &str, qual: &str, want: &[&str]) -> Outcome {
    let sys = System::from_source(&support::corpus_source(file)).map_err(|e| e.to_string())?;
    let got = ret_table(&sys, qual)?;
    let shown = format!("{qual} returns [{}] over sets in bitmask order", got.join(", "));
    if got == want {
        Ok(shown)
    } else {
        Err(format!("{shown}, expected [{}]", want.join(", ")))
    }
}

fn c1_illustrative() -> Outcome {
    golden("illustrative.pf", "A.f", &["L", "lp", "lq", "H"])
}

fn c2_getinfo() -> Outcome {
    golden("getinfo.pf", "Ads.getInfo", &["L", "L", "H", "l1"])
}

fn c3_getcontactno() -> Outcome {
    let sys = System::from_source(&support::corpus_source("getcontactno.pf")).map_err(|e| e.to_string())?;
    let inf = infer_system(&sys).map_err(|e| e.to_string())?;
    let id = sys.lookup_qual("Contacts.getContactNo").unwrap();
    let ret = &inf.fun_type(id).ret;
    let rc = sys.universe().perm("READ_CONTACT").unwrap();
    let lat = sys.lattice();
    let ok = sys.universe().sets().all(|s| ret.at(s) == if s.contains(rc) { lat.top() } else { lat.bottom() });
    let shown = format!("getContactNo returns {}", sys.domain.show(ret));
    if ok {
        Ok(shown)
    } else {
        Err(shown)
    }
}

fn c4_laundering() -> Outcome {
    let src = support::corpus_source("laundering.pf");
    let as_t = System::from_source(&src).map_err(|e| e.to_string())?;
    let af = check_function(&as_t, as_t.lookup_qual("A.f").unwrap());
    let first = matches!(&af, Err(e) if e.kind == TypeErrorKind::CallArgViolation(0));
    let low = src.replace("fun f(x : { {p}: H, _: L }) : L", "fun f(x : L) : L");
    let as_l = System::from_source(&low).map_err(|e| e.to_string())?;
    let second = check_function(&as_l, as_l.lookup_qual("A.f").unwrap()).is_ok();
    let main = check_function(&as_l, as_l.lookup_qual("M.main").unwrap());
    let third = main.is_err();
    // Leaving A.f open does not help: M.main : () -> L has no typing at all.
    let open = low.replace("fun f(x : L) : L", "fun f(x) infer");
    let open = System::from_source(&open).map_err(|e| e.to_string())?;
    let fourth = matches!(infer_system(&open), Err(InferError::Unsat { .. }));
    let shown = format!(
        "A.f : t -> L rejected with CallArgViolation: {first}; A.f : L -> L accepted: {second}; M.main : () -> L rejected: {third}; inference with A.f open unsat: {fourth}"
    );
    if first && second && third && fourth {
        Ok(shown)
    } else {
        Err(shown)
    }
}

/// Types a system is tested against: declared ones if the checker accepts
/// it, otherwise inferred ones. `None` if neither accepts it.
fn accepted_types(sys: &System) -> Option<Vec<FunctionType>> {
    if sys.is_fully_annotated() && check_system(sys).is_well_typed() {
        return Some(sys.ids().map(|id| sys.function(id).declared_type().unwrap()).collect());
    }
    infer_system(sys).ok().map(|inf| inf.types)
}

fn c5_noninterference() -> Outcome {
    let cfg = NiConfig { domain: (0, 2), ..NiConfig::default() };
    let mut accepted = 0;
    let mut cells = 0;
    let mut problems = Vec::new();
    for (name, src) in support::corpus() {
        let sys = System::from_source(&src).map_err(|e| format!("{name}: {e}"))?;
        let Some(types) = accepted_types(&sys) else { continue };
        accepted += 1;
        for id in sys.ids() {
            for c in nitest_function(&sys, id, &types[id.0], &cfg) {
                cells += 1;
                match c.verdict {
                    Verdict::Ok | Verdict::Skipped => {}
                    Verdict::Violation(_) => problems.push(format!("{name}: violation in {}", sys.function(id).qual())),
                    Verdict::TooLarge { .. } => problems.push(format!("{name}: {} exceeds the pair cap", sys.function(id).qual())),
                }
            }
        }
    }
    let leaky = System::from_source(&support::corpus_source("leaky.pf")).unwrap();
    let caught = leaky.ids().all(|id| {
        let ty = leaky.function(id).declared_type().unwrap();
        nitest_function(&leaky, id, &ty, &cfg).iter().any(|c| matches!(c.verdict, Verdict::Violation(_)))
    });
    if !caught {
        problems.push("leaky.pf: no violation found".into());
    }
    if accepted < 12 {
        problems.push(format!("only {accepted} accepted corpus systems"));
    }
    if problems.is_empty() {
        Ok(format!("{accepted} accepted systems, {cells} cells, zero violations; leaky program caught"))
    } else {
        Err(problems.join("; "))
    }
}

fn c6_differential() -> Outcome {
    let mut rng = support::rng(6);
    let lattices = support::lattices();
    let (mut sat, mut unsat, mut bad) = (0, 0, Vec::new());
    for round in 0..1000 {
        let lat = &lattices[rng.gen_range(0..lattices.len())];
        let n = rng.gen_range(0..=3);
        let vars = rng.gen_range(1..=4u32);
        let count = rng.gen_range(1..=10);
        let cs = support::constraint_set(&mut rng, lat, n, vars, count);
        let (least, violations) = least_prefixpoint(lat, n, vars as usize, &cs);
        match (solve_vars(lat, n, vars as usize, &cs), violations.is_empty()) {
            (Ok(sol), true) => {
                sat += 1;
                if (0..vars).any(|v| sol.theta.get(permflow::infer::TypeVar(v)) != least.get(permflow::infer::TypeVar(v))) {
                    bad.push(format!("round {round}: different least solutions"));
                }
            }
            (Err(SolveError::Unsat { .. }), false) => unsat += 1,
            (Ok(_), false) => bad.push(format!("round {round}: solver satisfiable, oracle not")),
            (Err(e), _) => bad.push(format!("round {round}: {e}")),
        }
    }
    if bad.is_empty() {
        Ok(format!("1000 sets ({sat} satisfiable, {unsat} unsatisfiable), zero disagreements"))
    } else {
        Err(format!("{} disagreements, first: {}", bad.len(), bad[0]))
    }
}

/// `t·Λ` one literal at a time, straight from the definition.
fn apply_seq(t: &BaseType, lits: &[Literal]) -> BaseType {
    lits.iter().fold(t.clone(), |t, l| match l.sign {
        Sign::Plus => t.promote(l.perm),
        Sign::Minus => t.demote(l.perm),
    })
}

fn c7_trace_algebra() -> Outcome {
    let mut rng = support::rng(7);
    let lattices = support::lattices();
    let mut failures: Vec<String> = Vec::new();
    let signed = |p: Perm, s: bool| if s { Literal::plus(p) } else { Literal::minus(p) };
    for i in 0..10_000 {
        let lat = &lattices[rng.gen_range(0..lattices.len())];
        let n = rng.gen_range(1..=4);
        let t = support::base_type(&mut rng, lat, n);
        let lits = support::literals(&mut rng, n, 6);
        let p = Perm::from_index(rng.gen_range(0..n));
        let (s1, s2) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
        let mut fail = |what: &str| failures.push(format!("instance {i}: {what}"));
        // Distinct permissions commute.
        if n > 1 {
            let q = Perm::from_index((p.index() + rng.gen_range(1..n)) % n);
            if apply_seq(&t, &[signed(p, s1), signed(q, s2)]) != apply_seq(&t, &[signed(q, s2), signed(p, s1)]) {
                fail("distinct literals do not commute");
            }
        }
        // A literal commutes with a trace that does not mention its permission.
        let without_p: Vec<Literal> = lits.iter().copied().filter(|l| l.perm != p).collect();
        let lp = signed(p, s1);
        if apply_seq(&apply_seq(&t, &[lp]), &without_p) != apply_seq(&apply_seq(&t, &without_p), &[lp]) {
            fail("literal does not commute with an independent trace");
        }
        // Only the first literal on a permission matters.
        if apply_seq(&t, &[lp, signed(p, s2)]) != apply_seq(&t, &[lp]) {
            fail("second literal on the same permission changed the type");
        }
        // Idempotence.
        let once = apply_seq(&t, &lits);
        if apply_seq(&once, &lits) != once {
            fail("application is not idempotent");
        }
        // Promotion is invisible where p holds; demotion where it does not.
        for s in PermissionUniverse::sets_of(n) {
            if s.contains(p) && t.promote(p).at(s) != t.at(s) {
                fail("promotion changed a set containing p");
            }
            if !s.contains(p) && t.demote(p).at(s) != t.at(s) {
                fail("demotion changed a set without p");
            }
        }
        // The canonical trace (first literal wins) agrees with the sequence and the set action.
        let canon = lits.iter().fold(PermissionTrace::EPSILON, |tr, l| tr.then(*l));
        if t.apply(canon) != once {
            fail("canonical trace differs from literal-by-literal application");
        }
        if PermissionUniverse::sets_of(n).any(|s| once.at(s) != t.at(canon.act(s))) {
            fail("application differs from reading at (P ∪ pos) ∖ neg");
        }
        // Projection yields a constant that traces leave alone.
        let proj = t.project(support::perm_set(&mut rng, n));
        if proj.constant().is_none() || proj.apply(canon) != proj {
            fail("projection is not a fixed constant");
        }
    }
    if failures.is_empty() {
        Ok("10000 instances, zero counterexamples".into())
    } else {
        Err(format!("{} counterexamples, first: {}", failures.len(), failures[0]))
    }
}

fn c8_roundtrip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut tested = 0;
    let mut problems = Vec::new();
    for (name, src) in support::corpus() {
        let sys = System::from_source(&src).map_err(|e| format!("{name}: {e}"))?;
        if infer_system(&sys).is_err() {
            continue;
        }
        tested += 1;
        let input = support::corpus_path(&name);
        let out = dir.path().join(&name);
        let inferred = run_cli(["permflow".as_ref(), "infer".as_ref(), input.as_os_str(), "--emit-annotated".as_ref(), out.as_os_str()]);
        if inferred.code != 0 {
            problems.push(format!("{name}: infer exited {}", inferred.code));
            continue;
        }
        let checked = run_cli(["permflow".as_ref(), "check".as_ref(), out.as_os_str()]);
        if checked.code != 0 {
            problems.push(format!("{name}: check exited {}: {}", checked.code, checked.stdout.trim()));
        }
    }
    if problems.is_empty() {
        Ok(format!("{tested} inferable systems re-check after annotation"))
    } else {
        Err(problems.join("; "))
    }
}

/// Expressions over `x`, `r`, the constant `K` and (when bound) `y`, with exactly `size` nodes.
fn exprs(size: usize, y: bool) -> Vec<Expr> {
    let mut out = Vec::new();
    if size == 1 {
        out.push(Expr::int(0));
        for v in ["x", "r", "K"] {
            out.push(Expr::var(v));
        }
        if y {
            out.push(Expr::var("y"));
        }
    } else if size >= 3 {
        for l in 1..size - 1 {
            for a in exprs(l, y) {
                for b in exprs(size - 1 - l, y) {
                    out.push(Expr::bin(permflow::ast::BinOp::Add, a.clone(), b));
                }
            }
        }
    }
    out
}

/// Commands with exactly `size` nodes; `y` is the only letvar name and is never rebound.
fn cmds(size: usize, y: bool) -> Vec<Cmd> {
    let mut out = Vec::new();
    let targets: &[&str] = if y { &["x", "r", "y"] } else { &["x", "r"] };
    for &x in targets {
        for e in exprs(size - 1, y) {
            out.push(Cmd::assign(x, e.clone()));
            out.push(Cmd::call(x, "B", "g", vec![e]));
        }
    }
    let pairs = |budget: usize, f: &mut dyn FnMut(Cmd, Cmd)| {
        for a in 2..budget {
            for ca in cmds(a, y) {
                for cb in cmds(budget - a, y) {
                    f(ca.clone(), cb);
                }
            }
        }
    };
    if size > 4 {
        pairs(size - 1, &mut |a, b| out.push(Cmd::seq(a, b)));
        pairs(size - 1, &mut |a, b| out.push(Cmd::test("p", a, b)));
    }
    for es in (1..size).step_by(2) {
        if size - 1 - es >= 4 {
            for e in exprs(es, y) {
                for a in 2..size - 1 - es - 1 {
                    for ca in cmds(a, y) {
                        for cb in cmds(size - 1 - es - a, y) {
                            out.push(Cmd::if_(e.clone(), ca.clone(), cb));
                        }
                    }
                }
            }
        }
        if size > es + 2 {
            for e in exprs(es, y) {
                for c in cmds(size - 1 - es, y) {
                    out.push(Cmd::while_(e.clone(), c.clone()));
                }
                if !y {
                    for c in cmds(size - 1 - es, true) {
                        out.push(Cmd::letvar("y", e.clone(), c));
                    }
                }
            }
        }
    }
    out
}

const MICRO: &str = "lattice { levels L, H; order L < H; }
permissions { p }
const K : H = 1;
app B perms {} { fun g(z : { {p}: H, _: L }) : { {p}: L, _: H } { init r = 0 in { r := z; return r } } }
app A perms {} { fun f(x : L) : L { init r = 0 in { r := 0; return r } } }";

fn c9_micro_equivalence() -> Outcome {
    let template = System::from_source(MICRO).map_err(|e| e.to_string())?;
    let types: Vec<BaseType> = {
        let d = Declarative::new(&template);
        d.universe().to_vec()
    };
    let bodies: Vec<Cmd> = (2..=6).flat_map(|s| cmds(s, false)).collect();
    let (mut judged, mut accepted, mut bad) = (0u64, 0u64, Vec::new());
    for body in &bodies {
        debug_assert!(body.node_count() <= 6);
        let mut ast = template.ast.clone();
        for app in ast.apps_mut() {
            if app.name == "A" {
                for item in &mut app.items {
                    if let permflow::ast::AppItem::Fun(f) = item {
                        f.body = body.clone();
                    }
                }
            }
        }
        let Ok(mut sys) = System::build(ast) else { continue };
        let id = sys.lookup_qual("A.f").unwrap();
        for theta in [PermSet::EMPTY, sys.universe().full()] {
            sys.theta.insert("A".into(), theta);
            for tx in &types {
                for tr in &types {
                    sys.functions[id.0].param_types = vec![Some(tx.clone())];
                    sys.functions[id.0].ret_type = Some(tr.clone());
                    let rules = check_function(&sys, id).is_ok();
                    let search = Declarative::new(&sys).derivable(id);
                    judged += 1;
                    accepted += rules as u64;
                    if rules != search && bad.len() < 3 {
                        bad.push(format!(
                            "{} with x : {}, r : {}, Θ(A) = {}: rules {rules}, search {search}",
                            permflow::printer::print_cmd(body).trim(),
                            sys.domain.show(tx),
                            sys.domain.show(tr),
                            sys.universe().show_set(theta)
                        ));
                    }
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(format!("{} bodies, {judged} typings ({accepted} accepted), zero disagreements", bodies.len()))
    } else {
        Err(bad.join("; "))
    }
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("illustrative inferred type", c1_illustrative, Duration::from_secs(1)),
        ("getInfo inferred type", c2_getinfo, Duration::from_secs(1)),
        ("getContactNo policy type", c3_getcontactno, Duration::from_secs(1)),
        ("parameter laundering verdicts", c4_laundering, Duration::MAX),
        ("noninterference over the corpus", c5_noninterference, Duration::from_secs(60)),
        ("solver differential against the fixpoint oracle", c6_differential, Duration::from_secs(120)),
        ("trace algebra properties", c7_trace_algebra, Duration::from_secs(30)),
        ("infer, annotate, check roundtrip", c8_roundtrip, Duration::from_secs(30)),
        ("trace rules match declarative derivations", c9_micro_equivalence, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > *limit => Err(format!("{d}; took {took:?}, limit {limit:?}")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("{tag} criterion {} {name} ({} ms): {detail}", i + 1, took.as_millis());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
