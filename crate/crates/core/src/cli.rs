//! Command-line front end. `run_cli` is the whole program minus process
//! plumbing, so tests and the C interface can drive it in-process.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use crate::infer::infer_system;
use crate::interp::{Env, ExecError, Interpreter, DEFAULT_FUEL};
use crate::ni::{nitest_function, NiConfig, Verdict, DEFAULT_PAIR_CAP};
use crate::perms::PermSet;
use crate::system::{FunId, System};
use crate::typecheck::check_system;
use crate::types::FunctionType;
use crate::{printer, report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "permflow", version, about = "Permission-dependent information-flow analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Type check a fully annotated system.
    Check(Common),
    /// Infer types for unannotated functions.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Include per-stage solver timings in JSON output.
        #[arg(long)]
        timings: bool,
        /// Write the source back with the inferred annotations inserted.
        #[arg(long, value_name = "PATH")]
        emit_annotated: Option<PathBuf>,
    },
    /// Execute one function call.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "APP.FUN")]
        entry: String,
        #[arg(long, default_value = "", value_name = "N,N,...", allow_hyphen_values = true)]
        args: String,
        #[arg(long, default_value = "", value_name = "PERM,...")]
        caller_perms: String,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
        /// Initial value of the result variable and constant overrides, `r=1,K=0`.
        #[arg(long, default_value = "", value_name = "NAME=V,...")]
        init: String,
    },
    /// Brute-force noninterference testing against declared or inferred types.
    Nitest {
        #[command(flatten)]
        common: Common,
        /// Restrict to these functions (repeatable).
        #[arg(long, value_name = "APP.FUN")]
        entry: Vec<String>,
        /// Restrict to one caller permission set.
        #[arg(long, value_name = "PERM,...")]
        caller_perms: Option<String>,
        /// Restrict to one observer level.
        #[arg(long)]
        observer: Option<String>,
        #[arg(long, default_value = "0..2", value_name = "LO..HI", allow_hyphen_values = true)]
        domain: String,
        #[arg(long, default_value_t = DEFAULT_PAIR_CAP)]
        pair_cap: u64,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
        /// Compare every observable final variable, not just observable results.
        #[arg(long)]
        strict: bool,
    },
    /// Pretty-print a system.
    Fmt(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    pub file: PathBuf,
    /// Emit a single JSON document on standard output.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("{0}")]
    Usage(String),
}

/// What a command printed and how it should exit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_cli<I, T>(argv: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                Output { code, stdout: text, stderr: String::new() }
            } else {
                Output { code, stdout: String::new(), stderr: text }
            }
        }
    }
}

pub fn run(cli: &Cli) -> Output {
    let mut out = Output { code: EXIT_OK, stdout: String::new(), stderr: String::new() };
    match dispatch(&cli.command, &mut out) {
        Ok(code) => out.code = code,
        Err(e) => {
            out.code = EXIT_USAGE;
            if common(&cli.command).json {
                out.stdout = to_string(&json!({ "ok": false, "error": "usage", "detail": e.to_string() }));
            }
            out.stderr.push_str(&format!("error: {e}\n"));
        }
    }
    out
}

fn common(c: &Command) -> &Common {
    match c {
        Command::Check(c) | Command::Fmt(c) => c,
        Command::Infer { common, .. } | Command::Run { common, .. } | Command::Nitest { common, .. } => common,
    }
}

fn to_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn load(c: &Common) -> Result<(String, System), CliError> {
    let path = c.file.display().to_string();
    let src = std::fs::read_to_string(&c.file).map_err(|source| CliError::Io { path: path.clone(), source })?;
    let sys = System::from_source(&src).map_err(|e| CliError::Input { path: path.clone(), message: e.to_string() })?;
    Ok((path, sys))
}

fn parse_perms(sys: &System, s: &str) -> Result<PermSet, CliError> {
    let names: Vec<&str> = s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect();
    sys.universe().set_of(&names).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_entry(sys: &System, s: &str) -> Result<FunId, CliError> {
    sys.lookup_qual(s).ok_or_else(|| CliError::Usage(format!("unknown function `{s}`")))
}

fn parse_ints(s: &str) -> Result<Vec<i64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| CliError::Usage(format!("`{x}` is not an integer"))))
        .collect()
}

fn parse_init(s: &str) -> Result<Vec<(String, i64)>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("expected NAME=V, got `{kv}`")))?;
            let v = v.trim().parse().map_err(|_| CliError::Usage(format!("`{v}` is not an integer")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn parse_domain(s: &str) -> Result<(i64, i64), CliError> {
    let bad = || CliError::Usage(format!("expected LO..HI, got `{s}`"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (lo, hi): (i64, i64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn dispatch(cmd: &Command, out: &mut Output) -> Result<i32, CliError> {
    match cmd {
        Command::Check(c) => {
            let (_, sys) = load(c)?;
            let r = check_system(&sys);
            out.stdout = if c.json { to_string(&report::check_json(&sys, &r)) } else { report::check_text(&sys, &r) };
            Ok(if r.is_well_typed() { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Infer { common: c, timings, emit_annotated } => {
            let (_, sys) = load(c)?;
            match infer_system(&sys) {
                Ok(inf) => {
                    if let Some(p) = emit_annotated {
                        let src = printer::print_system(&report::annotate(&sys, &inf));
                        std::fs::write(p, src)
                            .map_err(|source| CliError::Io { path: p.display().to_string(), source })?;
                    }
                    out.stdout = if c.json {
                        to_string(&report::infer_json(&sys, &inf, *timings))
                    } else {
                        report::infer_text(&sys, &inf)
                    };
                    Ok(EXIT_OK)
                }
                Err(e) => {
                    if c.json {
                        out.stdout = to_string(&report::infer_error_json(&sys, &e));
                    } else {
                        out.stdout = report::infer_error_text(&sys, &e);
                    }
                    Ok(EXIT_NEGATIVE)
                }
            }
        }
        Command::Run { common: c, entry, args, caller_perms, fuel, init } => {
            let (_, sys) = load(c)?;
            let id = parse_entry(&sys, entry)?;
            let f = sys.function(id);
            let args = parse_ints(args)?;
            if args.len() != f.params.len() {
                return Err(CliError::Usage(format!(
                    "{} expects {} argument(s), got {}",
                    f.qual(),
                    f.params.len(),
                    args.len()
                )));
            }
            let perms = parse_perms(&sys, caller_perms)?;
            let mut it = Interpreter::new(&sys, *fuel);
            let mut env: Env = f.params.iter().cloned().zip(args).collect();
            env.insert(f.ret_var.clone(), 0);
            for (k, v) in parse_init(init)? {
                if k == f.ret_var {
                    env.insert(k, v);
                } else if sys.consts.contains_key(&k) {
                    it.set_const(&k, v);
                } else {
                    return Err(CliError::Usage(format!("`{k}` is neither the result variable nor a constant")));
                }
            }
            match it.run_body(id, env, perms) {
                Ok(fin) => {
                    let v = fin.get(&f.ret_var).copied().unwrap_or_default();
                    out.stdout = if c.json {
                        to_string(&json!({ "command": "run", "entry": f.qual(), "result": v, "steps": it.steps() }))
                    } else {
                        format!("{v}\n")
                    };
                    Ok(EXIT_OK)
                }
                Err(ExecError::FuelExhausted(n)) => {
                    if c.json {
                        out.stdout = to_string(&json!({ "command": "run", "entry": f.qual(), "error": "FuelExhausted", "steps": n }));
                    }
                    out.stderr = format!("fuel exhausted after {n} steps\n");
                    Ok(EXIT_NEGATIVE)
                }
                Err(e) => Err(CliError::Usage(e.to_string())),
            }
        }
        Command::Nitest { common: c, entry, caller_perms, observer, domain, pair_cap, fuel, strict } => {
            let (path, sys) = load(c)?;
            let types: Vec<FunctionType> = if sys.is_fully_annotated() {
                sys.ids().map(|id| sys.function(id).declared_type().expect("annotated")).collect()
            } else {
                match infer_system(&sys) {
                    Ok(inf) => inf.types,
                    Err(e) => {
                        out.stdout =
                            if c.json { to_string(&report::infer_error_json(&sys, &e)) } else { report::infer_error_text(&sys, &e) };
                        return Ok(EXIT_NEGATIVE);
                    }
                }
            };
            let cfg = NiConfig {
                observers: match observer {
                    Some(l) => vec![sys.domain.level(l).map_err(|e| CliError::Usage(e.to_string()))?],
                    None => Vec::new(),
                },
                domain: parse_domain(domain)?,
                fuel: *fuel,
                caller_sets: match caller_perms {
                    Some(s) => vec![parse_perms(&sys, s)?],
                    None => Vec::new(),
                },
                pair_cap: *pair_cap,
                strict: *strict,
            };
            let ids: Vec<FunId> = if entry.is_empty() {
                sys.ids().collect()
            } else {
                entry.iter().map(|e| parse_entry(&sys, e)).collect::<Result<_, _>>()?
            };
            let cells: Vec<_> = ids.iter().flat_map(|&id| nitest_function(&sys, id, &types[id.0], &cfg)).collect();
            out.stdout =
                if c.json { to_string(&report::nitest_json(&sys, &cells)) } else { report::nitest_text(&sys, &path, &cells) };
            let bad = cells.iter().any(|c| matches!(c.verdict, Verdict::Violation(_)));
            Ok(if bad { EXIT_NEGATIVE } else { EXIT_OK })
        }
        Command::Fmt(c) => {
            let (_, sys) = load(c)?;
            let src = printer::print_system(&sys.ast);
            out.stdout = if c.json { to_string(&json!({ "command": "fmt", "source": src })) } else { src };
            Ok(EXIT_OK)
        }
    }
}
