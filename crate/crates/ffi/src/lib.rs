//! C ABI for the permflow analyzer.
//!
//! A system is parsed once into an opaque [`PfSystem`] handle and then
//! checked, inferred, tested or run. Reports come back as NUL-terminated
//! JSON strings owned by the caller and released with [`pf_string_free`].
//! Every entry point returns a [`PfStatus`]; on any status other than
//! `PF_OK` and `PF_NEGATIVE`, [`pf_last_error`] describes what went wrong.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use permflow::infer::infer_system;
use permflow::interp::{Env, ExecError, Interpreter};
use permflow::ni::{nitest_function, NiConfig, Verdict};
use permflow::perms::PermSet;
use permflow::printer::print_system;
use permflow::report;
use permflow::system::System;
use permflow::typecheck::check_system;
use permflow::types::FunctionType;
use serde_json::Value;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    /// Success; for check, infer and nitest the verdict was positive.
    PfOk = 0,
    /// The analysis ran and the verdict was negative (ill-typed, unsatisfiable, a violation).
    PfNegative = 1,
    /// A null pointer, bad UTF-8, unknown name or malformed argument.
    PfInvalidArgument = 2,
    /// The source did not parse or failed well-formedness checks.
    PfParseError = 3,
    /// The interpreter ran out of fuel.
    PfFuelExhausted = 4,
    /// Any other runtime failure, including a caught panic.
    PfInternal = 5,
}

/// A parsed, well-formed system.
pub struct PfSystem {
    sys: System,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PfStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording failures and containing panics.
fn guard(f: impl FnOnce() -> Result<PfStatus, Failure>) -> PfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Failure(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            PfStatus::PfInternal
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PfStatus::PfInvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn sys_arg<'a>(p: *const PfSystem) -> Result<&'a System, Failure> {
    p.as_ref().map(|h| &h.sys).ok_or_else(|| invalid("system handle is null"))
}

unsafe fn emit(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| Failure(PfStatus::PfInternal, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn json(v: &Value) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn parse_perms(sys: &System, s: &str) -> Result<PermSet, Failure> {
    let mut set = PermSet::EMPTY;
    for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let p = sys.universe().perm(name).map_err(|e| invalid(e.to_string()))?;
        set = set.with(p);
    }
    Ok(set)
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn pf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn pf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses `source` and stores a new handle in `*out`.
///
/// # Safety
/// `source` must be a valid NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_system_parse(source: *const c_char, out: *mut *mut PfSystem) -> PfStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        *out = ptr::null_mut();
        let src = str_arg(source, "source")?;
        let sys = System::from_source(src).map_err(|e| Failure(PfStatus::PfParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(PfSystem { sys }));
        Ok(PfStatus::PfOk)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sys` must come from [`pf_system_parse`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pf_system_free(sys: *mut PfSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Number of functions in the system, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_system_function_count(sys: *const PfSystem) -> usize {
    sys.as_ref().map_or(0, |h| h.sys.ids().count())
}

/// Checks every annotated function; writes the JSON report to `*out`.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_check_json(sys: *const PfSystem, out: *mut *mut c_char) -> PfStatus {
    guard(|| {
        let sys = sys_arg(sys)?;
        let r = check_system(sys);
        emit(out, json(&report::check_json(sys, &r)))?;
        Ok(if r.is_well_typed() { PfStatus::PfOk } else { PfStatus::PfNegative })
    })
}

/// Infers the least types; writes the solution or the unsat report to `*out`.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_infer_json(sys: *const PfSystem, out: *mut *mut c_char) -> PfStatus {
    guard(|| {
        let sys = sys_arg(sys)?;
        match infer_system(sys) {
            Ok(inf) => {
                emit(out, json(&report::infer_json(sys, &inf, false)))?;
                Ok(PfStatus::PfOk)
            }
            Err(e) => {
                emit(out, json(&report::infer_error_json(sys, &e)))?;
                Ok(PfStatus::PfNegative)
            }
        }
    })
}

/// Tests noninterference of every function over inputs in `lo..=hi`.
/// `observer` names a single observer level, or is null for all levels.
///
/// # Safety
/// `sys` must be a live handle, `observer` null or a valid string, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_nitest_json(
    sys: *const PfSystem,
    observer: *const c_char,
    lo: i64,
    hi: i64,
    out: *mut *mut c_char,
) -> PfStatus {
    guard(|| {
        let sys = sys_arg(sys)?;
        if lo > hi {
            return Err(invalid(format!("empty domain {lo}..{hi}")));
        }
        let mut cfg = NiConfig { domain: (lo, hi), ..NiConfig::default() };
        if !observer.is_null() {
            let name = str_arg(observer, "observer")?;
            cfg.observers = vec![sys.domain.level(name).map_err(|e| invalid(e.to_string()))?];
        }
        let types: Vec<FunctionType> = if sys.is_fully_annotated() {
            sys.ids().map(|id| sys.function(id).declared_type().expect("annotated")).collect()
        } else {
            match infer_system(sys) {
                Ok(inf) => inf.types,
                Err(e) => {
                    emit(out, json(&report::infer_error_json(sys, &e)))?;
                    return Ok(PfStatus::PfNegative);
                }
            }
        };
        let cells: Vec<_> = sys.ids().flat_map(|id| nitest_function(sys, id, &types[id.0], &cfg)).collect();
        emit(out, json(&report::nitest_json(sys, &cells)))?;
        let bad = cells.iter().any(|c| matches!(c.verdict, Verdict::Violation(_)));
        Ok(if bad { PfStatus::PfNegative } else { PfStatus::PfOk })
    })
}

/// Runs `entry` (`App.fun`) on `nargs` arguments as if called by an app holding
/// `caller_perms` (comma separated, null for none). The result goes to `*result`.
///
/// # Safety
/// `sys` must be a live handle, `entry` a valid string, `args` readable for
/// `nargs` values (or null when `nargs` is 0), `caller_perms` null or a valid
/// string, and `result` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_run(
    sys: *const PfSystem,
    entry: *const c_char,
    args: *const i64,
    nargs: usize,
    caller_perms: *const c_char,
    fuel: u64,
    result: *mut i64,
) -> PfStatus {
    guard(|| {
        let sys = sys_arg(sys)?;
        let entry = str_arg(entry, "entry")?;
        if result.is_null() {
            return Err(invalid("result pointer is null"));
        }
        let id = sys.lookup_qual(entry).ok_or_else(|| invalid(format!("unknown function `{entry}`")))?;
        let f = sys.function(id);
        let args: &[i64] = match (args.is_null(), nargs) {
            (_, 0) => &[],
            (true, _) => return Err(invalid("args is null")),
            (false, n) => std::slice::from_raw_parts(args, n),
        };
        if args.len() != f.params.len() {
            return Err(invalid(format!("{} expects {} argument(s), got {}", f.qual(), f.params.len(), args.len())));
        }
        let perms = if caller_perms.is_null() { PermSet::EMPTY } else { parse_perms(sys, str_arg(caller_perms, "caller_perms")?)? };
        let mut env: Env = f.params.iter().cloned().zip(args.iter().copied()).collect();
        env.insert(f.ret_var.clone(), 0);
        match Interpreter::new(sys, fuel).run_body(id, env, perms) {
            Ok(fin) => {
                *result = fin.get(&f.ret_var).copied().unwrap_or_default();
                Ok(PfStatus::PfOk)
            }
            Err(ExecError::FuelExhausted(n)) => Err(Failure(PfStatus::PfFuelExhausted, format!("fuel exhausted after {n} steps"))),
            Err(e) => Err(Failure(PfStatus::PfInternal, e.to_string())),
        }
    })
}

/// Pretty-prints the system in canonical form.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_fmt(sys: *const PfSystem, out: *mut *mut c_char) -> PfStatus {
    guard(|| {
        let sys = sys_arg(sys)?;
        emit(out, print_system(&sys.ast))?;
        Ok(PfStatus::PfOk)
    })
}

/// Frees a string returned through an `out` parameter. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
