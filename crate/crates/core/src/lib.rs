// Check and inference errors carry full diagnostics; they are built at most once per function.
#![allow(clippy::result_large_err)]

pub mod lattice;
pub mod perms;
pub mod trace;
pub mod types;
pub mod ast;
pub mod parser;
pub mod printer;
pub mod system;
pub mod interp;
pub mod infer;
pub mod typecheck;
pub mod ni;
pub mod report;
pub mod cli;
