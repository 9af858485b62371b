use std::io::Write;

use anyhow::Context;

fn main() -> anyhow::Result<()> {
    let out = permflow::cli::run_cli(std::env::args_os());
    std::io::stdout().write_all(out.stdout.as_bytes()).context("writing standard output")?;
    std::io::stderr().write_all(out.stderr.as_bytes()).context("writing standard error")?;
    std::process::exit(out.code);
}
