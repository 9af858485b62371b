mod support;

use permflow::cli::{run_cli, Output};
use permflow::parser::parse_system;
use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    let mut argv = vec!["permflow".to_string()];
    for a in args {
        argv.push(match a.strip_prefix("corpus:") {
            Some(name) => support::corpus_path(name).display().to_string(),
            None => a.to_string(),
        });
    }
    run_cli(argv)
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", out.stdout))
}

#[test]
fn infer_reports_the_getinfo_type() {
    let out = cli(&["infer", "corpus:getinfo.pf", "--json"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v = json(&out);
    let table = v["functions"][0]["return"]["table"].as_array().unwrap();
    let levels: Vec<&str> = table.iter().map(|e| e["level"].as_str().unwrap()).collect();
    assert_eq!(levels, ["L", "L", "H", "l1"]);
    assert_eq!(table[3]["perms"], serde_json::json!(["p", "q"]));
    assert!(v["stats"].get("timings_us").is_none());
    let timed = json(&cli(&["infer", "corpus:getinfo.pf", "--json", "--timings"]));
    assert!(timed["stats"]["timings_us"]["merge"].is_u64());
}

#[test]
fn check_rejects_laundering_at_the_call() {
    let out = cli(&["check", "corpus:laundering.pf", "--json"]);
    assert_eq!(out.code, 1);
    let v = json(&out);
    assert_eq!(v["well_typed"], false);
    let af = v["functions"].as_array().unwrap().iter().find(|f| f["name"] == "A.f").unwrap();
    assert_eq!(af["error"]["kind"], "CallArgViolation");
    assert_eq!(af["error"]["argument"], 0);
    assert_eq!(af["error"]["witness"], serde_json::json!(["p"]));
    assert!(af["error"]["detail"].as_str().unwrap().contains("B.g"));

    let human = cli(&["check", "corpus:laundering.pf"]);
    assert_eq!(human.code, 1);
    assert!(human.stdout.contains("error A.f at 10:"), "{}", human.stdout);
}

#[test]
fn run_reads_the_secret_only_with_the_permission() {
    let out = cli(&["run", "corpus:getsecret.pf", "--entry", "C.getsecret", "--caller-perms", "p"]);
    assert_eq!((out.code, out.stdout.as_str()), (0, "42\n"));
    let out = cli(&["run", "corpus:getsecret.pf", "--entry", "C.getsecret"]);
    assert_eq!(out.stdout, "0\n");
    let out = cli(&["run", "corpus:getsecret.pf", "--entry", "C.getsecret", "--caller-perms", "p", "--init", "SECRET=5"]);
    assert_eq!(out.stdout, "5\n");
}

#[test]
fn fuel_exhaustion_is_a_negative_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spin.pf");
    std::fs::write(
        &path,
        "lattice { levels L; } permissions { }
         app A perms {} { fun spin() infer { init r = 0 in { while 1 do r := r + 1; return r } } }",
    )
    .unwrap();
    let out = cli(&["run", path.to_str().unwrap(), "--entry", "A.spin", "--fuel", "100"]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("fuel"));
}

#[test]
fn json_output_is_byte_identical() {
    for args in [
        ["infer", "corpus:three_perms.pf", "--json"],
        ["check", "corpus:laundering.pf", "--json"],
        ["nitest", "corpus:dialer.pf", "--json"],
    ] {
        let a = cli(&args);
        let b = cli(&args);
        assert_eq!(a, b);
        assert!(!a.stdout.is_empty());
    }
}

fn init_arg(env: &serde_json::Map<String, Value>, params: &[&str]) -> (String, String) {
    let args: Vec<String> = params.iter().map(|p| env[*p].to_string()).collect();
    let init: Vec<String> =
        env.iter().filter(|(k, _)| !params.contains(&k.as_str())).map(|(k, v)| format!("{k}={v}")).collect();
    (args.join(","), init.join(","))
}

#[test]
fn nitest_witnesses_replay() {
    for (file, params) in [("leaky.pf", vec!["x"]), ("laundering.pf", vec!["x"])] {
        let out = cli(&["nitest", &format!("corpus:{file}"), "--json"]);
        assert_eq!(out.code, 1, "{file}");
        let v = json(&out);
        assert!(v["violations"].as_u64().unwrap() > 0);
        for cell in v["cells"].as_array().unwrap().iter().filter(|c| c["verdict"] == "violation") {
            let entry = cell["function"].as_str().unwrap();
            let perms: Vec<&str> = cell["perms"].as_array().unwrap().iter().map(|p| p.as_str().unwrap()).collect();
            let w = &cell["witness"];
            let has_params = !entry.ends_with("main") && !entry.ends_with("getsecret");
            let params: &[&str] = if has_params { &params } else { &[] };
            let mut outs = Vec::new();
            for side in ["env1", "env2"] {
                let (args, init) = init_arg(w[side].as_object().unwrap(), params);
                let r = cli(&[
                    "run",
                    &format!("corpus:{file}"),
                    "--entry",
                    entry,
                    "--args",
                    &args,
                    "--caller-perms",
                    &perms.join(","),
                    "--init",
                    &init,
                ]);
                assert_eq!(r.code, 0, "{}", r.stderr);
                outs.push(r.stdout.trim().parse::<i64>().unwrap());
            }
            assert_eq!(outs, [w["out1"].as_i64().unwrap(), w["out2"].as_i64().unwrap()], "{file} {entry}");
            assert_ne!(outs[0], outs[1]);
        }
    }
}

#[test]
fn nitest_strict_and_restricted_cells() {
    let out = cli(&["nitest", "corpus:getinfo.pf", "--observer", "L", "--caller-perms", "p,q", "--json"]);
    assert_eq!(out.code, 0);
    let v = json(&out);
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 1);
    // The result is l1 at {p,q}, so an L observer sees nothing.
    assert_eq!(cells[0]["verdict"], "skipped");
    let strict = cli(&["nitest", "corpus:identity.pf", "--strict", "--domain", "-1..1"]);
    assert_eq!(strict.code, 0, "{}", strict.stdout);
}

#[test]
fn fmt_round_trips() {
    for (name, src) in support::corpus() {
        let out = cli(&["fmt", &format!("corpus:{name}")]);
        assert_eq!(out.code, 0);
        assert_eq!(parse_system(&out.stdout).unwrap(), parse_system(&src).unwrap(), "{name}");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(&name);
        std::fs::write(&path, &out.stdout).unwrap();
        assert_eq!(cli(&["fmt", path.to_str().unwrap()]).stdout, out.stdout, "{name}");
    }
}

#[test]
fn check_requires_annotations() {
    let out = cli(&["check", "corpus:getinfo.pf", "--json"]);
    assert_eq!(out.code, 1);
    assert_eq!(json(&out)["functions"][0]["error"]["kind"], "MissingAnnotation");
}

#[test]
fn infer_unsat_names_the_functions() {
    let out = cli(&["infer", "corpus:leaky.pf", "--json"]);
    assert_eq!(out.code, 1);
    let v = json(&out);
    assert_eq!(v["error"], "Unsat");
    assert_eq!(v["functions"], serde_json::json!(["A.leak", "A.branch"]));
    assert!(!v["core"].as_array().unwrap().is_empty());
}

#[test]
fn usage_and_input_errors_exit_2() {
    assert_eq!(cli(&["check", "/nonexistent/file.pf"]).code, 2);
    assert_eq!(cli(&["frobnicate"]).code, 2);
    assert_eq!(cli(&["run", "corpus:getsecret.pf"]).code, 2);
    assert_eq!(cli(&["run", "corpus:getsecret.pf", "--entry", "C.nope"]).code, 2);
    assert_eq!(cli(&["run", "corpus:getsecret.pf", "--entry", "C.getsecret", "--caller-perms", "zz"]).code, 2);
    assert_eq!(cli(&["nitest", "corpus:getsecret.pf", "--domain", "3..1"]).code, 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.pf");
    std::fs::write(&bad, "lattice { levels L; } permissions { } app A perms {} { fun f( }").unwrap();
    let out = cli(&["check", bad.to_str().unwrap(), "--json"]);
    assert_eq!(out.code, 2);
    assert_eq!(json(&out)["error"], "usage");
    assert_eq!(cli(&["--help"]).code, 0);
}

#[test]
fn negative_values_are_not_flags() {
    let out = cli(&["run", "corpus:identity.pf", "--entry", "A.id", "--args", "-3"]);
    assert_eq!(out.stdout, "-3\n", "{}", out.stderr);
}
