use std::process::{Command, Output};

use sasaki_weyl::catalog::{self, Params};
use sasaki_weyl::config;
use sasaki_weyl::suites::{applicable, run_suite, RunOptions};

fn swverify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swverify")).args(args).output().unwrap()
}

fn shipped_config() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example2.toml")
}

#[test]
fn list_prints_every_catalog_name() {
    let out = swverify(&["list"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for d in catalog::EXAMPLES {
        assert!(text.lines().any(|l| l.starts_with(d.name)), "{} missing", d.name);
    }
}

#[test]
fn documented_invocations() {
    let ok = swverify(&["verify", "--example", "example2", "--suite", "sasaki-weyl", "--samples", "100", "--seed", "42"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("PASS example2 sasaki-weyl"));
    let bad = swverify(&["verify", "--example", "example2-broken", "--suite", "sasaki-weyl"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("sasaki-weyl-defect"));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["verify"],
        vec!["verify", "--example", "example2", "--suite", "no-such-suite"],
        vec!["verify", "--example", "sphere", "--suite", "reduction"],
        vec!["verify", "--example", "example2", "--lambda", "0.5"],
        vec!["verify", "--example", "example2", "--weights", "1,2"],
        vec!["verify", "--example", "example2", "--samples", "0"],
        vec!["verify", "--example", "example2", "--config", "x.toml"],
        vec!["frobnicate"],
    ] {
        assert_eq!(swverify(&args).status.code(), Some(2), "{args:?}");
    }
    assert_eq!(swverify(&["--help"]).status.code(), Some(0));
}

#[test]
fn parameters_reach_the_factory() {
    let out = swverify(&["verify", "--example", "example2", "--n", "3", "--weights", "2,-1,1", "--suite", "cr", "--samples", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn json_report_matches_schema_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = swverify(&["verify", "--example", "sphere", "--samples", "5", "--json", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let schema = String::from_utf8(swverify(&["report-schema"]).stdout).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&schema).unwrap();
    let required = schema["items"]["required"].as_array().unwrap();
    for r in v.as_array().unwrap() {
        for k in required {
            assert!(r.get(k.as_str().unwrap()).is_some(), "missing {k}");
        }
        assert_eq!(r["seed"], 42);
        assert_eq!(r["samples"], 5);
        for c in r["checks"].as_array().unwrap() {
            assert!(c["name"].is_string() && c["pass"].is_boolean() && c["tolerance"].is_number());
        }
    }
}

#[test]
fn seed_changes_the_samples() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        swverify(&["verify", "--example", "example2-broken", "--suite", "sasaki-weyl", "--samples", "5", "--seed", seed, "--json", path.to_str().unwrap()]);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        v[0]["checks"][0]["max_residual"].as_f64().unwrap()
    };
    assert_eq!(run("1"), run("1"));
    assert_ne!(run("1"), run("2"));
}

#[test]
fn config_reproduces_catalog_example2() {
    let from_file = config::load_config(&shipped_config()).unwrap();
    let built = catalog::build_example("example2", &Params::default()).unwrap();
    assert_eq!(applicable(&from_file), applicable(&built));
    let opts = RunOptions { samples: 10, ..RunOptions::default() };
    for s in applicable(&built) {
        let a = run_suite(&from_file, s, &opts);
        let b = run_suite(&built, s, &opts);
        assert!(a.pass, "{}: {:?}", s.name(), a.checks);
        assert_eq!(a.checks.len(), b.checks.len());
        for (x, y) in a.checks.iter().zip(&b.checks) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.max_residual.to_bits(), y.max_residual.to_bits(), "{} {}", s.name(), x.name);
        }
    }
}

#[test]
fn config_errors_exit_2_with_location() {
    let text = std::fs::read_to_string(shipped_config()).unwrap();
    let cases = [
        (text.replace("\"-y1\", \"x1\", \"-y2\"", "\"-y1\", \"w7\", \"-y2\""), "structure.theta0[1]", "w7"),
        (text.replace("theta0 = [\"-y1\", \"x1\", \"-y2\", \"x2\", \"-1\"]", "theta0 = [\"0\", \"0\", \"0\", \"0\", \"-1\"]"), "structure", "pseudoconvexity"),
        (text.replace("dim = 5", "dim = 4"), "chart.dim", "dim"),
        (text.replace("[slice]", "[slise]"), "line", ""),
        (text.replace("\"exp(u1) / sqrt(2) * cos(phi / 2)\", \"exp(u1) / sqrt(2) * sin(phi / 2)\", \"exp(u1) / sqrt(2) * cos(phi / 2)\", \"exp(u1) / sqrt(2) * sin(phi / 2)\"",
            "\"exp(u1) / sqrt(2) * cos(phi / 2)\", \"exp(u1) / sqrt(2) * sin(phi / 2)\", \"exp(u1) / sqrt(2) * cos(-phi / 2)\", \"exp(u1) / sqrt(2) * sin(-phi / 2)\""), "slice", "slice-transverse"),
    ];
    let dir = tempfile::tempdir().unwrap();
    for (i, (bad, loc, needle)) in cases.iter().enumerate() {
        assert_ne!(bad, &text, "case {i} did not edit the file");
        let path = dir.path().join(format!("bad{i}.toml"));
        std::fs::write(&path, bad).unwrap();
        let out = swverify(&["verify", "--config", path.to_str().unwrap(), "--suite", "cr"]);
        assert_eq!(out.status.code(), Some(2), "case {i}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("config error at {loc}")) && err.contains(needle), "case {i}: {err}");
    }
    let out = swverify(&["verify", "--config", "/nonexistent/x.toml"]);
    assert_eq!(out.status.code(), Some(2));
}
