//! The `swverify` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::catalog::{self, Example, Params};
use crate::config;
use crate::suites::{applicable, run_suite, RunOptions, Suite, SuiteReport};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "swverify", about = "Numerical verification of Sasaki-Weyl structures, their cones and reductions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run verification suites on a catalog example or a config file.
    Verify(VerifyArgs),
    /// List catalog examples and their expected failures.
    List,
    /// Print the JSON schema of the report.
    ReportSchema,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    example: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suite to run; repeatable. `all` runs every applicable suite.
    #[arg(long = "suite", default_value = "all")]
    suites: Vec<String>,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
    /// Also write the reports as a JSON array to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,-1")]
    weights: Vec<i64>,
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match cli.command {
        Command::List => {
            for d in catalog::EXAMPLES {
                let fails: Vec<&str> = d.expected_failures.iter().map(|s| s.name()).collect();
                let fails = if fails.is_empty() { "none".to_string() } else { fails.join(",") };
                let _ = writeln!(out, "{:26} expected failures: {:28} {}", d.name, fails, d.summary);
            }
            EXIT_PASS
        }
        Command::ReportSchema => {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report_schema()).expect("static schema"));
            EXIT_PASS
        }
        Command::Verify(v) => verify(v, out, err),
    }
}

fn usage(err: &mut dyn Write, msg: &str) -> i32 {
    let _ = writeln!(err, "error: {msg}\n\nRun `swverify list` for example names, `swverify verify --help` for flags.");
    EXIT_USAGE
}

fn verify(v: VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let ex: Example = match (&v.example, &v.config) {
        (Some(name), _) => {
            let Some(d) = catalog::descriptor(name) else {
                return usage(err, &format!("unknown example `{name}`"));
            };
            match d.build(&Params { n: v.n, weights: v.weights.clone(), lambda: v.lambda }) {
                Ok(ex) => ex,
                Err(e) => return usage(err, &format!("cannot build {name}: {e}")),
            }
        }
        (None, Some(path)) => match config::load_config(path) {
            Ok(ex) => ex,
            Err(e) => {
                let _ = writeln!(err, "config error at {e}");
                return EXIT_USAGE;
            }
        },
        (None, None) => return usage(err, "give --example or --config"),
    };
    if v.samples == 0 {
        return usage(err, "--samples must be positive");
    }
    if !(v.tolerance_scale > 0.0 && v.tolerance_scale.is_finite()) {
        return usage(err, "--tolerance-scale must be a positive number");
    }
    let avail = applicable(&ex);
    let mut suites: Vec<Suite> = Vec::new();
    for s in &v.suites {
        if s == "all" {
            suites.extend(avail.iter().copied());
            continue;
        }
        let Some(su) = Suite::from_name(s) else {
            return usage(err, &format!("unknown suite `{s}`"));
        };
        if !avail.contains(&su) {
            return usage(err, &format!("suite `{s}` does not apply to {}", ex.name));
        }
        suites.push(su);
    }
    suites.sort();
    suites.dedup();
    let opts = RunOptions { samples: v.samples, seed: v.seed, tol_scale: v.tolerance_scale };
    let reports: Vec<SuiteReport> = suites.iter().map(|&s| run_suite(&ex, s, &opts)).collect();
    for r in &reports {
        let _ = writeln!(
            out,
            "{} {} {} ({} checks, {:.2} s)",
            if r.pass { "PASS" } else { "FAIL" },
            r.example,
            r.suite,
            r.checks.len(),
            r.seconds
        );
        for c in r.checks.iter().filter(|c| !c.pass) {
            let _ = writeln!(out, "    {}: {:e} vs tolerance {:e}", c.name, c.max_residual, c.tolerance);
        }
    }
    if let Some(path) = &v.json {
        let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
        if let Err(e) = std::fs::write(path, text + "\n") {
            let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
            return EXIT_USAGE;
        }
    }
    if reports.iter().all(|r| r.pass) {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

/// JSON schema of the `--json` output.
pub fn report_schema() -> serde_json::Value {
    serde_json::json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "swverify reports",
        "type": "array",
        "items": {
            "type": "object",
            "required": ["suite", "example", "params", "seed", "samples", "checks", "pass", "seconds"],
            "properties": {
                "suite": { "type": "string", "enum": Suite::ALL.iter().map(|s| s.name()).collect::<Vec<_>>() },
                "example": { "type": "string" },
                "params": {},
                "seed": { "type": "integer", "minimum": 0 },
                "samples": { "type": "integer", "minimum": 1 },
                "checks": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["name", "max_residual", "tolerance", "pass"],
                        "properties": {
                            "name": { "type": "string" },
                            "max_residual": { "type": ["number", "null"], "description": "null when the check could not be evaluated" },
                            "tolerance": { "type": "number" },
                            "pass": { "type": "boolean" }
                        }
                    }
                },
                "pass": { "type": "boolean" },
                "seconds": { "type": "number", "description": "wall time; the only field that varies between runs with the same seed" }
            }
        }
    })
}
