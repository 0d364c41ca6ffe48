//! Scenario-driven front end: parses arguments, runs a pipeline and writes its reports.

pub mod emit;
pub mod run;
pub mod scenario;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use run::{execute, Command, Outcome, Overrides, EXIT_HYPOTHESIS, EXIT_PASS, EXIT_SOLVER, EXIT_USAGE};
pub use scenario::{builtin, Scenario, ScenarioError, BUILTIN};

#[derive(Parser, Debug)]
#[command(name = "capillary-rig", version, about = "Capillary surfaces, boundary comparisons and CMC foliations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Boundary comparison hypotheses on a wall patch.
    Check(RunArgs),
    /// Capillary energy minimization from random initial leaves.
    Minimize(RunArgs),
    /// CMC leaves about a reference leaf, or near a cone vertex.
    Foliate(RunArgs),
    /// Quadratic barrier sweep at the top point.
    Barrier(RunArgs),
    /// Contact angle and mean curvature expansions at the top point.
    Verify(RunArgs),
    /// Boundary identities, weak convexity, winding and curve estimates.
    Report(RunArgs),
    /// Runs every built-in scenario end to end.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory for JSON, CSV and SVG reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid override as NUxNV.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; 2]>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario JSON file, or the name of a built-in scenario.
    #[arg(long)]
    scenario: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[command(flatten)]
    common: Common,
}

pub fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected NUxNV, got `{s}`"))?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad grid size `{t}`: {e}"));
    let g = [p(a)?, p(b)?];
    if g.contains(&0) {
        return Err("grid sizes must be positive".into());
    }
    Ok(g)
}

/// Loads a scenario from a file, falling back to the built-in library by name.
pub fn load_scenario(spec: &str) -> Result<Scenario, String> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{spec}: {e}"))?;
        return Scenario::from_json(&text).map_err(|e| format!("{spec}:{e}"));
    }
    let stem = spec.strip_prefix("builtin:").unwrap_or(spec);
    let stem = stem.strip_suffix(".json").unwrap_or(stem);
    builtin(stem).ok_or_else(|| format!("{spec}: no such file or built-in scenario (built-ins: {})", BUILTIN.join(", ")))
}

fn overrides(c: &Common) -> Overrides {
    Overrides { grid: c.grid, seed: c.seed, tol: c.tol }
}

fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, String> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err("--jobs must be positive".into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| e.to_string())?;
            Ok(pool.install(f))
        }
    }
}

fn deliver(out: &Option<PathBuf>, outcome: &Outcome) -> i32 {
    match out {
        Some(dir) => {
            for (name, body) in &outcome.files {
                if let Err(e) = emit::write_atomic(&dir.join(name), body) {
                    eprintln!("error: writing {}: {e}", dir.join(name).display());
                    return EXIT_SOLVER;
                }
            }
            println!("{}", outcome.summary);
        }
        None => print!("{}", outcome.files[0].1),
    }
    outcome.code
}

fn run_one(cmd: Command, a: &RunArgs) -> i32 {
    let sc = match load_scenario(&a.scenario) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let out = a.common.out.clone().or_else(|| sc.output.as_ref().map(|o| PathBuf::from(&o.dir)));
    let ov = overrides(&a.common);
    match with_jobs(a.common.jobs, || execute(&sc, cmd, &ov)) {
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Ok(Err(e)) => {
            eprintln!("error: {} {}: {e}", cmd.name(), sc.name);
            run::exit_code(&e)
        }
        Ok(Ok(outcome)) => deliver(&out, &outcome),
    }
}

/// Runs every built-in scenario through its own task; exit 0 only when all of them pass.
pub fn selftest(out: Option<&Path>, ov: &Overrides) -> (i32, Vec<(String, i32, f64)>) {
    let mut rows = Vec::new();
    let mut worst = EXIT_PASS;
    for name in BUILTIN {
        let sc = builtin(name).expect("built-in exists");
        let cmd = Command::of(&sc.task);
        let start = Instant::now();
        let code = match execute(&sc, cmd, ov) {
            Ok(o) => {
                let mut code = o.code;
                if let Some(dir) = out {
                    for (f, body) in &o.files {
                        if let Err(e) = emit::write_atomic(&dir.join(f), body) {
                            eprintln!("error: writing {f}: {e}");
                            code = EXIT_SOLVER;
                        }
                    }
                }
                println!("{} [{:.1}s] {}", if code == EXIT_PASS { "ok  " } else { "FAIL" }, start.elapsed().as_secs_f64(), o.summary);
                code
            }
            Err(e) => {
                println!("FAIL [{:.1}s] {} {name}: {e}", start.elapsed().as_secs_f64(), cmd.name());
                run::exit_code(&e)
            }
        };
        if code != EXIT_PASS && worst == EXIT_PASS {
            worst = code;
        }
        rows.push((name.to_string(), code, start.elapsed().as_secs_f64()));
    }
    (worst, rows)
}

/// Entry point: `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match cli.cmd {
        Cmd::Check(a) => run_one(Command::Check, &a),
        Cmd::Minimize(a) => run_one(Command::Minimize, &a),
        Cmd::Foliate(a) => run_one(Command::Foliate, &a),
        Cmd::Barrier(a) => run_one(Command::Barrier, &a),
        Cmd::Verify(a) => run_one(Command::Verify, &a),
        Cmd::Report(a) => run_one(Command::Report, &a),
        Cmd::Selftest(a) => {
            let ov = overrides(&a.common);
            match with_jobs(a.common.jobs, || selftest(a.common.out.as_deref(), &ov)) {
                Ok((code, _)) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_USAGE
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // [TRIVIAL]
    #[test]
    fn grid_flag() {
        assert_eq!(parse_grid("64x33"), Ok([64, 33]));
        assert!(parse_grid("64").is_err());
        assert!(parse_grid("0x3").is_err());
    }

    // [TRIVIAL]
    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run(["capillary-rig", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["capillary-rig", "check"]), EXIT_USAGE);
        assert_eq!(run(["capillary-rig", "check", "--scenario", "no-such-thing"]), EXIT_USAGE);
        assert_eq!(run(["capillary-rig", "check", "--scenario", "sphere", "--grid", "3"]), EXIT_USAGE);
    }

    // [TRIVIAL]
    #[test]
    fn builtin_lookup() {
        assert!(load_scenario("sphere.json").is_ok());
        assert!(load_scenario("builtin:cone").is_ok());
    }
}
