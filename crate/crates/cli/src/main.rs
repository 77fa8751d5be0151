//! `nmart <recipe> --config <path> [--out <dir>] [--seed <n>] [--paths <n>] [--dt <x>]`
//!
//! Exit status: 0 when every check passes, 1 on a failed check or aborted
//! recipe, 2 on a usage or config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use nmart_core::control::ControlPoint;
use nmart_core::harness::{load_config, run_experiment, Overrides, RECIPES};
use nmart_core::operators::{explain_gen_l, TestFunction};

const EXIT_PASS: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "nmart",
    about = "Run a named experiment recipe and write report.txt plus CSV artifacts",
    after_help = recipe_help()
)]
struct RunCli {
    /// Recipe to run.
    recipe: String,
    #[command(flatten)]
    common: Common,
    /// Output directory (default: `run.out` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo path budget (`mc.paths`).
    #[arg(long)]
    paths: Option<usize>,
    /// Monte Carlo time step (`mc.dt`).
    #[arg(long)]
    dt: Option<f64>,
    /// Disable data parallelism.
    #[arg(long)]
    sequential: bool,
}

/// Evaluates the generator of the configured problem on a builtin test
/// function and prints the branch taken per noise coordinate.
#[derive(Debug, Parser)]
#[command(name = "nmart operator")]
struct OperatorCli {
    #[command(flatten)]
    common: Common,
    /// State point, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    y: Vec<f64>,
    /// Jump sizes per noise coordinate, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    u: Vec<f64>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pi: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t: f64,
    /// Builtin test function.
    #[arg(long, default_value = "quadratic")]
    phi: String,
}

#[derive(Debug, Args)]
struct Common {
    /// Line-oriented config file.
    #[arg(long)]
    config: PathBuf,
}

fn recipe_help() -> String {
    format!(
        "Recipes: {}\nDebug: nmart operator --config <path> --y <list> --u <list> [--pi <x>] [--t <x>] [--phi <name>]",
        RECIPES.join(", ")
    )
}

fn usage(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("nmart: {message}");
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(String::as_str) == Some("operator") {
        let rest = std::iter::once("nmart operator".to_string()).chain(args.into_iter().skip(2));
        match OperatorCli::try_parse_from(rest) {
            Ok(cli) => operator(cli),
            Err(e) => {
                let _ = e.print();
                ExitCode::from(if e.use_stderr() {
                    EXIT_USAGE
                } else {
                    EXIT_PASS
                })
            }
        }
    } else {
        match RunCli::try_parse_from(args) {
            Ok(cli) => run(cli),
            Err(e) => {
                let _ = e.print();
                ExitCode::from(if e.use_stderr() {
                    EXIT_USAGE
                } else {
                    EXIT_PASS
                })
            }
        }
    }
}

fn run(cli: RunCli) -> ExitCode {
    if !RECIPES.contains(&cli.recipe.as_str()) {
        return usage(format!(
            "unknown recipe `{}`; valid recipes: {}",
            cli.recipe,
            RECIPES.join(", ")
        ));
    }
    let out = match cli.out.map(absolute).transpose() {
        Ok(out) => out,
        Err(e) => return usage(e),
    };
    let overrides = Overrides {
        seed: cli.seed,
        paths: cli.paths,
        dt: cli.dt,
        out,
    };
    let mut cfg = match load_config(&cli.common.config, &overrides) {
        Ok(cfg) => cfg,
        Err(e) => return usage(e),
    };
    if cli.sequential {
        cfg.run.parallel = false;
    }
    let dir = cfg.out_dir();
    match run_experiment(&cfg, &cli.recipe, &dir) {
        Ok(report) => {
            print!("{}", report.to_text());
            println!("report written to {}", dir.join("report.txt").display());
            ExitCode::from(if report.passed() {
                EXIT_PASS
            } else {
                EXIT_FAIL
            })
        }
        Err(e) => usage(e),
    }
}

fn absolute(path: PathBuf) -> std::io::Result<PathBuf> {
    if path.is_absolute() {
        Ok(path)
    } else {
        Ok(std::env::current_dir()?.join(path))
    }
}

fn operator(cli: OperatorCli) -> ExitCode {
    let cfg = match load_config(&cli.common.config, &Overrides::default()) {
        Ok(cfg) => cfg,
        Err(e) => return usage(e),
    };
    let coeffs = match cfg.coefficients() {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    let (m, d) = (cfg.problem.m, cfg.problem.d);
    if cli.y.len() != m || cli.u.len() != d {
        return usage(format!("--y needs {m} values and --u needs {d} values"));
    }
    let Some(phi) = TestFunction::builtin(&cli.phi, m) else {
        return usage(format!(
            "unknown test function `{}`; builtins: {}",
            cli.phi,
            TestFunction::BUILTINS.join(", ")
        ));
    };
    let cp = ControlPoint::new(cli.pi, cli.u.clone());
    let b = explain_gen_l(&cp, &phi, cli.t, &cli.y, coeffs.as_ref());
    println!(
        "phi = {}, t = {:?}, y = {:?}, pi = {:?}",
        cli.phi, cli.t, cli.y, cli.pi
    );
    println!("drift term = {:?}", b.drift);
    for term in &b.terms {
        println!(
            "coordinate {}: u = {:?}, branch = {}, A = {:?}, term = {:?}",
            term.coordinate, term.u, term.branch, term.gen_a, term.term
        );
    }
    println!("L = {:?}", b.total);
    ExitCode::from(EXIT_PASS)
}
