//! Acceptance gate: one line per criterion, exit status 1 if any fails.
//!
//! Each criterion runs its recipe on `configs/default.conf` and, where an
//! independent oracle exists, re-derives the expected numbers here.

use std::path::{Path, PathBuf};

use nmart_core::harness::{
    load_config, run_experiment, ExperimentConfig, Overrides, RunReport, Table,
};
use nmart_core::hjb::ValueField;
use nmart_core::martingale::counterexample::counterexample_study;
use nmart_core::martingale::TimeGrid;
use nmart_core::Execution;

const KERNEL_TOL: f64 = 1e-8;
const CLOSED_FORM_TOL: f64 = 2e-2;
const MC_PATHS: usize = 10_000;
const MC_DT: f64 = 1e-3;
const PILOT_PAIRS: usize = 2_000;
const PILOT_SEED: u64 = 0x5eed_0f0a_ac1e;

struct Outcome {
    passed: bool,
    detail: String,
}

fn config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.conf");
    load_config(&path, &Overrides::default()).expect("default config parses")
}

fn run(cfg: &ExperimentConfig, recipe: &str, out: &Path) -> Result<RunReport, String> {
    run_experiment(cfg, recipe, &out.join(recipe)).map_err(|e| e.to_string())
}

fn checks_line(rep: &RunReport) -> String {
    let mut parts: Vec<String> = rep
        .checks
        .iter()
        .map(|c| {
            format!(
                "{} = {:.3e} [{}]",
                c.name,
                c.value,
                if c.passed { "ok" } else { "FAIL" }
            )
        })
        .collect();
    if let Some(e) = &rep.error {
        parts.push(format!("error: {e}"));
    }
    parts.join("; ")
}

fn recipe_outcome(rep: &RunReport) -> Outcome {
    Outcome {
        passed: rep.passed(),
        detail: checks_line(rep),
    }
}

fn pinned(cfg: &ExperimentConfig) -> Result<(), String> {
    let ok = cfg.mc.paths == MC_PATHS
        && cfg.mc.dt == MC_DT
        && cfg.problem.horizon - cfg.problem.t0 == 1.0
        && cfg.grid.dy == 0.05
        && cfg.grid.lower == vec![-4.0]
        && cfg.grid.upper == vec![4.0]
        && cfg.controls.u_levels == vec![0.0, 0.5, -0.5, 1.0, -1.0]
        && cfg.kernel_u == vec![2.0, 1.0];
    if ok {
        Ok(())
    } else {
        Err("default config no longer matches the acceptance parameters".into())
    }
}

fn column(table: &Table, name: &str) -> Result<Vec<f64>, String> {
    table
        .column(name)
        .ok_or_else(|| format!("missing column {name}"))
}

fn read_table(path: PathBuf) -> Result<Table, String> {
    Table::read(&path).map_err(|e| e.to_string())
}

/// Thresholds for `ν = x⁻² 1{x>0}` from `ν([τ, τ_prev)) = 1/τ − 1/τ_prev`.
fn kernel_oracle(u: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut outer = 1.0;
    u.iter()
        .map(|ui| {
            let inner = 1.0 / (1.0 / outer + 1.0 / (ui * ui));
            let region = (outer, inner, 1.0 / inner - 1.0 / outer);
            outer = inner;
            region
        })
        .collect()
}

fn criterion_1(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, String> {
    let rep = run(cfg, "kernel-masses", out)?;
    let t = read_table(out.join("kernel-masses/kernel_masses.csv"))?;
    let (outer, inner, mass) = (
        column(&t, "outer")?,
        column(&t, "inner")?,
        column(&t, "mass")?,
    );
    let oracle = kernel_oracle(&cfg.kernel_u);
    let expected = [0.25, 1.0];
    let mut worst = 0.0f64;
    for (k, (o, i, m)) in oracle.iter().enumerate() {
        worst = worst
            .max((outer[k] - o).abs())
            .max((inner[k] - i).abs())
            .max((mass[k] - m).abs())
            .max((mass[k] - expected[k]).abs());
    }
    let disjoint = (0..inner.len()).all(|k| k + 1 == inner.len() || inner[k] >= outer[k + 1]);
    Ok(Outcome {
        passed: rep.passed() && worst <= KERNEL_TOL && disjoint,
        detail: format!(
            "masses ({:.12}, {:.12}), max deviation from oracle {worst:.2e}, disjoint = {disjoint}",
            mass[0], mass[1]
        ),
    })
}

fn criterion_6(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, String> {
    let rep = run(cfg, "closed-form-hjb", out)?;
    let field = ValueField::read_csv(&out.join("closed-form-hjb/value_field.csv"))
        .map_err(|e| e.to_string())?;
    let space = field.space();
    let t_end = cfg.problem.horizon;
    let (mut err, mut terminal, mut dmp) = (0.0f64, 0.0f64, 0.0f64);
    let g: Vec<f64> = (0..space.len())
        .map(|n| space.coords(n)[0].powi(2))
        .collect();
    let gmax = g.iter().cloned().fold(f64::MIN, f64::max);
    let gmin = g.iter().cloned().fold(f64::MAX, f64::min);
    let last = field.n_slices() - 1;
    for k in 0..=last {
        let t = field.time().time(k);
        for n in 0..space.len() {
            let y = space.coords(n)[0];
            let v = field.value(k, n);
            if y.abs() <= 2.0 + 1e-12 {
                err = err.max((v - (y * y + t_end - t)).abs());
            }
            dmp = dmp.max(gmin - v).max(v - gmax);
        }
    }
    for (n, gn) in g.iter().enumerate() {
        terminal = terminal.max((field.value(last, n) - gn).abs());
    }
    let dmp_ok = dmp <= 1e-12 * gmax.max(1.0);
    Ok(Outcome {
        passed: rep.passed() && err <= CLOSED_FORM_TOL && terminal == 0.0 && dmp_ok,
        detail: format!(
            "oracle sup error on |y| <= 2: {err:.3e}; terminal error {terminal:e}; \
             max principle excess {:.1e} on [{}, {}]; {}",
            dmp.max(0.0),
            space.lower()[0],
            space.upper()[0],
            checks_line(&rep)
        ),
    })
}

fn criterion_7(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, String> {
    let rep = run(cfg, "mc-vs-pdde", out)?;
    let t = read_table(out.join("mc-vs-pdde/crossval.csv"))?;
    let solver = column(&t, "solver")?[0];
    // V(0, 1) = 1 + T for b = 0, σ = 1, g = y²
    let exact = 1.0 + cfg.problem.horizon;
    let close = (solver - exact).abs() <= CLOSED_FORM_TOL;
    Ok(Outcome {
        passed: rep.passed() && close,
        detail: format!(
            "solver V(0, 1) = {solver:.6} vs oracle {exact}; {}",
            checks_line(&rep)
        ),
    })
}

fn criterion_9(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, String> {
    let grid = TimeGrid::with_step(0.0, cfg.counterexample.horizon, cfg.counterexample.dt)
        .map_err(|e| e.to_string())?;
    let pilot = counterexample_study(
        &grid,
        PILOT_SEED,
        PILOT_PAIRS,
        1_000_000,
        Execution::default(),
    )
    .map_err(|e| e.to_string())?;
    let p = pilot.x_prime_frequency();
    let rep = run(cfg, "counterexample", out)?;
    let t = read_table(out.join("counterexample/counterexample.csv"))?;
    let (n, freq) = (
        column(&t, "non_censored")?[0],
        column(&t, "x_prime_frequency")?[0],
    );
    let sd = (p * (1.0 - p) * (1.0 / n + 1.0 / PILOT_PAIRS as f64)).sqrt();
    let consistent = (freq - p).abs() <= 5.0 * sd;
    Ok(Outcome {
        passed: rep.passed() && n >= MC_PATHS as f64 && p > 0.0 && consistent,
        detail: format!(
            "pilot oracle X' frequency {p:.4} over {PILOT_PAIRS} pairs; study {freq:.4} over {n} pairs; {}",
            checks_line(&rep)
        ),
    })
}

fn criterion_11(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, String> {
    let rep = run(cfg, "determinism", out)?;
    let mut same = rep.passed();
    let mut compared = Vec::new();
    for recipe in ["kernel-masses", "closed-form-hjb", "counterexample"] {
        let a = out.join("repeat-a");
        let b = out.join("repeat-b");
        let ra = run(cfg, recipe, &a)?;
        let rb = run(cfg, recipe, &b)?;
        same &= ra.verdicts() == rb.verdicts();
        for name in &ra.artifacts {
            let (pa, pb) = (a.join(recipe).join(name), b.join(recipe).join(name));
            let equal = std::fs::read(&pa).map_err(|e| e.to_string())?
                == std::fs::read(&pb).map_err(|e| e.to_string())?;
            same &= equal;
            compared.push(name.clone());
        }
    }
    Ok(Outcome {
        passed: same,
        detail: format!(
            "{} repeated via the determinism recipe; also compared {}; {}",
            cfg.determinism_recipe,
            compared.join(", "),
            checks_line(&rep)
        ),
    })
}

fn main() {
    let cfg = config();
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path();
    let mut failed = 0;
    let mut emit = |n: usize, title: &str, outcome: Result<Outcome, String>| {
        let outcome = outcome.unwrap_or_else(|e| Outcome {
            passed: false,
            detail: format!("error: {e}"),
        });
        if !outcome.passed {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {title}: {} | {}",
            if outcome.passed { "PASS" } else { "FAIL" },
            outcome.detail
        );
    };

    if let Err(e) = pinned(&cfg) {
        println!("acceptance parameters: FAIL | {e}");
        std::process::exit(1);
    }

    emit(1, "kernel masses", criterion_1(&cfg, out));

    let stats = run(&cfg, "martingale-stats", out);
    let normality = stats.as_ref().map(|rep| {
        let picked: Vec<_> = rep
            .checks
            .iter()
            .filter(|c| !c.name.starts_with("d = 2"))
            .collect();
        Outcome {
            passed: rep.error.is_none() && picked.len() == 6 && picked.iter().all(|c| c.passed),
            detail: picked
                .iter()
                .map(|c| format!("{} = {:.3e} ({})", c.name, c.value, c.tolerance))
                .collect::<Vec<_>>()
                .join("; "),
        }
    });
    emit(
        2,
        "normality and martingale property",
        normality.map_err(Clone::clone),
    );

    emit(
        3,
        "structure residual rates",
        run(&cfg, "structure-residual", out).map(|r| recipe_outcome(&r)),
    );

    let orth = stats.as_ref().map(|rep| {
        let c = rep.checks.iter().find(|c| c.name.starts_with("d = 2"));
        Outcome {
            passed: c.is_some_and(|c| c.passed),
            detail: c.map_or("orthogonality check missing".into(), |c| {
                format!("{} = {:.3e} ({})", c.name, c.value, c.tolerance)
            }),
        }
    });
    emit(4, "orthogonality", orth.map_err(Clone::clone));

    emit(
        5,
        "Ito formula residual",
        run(&cfg, "ito-check", out).map(|r| recipe_outcome(&r)),
    );
    emit(6, "closed-form HJB", criterion_6(&cfg, out));
    emit(7, "MC vs PDDE cross-validation", criterion_7(&cfg, out));
    emit(
        8,
        "dynamic programming gap",
        run(&cfg, "dpp-check", out).map(|r| recipe_outcome(&r)),
    );
    emit(9, "counterexample", criterion_9(&cfg, out));
    emit(
        10,
        "refinement and MC agreement",
        run(&cfg, "refine-check", out).map(|r| recipe_outcome(&r)),
    );
    emit(11, "determinism", criterion_11(&cfg, out));

    println!("acceptance: {} of 11 criteria failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
