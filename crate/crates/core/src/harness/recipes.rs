//! One recipe per acceptance check family. Each writes its CSV artifacts
//! and records checks into the run report.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::control::{
    dpp_gap, mc_value_constant_controls, AffineCoefficients, ConstantControlTable, ConstantPolicy,
    ControlGrid, ControlPoint, ControlledModel, CostSpec,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hjb::{
    build_grids, continuity_ratio, policy_excess, refine_check, residual, solve, sup_error,
    Discretization, ValueField,
};
use crate::levy::KERNEL_MASS_TOL;
use crate::martingale::counterexample::{counterexample_paths, counterexample_study};
use crate::martingale::{
    cross_variation, structure_residual, ConstantRule, ControlRule, NegativeSideRule, TimeGrid,
};
use crate::operators::{ito_residual, TestFunction, ValueSource};
use crate::rng::{derive_root, PathSeed};
use crate::stats::Estimate;

use super::config::{cost_by_name, ExperimentConfig, RECIPES};
use super::csv::{emit_csv, Table};
use super::report::RunReport;

/// Absolute slack added to three standard errors in Monte Carlo comparisons.
pub const MC_ABS_TOL: f64 = 2e-2;
/// Largest sup error of the solver against a closed form on the window.
pub const CLOSED_FORM_TOL: f64 = 2e-2;
/// Halving-ratio band for first-order residuals.
pub const FIRST_ORDER_BAND: (f64, f64) = (1.5, 2.5);
/// Halving-ratio band for half-order RMS residuals, around `√2`.
pub const HALF_ORDER_BAND: (f64, f64) = (1.2, 1.7);
/// Itô residual of functions affine in `(t, y)`: rounding only.
pub const AFFINE_ITO_TOL: f64 = 1e-9;
/// Relative slack of the discrete maximum principle, for rounding.
pub const DMP_REL_TOL: f64 = 1e-12;

// Seed salts; each sub-experiment draws from its own derived root.
const SALT_MARTINGALE: u64 = 100;
const SALT_ORTHOGONAL: u64 = 150;
const SALT_RESIDUAL: u64 = 200;
const SALT_RMS: u64 = 210;
const SALT_ITO_AFFINE: u64 = 250;
const SALT_ITO_SQUARE: u64 = 260;
const SALT_CROSSVAL: u64 = 300;
const SALT_DPP: u64 = 400;
const SALT_COUNTEREXAMPLE: u64 = 500;
const SALT_REFINE_MC: u64 = 600;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    out: &'a Path,
    exec: Execution,
}

impl Ctx<'_> {
    fn seed(&self, salt: u64) -> u64 {
        derive_root(self.cfg.run.seed, salt)
    }

    fn emit(&self, rep: &mut RunReport, name: &str, table: &Table) -> Result<()> {
        emit_csv(table, &self.out.join(name))?;
        rep.artifact(name);
        Ok(())
    }
}

/// Runs `recipe` into `out`, writing `report.txt` there. Recipe failures are
/// recorded in the report; only an unknown recipe or an unusable output
/// directory is an error.
pub fn run_experiment(cfg: &ExperimentConfig, recipe: &str, out: &Path) -> Result<RunReport> {
    if !RECIPES.contains(&recipe) {
        return Err(Error::UnknownRecipe {
            name: recipe.to_string(),
            valid: RECIPES.join(", "),
        });
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rep = RunReport::new(recipe, cfg);
    let ctx = Ctx {
        cfg,
        out,
        exec: cfg.execution(),
    };
    let result = match recipe {
        "kernel-masses" => kernel_masses(&ctx, &mut rep),
        "martingale-stats" => martingale_stats(&ctx, &mut rep),
        "structure-residual" => structure_residual_rates(&ctx, &mut rep),
        "ito-check" => ito_check(&ctx, &mut rep),
        "closed-form-hjb" => closed_form_hjb(&ctx, &mut rep),
        "mc-vs-pdde" => mc_vs_pdde(&ctx, &mut rep),
        "dpp-check" => dpp_check(&ctx, &mut rep),
        "counterexample" => counterexample(&ctx, &mut rep),
        "refine-check" => refine(&ctx, &mut rep),
        "determinism" => determinism(&ctx, &mut rep),
        _ => unreachable!("recipe list checked above"),
    };
    if let Err(e) = result {
        rep.error = Some(e.to_string());
    }
    rep.write(&out.join("report.txt"))?;
    Ok(rep)
}

fn kernel_masses(ctx: &Ctx, rep: &mut RunReport) -> Result<()> {
    let clock = Instant::now();
    let measure = ctx.cfg.measure()?;
    let u = &ctx.cfg.kernel_u;
    let regions = measure.jump_regions(u)?;
    let elapsed = clock.elapsed();
    let mut table = Table::new(["coordinate", "u", "outer", "inner", "mass", "expected"]);
    let mut worst = 0.0f64;
    for (i, (&ui, region)) in u.iter().zip(&regions.regions).enumerate() {
        let expected = 1.0 / (ui * ui);
        worst = worst.max((regions.masses[i] - expected).abs());
        table.push_row(vec![
            i as f64,
            ui,
            region.outer,
            region.inner,
            regions.masses[i],
            expected,
        ])?;
    }
    let mut overlap = 0.0;
    for i in 0..regions.regions.len() {
        for j in i + 1..regions.regions.len() {
            overlap += regions.regions[i].overlap_length(&regions.regions[j]);
        }
    }
    rep.check(
        "max |mass - 1/u^2|",
        worst,
        format!("<= {KERNEL_MASS_TOL:e}"),
        worst <= KERNEL_MASS_TOL,
        elapsed,
    );
    rep.check(
        "total pairwise overlap length",
        overlap,
        "== 0",
        regions.pairwise_disjoint(),
        elapsed,
    );
    rep.note("measure", measure.name());
    ctx.emit(rep, "kernel_masses.csv", &table)
}

fn level_label(u: f64) -> String {
    format!("u = {u:?}")
}

fn martingale_stats(ctx: &Ctx, rep: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let sim = cfg.simulator()?;
    let horizon = cfg.martingale.horizon;
    let grid = TimeGrid::with_step(0.0, horizon, cfg.mc.dt)?;
    let n = cfg.mc.paths;

    let mut rules: Vec<(String, f64, Box<dyn ControlRule>)> = cfg
        .martingale
        .levels
        .iter()
        .map(|&u| {
            (
                level_label(u),
                u,
                Box::new(ConstantRule::new(vec![u])) as Box<dyn ControlRule>,
            )
        })
        .collect();
    let feedback = NegativeSideRule {
        level: cfg.martingale.feedback_level,
        dim: 1,
    };
    rules.push((
        format!("feedback u = {:?} below 0", feedback.level),
        feedback.level,
        Box::new(feedback),
    ));

    let mut table = Table::new([
        "rule",
        "level",
        "feedback",
        "mean_x",
        "stderr_x",
        "mean_sq_gap",
        "stderr_sq_gap",
    ]);
    for (idx, (label, level, rule)) in rules.iter().enumerate() {
        let clock = Instant::now();
        let xs = sim.map_paths(
            rule.as_ref(),
            &grid,
            ctx.seed(SALT_MARTINGALE + idx as u64),
            n,
            ctx.exec,
            |p| p.terminal()[0],
        )?;
        let first = Estimate::from_samples(&xs);
        let gaps: Vec<f64> = xs.iter().map(|x| x * x - horizon).collect();
        let second = Estimate::from_samples(&gaps);
        let elapsed = clock.elapsed();
        rep.check(
            &format!("{label}: |mean X_T|"),
            first.mean.abs(),
            format!("<= 3 stderr = {:e}", 3.0 * first.stderr),
            first.within(0.0, 3.0),
            elapsed,
        );
        rep.check(
            &format!("{label}: |mean X_T^2 - T|"),
            second.mean.abs(),
            format!("<= 3 stderr = {:e}", 3.0 * second.stderr),
            second.within(0.0, 3.0),
            elapsed,
        );
        let is_feedback = (idx == rules.len() - 1) as u8 as f64;
        table.push_row(vec![
            idx as f64,
            *level,
            is_feedback,
            first.mean,
            first.stderr,
            second.mean,
            second.stderr,
        ])?;
    }
    ctx.emit(rep, "martingale_stats.csv", &table)?;

    let (_, _, last) = rules.last().expect("feedback rule present");
    let sample = sim.simulate_path(
        last.as_ref(),
        &grid,
        PathSeed::new(ctx.seed(SALT_MARTINGALE), 0),
    )?;
    ctx.emit(rep, "feedback_path.csv", &sample.to_table())?;

    let clock = Instant::now();
    let u = cfg.martingale.orthogonal_u;
    let rule = ConstantRule::new(vec![u, u]);
    let cross = sim.map_paths(&rule, &grid, ctx.seed(SALT_ORTHOGONAL), n, ctx.exec, |p| {
        cross_variation(p, 0, 1).map(|c| c[c.len() - 1])
    })?;
    let cross: Vec<f64> = cross.into_iter().collect::<Result<_>>()?;
    let est = Estimate::from_samples(&cross);
    rep.check(
        &format!("d = 2, u = ({u:?}, {u:?}): |mean [X1, X2]_T|"),
        est.mean.abs(),
        format!("<= 3 stderr = {:e}", 3.0 * est.stderr),
        est.within(0.0, 3.0),
        clock.elapsed(),
    );
    let mut orth = Table::new(["u", "mean_cross", "stderr_cross", "paths"]);
    orth.push_row(vec![u, est.mean, est.stderr, est.n as f64])?;
    ctx.emit(rep, "orthogonality.csv", &orth)
}

fn structure_residual_rates(ctx: &Ctx, rep: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let sim = cfg.simulator()?;
    let horizon = cfg.martingale.horizon;
    let rc = &cfg.residual;

    let clock = Instant::now();
    let fine = TimeGrid::with_step(0.0, horizon, rc.fine_dt)?;
    let rule = ConstantRule::new(vec![rc.u]);
    let pairs = sim.map_paths(
        &rule,
        &fine,
        ctx.seed(SALT_RESIDUAL),
        rc.paths,
        ctx.exec,
        |p| {
            let coarse = p.coarsen(2)?;
            Ok((structure_residual(p)[0], structure_residual(&coarse)[0]))
        },
    )?;
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    let fine_sum: f64 = pairs.iter().map(|p| p.0).sum();
    let coarse_sum: f64 = pairs.iter().map(|p| p.1).sum();
    let ratio = coarse_sum / fine_sum;
    rep.check(
        &format!("u = {:?}: mean residual ratio (2 dt vs dt)", rc.u),
        ratio,
        format!("in [{}, {}]", FIRST_ORDER_BAND.0, FIRST_ORDER_BAND.1),
        (FIRST_ORDER_BAND.0..=FIRST_ORDER_BAND.1).contains(&ratio),
        clock.elapsed(),
    );
    rep.note("jump fine dt", format!("{:e}", fine.dt()));
    rep.note(
        "jump mean residual at fine dt",
        format!("{:e}", fine_sum / pairs.len() as f64),
    );
    let mut table = Table::new(["path", "fine", "coarse"]);
    for (k, (f, c)) in pairs.iter().enumerate() {
        table.push_row(vec![k as f64, *f, *c])?;
    }
    ctx.emit(rep, "residual_jump.csv", &table)?;

    let clock = Instant::now();
    let fine = TimeGrid::with_step(0.0, horizon, rc.rms_dt)?;
    let rule = ConstantRule::new(vec![0.0]);
    let pairs = sim.map_paths(
        &rule,
        &fine,
        ctx.seed(SALT_RMS),
        rc.rms_paths,
        ctx.exec,
        |p| {
            let coarse = p.coarsen(2)?;
            Ok((structure_residual(p)[0], structure_residual(&coarse)[0]))
        },
    )?;
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    let rms = |sel: fn(&(f64, f64)) -> f64| {
        (pairs.iter().map(|p| sel(p).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
    };
    let (fine_rms, coarse_rms) = (rms(|p| p.0), rms(|p| p.1));
    let ratio = coarse_rms / fine_rms;
    rep.check(
        "u = 0: RMS residual ratio (2 dt vs dt)",
        ratio,
        format!("in [{}, {}]", HALF_ORDER_BAND.0, HALF_ORDER_BAND.1),
        (HALF_ORDER_BAND.0..=HALF_ORDER_BAND.1).contains(&ratio),
        clock.elapsed(),
    );
    rep.note("gaussian fine dt", format!("{:e}", fine.dt()));
    rep.note("gaussian RMS residual at fine dt", format!("{fine_rms:e}"));
    let mut table = Table::new(["path", "fine", "coarse"]);
    for (k, (f, c)) in pairs.iter().enumerate() {
        table.push_row(vec![k as f64, *f, *c])?;
    }
    ctx.emit(rep, "residual_gaussian.csv", &table)
}

/// `Y = X` in one dimension.
fn identity_model(cfg: &ExperimentConfig) -> Result<(ControlledModel, Arc<AffineCoefficients>)> {
    let coeffs = Arc::new(AffineCoefficients::new(
        1,
        1,
        vec![0.0],
        vec![0.0],
        vec![1.0],
        false,
    )?);
    Ok((
        ControlledModel::new(cfg.simulator()?, coeffs.clone()),
        coeffs,
    ))
}

fn ito_check(ctx: &Ctx, rep: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let (model, coeffs) = identity_model(cfg)?;
    let horizon = cfg.martingale.horizon;
    let u = cfg.ito.u;
    let n = cfg.ito.paths;

    let clock = Instant::now();
    let coarse_grid = TimeGrid::with_step(0.0, horizon, cfg.mc.dt)?;
    let affine = TestFunction::linear(0.3, 0.7, vec![1.3]);
    let mut worst = 0.0f64;
    let mut affine_rows = Vec::new();
    for (j, level) in [0.0, u].into_iter().enumerate() {
        let policy = ConstantPolicy(ControlPoint::new(1.0, vec![level]));
        let root = ctx.seed(SALT_ITO_AFFINE + j as u64);
        let res = ctx.exec.map_indexed(n, |k| {
            model
                .simulate_controlled(&[0.0], &policy, &coarse_grid, PathSeed::new(root, k as u64))
                .map(|p| ito_residual(&p, &affine, coeffs.as_ref()))
        });
        let res: Vec<f64> = res.into_iter().collect::<Result<_>>()?;
        worst = res.iter().cloned().fold(worst, f64::max);
        affine_rows.push(res);
    }
    rep.check(
        "affine phi: max |Ito residual|",
        worst,
        format!("<= {AFFINE_ITO_TOL:e}"),
        worst <= AFFINE_ITO_TOL,
        clock.elapsed(),
    );

    let clock = Instant::now();
    let fine = TimeGrid::with_step(0.0, horizon, cfg.ito.fine_dt)?;
    let square = TestFunction::quadratic(1);
    let policy = ConstantPolicy(ControlPoint::new(1.0, vec![u]));
    let root = ctx.seed(SALT_ITO_SQUARE);
    let pairs = ctx.exec.map_indexed(n, |k| {
        let p = model.simulate_controlled(&[0.0], &policy, &fine, PathSeed::new(root, k as u64))?;
        let c = p.coarsen(2)?;
        Ok((
            ito_residual(&p, &square, coeffs.as_ref()),
            ito_residual(&c, &square, coeffs.as_ref()),
        ))
    });
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    let fine_sum: f64 = pairs.iter().map(|p| p.0).sum();
    let coarse_sum: f64 = pairs.iter().map(|p| p.1).sum();
    let ratio = coarse_sum / fine_sum;
    rep.check(
        &format!("phi = y^2, u = {u:?}: mean residual ratio (2 dt vs dt)"),
        ratio,
        format!("in [{}, {}]", FIRST_ORDER_BAND.0, FIRST_ORDER_BAND.1),
        (FIRST_ORDER_BAND.0..=FIRST_ORDER_BAND.1).contains(&ratio),
        clock.elapsed(),
    );
    rep.note("square fine dt", format!("{:e}", fine.dt()));

    let mut table = Table::new([
        "path",
        "affine_u0",
        "affine_u",
        "square_fine",
        "square_coarse",
    ]);
    for k in 0..n {
        table.push_row(vec![
            k as f64,
            affine_rows[0][k],
            affine_rows[1][k],
            pairs[k].0,
            pairs[k].1,
        ])?;
    }
    ctx.emit(rep, "ito_residual.csv", &table)
}

/// Discretization and solved field of the configured problem with `cost`.
fn solve_configured(
    ctx: &Ctx,
    cost: &CostSpec,
    label: &str,
) -> Result<(Discretization, ValueField)> {
    let cfg = ctx.cfg;
    let coeffs = cfg.coefficients()?;
    let controls = cfg.control_grid()?;
    let domain = cfg.hjb_domain()?;
    let disc = build_grids(&domain, coeffs.as_ref(), &controls, ctx.exec)?;
    let field = solve(&disc, cost, label, ctx.exec)?;
    Ok((disc, field))
}

fn note_discretization(rep: &mut RunReport, disc: &Discretization, margin: f64) {
    rep.note("lattice lower", format!("{:?}", disc.space.lower()));
    rep.note("lattice upper", format!("{:?}", disc.space.upper()));
    rep.note("margin", margin);
    rep.note(
        "window",
        format!("{:?} .. {:?}", disc.window.lower, disc.window.upper),
    );
    rep.note("time steps", disc.time.n_steps());
    rep.note("courant number", disc.courant());
    rep.note("clamped stencils", disc.stencils.clamped_count());
}

fn closed_form_hjb(ctx: &Ctx, rep: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let exact = cfg.closed_form().ok_or_else(|| {
        Error::InvalidArgument("closed-form-hjb needs zero drift and cost = quadratic".into())
    })?;
    let cost = cfg.cost()?;
    let clock = Instant::now();
    let (disc, field) = solve_configured(ctx, &cost, &cfg.problem.name)?;
    let solve_time = clock.elapsed();
    note_discretization(rep, &disc, cfg.margin());

    let err = sup_error(&field, &disc.window, &exact);
    rep.check(
        "max |V - exact| on window",
        err,
        format!("<= {CLOSED_FORM_TOL:e}"),
        err <= CLOSED_FORM_TOL,
        solve_time,
    );

    let space = field.space();
    let last = field.n_slices() - 1;
    let g: Vec<f64> = (0..space.len())
        .map(|n| cost.eval(&space.coords(n)))
        .collect();
    let terminal = field
        .slice(last)
        .iter()
        .zip(&g)
        .map(|(v, g)| (v - g).abs())
        .fold(0.0, f64::max);
    rep.check(
        "terminal slice |V - g|",
        terminal,
        "== 0",
        terminal == 0.0,
        solve_time,
    );

    let gmin = g.iter().cloned().fold(f64::INFINITY, f64::min);
    let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (vmin, vmax) = field.min_max();
    let slack = DMP_REL_TOL * gmin.abs().max(gmax.abs()).max(1.0);
    let excess = (gmin - vmin).max(vmax - gmax).max(0.0);
    rep.check(
        "maximum principle excess on full lattice",
        excess,
        format!("<= {slack:e}"),
        excess <= slack,
        solve_time,
    );

    let clock = Instant::now();
    let coeffs = cfg.coefficients()?;
    let res = residual(&field, coeffs.as_ref(), Some(&disc.window), ctx.exec)?;
    rep.note("scheme residual on window", format!("{res:e}"));
    rep.note(
        "continuity ratio",
        continuity_ratio(&field, &cost, 4.0 * disc.space.min_spacing()),
    );
    rep.note(
        "diagnostics time s",
        format!("{:.3}", clock.elapsed().as_secs_f64()),
    );

    field.write_csv(&ctx.out.join("value_field.csv"))?;
    rep.artifact("value_field.csv");
    let m = space.dim();
    let mut cols: Vec<String> = (0..m).map(|r| format!("y{r}")).collect();
    cols.extend(["V".into(), "exact".into(), "abs_error".into()]);
    let mut profile = Table::new(cols);
    let t0 = field.time().t0();
    for n in disc.window.nodes(space) {
        let y = space.coords(n);
        let v = field.value(0, n);
        let e = exact(t0, &y);
        let mut row = y;
        row.extend([v, e, (v - e).abs()]);
        profile.push_row(row)?;
    }
    ctx.emit(rep, "error_profile.csv", &profile)
}

fn mc_table(
    ctx: &Ctx,
    model: &ControlledModel,
    cost: &CostSpec,
    y: &[f64],
    controls: &ControlGrid,
    salt: u64,
) -> Result<ConstantControlTable> {
    let cfg = ctx.cfg;
    let grid = TimeGrid::with_step(cfg.mc.t, cfg.problem.horizon, cfg.mc.dt)?;
    mc_value_constant_controls(
        model,
        cost,
        y,
        controls,
        &grid,
        cfg.mc.paths,
        ctx.seed(salt),
        ctx.exec,
    )
}

fn push_constants(
    table: &mut Table,
    problem: f64,
    probe: f64,
    mc: &ConstantControlTable,
) -> Result<()> {
    for (c, (cp, est)) in mc.entries.iter().enumerate() {
        let mut row = vec![problem, probe, c as f64, cp.pi];
        row.extend(&cp.u);
        row.extend([est.estimate.mean, est.estimate.stderr, est.blowups as f64]);
        table.push_row(row)?;
    }
    Ok(())
}

fn constants_table(d: usize) -> Table {
    let mut cols: Vec<String> = ["problem", "probe", "control", "pi"]
        .map(String::from)
        .to_vec();
    cols.extend((0..d).map(|i| format!("u{i}")));
    cols.extend(["mean", "stderr", "blowups"].map(String::from));
    Table::new(cols)
}

fn in_window(disc: &Discretization, y: &[f64]) -> Result<()> {
    if disc.window.contains(y) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "probe {y:?} lies outside the window"
        )))
    }
}

fn mc_vs_pdde(ctx: &Ctx, rep: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let model = cfg.model()?;
    let controls = cfg.control_grid()?;
    let m = cfg.problem.m;
    let t = cfg.mc.t;
    let mut summary = Table::new([
        "problem",
        "probe",
        "solver",
        "mc_best",
        "stderr",
        "best_control",
    ]);
    let mut constants = constants_table(cfg.problem.d);

    let clock = Instant::now();
    let cost = cfg.cost()?;
    let (disc, field) = solve_configured(ctx, &cost, &cfg.problem.name)?;
    note_discretization(rep, &disc, cfg.margin());
    let y0 = &cfg.mc.y0;
    in_window(&disc, y0)?;
    let v = field.interp(t, y0).value;
    let mc = mc_table(ctx, &model, &cost, y0, &controls, SALT_CROSSVAL)?;
    let best = mc.best_estimate().estimate;
    let tol = 3.0 * best.stderr + MC_ABS_TOL;
    rep.check(
        &format!(
            "{}: |MC best - V| at t = {t:?}, y = {y0:?}",
            cfg.problem.cost
        ),
        (best.mean - v).abs(),
        format!("<= 3 stderr + {MC_ABS_TOL:e} = {tol:e}"),
        (best.mean - v).abs() <= tol,
        clock.elapsed(),
    );
    if let Some(exact) = cfg.closed_form() {
        rep.note("exact value at probe", exact(t, y0));
    }
    summary.push_row(vec![0.0, y0[0], v, best.mean, best.stderr, mc.best as f64])?;
    push_constants(&mut constants, 0.0, y0[0], &mc)?;

    let cross = cost_by_name(&cfg.crossval.cost, m)?;
    let clock = Instant::now();
    let (disc2, field2) = solve_configured(ctx, &cross, &cfg.crossval.cost)?;
    let solve_time = clock.elapsed();
    for (j, &p) in cfg.crossval.probes.iter().enumerate() {
        let clock = Instant::now();
        let y = vec![p; m];
        in_window(&disc2, &y)?;
        let v = field2.interp(t, &y).value;
        let mc = mc_table(
            ctx,
            &model,
            &cross,
            &y,
            &controls,
            SALT_CROSSVAL + 10 + j as u64,
        )?;
        let best = mc.best_estimate().estimate;
        let tol = 3.0 * best.stderr + MC_ABS_TOL;
        rep.check(
            &format!("{}: V - MC best at t = {t:?}, y = {y:?}", cfg.crossval.cost),
            v - best.mean,
            format!("<= 3 stderr + {MC_ABS_TOL:e} = {tol:e}"),
            v <= best.mean + tol,
            clock.elapsed() + solve_time,
        );
        summary.push_row(vec![1.0, p, v, best.mean, best.stderr, mc.best as f64])?;
        push_constants(&mut constants, 1.0, p, &mc)?;
    }
    ctx.emit(rep, "crossval.csv", &summary)?;
    ctx.emit(rep, "mc_constants.csv", &constants)
}

fn dpp_check(ctx: &Ctx, rep: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let cost = cfg.cost()?;
    let clock = Instant::now();
    let (disc, field) = solve_configured(ctx, &cost, &cfg.problem.name)?;
    note_discretization(rep, &disc, cfg.margin());
    let model = cfg.model()?;
    let coeffs = cfg.coefficients()?;
    let controls = cfg.control_grid()?;
    let (t, y0, h) = (cfg.mc.t, &cfg.mc.y0, cfg.dpp.h);
    in_window(&disc, y0)?;
    let steps = ((h / cfg.dpp.inner_dt).round() as usize).max(1);
    let gap = dpp_gap(
        &model,
        &field as &dyn ValueSource,
        t,
        y0,
        h,
        steps,
        &controls,
        cfg.mc.paths,
        ctx.seed(SALT_DPP),
        ctx.exec,
    )?;
    let (c_h, _) = policy_excess(&field, coeffs.as_ref(), t, h, Some(&disc.window), ctx.exec)?;
    let lo = -(MC_ABS_TOL + 3.0 * gap.stderr);
    let hi = c_h * h + MC_ABS_TOL + 3.0 * gap.stderr;
    rep.check(
        &format!("DPP gap at t = {t:?}, y = {y0:?}, h = {h:?}"),
        gap.gap,
        format!("in [{lo:e}, {hi:e}] (C_h = {c_h:e})"),
        gap.gap >= lo && gap.gap <= hi,
        clock.elapsed(),
    );
    rep.note("C_h", format!("{c_h:e}"));
    rep.note("gap stderr", format!("{:e}", gap.stderr));
    rep.note("V at start", gap.value_at_start);
    rep.note("best control", gap.best);
    rep.note("clamped fraction", gap.clamped_fraction);
    let d = cfg.problem.d;
    let mut cols: Vec<String> = ["control", "pi"].map(String::from).to_vec();
    cols.extend((0..d).map(|i| format!("u{i}")));
    cols.extend(["mean", "stderr"].map(String::from));
    let mut table = Table::new(cols);
    for (c, (cp, est)) in controls.points().iter().zip(&gap.per_control).enumerate() {
        let mut row = vec![c as f64, cp.pi];
        row.extend(&cp.u);
        row.extend([est.mean, est.stderr]);
        table.push_row(row)?;
    }
    ctx.emit(rep, "dpp.csv", &table)
}

fn counterexample(ctx: &Ctx, rep: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let cc = &cfg.counterexample;
    let grid = TimeGrid::with_step(0.0, cc.horizon, cc.dt)?;
    let target = cc.pairs.unwrap_or(cfg.mc.paths);
    let root = ctx.seed(SALT_COUNTEREXAMPLE);
    let clock = Instant::now();
    let s = counterexample_study(&grid, root, target, cc.max_pairs, ctx.exec)?;
    let elapsed = clock.elapsed();
    rep.check(
        "non-censored pairs",
        s.non_censored as f64,
        format!(">= {target}"),
        s.non_censored >= target,
        elapsed,
    );
    rep.check(
        "X jump-at-first-passage frequency",
        s.x_frequency(),
        "== 0",
        s.x_by_jump == 0,
        elapsed,
    );
    rep.check(
        "X' 99% lower confidence bound",
        s.x_prime_lower_99,
        "> 0",
        s.x_prime_lower_99 > 0.0,
        elapsed,
    );
    rep.note("X' frequency", s.x_prime_frequency());
    rep.note("pairs simulated", s.pairs_simulated);
    let mut table = Table::new([
        "pairs_simulated",
        "non_censored",
        "x_by_jump",
        "x_prime_by_jump",
        "x_frequency",
        "x_prime_frequency",
        "x_prime_lower_99",
    ]);
    table.push_row(vec![
        s.pairs_simulated as f64,
        s.non_censored as f64,
        s.x_by_jump as f64,
        s.x_prime_by_jump as f64,
        s.x_frequency(),
        s.x_prime_frequency(),
        s.x_prime_lower_99,
    ])?;
    ctx.emit(rep, "counterexample.csv", &table)?;

    let pair = counterexample_paths(&grid, PathSeed::new(root, 0))?;
    let mut path = Table::new(["t", "x", "x_prime", "u", "jumps"]);
    for k in 0..=grid.n_steps() {
        let (u, jumps) = if k < grid.n_steps() {
            (pair.x.control(k)[0], pair.x.jump_count(k, 0) as f64)
        } else {
            (f64::NAN, f64::NAN)
        };
        path.push_row(vec![
            grid.time(k),
            pair.x.value(k)[0],
            pair.x_prime.value(k)[0],
            u,
            jumps,
        ])?;
    }
    ctx.emit(rep, "counterexample_pair.csv", &path)
}

fn refine(ctx: &Ctx, rep: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let exact = cfg.closed_form().ok_or_else(|| {
        Error::InvalidArgument("refine-check needs zero drift and cost = quadratic".into())
    })?;
    let coeffs = cfg.coefficients()?;
    let controls = cfg.control_grid()?;
    let cost = cfg.cost()?;
    let domain = cfg.hjb_domain()?;
    let clock = Instant::now();
    let (r, coarse, fine) = refine_check(
        &domain,
        cfg.refine_factor,
        coeffs.as_ref(),
        &cost,
        &controls,
        Some(&exact),
        ctx.exec,
    )?;
    let (ec, ef) = (
        r.coarse_error.unwrap_or(f64::NAN),
        r.fine_error.unwrap_or(f64::NAN),
    );
    rep.check(
        &format!("error at dy / {}", cfg.refine_factor),
        ef,
        format!("< error at dy = {ec:e}"),
        ef < ec,
        clock.elapsed(),
    );
    rep.note("coarse error", format!("{ec:e}"));
    rep.note("fine error", format!("{ef:e}"));
    rep.note("coarse vs fine difference", format!("{:e}", r.difference));
    let mut table = Table::new(["dy", "time_steps", "max_error"]);
    table.push_row(vec![
        coarse.space().min_spacing(),
        coarse.time().n_steps() as f64,
        ec,
    ])?;
    table.push_row(vec![
        fine.space().min_spacing(),
        fine.time().n_steps() as f64,
        ef,
    ])?;
    ctx.emit(rep, "refine.csv", &table)?;

    let model = cfg.model()?;
    let y0 = &cfg.mc.y0;
    let v = coarse.interp(cfg.mc.t, y0).value;
    let mut mc_rows = Table::new(["seed_index", "solver", "mc_best", "stderr"]);
    for s in 0..2u64 {
        let clock = Instant::now();
        let mc = mc_table(ctx, &model, &cost, y0, &controls, SALT_REFINE_MC + s)?;
        let best = mc.best_estimate().estimate;
        let tol = 3.0 * best.stderr + MC_ABS_TOL;
        rep.check(
            &format!("MC seed {s}: |MC best - V| at y = {y0:?}"),
            (best.mean - v).abs(),
            format!("<= 3 stderr + {MC_ABS_TOL:e} = {tol:e}"),
            (best.mean - v).abs() <= tol,
            clock.elapsed(),
        );
        mc_rows.push_row(vec![s as f64, v, best.mean, best.stderr])?;
    }
    ctx.emit(rep, "refine_mc.csv", &mc_rows)
}

fn csv_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".csv") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn determinism(ctx: &Ctx, rep: &mut RunReport) -> Result<()> {
    let recipe = ctx.cfg.determinism_recipe.as_str();
    rep.note("repeated recipe", recipe);
    let clock = Instant::now();
    let (dir_a, dir_b) = (ctx.out.join("run-a"), ctx.out.join("run-b"));
    let a = run_experiment(ctx.cfg, recipe, &dir_a)?;
    let b = run_experiment(ctx.cfg, recipe, &dir_b)?;
    let (names_a, names_b) = (csv_files(&dir_a)?, csv_files(&dir_b)?);
    let mut differing = 0usize;
    if names_a != names_b {
        differing += names_a.len().max(names_b.len());
    } else {
        for name in &names_a {
            let (pa, pb) = (dir_a.join(name), dir_b.join(name));
            let ba = std::fs::read(&pa).map_err(|e| Error::io(&pa, e))?;
            let bb = std::fs::read(&pb).map_err(|e| Error::io(&pb, e))?;
            if ba != bb {
                differing += 1;
                rep.note("differs", name);
            }
        }
    }
    let elapsed = clock.elapsed();
    rep.note("csv files compared", names_a.len());
    rep.check(
        "CSV artifacts differing between runs",
        differing as f64,
        "== 0",
        differing == 0 && !names_a.is_empty(),
        elapsed,
    );
    let same = a.verdicts() == b.verdicts() && a.error == b.error;
    rep.check(
        "pass/fail vectors differ",
        (!same) as u8 as f64,
        "== 0",
        same,
        elapsed,
    );
    Ok(())
}
