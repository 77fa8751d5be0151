use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::martingale::TimeGrid;
use crate::operators::ValueSource;
use crate::rng::PathSeed;
use crate::stats::Estimate;

use super::{
    norm_sq, ConstantPolicy, ControlGrid, ControlPoint, ControlledModel, CostSpec, Policy,
};

/// Largest tolerated fraction of aborted paths.
pub const MAX_BLOWUP_FRACTION: f64 = 1e-3;

/// Monte Carlo mean over the paths that finished, plus the abort count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: Estimate,
    pub blowups: usize,
}

/// Runs `f` on `n_paths` paths and drops aborted ones, failing when more
/// than 0.1% abort.
fn collect<F>(n_paths: usize, exec: Execution, f: F) -> Result<McEstimate>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo needs at least 2 paths, got {n_paths}"
        )));
    }
    let results = exec.map_indexed(n_paths, f);
    let mut samples = Vec::with_capacity(n_paths);
    let mut blowups = 0;
    for r in results {
        match r {
            Ok(v) => samples.push(v),
            Err(Error::NumericalBlowup { .. }) => blowups += 1,
            Err(e) => return Err(e),
        }
    }
    if blowups as f64 > MAX_BLOWUP_FRACTION * n_paths as f64 {
        return Err(Error::TooManyBlowups {
            aborted: blowups,
            total: n_paths,
        });
    }
    Ok(McEstimate {
        estimate: Estimate::from_samples(&samples),
        blowups,
    })
}

/// `E[g(Y_T)]` under `policy`, started at `(grid.t0, y0)`.
#[allow(clippy::too_many_arguments)]
pub fn mc_cost(
    model: &ControlledModel,
    cost: &CostSpec,
    y0: &[f64],
    policy: &dyn Policy,
    grid: &TimeGrid,
    n_paths: usize,
    root_seed: u64,
    exec: Execution,
) -> Result<McEstimate> {
    collect(n_paths, exec, |k| {
        let s = model.summarize(y0, policy, grid, PathSeed::new(root_seed, k as u64))?;
        Ok(cost.eval(&s.terminal))
    })
}

/// Per-control estimates of the brute-force value over constant controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantControlTable {
    pub entries: Vec<(ControlPoint, McEstimate)>,
    /// First index attaining the smallest mean.
    pub best: usize,
}

impl ConstantControlTable {
    pub fn best_estimate(&self) -> &McEstimate {
        &self.entries[self.best].1
    }

    pub fn best_control(&self) -> &ControlPoint {
        &self.entries[self.best].0
    }
}

/// Minimum of [`mc_cost`] over the constant policies of a control grid.
/// All controls share the same root seed, so the comparison uses common
/// random numbers. The result bounds the true value from above.
#[allow(clippy::too_many_arguments)]
pub fn mc_value_constant_controls(
    model: &ControlledModel,
    cost: &CostSpec,
    y0: &[f64],
    controls: &ControlGrid,
    grid: &TimeGrid,
    n_paths: usize,
    root_seed: u64,
    exec: Execution,
) -> Result<ConstantControlTable> {
    let mut entries = Vec::with_capacity(controls.len());
    for cp in controls.points() {
        let policy = ConstantPolicy(cp.clone());
        let est = mc_cost(model, cost, y0, &policy, grid, n_paths, root_seed, exec)?;
        entries.push((cp.clone(), est));
    }
    let best = argmin(entries.iter().map(|(_, e)| e.estimate.mean));
    Ok(ConstantControlTable { entries, best })
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, v) in values.enumerate() {
        if v < best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Estimates `E[sup_s |Y_s|²] / (1 + |y0|²)`.
#[allow(clippy::too_many_arguments)]
pub fn moment_bound_check(
    model: &ControlledModel,
    y0: &[f64],
    policy: &dyn Policy,
    grid: &TimeGrid,
    n_paths: usize,
    root_seed: u64,
    exec: Execution,
) -> Result<McEstimate> {
    let scale = 1.0 + norm_sq(y0);
    collect(n_paths, exec, |k| {
        let s = model.summarize(y0, policy, grid, PathSeed::new(root_seed, k as u64))?;
        Ok(s.sup_norm_sq / scale)
    })
}

/// Outcome of the dynamic-programming probe.
#[derive(Debug, Clone, PartialEq)]
pub struct DppGap {
    /// `min_c E[V(t0 + h, Y_{t0+h})] − V(t0, y0)`.
    pub gap: f64,
    pub stderr: f64,
    /// Index into the control grid of the minimizing constant control.
    pub best: usize,
    /// Fraction of the minimizer's samples that left the field's domain.
    pub clamped_fraction: f64,
    pub value_at_start: f64,
    pub per_control: Vec<Estimate>,
}

/// Compares `V(t0, y0)` with the best constant-control one-step lookahead
/// `E[V(t0 + h, Y_{t0+h})]`, simulated with `n_steps` Euler steps.
#[allow(clippy::too_many_arguments)]
pub fn dpp_gap(
    model: &ControlledModel,
    field: &dyn ValueSource,
    t0: f64,
    y0: &[f64],
    h: f64,
    n_steps: usize,
    controls: &ControlGrid,
    n_paths: usize,
    root_seed: u64,
    exec: Execution,
) -> Result<DppGap> {
    let start = field.value_at(t0, y0).value;
    if h == 0.0 {
        return Ok(DppGap {
            gap: 0.0,
            stderr: 0.0,
            best: 0,
            clamped_fraction: 0.0,
            value_at_start: start,
            per_control: Vec::new(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lookahead h must be >= 0, got {h}"
        )));
    }
    let inner = TimeGrid::new(t0, t0 + h, n_steps.max(1))?;
    let mut per_control = Vec::with_capacity(controls.len());
    let mut clamped = Vec::with_capacity(controls.len());
    for cp in controls.points() {
        let policy = ConstantPolicy(cp.clone());
        let samples = exec.map_indexed(n_paths, |k| {
            let s = model.summarize(y0, &policy, &inner, PathSeed::new(root_seed, k as u64))?;
            Ok::<_, Error>(field.value_at(t0 + h, &s.terminal))
        });
        let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
        let n_clamped = samples.iter().filter(|s| s.clamped).count();
        let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
        per_control.push(Estimate::from_samples(&values));
        clamped.push(n_clamped as f64 / n_paths.max(1) as f64);
    }
    let best = argmin(per_control.iter().map(|e| e.mean));
    Ok(DppGap {
        gap: per_control[best].mean - start,
        stderr: per_control[best].stderr,
        best,
        clamped_fraction: clamped[best],
        value_at_start: start,
        per_control,
    })
}
