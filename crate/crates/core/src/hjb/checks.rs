use crate::control::{Coefficients, ControlGrid, CostSpec};
use crate::error::Result;
use crate::exec::Execution;

use super::{build_grids, rediscretize, solve, HjbDomain, ValueField, Window};

/// Exact solution `(t, y) ↦ V(t, y)` used to measure errors.
pub type ExactFn<'a> = &'a dyn Fn(f64, &[f64]) -> f64;

/// Largest `|V_k − V_{k+1} − Δt · min_c 𝓛_c V_{k+1}|` over slices `k < n`
/// and the window's nodes (the solve's default window when `None`).
pub fn residual(
    field: &ValueField,
    coeffs: &dyn Coefficients,
    window: Option<&Window>,
    exec: Execution,
) -> Result<f64> {
    let disc = rediscretize(field, coeffs, exec)?;
    let window = window.unwrap_or(&disc.window);
    let nodes = window.nodes(&disc.space);
    let dt = disc.time.dt();
    let per_slice = exec.map_indexed(disc.time.n_steps(), |k| {
        let next = field.slice(k + 1);
        let here = field.slice(k);
        nodes
            .iter()
            .map(|&n| (here[n] - next[n] - dt * disc.stencils.minimise(next, n).0).abs())
            .fold(0.0, f64::max)
    });
    Ok(per_slice.into_iter().fold(0.0, f64::max))
}

/// Coarse and fine solves compared on the coarse window.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineReport {
    /// Sup over coarse slice times and fine window nodes of
    /// `|V_coarse − V_fine|`, the coarse field interpolated onto fine nodes.
    pub difference: f64,
    /// Sup error against the exact solution, when one is supplied.
    pub coarse_error: Option<f64>,
    pub fine_error: Option<f64>,
    pub window: Window,
}

/// Sup over every slice and window node of `|V − exact|`.
pub fn sup_error(field: &ValueField, window: &Window, exact: ExactFn<'_>) -> f64 {
    let space = field.space();
    let nodes = window.nodes(space);
    let coords: Vec<Vec<f64>> = nodes.iter().map(|&n| space.coords(n)).collect();
    let mut worst = 0.0f64;
    for k in 0..field.n_slices() {
        let t = field.time().time(k);
        let slice = field.slice(k);
        for (&n, y) in nodes.iter().zip(&coords) {
            worst = worst.max((slice[n] - exact(t, y)).abs());
        }
    }
    worst
}

/// Solves on `domain` and on `domain` refined by `factor`, and compares.
#[allow(clippy::too_many_arguments)]
pub fn refine_check(
    domain: &HjbDomain,
    factor: usize,
    coeffs: &dyn Coefficients,
    cost: &CostSpec,
    controls: &ControlGrid,
    exact: Option<ExactFn<'_>>,
    exec: Execution,
) -> Result<(RefineReport, ValueField, ValueField)> {
    let coarse_disc = build_grids(domain, coeffs, controls, exec)?;
    let coarse = solve(&coarse_disc, cost, "refine-coarse", exec)?;
    let fine_disc = build_grids(&domain.refined(factor.max(1)), coeffs, controls, exec)?;
    let fine = solve(&fine_disc, cost, "refine-fine", exec)?;
    let window = coarse_disc.window.clone();
    let fine_nodes = window.nodes(fine.space());
    let mut difference = 0.0f64;
    for k in 0..coarse.n_slices() {
        let t = coarse.time().time(k);
        for &n in &fine_nodes {
            let y = fine.space().coords(n);
            let (c, _) = coarse.space().interpolate(coarse.slice(k), &y);
            difference = difference.max((c - fine.interp(t, &y).value).abs());
        }
    }
    let report = RefineReport {
        difference,
        coarse_error: exact.map(|f| sup_error(&coarse, &window, f)),
        fine_error: exact.map(|f| sup_error(&fine, &window, f)),
        window,
    };
    Ok((report, coarse, fine))
}

/// Measured `C_h`: the smallest, over constant controls `c`, of the largest
/// excess `𝓛_c V − min 𝓛 V` on slices in `(t, t + h]` and window nodes.
/// Returns the excess and the control index attaining it.
pub fn policy_excess(
    field: &ValueField,
    coeffs: &dyn Coefficients,
    t: f64,
    h: f64,
    window: Option<&Window>,
    exec: Execution,
) -> Result<(f64, usize)> {
    let disc = rediscretize(field, coeffs, exec)?;
    let window = window.unwrap_or(&disc.window);
    let nodes = window.nodes(&disc.space);
    let slices: Vec<usize> = (1..field.n_slices())
        .filter(|&k| {
            let s = field.time().time(k);
            s > t + 1e-12 && s <= t + h + 1e-12
        })
        .collect();
    let n_controls = disc.controls.len();
    let per_control = exec.map_indexed(n_controls, |c| {
        let mut worst = 0.0f64;
        for &k in &slices {
            let v = field.slice(k);
            for &n in &nodes {
                let best = disc.stencils.minimise(v, n).0;
                worst = worst.max(disc.stencils.apply(v, n, c) - best);
            }
        }
        worst
    });
    let mut best = (f64::INFINITY, 0);
    for (c, &e) in per_control.iter().enumerate() {
        if e < best.0 {
            best = (e, c);
        }
    }
    Ok(best)
}

/// Largest ratio of a node-to-node slope of `V` to the local Lipschitz
/// estimate of `g`: the steepest slope of `g` between adjacent nodes within
/// `radius` (sup norm) of the pair. Zero slopes of both count as 0.
pub fn continuity_ratio(field: &ValueField, cost: &CostSpec, radius: f64) -> f64 {
    let space = field.space();
    let m = space.dim();
    let h = space.spacing();
    let n = space.len();
    let g: Vec<f64> = (0..n).map(|j| cost.eval(&space.coords(j))).collect();
    // slope of g on the pair (j, j + e_r)
    let slope = |vals: &[f64], j: usize, r: usize| -> Option<f64> {
        let nb = space.neighbour(j, r, 1);
        (nb != j).then(|| (vals[nb] - vals[j]).abs() / h[r])
    };
    let reach: Vec<isize> = h.iter().map(|h| (radius / h).floor() as isize).collect();
    let local: Vec<f64> = (0..n)
        .map(|j| {
            let idx = space.multi_index(j);
            let mut best = 0.0f64;
            let range = |r: usize| {
                if r < m {
                    let lo = (idx[r] as isize - reach[r]).max(0) as usize;
                    let hi = ((idx[r] as isize + reach[r]) as usize).min(space.counts()[r] - 1);
                    lo..=hi
                } else {
                    0..=0
                }
            };
            for i1 in range(1) {
                for i0 in range(0) {
                    let other = space.flat_index([i0, i1]);
                    for r in 0..m {
                        if let Some(s) = slope(&g, other, r) {
                            best = best.max(s);
                        }
                    }
                }
            }
            best
        })
        .collect();
    let mut worst = 0.0f64;
    for k in 0..field.n_slices() {
        let v = field.slice(k);
        for j in 0..n {
            for r in 0..m {
                if let Some(s) = slope(v, j, r) {
                    let ratio = if s == 0.0 {
                        0.0
                    } else if local[j] == 0.0 {
                        f64::INFINITY
                    } else {
                        s / local[j]
                    };
                    worst = worst.max(ratio);
                }
            }
        }
    }
    worst
}
