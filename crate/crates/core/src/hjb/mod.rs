//! Explicit monotone time stepping for the HJB equation
//! `−∂_t V − inf_{(π,u)} 𝓛_{π,u}[V] = 0`, `V(T, ·) = g`.
//!
//! Each control's generator is discretised as a stencil with nonnegative
//! off-centre weights. The `u^i = 0` part uses central second differences
//! along `σ^i`, the `u^i ≠ 0` part evaluates the slice at `y + u^i σ^i` by
//! multilinear interpolation (constant beyond the box), and the first-order
//! terms, the drift `b` together with `−σ^i / u^i` from the jump quotient,
//! are upwinded per axis. A step is then a convex combination of the
//! previous slice whenever `Δt` times the largest stencil rate is at most 1.

mod checks;
mod field;
mod grid;
mod stencil;

pub use checks::{
    continuity_ratio, policy_excess, refine_check, residual, sup_error, ExactFn, RefineReport,
};
pub use field::{extract_policy, FieldMeta, FieldPolicy, ValueField};
pub use grid::{SpatialGrid, Window};
pub use stencil::Stencils;

use crate::control::{Coefficients, ControlGrid, CostSpec};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::martingale::TimeGrid;

/// Smallest time step the grid builder accepts.
pub const DT_FLOOR: f64 = 1e-7;

/// Step counts are rounded up to a multiple of this, so that slices fall on
/// tenths of the horizon.
pub const STEP_MULTIPLE: usize = 10;

/// Spatial box, spacing and horizon of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub dy: f64,
    pub t0: f64,
    pub t_end: f64,
    /// Region of interest; must stay inside the box after the largest shift.
    pub window: Option<Window>,
    /// Fixed time step instead of the CFL choice.
    pub dt: Option<f64>,
}

impl HjbDomain {
    pub fn interval(lo: f64, hi: f64, dy: f64, t0: f64, t_end: f64) -> Self {
        Self {
            lower: vec![lo],
            upper: vec![hi],
            dy,
            t0,
            t_end,
            window: None,
            dt: None,
        }
    }

    /// Same box and horizon with spacing `dy / factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            dy: self.dy / factor as f64,
            dt: None,
            ..self.clone()
        }
    }
}

/// Lattice, time grid, controls and stencils ready to be stepped.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub space: SpatialGrid,
    pub time: TimeGrid,
    pub controls: ControlGrid,
    pub stencils: Stencils,
    pub window: Window,
    /// `σ_max²/Δy² + d/δ₀² + |b|_max/Δy`.
    pub formula_rate: f64,
    pub stencil_rate: f64,
}

impl Discretization {
    /// `Δt` times the largest stencil rate.
    pub fn courant(&self) -> f64 {
        self.time.dt() * self.stencil_rate
    }

    fn check_cfl(&self) -> Result<()> {
        let (rate, node) = self.stencils.max_rate();
        let courant = self.time.dt() * rate;
        if courant > 1.0 + 1e-12 {
            return Err(Error::CflViolation { node, courant });
        }
        Ok(())
    }
}

/// Width of the boundary band excluded from the default window.
pub fn boundary_band(stencils: &Stencils, controls: &ControlGrid, space: &SpatialGrid) -> f64 {
    let dy = space.spacing().iter().cloned().fold(0.0, f64::max);
    controls.max_jump() * stencils.sigma_max + 2.0 * dy
}

/// Builds the lattice and stencils and picks `Δt` so that
/// `Δt · max(formula rate, stencil rate) ≤ 1`, with the step count rounded up
/// to a multiple of [`STEP_MULTIPLE`].
pub fn build_grids(
    domain: &HjbDomain,
    coeffs: &dyn Coefficients,
    controls: &ControlGrid,
    exec: Execution,
) -> Result<Discretization> {
    let space = SpatialGrid::new(domain.lower.clone(), domain.upper.clone(), domain.dy)?;
    if coeffs.state_dim() != space.dim() {
        return Err(Error::GridInfeasible(format!(
            "lattice has m = {}, coefficients have m = {}",
            space.dim(),
            coeffs.state_dim()
        )));
    }
    if controls.noise_dim() != coeffs.noise_dim() {
        return Err(Error::GridInfeasible(format!(
            "controls have d = {}, coefficients have d = {}",
            controls.noise_dim(),
            coeffs.noise_dim()
        )));
    }
    let stencils = Stencils::build(&space, coeffs, controls, exec);
    let shift = controls.max_jump() * stencils.sigma_max;
    let window = match &domain.window {
        Some(w) => {
            let fits = (0..space.dim()).all(|r| {
                w.lower[r] - shift >= space.lower()[r] - 1e-12
                    && w.upper[r] + shift <= space.upper()[r] + 1e-12
            });
            if w.lower.len() != space.dim() || !fits {
                return Err(Error::GridInfeasible(format!(
                    "window [{:?}, {:?}] plus the largest shift {shift} leaves the box",
                    w.lower, w.upper
                )));
            }
            w.clone()
        }
        None => Window::shrink(&space, boundary_band(&stencils, controls, &space))?,
    };
    let dy = space.min_spacing();
    let d = coeffs.noise_dim() as f64;
    let delta0 = controls.bounds().delta0;
    let formula_rate =
        stencils.sigma_max.powi(2) / (dy * dy) + d / (delta0 * delta0) + stencils.b_max / dy;
    let stencil_rate = stencils.max_rate().0;
    let horizon = domain.t_end - domain.t0;
    let time = match domain.dt {
        Some(dt) => {
            if dt < DT_FLOOR {
                return Err(Error::GridInfeasible(format!(
                    "Δt = {dt} is below the floor {DT_FLOOR}"
                )));
            }
            TimeGrid::with_step(domain.t0, domain.t_end, dt)?
        }
        None => {
            let rate = formula_rate.max(stencil_rate);
            let n_min = if rate > 0.0 {
                (horizon * rate * (1.0 - 1e-12)).ceil().max(1.0)
            } else {
                1.0
            };
            if horizon / n_min < DT_FLOOR {
                return Err(Error::GridInfeasible(format!(
                    "CFL needs Δt <= {:.3e}, below the floor {DT_FLOOR}",
                    horizon / n_min
                )));
            }
            let n = (n_min as usize).div_ceil(STEP_MULTIPLE) * STEP_MULTIPLE;
            TimeGrid::new(domain.t0, domain.t_end, n)?
        }
    };
    let disc = Discretization {
        space,
        time,
        controls: controls.clone(),
        stencils,
        window,
        formula_rate,
        stencil_rate,
    };
    disc.check_cfl()?;
    Ok(disc)
}

/// Steps backward from `V(T, ·) = g`:
/// `V_k(n) = V_{k+1}(n) + Δt · min_c 𝓛_c V_{k+1}(n)`.
pub fn solve(
    disc: &Discretization,
    cost: &CostSpec,
    problem: &str,
    exec: Execution,
) -> Result<ValueField> {
    disc.check_cfl()?;
    let space = &disc.space;
    let nodes = space.len();
    let n = disc.time.n_steps();
    let dt = disc.time.dt();
    let mut values = vec![0.0; (n + 1) * nodes];
    let mut policy = vec![0u32; (n + 1) * nodes];
    for (node, v) in values[n * nodes..].iter_mut().enumerate() {
        *v = cost.eval(&space.coords(node));
    }
    if values[n * nodes..].iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverBlowup { slice: n });
    }
    let mut step = vec![(0.0, 0u32); nodes];
    for k in (0..n).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * nodes);
        let next = &tail[..nodes];
        exec.fill_indexed(&mut step, |node| {
            let (l, c) = disc.stencils.minimise(next, node);
            (next[node] + dt * l, c as u32)
        });
        let current = &mut head[k * nodes..];
        for (node, &(v, c)) in step.iter().enumerate() {
            current[node] = v;
            policy[k * nodes + node] = c;
        }
        if current.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverBlowup { slice: k });
        }
    }
    let (last, prev) = (n * nodes, (n - 1) * nodes);
    policy.copy_within(prev..last, last);
    let meta = FieldMeta {
        problem: problem.to_string(),
        cost: cost.name().to_string(),
        courant: disc.courant(),
        formula_rate: disc.formula_rate,
        stencil_rate: disc.stencil_rate,
        clamped_stencils: disc.stencils.clamped_count(),
    };
    Ok(ValueField::from_parts(
        space.clone(),
        disc.time,
        disc.controls.clone(),
        values,
        policy,
        meta,
    ))
}

/// Rebuilds the discretization a field was solved on.
pub fn rediscretize(
    field: &ValueField,
    coeffs: &dyn Coefficients,
    exec: Execution,
) -> Result<Discretization> {
    let space = field.space();
    let domain = HjbDomain {
        lower: space.lower().to_vec(),
        upper: space.upper().to_vec(),
        dy: space.spacing()[0],
        t0: field.time().t0(),
        t_end: field.time().t_end(),
        window: None,
        dt: None,
    };
    let mut disc = build_grids(&domain, coeffs, field.controls(), exec)?;
    disc.time = *field.time();
    disc.check_cfl()?;
    Ok(disc)
}

#[cfg(test)]
mod tests;
