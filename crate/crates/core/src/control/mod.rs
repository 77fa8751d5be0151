//! Controlled dynamics `dY = b(Y, π, u) dt + σ(Y−, π, u) dX` driven by a
//! structure-equation martingale, and Monte Carlo estimates of the terminal
//! cost `E[g(Y_T)]`.

mod coefficients;
mod mc;

pub use coefficients::{check_growth, AffineCoefficients, Coefficients, CostSpec};
pub use mc::{
    dpp_gap, mc_cost, mc_value_constant_controls, moment_bound_check, ConstantControlTable, DppGap,
    McEstimate,
};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::harness::csv::Table;
use crate::martingale::{ControlBounds, MartingalePath, MartingaleSimulator, TimeGrid};
use crate::rng::PathSeed;

/// States whose Euclidean norm exceeds this abort the path.
pub const BLOWUP_NORM: f64 = 1e9;

/// A point `(π, u)` of the control set; `π` is scalar, `u` has one entry per
/// noise coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPoint {
    pub pi: f64,
    pub u: Vec<f64>,
}

impl ControlPoint {
    pub fn new(pi: f64, u: Vec<f64>) -> Self {
        Self { pi, u }
    }
}

/// Finite enumeration of the control set used by the solver and by the
/// brute-force Monte Carlo value.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    points: Vec<ControlPoint>,
    bounds: ControlBounds,
}

impl ControlGrid {
    pub fn new(points: Vec<ControlPoint>, bounds: ControlBounds) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidArgument("control grid is empty".into()));
        };
        let d = first.u.len();
        for p in &points {
            if p.u.len() != d {
                return Err(Error::InvalidArgument(
                    "control points disagree on the noise dimension".into(),
                ));
            }
            if !p.pi.is_finite() {
                return Err(Error::InvalidArgument(format!("control π = {}", p.pi)));
            }
            if let Some(&bad) = p.u.iter().find(|&&x| !bounds.admits(x)) {
                return Err(Error::InvalidArgument(format!(
                    "jump size {bad} violates the gap 0 < {} <= |u| <= {}",
                    bounds.delta0, bounds.cap
                )));
            }
        }
        Ok(Self { points, bounds })
    }

    /// Cartesian product `π_levels × u_levels^d`, π varying slowest and the
    /// last coordinate fastest.
    pub fn from_levels(
        pi_levels: &[f64],
        u_levels: &[f64],
        d: usize,
        bounds: ControlBounds,
    ) -> Result<Self> {
        if pi_levels.is_empty() || u_levels.is_empty() || d == 0 {
            return Err(Error::InvalidArgument(
                "control grid needs π levels, u levels and d >= 1".into(),
            ));
        }
        let mut points = Vec::new();
        for &pi in pi_levels {
            let total = u_levels.len().pow(d as u32);
            for mut code in 0..total {
                let mut u = vec![0.0; d];
                for slot in u.iter_mut().rev() {
                    *slot = u_levels[code % u_levels.len()];
                    code /= u_levels.len();
                }
                points.push(ControlPoint::new(pi, u));
            }
        }
        Self::new(points, bounds)
    }

    pub fn points(&self) -> &[ControlPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> &ControlPoint {
        &self.points[i]
    }

    pub fn noise_dim(&self) -> usize {
        self.points[0].u.len()
    }

    pub fn bounds(&self) -> ControlBounds {
        self.bounds
    }

    /// Whether some point uses `u = 0` in some coordinate.
    pub fn includes_zero(&self) -> bool {
        self.points.iter().any(|p| p.u.contains(&0.0))
    }

    pub fn max_jump(&self) -> f64 {
        self.points
            .iter()
            .flat_map(|p| p.u.iter())
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn index_of(&self, cp: &ControlPoint) -> Option<usize> {
        self.points.iter().position(|p| p == cp)
    }
}

/// Feedback rule `(t, y) ↦ (π, u)`.
pub trait Policy: Sync {
    fn decide(&self, t: f64, y: &[f64]) -> &ControlPoint;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy(pub ControlPoint);

impl Policy for ConstantPolicy {
    fn decide(&self, _t: f64, _y: &[f64]) -> &ControlPoint {
        &self.0
    }
}

/// A Markov policy from a closure returning an index into a control grid.
pub struct GridFeedback<'a, F> {
    grid: &'a ControlGrid,
    select: F,
}

impl<'a, F> GridFeedback<'a, F>
where
    F: Fn(f64, &[f64]) -> usize + Sync,
{
    pub fn new(grid: &'a ControlGrid, select: F) -> Self {
        Self { grid, select }
    }
}

impl<F> Policy for GridFeedback<'_, F>
where
    F: Fn(f64, &[f64]) -> usize + Sync,
{
    fn decide(&self, t: f64, y: &[f64]) -> &ControlPoint {
        self.grid.get((self.select)(t, y))
    }
}

/// A simulated `(Y, X)` pair together with the `π` used on each step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    pub x: MartingalePath,
    m: usize,
    states: Vec<f64>,
    pis: Vec<f64>,
}

impl ControlledPath {
    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn n_steps(&self) -> usize {
        self.x.n_steps()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.m..(k + 1) * self.m]
    }

    pub fn terminal_state(&self) -> &[f64] {
        self.state(self.n_steps())
    }

    pub fn pi(&self, k: usize) -> f64 {
        self.pis[k]
    }

    pub fn control_point(&self, k: usize) -> ControlPoint {
        ControlPoint::new(self.pis[k], self.x.control(k).to_vec())
    }

    /// Same path observed every `factor` steps; see
    /// [`MartingalePath::coarsen`] for when this is a valid coarse path.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let x = self.x.coarsen(factor)?;
        let n = x.n_steps();
        let states = (0..=n)
            .flat_map(|k| self.state(k * factor).to_vec())
            .collect();
        let pis = (0..n).map(|k| self.pis[k * factor]).collect();
        Ok(Self {
            x,
            m: self.m,
            states,
            pis,
        })
    }

    /// Columns `time, Y1..Ym, pi, u1..ud, X1..Xd`.
    pub fn to_table(&self) -> Table {
        let d = self.x.dim();
        let mut columns = vec!["time".to_string()];
        columns.extend((1..=self.m).map(|r| format!("Y{r}")));
        columns.push("pi".into());
        columns.extend((1..=d).map(|i| format!("u{i}")));
        columns.extend((1..=d).map(|i| format!("X{i}")));
        let mut table = Table::new(columns);
        let n = self.n_steps();
        for k in 0..=n {
            let mut row = vec![self.x.times()[k]];
            row.extend_from_slice(self.state(k));
            let kc = k.min(n.saturating_sub(1));
            if n > 0 {
                row.push(self.pis[kc]);
                row.extend_from_slice(self.x.control(kc));
            } else {
                row.extend(std::iter::repeat_n(0.0, 1 + d));
            }
            row.extend_from_slice(self.x.value(k));
            table.push_row(row).expect("row width matches header");
        }
        table
    }
}

/// The martingale simulator paired with the coefficients `b`, `σ`.
#[derive(Clone)]
pub struct ControlledModel {
    pub sim: MartingaleSimulator,
    pub coeffs: Arc<dyn Coefficients>,
}

impl std::fmt::Debug for ControlledModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlledModel")
            .field("sim", &self.sim)
            .field("m", &self.coeffs.state_dim())
            .field("d", &self.coeffs.noise_dim())
            .finish()
    }
}

/// Terminal state and running maximum of `|Y|²` for one path.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PathSummary {
    pub terminal: Vec<f64>,
    pub sup_norm_sq: f64,
}

impl ControlledModel {
    pub fn new(sim: MartingaleSimulator, coeffs: Arc<dyn Coefficients>) -> Self {
        Self { sim, coeffs }
    }

    /// Joint Euler scheme: on each step the policy is read at `(t_k, Y_k)`,
    /// the martingale increment is drawn for that `u`, and
    /// `Y_{k+1} = Y_k + b Δt + σ ΔX`.
    pub fn simulate_controlled(
        &self,
        y0: &[f64],
        policy: &dyn Policy,
        grid: &TimeGrid,
        seed: PathSeed,
    ) -> Result<ControlledPath> {
        let n = grid.n_steps();
        let d = self.coeffs.noise_dim();
        let m = self.coeffs.state_dim();
        let mut states = Vec::with_capacity((n + 1) * m);
        states.extend_from_slice(y0);
        let mut xs = vec![0.0; (n + 1) * d];
        let mut controls = Vec::with_capacity(n * d);
        let mut counts = vec![0u32; n * d];
        let mut pis = Vec::with_capacity(n);
        self.drive(y0, policy, grid, seed, |k, cp, y_next, dx, cnt| {
            pis.push(cp.pi);
            controls.extend_from_slice(&cp.u);
            counts[k * d..(k + 1) * d].copy_from_slice(cnt);
            for i in 0..d {
                xs[(k + 1) * d + i] = xs[k * d + i] + dx[i];
            }
            states.extend_from_slice(y_next);
        })?;
        let x = MartingalePath::from_parts(d, grid.times(), xs, controls, counts);
        Ok(ControlledPath { x, m, states, pis })
    }

    pub(crate) fn summarize(
        &self,
        y0: &[f64],
        policy: &dyn Policy,
        grid: &TimeGrid,
        seed: PathSeed,
    ) -> Result<PathSummary> {
        let mut sup = norm_sq(y0);
        let mut terminal = y0.to_vec();
        self.drive(y0, policy, grid, seed, |_, _, y_next, _, _| {
            sup = sup.max(norm_sq(y_next));
            terminal.copy_from_slice(y_next);
        })?;
        Ok(PathSummary {
            terminal,
            sup_norm_sq: sup,
        })
    }

    fn drive<F>(
        &self,
        y0: &[f64],
        policy: &dyn Policy,
        grid: &TimeGrid,
        seed: PathSeed,
        mut observe: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &ControlPoint, &[f64], &[f64], &[u32]),
    {
        let m = self.coeffs.state_dim();
        let d = self.coeffs.noise_dim();
        if y0.len() != m {
            return Err(Error::InvalidArgument(format!(
                "initial state has {} entries, model has m = {m}",
                y0.len()
            )));
        }
        let dt = grid.dt();
        let mut noise = self.sim.noise(seed, d);
        let mut y = y0.to_vec();
        let mut y_next = vec![0.0; m];
        let mut dx = vec![0.0; d];
        let mut counts = vec![0u32; d];
        let mut b = vec![0.0; m];
        let mut sigma = vec![0.0; m * d];
        for k in 0..grid.n_steps() {
            let t = grid.time(k);
            let cp = policy.decide(t, &y);
            if cp.u.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "policy returned {} jump sizes, model has d = {d}",
                    cp.u.len()
                )));
            }
            self.sim
                .draw_increment(k, &cp.u, dt, &mut noise, &mut dx, &mut counts)?;
            self.coeffs.drift(&y, cp, &mut b);
            self.coeffs.diffusion(&y, cp, &mut sigma);
            for r in 0..m {
                let mut acc = y[r] + b[r] * dt;
                for i in 0..d {
                    acc += sigma[r * d + i] * dx[i];
                }
                y_next[r] = acc;
            }
            if !y_next.iter().all(|v| v.is_finite()) || norm_sq(&y_next) > BLOWUP_NORM * BLOWUP_NORM
            {
                return Err(Error::NumericalBlowup { step: k });
            }
            observe(k, cp, &y_next, &dx, &counts);
            std::mem::swap(&mut y, &mut y_next);
        }
        Ok(())
    }
}

pub(crate) fn norm_sq(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum()
}
