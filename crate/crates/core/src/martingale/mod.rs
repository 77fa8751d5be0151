//! Discrete-time simulation of normal martingales solving the structure
//! equation `[X]_t = t + ∫ u dX`, coordinate-wise, with `[Xⁱ, Xʲ] = 0`.
//!
//! On each step the rule is evaluated at the left endpoint. A coordinate with
//! `uⁱ = 0` moves by a Gaussian increment of variance `Δt`; a coordinate with
//! `uⁱ ≠ 0` jumps by `uⁱ` a Poisson number of times with mean `Δt ν(Aⁱ)`
//! (`ν(Aⁱ) = 1/(uⁱ)²` from the jump regions) and drifts by the compensator
//! `−uⁱ ν(Aⁱ) Δt`. Several jumps may land in one step; that happens with
//! probability `O(Δt²)` per step.

pub mod counterexample;
mod path;
mod rule;

pub use path::{cross_variation, realized_qv, structure_residual, JumpMark, MartingalePath};
pub use rule::{ConstantRule, ControlRule, FeedbackRule, History, NegativeSideRule};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::levy::LevyMeasure;
use crate::rng::PathSeed;

/// Uniform grid on `[t0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite() && t0 < t_end) {
            return Err(Error::InvalidArgument(format!(
                "time grid needs t0 < T, got [{t0}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument(
                "time grid needs at least one step".into(),
            ));
        }
        Ok(Self { t0, t_end, n_steps })
    }

    /// Grid whose step is `dt`, or slightly smaller so that it divides the
    /// horizon evenly.
    pub fn with_step(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step {dt}")));
        }
        let n = ((t_end - t0) / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self::new(t0, t_end, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Same horizon with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.t0, self.t_end, self.n_steps * factor)
    }
}

/// Admissible jump sizes: `{0} ∪ [−C, −δ₀] ∪ [δ₀, C]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    pub delta0: f64,
    pub cap: f64,
}

impl ControlBounds {
    pub fn new(delta0: f64, cap: f64) -> Result<Self> {
        if !(delta0 > 0.0 && delta0 <= cap && cap.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "control bounds need 0 < delta0 <= cap, got ({delta0}, {cap})"
            )));
        }
        Ok(Self { delta0, cap })
    }

    pub fn admits(&self, u: f64) -> bool {
        u == 0.0 || (u.abs() >= self.delta0 && u.abs() <= self.cap)
    }
}

/// Simulates paths of `X` over a fixed Lévy measure.
#[derive(Debug, Clone)]
pub struct MartingaleSimulator {
    measure: LevyMeasure,
    bounds: ControlBounds,
}

impl MartingaleSimulator {
    pub fn new(measure: LevyMeasure, bounds: ControlBounds) -> Result<Self> {
        let report = measure.validate();
        if !report.integrable {
            return Err(Error::InvalidArgument(format!(
                "Lévy measure {} fails ∫(1 ∧ x²) ν(dx) < ∞",
                measure.name()
            )));
        }
        Ok(Self { measure, bounds })
    }

    pub fn measure(&self) -> &LevyMeasure {
        &self.measure
    }

    pub fn bounds(&self) -> ControlBounds {
        self.bounds
    }

    pub(crate) fn noise(&self, seed: PathSeed, dim: usize) -> Noise {
        Noise {
            gaussian: (0..dim).map(|i| seed.gaussian(i)).collect(),
            poisson: (0..dim).map(|i| seed.poisson(i)).collect(),
            kernels: KernelCache::default(),
        }
    }

    /// Draws one step's increment `dx` for jump sizes `u`.
    pub(crate) fn draw_increment(
        &self,
        step: usize,
        u: &[f64],
        dt: f64,
        noise: &mut Noise,
        dx: &mut [f64],
        counts: &mut [u32],
    ) -> Result<()> {
        for (i, &ui) in u.iter().enumerate() {
            if !self.bounds.admits(ui) {
                return Err(Error::ControlRange {
                    step,
                    coordinate: i,
                    value: ui,
                    delta0: self.bounds.delta0,
                    cap: self.bounds.cap,
                });
            }
        }
        let masses = noise.kernels.masses(&self.measure, u)?;
        let sqrt_dt = dt.sqrt();
        for i in 0..u.len() {
            if u[i] == 0.0 {
                let z: f64 = noise.gaussian[i].sample(StandardNormal);
                dx[i] = sqrt_dt * z;
                counts[i] = 0;
            } else {
                let intensity = masses[i] * dt;
                let n = poisson_count(&mut noise.poisson[i], intensity);
                counts[i] = n;
                dx[i] = n as f64 * u[i] - u[i] * intensity;
            }
        }
        Ok(())
    }

    /// Simulates one path of `X` started at 0.
    pub fn simulate_path(
        &self,
        rule: &dyn ControlRule,
        grid: &TimeGrid,
        seed: PathSeed,
    ) -> Result<MartingalePath> {
        let d = rule.dim();
        let n = grid.n_steps();
        let dt = grid.dt();
        let times = grid.times();
        let mut values = vec![0.0; (n + 1) * d];
        let mut controls = vec![0.0; n * d];
        let mut counts = vec![0u32; n * d];
        let mut noise = self.noise(seed, d);
        let mut dx = vec![0.0; d];
        for k in 0..n {
            let history = History::new(&times[..=k], &values[..(k + 1) * d], d);
            let u = &mut controls[k * d..(k + 1) * d];
            rule.control(times[k], &history, u);
            self.draw_increment(
                k,
                u,
                dt,
                &mut noise,
                &mut dx,
                &mut counts[k * d..(k + 1) * d],
            )?;
            for i in 0..d {
                values[(k + 1) * d + i] = values[k * d + i] + dx[i];
            }
        }
        Ok(MartingalePath::from_parts(
            d, times, values, controls, counts,
        ))
    }

    /// Simulates `n_paths` paths and reduces each with `f`, in path order.
    pub fn map_paths<T, F>(
        &self,
        rule: &dyn ControlRule,
        grid: &TimeGrid,
        root_seed: u64,
        n_paths: usize,
        exec: Execution,
        f: F,
    ) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&MartingalePath) -> T + Sync + Send,
    {
        exec.map_indexed(n_paths, |k| {
            self.simulate_path(rule, grid, PathSeed::new(root_seed, k as u64))
                .map(|p| f(&p))
        })
        .into_iter()
        .collect()
    }

    /// Oracle mode for constant jump sizes: the jump times of each coordinate
    /// come from exponential inter-arrival clocks and are binned onto the grid
    /// afterwards.
    pub fn simulate_constant_exact(
        &self,
        u: &[f64],
        grid: &TimeGrid,
        seed: PathSeed,
    ) -> Result<MartingalePath> {
        let d = u.len();
        for (i, &ui) in u.iter().enumerate() {
            if !self.bounds.admits(ui) {
                return Err(Error::ControlRange {
                    step: 0,
                    coordinate: i,
                    value: ui,
                    delta0: self.bounds.delta0,
                    cap: self.bounds.cap,
                });
            }
        }
        let n = grid.n_steps();
        let dt = grid.dt();
        let masses = self.measure.jump_regions(u)?.masses;
        let mut counts = vec![0u32; n * d];
        let mut dxs = vec![0.0; n * d];
        for i in 0..d {
            if u[i] == 0.0 {
                let mut rng = seed.gaussian(i);
                for k in 0..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    dxs[k * d + i] = dt.sqrt() * z;
                }
                continue;
            }
            let clock = Exp::new(masses[i]).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut rng = seed.poisson(i);
            let mut t = grid.t0();
            loop {
                t += clock.sample(&mut rng);
                if t >= grid.t_end() {
                    break;
                }
                let k = (((t - grid.t0()) / dt) as usize).min(n - 1);
                counts[k * d + i] += 1;
            }
            for k in 0..n {
                dxs[k * d + i] = counts[k * d + i] as f64 * u[i] - u[i] * masses[i] * dt;
            }
        }
        let mut values = vec![0.0; (n + 1) * d];
        for k in 0..n {
            for i in 0..d {
                values[(k + 1) * d + i] = values[k * d + i] + dxs[k * d + i];
            }
        }
        let controls = u.repeat(n);
        Ok(MartingalePath::from_parts(
            d,
            grid.times(),
            values,
            controls,
            counts,
        ))
    }
}

pub(crate) fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < 1e-3 {
        // P(N >= 1) ~ mean; the inversion below is exact and cheap here
        let mut u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut k = 0u32;
        while u > p {
            u -= p;
            k += 1;
            p *= mean / k as f64;
            if p == 0.0 {
                break;
            }
        }
        return k;
    }
    let dist = Poisson::new(mean).expect("positive finite mean");
    let x: f64 = dist.sample(rng);
    x as u32
}

/// Per-path random sources and a memo of region masses.
pub(crate) struct Noise {
    pub(crate) gaussian: Vec<ChaCha8Rng>,
    pub(crate) poisson: Vec<ChaCha8Rng>,
    kernels: KernelCache,
}

#[derive(Default)]
struct KernelCache {
    entries: Vec<(Vec<u64>, Vec<f64>)>,
}

impl KernelCache {
    fn masses(&mut self, measure: &LevyMeasure, u: &[f64]) -> Result<&[f64]> {
        let key: Vec<u64> = u.iter().map(|x| x.to_bits()).collect();
        if let Some(pos) = self.entries.iter().position(|(k, _)| *k == key) {
            return Ok(&self.entries[pos].1);
        }
        let masses = measure.jump_regions(u)?.masses;
        self.entries.push((key, masses));
        Ok(&self.entries.last().expect("just pushed").1)
    }
}

#[cfg(test)]
mod tests;
