//! Two solutions of the same structure equation that differ in law.
//!
//! With `ν(dx) = x⁻² 1{x>0} dx` and `u_s = 1{s ≥ S}`, `S` the first time a
//! Brownian motion `B` reaches 1, both
//!
//! * `X  =  B` before `S`, then a unit-jump compensated Poisson process, and
//! * `X' = −B` before `S`, then the same compensated Poisson process,
//!
//! solve the equation. `X` reaches 1 continuously, while `X'` can only reach
//! 1 after `S` by a jump. The two share one Brownian path and one Poisson
//! clock.

use crate::error::Result;
use crate::exec::Execution;
use crate::levy::LevyMeasure;
use crate::rng::PathSeed;
use crate::stats::{wilson_lower_bound, Z_99_ONE_SIDED};

use super::{poisson_count, MartingalePath, TimeGrid};
use rand_distr::{Distribution, StandardNormal};

/// How a path first reaches the level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstPassage {
    /// Not reached within the horizon.
    Censored,
    /// The crossing step carries no jump.
    Continuous { step: usize },
    /// The crossing step carries a jump mark.
    ByJump { step: usize },
}

impl FirstPassage {
    pub fn by_jump(&self) -> bool {
        matches!(self, FirstPassage::ByJump { .. })
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, FirstPassage::Censored)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexamplePair {
    pub x: MartingalePath,
    pub x_prime: MartingalePath,
    /// Grid index at which `B` first reaches the level (the regime switch).
    pub switch_step: Option<usize>,
    pub x_passage: FirstPassage,
    pub x_prime_passage: FirstPassage,
}

impl CounterexamplePair {
    pub fn censored(&self) -> bool {
        self.x_passage.is_censored() || self.x_prime_passage.is_censored()
    }
}

pub const LEVEL: f64 = 1.0;

/// Builds the pair `(X, X')` on `grid` from one seed.
pub fn counterexample_paths(grid: &TimeGrid, seed: PathSeed) -> Result<CounterexamplePair> {
    let measure = LevyMeasure::inverse_square_positive();
    let rate = measure.jump_regions(&[1.0])?.masses[0];
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut gauss = seed.gaussian(0);
    let mut clock = seed.poisson(0);

    let mut x = vec![0.0; n + 1];
    let mut xp = vec![0.0; n + 1];
    let mut controls = vec![0.0; n];
    let mut counts = vec![0u32; n];
    let mut brownian = 0.0;
    let mut switch_step = None;
    for k in 0..n {
        // both noises are drawn on every step so the streams never depend on S
        let z: f64 = StandardNormal.sample(&mut gauss);
        let db = dt.sqrt() * z;
        let jumps = poisson_count(&mut clock, rate * dt);
        if switch_step.is_some() {
            controls[k] = 1.0;
            counts[k] = jumps;
            let dx = jumps as f64 - rate * dt;
            x[k + 1] = x[k] + dx;
            xp[k + 1] = xp[k] + dx;
        } else {
            x[k + 1] = x[k] + db;
            xp[k + 1] = xp[k] - db;
        }
        brownian += db;
        if switch_step.is_none() && brownian >= LEVEL {
            switch_step = Some(k + 1);
        }
    }
    let times = grid.times();
    let x = MartingalePath::from_parts(1, times.clone(), x, controls.clone(), counts.clone());
    let x_prime = MartingalePath::from_parts(1, times, xp, controls, counts);
    let x_passage = first_passage(&x);
    let x_prime_passage = first_passage(&x_prime);
    Ok(CounterexamplePair {
        x,
        x_prime,
        switch_step,
        x_passage,
        x_prime_passage,
    })
}

fn first_passage(path: &MartingalePath) -> FirstPassage {
    for k in 1..=path.n_steps() {
        if path.value(k)[0] >= LEVEL {
            return if path.jump_count(k - 1, 0) > 0 {
                FirstPassage::ByJump { step: k }
            } else {
                FirstPassage::Continuous { step: k }
            };
        }
    }
    FirstPassage::Censored
}

/// Frequencies of jump-at-first-passage over non-censored pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleSummary {
    pub pairs_simulated: usize,
    pub non_censored: usize,
    pub x_by_jump: usize,
    pub x_prime_by_jump: usize,
    /// One-sided 99% Wilson lower bound on the `X'` frequency.
    pub x_prime_lower_99: f64,
}

impl CounterexampleSummary {
    pub fn x_frequency(&self) -> f64 {
        self.x_by_jump as f64 / self.non_censored.max(1) as f64
    }

    pub fn x_prime_frequency(&self) -> f64 {
        self.x_prime_by_jump as f64 / self.non_censored.max(1) as f64
    }
}

/// Simulates pairs in index order until `target` non-censored pairs are
/// collected (or `max_pairs` were tried).
pub fn counterexample_study(
    grid: &TimeGrid,
    root_seed: u64,
    target: usize,
    max_pairs: usize,
    exec: Execution,
) -> Result<CounterexampleSummary> {
    const BATCH: usize = 4096;
    let mut summary = CounterexampleSummary {
        pairs_simulated: 0,
        non_censored: 0,
        x_by_jump: 0,
        x_prime_by_jump: 0,
        x_prime_lower_99: 0.0,
    };
    let mut next = 0usize;
    while summary.non_censored < target && next < max_pairs {
        let len = BATCH.min(max_pairs - next);
        let outcomes: Vec<(FirstPassage, FirstPassage)> = exec
            .map_indexed(len, |j| {
                counterexample_paths(grid, PathSeed::new(root_seed, (next + j) as u64))
                    .map(|p| (p.x_passage, p.x_prime_passage))
            })
            .into_iter()
            .collect::<Result<_>>()?;
        for (a, b) in outcomes {
            if summary.non_censored == target {
                break;
            }
            summary.pairs_simulated += 1;
            if a.is_censored() || b.is_censored() {
                continue;
            }
            summary.non_censored += 1;
            summary.x_by_jump += a.by_jump() as usize;
            summary.x_prime_by_jump += b.by_jump() as usize;
        }
        next += len;
    }
    summary.x_prime_lower_99 = wilson_lower_bound(
        summary.x_prime_by_jump,
        summary.non_censored,
        Z_99_ONE_SIDED,
    );
    Ok(summary)
}
