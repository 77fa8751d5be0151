//! Lévy measures on the punctured line and the jump regions of the explicit
//! structure-equation solution.
//!
//! For a jump-size vector `u` the thresholds `1 = τ⁰ ≥ τ¹ ≥ … ≥ τᵈ > 0` are
//! built one coordinate at a time so that the annulus between `τⁱ` and
//! `τⁱ⁻¹` carries mass `1/(uⁱ)²`. Coordinate `i` then jumps by `uⁱ` whenever
//! the Poisson random measure charges its annulus. The annuli are nested and
//! therefore pairwise disjoint, which is what makes the coordinates
//! orthogonal.

pub mod quadrature;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Relative tolerance for quadrature-based tail masses.
pub const QUADRATURE_REL_TOL: f64 = 1e-10;
/// Absolute tolerance of the threshold bisection.
pub const THRESHOLD_TOL: f64 = 1e-12;
/// Allowed deviation of a region's mass from `1/u²`.
pub const KERNEL_MASS_TOL: f64 = 1e-8;

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type TailFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// An atomless Lévy measure given by a density.
#[derive(Clone)]
pub struct LevyMeasure {
    name: String,
    density: DensityFn,
    /// Closed intervals outside which the density vanishes. Must not contain 0
    /// in their interior.
    support: Vec<(f64, f64)>,
    tail: Option<TailFn>,
}

impl fmt::Debug for LevyMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyMeasure")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("closed_form_tail", &self.tail.is_some())
            .finish()
    }
}

impl LevyMeasure {
    /// A measure with density `density` on the given support intervals.
    pub fn from_density<F>(name: &str, density: F, support: Vec<(f64, f64)>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        for &(lo, hi) in &support {
            if !(lo < hi) || (lo < 0.0 && hi > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "support interval [{lo}, {hi}] must be nonempty and exclude 0 from its interior"
                )));
            }
        }
        Ok(Self {
            name: name.to_string(),
            density: Arc::new(density),
            support,
            tail: None,
        })
    }

    /// Attaches a closed-form annulus mass `(r1, r2) ↦ ν((−r2, −r1] ∪ [r1, r2))`.
    pub fn with_closed_form_tail<G>(mut self, tail: G) -> Self
    where
        G: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.tail = Some(Arc::new(tail));
        self
    }

    /// `ν(dx) = x⁻² 1{x>0} dx`, the default measure.
    pub fn inverse_square_positive() -> Self {
        Self {
            name: "inverse_square_positive".into(),
            density: Arc::new(|x: f64| if x > 0.0 { 1.0 / (x * x) } else { 0.0 }),
            support: vec![(0.0, f64::INFINITY)],
            tail: Some(Arc::new(|r1: f64, r2: f64| {
                if r2.is_infinite() {
                    1.0 / r1
                } else {
                    // (r2 - r1)/(r1 r2) avoids cancellation for close radii
                    (r2 - r1) / (r1 * r2)
                }
            })),
        }
    }

    /// Piecewise-linear density through `(x, density)` points, zero outside
    /// the table's range. Points may lie on both sides of the origin, but no
    /// table segment may straddle it.
    pub fn from_table(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(
                "a density table needs at least two points".into(),
            ));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pts.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidArgument(format!(
                    "duplicate abscissa {} in density table",
                    w[0].0
                )));
            }
        }
        if pts
            .iter()
            .any(|&(x, d)| !x.is_finite() || !(d >= 0.0) || !d.is_finite())
        {
            return Err(Error::InvalidArgument(
                "density table entries must be finite with nonnegative density".into(),
            ));
        }
        let mut support = Vec::new();
        let mut start = 0;
        for k in 1..pts.len() {
            let crosses = pts[k - 1].0 < 0.0 && pts[k].0 > 0.0;
            if crosses {
                if k - 1 > start {
                    support.push((pts[start].0, pts[k - 1].0));
                }
                start = k;
            }
        }
        if pts.len() - 1 > start {
            support.push((pts[start].0, pts[pts.len() - 1].0));
        }
        let table = Arc::new(pts);
        let lookup = Arc::clone(&table);
        let density = move |x: f64| {
            let t = &lookup;
            if x < t[0].0 || x > t[t.len() - 1].0 {
                return 0.0;
            }
            let k = t.partition_point(|p| p.0 <= x);
            if k == 0 {
                return t[0].1;
            }
            if k >= t.len() {
                return t[t.len() - 1].1;
            }
            let (x0, d0) = t[k - 1];
            let (x1, d1) = t[k];
            if x0 < 0.0 && x1 > 0.0 {
                return 0.0;
            }
            d0 + (d1 - d0) * (x - x0) / (x1 - x0)
        };
        Self::from_density("user_table", density, support)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn density(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        (self.density)(x)
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn has_closed_form_tail(&self) -> bool {
        self.tail.is_some()
    }

    /// Mass of the symmetric annulus `(−r2, −r1] ∪ [r1, r2)`; `r2` may be
    /// `+inf`.
    pub fn tail_mass(&self, r1: f64, r2: f64) -> Result<f64> {
        check_radii(r1, r2)?;
        if r1 == r2 {
            return Ok(0.0);
        }
        let mass = match &self.tail {
            Some(tail) => tail(r1, r2),
            None => self.tail_mass_quadrature(r1, r2)?,
        };
        if !mass.is_finite() {
            return Err(Error::MeasureDivergence { r1, r2 });
        }
        Ok(mass.max(0.0))
    }

    /// Annulus mass by adaptive quadrature, ignoring any closed form.
    pub fn tail_mass_quadrature(&self, r1: f64, r2: f64) -> Result<f64> {
        check_radii(r1, r2)?;
        self.weighted_mass(r1, r2, |_| 1.0)
    }

    /// `∫ w(|x|) ν(dx)` over the annulus `r1 ≤ |x| < r2`.
    fn weighted_mass<W>(&self, r1: f64, r2: f64, weight: W) -> Result<f64>
    where
        W: Fn(f64) -> f64,
    {
        if r1 == r2 {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for &(lo, hi) in &self.support {
            // positive side [r1, r2)
            let a = lo.max(r1);
            let b = hi.min(r2);
            if a < b {
                total += quadrature::integrate(
                    |x| weight(x) * (self.density)(x),
                    a,
                    b,
                    QUADRATURE_REL_TOL,
                )?;
            }
            // negative side (−r2, −r1], mirrored onto the positive axis
            let a = (-hi).max(r1);
            let b = (-lo).min(r2);
            if a < b {
                total += quadrature::integrate(
                    |x| weight(x) * (self.density)(-x),
                    a,
                    b,
                    QUADRATURE_REL_TOL,
                )?;
            }
        }
        if !total.is_finite() {
            return Err(Error::MeasureDivergence { r1, r2 });
        }
        Ok(total)
    }

    /// Thresholds `τ⁰ = 1, τ¹, …, τᵈ` for the jump-size vector `u`.
    ///
    /// For `uⁱ ≠ 0`, `τⁱ` is the largest `r < τⁱ⁻¹` with
    /// `ν(r ≤ |x| < τⁱ⁻¹) = (uⁱ)⁻²`, found by bracketed bisection; for
    /// `uⁱ = 0`, `τⁱ = τⁱ⁻¹`.
    pub fn jump_thresholds(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut tau = Vec::with_capacity(u.len() + 1);
        tau.push(1.0);
        for &ui in u {
            let upper = *tau.last().expect("nonempty");
            if !ui.is_finite() {
                return Err(Error::InvalidArgument(format!("jump size {ui}")));
            }
            if ui == 0.0 {
                tau.push(upper);
                continue;
            }
            let target = 1.0 / (ui * ui);
            tau.push(self.solve_threshold(upper, target)?);
        }
        Ok(tau)
    }

    fn solve_threshold(&self, upper: f64, target: f64) -> Result<f64> {
        let excess = |r: f64| self.tail_mass(r, upper).map(|m| m - target);
        // bracket: shrink toward zero until the annulus is heavy enough
        let mut lo = upper;
        let mut found = false;
        for _ in 0..1100 {
            lo *= 0.5;
            if lo <= 0.0 {
                break;
            }
            if excess(lo)? >= 0.0 {
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::ThresholdInfeasible { upper, target });
        }
        let mut hi = upper;
        // invariant: excess(lo) >= 0 > excess(hi); converges to the largest root
        while hi - lo > THRESHOLD_TOL.min(1e-14 * hi) && hi - lo > 4.0 * f64::EPSILON * hi {
            let mid = 0.5 * (lo + hi);
            if excess(mid)? >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Thresholds plus the annuli they delimit, with a mass check.
    pub fn jump_regions(&self, u: &[f64]) -> Result<JumpRegions> {
        let thresholds = self.jump_thresholds(u)?;
        let mut regions = Vec::with_capacity(u.len());
        let mut masses = Vec::with_capacity(u.len());
        for (i, &ui) in u.iter().enumerate() {
            let region = JumpRegion {
                inner: thresholds[i + 1],
                outer: thresholds[i],
            };
            let mass = if region.is_empty() {
                0.0
            } else {
                self.tail_mass(region.inner, region.outer)?
            };
            if ui != 0.0 {
                let expected = 1.0 / (ui * ui);
                if (mass - expected).abs() > KERNEL_MASS_TOL * expected.max(1.0) {
                    return Err(Error::KernelInconsistent {
                        index: i,
                        mass,
                        expected,
                    });
                }
            }
            regions.push(region);
            masses.push(mass);
        }
        Ok(JumpRegions {
            thresholds,
            regions,
            masses,
        })
    }

    /// Numerical admissibility checks: `∫(1 ∧ x²) ν(dx) < ∞` and unbounded
    /// mass near the origin.
    pub fn validate(&self) -> Admissibility {
        let mut ladder = Vec::with_capacity(LADDER.len());
        let mut small_jump = Vec::with_capacity(LADDER.len());
        for &eps in LADDER {
            let mass = self.tail_mass(eps, 1.0).unwrap_or(f64::INFINITY);
            let second = self
                .weighted_mass(eps, 1.0, |x| x * x)
                .unwrap_or(f64::INFINITY);
            ladder.push(LadderRung { eps, mass });
            small_jump.push(second);
        }
        let large_jump_mass = self.tail_mass(1.0, f64::INFINITY).unwrap_or(f64::INFINITY);
        let small_jump_integral = *small_jump.last().expect("ladder nonempty");

        // the truncated second moment must settle as ε shrinks
        let n = small_jump.len();
        let last_increment = (small_jump[n - 1] - small_jump[n - 2]).abs();
        let integrable = large_jump_mass.is_finite()
            && small_jump.iter().all(|v| v.is_finite())
            && last_increment <= INTEGRABILITY_TOL * small_jump_integral.abs().max(1.0);

        // the mass of [ε, 1) must keep growing at least like ε^(-p)
        let divergent_near_zero = ladder.windows(2).rev().take(DIVERGENCE_RUNGS).all(|w| {
            let (a, b) = (w[0], w[1]);
            a.mass > 0.0
                && b.mass.is_finite()
                && (b.mass / a.mass).ln() / (a.eps / b.eps).ln() >= DIVERGENCE_EXPONENT
        });

        Admissibility {
            integrable,
            small_jump_integral,
            large_jump_mass,
            divergent_near_zero,
            ladder,
        }
    }
}

fn check_radii(r1: f64, r2: f64) -> Result<()> {
    if !(r1 > 0.0) || !(r2 >= r1) || r1.is_infinite() {
        return Err(Error::InvalidArgument(format!(
            "annulus radii must satisfy 0 < r1 <= r2, got ({r1}, {r2})"
        )));
    }
    Ok(())
}

const LADDER: &[f64] = &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9];
const INTEGRABILITY_TOL: f64 = 1e-6;
const DIVERGENCE_EXPONENT: f64 = 0.5;
const DIVERGENCE_RUNGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderRung {
    pub eps: f64,
    /// `ν(ε ≤ |x| < 1)`
    pub mass: f64,
}

/// Outcome of [`LevyMeasure::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Admissibility {
    pub integrable: bool,
    /// `∫_{ε_min ≤ |x| < 1} x² ν(dx)` on the finest rung.
    pub small_jump_integral: f64,
    /// `ν(|x| ≥ 1)`
    pub large_jump_mass: f64,
    pub divergent_near_zero: bool,
    pub ladder: Vec<LadderRung>,
}

impl Admissibility {
    pub fn passes(&self) -> bool {
        self.integrable && self.divergent_near_zero
    }
}

/// The annulus `(−outer, −inner] ∪ [inner, outer)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRegion {
    pub inner: f64,
    pub outer: f64,
}

impl JumpRegion {
    pub fn is_empty(&self) -> bool {
        self.inner >= self.outer
    }

    pub fn contains(&self, x: f64) -> bool {
        let a = x.abs();
        x != 0.0 && a >= self.inner && a < self.outer
    }

    /// The positive and negative pieces intersected with `support`, as
    /// `(lo, hi)` pairs.
    pub fn pieces(&self, support: &[(f64, f64)]) -> Vec<(f64, f64)> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for &(lo, hi) in support {
            let (a, b) = (lo.max(self.inner), hi.min(self.outer));
            if a < b {
                out.push((a, b));
            }
            let (a, b) = (lo.max(-self.outer), hi.min(-self.inner));
            if a < b {
                out.push((a, b));
            }
        }
        out
    }

    /// Lebesgue length of the intersection with `other`.
    pub fn overlap_length(&self, other: &JumpRegion) -> f64 {
        if self.is_empty() || other.is_empty() {
            return 0.0;
        }
        let lo = self.inner.max(other.inner);
        let hi = self.outer.min(other.outer);
        2.0 * (hi - lo).max(0.0)
    }
}

/// Thresholds, regions and masses for one jump-size vector.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRegions {
    pub thresholds: Vec<f64>,
    pub regions: Vec<JumpRegion>,
    pub masses: Vec<f64>,
}

impl JumpRegions {
    pub fn pairwise_disjoint(&self) -> bool {
        let r = &self.regions;
        (0..r.len()).all(|i| (i + 1..r.len()).all(|j| r[i].overlap_length(&r[j]) == 0.0))
    }
}

#[cfg(test)]
mod tests;
