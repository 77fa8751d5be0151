use crate::error::{Error, Result};

/// Positions within this many cell widths of a node snap onto it, so that
/// shifts that are whole multiples of the spacing hit nodes exactly.
const SNAP: f64 = 1e-9;

/// Uniform lattice on a box in `ℝᵐ`, `m ∈ {1, 2}`. Axis 0 varies fastest in
/// the flat node index.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    spacing: Vec<f64>,
    counts: Vec<usize>,
}

impl SpatialGrid {
    /// `dy` must divide every axis length (to 1e-9 relative).
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, dy: f64) -> Result<Self> {
        let m = lower.len();
        if !(m == 1 || m == 2) || upper.len() != m {
            return Err(Error::GridInfeasible(format!(
                "state dimension must be 1 or 2 with matching bounds, got {m}"
            )));
        }
        if !(dy > 0.0 && dy.is_finite()) {
            return Err(Error::GridInfeasible(format!("spacing {dy}")));
        }
        let mut counts = Vec::with_capacity(m);
        let mut spacing = Vec::with_capacity(m);
        for r in 0..m {
            let (lo, hi) = (lower[r], upper[r]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::GridInfeasible(format!(
                    "axis {r} bounds [{lo}, {hi}]"
                )));
            }
            let cells = (hi - lo) / dy;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-9 * rounded.max(1.0) || rounded < 2.0 {
                return Err(Error::GridInfeasible(format!(
                    "spacing {dy} does not divide axis {r} of length {} into at least two cells",
                    hi - lo
                )));
            }
            counts.push(rounded as usize + 1);
            spacing.push((hi - lo) / rounded);
        }
        Ok(Self {
            lower,
            upper,
            spacing,
            counts,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of node `i` along `axis`; both end points are exact.
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi, n) = (self.lower[axis], self.upper[axis], self.counts[axis] - 1);
        if i == n {
            hi
        } else {
            lo + (hi - lo) * i as f64 / n as f64
        }
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        [node % self.counts[0], node / self.counts[0]]
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        idx[0] + self.counts[0] * idx[1]
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let idx = self.multi_index(node);
        (0..self.dim())
            .map(|r| self.axis_coord(r, idx[r]))
            .collect()
    }

    /// Neighbour of `node` one cell along `axis` in direction `step` (±1);
    /// stays put at the boundary, which is the constant extension.
    pub fn neighbour(&self, node: usize, axis: usize, step: isize) -> usize {
        let mut idx = self.multi_index(node);
        let j = idx[axis] as isize + step;
        idx[axis] = j.clamp(0, self.counts[axis] as isize - 1) as usize;
        self.flat_index(idx)
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo - SNAP && v <= hi + SNAP)
    }

    /// Multilinear weights of the cell enclosing `y`, with coordinates
    /// outside the box clamped onto it. Returns whether clamping happened.
    /// Zero weights are dropped.
    pub fn interpolation_weights(&self, y: &[f64], out: &mut Vec<(usize, f64)>) -> bool {
        out.clear();
        let m = self.dim();
        let mut clamped = false;
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for r in 0..m {
            let (lo, hi) = (self.lower[r], self.upper[r]);
            let mut x = y[r];
            if x < lo - SNAP * self.spacing[r] || x > hi + SNAP * self.spacing[r] {
                clamped = true;
            }
            x = x.clamp(lo, hi);
            let pos = (x - lo) / self.spacing[r];
            let mut i = pos.floor();
            let mut f = pos - i;
            if f > 1.0 - SNAP {
                i += 1.0;
                f = 0.0;
            } else if f < SNAP {
                f = 0.0;
            }
            let mut i = i as usize;
            let last = self.counts[r] - 1;
            if i >= last {
                i = last;
                f = 0.0;
            }
            base[r] = i;
            frac[r] = f;
        }
        let corners = 1usize << m;
        for c in 0..corners {
            let mut w = 1.0;
            let mut idx = [0usize; 2];
            for r in 0..m {
                let up = (c >> r) & 1 == 1;
                if up {
                    w *= frac[r];
                    idx[r] = base[r] + 1;
                } else {
                    w *= 1.0 - frac[r];
                    idx[r] = base[r];
                }
            }
            if w != 0.0 {
                out.push((self.flat_index(idx), w));
            }
        }
        clamped
    }

    /// Interpolates nodal values at `y` (clamped extension).
    pub fn interpolate(&self, values: &[f64], y: &[f64]) -> (f64, bool) {
        let mut w = Vec::with_capacity(4);
        let clamped = self.interpolation_weights(y, &mut w);
        (w.iter().map(|&(j, a)| a * values[j]).sum(), clamped)
    }

    /// Index of the node nearest to `y` (clamped).
    pub fn nearest(&self, y: &[f64]) -> usize {
        let mut idx = [0usize; 2];
        for r in 0..self.dim() {
            let pos = ((y[r] - self.lower[r]) / self.spacing[r]).round();
            idx[r] = pos.clamp(0.0, (self.counts[r] - 1) as f64) as usize;
        }
        self.flat_index(idx)
    }
}

/// Axis-aligned box of nodes used for residual and refinement checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::GridInfeasible(format!(
                "window [{lower:?}, {upper:?}] is empty"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// The grid's box shrunk by `band` on every side.
    pub fn shrink(grid: &SpatialGrid, band: f64) -> Result<Self> {
        Self::new(
            grid.lower().iter().map(|v| v + band).collect(),
            grid.upper().iter().map(|v| v - band).collect(),
        )
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo - 1e-12 && v <= hi + 1e-12)
    }

    pub fn nodes(&self, grid: &SpatialGrid) -> Vec<usize> {
        (0..grid.len())
            .filter(|&n| self.contains(&grid.coords(n)))
            .collect()
    }
}
