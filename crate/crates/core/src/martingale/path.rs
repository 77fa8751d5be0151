use crate::error::{Error, Result};
use crate::harness::csv::Table;
use crate::stats::CompensatedSum;

/// A simulated trajectory of `X`.
///
/// `values` holds `n + 1` states, `controls` and `jump_counts` hold one entry
/// per step and coordinate; all are flat row-major buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePath {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    controls: Vec<f64>,
    jump_counts: Vec<u32>,
}

/// A recorded jump: `count` jumps of size `size` within one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpMark {
    pub count: u32,
    pub size: f64,
}

impl MartingalePath {
    pub(crate) fn from_parts(
        dim: usize,
        times: Vec<f64>,
        values: Vec<f64>,
        controls: Vec<f64>,
        jump_counts: Vec<u32>,
    ) -> Self {
        let n = times.len().saturating_sub(1);
        debug_assert_eq!(values.len(), (n + 1) * dim);
        debug_assert_eq!(controls.len(), n * dim);
        debug_assert_eq!(jump_counts.len(), n * dim);
        Self {
            dim,
            times,
            values,
            controls,
            jump_counts,
        }
    }

    /// A path that never leaves the origin, one instant only.
    pub fn empty(dim: usize, t0: f64) -> Self {
        Self::from_parts(dim, vec![t0], vec![0.0; dim], Vec::new(), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.n_steps())
    }

    /// Jump sizes used on step `k` (left endpoint).
    pub fn control(&self, k: usize) -> &[f64] {
        &self.controls[k * self.dim..(k + 1) * self.dim]
    }

    pub fn increment(&self, k: usize, i: usize) -> f64 {
        self.values[(k + 1) * self.dim + i] - self.values[k * self.dim + i]
    }

    pub fn jump_count(&self, k: usize, i: usize) -> u32 {
        self.jump_counts[k * self.dim + i]
    }

    /// `Some` when coordinate `i` jumped on step `k`; the size is the control
    /// value in force on that step.
    pub fn jump_mark(&self, k: usize, i: usize) -> Option<JumpMark> {
        let count = self.jump_count(k, i);
        (count > 0).then(|| JumpMark {
            count,
            size: self.controls[k * self.dim + i],
        })
    }

    /// Path observed every `factor` steps.
    ///
    /// Jump counts are summed and the control of the first fine step is kept.
    /// For constant controls the result has exactly the law of a path
    /// simulated on the coarse grid, which makes it a coupled coarse version.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let n = self.n_steps();
        if factor == 0 || !n.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {n} steps by {factor}"
            )));
        }
        let d = self.dim;
        let nc = n / factor;
        let times = (0..=nc).map(|k| self.times[k * factor]).collect();
        let values = (0..=nc)
            .flat_map(|k| self.value(k * factor).to_vec())
            .collect();
        let controls = (0..nc)
            .flat_map(|k| self.control(k * factor).to_vec())
            .collect();
        let mut counts = vec![0u32; nc * d];
        for k in 0..n {
            for i in 0..d {
                counts[(k / factor) * d + i] += self.jump_count(k, i);
            }
        }
        Ok(Self::from_parts(d, times, values, controls, counts))
    }

    /// Columns `time, X1..Xd, u1..ud, jump1..jumpd`; the last row repeats the
    /// final control and carries no jump.
    pub fn to_table(&self) -> Table {
        let d = self.dim;
        let mut columns = vec!["time".to_string()];
        columns.extend((1..=d).map(|i| format!("X{i}")));
        columns.extend((1..=d).map(|i| format!("u{i}")));
        columns.extend((1..=d).map(|i| format!("jump{i}")));
        let mut table = Table::new(columns);
        let n = self.n_steps();
        for k in 0..=n {
            let mut row = vec![self.times[k]];
            row.extend_from_slice(self.value(k));
            if k < n {
                row.extend_from_slice(self.control(k));
                row.extend((0..d).map(|i| self.jump_count(k, i) as f64));
            } else if n > 0 {
                row.extend_from_slice(self.control(n - 1));
                row.extend(std::iter::repeat_n(0.0, d));
            } else {
                row.extend(std::iter::repeat_n(0.0, 2 * d));
            }
            table.push_row(row).expect("row width matches header");
        }
        table
    }
}

/// Running sum of squared increments of coordinate `i`, starting at 0.
pub fn realized_qv(path: &MartingalePath, i: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.n_steps() + 1);
    let mut acc = CompensatedSum::new();
    out.push(0.0);
    for k in 0..path.n_steps() {
        let dx = path.increment(k, i);
        acc.add(dx * dx);
        out.push(acc.value());
    }
    out
}

/// Running sum of products of increments of coordinates `i ≠ j`.
pub fn cross_variation(path: &MartingalePath, i: usize, j: usize) -> Result<Vec<f64>> {
    if i == j {
        return Err(Error::InvalidArgument(
            "cross variation needs two distinct coordinates".into(),
        ));
    }
    if i >= path.dim() || j >= path.dim() {
        return Err(Error::InvalidArgument(format!(
            "coordinates ({i}, {j}) out of range for dimension {}",
            path.dim()
        )));
    }
    let mut out = Vec::with_capacity(path.n_steps() + 1);
    let mut acc = CompensatedSum::new();
    out.push(0.0);
    for k in 0..path.n_steps() {
        acc.add(path.increment(k, i) * path.increment(k, j));
        out.push(acc.value());
    }
    Ok(out)
}

/// Per coordinate, `sup_k |[X]_{t_k} − (t_k − t_0) − Σ u ΔX|` over the grid.
pub fn structure_residual(path: &MartingalePath) -> Vec<f64> {
    (0..path.dim())
        .map(|i| {
            let mut acc = CompensatedSum::new();
            let mut sup = 0.0f64;
            for k in 0..path.n_steps() {
                let dx = path.increment(k, i);
                let dt = path.times[k + 1] - path.times[k];
                acc.add(dx * dx);
                acc.add(-dt);
                acc.add(-path.controls[k * path.dim + i] * dx);
                sup = sup.max(acc.value().abs());
            }
            sup
        })
        .collect()
}
