use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::control::{ControlGrid, ControlPoint, Policy};
use crate::error::{Error, Result};
use crate::harness::csv::{write_number, write_text, Table};
use crate::martingale::{ControlBounds, TimeGrid};
use crate::operators::{Sampled, ValueSource};

use super::grid::SpatialGrid;

/// Solver diagnostics carried with a field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMeta {
    pub problem: String,
    pub cost: String,
    /// `Δt · max stencil rate`; at most 1 for a monotone step.
    pub courant: f64,
    /// Rate from the closed-form bound `σ_max²/Δy² + d/δ₀² + |b|_max/Δy`.
    pub formula_rate: f64,
    /// Largest total off-centre weight over all stencils.
    pub stencil_rate: f64,
    /// Stencils that reached outside the box and used the clamped extension.
    pub clamped_stencils: usize,
}

/// `V` on every slice of a time grid and every node of a lattice, with the
/// argmin control used on each step.
#[derive(Debug)]
pub struct ValueField {
    pub(crate) space: SpatialGrid,
    pub(crate) time: TimeGrid,
    pub(crate) controls: ControlGrid,
    /// Slice-major: `values[k * nodes + n]`.
    pub(crate) values: Vec<f64>,
    /// Index into `controls`; slice `k < n` holds the argmin of the step from
    /// `k + 1` to `k`, the terminal slice repeats slice `n − 1`.
    pub(crate) policy: Vec<u32>,
    pub(crate) meta: FieldMeta,
    clamped_queries: AtomicU64,
}

impl Clone for ValueField {
    fn clone(&self) -> Self {
        Self {
            space: self.space.clone(),
            time: self.time,
            controls: self.controls.clone(),
            values: self.values.clone(),
            policy: self.policy.clone(),
            meta: self.meta.clone(),
            clamped_queries: AtomicU64::new(self.clamped_queries()),
        }
    }
}

impl PartialEq for ValueField {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space
            && self.time == other.time
            && self.controls == other.controls
            && self.values == other.values
            && self.policy == other.policy
            && self.meta == other.meta
    }
}

impl ValueField {
    pub(crate) fn from_parts(
        space: SpatialGrid,
        time: TimeGrid,
        controls: ControlGrid,
        values: Vec<f64>,
        policy: Vec<u32>,
        meta: FieldMeta,
    ) -> Self {
        Self {
            space,
            time,
            controls,
            values,
            policy,
            meta,
            clamped_queries: AtomicU64::new(0),
        }
    }

    pub fn space(&self) -> &SpatialGrid {
        &self.space
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn controls(&self) -> &ControlGrid {
        &self.controls
    }

    pub fn meta(&self) -> &FieldMeta {
        &self.meta
    }

    pub fn n_slices(&self) -> usize {
        self.time.n_steps() + 1
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.space.len();
        &self.values[k * n..(k + 1) * n]
    }

    /// Adds `delta` to one stored value, e.g. to probe the residual check.
    pub fn perturb(&mut self, k: usize, node: usize, delta: f64) {
        let n = self.space.len();
        self.values[k * n + node] += delta;
    }

    pub fn value(&self, k: usize, node: usize) -> f64 {
        self.values[k * self.space.len() + node]
    }

    pub fn policy_index(&self, k: usize, node: usize) -> usize {
        self.policy[k * self.space.len() + node] as usize
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Number of [`ValueField::interp`] queries that fell outside the box.
    pub fn clamped_queries(&self) -> u64 {
        self.clamped_queries.load(Ordering::Relaxed)
    }

    fn slice_position(&self, t: f64) -> (usize, f64) {
        let n = self.time.n_steps();
        let pos = ((t - self.time.t0()) / self.time.dt()).clamp(0.0, n as f64);
        let mut k = pos.floor();
        let mut f = pos - k;
        if f > 1.0 - 1e-9 {
            k += 1.0;
            f = 0.0;
        } else if f < 1e-9 {
            f = 0.0;
        }
        let k = (k as usize).min(n);
        (k, if k == n { 0.0 } else { f })
    }

    /// Multilinear in space, linear in time, constant beyond the box.
    pub fn interp(&self, t: f64, y: &[f64]) -> Sampled {
        let (k, f) = self.slice_position(t);
        let (mut v, clamped) = self.space.interpolate(self.slice(k), y);
        if f > 0.0 {
            let (w, _) = self.space.interpolate(self.slice(k + 1), y);
            v = (1.0 - f) * v + f * w;
        }
        if clamped {
            self.clamped_queries.fetch_add(1, Ordering::Relaxed);
        }
        Sampled { value: v, clamped }
    }

    /// Argmin control at the nearest slice and node.
    pub fn policy_at(&self, t: f64, y: &[f64]) -> &ControlPoint {
        let pos = ((t - self.time.t0()) / self.time.dt()).round();
        let k = pos.clamp(0.0, self.time.n_steps() as f64) as usize;
        self.controls
            .get(self.policy_index(k, self.space.nearest(y)))
    }

    /// Rows `t, y1..ym, V, pi, u1..ud` for every slice and node.
    pub fn to_table(&self) -> Table {
        let m = self.space.dim();
        let d = self.controls.noise_dim();
        let mut columns = vec!["t".to_string()];
        columns.extend((1..=m).map(|r| format!("y{r}")));
        columns.push("V".into());
        columns.push("pi".into());
        columns.extend((1..=d).map(|i| format!("u{i}")));
        let mut table = Table::new(columns);
        for k in 0..self.n_slices() {
            let t = self.time.time(k);
            for node in 0..self.space.len() {
                let cp = self.controls.get(self.policy_index(k, node));
                let mut row = vec![t];
                row.extend(self.space.coords(node));
                row.push(self.value(k, node));
                row.push(cp.pi);
                row.extend_from_slice(&cp.u);
                table.push_row(row).expect("row width matches header");
            }
        }
        table
    }

    fn header(&self) -> String {
        let mut h = String::new();
        let list = |v: &[f64]| {
            let mut s = String::new();
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                write_number(&mut s, *x);
            }
            s
        };
        let num = |x: f64| list(&[x]);
        let _ = writeln!(h, "# problem = {}", self.meta.problem);
        let _ = writeln!(h, "# cost = {}", self.meta.cost);
        let _ = writeln!(h, "# lower = {}", list(self.space.lower()));
        let _ = writeln!(h, "# upper = {}", list(self.space.upper()));
        let _ = writeln!(
            h,
            "# cells = {}",
            self.space
                .counts()
                .iter()
                .map(|c| (c - 1).to_string())
                .collect::<Vec<_>>()
                .join(", ")
        );
        let _ = writeln!(h, "# t0 = {}", num(self.time.t0()));
        let _ = writeln!(h, "# t_end = {}", num(self.time.t_end()));
        let _ = writeln!(h, "# n_steps = {}", self.time.n_steps());
        let b = self.controls.bounds();
        let _ = writeln!(h, "# delta0 = {}", num(b.delta0));
        let _ = writeln!(h, "# cap = {}", num(b.cap));
        for cp in self.controls.points() {
            let mut v = vec![cp.pi];
            v.extend_from_slice(&cp.u);
            let _ = writeln!(h, "# control = {}", list(&v));
        }
        let _ = writeln!(h, "# courant = {}", num(self.meta.courant));
        let _ = writeln!(h, "# formula_rate = {}", num(self.meta.formula_rate));
        let _ = writeln!(h, "# stencil_rate = {}", num(self.meta.stencil_rate));
        let _ = writeln!(h, "# clamped_stencils = {}", self.meta.clamped_stencils);
        h
    }

    /// Writes the metadata header followed by the node table.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = self.header();
        text.push_str(&self.to_table().to_csv_string());
        write_text(path, &text)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text).map_err(|reason| Error::Parse {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn parse_csv(text: &str) -> std::result::Result<Self, String> {
        let mut meta: Vec<(String, String)> = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| format!("malformed header line `{line}`"))?;
            meta.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| format!("header is missing `{key}`"))
        };
        let nums = |s: &str| -> std::result::Result<Vec<f64>, String> {
            s.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
                .collect()
        };
        let num = |key: &str| -> std::result::Result<f64, String> {
            nums(get(key)?)?
                .first()
                .copied()
                .ok_or_else(|| format!("empty `{key}`"))
        };
        let lower = nums(get("lower")?)?;
        let upper = nums(get("upper")?)?;
        let cells: Vec<usize> = get("cells")?
            .split(',')
            .map(|c| c.trim().parse::<usize>().map_err(|e| e.to_string()))
            .collect::<std::result::Result<_, _>>()?;
        let dy = (upper[0] - lower[0]) / cells[0] as f64;
        let space = SpatialGrid::new(lower, upper, dy).map_err(|e| e.to_string())?;
        let n_steps: usize = get("n_steps")?
            .parse()
            .map_err(|e| format!("n_steps: {e}"))?;
        let time = TimeGrid::new(num("t0")?, num("t_end")?, n_steps).map_err(|e| e.to_string())?;
        let bounds = ControlBounds::new(num("delta0")?, num("cap")?).map_err(|e| e.to_string())?;
        let mut points = Vec::new();
        for (_, v) in meta.iter().filter(|(k, _)| k == "control") {
            let v = nums(v)?;
            points.push(ControlPoint::new(v[0], v[1..].to_vec()));
        }
        let controls = ControlGrid::new(points, bounds).map_err(|e| e.to_string())?;
        let fmeta = FieldMeta {
            problem: get("problem")?.to_string(),
            cost: get("cost")?.to_string(),
            courant: num("courant")?,
            formula_rate: num("formula_rate")?,
            stencil_rate: num("stencil_rate")?,
            clamped_stencils: get("clamped_stencils")?
                .parse()
                .map_err(|e| format!("{e}"))?,
        };
        let table = Table::parse_csv(text)?;
        let m = space.dim();
        let d = controls.noise_dim();
        if table.columns().len() != m + d + 3 {
            return Err("column count does not match the header".into());
        }
        let expected = (n_steps + 1) * space.len();
        if table.rows().len() != expected {
            return Err(format!(
                "expected {expected} rows, found {}",
                table.rows().len()
            ));
        }
        let mut values = Vec::with_capacity(expected);
        let mut policy = Vec::with_capacity(expected);
        for row in table.rows() {
            values.push(row[1 + m]);
            let cp = ControlPoint::new(row[2 + m], row[3 + m..].to_vec());
            let idx = controls
                .index_of(&cp)
                .ok_or_else(|| format!("row control {cp:?} is not in the control grid"))?;
            policy.push(idx as u32);
        }
        Ok(Self::from_parts(
            space, time, controls, values, policy, fmeta,
        ))
    }
}

impl ValueSource for ValueField {
    fn value_at(&self, t: f64, y: &[f64]) -> Sampled {
        self.interp(t, y)
    }
}

/// Greedy feedback read off a solved field.
#[derive(Debug, Clone, Copy)]
pub struct FieldPolicy<'a> {
    field: &'a ValueField,
}

impl Policy for FieldPolicy<'_> {
    fn decide(&self, t: f64, y: &[f64]) -> &ControlPoint {
        self.field.policy_at(t, y)
    }
}

/// The field's stored argmin at the nearest slice and node.
pub fn extract_policy(field: &ValueField) -> FieldPolicy<'_> {
    FieldPolicy { field }
}
