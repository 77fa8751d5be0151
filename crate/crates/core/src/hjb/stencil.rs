use crate::control::{Coefficients, ControlGrid};
use crate::exec::Execution;

use super::grid::SpatialGrid;

/// Off-centre weights of the discrete generator: for node `n` and control
/// `c`, `𝓛_c V(n) = Σ_j a_j (V_j − V_n)` with every `a_j ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencils {
    n_controls: usize,
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
    /// `Σ_j a_j` per (node, control): the rate at which mass leaves the node.
    rates: Vec<f64>,
    clamped: Vec<bool>,
    pub sigma_max: f64,
    pub b_max: f64,
}

struct NodeStencils {
    per_control: Vec<(Vec<(u32, f64)>, bool)>,
    sigma_max: f64,
    b_max: f64,
}

impl Stencils {
    pub fn build(
        space: &SpatialGrid,
        coeffs: &dyn Coefficients,
        controls: &ControlGrid,
        exec: Execution,
    ) -> Self {
        let per_node = exec.map_indexed(space.len(), |n| node_stencils(space, coeffs, controls, n));
        let n_controls = controls.len();
        let mut offsets = Vec::with_capacity(space.len() * n_controls + 1);
        let mut entries = Vec::new();
        let mut rates = Vec::with_capacity(space.len() * n_controls);
        let mut clamped = Vec::with_capacity(space.len() * n_controls);
        let (mut sigma_max, mut b_max) = (0.0f64, 0.0f64);
        offsets.push(0);
        for node in per_node {
            sigma_max = sigma_max.max(node.sigma_max);
            b_max = b_max.max(node.b_max);
            for (e, c) in node.per_control {
                rates.push(e.iter().map(|&(_, a)| a).sum());
                entries.extend(e);
                offsets.push(entries.len());
                clamped.push(c);
            }
        }
        Self {
            n_controls,
            offsets,
            entries,
            rates,
            clamped,
            sigma_max,
            b_max,
        }
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn entries(&self, node: usize, control: usize) -> &[(u32, f64)] {
        let k = node * self.n_controls + control;
        &self.entries[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn rate(&self, node: usize, control: usize) -> f64 {
        self.rates[node * self.n_controls + control]
    }

    pub fn max_rate(&self) -> (f64, usize) {
        let mut best = (0.0, 0);
        for (k, &r) in self.rates.iter().enumerate() {
            if r > best.0 {
                best = (r, k / self.n_controls);
            }
        }
        best
    }

    /// Number of (node, control) stencils that reached outside the box.
    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }

    pub fn is_clamped(&self, node: usize, control: usize) -> bool {
        self.clamped[node * self.n_controls + control]
    }

    /// `𝓛_c V` at `node`.
    #[inline]
    pub fn apply(&self, values: &[f64], node: usize, control: usize) -> f64 {
        let centre = values[node];
        let mut acc = 0.0;
        for &(j, a) in self.entries(node, control) {
            acc += a * (values[j as usize] - centre);
        }
        acc
    }

    /// Smallest `𝓛_c V` over controls and the first index attaining it.
    #[inline]
    pub fn minimise(&self, values: &[f64], node: usize) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for c in 0..self.n_controls {
            let v = self.apply(values, node, c);
            if v < best.0 {
                best = (v, c);
            }
        }
        best
    }
}

/// Step `k` for the central difference along `s`: the largest step that
/// lands on nodes when the direction is lattice-aligned, otherwise the wide
/// step `√Δy / |s|` whose interpolation error vanishes as `Δy → 0`.
fn diffusion_step(space: &SpatialGrid, s: &[f64]) -> f64 {
    let h = space.spacing();
    let k = s
        .iter()
        .zip(h)
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, h)| h / v.abs())
        .fold(f64::INFINITY, f64::min);
    let aligned = s.iter().zip(h).all(|(v, h)| {
        let steps = k * v.abs() / h;
        (steps - steps.round()).abs() < 1e-9
    });
    if aligned {
        k
    } else {
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        space.min_spacing().sqrt() / norm
    }
}

fn node_stencils(
    space: &SpatialGrid,
    coeffs: &dyn Coefficients,
    controls: &ControlGrid,
    node: usize,
) -> NodeStencils {
    let m = space.dim();
    let d = coeffs.noise_dim();
    let y = space.coords(node);
    let mut sigma = vec![0.0; m * d];
    let mut drift = vec![0.0; m];
    let mut weights = Vec::with_capacity(4);
    let mut point = vec![0.0; m];
    let (mut sigma_max, mut b_max) = (0.0f64, 0.0f64);
    let mut per_control = Vec::with_capacity(controls.len());
    for cp in controls.points() {
        coeffs.drift(&y, cp, &mut drift);
        coeffs.diffusion(&y, cp, &mut sigma);
        b_max = b_max.max(drift.iter().map(|v| v.abs()).sum());
        let mut raw: Vec<(usize, f64)> = Vec::new();
        let mut clamped = false;
        let mut push_point = |p: &[f64], a: f64, raw: &mut Vec<(usize, f64)>| {
            clamped |= space.interpolation_weights(p, &mut weights);
            raw.extend(weights.iter().map(|&(j, w)| (j, a * w)));
        };
        for i in 0..d {
            let s: Vec<f64> = (0..m).map(|r| sigma[r * d + i]).collect();
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            sigma_max = sigma_max.max(norm);
            let u = cp.u[i];
            if u == 0.0 {
                if norm == 0.0 {
                    continue;
                }
                let k = diffusion_step(space, &s);
                let a = 0.5 / (k * k);
                for sign in [1.0, -1.0] {
                    for r in 0..m {
                        point[r] = y[r] + sign * k * s[r];
                    }
                    push_point(&point, a, &mut raw);
                }
            } else {
                for r in 0..m {
                    point[r] = y[r] + u * s[r];
                    drift[r] -= s[r] / u;
                }
                push_point(&point, 1.0 / (u * u), &mut raw);
            }
        }
        for r in 0..m {
            let w = drift[r];
            if w != 0.0 {
                let j = space.neighbour(node, r, if w > 0.0 { 1 } else { -1 });
                raw.push((j, w.abs() / space.spacing()[r]));
            }
        }
        raw.retain(|&(j, a)| j != node && a != 0.0);
        raw.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(raw.len());
        for (j, a) in raw {
            match merged.last_mut() {
                Some(last) if last.0 as usize == j => last.1 += a,
                _ => merged.push((j as u32, a)),
            }
        }
        per_control.push((merged, clamped));
    }
    NodeStencils {
        per_control,
        sigma_max,
        b_max,
    }
}
