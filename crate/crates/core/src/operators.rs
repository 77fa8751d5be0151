//! Generators `𝒜^i`, `𝓛`, the δ-split `𝓛^δ`, the Hamiltonian and the
//! discrete Itô residual.

use std::fmt;
use std::sync::Arc;

use crate::control::{Coefficients, ControlGrid, ControlPoint, ControlledPath};
use crate::error::{Error, Result};
use crate::stats::CompensatedSum;

type ScalarFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Relative tolerance for the finite-difference check of declared derivatives.
pub const DERIVATIVE_TOL: f64 = 1e-5;

/// A smooth `φ(t, y)` with its time derivative, gradient and Hessian
/// (row-major `m × m`).
#[derive(Clone)]
pub struct TestFunction {
    m: usize,
    value: ScalarFn,
    dt: ScalarFn,
    grad: VectorFn,
    hess: VectorFn,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("m", &self.m).finish()
    }
}

impl TestFunction {
    /// Builds a test function and checks the declared derivatives against
    /// central differences at a fixed set of sample points.
    pub fn new<V, T, G, H>(m: usize, value: V, dt: T, grad: G, hess: H) -> Result<Self>
    where
        V: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        T: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        H: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if m == 0 {
            return Err(Error::InvalidArgument("test function needs m >= 1".into()));
        }
        let f = Self::unchecked(m, value, dt, grad, hess);
        f.check_derivatives()?;
        Ok(f)
    }

    fn unchecked<V, T, G, H>(m: usize, value: V, dt: T, grad: G, hess: H) -> Self
    where
        V: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        T: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        H: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            m,
            value: Arc::new(value),
            dt: Arc::new(dt),
            grad: Arc::new(grad),
            hess: Arc::new(hess),
        }
    }

    /// Sample points: `t ∈ {0, 0.37}` and each coordinate on a small fixed set.
    fn sample_points(&self) -> Vec<(f64, Vec<f64>)> {
        const TICKS: [f64; 4] = [-1.1, -0.3, 0.4, 1.3];
        let mut out = Vec::new();
        for &t in &[0.0, 0.37] {
            for code in 0..TICKS.len().pow(self.m as u32) {
                let mut c = code;
                let y = (0..self.m)
                    .map(|r| {
                        let v = TICKS[(c + r) % TICKS.len()];
                        c /= TICKS.len();
                        v
                    })
                    .collect();
                out.push((t, y));
            }
        }
        out
    }

    fn check_derivatives(&self) -> Result<()> {
        let m = self.m;
        let close = |fd: f64, declared: f64| {
            (fd - declared).abs() <= DERIVATIVE_TOL * declared.abs().max(1.0)
        };
        let mut g = vec![0.0; m];
        let mut h = vec![0.0; m * m];
        for (t, y) in self.sample_points() {
            let fd_t = {
                let e = 1e-5;
                (self.value(t + e, &y) - self.value(t - e, &y)) / (2.0 * e)
            };
            if !close(fd_t, self.time_derivative(t, &y)) {
                return Err(derivative_error("time derivative", t, &y));
            }
            self.gradient(t, &y, &mut g);
            self.hessian(t, &y, &mut h);
            let mut z = y.clone();
            for r in 0..m {
                let e = 1e-5 * y[r].abs().max(1.0);
                z[r] = y[r] + e;
                let up = self.value(t, &z);
                z[r] = y[r] - e;
                let down = self.value(t, &z);
                z[r] = y[r];
                if !close((up - down) / (2.0 * e), g[r]) {
                    return Err(derivative_error("gradient", t, &y));
                }
                for c in 0..m {
                    let e = 1e-3;
                    let mixed = if r == c {
                        z[r] = y[r] + e;
                        let up = self.value(t, &z);
                        z[r] = y[r] - e;
                        let down = self.value(t, &z);
                        z[r] = y[r];
                        (up - 2.0 * self.value(t, &y) + down) / (e * e)
                    } else {
                        let mut corner = |sr: f64, sc: f64| {
                            z[r] = y[r] + sr * e;
                            z[c] = y[c] + sc * e;
                            let v = self.value(t, &z);
                            z[r] = y[r];
                            z[c] = y[c];
                            v
                        };
                        (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                            + corner(-1.0, -1.0))
                            / (4.0 * e * e)
                    };
                    if !close(mixed, h[r * m + c]) {
                        return Err(derivative_error("Hessian", t, &y));
                    }
                }
            }
        }
        Ok(())
    }

    /// `φ ≡ c`.
    pub fn constant(m: usize, c: f64) -> Self {
        Self::unchecked(
            m,
            move |_, _| c,
            |_, _| 0.0,
            |_, _, g| g.fill(0.0),
            |_, _, h| h.fill(0.0),
        )
    }

    /// `φ = c + a t + p · y`.
    pub fn linear(c: f64, a: f64, p: Vec<f64>) -> Self {
        let m = p.len();
        let pv = p.clone();
        Self::unchecked(
            m,
            move |t, y| c + a * t + pv.iter().zip(y).map(|(p, y)| p * y).sum::<f64>(),
            move |_, _| a,
            move |_, _, g| g.copy_from_slice(&p),
            |_, _, h| h.fill(0.0),
        )
    }

    /// `φ = |y|²`.
    pub fn quadratic(m: usize) -> Self {
        Self::shifted_quadratic(m, 0.0, 0.0)
    }

    /// `φ = |y|² + a (t_end − t)`; with `a = 1` this is the exact value of
    /// the driftless unit-diffusion problem with cost `|y|²`.
    pub fn shifted_quadratic(m: usize, a: f64, t_end: f64) -> Self {
        Self::unchecked(
            m,
            move |t, y| y.iter().map(|v| v * v).sum::<f64>() + a * (t_end - t),
            move |_, _| -a,
            |_, y, g| {
                for (g, y) in g.iter_mut().zip(y) {
                    *g = 2.0 * y;
                }
            },
            move |_, _, h| {
                h.fill(0.0);
                for r in 0..m {
                    h[r * m + r] = 2.0;
                }
            },
        )
    }

    /// `φ = Σ y_r⁴`.
    pub fn quartic(m: usize) -> Self {
        Self::unchecked(
            m,
            |_, y| y.iter().map(|v| v.powi(4)).sum(),
            |_, _| 0.0,
            |_, y, g| {
                for (g, y) in g.iter_mut().zip(y) {
                    *g = 4.0 * y.powi(3);
                }
            },
            move |_, y, h| {
                h.fill(0.0);
                for r in 0..m {
                    h[r * m + r] = 12.0 * y[r] * y[r];
                }
            },
        )
    }

    /// `φ = Σ cos y_r`.
    pub fn cosine(m: usize) -> Self {
        Self::unchecked(
            m,
            |_, y| y.iter().map(|v| v.cos()).sum(),
            |_, _| 0.0,
            |_, y, g| {
                for (g, y) in g.iter_mut().zip(y) {
                    *g = -y.sin();
                }
            },
            move |_, y, h| {
                h.fill(0.0);
                for r in 0..m {
                    h[r * m + r] = -y[r].cos();
                }
            },
        )
    }

    /// `φ = Σ e^{y_r}`.
    pub fn exponential(m: usize) -> Self {
        Self::unchecked(
            m,
            |_, y| y.iter().map(|v| v.exp()).sum(),
            |_, _| 0.0,
            |_, y, g| {
                for (g, y) in g.iter_mut().zip(y) {
                    *g = y.exp();
                }
            },
            move |_, y, h| {
                h.fill(0.0);
                for r in 0..m {
                    h[r * m + r] = y[r].exp();
                }
            },
        )
    }

    /// Looks up a built-in family by name; `m` is the state dimension.
    pub fn builtin(name: &str, m: usize) -> Option<Self> {
        Some(match name {
            "quadratic" => Self::quadratic(m),
            "quartic" => Self::quartic(m),
            "cosine" => Self::cosine(m),
            "exponential" => Self::exponential(m),
            "time" => Self::linear(0.0, 1.0, vec![0.0; m]),
            "linear" => Self::linear(0.0, 0.0, vec![1.0; m]),
            _ => return None,
        })
    }

    pub const BUILTINS: [&'static str; 6] = [
        "quadratic",
        "quartic",
        "cosine",
        "exponential",
        "time",
        "linear",
    ];

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn value(&self, t: f64, y: &[f64]) -> f64 {
        (self.value)(t, y)
    }

    pub fn time_derivative(&self, t: f64, y: &[f64]) -> f64 {
        (self.dt)(t, y)
    }

    pub fn gradient(&self, t: f64, y: &[f64], out: &mut [f64]) {
        (self.grad)(t, y, out)
    }

    pub fn hessian(&self, t: f64, y: &[f64], out: &mut [f64]) {
        (self.hess)(t, y, out)
    }

    /// Re-runs the construction-time derivative check.
    pub fn validate(&self) -> Result<()> {
        self.check_derivatives()
    }
}

fn derivative_error(what: &str, t: f64, y: &[f64]) -> Error {
    Error::InvalidArgument(format!(
        "declared {what} disagrees with central differences at t = {t}, y = {y:?}"
    ))
}

/// Something that can be read off at `(t, y)`: a test function or a solved
/// value field. `clamped` reports whether `y` fell outside the stored domain.
pub trait ValueSource: Sync {
    fn value_at(&self, t: f64, y: &[f64]) -> Sampled;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampled {
    pub value: f64,
    pub clamped: bool,
}

impl ValueSource for TestFunction {
    fn value_at(&self, t: f64, y: &[f64]) -> Sampled {
        Sampled {
            value: self.value(t, y),
            clamped: false,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn shifted(y: &[f64], u: f64, column: &[f64]) -> Vec<f64> {
    y.iter().zip(column).map(|(y, s)| y + u * s).collect()
}

struct Local {
    grad: Vec<f64>,
    hess: Vec<f64>,
    sigma: Vec<f64>,
    drift: Vec<f64>,
}

impl Local {
    fn new(
        cp: &ControlPoint,
        phi: &TestFunction,
        t: f64,
        y: &[f64],
        coeffs: &dyn Coefficients,
    ) -> Self {
        let (m, d) = (coeffs.state_dim(), coeffs.noise_dim());
        let mut grad = vec![0.0; m];
        let mut hess = vec![0.0; m * m];
        let mut sigma = vec![0.0; m * d];
        let mut drift = vec![0.0; m];
        phi.gradient(t, y, &mut grad);
        phi.hessian(t, y, &mut hess);
        coeffs.diffusion(y, cp, &mut sigma);
        coeffs.drift(y, cp, &mut drift);
        Self {
            grad,
            hess,
            sigma,
            drift,
        }
    }

    fn column(&self, i: usize, m: usize, d: usize) -> Vec<f64> {
        (0..m).map(|r| self.sigma[r * d + i]).collect()
    }

    fn hessian_form(&self, s: &[f64]) -> f64 {
        let m = s.len();
        let mut acc = 0.0;
        for r in 0..m {
            for c in 0..m {
                acc += s[r] * self.hess[r * m + c] * s[c];
            }
        }
        acc
    }
}

/// `𝒜^i_{π,u}[φ](t, y)`.
pub fn gen_a(
    i: usize,
    cp: &ControlPoint,
    phi: &TestFunction,
    t: f64,
    y: &[f64],
    coeffs: &dyn Coefficients,
) -> f64 {
    let (m, d) = (coeffs.state_dim(), coeffs.noise_dim());
    assert!(i < d, "coordinate {i} out of range for d = {d}");
    let column = coeffs.sigma_column(y, cp, i);
    let u = cp.u[i];
    if u == 0.0 {
        let mut g = vec![0.0; m];
        phi.gradient(t, y, &mut g);
        dot(&g, &column)
    } else {
        (phi.value(t, &shifted(y, u, &column)) - phi.value(t, y)) / u
    }
}

/// Which branch of the generator a coordinate takes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    /// `u^i = 0`: gradient and Hessian terms.
    Diffusive,
    /// `0 < |u^i| ≤ δ`: difference quotients of `φ`.
    SmallJump,
    /// `|u^i| > δ` (or any `u^i ≠ 0` without δ): difference quotients,
    /// of `V` when a field is supplied.
    Jump,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Diffusive => "u=0 (diffusive)",
            Branch::SmallJump => "0<|u|<=delta (phi difference)",
            Branch::Jump => "u!=0 (jump difference)",
        })
    }
}

/// Per-coordinate contribution to `𝓛`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateTerm {
    pub coordinate: usize,
    pub u: f64,
    pub branch: Branch,
    pub gen_a: f64,
    pub term: f64,
}

/// `𝓛` split into its drift part and per-coordinate terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakdown {
    pub drift: f64,
    pub terms: Vec<CoordinateTerm>,
    pub total: f64,
    pub clamped: bool,
}

/// `𝓛_{π,u}[φ](t, y)` with the per-coordinate branches exposed.
pub fn explain_gen_l(
    cp: &ControlPoint,
    phi: &TestFunction,
    t: f64,
    y: &[f64],
    coeffs: &dyn Coefficients,
) -> Breakdown {
    breakdown(cp, phi, None, t, y, coeffs)
}

fn breakdown(
    cp: &ControlPoint,
    phi: &TestFunction,
    field: Option<(&dyn ValueSource, f64)>,
    t: f64,
    y: &[f64],
    coeffs: &dyn Coefficients,
) -> Breakdown {
    let (m, d) = (coeffs.state_dim(), coeffs.noise_dim());
    let local = Local::new(cp, phi, t, y, coeffs);
    let drift = dot(&local.grad, &local.drift);
    let mut total = CompensatedSum::new();
    total.add(drift);
    let mut clamped = false;
    let mut terms = Vec::with_capacity(d);
    for i in 0..d {
        let u = cp.u[i];
        let s = local.column(i, m, d);
        let first = dot(&local.grad, &s);
        let (branch, gen_a, term) = if u == 0.0 {
            (Branch::Diffusive, first, 0.5 * local.hessian_form(&s))
        } else {
            let z = shifted(y, u, &s);
            match field {
                Some((v, delta)) if u.abs() > delta => {
                    let a = v.value_at(t, &z);
                    let b = v.value_at(t, y);
                    clamped |= a.clamped || b.clamped;
                    let diff = a.value - b.value;
                    (Branch::Jump, diff / u, (diff - u * first) / (u * u))
                }
                _ => {
                    let diff = phi.value(t, &z) - phi.value(t, y);
                    let branch = if field.is_some() {
                        Branch::SmallJump
                    } else {
                        Branch::Jump
                    };
                    (branch, diff / u, (diff - u * first) / (u * u))
                }
            }
        };
        total.add(term);
        terms.push(CoordinateTerm {
            coordinate: i,
            u,
            branch,
            gen_a,
            term,
        });
    }
    Breakdown {
        drift,
        terms,
        total: total.value(),
        clamped,
    }
}

/// `𝓛_{π,u}[φ](t, y)`.
pub fn gen_l(
    cp: &ControlPoint,
    phi: &TestFunction,
    t: f64,
    y: &[f64],
    coeffs: &dyn Coefficients,
) -> f64 {
    breakdown(cp, phi, None, t, y, coeffs).total
}

/// `𝓛^δ_{π,u}[V, φ](t, y)`: coordinates with `|u^i| > δ` take the
/// undifferenced values from `v`, the gradient term always from `φ`.
pub fn gen_l_delta(
    cp: &ControlPoint,
    v: &dyn ValueSource,
    phi: &TestFunction,
    delta: f64,
    t: f64,
    y: &[f64],
    coeffs: &dyn Coefficients,
) -> Result<Sampled> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "δ must be positive, got {delta}"
        )));
    }
    let b = breakdown(cp, phi, Some((v, delta)), t, y, coeffs);
    Ok(Sampled {
        value: b.total,
        clamped: b.clamped,
    })
}

/// Minimum of `𝓛` over a control grid and the first index attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianMin {
    pub value: f64,
    pub index: usize,
}

fn first_argmin(values: impl Iterator<Item = f64>) -> HamiltonianMin {
    let mut best = HamiltonianMin {
        value: f64::INFINITY,
        index: 0,
    };
    for (k, v) in values.enumerate() {
        if v < best.value {
            best = HamiltonianMin { value: v, index: k };
        }
    }
    best
}

/// `inf_{(π,u)} 𝓛_{π,u}[φ](t, y)` over the grid.
pub fn hamiltonian(
    t: f64,
    y: &[f64],
    phi: &TestFunction,
    grid: &ControlGrid,
    coeffs: &dyn Coefficients,
) -> HamiltonianMin {
    first_argmin(grid.points().iter().map(|cp| gen_l(cp, phi, t, y, coeffs)))
}

/// As [`hamiltonian`] with `𝓛^δ[V, φ]` in place of `𝓛[φ]`.
pub fn hamiltonian_delta(
    t: f64,
    y: &[f64],
    v: &dyn ValueSource,
    phi: &TestFunction,
    delta: f64,
    grid: &ControlGrid,
    coeffs: &dyn Coefficients,
) -> Result<HamiltonianMin> {
    let values = grid
        .points()
        .iter()
        .map(|cp| gen_l_delta(cp, v, phi, delta, t, y, coeffs).map(|s| s.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(first_argmin(values.into_iter()))
}

/// `|φ(T, Y_T) − φ(t0, y0) − Σ_k [Σ_i 𝒜^i φ ΔX^i + (∂_t φ + 𝓛 φ) Δt]|`
/// with every term frozen at the left endpoint of its step.
pub fn ito_residual(path: &ControlledPath, phi: &TestFunction, coeffs: &dyn Coefficients) -> f64 {
    let n = path.n_steps();
    let d = path.x.dim();
    let times = path.x.times();
    let mut acc = CompensatedSum::new();
    acc.add(phi.value(times[n], path.terminal_state()));
    acc.add(-phi.value(times[0], path.state(0)));
    for k in 0..n {
        let (t, y) = (times[k], path.state(k));
        let dt = times[k + 1] - t;
        let cp = path.control_point(k);
        let b = breakdown(&cp, phi, None, t, y, coeffs);
        for term in &b.terms {
            acc.add(-term.gen_a * path.x.increment(k, term.coordinate));
        }
        acc.add(-(phi.time_derivative(t, y) + b.total) * dt);
    }
    debug_assert_eq!(d, coeffs.noise_dim());
    acc.value().abs()
}

#[cfg(test)]
mod tests;
