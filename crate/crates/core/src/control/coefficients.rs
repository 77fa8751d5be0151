use std::fmt;

use crate::error::{Error, Result};
use crate::operators::TestFunction;

use super::{ControlGrid, ControlPoint};

/// Drift `b: (y, π, u) → ℝᵐ` and diffusion `σ: (y, π, u) → ℝ^{m×d}`.
///
/// `diffusion` writes `σ` row-major, so column `i` (the loading of noise
/// coordinate `i`) is `out[r * d + i]` for `r in 0..m`.
pub trait Coefficients: Send + Sync {
    fn state_dim(&self) -> usize;

    fn noise_dim(&self) -> usize;

    fn drift(&self, y: &[f64], cp: &ControlPoint, out: &mut [f64]);

    fn diffusion(&self, y: &[f64], cp: &ControlPoint, out: &mut [f64]);

    /// Declared Lipschitz constant in `y`.
    fn lipschitz(&self) -> f64;

    /// Declared `K` with `|b|, |σ| ≤ K (1 + |y|)`.
    fn growth(&self) -> f64;

    fn sigma_column(&self, y: &[f64], cp: &ControlPoint, i: usize) -> Vec<f64> {
        let (m, d) = (self.state_dim(), self.noise_dim());
        let mut sigma = vec![0.0; m * d];
        self.diffusion(y, cp, &mut sigma);
        (0..m).map(|r| sigma[r * d + i]).collect()
    }
}

/// `b(y) = A y + c`, `σ = Σ` or `σ = π Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineCoefficients {
    m: usize,
    d: usize,
    drift_matrix: Vec<f64>,
    drift_offset: Vec<f64>,
    sigma: Vec<f64>,
    pi_scaled: bool,
}

impl AffineCoefficients {
    pub fn new(
        m: usize,
        d: usize,
        drift_matrix: Vec<f64>,
        drift_offset: Vec<f64>,
        sigma: Vec<f64>,
        pi_scaled: bool,
    ) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidArgument("m and d must be positive".into()));
        }
        if drift_matrix.len() != m * m || drift_offset.len() != m || sigma.len() != m * d {
            return Err(Error::InvalidArgument(format!(
                "affine coefficients need an {m}x{m} drift matrix, {m} offsets and an {m}x{d} σ"
            )));
        }
        let all = drift_matrix.iter().chain(&drift_offset).chain(&sigma);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Self {
            m,
            d,
            drift_matrix,
            drift_offset,
            sigma,
            pi_scaled,
        })
    }

    /// `b = rate · y`, `σ_{ri} = scale` when `r == i mod m`, else 0.
    pub fn diagonal(m: usize, d: usize, drift_rate: f64, sigma_scale: f64) -> Result<Self> {
        let mut a = vec![0.0; m * m];
        for r in 0..m {
            a[r * m + r] = drift_rate;
        }
        let mut sigma = vec![0.0; m * d];
        for i in 0..d {
            sigma[(i % m) * d + i] = sigma_scale;
        }
        Self::new(m, d, a, vec![0.0; m], sigma, false)
    }

    pub fn sigma_matrix(&self) -> &[f64] {
        &self.sigma
    }

    fn frobenius(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Coefficients for AffineCoefficients {
    fn state_dim(&self) -> usize {
        self.m
    }

    fn noise_dim(&self) -> usize {
        self.d
    }

    fn drift(&self, y: &[f64], _cp: &ControlPoint, out: &mut [f64]) {
        for r in 0..self.m {
            let row = &self.drift_matrix[r * self.m..(r + 1) * self.m];
            out[r] = self.drift_offset[r] + row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn diffusion(&self, _y: &[f64], cp: &ControlPoint, out: &mut [f64]) {
        let scale = if self.pi_scaled { cp.pi } else { 1.0 };
        for (o, s) in out.iter_mut().zip(&self.sigma) {
            *o = scale * s;
        }
    }

    fn lipschitz(&self) -> f64 {
        Self::frobenius(&self.drift_matrix)
    }

    fn growth(&self) -> f64 {
        // π enters linearly; callers check against the grid's π range
        let b = Self::frobenius(&self.drift_matrix).max(Self::frobenius(&self.drift_offset));
        b.max(Self::frobenius(&self.sigma))
    }
}

/// Samples `|b|, |σ| ≤ K (1 + |y|)` on a deterministic lattice of states in
/// `[-radius, radius]^m` for every control point.
pub fn check_growth(coeffs: &dyn Coefficients, grid: &ControlGrid, radius: f64) -> bool {
    let (m, d) = (coeffs.state_dim(), coeffs.noise_dim());
    let k = coeffs.growth();
    let ticks = [-1.0, -0.5, 0.0, 0.3, 1.0];
    let n = ticks.len().pow(m as u32);
    let mut b = vec![0.0; m];
    let mut s = vec![0.0; m * d];
    for code in 0..n {
        let mut c = code;
        let y: Vec<f64> = (0..m)
            .map(|_| {
                let v = ticks[c % ticks.len()] * radius;
                c /= ticks.len();
                v
            })
            .collect();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for cp in grid.points() {
            coeffs.drift(&y, cp, &mut b);
            coeffs.diffusion(&y, cp, &mut s);
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ns = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            let slack = k * cp.pi.abs().max(1.0) * (1.0 + ny) * (1.0 + 1e-12);
            if !(nb.is_finite() && ns.is_finite()) || nb > slack || ns > slack {
                return false;
            }
        }
    }
    true
}

/// Terminal cost `g`, with the derivatives the operators need.
#[derive(Clone)]
pub struct CostSpec {
    name: String,
    function: TestFunction,
    /// `‖g‖∞` when `g` is bounded.
    bound: Option<f64>,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostSpec")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .finish()
    }
}

impl CostSpec {
    pub fn new(name: &str, function: TestFunction, bound: Option<f64>) -> Self {
        Self {
            name: name.into(),
            function,
            bound,
        }
    }

    pub fn constant(m: usize, c: f64) -> Self {
        Self::new("constant", TestFunction::constant(m, c), Some(c.abs()))
    }

    /// `g(y) = |y|²`; unbounded, used for closed-form checks.
    pub fn quadratic(m: usize) -> Self {
        Self::new("quadratic", TestFunction::quadratic(m), None)
    }

    /// `g(y) = Σ cos y_r`.
    pub fn cosine(m: usize) -> Self {
        Self::new("cosine", TestFunction::cosine(m), Some(m as f64))
    }

    /// `g(y) = Σ y_r⁴`.
    pub fn quartic(m: usize) -> Self {
        Self::new("quartic", TestFunction::quartic(m), None)
    }

    /// `g(y) = p · y`.
    pub fn linear(p: Vec<f64>) -> Self {
        Self::new("linear", TestFunction::linear(0.0, 0.0, p), None)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.function.state_dim()
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.function.value(0.0, y)
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    /// `g` as a time-independent test function.
    pub fn as_test_function(&self) -> &TestFunction {
        &self.function
    }

    /// Checks `|g(y)| ≤ ‖g‖∞` at the given points. Unbounded costs pass.
    pub fn check_bound(&self, points: &[Vec<f64>]) -> bool {
        match self.bound {
            None => true,
            Some(b) => points
                .iter()
                .all(|y| self.eval(y).abs() <= b * (1.0 + 1e-12)),
        }
    }
}
