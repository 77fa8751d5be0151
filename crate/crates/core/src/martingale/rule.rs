/// The strictly-past part of a path: instants `t_0..=t_k` and the values
/// observed there. At step `k` the latest value plays the role of `X_{t−}`.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    times: &'a [f64],
    values: &'a [f64],
    dim: usize,
}

impl<'a> History<'a> {
    pub fn new(times: &'a [f64], values: &'a [f64], dim: usize) -> Self {
        debug_assert_eq!(times.len() * dim, values.len());
        Self { times, values, dim }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn value(&self, k: usize) -> &'a [f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// The left-limit `X_{t−}` at the current step.
    pub fn current(&self) -> &'a [f64] {
        self.value(self.len() - 1)
    }
}

/// A predictable jump-size rule: it only sees the history up to the left
/// endpoint of the step being simulated.
pub trait ControlRule: Sync {
    fn dim(&self) -> usize;

    fn control(&self, t: f64, history: &History<'_>, out: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantRule {
    u: Vec<f64>,
}

impl ConstantRule {
    pub fn new(u: Vec<f64>) -> Self {
        Self { u }
    }
}

impl ControlRule for ConstantRule {
    fn dim(&self) -> usize {
        self.u.len()
    }

    fn control(&self, _t: f64, _history: &History<'_>, out: &mut [f64]) {
        out.copy_from_slice(&self.u);
    }
}

/// `uⁱ = level · 1{Xⁱ_{t−} < 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeSideRule {
    pub level: f64,
    pub dim: usize,
}

impl ControlRule for NegativeSideRule {
    fn dim(&self) -> usize {
        self.dim
    }

    fn control(&self, _t: f64, history: &History<'_>, out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(history.current()) {
            *o = if x < 0.0 { self.level } else { 0.0 };
        }
    }
}

/// Markov feedback `(t, X_{t−}) ↦ u` from a closure.
pub struct FeedbackRule<F> {
    dim: usize,
    f: F,
}

impl<F> FeedbackRule<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> ControlRule for FeedbackRule<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn control(&self, t: f64, history: &History<'_>, out: &mut [f64]) {
        (self.f)(t, history.current(), out)
    }
}
