use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::control::{AffineCoefficients, ConstantPolicy, ControlledModel};
use crate::levy::LevyMeasure;
use crate::martingale::{ControlBounds, MartingaleSimulator, TimeGrid};
use crate::rng::PathSeed;

fn unit() -> AffineCoefficients {
    AffineCoefficients::diagonal(1, 1, 0.0, 1.0).unwrap()
}

fn cp(u: &[f64]) -> ControlPoint {
    ControlPoint::new(1.0, u.to_vec())
}

fn bounds() -> ControlBounds {
    ControlBounds::new(0.25, 2.0).unwrap()
}

#[test]
fn builtins_pass_the_derivative_check() {
    for name in TestFunction::BUILTINS {
        for m in [1, 2] {
            let f = TestFunction::builtin(name, m).unwrap();
            f.validate().unwrap_or_else(|e| panic!("{name} m={m}: {e}"));
        }
    }
    TestFunction::shifted_quadratic(2, 1.0, 3.0)
        .validate()
        .unwrap();
    assert!(TestFunction::builtin("nope", 1).is_none());
}

#[test]
fn wrong_derivatives_are_rejected() {
    let bad = TestFunction::new(
        1,
        |_, y| y[0].sin(),
        |_, _| 0.0,
        |_, y, g| g[0] = y[0].cos(),
        |_, y, h| h[0] = y[0].sin(), // sign error
    );
    assert!(bad.is_err());
    let bad_t = TestFunction::new(
        1,
        |t, _| t * t,
        |_, _| 0.0,
        |_, _, g| g[0] = 0.0,
        |_, _, h| h[0] = 0.0,
    );
    assert!(bad_t.is_err());
    let good = TestFunction::new(
        2,
        |_, y| y[0] * y[1],
        |_, _| 0.0,
        |_, y, g| {
            g[0] = y[1];
            g[1] = y[0];
        },
        |_, _, h| h.copy_from_slice(&[0.0, 1.0, 1.0, 0.0]),
    );
    assert!(good.is_ok());
}

#[test]
fn gen_a_branches() {
    let c = unit();
    let lin = TestFunction::linear(0.0, 0.0, vec![3.0]);
    for u in [0.0, 0.5, -1.0, 2.0] {
        assert!((gen_a(0, &cp(&[u]), &lin, 0.0, &[0.4], &c) - 3.0).abs() < 1e-12);
    }
    let q = TestFunction::quadratic(1);
    assert_eq!(gen_a(0, &cp(&[0.0]), &q, 0.0, &[0.7], &c), 1.4);
    assert_eq!(gen_a(0, &cp(&[1.0]), &q, 0.0, &[0.0], &c), 1.0);
}

#[test]
fn gen_l_examples() {
    let c = unit();
    let q = TestFunction::quadratic(1);
    assert_eq!(gen_l(&cp(&[0.0]), &q, 0.0, &[0.3], &c), 1.0);
    assert!((gen_l(&cp(&[0.7]), &q, 0.0, &[0.3], &c) - 1.0).abs() < 1e-14);
    let e = TestFunction::exponential(1);
    let oracle = std::f64::consts::E - 2.0;
    assert!((gen_l(&cp(&[1.0]), &e, 0.0, &[0.0], &c) - oracle).abs() < 1e-15);
}

#[test]
fn drift_enters_through_the_gradient() {
    let c = AffineCoefficients::new(1, 1, vec![-1.0], vec![0.5], vec![0.0], false).unwrap();
    let q = TestFunction::quadratic(1);
    // ∇φ·b = 2y(−y + 0.5)
    let y = 0.8;
    assert!((gen_l(&cp(&[0.0]), &q, 0.0, &[y], &c) - 2.0 * y * (-y + 0.5)).abs() < 1e-14);
}

#[test]
fn two_dimensional_quadratic_is_control_free() {
    let c = AffineCoefficients::new(
        2,
        2,
        vec![0.0; 4],
        vec![0.0; 2],
        vec![1.0, 0.5, -0.3, 2.0],
        false,
    )
    .unwrap();
    let q = TestFunction::quadratic(2);
    let base = gen_l(&cp(&[0.0, 0.0]), &q, 0.0, &[0.2, -0.4], &c);
    // ½ Σ_i 2|σ^i|² = |σ|_F²
    assert!((base - (1.0 + 0.25 + 0.09 + 4.0)).abs() < 1e-12);
    for u in [[0.5, 0.0], [0.0, -1.0], [2.0, 0.25]] {
        let v = gen_l(&cp(&u), &q, 0.0, &[0.2, -0.4], &c);
        assert!((v - base).abs() < 1e-12, "{u:?}: {v} vs {base}");
    }
}

#[test]
fn consistency_as_the_jump_shrinks() {
    let c = unit();
    let f = TestFunction::cosine(1);
    let y = [0.4];
    let at_zero = gen_l(&cp(&[0.0]), &f, 0.0, &y, &c);
    let mut prev = f64::INFINITY;
    for k in 1..5 {
        let eps = 10f64.powi(-k);
        for sign in [1.0, -1.0] {
            let gap = (gen_l(&cp(&[sign * eps]), &f, 0.0, &y, &c) - at_zero).abs();
            assert!(gap <= 0.2 * eps + 1e-6, "eps {eps}: {gap}");
            if sign > 0.0 {
                assert!(gap <= prev + 1e-9);
                prev = gap;
            }
        }
    }
}

#[test]
fn delta_operator_reduces_to_gen_l_on_phi() {
    let c = unit();
    let f = TestFunction::cosine(1);
    for u in [0.0, 0.5, -1.0] {
        for delta in [0.1, 0.75] {
            let d = gen_l_delta(&cp(&[u]), &f, &f, delta, 0.2, &[0.3], &c).unwrap();
            assert_eq!(d.value, gen_l(&cp(&[u]), &f, 0.2, &[0.3], &c));
            assert!(!d.clamped);
        }
    }
    assert!(gen_l_delta(&cp(&[0.5]), &f, &f, 0.0, 0.0, &[0.0], &c).is_err());
}

#[test]
fn delta_operator_switches_source_above_delta() {
    let c = unit();
    let phi = TestFunction::quadratic(1);
    let v = TestFunction::quartic(1);
    let y = [0.5];
    let u = 1.0;
    // |u| > δ: (V(y+u) − V(y) − u φ'(y)) / u²
    let big = gen_l_delta(&cp(&[u]), &v, &phi, 0.5, 0.0, &y, &c)
        .unwrap()
        .value;
    assert!((big - (1.5f64.powi(4) - 0.5f64.powi(4) - 1.0)).abs() < 1e-12);
    // |u| ≤ δ: φ only
    let small = gen_l_delta(&cp(&[u]), &v, &phi, 1.0, 0.0, &y, &c)
        .unwrap()
        .value;
    assert!((small - 1.0).abs() < 1e-12);
    let b = explain_gen_l(&cp(&[0.0]), &phi, 0.0, &y, &c);
    assert_eq!(b.terms[0].branch, Branch::Diffusive);
}

#[test]
fn hamiltonian_examples() {
    let c = unit();
    let grid = ControlGrid::from_levels(&[1.0], &[0.0, 0.5, -0.5], 1, bounds()).unwrap();
    let q = TestFunction::quadratic(1);
    for y in [-1.0, 0.0, 2.5] {
        let h = hamiltonian(0.0, &[y], &q, &grid, &c);
        assert!((h.value - 1.0).abs() < 1e-12);
        assert_eq!(h.index, 0);
    }
    let quartic = TestFunction::quartic(1);
    assert_eq!(gen_l(&cp(&[0.5]), &quartic, 0.0, &[0.0], &c), 0.25);
    assert_eq!(gen_l(&cp(&[-0.5]), &quartic, 0.0, &[0.0], &c), 0.25);
    let h = hamiltonian(0.0, &[0.0], &quartic, &grid, &c);
    assert_eq!(h.value, 0.0);
    assert_eq!(grid.get(h.index).u, vec![0.0]);
    let single = ControlGrid::from_levels(&[1.0], &[-0.5], 1, bounds()).unwrap();
    let h = hamiltonian(0.0, &[0.3], &quartic, &single, &c);
    assert_eq!(h.value, gen_l(single.get(0), &quartic, 0.0, &[0.3], &c));
    let hd = hamiltonian_delta(0.0, &[0.0], &quartic, &quartic, 0.1, &grid, &c).unwrap();
    assert_eq!(hd.index, 0);
}

fn controlled(coeffs: AffineCoefficients) -> ControlledModel {
    let sim = MartingaleSimulator::new(LevyMeasure::inverse_square_positive(), bounds()).unwrap();
    ControlledModel::new(sim, Arc::new(coeffs))
}

#[test]
fn ito_residual_vanishes_for_affine_functions() {
    let c = unit();
    let mdl = controlled(unit());
    let grid = TimeGrid::new(0.25, 1.5, 400).unwrap();
    let path = mdl
        .simulate_controlled(
            &[0.3],
            &ConstantPolicy(cp(&[0.5])),
            &grid,
            PathSeed::new(9, 0),
        )
        .unwrap();
    let time = TestFunction::linear(0.0, 1.0, vec![0.0]);
    assert!(ito_residual(&path, &time, &c) < 1e-12);
    let lin = TestFunction::linear(2.0, -0.7, vec![1.7]);
    assert!(ito_residual(&path, &lin, &c) < 1e-12);
}

#[test]
fn ito_residual_for_the_square_is_first_order() {
    let c = unit();
    let mdl = controlled(unit());
    let q = TestFunction::quadratic(1);
    // Two arrivals inside one step contribute O(1) instead of O(Δt); the step
    // is small enough that no such step occurs among these paths.
    let fine = TimeGrid::new(0.0, 1.0, 100_000).unwrap();
    let (mut coarse_sum, mut fine_sum) = (0.0, 0.0);
    for k in 0..100 {
        let p = mdl
            .simulate_controlled(
                &[0.0],
                &ConstantPolicy(cp(&[0.5])),
                &fine,
                PathSeed::new(31, k),
            )
            .unwrap();
        fine_sum += ito_residual(&p, &q, &c);
        coarse_sum += ito_residual(&p.coarsen(2).unwrap(), &q, &c);
    }
    let ratio = coarse_sum / fine_sum;
    assert!((1.5..=2.5).contains(&ratio), "{ratio}");
}

proptest! {
    #[test]
    fn quadratic_exactness(
        u in prop_oneof![-2.0..-0.25f64, 0.25..2.0f64],
        y in -3.0..3.0f64,
        s in -2.0..2.0f64,
    ) {
        let c = AffineCoefficients::new(1, 1, vec![0.0], vec![0.0], vec![s], false).unwrap();
        let f = TestFunction::new(
            1,
            |_, y| 1.5 * y[0] * y[0] - y[0] + 0.2,
            |_, _| 0.0,
            |_, y, g| g[0] = 3.0 * y[0] - 1.0,
            |_, _, h| h[0] = 3.0,
        ).unwrap();
        let jump = gen_l(&cp(&[u]), &f, 0.0, &[y], &c);
        let diff = gen_l(&cp(&[0.0]), &f, 0.0, &[y], &c);
        prop_assert!((jump - diff).abs() <= 1e-12 * (1.0 + diff.abs()) * (1.0 + y.abs() / u.abs()).powi(2));
    }

    #[test]
    fn hamiltonian_is_a_lower_bound(y in -3.0..3.0f64) {
        let c = unit();
        let grid = ControlGrid::from_levels(&[1.0], &[0.0, 0.5, -0.5, 1.0, -2.0], 1, bounds()).unwrap();
        let f = TestFunction::cosine(1);
        let h = hamiltonian(0.0, &[y], &f, &grid, &c);
        for p in grid.points() {
            prop_assert!(h.value <= gen_l(p, &f, 0.0, &[y], &c));
        }
        prop_assert_eq!(h.value, gen_l(grid.get(h.index), &f, 0.0, &[y], &c));
    }
}
