use super::*;
use crate::control::Policy;
use crate::control::{AffineCoefficients, ControlGrid, CostSpec};
use crate::martingale::ControlBounds;

fn unit() -> AffineCoefficients {
    AffineCoefficients::diagonal(1, 1, 0.0, 1.0).unwrap()
}

fn grid(levels: &[f64]) -> ControlGrid {
    ControlGrid::from_levels(&[1.0], levels, 1, ControlBounds::new(0.25, 2.0).unwrap()).unwrap()
}

fn closed_form_domain(dy: f64) -> HjbDomain {
    HjbDomain::interval(-9.0, 9.0, dy, 0.0, 1.0)
}

fn standard_controls() -> ControlGrid {
    grid(&[0.0, 0.5, -0.5, 1.0, -1.0])
}

fn solve_with(
    domain: &HjbDomain,
    coeffs: &AffineCoefficients,
    cost: &CostSpec,
    controls: &ControlGrid,
) -> ValueField {
    let disc = build_grids(domain, coeffs, controls, Execution::default()).unwrap();
    solve(&disc, cost, "test", Execution::default()).unwrap()
}

fn exact(t: f64, y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>() + 1.0 - t
}

#[test]
fn cfl_step_for_unit_diffusion() {
    let dom = HjbDomain::interval(-4.0, 4.0, 0.05, 0.0, 1.0);
    let disc = build_grids(&dom, &unit(), &standard_controls(), Execution::default()).unwrap();
    // 1 / (1/0.05² + 1/0.25²) = 1/416, rounded up to 420 steps
    assert!((disc.formula_rate - 416.0).abs() < 1e-9);
    assert!(disc.time.dt() <= 1.0 / 416.0);
    assert_eq!(disc.time.n_steps(), 420);
    assert!(disc.courant() <= 1.0);
}

#[test]
fn cfl_step_for_pure_jumps() {
    let frozen = AffineCoefficients::diagonal(1, 1, 0.0, 0.0).unwrap();
    let dom = HjbDomain::interval(-1.0, 1.0, 0.1, 0.0, 1.0);
    let disc = build_grids(&dom, &frozen, &grid(&[0.5, -0.5]), Execution::default()).unwrap();
    assert!(disc.time.dt() <= 0.25 * 0.25);
    assert_eq!(disc.formula_rate, 16.0);
}

#[test]
fn cfl_floor_and_violations() {
    let dom = HjbDomain::interval(-1.0, 1.0, 1e-4, 0.0, 1.0);
    let err = build_grids(&dom, &unit(), &grid(&[0.0]), Execution::default()).unwrap_err();
    assert!(matches!(err, Error::GridInfeasible(_)), "{err}");
    let mut dom = HjbDomain::interval(-1.0, 1.0, 0.1, 0.0, 1.0);
    dom.dt = Some(0.05);
    let err = build_grids(&dom, &unit(), &grid(&[0.0]), Execution::default()).unwrap_err();
    assert!(matches!(err, Error::CflViolation { .. }), "{err}");
    dom.dt = Some(0.005);
    assert!(build_grids(&dom, &unit(), &grid(&[0.0]), Execution::default()).is_ok());
}

#[test]
fn window_must_fit_after_the_largest_shift() {
    let mut dom = HjbDomain::interval(-4.0, 4.0, 0.1, 0.0, 1.0);
    dom.window = Some(Window::new(vec![-3.5], vec![3.0]).unwrap());
    let err = build_grids(&dom, &unit(), &standard_controls(), Execution::default()).unwrap_err();
    assert!(matches!(err, Error::GridInfeasible(_)));
    dom.window = Some(Window::new(vec![-3.0], vec![3.0]).unwrap());
    assert!(build_grids(&dom, &unit(), &standard_controls(), Execution::default()).is_ok());
}

#[test]
fn constant_cost_gives_a_constant_field() {
    let f = solve_with(
        &closed_form_domain(0.1),
        &unit(),
        &CostSpec::constant(1, 2.5),
        &standard_controls(),
    );
    assert!(f.values.iter().all(|&v| v == 2.5));
    let r = residual(&f, &unit(), None, Execution::default()).unwrap();
    assert_eq!(r, 0.0);
}

#[test]
fn closed_form_reproduced() {
    let f = solve_with(
        &closed_form_domain(0.05),
        &unit(),
        &CostSpec::quadratic(1),
        &standard_controls(),
    );
    let w = Window::new(vec![-2.0], vec![2.0]).unwrap();
    assert!(checks::sup_error(&f, &w, &exact) <= 2e-2);
    let n = f.time().n_steps();
    for node in 0..f.space().len() {
        let y = f.space().coords(node);
        assert_eq!(f.value(n, node), y[0] * y[0]);
    }
    let (lo, hi) = f.min_max();
    assert!(lo >= 0.0 && hi <= 81.0);
}

#[test]
fn interpolation_examples() {
    let f = solve_with(
        &closed_form_domain(0.5),
        &unit(),
        &CostSpec::quadratic(1),
        &standard_controls(),
    );
    let k = 3;
    let t = f.time().time(k);
    let node = 5;
    let y = f.space().coords(node);
    assert_eq!(f.interp(t, &y).value, f.value(k, node));
    let n = f.time().n_steps();
    // terminal slice is y², linear interpolation between 1 and 1.5
    let mid = f.interp(1.0, &[1.25]).value;
    assert_eq!(mid, 0.5 * (1.0 + 2.25));
    assert_eq!(f.clamped_queries(), 0);
    let beyond = f.interp(1.0, &[12.0]);
    assert!(beyond.clamped);
    assert_eq!(beyond.value, f.value(n, f.space().len() - 1));
    assert_eq!(f.clamped_queries(), 1);
}

#[test]
fn residual_is_a_scheme_identity() {
    let f = solve_with(
        &closed_form_domain(0.1),
        &unit(),
        &CostSpec::cosine(1),
        &standard_controls(),
    );
    let r = residual(&f, &unit(), None, Execution::default()).unwrap();
    assert!(r <= 1e-10, "{r}");
    // on the closed form u = 0 is the strict argmin, so raising a node
    // raises its neighbours' minimum
    let mut f = solve_with(
        &closed_form_domain(0.1),
        &unit(),
        &CostSpec::quadratic(1),
        &standard_controls(),
    );
    let node = f.space().nearest(&[0.0]);
    let k = 10;
    f.perturb(k, node, 1e-3);
    let w = Window::new(vec![-0.15], vec![-0.05]).unwrap();
    let r = residual(&f, &unit(), Some(&w), Execution::default()).unwrap();
    assert!(r >= 1e-4, "{r}");
}

#[test]
fn greedy_policy_on_the_closed_form() {
    let controls = standard_controls();
    let f = solve_with(
        &closed_form_domain(0.1),
        &unit(),
        &CostSpec::quadratic(1),
        &controls,
    );
    let w = Window::new(vec![-4.0], vec![4.0]).unwrap();
    let policy = extract_policy(&f);
    for node in w.nodes(f.space()) {
        let y = f.space().coords(node);
        for t in [0.0, 0.5, 0.99] {
            assert_eq!(policy.decide(t, &y), controls.get(0));
        }
    }
    assert!(f.policy.iter().all(|&c| (c as usize) < controls.len()));
    let (excess, c) = policy_excess(&f, &unit(), 0.0, 0.1, Some(&w), Execution::default()).unwrap();
    assert_eq!(c, 0);
    assert!(excess.abs() < 1e-9);
    assert!(continuity_ratio(&f, &CostSpec::quadratic(1), 1.0) <= 3.0);
}

#[test]
fn quartic_prefers_no_jump_near_the_origin() {
    let controls = grid(&[0.5, -0.5, 0.0]);
    let f = solve_with(
        &HjbDomain::interval(-3.0, 3.0, 0.05, 0.0, 0.1),
        &unit(),
        &CostSpec::quartic(1),
        &controls,
    );
    let policy = extract_policy(&f);
    assert_eq!(policy.decide(0.1, &[0.0]).u, vec![0.0]);
    assert_eq!(policy.decide(0.099, &[0.0]).u, vec![0.0]);
}

#[test]
fn refinement_of_identical_or_constant_problems() {
    let controls = standard_controls();
    let dom = HjbDomain::interval(-3.0, 3.0, 0.1, 0.0, 0.5);
    let (same, _, _) = refine_check(
        &dom,
        1,
        &unit(),
        &CostSpec::cosine(1),
        &controls,
        None,
        Execution::default(),
    )
    .unwrap();
    assert_eq!(same.difference, 0.0);
    let (flat, _, _) = refine_check(
        &dom,
        2,
        &unit(),
        &CostSpec::constant(1, 1.0),
        &controls,
        Some(&|_, _| 1.0),
        Execution::default(),
    )
    .unwrap();
    assert_eq!(flat.difference, 0.0);
    assert_eq!(flat.fine_error, Some(0.0));
}

#[test]
fn monotone_in_the_terminal_data() {
    let controls = standard_controls();
    let dom = HjbDomain::interval(-4.0, 4.0, 0.1, 0.0, 0.5);
    let lower = solve_with(&dom, &unit(), &CostSpec::cosine(1), &controls);
    let bump = crate::operators::TestFunction::new(
        1,
        |_, y| y[0].cos() + 0.2 * (-y[0] * y[0]).exp(),
        |_, _| 0.0,
        |_, y, g| g[0] = -y[0].sin() - 0.4 * y[0] * (-y[0] * y[0]).exp(),
        |_, y, h| h[0] = -y[0].cos() + 0.2 * (4.0 * y[0] * y[0] - 2.0) * (-y[0] * y[0]).exp(),
    )
    .unwrap();
    let upper = solve_with(
        &dom,
        &unit(),
        &CostSpec::new("bump", bump, Some(1.2)),
        &controls,
    );
    assert!(lower.values.iter().zip(&upper.values).all(|(a, b)| a <= b));
    let (lo, hi) = lower.min_max();
    assert!(lo >= -1.0 && hi <= 1.0);
}

#[test]
fn more_controls_never_raise_the_value() {
    let dom = HjbDomain {
        dt: Some(1.0 / 120.0),
        ..HjbDomain::interval(-4.0, 4.0, 0.1, 0.0, 0.5)
    };
    let small = solve_with(&dom, &unit(), &CostSpec::cosine(1), &grid(&[0.0, 0.5]));
    let big = solve_with(&dom, &unit(), &CostSpec::cosine(1), &standard_controls());
    assert!(big.values.iter().zip(&small.values).all(|(b, s)| b <= s));
    assert!(big.values.iter().zip(&small.values).any(|(b, s)| b < s));
}

#[test]
fn parallel_and_sequential_solves_agree() {
    let dom = HjbDomain::interval(-4.0, 4.0, 0.1, 0.0, 0.5);
    let disc = build_grids(&dom, &unit(), &standard_controls(), Execution::Sequential).unwrap();
    let a = solve(&disc, &CostSpec::cosine(1), "p", Execution::Sequential).unwrap();
    let b = solve(&disc, &CostSpec::cosine(1), "p", Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let f = solve_with(
        &HjbDomain::interval(-2.0, 2.0, 0.25, 0.0, 0.2),
        &unit(),
        &CostSpec::cosine(1),
        &standard_controls(),
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.csv");
    f.write_csv(&path).unwrap();
    let back = ValueField::read_csv(&path).unwrap();
    assert_eq!(back, f);
    assert!(ValueField::parse_csv("# problem = x\nt,y1,V,pi,u1\n").is_err());
}

#[test]
fn delta_operator_on_the_solved_field() {
    use crate::operators::{gen_l, gen_l_delta, TestFunction};
    let f = solve_with(
        &closed_form_domain(0.05),
        &unit(),
        &CostSpec::quadratic(1),
        &standard_controls(),
    );
    let phi = TestFunction::shifted_quadratic(1, 1.0, 1.0);
    for cp in standard_controls().points() {
        for y in [-1.0, 0.3, 1.7] {
            let a = gen_l_delta(cp, &f, &phi, 0.2, 0.5, &[y], &unit()).unwrap();
            let b = gen_l(cp, &phi, 0.5, &[y], &unit());
            assert!(
                (a.value - b).abs() <= 1e-2,
                "{cp:?} y={y}: {} vs {b}",
                a.value
            );
        }
    }
}

#[test]
fn two_dimensional_closed_forms() {
    let bounds = ControlBounds::new(0.25, 2.0).unwrap();
    // m = 2, d = 1 along the diagonal: lattice aligned, V = |y|² + 2 (T − t)
    let diag =
        AffineCoefficients::new(2, 1, vec![0.0; 4], vec![0.0; 2], vec![1.0, 1.0], false).unwrap();
    let controls = ControlGrid::from_levels(&[1.0], &[0.0, 0.5], 1, bounds).unwrap();
    let dom = HjbDomain {
        lower: vec![-6.0, -6.0],
        upper: vec![6.0, 6.0],
        dy: 0.25,
        t0: 0.0,
        t_end: 0.5,
        window: None,
        dt: None,
    };
    let f = solve_with(&dom, &diag, &CostSpec::quadratic(2), &controls);
    let w = Window::new(vec![-1.5, -1.5], vec![1.5, 1.5]).unwrap();
    let err = checks::sup_error(&f, &w, &|t, y| y[0] * y[0] + y[1] * y[1] + 2.0 * (0.5 - t));
    // what remains is the boundary 4.5 units away
    assert!(err < 1e-7, "{err}");
    // m = 2, d = 2, off-lattice direction uses the wide stencil
    let skew = AffineCoefficients::new(
        2,
        2,
        vec![0.0; 4],
        vec![0.0; 2],
        vec![1.0, 0.0, 0.5, 1.0],
        false,
    )
    .unwrap();
    let controls = ControlGrid::from_levels(&[1.0], &[0.0, 0.5], 2, bounds).unwrap();
    let f = solve_with(&dom, &skew, &CostSpec::cosine(2), &controls);
    let (lo, hi) = f.min_max();
    assert!(lo >= -2.0 - 1e-12 && hi <= 2.0 + 1e-12);
    assert!(residual(&f, &skew, None, Execution::default()).unwrap() <= 1e-10);
}
