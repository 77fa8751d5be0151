use super::counterexample::{counterexample_paths, FirstPassage};
use super::*;
use crate::stats::Estimate;

fn sim() -> MartingaleSimulator {
    MartingaleSimulator::new(
        LevyMeasure::inverse_square_positive(),
        ControlBounds::new(0.25, 2.0).unwrap(),
    )
    .unwrap()
}

fn unit_grid(n: usize) -> TimeGrid {
    TimeGrid::new(0.0, 1.0, n).unwrap()
}

#[test]
fn time_grid_validation() {
    assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
    assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    let g = TimeGrid::with_step(0.0, 1.0, 1e-3).unwrap();
    assert_eq!(g.n_steps(), 1000);
    assert_eq!(g.time(1000), 1.0);
    let g = TimeGrid::with_step(0.0, 1.0, 0.3).unwrap();
    assert_eq!(g.n_steps(), 4);
}

#[test]
fn zero_control_is_brownian() {
    let s = sim();
    let rule = ConstantRule::new(vec![0.0]);
    let grid = unit_grid(100);
    let out = s
        .map_paths(&rule, &grid, 11, 10_000, Execution::default(), |p| {
            let jumps: u32 = (0..p.n_steps()).map(|k| p.jump_count(k, 0)).sum();
            (p.terminal()[0], jumps)
        })
        .unwrap();
    assert!(out.iter().all(|&(_, j)| j == 0));
    let xs: Vec<f64> = out.iter().map(|o| o.0).collect();
    let e = Estimate::from_samples(&xs);
    assert!(e.within(0.0, 3.0), "{e:?}");
}

#[test]
fn constant_control_is_scaled_compensated_poisson() {
    // X = α (N_{t/α²} − t/α²) with α = 0.5
    let s = sim();
    let rule = ConstantRule::new(vec![0.5]);
    let grid = unit_grid(1000);
    let counts = s
        .map_paths(&rule, &grid, 5, 4000, Execution::default(), |p| {
            let n: u32 = (0..p.n_steps()).map(|k| p.jump_count(k, 0)).sum();
            let implied = p.terminal()[0] / 0.5 + 4.0;
            assert!((implied - n as f64).abs() < 1e-9);
            for k in 0..p.n_steps() {
                if let Some(mark) = p.jump_mark(k, 0) {
                    assert_eq!(mark.size.to_bits(), p.control(k)[0].to_bits());
                    assert_eq!(mark.size, 0.5);
                }
            }
            n as f64
        })
        .unwrap();
    let e = Estimate::from_samples(&counts);
    assert!(e.within(4.0, 3.0), "{e:?}");
}

#[test]
fn feedback_rule_keeps_normality() {
    let s = sim();
    let rule = NegativeSideRule { level: 0.5, dim: 1 };
    let grid = unit_grid(200);
    let sq = s
        .map_paths(&rule, &grid, 99, 10_000, Execution::default(), |p| {
            p.terminal()[0].powi(2)
        })
        .unwrap();
    let e = Estimate::from_samples(&sq);
    assert!(e.within(1.0, 3.0), "{e:?}");
}

#[test]
fn increments_follow_decomposition() {
    let s = sim();
    let rule = NegativeSideRule { level: 0.5, dim: 1 };
    let dt = 1.0 / 500.0;
    let (mut gaussian, mut jumping) = (0, 0);
    for seed in 0..10 {
        let p = s
            .simulate_path(&rule, &unit_grid(500), PathSeed::new(3, seed))
            .unwrap();
        for k in 0..p.n_steps() {
            let u = p.control(k)[0];
            let dx = p.increment(k, 0);
            if u == 0.0 {
                assert_eq!(p.jump_count(k, 0), 0);
                gaussian += 1;
            } else {
                let expected = p.jump_count(k, 0) as f64 * u - u * 4.0 * dt;
                assert!((dx - expected).abs() < 1e-12);
                jumping += 1;
            }
        }
    }
    assert!(gaussian > 0 && jumping > 0);
}

#[test]
fn predictability_uses_left_endpoint() {
    let s = sim();
    let rule = NegativeSideRule { level: 0.5, dim: 1 };
    let p = s
        .simulate_path(&rule, &unit_grid(300), PathSeed::new(8, 2))
        .unwrap();
    for k in 0..p.n_steps() {
        let expected = if p.value(k)[0] < 0.0 { 0.5 } else { 0.0 };
        assert_eq!(p.control(k)[0], expected);
    }
}

#[test]
fn out_of_range_control_is_rejected() {
    let s = sim();
    let rule = ConstantRule::new(vec![0.1]);
    let err = s
        .simulate_path(&rule, &unit_grid(10), PathSeed::new(1, 0))
        .unwrap_err();
    assert!(matches!(err, Error::ControlRange { step: 0, .. }));
    let rule = ConstantRule::new(vec![3.0]);
    assert!(s
        .simulate_path(&rule, &unit_grid(10), PathSeed::new(1, 0))
        .is_err());
}

#[test]
fn realized_qv_small_cases() {
    let flat = MartingalePath::from_parts(
        1,
        vec![0.0, 0.5, 1.0],
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0],
        vec![0, 0],
    );
    assert_eq!(realized_qv(&flat, 0), vec![0.0, 0.0, 0.0]);
    let one = MartingalePath::from_parts(1, vec![0.0, 1.0], vec![0.0, 0.3], vec![0.0], vec![0]);
    assert_eq!(realized_qv(&one, 0), vec![0.0, 0.3 * 0.3]);
}

#[test]
fn cross_variation_needs_distinct_coordinates() {
    let p = sim()
        .simulate_path(
            &ConstantRule::new(vec![0.0, 0.0]),
            &unit_grid(10),
            PathSeed::new(1, 1),
        )
        .unwrap();
    assert!(cross_variation(&p, 0, 0).is_err());
    assert!(cross_variation(&p, 0, 2).is_err());
    assert_eq!(cross_variation(&p, 0, 1).unwrap().len(), 11);
}

#[test]
fn independent_gaussian_coordinates_are_orthogonal() {
    let s = sim();
    let rule = ConstantRule::new(vec![0.0, 0.0]);
    let v = s
        .map_paths(
            &rule,
            &unit_grid(100),
            21,
            10_000,
            Execution::default(),
            |p| *cross_variation(p, 0, 1).unwrap().last().unwrap(),
        )
        .unwrap();
    let e = Estimate::from_samples(&v);
    assert!(e.within(0.0, 3.0), "{e:?}");
}

#[test]
fn residual_of_trivial_path_is_zero() {
    assert_eq!(
        structure_residual(&MartingalePath::empty(2, 0.0)),
        vec![0.0, 0.0]
    );
}

#[test]
fn paths_are_deterministic_across_execution_modes() {
    let s = sim();
    let rule = NegativeSideRule { level: 0.5, dim: 1 };
    let grid = unit_grid(50);
    let a = s
        .map_paths(&rule, &grid, 4, 64, Execution::Sequential, |p| p.clone())
        .unwrap();
    let b = s
        .map_paths(&rule, &grid, 4, 64, Execution::Parallel, |p| p.clone())
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn coordinate_streams_do_not_alias() {
    // adding a second coordinate leaves the first one's draws untouched
    let s = sim();
    let grid = unit_grid(40);
    let seed = PathSeed::new(17, 5);
    let one = s
        .simulate_path(&ConstantRule::new(vec![0.0]), &grid, seed)
        .unwrap();
    let two = s
        .simulate_path(&ConstantRule::new(vec![0.0, 0.5]), &grid, seed)
        .unwrap();
    for k in 0..=40 {
        assert_eq!(one.value(k)[0], two.value(k)[0]);
    }
}

#[test]
fn exact_clock_mode_matches_jump_rate() {
    let s = sim();
    let grid = unit_grid(100);
    let n: Vec<f64> = (0..4000)
        .map(|k| {
            let p = s
                .simulate_constant_exact(&[0.5], &grid, PathSeed::new(2, k))
                .unwrap();
            (0..100).map(|j| p.jump_count(j, 0)).sum::<u32>() as f64
        })
        .collect();
    let e = Estimate::from_samples(&n);
    assert!(e.within(4.0, 3.0), "{e:?}");
}

#[test]
fn coarsening_keeps_shared_instants() {
    let s = sim();
    let p = s
        .simulate_path(
            &ConstantRule::new(vec![0.5]),
            &unit_grid(100),
            PathSeed::new(9, 9),
        )
        .unwrap();
    let c = p.coarsen(4).unwrap();
    assert_eq!(c.n_steps(), 25);
    for k in 0..=25 {
        assert_eq!(c.value(k), p.value(4 * k));
    }
    let fine: u32 = (0..100).map(|k| p.jump_count(k, 0)).sum();
    let coarse: u32 = (0..25).map(|k| c.jump_count(k, 0)).sum();
    assert_eq!(fine, coarse);
    assert!(p.coarsen(3).is_err());
}

#[test]
fn path_table_layout() {
    let p = sim()
        .simulate_path(
            &ConstantRule::new(vec![0.0, 0.5]),
            &unit_grid(3),
            PathSeed::new(1, 0),
        )
        .unwrap();
    let t = p.to_table();
    assert_eq!(
        t.columns(),
        &["time", "X1", "X2", "u1", "u2", "jump1", "jump2"]
    );
    assert_eq!(t.rows().len(), 4);
}

#[test]
fn counterexample_shares_randomness() {
    let grid = TimeGrid::new(0.0, 30.0, 3000).unwrap();
    for k in 0..50 {
        let pair = counterexample_paths(&grid, PathSeed::new(77, k)).unwrap();
        let switch = pair.switch_step.unwrap_or(grid.n_steps());
        for j in 0..=switch {
            assert_eq!(pair.x.value(j)[0], -pair.x_prime.value(j)[0]);
        }
        for j in 0..grid.n_steps() {
            assert_eq!(pair.x.jump_count(j, 0), pair.x_prime.jump_count(j, 0));
            if j < switch {
                assert_eq!(pair.x.jump_count(j, 0), 0);
            }
        }
        assert!(!pair.x_passage.by_jump());
        if let (Some(s), FirstPassage::Continuous { step }) = (pair.switch_step, pair.x_passage) {
            assert_eq!(s, step);
        }
    }
}
