use super::*;
use proptest::prelude::*;

/// Independent oracle: composite Simpson in log-space, `x = e^s`.
fn log_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let (la, lb) = (a.ln(), b.ln());
    let h = (lb - la) / n as f64;
    let g = |s: f64| {
        let x = s.exp();
        f(x) * x
    };
    let mut acc = g(la) + g(lb);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(la + k as f64 * h);
    }
    acc * h / 3.0
}

fn inv_sq_by_quadrature() -> LevyMeasure {
    LevyMeasure::from_density(
        "inv_sq_quad",
        |x| if x > 0.0 { 1.0 / (x * x) } else { 0.0 },
        vec![(0.0, f64::INFINITY)],
    )
    .unwrap()
}

#[test]
fn tail_mass_closed_form_matches_oracle() {
    let nu = LevyMeasure::inverse_square_positive();
    let oracle = log_simpson(|x| 1.0 / (x * x), 0.5, 1.0, 2000);
    assert!((oracle - 1.0).abs() < 1e-12);
    assert!((nu.tail_mass(0.5, 1.0).unwrap() - oracle).abs() < 1e-12);
    assert_eq!(nu.tail_mass(1.0, f64::INFINITY).unwrap(), 1.0);
}

#[test]
fn tail_mass_quadrature_matches_closed_form() {
    let nu = inv_sq_by_quadrature();
    assert!(!nu.has_closed_form_tail());
    let q = nu.tail_mass(0.5, 1.0).unwrap();
    assert!((q - 1.0).abs() < 1e-9, "{q}");
    let inf = nu.tail_mass(1.0, f64::INFINITY).unwrap();
    assert!((inf - 1.0).abs() < 1e-9, "{inf}");
    let small = nu.tail_mass(1e-4, 1.0).unwrap();
    assert!(((small - 9999.0) / 9999.0).abs() < 1e-9);
}

#[test]
fn empty_annulus_has_no_mass() {
    let nu = LevyMeasure::inverse_square_positive();
    assert_eq!(nu.tail_mass(0.3, 0.3).unwrap(), 0.0);
    assert_eq!(inv_sq_by_quadrature().tail_mass(0.3, 0.3).unwrap(), 0.0);
}

#[test]
fn tail_mass_rejects_bad_radii() {
    let nu = LevyMeasure::inverse_square_positive();
    assert!(nu.tail_mass(0.0, 1.0).is_err());
    assert!(nu.tail_mass(0.5, 0.4).is_err());
}

#[test]
fn nonfinite_mass_is_divergence() {
    let nu = LevyMeasure::from_density("bad", |_| f64::INFINITY, vec![(0.1, 1.0)]).unwrap();
    assert!(matches!(
        nu.tail_mass(0.2, 0.5),
        Err(Error::MeasureDivergence { .. })
    ));
}

#[test]
fn symmetric_density_counts_both_sides() {
    let nu = LevyMeasure::from_density(
        "sym",
        |x: f64| 1.0 / (x * x),
        vec![(f64::NEG_INFINITY, 0.0), (0.0, f64::INFINITY)],
    )
    .unwrap();
    let m = nu.tail_mass(0.5, 1.0).unwrap();
    assert!((m - 2.0).abs() < 1e-9);
}

#[test]
fn thresholds_single_coordinate() {
    let nu = LevyMeasure::inverse_square_positive();
    // 1/r - 1 = 1
    let tau = nu.jump_thresholds(&[1.0]).unwrap();
    assert_eq!(tau[0], 1.0);
    assert!((tau[1] - 0.5).abs() < 1e-12);
    assert_eq!(nu.jump_thresholds(&[0.0]).unwrap(), vec![1.0, 1.0]);
}

#[test]
fn thresholds_two_coordinates() {
    // 1/r - 1 = 1/4 -> 0.8, then 1/r - 1/0.8 = 1 -> 4/9
    let nu = LevyMeasure::inverse_square_positive();
    let tau = nu.jump_thresholds(&[2.0, 1.0]).unwrap();
    assert!((tau[1] - 0.8).abs() < 1e-12);
    assert!((tau[2] - 4.0 / 9.0).abs() < 1e-12);
    // same answer through the quadrature route
    let tq = inv_sq_by_quadrature().jump_thresholds(&[2.0, 1.0]).unwrap();
    assert!((tq[1] - 0.8).abs() < 1e-9);
    assert!((tq[2] - 4.0 / 9.0).abs() < 1e-9);
}

#[test]
fn regions_for_two_coordinates() {
    let nu = LevyMeasure::inverse_square_positive();
    let r = nu.jump_regions(&[2.0, 1.0]).unwrap();
    assert!((r.regions[0].inner - 0.8).abs() < 1e-12);
    assert_eq!(r.regions[0].outer, 1.0);
    assert!((r.regions[1].inner - 4.0 / 9.0).abs() < 1e-12);
    assert!((r.masses[0] - 0.25).abs() < 1e-8);
    assert!((r.masses[1] - 1.0).abs() < 1e-8);
    assert!(r.pairwise_disjoint());
    assert!(r.regions[0].contains(0.9));
    assert!(!r.regions[0].contains(1.0));
    assert!(r.regions[1].contains(0.8));
    assert!(!r.regions[0].contains(0.8));
}

#[test]
fn zero_controls_give_empty_regions() {
    let nu = LevyMeasure::inverse_square_positive();
    let r = nu.jump_regions(&[0.0, 0.0]).unwrap();
    assert!(r.regions.iter().all(|g| g.is_empty()));
    assert_eq!(r.masses, vec![0.0, 0.0]);
    assert_eq!(r.thresholds, vec![1.0, 1.0, 1.0]);
}

#[test]
fn thin_measure_is_infeasible() {
    let nu = LevyMeasure::from_density("unit", |_| 1.0, vec![(1.0, 2.0)]).unwrap();
    assert!(matches!(
        nu.jump_thresholds(&[0.5]),
        Err(Error::ThresholdInfeasible { .. })
    ));
}

#[test]
fn validate_inverse_square() {
    let rep = LevyMeasure::inverse_square_positive().validate();
    assert!(rep.integrable, "{rep:?}");
    assert!(rep.divergent_near_zero, "{rep:?}");
    assert!(rep.passes());
}

#[test]
fn validate_uniform_on_one_two() {
    let nu = LevyMeasure::from_density("unit", |_| 1.0, vec![(1.0, 2.0)]).unwrap();
    let rep = nu.validate();
    assert!(rep.integrable);
    assert!(!rep.divergent_near_zero);
    assert!((rep.large_jump_mass - 1.0).abs() < 1e-12);
}

#[test]
fn validate_inverse_quartic_fails_integrability() {
    let nu = LevyMeasure::from_density(
        "inv4",
        |x: f64| if x > 0.0 && x < 1.0 { x.powi(-4) } else { 0.0 },
        vec![(0.0, 1.0)],
    )
    .unwrap();
    let rep = nu.validate();
    assert!(!rep.integrable, "{rep:?}");
    assert!(!rep.passes());
}

#[test]
fn table_measure_integrates_piecewise_linear() {
    let nu = LevyMeasure::from_table(&[(0.1, 1.0), (0.5, 3.0), (1.0, 0.0)]).unwrap();
    // trapezoids: [0.1,0.5] area 0.8, [0.5,1.0] area 0.75
    let m = nu.tail_mass(0.1, 1.0).unwrap();
    assert!((m - 1.55).abs() < 1e-9, "{m}");
    assert_eq!(nu.density(0.05), 0.0);
    assert!((nu.density(0.3) - 2.0).abs() < 1e-15);
}

#[test]
fn table_rejects_duplicates() {
    assert!(LevyMeasure::from_table(&[(0.1, 1.0), (0.1, 2.0)]).is_err());
    assert!(LevyMeasure::from_table(&[(0.1, 1.0)]).is_err());
}

proptest! {
    #[test]
    fn tail_mass_is_monotone_and_additive(a in 0.01f64..2.0, b in 0.01f64..2.0, c in 0.01f64..2.0) {
        let mut r = [a, b, c];
        r.sort_by(f64::total_cmp);
        for nu in [LevyMeasure::inverse_square_positive(), inv_sq_by_quadrature()] {
            let m12 = nu.tail_mass(r[0], r[1]).unwrap();
            let m23 = nu.tail_mass(r[1], r[2]).unwrap();
            let m13 = nu.tail_mass(r[0], r[2]).unwrap();
            prop_assert!((m12 + m23 - m13).abs() <= 1e-8 * m13.max(1.0));
            // nonincreasing in the inner radius, nondecreasing in the outer
            prop_assert!(m13 >= m23 - 1e-12 && m13 >= m12 - 1e-12);
        }
    }

    #[test]
    fn region_masses_match_controls(u in proptest::collection::vec(
        prop_oneof![Just(0.0), 0.25f64..2.0, -2.0f64..-0.25], 1..4)) {
        let nu = LevyMeasure::inverse_square_positive();
        let regions = nu.jump_regions(&u).unwrap();
        prop_assert!(regions.pairwise_disjoint());
        let mut total = 0.0;
        let mut expected = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            prop_assert!(regions.thresholds[i + 1] <= regions.thresholds[i]);
            prop_assert!(regions.thresholds[i + 1] > 0.0);
            if ui == 0.0 {
                prop_assert!(regions.regions[i].is_empty());
            } else {
                expected += 1.0 / (ui * ui);
            }
            total += regions.masses[i];
        }
        prop_assert!((total - expected).abs() <= u.len() as f64 * 1e-8 * expected.max(1.0));
    }

    #[test]
    fn mass_multiset_is_order_free(a in 0.25f64..2.0, b in 0.25f64..2.0) {
        let nu = LevyMeasure::inverse_square_positive();
        let mut m1 = nu.jump_regions(&[a, b]).unwrap().masses;
        let mut m2 = nu.jump_regions(&[b, a]).unwrap().masses;
        m1.sort_by(f64::total_cmp);
        m2.sort_by(f64::total_cmp);
        for (x, y) in m1.iter().zip(&m2) {
            prop_assert!((x - y).abs() < 1e-8 * x.max(1.0));
        }
    }
}
