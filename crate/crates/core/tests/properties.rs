use coarse_forge::flatten::{build_schedule, build_schedule_multi, verify_flattening};
use coarse_forge::hyperbolicity::four_point_delta;
use coarse_forge::plfun::ln1p_chord_error;
use coarse_forge::qirepair::{build_lsl_schedule, build_qi_schedules, CoarseProfile};
use coarse_forge::spaces::{verify_metric_axioms, MetricSpace, Point, SamplePlan};
use coarse_forge::PiecewiseLinearFn;
use proptest::prelude::*;

/// Concave, nondecreasing, zero only at 0: positive nonincreasing slopes from the origin.
fn concave_fn() -> impl Strategy<Value = PiecewiseLinearFn> {
    (prop::collection::vec((0.25f64..6.0, 0.05f64..3.0), 1..6), 0.0f64..1.0).prop_map(|(mut pieces, tail)| {
        pieces.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut bps = vec![(0.0, 0.0)];
        let (mut x, mut y) = (0.0, 0.0);
        for &(w, s) in &pieces {
            x += w;
            y += s * w;
            bps.push((x, y));
        }
        let last = pieces[pieces.len() - 1].1;
        PiecewiseLinearFn::new(bps, tail * last).unwrap()
    })
}

/// Nondecreasing, arbitrary shape, possibly with `f(0) > 0`.
fn monotone_fn() -> impl Strategy<Value = PiecewiseLinearFn> {
    (0.0f64..2.0, prop::collection::vec((0.25f64..6.0, 0.0f64..4.0), 1..6), 0.0f64..4.0).prop_map(
        |(y0, pieces, tail)| {
            let mut bps = vec![(0.0, y0)];
            let (mut x, mut y) = (0.0, y0);
            for &(w, s) in &pieces {
                x += w;
                y += s * w;
                bps.push((x, y));
            }
            PiecewiseLinearFn::new(bps, tail).unwrap()
        },
    )
}

fn superlinear_fn() -> impl Strategy<Value = PiecewiseLinearFn> {
    (0.0f64..3.0, prop::collection::vec((0.5f64..8.0, 0.0f64..1.5), 1..5), 1.0f64..2.0).prop_map(
        |(y0, pieces, s0)| {
            let mut bps = vec![(0.0, y0)];
            let (mut x, mut y, mut s) = (0.0, y0, s0);
            for &(w, ds) in &pieces {
                x += w;
                y += s * w;
                bps.push((x, y));
                s += ds;
            }
            PiecewiseLinearFn::new(bps, s).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn concave_zero_only_at_origin_is_subadditive(f in concave_fn(), a in 0.0f64..40.0, b in 0.0f64..40.0) {
        let analysis = f.analyze(0.5).unwrap();
        prop_assert!(analysis.is_concave && analysis.vanishes_only_at_zero);
        prop_assert!(analysis.is_subadditive);
        prop_assert!(f.value_at(a + b) <= f.value_at(a) + f.value_at(b) + 1e-9);
    }

    #[test]
    fn inverse_is_least_preimage(f in monotone_fn(), t in 0.0f64..1.0) {
        let top = f.last_breakpoint().1 + 5.0;
        let y = f.value_at(0.0) + t * (top - f.value_at(0.0));
        match f.inverse_or_zero(y) {
            Ok(x) => {
                prop_assert!(f.value_at(x) >= y - 1e-9 * (1.0 + y));
                if x > 1e-9 {
                    prop_assert!(f.value_at(x - 1e-6 * (1.0 + x)) < y + 1e-9);
                }
            }
            Err(_) => prop_assert!(f.tail_slope() == 0.0),
        }
    }

    #[test]
    fn sup_preimage_is_largest(f in superlinear_fn(), t in 0.0f64..60.0) {
        let b = f.value_at(0.0) + t;
        let x = f.sup_preimage(b).unwrap();
        prop_assert!(f.value_at(x) <= b + 1e-9 * (1.0 + b));
        prop_assert!(f.value_at(x + 1e-6 * (1.0 + x)) > b - 1e-9);
    }

    #[test]
    fn log_correction_stays_below_exact_log(f in concave_fn(), n in 1u32..10, x in 0.0f64..200.0) {
        let corrected = f.log_correct(n);
        let exact = f.value_at(x).ln_1p();
        let approx = corrected.value_at(x);
        // Past the last node the tail is linear and eventually overtakes ln.
        if x <= corrected.last_breakpoint().0 {
            prop_assert!(approx <= exact + 1e-9);
            prop_assert!(exact - approx <= f.log_chord_error(n) + 1e-9);
        }
        prop_assert!(corrected.analyze(0.5).unwrap().is_concave);
    }

    #[test]
    fn chord_error_is_nonnegative_and_small(t0 in 0.0f64..100.0, w in 0.0f64..100.0) {
        let e = ln1p_chord_error(t0, t0 + w);
        prop_assert!(e >= 0.0);
        prop_assert!(e <= ln1p_chord_error(0.0, 1.0) + 1e-12 || w > 1.0);
    }

    #[test]
    fn composition_matches_pointwise(f in concave_fn(), g in monotone_fn(), x in 0.0f64..50.0) {
        let h = f.compose(&g);
        let direct = f.value_at(g.value_at(x));
        prop_assert!((h.value_at(x) - direct).abs() <= 1e-9 * (1.0 + direct));
    }

    #[test]
    fn concave_transform_keeps_metric(f in concave_fn()) {
        let space = MetricSpace::transformed(MetricSpace::lattice(1, 12).unwrap(), f);
        prop_assert!(verify_metric_axioms(&space, SamplePlan::Exhaustive).passed());
    }

    #[test]
    fn transformed_product_matches_factors(f in concave_fn(), p in prop::collection::vec(-3i64..=3, 2), q in prop::collection::vec(-3i64..=3, 2)) {
        let line = MetricSpace::transformed(MetricSpace::lattice(1, 3).unwrap(), f.clone());
        let product = MetricSpace::sup_product(vec![line.clone(), line]).unwrap();
        let plane = MetricSpace::transformed(MetricSpace::lattice(2, 3).unwrap(), f);
        let as_product = |v: &[i64]| Point::Product(v.iter().map(|&t| Point::Lattice(vec![t])).collect());
        let a = product.distance(&as_product(&p), &as_product(&q)).unwrap();
        let b = plane.distance(&Point::Lattice(p), &Point::Lattice(q)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn schedule_invariants(d in superlinear_fn(), steps in 1usize..12) {
        let s = build_schedule(&d, steps).unwrap();
        let a = s.a();
        prop_assert_eq!(a[0], 1.0);
        let mut prev_gap = 1.0;
        for k in 1..a.len() {
            let gap = a[k] - a[k - 1];
            prop_assert!(gap >= prev_gap * (1.0 - 1e-12));
            prop_assert!(a[k] >= d.value_at(a[k - 1]) * (1.0 - 1e-12));
            prop_assert!((s.c().value_at(a[k]) - (k + 1) as f64).abs() <= 1e-9);
            prev_gap = gap;
        }
        let analysis = s.c().analyze(0.5).unwrap();
        prop_assert!(analysis.is_concave && analysis.vanishes_only_at_zero && analysis.is_unbounded);
    }

    #[test]
    fn flattening_excess_at_most_two(d in superlinear_fn(), extra in superlinear_fn()) {
        let s = build_schedule_multi(&[d.clone(), extra], 4).unwrap();
        let samples: Vec<f64> = (1..=400).map(|j| 12.0 * j as f64 / 400.0).collect();
        let report = verify_flattening(&s, &d, &samples).unwrap();
        prop_assert!(report.max_excess <= 2.0 + 1e-9);
    }

    #[test]
    fn qi_schedules_interleave(phi in superlinear_fn()) {
        let profile = CoarseProfile::exact(phi).unwrap();
        let pair = build_qi_schedules(&profile, 6).unwrap();
        prop_assert!(pair.interleaving_holds(&profile));
    }

    #[test]
    fn lsl_bound(phi in superlinear_fn(), r in 0.0f64..20.0) {
        let s = build_lsl_schedule(&phi, 22).unwrap();
        prop_assert!(s.c_y.value_at(phi.value_at(r)) <= r + 1.0 + 1e-9);
    }

    #[test]
    fn delta_scales_with_metric(eps in 0.05f64..5.0) {
        let base = MetricSpace::lattice(2, 1).unwrap();
        let scaled = MetricSpace::transformed(base.clone(), PiecewiseLinearFn::affine(eps, 0.0).unwrap());
        let d0 = four_point_delta(&base, SamplePlan::Exhaustive).unwrap().delta;
        let d1 = four_point_delta(&scaled, SamplePlan::Exhaustive).unwrap().delta;
        prop_assert!((d1 - eps * d0).abs() <= 1e-9 * (1.0 + d1));
    }
}
