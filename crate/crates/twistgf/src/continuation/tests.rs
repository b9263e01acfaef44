use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use super::experiment::*;
use super::*;
use crate::genfun::{critical_points, CriticalSearch, FactorOptions, Shifted, TwistGF};
use crate::morse::ConformalBump;
use crate::plane_dynamics::{alternating_decomposition, fixtures};

fn double_bump_gf() -> &'static TwistGF {
    static GF: OnceLock<TwistGF> = OnceLock::new();
    GF.get_or_init(|| {
        let h = Arc::new(fixtures::double_bump());
        let dec = alternating_decomposition(&h, 1, &Default::default()).unwrap();
        TwistGF::from_decomposition(&dec, &FactorOptions::default()).unwrap()
    })
}

fn point(action: f64) -> CriticalPoint {
    CriticalPoint {
        coords: vec![action, 0.0],
        action,
        morse_index: 1,
        cz_index: 0,
        plane_point: [action, 0.0],
        residual: 0.0,
        gradient_norm: 0.0,
        min_abs_eigenvalue: 1.0,
        degenerate: false,
    }
}

#[test]
fn profile_is_c2_decreasing_and_dominant() {
    let p = Profile {
        top: 0.3,
        delta: 0.05,
    };
    let h = 1e-9;
    for s in [0.0, 1.0] {
        let (l, r) = (p.rho(s - h), p.rho(s + h));
        assert!((l[0] - r[0]).abs() < 1e-8 && (l[1] - r[1]).abs() < 1e-8);
        assert!((l[2] - r[2]).abs() < 1e-6);
    }
    assert_eq!(p.rho(0.0)[0], 0.3);
    assert_eq!(p.rho(1.0)[0], 0.0);
    assert!((p.dominance(200) - 0.3).abs() < 1e-12);
}

proptest! {
    #[test]
    fn profile_slope_matches_blend(s in 0.001f64..0.999, top in 1e-4f64..1.0) {
        let p = Profile { top, delta: 0.05 };
        let [_, d, _] = p.rho(s);
        prop_assert!(d < 0.0);
        prop_assert!((d.abs() - top * blend(s)[1]).abs() <= 1e-12 * top);
        let [b, db, _] = blend(s);
        prop_assert!((0.0..=1.0).contains(&b) && db > 0.0);
    }

    #[test]
    fn windows_follow_the_sign_rule(a in -1.0f64..1.0, w in 1e-3f64..1.0, shift in -1.0f64..1.0) {
        let b = a + w;
        let ok = a * b > 0.0 && (a + shift) * (b + shift) > 0.0;
        prop_assert_eq!(check_windows(a, b, shift).is_ok(), ok);
    }
}

#[test]
fn window_violations() {
    assert!(matches!(
        check_windows(-0.01, 0.02, 0.0),
        Err(ContinuationError::WindowViolation { .. })
    ));
    assert!(check_windows(0.01, 0.02, -0.015).is_err());
    assert!(check_windows(0.01, 0.02, 0.005).is_ok());
    assert!(check_windows(0.02, 0.01, 0.0).is_err());
}

#[test]
fn constant_shift_is_seen_by_sampling_and_at_infinity() {
    let gf = double_bump_gf();
    let shifted = Shifted {
        inner: gf.clone(),
        shift: 0.01,
    };
    let (sup, n) = sampled_sup(gf, &shifted, &SupSampling::new(2.0)).unwrap();
    assert!((sup - 0.01).abs() < 1e-12);
    assert_eq!(n, 9usize.pow(4) + 2000);
    let s1: &dyn GeneratingFunction = &shifted;
    let s0: &dyn GeneratingFunction = gf;
    let err = build_homotopy(s0, s1, Metric::standard(), 0.01, &HomotopyOptions::new(2.0))
        .err()
        .unwrap();
    assert!(matches!(err, ContinuationError::AsymptoteMismatch { .. }));
}

#[test]
fn homotopy_parameters_are_validated() {
    let gf = double_bump_gf();
    let opts = HomotopyOptions::new(2.0);
    let bumped = Metric {
        weights: None,
        bumps: vec![ConformalBump {
            center: vec![0.0; 4],
            radius: 1.0,
            amplitude: 0.5,
        }],
    };
    assert!(matches!(
        build_homotopy(gf, gf, bumped, 0.01, &opts),
        Err(ContinuationError::InvalidParameter(_))
    ));
    assert!(build_homotopy(gf, gf, Metric::standard(), 0.0, &opts).is_err());
    let p = build_homotopy(gf, gf, Metric::standard(), 0.01, &opts).unwrap();
    assert_eq!(p.lambda, 0.0);
    assert_eq!(p.shift(), 0.01);
    assert_eq!(p.extended().dim(), 5);
    assert_eq!(
        p.extended_metric().weights.unwrap(),
        vec![0.001, 1.0, 1.0, 1.0, 1.0]
    );
}

#[test]
fn extended_function_gradient_matches_differences() {
    let gf = double_bump_gf();
    let shifted = Shifted {
        inner: gf.clone(),
        shift: 0.0,
    };
    let p = Profile {
        top: 0.02,
        delta: 0.05,
    };
    let e = Extended {
        start: gf as &dyn GeneratingFunction,
        end: &shifted as &dyn GeneratingFunction,
        profile: p,
    };
    for s in [-0.3, 0.2, 0.7, 1.4] {
        let v = DVector::from_vec(vec![s, 0.3, -0.2, 0.1, 0.4]);
        let ev = e.eval(&v).unwrap();
        for k in 0..5 {
            let h = 1e-6;
            let mut a = v.clone();
            let mut b = v.clone();
            a[k] += h;
            b[k] -= h;
            let fd = (e.value(&a).unwrap() - e.value(&b).unwrap()) / (2.0 * h);
            assert!(
                (fd - ev.grad[k]).abs() < 1e-6,
                "s {s} k {k}: {fd} vs {}",
                ev.grad[k]
            );
        }
    }
}

#[test]
fn identity_homotopy_gives_the_identity_map() {
    let gf = double_bump_gf();
    let set = critical_points(
        gf,
        &CriticalSearch {
            grid: 24,
            ..Default::default()
        },
    )
    .unwrap();
    let p = build_homotopy(
        gf,
        gf,
        Metric::standard(),
        0.002,
        &HomotopyOptions::new(2.5),
    )
    .unwrap();
    let map = continuation_map(
        &p,
        (0.035, 0.25),
        &set.points,
        &set.points,
        &ContinuationOptions::default(),
    )
    .unwrap();
    assert_eq!(map.source.len(), 3);
    assert_eq!(map.target.len(), 3);
    assert!(ContinuationMap::is_identity(&map.matrix));
    assert!(map
        .witnesses
        .iter()
        .all(|w| w.source == w.target && w.arrival_distance < 1e-2));
    assert!(map.witnesses.iter().all(|w| (w.action_shift).abs() < 1e-12));
    let report = check_monotone_across(&map, 32);
    assert!(report.pass);
    assert_eq!(report.pairs.len(), 3);
    assert!(report.pairs.iter().all(|c| c.constant));
    assert!(ContinuationMap::is_identity(&map.compose(&map).unwrap()));
}

#[test]
fn isolation_examples() {
    let pts = vec![point(0.1), point(0.105), point(0.2), point(0.2)];
    assert!(isolation_check(&pts, &[0], 0.01).pass);
    let r = isolation_check(&pts, &[0, 1], 0.01);
    assert!(!r.pass);
    assert!(matches!(
        r.violations[0],
        IsolationViolation::ActionGap {
            first: 0,
            second: 1,
            ..
        }
    ));
    assert!(isolation_check(&pts, &[0, 2, 3], 0.05).pass);
    let shared = isolation_check(&pts, &[2], 0.05);
    assert_eq!(
        shared.violations,
        vec![IsolationViolation::SharedAction {
            member: 2,
            other: 3
        }]
    );
}

#[test]
fn double_bump_is_isolated_below_its_smallest_gap() {
    let gf = double_bump_gf();
    let set = critical_points(
        gf,
        &CriticalSearch {
            grid: 24,
            ..Default::default()
        },
    )
    .unwrap();
    let members: Vec<usize> = (0..set.points.len())
        .filter(|&i| !set.points[i].degenerate)
        .collect();
    assert_eq!(members.len(), 3);
    let mut actions: Vec<f64> = members.iter().map(|&i| set.points[i].action).collect();
    actions.sort_by(f64::total_cmp);
    let gap = actions
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    assert!(isolation_check(&set.points, &members, 0.5 * gap).pass);
    assert!(!isolation_check(&set.points, &members, 1.5 * gap).pass);
}

#[test]
fn hofer_distance_is_linear_in_the_bump() {
    let h = fixtures::double_bump();
    let opts = HoferOptions::default();
    let zero = hofer_close_pair(&h, 0.0, 1, &opts).unwrap();
    assert_eq!(zero.sup_diff, 0.0);
    let sups: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
        .iter()
        .map(|&d| hofer_close_pair(&h, d, 1, &opts).unwrap().sup_diff)
        .collect();
    assert!(sups.windows(2).all(|w| w[1] < w[0]));
    for w in sups.windows(2) {
        assert!((w[0] / w[1] - 2.0).abs() < 0.05, "{sups:?}");
    }
    assert!(hofer_close_pair(&h, -1.0, 1, &opts).is_err());
}

#[test]
fn persistence_gives_equal_braids_on_the_double_bump() {
    let cfg = PersistenceConfig::new(1, vec![0, 1, 2], 0.0035, 1e-3);
    let r = persistence_experiment(&fixtures::double_bump(), &cfg);
    assert_eq!(r.verdict, Verdict::Equal, "{:?}", r.stage_log);
    assert!(r.failed_stage.is_none());
    assert!(r.lambda < r.epsilon);
    assert!(r.composite_identity && r.chain_maps);
    assert_eq!(r.matches.len(), 3);
    assert_eq!(r.lk_matrix_source, r.lk_matrix_target);
    assert_eq!(r.maps.len(), 6);
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["verdict"], "EQUAL");
}

#[test]
fn persistence_is_inconclusive_when_preconditions_fail() {
    let h = fixtures::double_bump();
    let r = persistence_experiment(&h, &PersistenceConfig::new(1, vec![0, 1, 2], 0.005, 1e-3));
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert_eq!(r.failed_stage.as_deref(), Some("isolation"));
    let r = persistence_experiment(&h, &PersistenceConfig::new(1, vec![0, 1, 2], 0.001, 1e-3));
    assert_eq!(r.failed_stage.as_deref(), Some("homotopy"));
    let r = persistence_experiment(&h, &PersistenceConfig::new(1, vec![7], 0.001, 1e-3));
    assert_eq!(r.failed_stage.as_deref(), Some("critical_points"));
}
