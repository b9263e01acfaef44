use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::*;
use crate::genfun::{
    assemble, critical_points, gauge_to_gfqi, CriticalSearch, FactorGF, FactorOptions, GenfunError,
    GfEval, Stabilized, TwistGF,
};
use crate::plane_dynamics::{alternating_decomposition, fixtures, Mat2, PlaneMap};

/// `(1/2) sum q_i x_i^2`.
struct Quadratic(Vec<f64>);

impl GeneratingFunction for Quadratic {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<GfEval, GenfunError> {
        let q = &self.0;
        Ok(GfEval {
            value: 0.5 * q.iter().zip(x.iter()).map(|(a, v)| a * v * v).sum::<f64>(),
            grad: DVector::from_fn(q.len(), |i, _| q[i] * x[i]),
            hess: DMatrix::from_fn(q.len(), q.len(), |i, j| if i == j { q[i] } else { 0.0 }),
        })
    }
}

fn small_rotation(eps: f64) -> TwistGF {
    let twist = Mat2::rotation(eps).mul(&PlaneMap::<f64>::inverse_rotation().linear_part());
    assemble(vec![
        FactorGF::rotation(),
        FactorGF::from_linear(twist).unwrap(),
        FactorGF::rotation(),
        FactorGF::inverse_rotation(),
    ])
    .unwrap()
}

fn double_bump_gf() -> TwistGF {
    let h = Arc::new(fixtures::double_bump());
    let dec = alternating_decomposition(&h, 1, &Default::default()).unwrap();
    TwistGF::from_decomposition(&dec, &FactorOptions::default()).unwrap()
}

#[test]
fn quadratic_model_lines() {
    let q = Quadratic(vec![1.0, -1.0]);
    let m = Metric::standard();
    let opts = FlowOptions::default();
    let down = flow_line(&q, &m, &[0.3, 0.0], Direction::Forward, &opts).unwrap();
    assert!(down.end.limit().unwrap().iter().all(|v| v.abs() < 1e-8));
    assert!((down.energy - 0.045).abs() < 1e-9);
    let out = flow_line(&q, &m, &[0.3, 1e-3], Direction::Forward, &opts).unwrap();
    assert!(matches!(out.end, FlowEnd::Escaped { .. }));
    assert!(out.end.point()[1] > 0.0);
    let still = flow_line(&q, &m, &[0.0, 0.0], Direction::Backward, &opts).unwrap();
    assert_eq!(still.samples.len(), 1);
    assert_eq!(still.path.end_time(), 0.0);
}

#[test]
fn values_decrease_along_forward_lines() {
    let q = Quadratic(vec![2.0, -0.5, 1.0]);
    let t = flow_line(
        &q,
        &Metric::standard(),
        &[1.0, 0.2, -0.7],
        Direction::Forward,
        &FlowOptions::default(),
    )
    .unwrap();
    assert!(t
        .samples
        .windows(2)
        .all(|w| w[1].value <= w[0].value + 1e-14));
}

#[test]
fn metric_validation() {
    assert!(Metric::new(Some(vec![1.0, 0.0]), Vec::new()).is_err());
    let m = Metric::new(Some(vec![2.0, 4.0]), Vec::new()).unwrap();
    let g = m.raise(&[0.0, 0.0], &DVector::from_vec(vec![2.0, 4.0]));
    assert_eq!(g.as_slice(), &[1.0, 1.0]);
}

#[test]
fn single_generator_windows_are_empty() {
    let h = small_rotation(0.1);
    let opts = ComplexOptions::default();
    for w in [(-1.0, -1e-6), (1e-6, 1.0)] {
        let c = build_complex(&h, &Metric::standard(), w, &opts).unwrap();
        assert!(c.generators.is_empty());
        assert!(c.is_chain_complex());
    }
    let c = build_complex(&h, &Metric::standard(), (-1.0, 1.0), &opts);
    assert!(matches!(c, Err(MorseError::InvalidWindow { .. })));
}

#[test]
fn cz_is_stable_under_negative_stabilization() {
    let h = small_rotation(0.1);
    let form = gauge_to_gfqi(&h).unwrap();
    let set = critical_points(&h, &CriticalSearch::default()).unwrap();
    let x = &set.points[0];
    assert_eq!(cz_index(&form, x).unwrap(), -1);
    let st = Stabilized::new(&h, vec![-1.0, 1.0]).unwrap();
    let lifted = st.eval(&st.lift(&x.coords_vec())).unwrap();
    let ind = crate::genfun::sorted_eigenvalues(&lifted.hess)
        .iter()
        .filter(|v| **v < 0.0)
        .count() as i64;
    let sigma = (form.sigma + st.negative_squares()) as i64;
    assert_eq!(ind - sigma - 1, -1);
}

#[test]
fn diagonal_forms_agree() {
    for half in 2..8usize {
        let dim = 2 * half;
        let sigma = half as i64 - 1;
        for ind in 0..=dim {
            let cz = ind as i64 - sigma - 1;
            assert_eq!(
                diagonal_morse_form(dim, ind),
                diagonal_cz_form(cz),
                "{dim} {ind}"
            );
        }
    }
}

#[test]
fn eigen_ordering_on_small_rotation_and_h_infinity() {
    let h = small_rotation(0.1);
    let rep = eigen_l_ordering(&h, &[0.0; 4], 1e-9).unwrap();
    assert!(rep.pass(), "{rep:?}");
    assert!(rep.comparisons > 0);

    let inf = TwistGF::h_infinity(4).unwrap();
    let form = gauge_to_gfqi(&inf).unwrap();
    let gauged = form.gauged(&inf);
    let e = eigen_l_ordering(&gauged, &[0.0; 4], 1e-9);
    assert!(matches!(e, Err(MorseError::DegenerateHessian { .. })));
}

#[test]
fn engineered_link_jump() {
    let r = lyapunov_along(|t| vec![1.0, 1.0, -t, -1.0], |_| vec![0.0; 4], -1.0, 1.0, 7);
    assert_eq!(r.values.first(), Some(&Some(0)));
    assert_eq!(r.values.last(), Some(&Some(1)));
    let jumps: Vec<i64> = r.jumps().map(|e| e.jump()).collect();
    assert_eq!(jumps, vec![1]);
    assert!((r.jumps().next().unwrap().time).abs() < 1e-8);
    assert!(r.pass);

    let back = lyapunov_along(|t| vec![1.0, 1.0, t, -1.0], |_| vec![0.0; 4], -1.0, 1.0, 7);
    assert!(!back.pass);
    assert_eq!(back.violations(), 2);
}

#[test]
fn asymptotic_direction_is_the_slow_positive_direction() {
    let q = Quadratic(vec![1.0, 4.0]);
    let rep = asymptotic_direction(
        &q,
        &Metric::standard(),
        &[1.0, 1.0],
        &[0.5, -1.0],
        1e-8,
        &FlowOptions::default(),
    )
    .unwrap();
    assert!(rep.pass);
    assert!(rep.direction[0].abs() > 0.999);
    assert!((rep.form_value - 1.0).abs() < 1e-3);
}

#[test]
fn double_bump_complex_and_filtration() {
    let h = double_bump_gf();
    let c = build_complex(
        &h,
        &Metric::standard(),
        (0.035, 0.25),
        &ComplexOptions::default(),
    )
    .unwrap();
    let idx: Vec<usize> = c.generators.iter().map(|g| g.morse_index).collect();
    assert_eq!(idx, vec![2, 3, 3]);
    assert_eq!(c.differential, vec![vec![0, 1, 1], vec![0; 3], vec![0; 3]]);
    assert!(c.is_chain_complex());
    assert_eq!(c.witnesses.len(), 2);
    for w in &c.witnesses {
        let p = &w.trajectory.path;
        assert!(dist(p.end(), &c.generators[w.target].coords) < 0.05);
        assert!(dist(&p.at(0.0), &c.generators[w.source].coords) < 0.05);
    }
    let table = filtration(&c);
    assert!(table.diagonal_agree);
    let rep = check_filtration(&c, &table, 200);
    assert!(rep.pass(), "{rep:?}");
    assert!(rep.endpoint_checks > 0);
}
