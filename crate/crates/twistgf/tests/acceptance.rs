//! Acceptance suite: one PASS/FAIL line per criterion with its runtime and budget.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twistgf::continuation::{
    build_homotopy, check_monotone_across, continuation_map, hofer_close_pair,
    persistence_experiment, ContinuationMap, ContinuationOptions, HoferOptions, HomotopyOptions,
    PersistenceConfig, Verdict,
};
use twistgf::genfun::{
    assemble, critical_points, gauge_to_gfqi, h_infinity_gram, sorted_eigenvalues, CriticalPoint,
    CriticalSearch, CriticalSet, FactorGF, FactorOptions, GeneratingFunction, TwistGF,
};
use twistgf::linking_braids::{
    braid_from_flow_stable, braid_of_loops, gamma_loop, linking_l_diff, lk_two_loops,
};
use twistgf::morse::{
    check_filtration, check_lyapunov, complex_from_critical_set, eigen_l_ordering, filtration,
    ComplexOptions, FlowOptions, Metric,
};
use twistgf::plane_dynamics::{
    alternating_decomposition, decomposition_with_n, fixtures, Mat2, PlaneMap, PlanePoint,
};
use twistgf::Hamiltonian;

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, Box<dyn Fn(&Fixtures) -> Outcome>);

struct Fixture {
    name: &'static str,
    hamiltonian: Arc<Hamiltonian>,
    gf: TwistGF,
    n: usize,
    set: CriticalSet,
    seed_radius: f64,
}

impl Fixture {
    fn build(name: &'static str, h: Hamiltonian, seed_radius: Option<f64>) -> Self {
        let hamiltonian = Arc::new(h);
        let dec =
            alternating_decomposition(&hamiltonian, 1, &Default::default()).expect("decomposition");
        let gf = TwistGF::from_decomposition(&dec, &FactorOptions::default())
            .expect("generating function");
        let search = CriticalSearch {
            grid: 24,
            seed_radius,
            ..CriticalSearch::default()
        };
        let set = critical_points(&gf, &search).expect("critical points");
        Self {
            name,
            seed_radius: seed_radius.unwrap_or_else(|| hamiltonian.support_radius()),
            hamiltonian,
            gf,
            n: dec.n,
            set,
        }
    }

    fn points(&self) -> Vec<&CriticalPoint> {
        let mut v: Vec<&CriticalPoint> = self.set.nondegenerate().collect();
        v.sort_by(|p, q| p.action.total_cmp(&q.action));
        v
    }
}

struct Fixtures {
    rotation: Fixture,
    bump: Fixture,
    twisted: Fixture,
}

impl Fixtures {
    fn all(&self) -> [&Fixture; 3] {
        [&self.rotation, &self.bump, &self.twisted]
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Closed-form small rotation: Hessian, Morse index, signature and CZ.
fn small_rotation_indices() -> Outcome {
    let eps: f64 = 0.1;
    let twist = Mat2::rotation(eps).mul(&PlaneMap::<f64>::inverse_rotation().linear_part());
    let h0 = || FactorGF::from_linear(twist).map_err(|e| e.to_string());
    let listed = assemble(vec![
        h0()?,
        FactorGF::rotation(),
        FactorGF::inverse_rotation(),
        FactorGF::rotation(),
    ])
    .map_err(|e| e.to_string())?;
    let hess = listed
        .eval(&DVector::zeros(4))
        .map_err(|e| e.to_string())?
        .hess;
    let (t, s) = (eps.sin() / eps.cos(), 1.0 / eps.cos());
    let printed = [
        [t, s, 0.0, -1.0],
        [s, t, -1.0, 0.0],
        [0.0, -1.0, 0.0, 1.0],
        [-1.0, 0.0, 1.0, 0.0],
    ];
    let worst = (0..16)
        .map(|k| (hess[(k / 4, k % 4)] - printed[k / 4][k % 4]).abs())
        .fold(0.0, f64::max);
    ensure(worst < 1e-12, || format!("Hessian differs by {worst:e}"))?;
    let negative = sorted_eigenvalues(&hess)
        .iter()
        .filter(|v| **v < 0.0)
        .count();
    ensure(negative == 1, || format!("Morse index {negative}"))?;
    let standard = assemble(vec![
        FactorGF::rotation(),
        h0()?,
        FactorGF::rotation(),
        FactorGF::inverse_rotation(),
    ])
    .map_err(|e| e.to_string())?;
    let sigma = gauge_to_gfqi(&standard).map_err(|e| e.to_string())?.sigma;
    let set = critical_points(&standard, &CriticalSearch::default()).map_err(|e| e.to_string())?;
    ensure(set.points.len() == 1, || {
        format!("{} critical points", set.points.len())
    })?;
    let c = &set.points[0];
    ensure(
        c.morse_index == 1 && sigma == 1 && c.cz_index == -1 && c.action.abs() < 1e-15,
        || format!("index {}, sigma {sigma}, CZ {}", c.morse_index, c.cz_index),
    )?;
    Ok(format!(
        "max Hessian error {worst:.1e}, Ind 1, sigma 1, CZ -1"
    ))
}

/// `2 L(x - y) = lk(gamma_x, gamma_y) = lk(two-strand word)` on the double-bump fixtures.
fn linking_identity(fx: &Fixtures) -> Outcome {
    let mut checked = 0;
    let mut nonzero = 0;
    for f in [&fx.bump, &fx.twisted] {
        let pts = f.points();
        ensure(pts.len() >= 3, || {
            format!("{}: {} fixed points", f.name, pts.len())
        })?;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let Some(l) = linking_l_diff(&pts[i].coords, &pts[j].coords).get() else {
                    continue;
                };
                let (a, b) = (
                    gamma_loop(&pts[i].coords, false),
                    gamma_loop(&pts[j].coords, false),
                );
                let lk = lk_two_loops(&a, &b).map_err(|e| e.to_string())?;
                let word = braid_of_loops(&[pts[i].coords.clone(), pts[j].coords.clone()])
                    .map_err(|e| e.to_string())?;
                ensure(2 * l == lk && lk == word.lk(), || {
                    format!(
                        "{} pair ({i}, {j}): 2L = {}, lk = {lk}, word lk = {}",
                        f.name,
                        2 * l,
                        word.lk()
                    )
                })?;
                checked += 1;
                nonzero += usize::from(l != 0);
            }
        }
    }
    ensure(nonzero > 0, || "no pair with nonzero linking".into())?;
    Ok(format!(
        "{checked} pairs agree, {nonzero} with nonzero linking"
    ))
}

/// `L` of the difference of two gradient lines never decreases.
fn lyapunov_suite(fx: &Fixtures) -> Outcome {
    let mut jumps = 0;
    let mut events = Vec::new();
    for f in fx.all() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = f.gf.support_radius();
        let d = f.gf.dim();
        let opts = FlowOptions::default();
        for k in 0..50 {
            let mut draw = || (0..d).map(|_| rng.gen_range(-r..=r)).collect::<Vec<f64>>();
            let (a, b) = (draw(), draw());
            let rep = check_lyapunov(&f.gf, &Metric::standard(), &a, &b, 20.0, 200, &opts)
                .map_err(|e| e.to_string())?;
            ensure(rep.violations() == 0, || {
                format!("{} pair {k}: {} violations", f.name, rep.violations())
            })?;
            ensure(rep.jumps().all(|e| e.jump() >= 1), || {
                format!("{} pair {k}: jump below +1", f.name)
            })?;
            jumps += rep.jumps().count();
        }
        events.push(format!("{} {}", f.name, 50));
    }
    Ok(format!(
        "150 pairs ({}), {jumps} jumps, 0 violations",
        events.join(", ")
    ))
}

/// Plane fixed points by 2-D Newton on `phi(p) - p` with a difference Jacobian.
fn newton_fixed_points(h: &Arc<Hamiltonian>, radius: f64) -> Vec<PlanePoint<f64>> {
    let phi = PlaneMap::flow(Arc::clone(h), 0.0, 1.0, 1e-12);
    let f = |p: PlanePoint<f64>| phi.apply(p).map(|q| [q.x - p.x, q.y - p.y]);
    let mut found: Vec<PlanePoint<f64>> = Vec::new();
    let g = 21;
    for a in 0..g {
        for b in 0..g {
            let mut p = PlanePoint::new(
                radius * (2.0 * a as f64 / (g - 1) as f64 - 1.0),
                radius * (2.0 * b as f64 / (g - 1) as f64 - 1.0),
            );
            if p.norm() >= radius {
                continue;
            }
            let mut ok = false;
            let mut jac_det = 0.0;
            for _ in 0..50 {
                let Ok(v) = f(p) else { break };
                let step = 1e-7;
                let (Ok(fx), Ok(fy)) = (
                    f(PlanePoint::new(p.x + step, p.y)),
                    f(PlanePoint::new(p.x, p.y + step)),
                ) else {
                    break;
                };
                let j = [
                    [(fx[0] - v[0]) / step, (fy[0] - v[0]) / step],
                    [(fx[1] - v[1]) / step, (fy[1] - v[1]) / step],
                ];
                jac_det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if (v[0].hypot(v[1])) < 1e-12 {
                    ok = true;
                    break;
                }
                if jac_det.abs() < 1e-14 {
                    break;
                }
                let dx = (j[1][1] * v[0] - j[0][1] * v[1]) / jac_det;
                let dy = (j[0][0] * v[1] - j[1][0] * v[0]) / jac_det;
                p = PlanePoint::new(p.x - dx, p.y - dy);
            }
            // degenerate fixed points (identity outside the support) are not generators
            if ok
                && jac_det.abs() > 1e-6
                && p.norm() < radius
                && found.iter().all(|q| q.dist(&p) > 1e-7)
            {
                found.push(p);
            }
        }
    }
    found
}

fn fixed_point_bijection(fx: &Fixtures) -> Outcome {
    let mut summary = Vec::new();
    for f in fx.all() {
        let phi = PlaneMap::flow(Arc::clone(&f.hamiltonian), 0.0, 1.0, 1e-12);
        let pts = f.points();
        for c in &pts {
            let p = c.plane();
            let q = phi.apply(p).map_err(|e| e.to_string())?;
            ensure(q.dist(&p) < 1e-6, || {
                format!("{}: |phi(p) - p| = {:e}", f.name, q.dist(&p))
            })?;
        }
        let oracle = newton_fixed_points(&f.hamiltonian, f.seed_radius);
        for o in &oracle {
            let best = pts
                .iter()
                .map(|c| c.plane().dist(o))
                .fold(f64::INFINITY, f64::min);
            ensure(best < 1e-5, || {
                format!(
                    "{}: oracle point ({}, {}) unmatched ({best:e})",
                    f.name, o.x, o.y
                )
            })?;
        }
        ensure(oracle.len() == pts.len(), || {
            format!(
                "{}: {} oracle points, {} critical points",
                f.name,
                oracle.len(),
                pts.len()
            )
        })?;
        summary.push(format!("{} {}", f.name, pts.len()));
    }
    Ok(format!("matched fixed points: {}", summary.join(", ")))
}

fn gauge_identity(fx: &Fixtures) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for f in [&fx.bump, &fx.twisted] {
        let form = gauge_to_gfqi(&f.gf).map_err(|e| e.to_string())?;
        let d = f.gf.dim();
        let r = f.gf.support_radius();
        for _ in 0..500 {
            let x = DVector::from_fn(d, |_, _| {
                let m = rng.gen_range(r + 0.5..3.0 * r);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            });
            let u = &form.psi_inv * &x;
            let normal: f64 = (1..d - 1)
                .map(|i| if i % 2 == 0 { 0.25 } else { -0.25 } * u[i] * u[i])
                .sum();
            let value = f.gf.value(&x).map_err(|e| e.to_string())?;
            worst = worst.max((value - normal).abs());
        }
    }
    ensure(worst < 1e-10, || format!("max deviation {worst:e}"))?;
    for n in 1..=8 {
        let g = h_infinity_gram(n);
        let d = 2 * n + 2;
        ensure(g.rank() == d - 2, || {
            format!("rank {} for dim {d}", g.rank())
        })?;
        let even: Vec<i64> = (0..d).map(|i| i64::from(i % 2 == 0)).collect();
        let odd: Vec<i64> = (0..d).map(|i| i64::from(i % 2 == 1)).collect();
        for v in [&even, &odd] {
            ensure(g.apply(v).iter().all(|c| *c == 0), || {
                format!("kernel vector not annihilated (dim {d})")
            })?;
        }
    }
    Ok(format!(
        "1000 far points, max deviation {worst:.1e}; kernel rank 2 for dims 4 to 18"
    ))
}

fn complex_and_filtration(fx: &Fixtures) -> Outcome {
    let f = &fx.bump;
    let sigma = gauge_to_gfqi(&f.gf).map_err(|e| e.to_string())?.sigma;
    let c = complex_from_critical_set(
        &f.gf,
        &Metric::standard(),
        (0.035, 0.25),
        &f.set,
        sigma,
        2.0 * f.gf.support_radius(),
        &ComplexOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(c.is_chain_complex(), || "d^2 != 0".into())?;
    ensure(!c.witnesses.is_empty(), || {
        "no differential trajectories".into()
    })?;
    let table = filtration(&c);
    ensure(table.diagonal_agree, || "diagonal forms disagree".into())?;
    let check = check_filtration(&c, &table, 64);
    ensure(check.pass(), || {
        format!("{} endpoint violations", check.endpoint_violations.len())
    })?;
    Ok(format!(
        "{} generators, {} trajectories, d^2 = 0, {} endpoint checks, 0 violations",
        c.generators.len(),
        c.witnesses.len(),
        check.endpoint_checks
    ))
}

fn continuation_suite(fx: &Fixtures) -> Outcome {
    let f = &fx.bump;
    let window = (0.035, 0.25);
    let opts = ContinuationOptions::default();
    let id = build_homotopy(
        &f.gf,
        &f.gf,
        Metric::standard(),
        0.002,
        &HomotopyOptions::new(2.5),
    )
    .map_err(|e| e.to_string())?;
    let id_map = continuation_map(&id, window, &f.set.points, &f.set.points, &opts)
        .map_err(|e| e.to_string())?;
    ensure(
        ContinuationMap::is_identity(&id_map.matrix) && id_map.source.len() == 3,
        || format!("identity homotopy gave {:?}", id_map.matrix),
    )?;
    let pair = hofer_close_pair(&f.hamiltonian, 1e-3, f.n, &HoferOptions::default())
        .map_err(|e| e.to_string())?;
    let search = CriticalSearch {
        grid: 24,
        ..CriticalSearch::default()
    };
    let start = critical_points(&pair.start, &search).map_err(|e| e.to_string())?;
    let end = critical_points(&pair.end, &search).map_err(|e| e.to_string())?;
    let p = build_homotopy(
        &pair.start,
        &pair.end,
        Metric::standard(),
        0.002,
        &HomotopyOptions::new(pair.support_radius),
    )
    .map_err(|e| e.to_string())?;
    let map = continuation_map(&p, window, &start.points, &end.points, &opts)
        .map_err(|e| e.to_string())?;
    ensure(!map.witnesses.is_empty(), || {
        "perturbed homotopy found no lines".into()
    })?;
    let bound = p.lambda + p.epsilon + 1e-8;
    let mut pairs = 0;
    for m in [&id_map, &map] {
        for w in &m.witnesses {
            ensure(w.action_shift <= bound, || {
                format!("action shift {} above {bound}", w.action_shift)
            })?;
        }
        let mono = check_monotone_across(m, 64);
        ensure(mono.pass, || {
            format!("{} monotonicity failures", mono.failures.len())
        })?;
        pairs += mono.pairs.len();
    }
    Ok(format!(
        "identity map on 3 generators; {} perturbed lines with shift <= lambda + eps = {:.2e}; {pairs} witness pairs nondecreasing",
        map.witnesses.len(),
        p.lambda + p.epsilon
    ))
}

fn persistence(fx: &Fixtures) -> Outcome {
    let cfg = PersistenceConfig::new(fx.bump.n, vec![0, 1, 2], 0.0035, 1e-3);
    let r = persistence_experiment(&fx.bump.hamiltonian, &cfg);
    ensure(r.verdict == Verdict::Equal, || {
        format!("verdict {:?} at {:?}", r.verdict, r.failed_stage)
    })?;
    ensure(r.composite_identity, || {
        "composite is not the identity".into()
    })?;
    ensure(r.lk_matrix_source == r.lk_matrix_target, || {
        "lk matrices differ".into()
    })?;
    Ok(format!(
        "EQUAL; words '{}' / '{}'; lambda {:.2e} < eps 3.5e-3; composite identity",
        r.braid_source, r.braid_target, r.lambda
    ))
}

fn braid_approximation(fx: &Fixtures) -> Outcome {
    let f = &fx.twisted;
    let planes: Vec<PlanePoint<f64>> = f.points().iter().map(|c| c.plane()).collect();
    let (flow_word, _) = braid_from_flow_stable(f.hamiltonian.as_ref(), &planes, 64, 1024, 1e-10)
        .map_err(|e| e.to_string())?;
    let flow_word = flow_word.free_reduce();
    let mut words = Vec::new();
    for n in [f.n, 2 * f.n, 4 * f.n] {
        let dec = decomposition_with_n(&f.hamiltonian, n, &Default::default())
            .map_err(|e| e.to_string())?;
        let gf = TwistGF::from_decomposition(&dec, &FactorOptions::default())
            .map_err(|e| e.to_string())?;
        let mut coords = Vec::new();
        for p in &planes {
            let x = gf.orbit_coords(*p).map_err(|e| e.to_string())?;
            let g = gf.eval(&x).map_err(|e| e.to_string())?.grad.amax();
            ensure(g < 1e-6, || {
                format!("n = {n}: orbit point not critical (|grad| {g:e})")
            })?;
            coords.push(x.as_slice().to_vec());
        }
        let w = braid_of_loops(&coords)
            .map_err(|e| e.to_string())?
            .free_reduce();
        ensure(w == flow_word, || {
            format!("n = {n}: loop word '{w}' vs flow word '{flow_word}'")
        })?;
        words.push(n.to_string());
    }
    ensure(!flow_word.generators.is_empty(), || "trivial braid".into())?;
    Ok(format!("word '{flow_word}' at n = {}", words.join(", ")))
}

fn eigen_ordering(fx: &Fixtures) -> Outcome {
    let mut comparisons = 0;
    let mut points = 0;
    for f in fx.all() {
        for c in f.points() {
            let r = eigen_l_ordering(&f.gf, &c.coords, 1e-6).map_err(|e| e.to_string())?;
            ensure(r.pass(), || {
                format!("{}: violations {:?}", f.name, r.violations)
            })?;
            comparisons += r.comparisons;
            points += 1;
        }
    }
    ensure(comparisons > 0, || "no defined comparisons".into())?;
    Ok(format!(
        "{points} critical points, {comparisons} comparisons, 0 violations"
    ))
}

fn main() {
    let t = Instant::now();
    let fx = Fixtures {
        rotation: Fixture::build("small rotation", fixtures::small_rotation(0.1), None),
        bump: Fixture::build("double bump", fixtures::double_bump(), None),
        twisted: Fixture::build(
            "twisted double bump",
            fixtures::twisted_double_bump(1.0),
            Some(1.0),
        ),
    };
    println!(
        "fixtures: n = {}, {}, {}; built in {:.1} s",
        fx.rotation.n,
        fx.bump.n,
        fx.twisted.n,
        t.elapsed().as_secs_f64()
    );
    let criteria: Vec<Criterion> = vec![
        (
            "small rotation indices",
            1,
            Box::new(|_| small_rotation_indices()),
        ),
        (
            "linking function equals loop linking",
            30,
            Box::new(linking_identity),
        ),
        ("Lyapunov property of L", 120, Box::new(lyapunov_suite)),
        ("fixed point bijection", 60, Box::new(fixed_point_bijection)),
        (
            "gauge identity and Gram kernel",
            5,
            Box::new(gauge_identity),
        ),
        (
            "complex and filtration",
            120,
            Box::new(complex_and_filtration),
        ),
        ("continuation maps", 120, Box::new(continuation_suite)),
        ("braid persistence", 300, Box::new(persistence)),
        ("braid approximation", 120, Box::new(braid_approximation)),
        ("eigenvector ordering", 30, Box::new(eigen_ordering)),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run(&fx);
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|m| {
            if elapsed <= Duration::from_secs(*budget) {
                Ok(m)
            } else {
                Err(format!("{m}; over the {budget} s budget"))
            }
        });
        let (tag, detail) = match &outcome {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        failed += usize::from(outcome.is_err());
        println!(
            "criterion {:>2} {tag}: {name} [{:.2} s of {budget} s] {detail}",
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
