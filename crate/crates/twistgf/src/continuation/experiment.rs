//! Hofer-close generating functions and the braid persistence experiment.

use std::sync::Arc;

use serde::Serialize;

use super::{
    build_homotopy, continuation_map, isolation_check, sampled_sup, window_generators,
    ContinuationError, ContinuationMap, ContinuationOptions, HomotopyOptions, SupSampling,
    ACTION_TOL,
};
use crate::genfun::{
    critical_points, gauge_to_gfqi, CriticalPoint, CriticalSearch, FactorOptions, TwistGF,
};
use crate::linking_braids::{braid_from_flow, braid_of_loops, linking_l_diff};
use crate::morse::{complex_from_critical_set, ComplexOptions, Metric, MorseComplex};
use crate::plane_dynamics::{decomposition_with_n, DecompositionConfig, FamilyId, Hamiltonian};

/// `delta (1 + 0.5 x + 0.3 y)` on the unit disk, cut off at radius 2.
pub fn hofer_bump(delta: f64) -> Hamiltonian {
    Hamiltonian::from_family(
        FamilyId::PolynomialBump,
        &[1.0, 2.0, delta, 0.5 * delta, 0.3 * delta],
        2.0,
    )
    .expect("valid bump")
}

/// Settings for [`hofer_close_pair`].
#[derive(Clone, Copy, Debug)]
pub struct HoferOptions {
    pub decomposition: DecompositionConfig<f64>,
    pub factor: FactorOptions,
    pub grid: usize,
    pub random_samples: usize,
    pub seed: u64,
}

impl Default for HoferOptions {
    fn default() -> Self {
        Self {
            decomposition: DecompositionConfig::default(),
            factor: FactorOptions::default(),
            grid: 9,
            random_samples: 2000,
            seed: 0,
        }
    }
}

/// Twist generating functions of `phi_H` and `phi_{H + bump}` with the same slicing.
pub struct HoferPair {
    pub start: TwistGF,
    pub end: TwistGF,
    pub perturbed: Hamiltonian,
    pub n: usize,
    pub sup_diff: f64,
    pub samples: usize,
    pub support_radius: f64,
}

pub fn hofer_close_pair(
    h: &Hamiltonian,
    delta: f64,
    n: usize,
    opts: &HoferOptions,
) -> Result<HoferPair, ContinuationError> {
    if !(delta >= 0.0) {
        return Err(ContinuationError::InvalidParameter(
            "delta must be non-negative".into(),
        ));
    }
    let perturbed = h.plus(&hofer_bump(delta));
    let support_radius = perturbed.support_radius();
    let build = |ham: &Hamiltonian| -> Result<TwistGF, ContinuationError> {
        let dec = decomposition_with_n(&Arc::new(ham.clone()), n, &opts.decomposition)?;
        Ok(TwistGF::from_decomposition(&dec, &opts.factor)?)
    };
    let start = build(h)?;
    let end = build(&perturbed)?;
    let sampling = SupSampling {
        radius: support_radius,
        grid: opts.grid,
        random_samples: opts.random_samples,
        seed: opts.seed,
    };
    let (sup_diff, samples) = sampled_sup(&start, &end, &sampling)?;
    Ok(HoferPair {
        start,
        end,
        perturbed,
        n,
        sup_diff,
        samples,
        support_radius,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Equal,
    Unequal,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub ok: bool,
    pub detail: String,
}

/// A collection member and the target generator matched to it.
#[derive(Clone, Debug, Serialize)]
pub struct MatchRecord {
    pub source: CriticalPoint,
    pub target: CriticalPoint,
    /// Target generators reached from the source by a witness.
    pub reached: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PersistenceReport {
    pub verdict: Verdict,
    pub braid_source: String,
    pub braid_target: String,
    pub gamma_braid_source: String,
    pub gamma_braid_target: String,
    /// `lk = 2 L` of the difference for each pair; `None` on the diagonal or where undefined.
    pub lk_matrix_source: Vec<Vec<Option<i64>>>,
    pub lk_matrix_target: Vec<Vec<Option<i64>>>,
    pub stage_log: Vec<StageRecord>,
    pub failed_stage: Option<String>,
    pub epsilon: f64,
    pub delta: f64,
    pub n: usize,
    pub sup_diff: f64,
    pub lambda: f64,
    pub profile_epsilon: f64,
    pub matches: Vec<MatchRecord>,
    pub composite_identity: bool,
    pub chain_maps: bool,
    pub maps: Vec<ContinuationMap>,
}

/// Settings for [`persistence_experiment`].
#[derive(Clone, Debug)]
pub struct PersistenceConfig {
    pub n: usize,
    /// Indices into the nondegenerate critical points ordered by action.
    pub collection: Vec<usize>,
    pub epsilon: f64,
    pub delta: f64,
    /// Fraction of `epsilon - lambda` used as the profile margin.
    pub profile_fraction: f64,
    pub search: CriticalSearch,
    pub hofer: HoferOptions,
    pub continuation: ContinuationOptions,
    pub complex: ComplexOptions,
    pub braid_samples: usize,
    pub braid_tol: f64,
}

impl PersistenceConfig {
    pub fn new(n: usize, collection: Vec<usize>, epsilon: f64, delta: f64) -> Self {
        Self {
            n,
            collection,
            epsilon,
            delta,
            profile_fraction: 0.25,
            search: CriticalSearch {
                grid: 24,
                ..CriticalSearch::default()
            },
            hofer: HoferOptions::default(),
            continuation: ContinuationOptions::default(),
            complex: ComplexOptions::default(),
            braid_samples: 64,
            braid_tol: 1e-10,
        }
    }
}

struct Log {
    report: PersistenceReport,
}

impl Log {
    fn ok(&mut self, stage: &str, detail: String) {
        self.report.stage_log.push(StageRecord {
            stage: stage.into(),
            ok: true,
            detail,
        });
    }

    fn fail(mut self, stage: &str, detail: String) -> PersistenceReport {
        self.report.stage_log.push(StageRecord {
            stage: stage.into(),
            ok: false,
            detail,
        });
        self.report.failed_stage = Some(stage.into());
        self.report.verdict = Verdict::Inconclusive;
        self.report
    }
}

fn lk_matrix(points: &[&CriticalPoint]) -> Vec<Vec<Option<i64>>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .map(|(j, q)| {
                    (i != j)
                        .then(|| linking_l_diff(&p.coords, &q.coords).get().map(|v| 2 * v))
                        .flatten()
                })
                .collect()
        })
        .collect()
}

fn same_set(a: &[CriticalPoint], b: &[CriticalPoint]) -> bool {
    a.len() == b.len()
        && a.iter().all(|p| {
            b.iter()
                .any(|q| crate::morse::dist(&p.coords, &q.coords) < 1e-6)
        })
}

fn complex_on(
    gf: &TwistGF,
    points: &crate::genfun::CriticalSet,
    window: (f64, f64),
    opts: &ComplexOptions,
) -> Result<MorseComplex, ContinuationError> {
    let sigma = gauge_to_gfqi(gf)?.sigma;
    Ok(complex_from_critical_set(
        gf,
        &Metric::standard(),
        window,
        points,
        sigma,
        2.0 * gf.support_radius(),
        opts,
    )?)
}

/// Runs the braid persistence experiment. Numerical failures and broken preconditions end
/// in an `INCONCLUSIVE` verdict naming the failing stage.
pub fn persistence_experiment(h: &Hamiltonian, cfg: &PersistenceConfig) -> PersistenceReport {
    let mut log = Log {
        report: PersistenceReport {
            verdict: Verdict::Inconclusive,
            braid_source: String::new(),
            braid_target: String::new(),
            gamma_braid_source: String::new(),
            gamma_braid_target: String::new(),
            lk_matrix_source: Vec::new(),
            lk_matrix_target: Vec::new(),
            stage_log: Vec::new(),
            failed_stage: None,
            epsilon: cfg.epsilon,
            delta: cfg.delta,
            n: cfg.n,
            sup_diff: f64::NAN,
            lambda: f64::NAN,
            profile_epsilon: f64::NAN,
            matches: Vec::new(),
            composite_identity: false,
            chain_maps: false,
            maps: Vec::new(),
        },
    };
    macro_rules! attempt {
        ($stage:expr, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(err) => return log.fail($stage, err.to_string()),
            }
        };
    }
    if !(cfg.epsilon > 0.0) {
        return log.fail("configuration", "epsilon must be positive".into());
    }

    let pair = attempt!(
        "hofer_pair",
        hofer_close_pair(h, cfg.delta, cfg.n, &cfg.hofer)
    );
    log.report.sup_diff = pair.sup_diff;
    log.ok(
        "hofer_pair",
        format!(
            "n = {}, sampled sup |h - h'| = {:.3e} over {} points",
            cfg.n, pair.sup_diff, pair.samples
        ),
    );

    let set_h = attempt!("critical_points", critical_points(&pair.start, &cfg.search));
    let set_k = attempt!("critical_points", critical_points(&pair.end, &cfg.search));
    let mut ordered: Vec<usize> = (0..set_h.points.len())
        .filter(|&i| !set_h.points[i].degenerate)
        .collect();
    ordered.sort_by(|&i, &j| set_h.points[i].action.total_cmp(&set_h.points[j].action));
    let Some(members) = cfg
        .collection
        .iter()
        .map(|&c| ordered.get(c).copied())
        .collect::<Option<Vec<usize>>>()
    else {
        return log.fail(
            "critical_points",
            format!(
                "collection index out of range ({} nondegenerate points)",
                ordered.len()
            ),
        );
    };
    log.ok(
        "critical_points",
        format!(
            "{} and {} critical points",
            set_h.points.len(),
            set_k.points.len()
        ),
    );

    let iso = isolation_check(&set_h.points, &members, 3.0 * cfg.epsilon);
    if !iso.pass {
        return log.fail(
            "isolation",
            format!("not 3-epsilon isolated: {:?}", iso.violations),
        );
    }
    log.ok("isolation", "collection is 3-epsilon isolated".into());

    let hopts = HomotopyOptions::new(pair.support_radius);
    let forward = attempt!(
        "homotopy",
        build_homotopy(
            &pair.start,
            &pair.end,
            Metric::standard(),
            cfg.epsilon,
            &hopts
        )
    );
    let lambda = forward.lambda;
    log.report.lambda = lambda;
    if !(lambda < cfg.epsilon) {
        return log.fail(
            "homotopy",
            format!("window precondition broken: lambda = {lambda:.3e} is not below epsilon"),
        );
    }
    let eta = cfg.profile_fraction * (cfg.epsilon - lambda);
    log.report.profile_epsilon = eta;
    let forward = attempt!("homotopy", forward.with_epsilon(eta));
    let backward = attempt!(
        "homotopy",
        build_homotopy(
            &pair.end,
            &pair.start,
            Metric::standard(),
            cfg.epsilon,
            &hopts
        )
    );
    let backward = attempt!("homotopy", backward.with_lambda(lambda, eta));
    log.ok(
        "homotopy",
        format!(
            "lambda = {lambda:.3e} (sampled {:.3e}), profile epsilon {eta:.3e}",
            forward.lambda_sampled
        ),
    );

    let mut kappas: Vec<f64> = members.iter().map(|&i| set_h.points[i].action).collect();
    kappas.sort_by(f64::total_cmp);
    kappas.dedup_by(|a, b| (*a - *b).abs() <= ACTION_TOL);
    let eps = cfg.epsilon;
    let mut composite_identity = true;
    let mut chain_maps = true;
    for &kappa in &kappas {
        let narrow = (kappa - eps, kappa + eps);
        let wide = (kappa - 2.0 * eps, kappa + 2.0 * eps);
        if !(wide.0 * wide.1 > 0.0) {
            return log.fail(
                "windows",
                format!("window around {kappa} contains action 0"),
            );
        }
        let g = attempt!(
            "continuation",
            continuation_map(
                &forward,
                narrow,
                &set_h.points,
                &set_k.points,
                &cfg.continuation
            )
        );
        let k_wide = attempt!("windows", window_generators(&set_k.points, wide));
        if !same_set(&g.target, &k_wide) {
            return log.fail(
                "windows",
                format!(
                    "target window of G at {kappa} differs from (kappa - 2 eps, kappa + 2 eps)"
                ),
            );
        }
        let ghat = attempt!(
            "continuation",
            continuation_map(
                &backward,
                wide,
                &set_k.points,
                &set_h.points,
                &cfg.continuation
            )
        );
        if !same_set(&ghat.target, &g.source) {
            return log.fail(
                "windows",
                format!(
                    "target window of G-hat at {kappa} differs from (kappa - eps, kappa + eps)"
                ),
            );
        }
        let c_narrow = attempt!(
            "complexes",
            complex_on(&pair.start, &set_h, narrow, &cfg.complex)
        );
        let c_wide = attempt!(
            "complexes",
            complex_on(&pair.end, &set_k, wide, &cfg.complex)
        );
        let ok_g = attempt!("chain_map", g.is_chain_map(&c_narrow, &c_wide));
        let ok_ghat = attempt!("chain_map", ghat.is_chain_map(&c_wide, &c_narrow));
        chain_maps &= ok_g && ok_ghat;
        let comp = attempt!("composite", ghat.compose(&g));
        let zero_d = c_narrow.differential.iter().flatten().all(|v| *v == 0);
        let identity = ContinuationMap::is_identity(&comp);
        if zero_d {
            composite_identity &= identity;
        }
        log.ok(
            "continuation",
            format!(
                "kappa = {kappa:.6}: {} -> {} generators, chain maps {}, composite identity {identity}",
                g.source.len(),
                g.target.len(),
                ok_g && ok_ghat
            ),
        );
        for &m in &members {
            let x = &set_h.points[m];
            if (x.action - kappa).abs() > ACTION_TOL {
                continue;
            }
            let Some(i) = g
                .source
                .iter()
                .position(|p| crate::morse::dist(&p.coords, &x.coords) < 1e-6)
            else {
                return log.fail(
                    "matching",
                    "collection member missing from its window".into(),
                );
            };
            let mut reached: Vec<&CriticalPoint> = g
                .witnesses
                .iter()
                .filter(|w| w.source == i)
                .map(|w| &g.target[w.target])
                .collect();
            reached.sort_by(|p, q| {
                p.action.total_cmp(&q.action).then_with(|| {
                    p.coords
                        .partial_cmp(&q.coords)
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
            });
            let Some(first) = reached.first() else {
                return log.fail(
                    "matching",
                    format!("no continuation line from the member at {kappa}"),
                );
            };
            log.report.matches.push(MatchRecord {
                source: x.clone(),
                target: (*first).clone(),
                reached: reached.len(),
            });
        }
        log.report.maps.push(g);
        log.report.maps.push(ghat);
    }
    log.report.composite_identity = composite_identity;
    log.report.chain_maps = chain_maps;
    if !chain_maps {
        return log.fail(
            "chain_map",
            "a continuation map does not commute with the differentials".into(),
        );
    }
    if !composite_identity {
        return log.fail("composite", "G-hat o G is not the identity".into());
    }
    // collection order
    let mut matches = Vec::new();
    for &m in &members {
        let x = &set_h.points[m];
        let found = log
            .report
            .matches
            .iter()
            .find(|r| crate::morse::dist(&r.source.coords, &x.coords) < 1e-6)
            .cloned();
        matches.push(found.expect("every member matched"));
    }
    log.report.matches = matches;
    let matched = log.report.matches.clone();
    let src: Vec<&CriticalPoint> = matched.iter().map(|r| &r.source).collect();
    let tgt: Vec<&CriticalPoint> = matched.iter().map(|r| &r.target).collect();
    let distinct = (0..tgt.len()).all(|i| {
        (i + 1..tgt.len()).all(|j| crate::morse::dist(&tgt[i].coords, &tgt[j].coords) > 1e-6)
    });
    if !distinct {
        return log.fail("matching", "two members matched the same target".into());
    }
    log.ok("matching", format!("{} members matched", src.len()));

    let plane = |v: &[&CriticalPoint]| v.iter().map(|c| c.plane()).collect::<Vec<_>>();
    let coords = |v: &[&CriticalPoint]| v.iter().map(|c| c.coords.clone()).collect::<Vec<_>>();
    let bs = attempt!(
        "braids",
        braid_from_flow(h, &plane(&src), cfg.braid_samples, cfg.braid_tol)
    )
    .free_reduce();
    let bt = attempt!(
        "braids",
        braid_from_flow(
            &pair.perturbed,
            &plane(&tgt),
            cfg.braid_samples,
            cfg.braid_tol
        )
    )
    .free_reduce();
    let gs = attempt!("braids", braid_of_loops(&coords(&src))).free_reduce();
    let gt = attempt!("braids", braid_of_loops(&coords(&tgt))).free_reduce();
    let r = &mut log.report;
    r.braid_source = bs.to_string();
    r.braid_target = bt.to_string();
    r.gamma_braid_source = gs.to_string();
    r.gamma_braid_target = gt.to_string();
    r.lk_matrix_source = lk_matrix(&src);
    r.lk_matrix_target = lk_matrix(&tgt);
    let equal = bs == bt && gs == gt && r.lk_matrix_source == r.lk_matrix_target;
    log.ok(
        "braids",
        format!("flow words '{bs}' / '{bt}', loop words '{gs}' / '{gt}'"),
    );
    log.report.verdict = if equal {
        Verdict::Equal
    } else {
        Verdict::Unequal
    };
    log.report
}
