//! Homotopies of generating functions with a monotone action profile, continuation maps
//! between action-window complexes, filtration monotonicity across them and the braid
//! persistence experiment.

mod experiment;

pub use experiment::{
    hofer_bump, hofer_close_pair, persistence_experiment, HoferOptions, HoferPair, MatchRecord,
    PersistenceConfig, PersistenceReport, StageRecord, Verdict,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::genfun::{CriticalPoint, GeneratingFunction, GenfunError, GfEval};
use crate::linking_braids::{linking_l_diff, LinkingError};
use crate::morse::{
    dist, eigen_split, flow_for, flow_line, lyapunov_along, Direction, FlowOptions, LinkEvent,
    Metric, MorseComplex, MorseError, Trajectory,
};
use crate::plane_dynamics::DynamicsError;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ContinuationError {
    #[error("generating functions differ at infinity (|difference| {difference} at a far point)")]
    AsymptoteMismatch { difference: f64 },
    #[error(
        "window ({a}, {b}) with shift {shift} violates a * b > 0 or (a + shift)(b + shift) > 0"
    )]
    WindowViolation { a: f64, b: f64, shift: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate critical point with action {action} in a window")]
    DegenerateInWindow { action: f64 },
    #[error("generators of the two maps do not match")]
    GeneratorMismatch,
    #[error(transparent)]
    Morse(#[from] MorseError),
    #[error(transparent)]
    Genfun(#[from] GenfunError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Linking(#[from] LinkingError),
}

type Result<T> = std::result::Result<T, ContinuationError>;

/// Cubic smoothstep `3s^2 - 2s^3` clamped to `[0, 1]`, with its first two derivatives.
pub fn blend(s: f64) -> [f64; 3] {
    if s <= 0.0 {
        [0.0, 0.0, 0.0]
    } else if s >= 1.0 {
        [1.0, 0.0, 0.0]
    } else {
        [s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s), 6.0 - 12.0 * s]
    }
}

/// The action profile `rho = top * (1 - blend)` on `[0, 1]`, continued by parabolas with
/// vertices at 0 (global maximum `top`) and 1 (global minimum 0). It is `C^2`, strictly
/// decreasing on `(0, 1)` and dominates the homotopy: `|rho'| = top * blend'`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Profile {
    pub top: f64,
    /// Half-width of the extension beyond `[0, 1]`.
    pub delta: f64,
}

impl Profile {
    /// Value, first and second derivative at `s`.
    pub fn rho(&self, s: f64) -> [f64; 3] {
        let c = self.top;
        if s < 0.0 {
            [c - 3.0 * c * s * s, -6.0 * c * s, -6.0 * c]
        } else if s > 1.0 {
            let u = s - 1.0;
            [3.0 * c * u * u, 6.0 * c * u, 6.0 * c]
        } else {
            let [b, db, ddb] = blend(s);
            [c * (1.0 - b), -c * db, -c * ddb]
        }
    }

    /// Smallest ratio `|rho'| / blend'` on a grid of the open interval; the homotopy's
    /// critical points sit at the ends exactly when this exceeds the sup distance.
    pub fn dominance(&self, samples: usize) -> f64 {
        (1..samples)
            .map(|k| {
                let s = k as f64 / samples as f64;
                self.rho(s)[1].abs() / blend(s)[1]
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `(s, x) -> rho(s) + (1 - blend(s)) S0(x) + blend(s) S1(x)` on `R x R^dim`.
pub struct Extended<'a, S: ?Sized> {
    pub start: &'a S,
    pub end: &'a S,
    pub profile: Profile,
}

impl<S: GeneratingFunction + ?Sized> GeneratingFunction for Extended<'_, S> {
    fn dim(&self) -> usize {
        self.start.dim() + 1
    }

    fn eval(&self, v: &DVector<f64>) -> std::result::Result<GfEval, GenfunError> {
        let d = self.start.dim();
        let s = v[0];
        let x = DVector::from_iterator(d, v.iter().skip(1).copied());
        let [b, db, ddb] = blend(s);
        let [r, dr, ddr] = self.profile.rho(s);
        let mut grad = DVector::zeros(d + 1);
        let mut hess = DMatrix::zeros(d + 1, d + 1);
        grad[0] = dr;
        hess[(0, 0)] = ddr;
        // outside the open interval only one end contributes
        let (value, g, h) = if b == 0.0 {
            let e = self.start.eval(&x)?;
            (e.value, e.grad, e.hess)
        } else if b == 1.0 {
            let e = self.end.eval(&x)?;
            (e.value, e.grad, e.hess)
        } else {
            let e0 = self.start.eval(&x)?;
            let e1 = self.end.eval(&x)?;
            let diff = e1.value - e0.value;
            grad[0] += db * diff;
            hess[(0, 0)] += ddb * diff;
            let dg = &e1.grad - &e0.grad;
            for i in 0..d {
                hess[(0, i + 1)] = db * dg[i];
                hess[(i + 1, 0)] = db * dg[i];
            }
            (
                (1.0 - b) * e0.value + b * e1.value,
                e0.grad * (1.0 - b) + e1.grad * b,
                e0.hess * (1.0 - b) + e1.hess * b,
            )
        };
        grad.rows_mut(1, d).copy_from(&g);
        hess.view_mut((1, 1), (d, d)).copy_from(&h);
        Ok(GfEval {
            value: r + value,
            grad,
            hess,
        })
    }
}

/// Sampling of the sup distance between two generating functions.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SupSampling {
    /// Half-width of the coordinate box.
    pub radius: f64,
    /// Points per side of the full grid, used while `grid^dim <= 50_000`.
    pub grid: usize,
    pub random_samples: usize,
    pub seed: u64,
}

impl SupSampling {
    pub fn new(radius: f64) -> Self {
        Self {
            radius,
            grid: 9,
            random_samples: 2000,
            seed: 0,
        }
    }

    fn points(&self, dim: usize) -> Vec<DVector<f64>> {
        let mut out = Vec::new();
        let g = self.grid.max(2);
        let full = (g as f64).powi(dim as i32);
        if full <= 50_000.0 {
            let step = 2.0 * self.radius / (g - 1) as f64;
            for mut k in 0..full as usize {
                out.push(DVector::from_fn(dim, |_, _| {
                    let c = k % g;
                    k /= g;
                    -self.radius + step * c as f64
                }));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.random_samples {
            out.push(DVector::from_fn(dim, |_, _| {
                rng.gen_range(-self.radius..=self.radius)
            }));
        }
        out
    }
}

/// Largest `|a - b|` over the sample set, and the number of samples.
pub fn sampled_sup<S, T>(a: &S, b: &T, sampling: &SupSampling) -> Result<(f64, usize)>
where
    S: GeneratingFunction + ?Sized,
    T: GeneratingFunction + ?Sized,
{
    let pts = sampling.points(a.dim());
    let mut worst: f64 = 0.0;
    for p in &pts {
        worst = worst.max((a.value(p)? - b.value(p)?).abs());
    }
    Ok((worst, pts.len()))
}

/// Settings for [`build_homotopy`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HomotopyOptions {
    pub sampling: SupSampling,
    /// Relative safety added to the sampled sup distance.
    pub safety: f64,
    /// Half-width of the extension of the profile beyond `[0, 1]`.
    pub delta: f64,
    /// Weight of `ds^2` relative to `top`; small values make the transit in `s` fast.
    pub s_weight_factor: f64,
}

impl HomotopyOptions {
    pub fn new(sample_radius: f64) -> Self {
        Self {
            sampling: SupSampling::new(sample_radius),
            safety: 0.2,
            delta: 0.05,
            s_weight_factor: 0.1,
        }
    }
}

/// Homotopy data between two generating functions on the same space.
pub struct HomotopyProblem<'a, S: ?Sized> {
    pub start: &'a S,
    pub end: &'a S,
    /// Metric on the fibre space, shared by both ends.
    pub metric: Metric,
    pub lambda_sampled: f64,
    /// Sampled sup distance with the safety factor.
    pub lambda: f64,
    pub samples: usize,
    pub epsilon: f64,
    pub profile: Profile,
    pub s_weight: f64,
    pub options: HomotopyOptions,
}

impl<'a, S: GeneratingFunction + ?Sized> HomotopyProblem<'a, S> {
    pub fn extended(&self) -> Extended<'a, S> {
        Extended {
            start: self.start,
            end: self.end,
            profile: self.profile,
        }
    }

    /// Product metric `s_weight ds^2 + g`.
    pub fn extended_metric(&self) -> Metric {
        let d = self.start.dim();
        let mut w = vec![self.s_weight];
        w.extend(self.metric.weights.clone().unwrap_or_else(|| vec![1.0; d]));
        Metric {
            weights: Some(w),
            bumps: Vec::new(),
        }
    }

    /// `lambda + epsilon`, the action shift of the continuation map.
    pub fn shift(&self) -> f64 {
        self.profile.top
    }

    /// Replaces the sampled sup distance, for instance by that of the reverse homotopy.
    pub fn with_lambda(mut self, lambda: f64, epsilon: f64) -> Result<Self> {
        self.lambda = lambda;
        self.with_epsilon(epsilon)
    }

    /// The same homotopy with a different profile margin.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(ContinuationError::InvalidParameter(
                "epsilon must be positive".into(),
            ));
        }
        self.epsilon = epsilon;
        self.profile.top = self.lambda + epsilon;
        self.s_weight = self.options.s_weight_factor * self.profile.top;
        Ok(self)
    }
}

/// Estimates `lambda` by sampling and builds the profile with `rho(0) = lambda + epsilon`.
/// The metric must be a constant diagonal one.
pub fn build_homotopy<'a, S: GeneratingFunction + ?Sized>(
    start: &'a S,
    end: &'a S,
    metric: Metric,
    epsilon: f64,
    options: &HomotopyOptions,
) -> Result<HomotopyProblem<'a, S>> {
    let d = start.dim();
    if end.dim() != d {
        return Err(ContinuationError::AsymptoteMismatch {
            difference: f64::INFINITY,
        });
    }
    if !metric.bumps.is_empty() {
        return Err(ContinuationError::InvalidParameter(
            "homotopies use constant diagonal metrics".into(),
        ));
    }
    // far points: every coordinate beyond twice the sampling box
    let far = 4.0 * options.sampling.radius.max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(options.sampling.seed ^ 0x5eed);
    for _ in 0..16 {
        let p = DVector::from_fn(d, |_, _| {
            let m = rng.gen_range(far..2.0 * far);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        });
        let (a, b) = (start.value(&p)?, end.value(&p)?);
        let difference = (a - b).abs();
        if difference > 1e-9 * (1.0 + a.abs()) {
            return Err(ContinuationError::AsymptoteMismatch { difference });
        }
    }
    let (lambda_sampled, samples) = sampled_sup(start, end, &options.sampling)?;
    let lambda = lambda_sampled * (1.0 + options.safety);
    let problem = HomotopyProblem {
        start,
        end,
        metric,
        lambda_sampled,
        lambda,
        samples,
        epsilon,
        profile: Profile {
            top: lambda,
            delta: options.delta,
        },
        s_weight: 0.0,
        options: *options,
    };
    problem.with_epsilon(epsilon)
}

/// Settings for [`continuation_map`].
#[derive(Clone, Copy, Debug)]
pub struct ContinuationOptions {
    pub flow: FlowOptions,
    /// Initial offset in `s` from the source end.
    pub s_offset: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub fd_step: f64,
    /// Largest accepted offset along the unstable directions of the source.
    pub max_offset: f64,
    /// A line is recorded when it passes this close to the target.
    pub arrival_tol: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            flow: FlowOptions {
                tol: 1e-11,
                ..FlowOptions::default()
            },
            s_offset: 1e-6,
            newton_tol: 1e-10,
            max_newton: 30,
            fd_step: 1e-7,
            max_offset: 0.1,
            arrival_tol: 1e-2,
        }
    }
}

/// A gradient line of the extended function from `(0, source)` to `(1, target)`.
#[derive(Clone, Debug, Serialize)]
pub struct ContinuationWitness {
    pub source: usize,
    pub target: usize,
    /// Coefficients along the unstable directions of the source.
    pub offset: Vec<f64>,
    pub residual: f64,
    pub arrival_distance: f64,
    /// `S1(target) - S0(source)`.
    pub action_shift: f64,
    pub trajectory: Trajectory,
}

/// A continuation map over the two-element field; `matrix[target][source]`.
#[derive(Clone, Debug, Serialize)]
pub struct ContinuationMap {
    pub source_window: (f64, f64),
    pub target_window: (f64, f64),
    pub lambda: f64,
    pub epsilon: f64,
    pub source: Vec<CriticalPoint>,
    pub target: Vec<CriticalPoint>,
    pub matrix: Vec<Vec<u8>>,
    pub witnesses: Vec<ContinuationWitness>,
}

fn same_point(a: &CriticalPoint, b: &CriticalPoint) -> bool {
    dist(&a.coords, &b.coords) < 1e-6
}

fn reindex(from: &[CriticalPoint], to: &[CriticalPoint]) -> Result<Vec<usize>> {
    if from.len() != to.len() {
        return Err(ContinuationError::GeneratorMismatch);
    }
    from.iter()
        .map(|p| {
            to.iter()
                .position(|q| same_point(p, q))
                .ok_or(ContinuationError::GeneratorMismatch)
        })
        .collect()
}

fn product(a: &[Vec<u8>], b: &[Vec<u8>], inner: usize) -> Vec<Vec<u8>> {
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).fold(0u8, |acc, k| acc ^ (row[k] & b[k][j])))
                .collect()
        })
        .collect()
}

impl ContinuationMap {
    /// `self o first`, where `first` lands on the source generators of `self`.
    pub fn compose(&self, first: &ContinuationMap) -> Result<Vec<Vec<u8>>> {
        let perm = reindex(&first.target, &self.source)?;
        // rows of `first` in the order of `self.source`
        let mut reordered = vec![vec![0u8; first.source.len()]; self.source.len()];
        for (i, &p) in perm.iter().enumerate() {
            reordered[p] = first.matrix[i].clone();
        }
        Ok(product(&self.matrix, &reordered, self.source.len()))
    }

    pub fn is_identity(matrix: &[Vec<u8>]) -> bool {
        matrix.iter().enumerate().all(|(i, row)| {
            row.len() == matrix.len() && row.iter().enumerate().all(|(j, v)| *v == u8::from(i == j))
        })
    }

    /// `d_target G = G d_source` with the differentials of complexes on the same generators.
    pub fn is_chain_map(&self, source: &MorseComplex, target: &MorseComplex) -> Result<bool> {
        let ps = reindex(&source.generators, &self.source)?;
        let pt = reindex(&target.generators, &self.target)?;
        let (m, n) = (self.source.len(), self.target.len());
        let mut ds = vec![vec![0u8; m]; m];
        for (i, row) in source.differential.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                ds[ps[i]][ps[j]] = *v;
            }
        }
        let mut dt = vec![vec![0u8; n]; n];
        for (i, row) in target.differential.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                dt[pt[i]][pt[j]] = *v;
            }
        }
        Ok(product(&dt, &self.matrix, n) == product(&self.matrix, &ds, m))
    }
}

fn window_generators(points: &[CriticalPoint], (a, b): (f64, f64)) -> Result<Vec<CriticalPoint>> {
    let inside = |c: &CriticalPoint| c.action > a && c.action < b;
    if let Some(c) = points.iter().find(|c| c.degenerate && inside(c)) {
        return Err(ContinuationError::DegenerateInWindow { action: c.action });
    }
    let mut out: Vec<CriticalPoint> = points
        .iter()
        .filter(|c| !c.degenerate && inside(c))
        .cloned()
        .collect();
    out.sort_by(|p, q| p.action.total_cmp(&q.action));
    Ok(out)
}

/// Checks `a b > 0` and `(a + shift)(b + shift) > 0`.
pub fn check_windows(a: f64, b: f64, shift: f64) -> Result<()> {
    if !(a < b) || !(a * b > 0.0) || !((a + shift) * (b + shift) > 0.0) {
        return Err(ContinuationError::WindowViolation { a, b, shift });
    }
    Ok(())
}

/// The continuation map `CM^(a,b)(S0) -> CM^(a + shift, b + shift)(S1)`, `shift = lambda +
/// epsilon`, from the critical points of both ends. Each line is found by Newton shooting
/// on the unstable directions at the source so that it lands on the stable manifold of
/// the target; only lines that stay near their source during the fast transit in `s` are
/// found.
pub fn continuation_map<S: GeneratingFunction + ?Sized>(
    p: &HomotopyProblem<'_, S>,
    window: (f64, f64),
    source_points: &[CriticalPoint],
    target_points: &[CriticalPoint],
    opts: &ContinuationOptions,
) -> Result<ContinuationMap> {
    let (a, b) = window;
    let shift = p.shift();
    check_windows(a, b, shift)?;
    let target_window = (a + shift, b + shift);
    let source = window_generators(source_points, window)?;
    let target = window_generators(target_points, target_window)?;
    let mut matrix = vec![vec![0u8; source.len()]; target.len()];
    let mut witnesses = Vec::new();
    for (i, x) in source.iter().enumerate() {
        for (j, z) in target.iter().enumerate() {
            if x.morse_index != z.morse_index {
                continue;
            }
            if let Some(w) = connect(p, x, z, opts)? {
                matrix[j][i] ^= 1;
                witnesses.push(ContinuationWitness {
                    source: i,
                    target: j,
                    action_shift: z.action - x.action,
                    ..w
                });
            }
        }
    }
    Ok(ContinuationMap {
        source_window: window,
        target_window,
        lambda: p.lambda,
        epsilon: p.epsilon,
        source,
        target,
        matrix,
        witnesses,
    })
}

fn connect<S: GeneratingFunction + ?Sized>(
    p: &HomotopyProblem<'_, S>,
    x: &CriticalPoint,
    z: &CriticalPoint,
    opts: &ContinuationOptions,
) -> Result<Option<ContinuationWitness>> {
    let ext = p.extended();
    let metric = p.extended_metric();
    let d = p.start.dim();
    let (up, _) = eigen_split(&p.start.eval(&x.coords_vec())?.hess, &p.metric);
    let (uz, sz) = eigen_split(&p.end.eval(&z.coords_vec())?.hess, &p.metric);
    let k = up.len();
    if uz.len() != k {
        return Ok(None);
    }
    let basis = DMatrix::from_columns(&uz.iter().chain(&sz).cloned().collect::<Vec<_>>());
    let Some(coords) = basis.try_inverse() else {
        return Ok(None);
    };
    let r = opts.s_offset;
    let start_at = |a: &DVector<f64>| -> Vec<f64> {
        let mut v = vec![r];
        let mut y = x.coords_vec();
        for (c, u) in a.iter().zip(&up) {
            y += u * *c;
        }
        v.extend(y.iter());
        v
    };
    // unstable coordinates at the target when s first reaches 1 - r
    let residual = |a: &DVector<f64>| -> Result<Option<DVector<f64>>> {
        let x0 = start_at(a);
        let mut horizon = 4.0;
        let path = loop {
            let path = flow_for(&ext, &metric, &x0, horizon, &opts.flow)?;
            if path.end()[0] >= 1.0 - r {
                break path;
            }
            if path.end_time() < horizon || horizon > 1e3 {
                return Ok(None);
            }
            horizon *= 2.0;
        };
        let (mut lo, mut hi) = (0.0, path.end_time());
        while hi - lo > 1e-12 * (1.0 + hi) {
            let mid = 0.5 * (lo + hi);
            if path.at(mid)[0] < 1.0 - r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let y = DVector::from_fn(d, |i, _| path.at(hi)[i + 1] - z.coords[i]);
        Ok(Some((&coords * y).rows(0, k).into_owned()))
    };
    let mut a = DVector::zeros(k);
    let Some(mut res) = residual(&a)? else {
        return Ok(None);
    };
    let mut iter = 0;
    while res.norm() > opts.newton_tol {
        iter += 1;
        if iter > opts.max_newton {
            return Ok(None);
        }
        let mut jac = DMatrix::zeros(k, k);
        for c in 0..k {
            let mut ap = a.clone();
            ap[c] += opts.fd_step;
            let Some(rp) = residual(&ap)? else {
                return Ok(None);
            };
            jac.set_column(c, &((rp - &res) / opts.fd_step));
        }
        let Some(step) = jac.lu().solve(&res) else {
            return Ok(None);
        };
        // damped step: accept the first halving that reduces the residual
        let mut t = 1.0;
        loop {
            let trial = &a - &step * t;
            if let Some(rt) = residual(&trial)? {
                if rt.norm() < res.norm() {
                    a = trial;
                    res = rt;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-4 {
                return Ok(None);
            }
        }
        if a.norm() > opts.max_offset {
            return Ok(None);
        }
    }
    let traj = flow_line(&ext, &metric, &start_at(&a), Direction::Forward, &opts.flow)?;
    let mut end = vec![1.0];
    end.extend_from_slice(&z.coords);
    let (arrival, t) = traj.approach(&end);
    if arrival > opts.arrival_tol {
        return Ok(None);
    }
    Ok(Some(ContinuationWitness {
        source: 0,
        target: 0,
        offset: a.iter().copied().collect(),
        residual: res.norm(),
        arrival_distance: arrival,
        action_shift: 0.0,
        trajectory: traj.truncated(t),
    }))
}

/// Monotonicity of the linking function along one pair of continuation lines.
#[derive(Clone, Debug, Serialize)]
pub struct PairCheck {
    pub first: usize,
    pub second: usize,
    /// `I` of the two sources and of the two targets, where defined.
    pub start_value: Option<i64>,
    pub end_value: Option<i64>,
    pub jumps: Vec<LinkEvent>,
    pub violations: usize,
    /// Sampled values of `L` along the pair were all equal.
    pub constant: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotoneReport {
    pub pairs: Vec<PairCheck>,
    /// Pairs with a decrease along the lines or between the endpoints.
    pub failures: Vec<(usize, usize)>,
    pub pass: bool,
}

/// For every pair of witnesses with distinct sources and distinct targets, checks that the
/// linking function of the difference of their fibre components never decreases, and that
/// `I(sources) <= I(targets)`.
pub fn check_monotone_across(map: &ContinuationMap, samples: usize) -> MonotoneReport {
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    let w = &map.witnesses;
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            if w[i].source == w[j].source || w[i].target == w[j].target {
                continue;
            }
            let (pi, pj) = (&w[i].trajectory.path, &w[j].trajectory.path);
            let fibre = |v: Vec<f64>| v[1..].to_vec();
            let end = pi.end_time().min(pj.end_time());
            let r = lyapunov_along(|t| fibre(pi.at(t)), |t| fibre(pj.at(t)), 0.0, end, samples);
            let start_value = linking_l_diff(
                &map.source[w[i].source].coords,
                &map.source[w[j].source].coords,
            )
            .get();
            let end_value = linking_l_diff(
                &map.target[w[i].target].coords,
                &map.target[w[j].target].coords,
            )
            .get();
            let endpoint_bad = matches!((start_value, end_value), (Some(a), Some(b)) if a > b);
            if r.violations() > 0 || endpoint_bad {
                failures.push((i, j));
            }
            let first = r.values.first().copied().flatten();
            pairs.push(PairCheck {
                first: i,
                second: j,
                start_value,
                end_value,
                jumps: r.jumps().cloned().collect(),
                violations: r.violations(),
                constant: r.values.iter().all(|v| *v == first && first.is_some()),
            });
        }
    }
    MonotoneReport {
        pass: failures.is_empty(),
        pairs,
        failures,
    }
}

/// Actions closer than this are treated as equal.
pub const ACTION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IsolationViolation {
    /// Two members whose actions differ by a nonzero amount below epsilon.
    ActionGap {
        first: usize,
        second: usize,
        gap: f64,
    },
    /// A critical point outside the collection sharing a member's action.
    SharedAction { member: usize, other: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct IsolationReport {
    pub collection: Vec<CriticalPoint>,
    pub epsilon: f64,
    pub pass: bool,
    pub violations: Vec<IsolationViolation>,
}

/// Epsilon-isolation of `collection` (indices into `points`, all critical points of one
/// function): pairwise action gaps are zero or at least epsilon, and no other critical
/// point shares an action value with a member.
pub fn isolation_check(
    points: &[CriticalPoint],
    collection: &[usize],
    epsilon: f64,
) -> IsolationReport {
    let mut violations = Vec::new();
    for (a, &i) in collection.iter().enumerate() {
        for &j in &collection[a + 1..] {
            let gap = (points[i].action - points[j].action).abs();
            if gap > ACTION_TOL && gap < epsilon {
                violations.push(IsolationViolation::ActionGap {
                    first: i,
                    second: j,
                    gap,
                });
            }
        }
        for (k, other) in points.iter().enumerate() {
            if !collection.contains(&k) && (other.action - points[i].action).abs() <= ACTION_TOL {
                violations.push(IsolationViolation::SharedAction {
                    member: i,
                    other: k,
                });
            }
        }
    }
    IsolationReport {
        collection: collection.iter().map(|&i| points[i].clone()).collect(),
        epsilon,
        pass: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
mod tests;
