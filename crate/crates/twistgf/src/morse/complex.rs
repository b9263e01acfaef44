//! Action-window Morse complexes, the shooting differential and the linking filtration.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::{
    checks::lyapunov_along, dist, flow_line, Direction, FlowEnd, FlowOptions, Metric, MorseError,
    Trajectory,
};
use crate::genfun::{
    critical_points, gauge_to_gfqi, newton_critical, CriticalPoint, CriticalSearch, CriticalSet,
    GFQIForm, GeneratingFunction, TwistGF,
};
use crate::linking_braids::linking_l_diff;

/// Settings for [`build_complex`].
#[derive(Clone, Copy, Debug)]
pub struct ComplexOptions {
    pub search: CriticalSearch,
    pub flow: FlowOptions,
    /// Seeds on a shooting circle before doubling.
    pub initial_seeds: usize,
    pub max_doublings: usize,
    /// Shooting radius as a fraction of the smallest distance between critical points.
    pub shoot_factor: f64,
    /// Restarts of the bisection along a basin boundary.
    pub edge_rounds: usize,
    /// Angular resolution of the separatrix bisection.
    pub bisection_tol: f64,
    /// A separatrix is attributed to a critical point it passes within this fraction of
    /// the smallest inter-critical distance.
    pub identify_factor: f64,
}

impl Default for ComplexOptions {
    fn default() -> Self {
        Self {
            search: CriticalSearch {
                grid: 24,
                ..CriticalSearch::default()
            },
            flow: FlowOptions {
                tol: 1e-10,
                ..FlowOptions::default()
            },
            initial_seeds: 8,
            max_doublings: 4,
            shoot_factor: 1e-2,
            edge_rounds: 12,
            bisection_tol: 1e-9,
            identify_factor: 0.05,
        }
    }
}

/// A recorded gradient line `source -> target` between generators.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub source: usize,
    pub target: usize,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, Serialize)]
pub struct MorseComplex {
    pub window: (f64, f64),
    pub dim: usize,
    pub sigma: usize,
    /// Sorted by action.
    pub generators: Vec<CriticalPoint>,
    /// `differential[z][x]` is the mod-2 count of lines `x -> z`.
    pub differential: Vec<Vec<u8>>,
    pub witnesses: Vec<Witness>,
    /// Seeds per shooting circle at which the parities stabilized.
    pub seeds: usize,
    pub shoot_radius: f64,
}

impl MorseComplex {
    /// Grading `morse_index - sigma` of generator `i`.
    pub fn grading(&self, i: usize) -> i64 {
        self.generators[i].morse_index as i64 - self.sigma as i64
    }

    pub fn differential_squared(&self) -> Vec<Vec<u8>> {
        let m = self.generators.len();
        let d = &self.differential;
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| (0..m).fold(0u8, |acc, k| acc ^ (d[i][k] & d[k][j])))
                    .collect()
            })
            .collect()
    }

    pub fn is_chain_complex(&self) -> bool {
        self.differential_squared()
            .iter()
            .flatten()
            .all(|v| *v == 0)
    }
}

fn check_window(a: f64, b: f64) -> Result<(), MorseError> {
    if !(a < b) || !(a * b > 0.0) {
        return Err(MorseError::InvalidWindow { a, b });
    }
    Ok(())
}

/// `Ind - sigma - 1`.
pub fn cz_index(form: &GFQIForm, x: &CriticalPoint) -> Result<i64, MorseError> {
    if x.degenerate {
        return Err(MorseError::DegenerateHessian {
            min_abs: x.min_abs_eigenvalue,
        });
    }
    Ok(x.morse_index as i64 - form.sigma as i64 - 1)
}

/// Diagonal filtration value from the Morse index, with `n = dim / 2`.
pub fn diagonal_morse_form(dim: usize, morse_index: usize) -> i64 {
    let n = (dim / 2) as i64;
    let ind = morse_index as i64;
    if n % 2 == 1 {
        n / 2 - ind.div_euclid(2)
    } else {
        n / 2 - (ind + 1).div_euclid(2)
    }
}

/// `-ceil(CZ / 2)`.
pub fn diagonal_cz_form(cz: i64) -> i64 {
    -(cz + 1).div_euclid(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalConvention {
    MorseIndexForm,
    CzForm,
}

/// `I(x_i (x) x_j)` on the generators of a complex.
#[derive(Clone, Debug, Serialize)]
pub struct FiltrationTable {
    /// `entries[i][j]`; `None` where the linking function is undefined.
    pub entries: Vec<Vec<Option<i64>>>,
    pub diagonal_morse_form: Vec<i64>,
    pub diagonal_cz_form: Vec<i64>,
    /// The convention used on the diagonal of `entries`.
    pub convention: DiagonalConvention,
    pub diagonal_agree: bool,
    pub undefined_pairs: Vec<(usize, usize)>,
    pub partial: bool,
}

impl FiltrationTable {
    pub fn get(&self, i: usize, j: usize) -> Option<i64> {
        self.entries[i][j]
    }
}

pub fn filtration(c: &MorseComplex) -> FiltrationTable {
    let m = c.generators.len();
    let morse: Vec<i64> = c
        .generators
        .iter()
        .map(|g| diagonal_morse_form(c.dim, g.morse_index))
        .collect();
    let cz: Vec<i64> = c
        .generators
        .iter()
        .map(|g| diagonal_cz_form(g.cz_index))
        .collect();
    let mut undefined = Vec::new();
    let entries = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j {
                        return Some(cz[i]);
                    }
                    let r = linking_l_diff(&c.generators[i].coords, &c.generators[j].coords);
                    if !r.defined {
                        undefined.push((i, j));
                    }
                    r.get()
                })
                .collect()
        })
        .collect();
    FiltrationTable {
        entries,
        diagonal_agree: morse == cz,
        diagonal_morse_form: morse,
        diagonal_cz_form: cz,
        convention: DiagonalConvention::CzForm,
        partial: !undefined.is_empty(),
        undefined_pairs: undefined,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiltrationViolation {
    pub witness: usize,
    pub other: usize,
    pub before: i64,
    pub after: i64,
}

/// Endpoint and along-the-line checks of the filtration on the recorded witnesses.
#[derive(Clone, Debug, Default, Serialize)]
pub struct FiltrationReport {
    pub endpoint_checks: usize,
    pub endpoint_violations: Vec<FiltrationViolation>,
    pub skipped_undefined: usize,
    pub lyapunov_checks: usize,
    pub lyapunov_failures: Vec<(usize, usize)>,
}

impl FiltrationReport {
    pub fn pass(&self) -> bool {
        self.endpoint_violations.is_empty() && self.lyapunov_failures.is_empty()
    }
}

/// For every witness `x -> z` and generator `y`: `I(x (x) y) <= I(z (x) y)`, and the linking
/// function of `u(t) - y` is nondecreasing along the witness `u` for `y` distinct from both
/// ends.
pub fn check_filtration(
    c: &MorseComplex,
    table: &FiltrationTable,
    samples: usize,
) -> FiltrationReport {
    let mut rep = FiltrationReport::default();
    for (w, wit) in c.witnesses.iter().enumerate() {
        for y in 0..c.generators.len() {
            match (table.get(wit.source, y), table.get(wit.target, y)) {
                (Some(before), Some(after)) => {
                    rep.endpoint_checks += 1;
                    if before > after {
                        rep.endpoint_violations.push(FiltrationViolation {
                            witness: w,
                            other: y,
                            before,
                            after,
                        });
                    }
                }
                _ => rep.skipped_undefined += 1,
            }
            if y != wit.source && y != wit.target {
                let path = &wit.trajectory.path;
                let yc = c.generators[y].coords.clone();
                let r = lyapunov_along(
                    |t| path.at(t),
                    |_| yc.clone(),
                    0.0,
                    path.end_time(),
                    samples,
                );
                rep.lyapunov_checks += 1;
                if !r.pass {
                    rep.lyapunov_failures.push((w, y));
                }
            }
        }
    }
    rep
}

/// Where a shot ended, up to the resolution needed to detect basin boundaries.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Landing {
    Critical(usize),
    Unmatched(i64),
    Escape(usize, bool),
    Stalled,
}

struct EscapeBasis {
    vectors: Vec<DVector<f64>>,
    values: Vec<f64>,
}

impl EscapeBasis {
    fn new<S: GeneratingFunction + ?Sized>(s: &S, far: f64) -> Result<Self, MorseError> {
        let x = DVector::from_element(s.dim(), far);
        let e = SymmetricEigen::new(s.eval(&x)?.hess);
        Ok(Self {
            vectors: e
                .eigenvectors
                .column_iter()
                .map(|c| c.into_owned())
                .collect(),
            values: e.eigenvalues.iter().copied().collect(),
        })
    }

    fn classify(&self, p: &[f64], direction: Direction) -> Landing {
        let pv = DVector::from_column_slice(p);
        let growing = |v: f64| match direction {
            Direction::Forward => v < 0.0,
            Direction::Backward => v > 0.0,
        };
        let best = self
            .vectors
            .iter()
            .zip(&self.values)
            .enumerate()
            .filter(|(_, (_, v))| growing(**v))
            .map(|(i, (e, _))| (i, e.dot(&pv)))
            .fold(None, |m: Option<(usize, f64)>, c| match m {
                Some(b) if b.1.abs() >= c.1.abs() => Some(b),
                _ => Some(c),
            });
        match best {
            Some((i, p)) => Landing::Escape(i, p > 0.0),
            None => Landing::Stalled,
        }
    }
}

struct Shooter<'a, S: ?Sized> {
    s: &'a S,
    metric: &'a Metric,
    known: &'a [CriticalPoint],
    escape: EscapeBasis,
    opts: &'a ComplexOptions,
    radius: f64,
    identify_dist: f64,
}

struct Shot {
    landing: Landing,
    traj: Trajectory,
}

impl<S: GeneratingFunction + ?Sized> Shooter<'_, S> {
    fn landing(&self, t: &Trajectory) -> Landing {
        match &t.end {
            FlowEnd::Converged { point, polished } => {
                let hit = self
                    .known
                    .iter()
                    .position(|c| !c.degenerate && dist(&c.coords, point) < 1e-6);
                match (hit, polished) {
                    (Some(i), _) => Landing::Critical(i),
                    _ => {
                        let v = t.samples.last().map_or(0.0, |s| s.value);
                        Landing::Unmatched((v * 1e6).round() as i64)
                    }
                }
            }
            FlowEnd::Escaped { point } => self.escape.classify(point, t.direction),
            FlowEnd::TimeCap { .. } => Landing::Stalled,
        }
    }

    fn shoot(
        &self,
        center: &[f64],
        basis: &[DVector<f64>],
        theta: f64,
        direction: Direction,
    ) -> Result<Shot, MorseError> {
        let mut x = DVector::from_column_slice(center);
        x += &basis[0] * (self.radius * theta.cos());
        if basis.len() > 1 {
            x += &basis[1] * (self.radius * theta.sin());
        }
        let xs: Vec<f64> = x.iter().copied().collect();
        let traj = flow_line(self.s, self.metric, &xs, direction, &self.opts.flow)?;
        Ok(Shot {
            landing: self.landing(&traj),
            traj,
        })
    }

    /// Critical point of the given index that a near-separatrix shadows: Newton from the
    /// slow samples away from the start, falling back to the closest approach.
    fn identify(&self, shots: [&Shot; 2], index: usize, center: usize) -> Option<usize> {
        let wanted = |k: usize| {
            let c = &self.known[k];
            !c.degenerate && c.morse_index == index && k != center
        };
        for shot in shots {
            let start = &shot.traj.samples[0].point;
            let pts = &shot.traj.samples;
            // Newton from each local minimum of the speed away from the start
            for w in 1..pts.len().saturating_sub(1) {
                let p = &pts[w];
                if p.speed > pts[w - 1].speed
                    || p.speed > pts[w + 1].speed
                    || dist(&p.point, start) <= 3.0 * self.radius
                {
                    continue;
                }
                let x = DVector::from_column_slice(&p.point);
                if let Ok(Some((q, _))) = newton_critical(self.s, x, self.opts.flow.polish_tol, 40)
                {
                    let hit = (0..self.known.len())
                        .find(|&k| wanted(k) && dist(&self.known[k].coords, q.as_slice()) < 1e-6);
                    if hit.is_some() {
                        return hit;
                    }
                }
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for k in (0..self.known.len()).filter(|&k| wanted(k)) {
            for shot in shots {
                let d = shot.traj.approach(&self.known[k].coords).0;
                if best.is_none_or(|b| d < b.1) {
                    best = Some((k, d));
                }
            }
        }
        let (k, d) = best?;
        (d < self.identify_dist).then_some(k)
    }

    /// Lines leaving `center` (forward) or arriving at it (backward), found on the circle
    /// or the two-point sphere of `basis`, as `(other end, witness)` pairs.
    fn connections(
        &self,
        center: usize,
        basis: &[DVector<f64>],
        direction: Direction,
        seeds: usize,
    ) -> Result<Vec<(usize, Trajectory)>, MorseError> {
        let c = &self.known[center].coords;
        let index = self.known[center].morse_index;
        let target_index = match direction {
            Direction::Forward => index.checked_sub(1),
            Direction::Backward => Some(index + 1),
        };
        let Some(target_index) = target_index else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        if basis.len() == 1 {
            for theta in [0.0, PI] {
                let shot = self.shoot(c, basis, theta, direction)?;
                if let Landing::Critical(k) = shot.landing {
                    if self.known[k].morse_index == target_index {
                        out.push((k, shot.traj));
                    }
                }
            }
            return Ok(out);
        }
        let thetas: Vec<f64> = (0..seeds)
            .map(|i| 2.0 * PI * i as f64 / seeds as f64)
            .collect();
        let shots: Vec<Shot> = thetas
            .iter()
            .map(|t| self.shoot(c, basis, *t, direction))
            .collect::<Result<_, _>>()?;
        for i in 0..seeds {
            let j = (i + 1) % seeds;
            if shots[i].landing == shots[j].landing {
                continue;
            }
            let hi = if j == 0 { 2.0 * PI } else { thetas[j] };
            let (left, right) = self.bisect(
                |t| self.shoot(c, basis, t, direction),
                (thetas[i], hi),
                &shots[i].landing,
            )?;
            if let Some(found) = self.track_edge(left, right, direction, target_index, center)? {
                out.push(found);
            }
        }
        Ok(out)
    }

    /// Bisects the parameter interval between two shots of different landing class.
    fn bisect(
        &self,
        shoot: impl Fn(f64) -> Result<Shot, MorseError>,
        (mut lo, mut hi): (f64, f64),
        left_class: &Landing,
    ) -> Result<(Shot, Shot), MorseError> {
        let mut left = shoot(lo)?;
        let mut right = shoot(hi)?;
        while hi - lo > self.opts.bisection_tol * (1.0 + lo.abs()) {
            let mid = 0.5 * (lo + hi);
            let shot = shoot(mid)?;
            if shot.landing == *left_class {
                lo = mid;
                left = shot;
            } else {
                hi = mid;
                right = shot;
            }
        }
        Ok((left, right))
    }

    /// Follows a basin boundary by repeated bisection: once the two bracketing lines are
    /// about to separate, bisect again on the segment joining them, until the boundary
    /// line reaches a critical point of the target index.
    fn track_edge(
        &self,
        mut left: Shot,
        mut right: Shot,
        direction: Direction,
        target_index: usize,
        center: usize,
    ) -> Result<Option<(usize, Trajectory)>, MorseError> {
        let mut prefix: Option<Trajectory> = None;
        let mut target: Option<usize> = None;
        let mut best: Option<(f64, Trajectory)> = None;
        for _ in 0..=self.opts.edge_rounds {
            if target.is_none() {
                target = self.identify([&left, &right], target_index, center);
            }
            if let Some(k) = target {
                // keep following the edge until it passes close to the target
                let (d, t) = left.traj.approach(&self.known[k].coords);
                if best.as_ref().is_none_or(|b| d < b.0) {
                    let tail = left.traj.clone().truncated(t);
                    let w = match &prefix {
                        Some(p) => p.clone().then(tail),
                        None => tail,
                    };
                    best = Some((d, w));
                }
                if d < self.identify_dist {
                    break;
                }
            }
            let cut = left
                .traj
                .samples
                .iter()
                .map(|p| p.time)
                .take_while(|&t| dist(&left.traj.path.at(t), &right.traj.path.at(t)) < self.radius)
                .last()
                .unwrap_or(0.0);
            if cut <= 0.0 {
                break;
            }
            let a = DVector::from_vec(left.traj.path.at(cut));
            let b = DVector::from_vec(right.traj.path.at(cut));
            let class = left.landing.clone();
            let (l2, r2) = self.bisect(
                |u| {
                    let x = &a + (&b - &a) * u;
                    let traj = flow_line(
                        self.s,
                        self.metric,
                        x.as_slice(),
                        direction,
                        &self.opts.flow,
                    )?;
                    Ok(Shot {
                        landing: self.landing(&traj),
                        traj,
                    })
                },
                (0.0, 1.0),
                &class,
            )?;
            let head = left.traj.truncated(cut);
            prefix = Some(match prefix {
                Some(p) => p.then(head),
                None => head,
            });
            left = l2;
            right = r2;
        }
        Ok(target.zip(best).map(|(k, (_, w))| (k, w)))
    }
}

pub(crate) fn eigen_split(
    hess: &DMatrix<f64>,
    metric: &Metric,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    // eigenvectors of the metric gradient's linearization, W^-1/2 H W^-1/2
    let d = hess.nrows();
    let w: Vec<f64> = metric.weights.clone().unwrap_or_else(|| vec![1.0; d]);
    let scaled = DMatrix::from_fn(d, d, |i, j| hess[(i, j)] / (w[i] * w[j]).sqrt());
    let e = SymmetricEigen::new(scaled);
    let mut pairs: Vec<(f64, DVector<f64>)> = e
        .eigenvalues
        .iter()
        .zip(e.eigenvectors.column_iter())
        .map(|(v, c)| {
            let mut u = DVector::from_fn(d, |i, _| c[i] / w[i].sqrt());
            u /= u.norm();
            (*v, u)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let unstable = pairs
        .iter()
        .filter(|p| p.0 < 0.0)
        .map(|p| p.1.clone())
        .collect();
    let stable = pairs
        .iter()
        .filter(|p| p.0 > 0.0)
        .map(|p| p.1.clone())
        .collect();
    (unstable, stable)
}

/// Builds `CM^(a,b)` of `h` with the mod-2 differential computed by shooting.
pub fn build_complex(
    h: &TwistGF,
    metric: &Metric,
    window: (f64, f64),
    opts: &ComplexOptions,
) -> Result<MorseComplex, MorseError> {
    let set = critical_points(h, &opts.search)?;
    let sigma = gauge_to_gfqi(h)?.sigma;
    complex_from_critical_set(
        h,
        metric,
        window,
        &set,
        sigma,
        2.0 * h.support_radius(),
        opts,
    )
}

/// [`build_complex`] for any function with a known critical set and signature; `far` is a
/// coordinate value at which the function is its quadratic form at infinity.
pub fn complex_from_critical_set<S: GeneratingFunction + ?Sized>(
    s: &S,
    metric: &Metric,
    window: (f64, f64),
    set: &CriticalSet,
    sigma: usize,
    far: f64,
    opts: &ComplexOptions,
) -> Result<MorseComplex, MorseError> {
    let (a, b) = window;
    check_window(a, b)?;
    let inside = |c: &CriticalPoint| c.action > a && c.action < b;
    if let Some(c) = set.points.iter().find(|c| c.degenerate && inside(c)) {
        return Err(MorseError::MorseFailure { action: c.action });
    }
    let known: Vec<CriticalPoint> = set.points.clone();
    let mut gen_ids: Vec<usize> = (0..known.len())
        .filter(|&i| !known[i].degenerate && inside(&known[i]))
        .collect();
    gen_ids.sort_by(|&i, &j| known[i].action.total_cmp(&known[j].action));
    let generators: Vec<CriticalPoint> = gen_ids.iter().map(|&i| known[i].clone()).collect();
    let m = generators.len();
    let dim = s.dim();

    let nondeg: Vec<&CriticalPoint> = known.iter().filter(|c| !c.degenerate).collect();
    let mut min_sep = f64::INFINITY;
    for i in 0..nondeg.len() {
        for j in i + 1..nondeg.len() {
            min_sep = min_sep.min(dist(&nondeg[i].coords, &nondeg[j].coords));
        }
    }
    if !min_sep.is_finite() {
        min_sep = 1.0;
    }
    let shooter = Shooter {
        s,
        metric,
        known: &known,
        escape: EscapeBasis::new(s, far)?,
        opts,
        radius: opts.shoot_factor * min_sep,
        identify_dist: opts.identify_factor * min_sep,
    };

    // pairs (x, z) of generators with index drop 1, grouped by shooting centre
    let mut plan: BTreeMap<(usize, bool), Vec<DVector<f64>>> = BTreeMap::new();
    for &x in &gen_ids {
        for &z in &gen_ids {
            if known[x].morse_index != known[z].morse_index + 1 {
                continue;
            }
            let k = known[x].morse_index;
            if k <= 2 {
                plan.entry((x, true)).or_default();
            } else if dim - known[z].morse_index <= 2 {
                plan.entry((z, false)).or_default();
            } else {
                return Err(MorseError::UnsupportedShooting {
                    source_index: k,
                    target_index: k - 1,
                    dim,
                });
            }
        }
    }
    for (&(c, forward), basis) in plan.iter_mut() {
        let e = s.eval(&known[c].coords_vec())?;
        let (unstable, stable) = eigen_split(&e.hess, metric);
        *basis = if forward { unstable } else { stable };
    }

    let position = |k: usize| gen_ids.iter().position(|&g| g == k);
    let tally = |seeds: usize| -> Result<(Vec<Vec<u8>>, Vec<Witness>), MorseError> {
        let mut d = vec![vec![0u8; m]; m];
        let mut witnesses = Vec::new();
        for (&(c, forward), basis) in &plan {
            let dir = if forward {
                Direction::Forward
            } else {
                Direction::Backward
            };
            for (other, traj) in shooter.connections(c, basis, dir, seeds)? {
                let (src, dst) = if forward { (c, other) } else { (other, c) };
                let (Some(x), Some(z)) = (position(src), position(dst)) else {
                    continue;
                };
                d[z][x] ^= 1;
                witnesses.push(Witness {
                    source: x,
                    target: z,
                    trajectory: traj.into_forward(),
                });
            }
        }
        Ok((d, witnesses))
    };

    let mut seeds = opts.initial_seeds.max(4);
    let (mut d, mut witnesses) = tally(seeds)?;
    let circles = plan.values().any(|b| b.len() == 2);
    if circles {
        let mut changes = 0;
        for _ in 0..opts.max_doublings {
            let (d2, w2) = tally(2 * seeds)?;
            seeds *= 2;
            if d2 == d {
                witnesses = w2;
                changes = 0;
                break;
            }
            changes += 1;
            if changes >= 2 {
                return Err(MorseError::ResolutionFailure);
            }
            d = d2;
            witnesses = w2;
        }
        if changes > 0 {
            return Err(MorseError::ResolutionFailure);
        }
    }
    witnesses.sort_by_key(|p| (p.source, p.target));
    Ok(MorseComplex {
        window,
        dim,
        sigma,
        generators,
        differential: d,
        witnesses,
        seeds,
        shoot_radius: shooter.radius,
    })
}
