//! Dynamical checks of the linking function: monotonicity along pairs of gradient lines,
//! eigenvector ordering at critical points and asymptotic directions.

use nalgebra::{DVector, SymmetricEigen};
use serde::Serialize;

use super::{dist, flow_for, flow_line, Direction, FlowOptions, Metric, MorseError};
use crate::genfun::{newton_critical, GeneratingFunction};
use crate::linking_braids::linking_l;

/// A sign change of one coordinate (or several at once) of the difference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkEvent {
    pub time: f64,
    pub coordinates: Vec<usize>,
    pub before: i64,
    pub after: i64,
}

impl LinkEvent {
    pub fn jump(&self) -> i64 {
        self.after - self.before
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub sample_times: Vec<f64>,
    /// `L` of the difference at each sample time.
    pub values: Vec<Option<i64>>,
    /// Every located sign change, in time order.
    pub events: Vec<LinkEvent>,
    pub pass: bool,
}

impl LyapunovReport {
    /// Events where `L` changes.
    pub fn jumps(&self) -> impl Iterator<Item = &LinkEvent> {
        self.events.iter().filter(|e| e.jump() != 0)
    }

    pub fn violations(&self) -> usize {
        self.events.iter().filter(|e| e.jump() < 0).count()
            + self
                .values
                .windows(2)
                .filter(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a))
                .count()
    }
}

fn signs(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|c| {
            if *c > 0.0 {
                1.0
            } else if *c < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}

const EVENT_TOL: f64 = 1e-9;

/// Samples `t -> L(a(t) - b(t))` on `[t0, t1]` and locates every coordinate sign change
/// between samples by bisection to `1e-9` in time. Passes iff the linking function never
/// decreases: sampled values are nondecreasing and every jump is at least `+1`.
pub fn lyapunov_along<A, B>(a: A, b: B, t0: f64, t1: f64, samples: usize) -> LyapunovReport
where
    A: Fn(f64) -> Vec<f64>,
    B: Fn(f64) -> Vec<f64>,
{
    let diff = |t: f64| -> Vec<f64> { a(t).iter().zip(b(t)).map(|(x, y)| x - y).collect() };
    let samples = samples.max(1);
    let times: Vec<f64> = (0..=samples)
        .map(|k| t0 + (t1 - t0) * k as f64 / samples as f64)
        .collect();
    let diffs: Vec<Vec<f64>> = times.iter().map(|t| diff(*t)).collect();
    let values: Vec<Option<i64>> = diffs.iter().map(|d| linking_l(d).get()).collect();
    let mut events = Vec::new();
    for k in 0..samples {
        let (s0, s1) = (signs(&diffs[k]), signs(&diffs[k + 1]));
        let mut crossings: Vec<(f64, usize)> = Vec::new();
        for i in 0..s0.len() {
            if s0[i] == s1[i] || s0[i] == 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (times[k], times[k + 1]);
            while hi - lo > EVENT_TOL {
                let mid = 0.5 * (lo + hi);
                if diff(mid)[i] * s0[i] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            crossings.push((0.5 * (lo + hi), i));
        }
        crossings.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut cur = s0.clone();
        let mut idx = 0;
        while idx < crossings.len() {
            let time = crossings[idx].0;
            let mut group = Vec::new();
            while idx < crossings.len() && crossings[idx].0 - time <= EVENT_TOL {
                group.push(crossings[idx].1);
                idx += 1;
            }
            let before = linking_l(&cur).value;
            for &i in &group {
                cur[i] = s1[i];
            }
            let after = linking_l(&cur).value;
            events.push(LinkEvent {
                time,
                coordinates: group,
                before,
                after,
            });
        }
    }
    let mut rep = LyapunovReport {
        sample_times: times,
        values,
        events,
        pass: true,
    };
    rep.pass = rep.violations() == 0;
    rep
}

/// Flows `x0` and `x1` forward for `horizon` (or until either escapes) and checks that the
/// linking function of their difference never decreases.
pub fn check_lyapunov<S: GeneratingFunction + ?Sized>(
    s: &S,
    metric: &Metric,
    x0: &[f64],
    x1: &[f64],
    horizon: f64,
    samples: usize,
    opts: &FlowOptions,
) -> Result<LyapunovReport, MorseError> {
    let p0 = flow_for(s, metric, x0, horizon, opts)?;
    let p1 = flow_for(s, metric, x1, horizon, opts)?;
    let end = p0.end_time().min(p1.end_time());
    Ok(lyapunov_along(
        |t| p0.at(t),
        |t| p1.at(t),
        0.0,
        end,
        samples,
    ))
}

/// Ordering of Hessian eigenvalues against the linking function of eigenvectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderingReport {
    pub eigenvalues: Vec<f64>,
    /// `L` of each eigenvector, `None` where undefined.
    pub l_values: Vec<Option<i64>>,
    pub comparisons: usize,
    /// Pairs `(i, j)` with `L(v_j) < L(v_i)` but `mu_i >= mu_j`.
    pub violations: Vec<(usize, usize)>,
    pub skipped: usize,
}

impl OrderingReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that `L(v_j) < L(v_i)` implies `mu_i < mu_j` for all Hessian eigenpairs at `x`
/// whose linking values are defined. Components below `1e-12` of the largest are zero.
pub fn eigen_l_ordering<S: GeneratingFunction + ?Sized>(
    s: &S,
    x: &[f64],
    degeneracy_tol: f64,
) -> Result<OrderingReport, MorseError> {
    let e = s.eval(&DVector::from_column_slice(x))?;
    let eig = SymmetricEigen::new(e.hess);
    let min_abs = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_abs < degeneracy_tol {
        return Err(MorseError::DegenerateHessian { min_abs });
    }
    let l_values: Vec<Option<i64>> = eig
        .eigenvectors
        .column_iter()
        .map(|c| {
            let top = c.amax();
            let v: Vec<f64> = c
                .iter()
                .map(|t| if t.abs() <= 1e-12 * top { 0.0 } else { *t })
                .collect();
            linking_l(&v).get()
        })
        .collect();
    let mu: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut rep = OrderingReport {
        skipped: l_values.iter().filter(|v| v.is_none()).count(),
        eigenvalues: mu.clone(),
        l_values: l_values.clone(),
        comparisons: 0,
        violations: Vec::new(),
    };
    for i in 0..mu.len() {
        for j in 0..mu.len() {
            if let (Some(li), Some(lj)) = (l_values[i], l_values[j]) {
                if lj < li {
                    rep.comparisons += 1;
                    if mu[i] >= mu[j] {
                        rep.violations.push((i, j));
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Late-time direction of the difference of two lines converging to one critical point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticReport {
    pub limit: Vec<f64>,
    pub direction: Vec<f64>,
    /// Hessian quadratic form at the limit on `direction`.
    pub form_value: f64,
    /// Time at which the direction was read off.
    pub time: f64,
    pub pass: bool,
}

/// Follows `x0` and `x1` forward to their common limit `z` and evaluates the Hessian form
/// at `z` on the normalized difference at the latest time it is still resolved (norm above
/// `resolve`). Passes iff the value is positive.
pub fn asymptotic_direction<S: GeneratingFunction + ?Sized>(
    s: &S,
    metric: &Metric,
    x0: &[f64],
    x1: &[f64],
    resolve: f64,
    opts: &FlowOptions,
) -> Result<AsymptoticReport, MorseError> {
    let a = flow_line(s, metric, x0, Direction::Forward, opts)?;
    let b = flow_line(s, metric, x1, Direction::Forward, opts)?;
    let (Some(za), Some(zb)) = (a.end.limit(), b.end.limit()) else {
        return Err(MorseError::EscapeWithoutLimit);
    };
    if dist(za, zb) > 1e-6 {
        return Err(MorseError::NoCommonLimit);
    }
    let z = newton_critical(s, DVector::from_column_slice(za), opts.polish_tol, 30)?
        .map_or_else(|| DVector::from_column_slice(za), |(p, _)| p);
    let end = a.path.end_time().max(b.path.end_time());
    let steps = 4000;
    let mut chosen = None;
    for k in (0..=steps).rev() {
        let t = end * k as f64 / steps as f64;
        let d: Vec<f64> = a
            .path
            .at(t)
            .iter()
            .zip(b.path.at(t))
            .map(|(p, q)| p - q)
            .collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > resolve {
            chosen = Some((t, d.iter().map(|v| v / n).collect::<Vec<f64>>()));
            break;
        }
    }
    let Some((time, direction)) = chosen else {
        return Err(MorseError::NoCommonLimit);
    };
    let hess = s.eval(&z)?.hess;
    let v = DVector::from_column_slice(&direction);
    let form_value = v.dot(&(&hess * &v));
    Ok(AsymptoticReport {
        limit: z.iter().copied().collect(),
        direction,
        form_value,
        time,
        pass: form_value > 0.0,
    })
}
