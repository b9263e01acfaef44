//! Negative gradient lines of generating functions, action-window Morse complexes over the
//! two-element field, the linking filtration and the dynamical checks of the linking
//! function along gradient lines.

mod checks;
mod complex;

pub use checks::{
    asymptotic_direction, check_lyapunov, eigen_l_ordering, lyapunov_along, AsymptoticReport,
    LinkEvent, LyapunovReport, OrderingReport,
};
pub use complex::{
    build_complex, check_filtration, complex_from_critical_set, cz_index, diagonal_cz_form,
    diagonal_morse_form, filtration, ComplexOptions, DiagonalConvention, FiltrationReport,
    FiltrationTable, FiltrationViolation, MorseComplex, Witness,
};

pub(crate) use complex::eigen_split;

use std::cell::RefCell;

use nalgebra::DVector;
use serde::Serialize;

use crate::genfun::{newton_critical, GeneratingFunction, GenfunError};
use crate::plane_dynamics::ode::{Control, Dopri, OdeError, Step};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MorseError {
    #[error("window ({a}, {b}) must satisfy a < b and a * b > 0")]
    InvalidWindow { a: f64, b: f64 },
    #[error("degenerate critical point with action {action} inside the window")]
    MorseFailure { action: f64 },
    #[error("shooting parities did not stabilize under seed doubling")]
    ResolutionFailure,
    #[error("no shooting scheme for index {source_index} -> {target_index} in dimension {dim}")]
    UnsupportedShooting {
        source_index: usize,
        target_index: usize,
        dim: usize,
    },
    #[error("trajectory escaped without a limit")]
    EscapeWithoutLimit,
    #[error("trajectories do not converge to a common critical point")]
    NoCommonLimit,
    #[error("degenerate Hessian (smallest |eigenvalue| {min_abs})")]
    DegenerateHessian { min_abs: f64 },
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error(transparent)]
    Genfun(#[from] GenfunError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Local conformal factor `1 + amplitude * (1 - |x - center|^2 / radius^2)^2` inside the
/// ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConformalBump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

/// `g_x(u, v) = f(x) sum_i w_i u_i v_i` with a product of local conformal bumps `f` and
/// constant positive weights `w` (all ones by default).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Metric {
    pub weights: Option<Vec<f64>>,
    pub bumps: Vec<ConformalBump>,
}

impl Metric {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn new(weights: Option<Vec<f64>>, bumps: Vec<ConformalBump>) -> Result<Self, MorseError> {
        if let Some(w) = &weights {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(MorseError::InvalidMetric("weights must be positive".into()));
            }
        }
        if bumps
            .iter()
            .any(|b| !(b.radius > 0.0) || !(b.amplitude >= 0.0))
        {
            return Err(MorseError::InvalidMetric(
                "bumps need a positive radius and a non-negative amplitude".into(),
            ));
        }
        Ok(Self { weights, bumps })
    }

    pub fn conformal_factor(&self, x: &[f64]) -> f64 {
        self.bumps
            .iter()
            .map(|b| {
                let r2: f64 = b.center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum();
                let s = r2 / (b.radius * b.radius);
                if s < 1.0 {
                    1.0 + b.amplitude * (1.0 - s) * (1.0 - s)
                } else {
                    1.0
                }
            })
            .product()
    }

    /// Gradient with respect to this metric from the Euclidean gradient.
    pub fn raise(&self, x: &[f64], grad: &DVector<f64>) -> DVector<f64> {
        let f = self.conformal_factor(x);
        match &self.weights {
            Some(w) => DVector::from_fn(grad.len(), |i, _| grad[i] / (f * w[i])),
            None => grad / f,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Along `-grad S`.
    Forward,
    /// Along `+grad S`.
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Backward => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowOptions {
    /// Integrator tolerance (absolute and relative).
    pub tol: f64,
    /// The flow stops once the metric gradient is shorter than this.
    pub convergence: f64,
    /// Newton tolerance used to polish a limit.
    pub polish_tol: f64,
    pub escape_radius: f64,
    pub max_time: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            convergence: 1e-9,
            polish_tol: 1e-10,
            escape_radius: 1e3,
            max_time: 500.0,
            max_steps: 100_000,
        }
    }
}

#[derive(Clone, Debug)]
struct Segment {
    t0: f64,
    t1: f64,
    y0: Vec<f64>,
    y1: Vec<f64>,
    f0: Vec<f64>,
    f1: Vec<f64>,
}

/// Piecewise cubic Hermite interpolant of an integrated path, constant outside its time
/// range.
#[derive(Clone, Debug, Default)]
pub struct DensePath {
    start: Vec<f64>,
    segments: Vec<Segment>,
}

impl DensePath {
    pub fn constant(x: &[f64]) -> Self {
        Self {
            start: x.to_vec(),
            segments: Vec::new(),
        }
    }

    pub fn end_time(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t1)
    }

    pub fn end(&self) -> &[f64] {
        self.segments.last().map_or(&self.start, |s| &s.y1)
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        if self.segments.is_empty() || t <= self.segments[0].t0 {
            return self.start.clone();
        }
        if t >= self.end_time() {
            return self.end().to_vec();
        }
        let k = self.segments.partition_point(|s| s.t1 < t);
        let s = &self.segments[k];
        let step = Step {
            t0: s.t0,
            t1: s.t1,
            y0: &s.y0,
            y1: &s.y1,
            f0: &s.f0,
            f1: &s.f1,
        };
        let mut out = vec![0.0; s.y0.len()];
        step.interpolate_all(t, &mut out);
        out
    }

    /// The same path run backwards in time, starting at its end.
    pub fn reversed(&self) -> Self {
        let total = self.end_time();
        let segments = self
            .segments
            .iter()
            .rev()
            .map(|s| Segment {
                t0: total - s.t1,
                t1: total - s.t0,
                y0: s.y1.clone(),
                y1: s.y0.clone(),
                f0: s.f1.iter().map(|v| -v).collect(),
                f1: s.f0.iter().map(|v| -v).collect(),
            })
            .collect();
        Self {
            start: self.end().to_vec(),
            segments,
        }
    }

    /// Appends `next`, which must start where `self` ends, shifted to start at its end time.
    pub fn append(&mut self, next: &DensePath) {
        let shift = self.end_time();
        self.segments.extend(next.segments.iter().map(|s| Segment {
            t0: s.t0 + shift,
            t1: s.t1 + shift,
            ..s.clone()
        }));
    }

    /// The path restricted to `[0, t]`.
    pub fn truncated(&self, t: f64) -> Self {
        let mut segments: Vec<Segment> =
            self.segments.iter().filter(|s| s.t0 < t).cloned().collect();
        if let Some(last) = segments.last_mut() {
            if last.t1 > t {
                let y = self.at(t);
                // shrink the last segment; its end slope is re-estimated linearly
                let f: Vec<f64> = y
                    .iter()
                    .zip(&last.y0)
                    .map(|(a, b)| (a - b) / (t - last.t0))
                    .collect();
                last.t1 = t;
                last.y1 = y;
                last.f1 = f;
            }
        }
        Self {
            start: self.start.clone(),
            segments,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub point: Vec<f64>,
    pub value: f64,
    /// Length of the metric gradient.
    pub speed: f64,
}

/// How a flow line ended.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FlowEnd {
    /// The gradient fell below the convergence tolerance; `polished` tells whether Newton
    /// refined the end point to a nondegenerate critical point nearby.
    Converged {
        point: Vec<f64>,
        polished: bool,
    },
    Escaped {
        point: Vec<f64>,
    },
    TimeCap {
        point: Vec<f64>,
    },
}

impl FlowEnd {
    pub fn point(&self) -> &[f64] {
        match self {
            FlowEnd::Converged { point, .. }
            | FlowEnd::Escaped { point }
            | FlowEnd::TimeCap { point } => point,
        }
    }

    pub fn limit(&self) -> Option<&[f64]> {
        match self {
            FlowEnd::Converged { point, .. } => Some(point),
            _ => None,
        }
    }
}

/// A sampled negative (or positive) gradient line.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub direction: Direction,
    pub samples: Vec<TrajectorySample>,
    pub end: FlowEnd,
    /// Decrease of `S` along the negative gradient direction; non-negative.
    pub energy: f64,
    #[serde(skip)]
    pub path: DensePath,
}

impl Trajectory {
    /// Smallest distance to `p` over the samples and the time it is attained.
    pub fn approach(&self, p: &[f64]) -> (f64, f64) {
        self.samples
            .iter()
            .map(|s| (dist(&s.point, p), s.time))
            .fold((f64::INFINITY, 0.0), |m, v| if v.0 < m.0 { v } else { m })
    }

    /// Returns the line as a forward line: reverses backward trajectories.
    pub fn into_forward(self) -> Self {
        if self.direction == Direction::Forward {
            return self;
        }
        let total = self.path.end_time();
        let mut samples: Vec<TrajectorySample> = self
            .samples
            .into_iter()
            .rev()
            .map(|mut s| {
                s.time = total - s.time;
                s
            })
            .collect();
        samples.shrink_to_fit();
        Self {
            direction: Direction::Forward,
            samples,
            end: self.end,
            energy: self.energy,
            path: self.path.reversed(),
        }
    }

    /// Keeps the part up to time `t`.
    pub fn truncated(mut self, t: f64) -> Self {
        self.samples.retain(|s| s.time <= t);
        self.path = self.path.truncated(t);
        self.energy = self.value_drop();
        self
    }

    /// Continues with `next`, a line in the same direction starting (up to a small jump)
    /// where this one is cut.
    pub fn then(mut self, next: Trajectory) -> Self {
        let shift = self.path.end_time();
        self.path.append(&next.path);
        self.samples
            .extend(next.samples.into_iter().skip(1).map(|mut p| {
                p.time += shift;
                p
            }));
        self.end = next.end;
        self.energy = self.value_drop();
        self
    }

    fn value_drop(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => (a.value - b.value).abs(),
            _ => 0.0,
        }
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum StopReason {
    Converged,
    Escaped,
    Horizon,
}

struct RawFlow {
    path: DensePath,
    samples: Vec<TrajectorySample>,
    stop: StopReason,
}

/// Integrates `x' = sign * grad_g S` up to `t_end`.
fn integrate<S: GeneratingFunction + ?Sized>(
    s: &S,
    metric: &Metric,
    x0: &[f64],
    direction: Direction,
    t_end: f64,
    opts: &FlowOptions,
    stop_on_convergence: bool,
) -> Result<RawFlow, MorseError> {
    let sign = direction.sign();
    let failure: RefCell<Option<MorseError>> = RefCell::new(None);
    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        let x = DVector::from_column_slice(y);
        match s.gradient(&x) {
            Ok(g) => {
                let v = metric.raise(y, &g);
                for (o, c) in out.iter_mut().zip(v.iter()) {
                    *o = sign * c;
                }
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e.into());
                out.iter_mut().for_each(|o| *o = f64::NAN);
            }
        }
    };
    let start = s.eval(&DVector::from_column_slice(x0))?;
    let mut samples = vec![TrajectorySample {
        time: 0.0,
        point: x0.to_vec(),
        value: start.value,
        speed: metric.raise(x0, &start.grad).norm(),
    }];
    let mut segments = Vec::new();
    let mut stop = StopReason::Horizon;
    let observe = |st: &Step<'_, f64>| {
        segments.push(Segment {
            t0: st.t0,
            t1: st.t1,
            y0: st.y0.to_vec(),
            y1: st.y1.to_vec(),
            f0: st.f0.to_vec(),
            f1: st.f1.to_vec(),
        });
        let value = match s.value(&DVector::from_column_slice(st.y1)) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e.into());
                return Control::Stop;
            }
        };
        samples.push(TrajectorySample {
            time: st.t1,
            point: st.y1.to_vec(),
            value,
            speed: norm(st.f1),
        });
        if stop_on_convergence && norm(st.f1) < opts.convergence {
            stop = StopReason::Converged;
            return Control::Stop;
        }
        if norm(st.y1) > opts.escape_radius {
            stop = StopReason::Escaped;
            return Control::Stop;
        }
        Control::Continue
    };
    let solver = Dopri::new(opts.tol).with_max_steps(opts.max_steps);
    let res = solver.solve(rhs, 0.0, x0, t_end, observe);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    res?;
    Ok(RawFlow {
        path: DensePath {
            start: x0.to_vec(),
            segments,
        },
        samples,
        stop,
    })
}

/// Follows the (negative or positive) gradient line of `S` through `x0` until it converges,
/// escapes past `opts.escape_radius` or reaches `opts.max_time`.
pub fn flow_line<S: GeneratingFunction + ?Sized>(
    s: &S,
    metric: &Metric,
    x0: &[f64],
    direction: Direction,
    opts: &FlowOptions,
) -> Result<Trajectory, MorseError> {
    let xv = DVector::from_column_slice(x0);
    let e = s.eval(&xv)?;
    let speed = metric.raise(x0, &e.grad).norm();
    if speed < opts.convergence {
        return Ok(Trajectory {
            direction,
            samples: vec![TrajectorySample {
                time: 0.0,
                point: x0.to_vec(),
                value: e.value,
                speed,
            }],
            end: FlowEnd::Converged {
                point: x0.to_vec(),
                polished: false,
            },
            energy: 0.0,
            path: DensePath::constant(x0),
        });
    }
    let raw = integrate(s, metric, x0, direction, opts.max_time, opts, true)?;
    let last = raw.path.end().to_vec();
    let end = match raw.stop {
        StopReason::Converged => {
            let polished =
                newton_critical(s, DVector::from_column_slice(&last), opts.polish_tol, 30)?
                    .map(|(p, _)| p.iter().copied().collect::<Vec<f64>>())
                    .filter(|p| dist(p, &last) < 1e-4);
            match polished {
                Some(p) => FlowEnd::Converged {
                    point: p,
                    polished: true,
                },
                None => FlowEnd::Converged {
                    point: last,
                    polished: false,
                },
            }
        }
        StopReason::Escaped => FlowEnd::Escaped { point: last },
        StopReason::Horizon => FlowEnd::TimeCap { point: last },
    };
    let end_value = raw.samples.last().map_or(e.value, |s| s.value);
    let energy = match direction {
        Direction::Forward => e.value - end_value,
        Direction::Backward => end_value - e.value,
    };
    Ok(Trajectory {
        direction,
        samples: raw.samples,
        end,
        energy,
        path: raw.path,
    })
}

/// Integrates for a fixed time without stopping at convergence (escape still stops).
pub fn flow_for<S: GeneratingFunction + ?Sized>(
    s: &S,
    metric: &Metric,
    x0: &[f64],
    horizon: f64,
    opts: &FlowOptions,
) -> Result<DensePath, MorseError> {
    Ok(integrate(s, metric, x0, Direction::Forward, horizon, opts, false)?.path)
}

#[cfg(test)]
mod tests;
