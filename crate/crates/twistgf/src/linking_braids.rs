//! The linking function on coordinate sign patterns, the staircase loop of a point, winding
//! numbers of piecewise-linear loops and Artin words of planar braids.
//!
//! Orientation contract: `lk(sigma_i) = 1`, and a crossing counts `+1` when the strand
//! coming from the left (smaller first coordinate) passes below (smaller second
//! coordinate). With this choice a counter-clockwise full turn of one strand around
//! another has `lk = 2`, which equals twice the winding number of their difference.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::plane_dynamics::{flow_path, DynamicsError, Hamiltonian, PlanePoint};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LinkingError {
    #[error("loops coincide at parameter {time}")]
    CoincidenceAtTime { time: f64 },
    #[error("strands {a} and {b} collide at time {time}")]
    StrandCollision { time: f64, a: usize, b: usize },
    #[error("simultaneous crossings could not be ordered at time {time}")]
    DegenerateCrossing { time: f64 },
    #[error("strands must be non-empty and sampled on [0, 1]")]
    InvalidStrands,
    #[error("gauge matrix is singular")]
    SingularGauge,
    #[error("invalid braid word: {0}")]
    Parse(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Value of the linking function, or the index where it is undefined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LinkReport {
    pub value: i64,
    pub defined: bool,
    pub witness: Option<usize>,
}

impl LinkReport {
    pub fn get(&self) -> Option<i64> {
        self.defined.then_some(self.value)
    }
}

/// `L(x) = (1/4) sum_i (-1)^i sgn(x_i) sgn(x_{i+1})` with wraparound, extended across
/// isolated zeros whose neighbours share a sign.
pub fn linking_l<T: Scalar>(x: &[T]) -> LinkReport {
    let d = x.len();
    assert!(
        d >= 4 && d.is_multiple_of(2),
        "linking function needs an even dimension >= 4"
    );
    let sgn = |v: T| -> i64 {
        if v > T::zero() {
            1
        } else if v < T::zero() {
            -1
        } else {
            0
        }
    };
    let mut s: Vec<i64> = x.iter().map(|v| sgn(*v)).collect();
    for i in 0..d {
        if s[i] == 0 {
            let (p, n) = (sgn(x[(i + d - 1) % d]), sgn(x[(i + 1) % d]));
            if p * n <= 0 {
                return LinkReport {
                    value: 0,
                    defined: false,
                    witness: Some(i),
                };
            }
            // both terms containing index i cancel for either sign
            s[i] = p;
        }
    }
    let sum: i64 = (0..d)
        .map(|i| if i % 2 == 0 { 1 } else { -1 } * s[i] * s[(i + 1) % d])
        .sum();
    assert!(sum % 4 == 0, "linking function not integral: {sum}/4");
    LinkReport {
        value: sum / 4,
        defined: true,
        witness: None,
    }
}

/// `L(x - y)`.
pub fn linking_l_diff<T: Scalar>(x: &[T], y: &[T]) -> LinkReport {
    let d: Vec<T> = x.iter().zip(y).map(|(a, b)| *a - *b).collect();
    linking_l(&d)
}

/// A closed piecewise-linear loop; vertex `k` sits at parameter `times[k]` and the last
/// vertex joins the first at `times[len]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlLoop<T> {
    pub vertices: Vec<PlanePoint<T>>,
    pub times: Vec<T>,
    pub source_dim: usize,
}

impl<T: Scalar> PlLoop<T> {
    pub fn period(&self) -> T {
        *self.times.last().expect("loop has a closing time")
    }

    /// Point at parameter `t` in `[times[0], period]`.
    pub fn at(&self, t: T) -> PlanePoint<T> {
        let n = self.vertices.len();
        let k = match self.times.iter().rposition(|s| *s <= t) {
            Some(k) if k < n => k,
            Some(_) => return self.vertices[0],
            None => 0,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let a = self.vertices[k];
        let b = self.vertices[(k + 1) % n];
        if t1 == t0 {
            return a;
        }
        let u = (t - t0) / (t1 - t0);
        PlanePoint::new(a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u)
    }

    /// Whether segment `2i` is horizontal and `2i + 1` vertical.
    pub fn is_staircase(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|k| {
            let (a, b) = (self.vertices[k], self.vertices[(k + 1) % n]);
            if k % 2 == 0 {
                a.y == b.y
            } else {
                a.x == b.x
            }
        })
    }

    /// Vertices as CSV rows `x,y`.
    pub fn to_csv(&self) -> String
    where
        T: fmt::Display,
    {
        let mut s = String::from("x,y\n");
        for v in &self.vertices {
            s.push_str(&format!("{},{}\n", v.x, v.y));
        }
        s
    }
}

/// The staircase loop through `(x_{2i}, x_{2i+1})` and `(x_{2i+2}, x_{2i+1})`, indices mod
/// `dim`. Vertex `k` sits at parameter `k`, or `k / dim` when `reparam` is set.
pub fn gamma_loop<T: Scalar>(x: &[T], reparam: bool) -> PlLoop<T> {
    let d = x.len();
    assert!(
        d >= 4 && d.is_multiple_of(2),
        "staircase loop needs an even dimension >= 4"
    );
    let mut vertices = Vec::with_capacity(d);
    for i in 0..d / 2 {
        vertices.push(PlanePoint::new(x[2 * i], x[2 * i + 1]));
        vertices.push(PlanePoint::new(x[(2 * i + 2) % d], x[2 * i + 1]));
    }
    let den = if reparam {
        T::from_usize(d).unwrap()
    } else {
        T::one()
    };
    let times = (0..=d).map(|k| T::from_usize(k).unwrap() / den).collect();
    PlLoop {
        vertices,
        times,
        source_dim: d,
    }
}

/// Staircase loop of a stabilized point: fiber coordinates add a constant tail.
pub fn gamma_pushforward_stabilize<T: Scalar>(x: &[T], fiber: &[T]) -> PlLoop<T> {
    let mut l = gamma_loop(x, false);
    let start = l.vertices[0];
    let mut next = l.period();
    for _ in fiber {
        l.vertices.push(start);
        next = next + T::one();
        l.times.push(next);
    }
    l.source_dim += fiber.len();
    l
}

/// Staircase loop pulled back along a linear gauge: `gamma(psi^{-1} x)`.
pub fn gamma_pushforward_gauge(x: &[f64], psi: &DMatrix<f64>) -> Result<PlLoop<f64>, LinkingError> {
    let inv = psi
        .clone()
        .try_inverse()
        .ok_or(LinkingError::SingularGauge)?;
    let v = inv * nalgebra::DVector::from_column_slice(x);
    Ok(gamma_loop(v.as_slice(), false))
}

fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

fn merged_times<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let mut t: Vec<T> = a.iter().chain(b).copied().collect();
    t.sort_by(|u, v| u.partial_cmp(v).expect("finite times"));
    t.dedup();
    t
}

/// Signed count of crossings of the positive first axis; exact for a closed polygon that
/// avoids the origin.
fn winding<T: Scalar>(pts: &[PlanePoint<T>], times: &[T]) -> Result<i64, LinkingError> {
    let n = pts.len();
    let mut w = 0i64;
    for k in 0..n {
        let p = pts[k];
        let q = pts[(k + 1) % n];
        let cross = p.x * q.y - p.y * q.x;
        if cross == T::zero() {
            let dot = p.x * q.x + p.y * q.y;
            if dot <= T::zero() {
                return Err(LinkingError::CoincidenceAtTime {
                    time: to_f64(times[k]),
                });
            }
        }
        if p.y <= T::zero() && q.y > T::zero() && cross > T::zero() {
            w += 1;
        } else if q.y <= T::zero() && p.y > T::zero() && cross < T::zero() {
            w -= 1;
        }
    }
    Ok(w)
}

/// Twice the winding number of `t -> a(t) - b(t)` around the origin.
pub fn lk_two_loops<T: Scalar>(a: &PlLoop<T>, b: &PlLoop<T>) -> Result<i64, LinkingError> {
    let times = merged_times(&a.times, &b.times);
    let end = a.period().min(b.period());
    let ts: Vec<T> = times.into_iter().filter(|t| *t < end).collect();
    let pts: Vec<PlanePoint<T>> = ts
        .iter()
        .map(|t| {
            let (p, q) = (a.at(*t), b.at(*t));
            PlanePoint::new(p.x - q.x, p.y - q.y)
        })
        .collect();
    Ok(2 * winding(&pts, &ts)?)
}

/// An Artin word: `k` is `sigma_k`, `-k` its inverse.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BraidWord {
    pub generators: Vec<i32>,
    pub strand_count: usize,
}

impl BraidWord {
    pub fn new(generators: Vec<i32>, strand_count: usize) -> Self {
        debug_assert!(generators
            .iter()
            .all(|g| *g != 0 && g.unsigned_abs() as usize <= strand_count.saturating_sub(1)));
        Self {
            generators,
            strand_count,
        }
    }

    /// The linking number morphism: sum of exponents.
    pub fn lk(&self) -> i64 {
        self.generators.iter().map(|g| g.signum() as i64).sum()
    }

    /// Cancels adjacent `sigma_k sigma_k^{-1}` pairs.
    pub fn free_reduce(&self) -> Self {
        let mut out: Vec<i32> = Vec::with_capacity(self.generators.len());
        for g in &self.generators {
            if out.last() == Some(&-g) {
                out.pop();
            } else {
                out.push(*g);
            }
        }
        Self::new(out, self.strand_count)
    }

    /// `perm[p]` is the final position of the strand starting at position `p`.
    pub fn permutation(&self) -> Vec<usize> {
        let mut at: Vec<usize> = (0..self.strand_count).collect();
        for g in &self.generators {
            let i = g.unsigned_abs() as usize;
            at.swap(i - 1, i);
        }
        let mut perm = vec![0; self.strand_count];
        for (pos, start) in at.iter().enumerate() {
            perm[*start] = pos;
        }
        perm
    }
}

impl fmt::Display for BraidWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.generators.iter().map(|g| g.to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

impl FromStr for BraidWord {
    type Err = LinkingError;

    /// Parses the wire format; the strand count is the smallest that fits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let generators = s
            .split_whitespace()
            .map(|t| match t.parse::<i32>() {
                Ok(0) | Err(_) => Err(LinkingError::Parse(t.to_string())),
                Ok(v) => Ok(v),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let k = generators
            .iter()
            .map(|g| g.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
            + 1;
        Ok(Self::new(generators, k))
    }
}

/// A time-parameterized piecewise-linear path on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Strand<T> {
    pub times: Vec<T>,
    pub points: Vec<PlanePoint<T>>,
}

impl<T: Scalar> Strand<T> {
    pub fn constant(p: PlanePoint<T>) -> Self {
        Self {
            times: vec![T::zero(), T::one()],
            points: vec![p, p],
        }
    }

    /// Samples taken at equally spaced times.
    pub fn uniform(points: Vec<PlanePoint<T>>) -> Self {
        let n = points.len().max(2) - 1;
        let den = T::from_usize(n).unwrap();
        let times = (0..points.len())
            .map(|k| T::from_usize(k).unwrap() / den)
            .collect();
        Self { times, points }
    }

    /// A closed loop traversed once over `[0, 1]`.
    pub fn from_loop(l: &PlLoop<T>) -> Self {
        let p = l.period();
        let mut times: Vec<T> = l.times.iter().map(|t| *t / p).collect();
        let mut points = l.vertices.clone();
        points.push(l.vertices[0]);
        times.truncate(points.len());
        Self { times, points }
    }

    pub fn at(&self, t: T) -> PlanePoint<T> {
        let n = self.points.len();
        if t <= self.times[0] {
            return self.points[0];
        }
        if t >= self.times[n - 1] {
            return self.points[n - 1];
        }
        let k = self.times.partition_point(|s| *s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let (a, b) = (self.points[k], self.points[k + 1]);
        if t1 == t0 {
            return b;
        }
        let u = (t - t0) / (t1 - t0);
        PlanePoint::new(a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u)
    }
}

/// Orders strands by first coordinate, ties by second.
fn order_at<T: Scalar>(pos: &[PlanePoint<T>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pos.len()).collect();
    idx.sort_by(|a, b| {
        let (p, q) = (pos[*a], pos[*b]);
        p.x.partial_cmp(&q.x)
            .unwrap()
            .then(p.y.partial_cmp(&q.y).unwrap())
    });
    idx
}

/// Collision tolerance of [`braid_word`].
pub const COLLISION_TOL: f64 = 1e-12;

/// Scans time and records every exchange of first-coordinate order as a signed Artin
/// generator. Strand `j` is shifted by `j * 1e-9` in its first coordinate so that ties are
/// broken deterministically.
pub fn braid_word<T: Scalar>(strands: &[Strand<T>]) -> Result<BraidWord, LinkingError> {
    let k = strands.len();
    if k == 0
        || strands
            .iter()
            .any(|s| s.points.is_empty() || s.points.len() != s.times.len())
    {
        return Err(LinkingError::InvalidStrands);
    }
    let mut times: Vec<T> = Vec::new();
    for s in strands {
        times = merged_times(&times, &s.times);
    }
    times.retain(|t| *t >= T::zero() && *t <= T::one());
    let shift = |j: usize| T::lit(1e-9 * j as f64);
    let sample = |t: T| -> Vec<PlanePoint<T>> {
        strands
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let p = s.at(t);
                PlanePoint::new(p.x + shift(j), p.y)
            })
            .collect()
    };
    let coll = T::lit(COLLISION_TOL);
    let mut order = order_at(&sample(times[0]));
    let mut word = Vec::new();
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let (p0, p1) = (sample(t0), sample(t1));
        // pairwise crossing times inside the interval, linear motion
        let mut events: Vec<(T, usize, usize)> = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                let d0 = p0[a].x - p0[b].x;
                let d1 = p1[a].x - p1[b].x;
                if (d0 < T::zero() && d1 >= T::zero()) || (d0 > T::zero() && d1 <= T::zero()) {
                    let u = d0 / (d0 - d1);
                    events.push((u, a, b));
                }
            }
        }
        events.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        for (u, a, b) in events {
            let t = t0 + (t1 - t0) * u;
            let pos_a = order.iter().position(|s| *s == a).unwrap();
            let pos_b = order.iter().position(|s| *s == b).unwrap();
            let (lo, hi) = (pos_a.min(pos_b), pos_a.max(pos_b));
            if hi != lo + 1 {
                return Err(LinkingError::DegenerateCrossing { time: to_f64(t) });
            }
            let left = order[lo];
            let right = order[hi];
            let ya = p0[left].y + (p1[left].y - p0[left].y) * u;
            let yb = p0[right].y + (p1[right].y - p0[right].y) * u;
            if (ya - yb).abs() <= coll {
                return Err(LinkingError::StrandCollision {
                    time: to_f64(t),
                    a: left,
                    b: right,
                });
            }
            let gen = (lo + 1) as i32;
            word.push(if ya < yb { gen } else { -gen });
            order.swap(lo, hi);
        }
    }
    Ok(BraidWord::new(word, k).free_reduce())
}

/// `perm[p]` for the strands themselves: final order position of the strand that starts at
/// position `p`.
pub fn endpoint_permutation<T: Scalar>(strands: &[Strand<T>]) -> Vec<usize> {
    let first: Vec<PlanePoint<T>> = strands.iter().map(|s| s.points[0]).collect();
    let last: Vec<PlanePoint<T>> = strands.iter().map(|s| *s.points.last().unwrap()).collect();
    let shifted = |pts: Vec<PlanePoint<T>>| -> Vec<PlanePoint<T>> {
        pts.into_iter()
            .enumerate()
            .map(|(j, p)| PlanePoint::new(p.x + T::lit(1e-9 * j as f64), p.y))
            .collect()
    };
    let start = order_at(&shifted(first));
    let end = order_at(&shifted(last));
    let mut perm = vec![0; strands.len()];
    for (p, s) in start.iter().enumerate() {
        perm[p] = end.iter().position(|e| e == s).unwrap();
    }
    perm
}

/// Braid traced by fixed points under the flow, sampled at `samples` steps.
pub fn braid_from_flow<T: Scalar>(
    h: &Hamiltonian<T>,
    points: &[PlanePoint<T>],
    samples: usize,
    tol: T,
) -> Result<BraidWord, LinkingError> {
    let strands = flow_strands(h, points, samples, tol)?;
    braid_word(&strands)
}

pub fn flow_strands<T: Scalar>(
    h: &Hamiltonian<T>,
    points: &[PlanePoint<T>],
    samples: usize,
    tol: T,
) -> Result<Vec<Strand<T>>, LinkingError> {
    points
        .iter()
        .map(|p| {
            Ok(Strand::uniform(flow_path(
                h,
                *p,
                T::zero(),
                T::one(),
                samples,
                tol,
            )?))
        })
        .collect()
}

/// Doubles the sampling from `initial` until the word is unchanged twice in a row.
pub fn braid_from_flow_stable<T: Scalar>(
    h: &Hamiltonian<T>,
    points: &[PlanePoint<T>],
    initial: usize,
    max_samples: usize,
    tol: T,
) -> Result<(BraidWord, usize), LinkingError> {
    let mut samples = initial.max(1);
    let mut prev = braid_from_flow(h, points, samples, tol)?;
    let mut same = 0;
    while samples < max_samples {
        samples *= 2;
        let w = braid_from_flow(h, points, samples, tol)?;
        if w == prev {
            same += 1;
            if same == 2 {
                break;
            }
        } else {
            same = 0;
        }
        prev = w;
    }
    Ok((prev, samples))
}

/// Braid of the staircase loops of the given points, each traversed once over `[0, 1]`.
pub fn braid_of_loops<T: Scalar>(points: &[Vec<T>]) -> Result<BraidWord, LinkingError> {
    let strands: Vec<Strand<T>> = points
        .iter()
        .map(|x| Strand::from_loop(&gamma_loop(x, true)))
        .collect();
    braid_word(&strands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(radius: f64, turns: f64, samples: usize) -> Strand<f64> {
        Strand::uniform(
            (0..=samples)
                .map(|k| {
                    let a = 2.0 * PI * turns * k as f64 / samples as f64;
                    PlanePoint::new(radius * a.cos(), radius * a.sin())
                })
                .collect(),
        )
    }

    #[test]
    fn linking_function_examples() {
        assert_eq!(linking_l(&[1.0, 1.0, 1.0, 1.0]).get(), Some(0));
        assert_eq!(linking_l(&[1.0, 1.0, -1.0, -1.0]).get(), Some(1));
        let r = linking_l(&[1.0, 0.0, -1.0, 1.0]);
        assert!(!r.defined);
        assert_eq!(r.witness, Some(1));
        // zero with agreeing neighbours is bridged
        assert_eq!(linking_l(&[1.0, 1.0, 0.0, 1.0]).get(), Some(0));
    }

    #[test]
    fn staircase_of_small_vector() {
        let l = gamma_loop(&[1.0, 2.0, 3.0, 4.0], false);
        let v: Vec<(f64, f64)> = l.vertices.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(v, vec![(1.0, 2.0), (3.0, 2.0), (3.0, 4.0), (1.0, 4.0)]);
        assert!(l.is_staircase());
        let z = gamma_loop(&[0.0f32; 6], true);
        assert!(z.vertices.iter().all(|p| p.x == 0.0 && p.y == 0.0));
        assert_eq!(z.period(), 1.0);
    }

    #[test]
    fn winding_examples() {
        let origin = gamma_loop(&[0.0; 4], false);
        let square = gamma_loop(&[1.0, 1.0, -1.0, -1.0], false);
        assert_eq!(lk_two_loops(&origin, &square).unwrap(), 2);
        assert_eq!(lk_two_loops(&square, &origin).unwrap(), 2);
        let a = gamma_loop(&[1.0, 2.0, 1.0, 2.0], false);
        let b = gamma_loop(&[3.0, 2.0, 3.0, 2.0], false);
        assert_eq!(lk_two_loops(&a, &b).unwrap(), 0);
        assert!(matches!(
            lk_two_loops(&a, &a),
            Err(LinkingError::CoincidenceAtTime { .. })
        ));
    }

    #[test]
    fn full_turn_is_square_of_generator() {
        let w = braid_word(&[
            Strand::constant(PlanePoint::new(0.0, 0.0)),
            circle(0.5, 1.0, 64),
        ])
        .unwrap();
        assert_eq!(w.generators, vec![1, 1]);
        assert_eq!(w.lk(), 2);
        assert_eq!(w.to_string(), "1 1");
        let back: BraidWord = "1 1".parse().unwrap();
        assert_eq!(back, w);
        let cw = braid_word(&[
            Strand::constant(PlanePoint::new(0.0, 0.0)),
            circle(0.5, -1.0, 64),
        ])
        .unwrap();
        assert_eq!(cw.lk(), -2);
    }

    #[test]
    fn constant_strands_give_empty_word() {
        let w = braid_word(&[
            Strand::constant(PlanePoint::new(0.0, 0.0)),
            Strand::constant(PlanePoint::new(1.0, 0.0)),
        ])
        .unwrap();
        assert!(w.generators.is_empty());
        assert_eq!(w.to_string(), "");
    }

    #[test]
    fn free_reduction_and_permutation() {
        let w = BraidWord::new(vec![1, 2, -2, -1, 2], 3).free_reduce();
        assert_eq!(w.generators, vec![2]);
        assert_eq!(w.permutation(), vec![0, 2, 1]);
    }

    #[test]
    fn half_turn_swaps_endpoints() {
        let a = circle(1.0, 0.5, 40);
        let b = Strand::uniform(
            a.points
                .iter()
                .map(|p| PlanePoint::new(-p.x, -p.y))
                .collect(),
        );
        let c = Strand::constant(PlanePoint::new(3.0, 0.5));
        let strands = vec![a, b, c];
        let w = braid_word(&strands).unwrap();
        assert_eq!(w.permutation(), endpoint_permutation(&strands));
        assert_eq!(w.lk(), 1);
    }

    #[test]
    fn stabilized_and_gauged_loops() {
        let x = [0.3, -0.2, 0.5, 0.1];
        assert_eq!(
            gamma_pushforward_stabilize(&x, &[1.0, 2.0]),
            gamma_pushforward_stabilize(&x, &[-4.0, 0.5])
        );
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(
            gamma_pushforward_gauge(&x, &id).unwrap(),
            gamma_loop(&x, false)
        );
    }
}
