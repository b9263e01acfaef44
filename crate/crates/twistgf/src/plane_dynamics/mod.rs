//! Compactly supported Hamiltonian flows on the plane, their slicing into short pieces, and
//! the alternating decomposition into twist maps.
//!
//! Sign convention: `-dH = i_X (dx ^ dy)`, i.e. `x' = -dH/dy`, `y' = dH/dx`, so that
//! `H = (eps/2)(x^2 + y^2)` generates the counter-clockwise rotation by `eps t`.

pub mod fixtures;
mod hamiltonian;
pub mod ode;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use hamiltonian::{plateau, FamilyId, Hamiltonian, HamiltonianError, Jet};
use ode::{Control, Dopri, OdeError};

use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanePoint<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> PlanePoint<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> T {
        self.x.hypot(self.y)
    }

    pub fn dist(&self, o: &Self) -> T {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Row-major 2x2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<T>(pub [[T; 2]; 2]);

impl<T: Scalar> Mat2<T> {
    pub fn zero() -> Self {
        Self([[T::zero(); 2]; 2])
    }

    pub fn identity() -> Self {
        Self([[T::one(), T::zero()], [T::zero(), T::one()]])
    }

    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self([[a, b], [c, d]])
    }

    pub fn det(&self) -> T {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut m = [[T::zero(); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j];
            }
        }
        Self(m)
    }

    pub fn apply(&self, p: PlanePoint<T>) -> PlanePoint<T> {
        PlanePoint::new(
            self.0[0][0] * p.x + self.0[0][1] * p.y,
            self.0[1][0] * p.x + self.0[1][1] * p.y,
        )
    }

    pub fn scale(&self, c: T) -> Self {
        Self([
            [self.0[0][0] * c, self.0[0][1] * c],
            [self.0[1][0] * c, self.0[1][1] * c],
        ])
    }

    pub fn add(&self, o: &Self) -> Self {
        Self([
            [self.0[0][0] + o.0[0][0], self.0[0][1] + o.0[0][1]],
            [self.0[1][0] + o.0[1][0], self.0[1][1] + o.0[1][1]],
        ])
    }

    pub fn max_abs_diff(&self, o: &Self) -> T {
        let mut m = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.0[i][j] - o.0[i][j]).abs());
            }
        }
        m
    }

    /// Counter-clockwise rotation by `angle`.
    pub fn rotation(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, -s, s, c)
    }
}

/// Axis-aligned rectangle in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

impl<T: Scalar> Rect<T> {
    pub fn square(half: T) -> Self {
        Self {
            x_min: -half,
            x_max: half,
            y_min: -half,
            y_max: half,
        }
    }

    /// `grid x grid` points including the corners.
    pub fn grid(&self, grid: usize) -> Vec<PlanePoint<T>> {
        let g = grid.max(2);
        let den = T::from_usize(g - 1).unwrap();
        let mut out = Vec::with_capacity(g * g);
        for i in 0..g {
            for j in 0..g {
                let u = T::from_usize(i).unwrap() / den;
                let v = T::from_usize(j).unwrap() / den;
                out.push(PlanePoint::new(
                    self.x_min + (self.x_max - self.x_min) * u,
                    self.y_min + (self.y_max - self.y_min) * v,
                ));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("adaptive integrator failed to meet tolerance ({0})")]
    StepFailure(#[from] OdeError),
    #[error("not a twist map: {reason}")]
    NotTwist { reason: String },
    #[error("no twist decomposition found up to n = {cap}")]
    DecompositionFailure { cap: usize },
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
}

/// Image, Jacobian and action integral `int (H - y dH/dy) dt` of a flow segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowResult<T> {
    pub point: PlanePoint<T>,
    pub jacobian: Mat2<T>,
    pub action: T,
}

/// Integrates the Hamiltonian flow and its variational equation from `t0` to `t1`.
pub fn flow_full<T: Scalar>(
    h: &Hamiltonian<T>,
    p: PlanePoint<T>,
    t0: T,
    t1: T,
    tol: T,
) -> Result<FlowResult<T>, DynamicsError> {
    if p.norm() >= h.support_radius() || t0 == t1 {
        return Ok(FlowResult {
            point: p,
            jacobian: Mat2::identity(),
            action: T::zero(),
        });
    }
    let y0 = [
        p.x,
        p.y,
        T::one(),
        T::zero(),
        T::zero(),
        T::one(),
        T::zero(),
    ];
    let rhs = |t: T, s: &[T], f: &mut [T]| {
        let jet = h.jet(t, PlanePoint::new(s[0], s[1]));
        let [hx, hy] = jet.grad;
        let [[hxx, hxy], [hyx, hyy]] = jet.hess.0;
        f[0] = -hy;
        f[1] = hx;
        // A = [[-H_yx, -H_yy], [H_xx, H_xy]], J' = A J
        let a = [[-hyx, -hyy], [hxx, hxy]];
        f[2] = a[0][0] * s[2] + a[0][1] * s[4];
        f[3] = a[0][0] * s[3] + a[0][1] * s[5];
        f[4] = a[1][0] * s[2] + a[1][1] * s[4];
        f[5] = a[1][0] * s[3] + a[1][1] * s[5];
        f[6] = jet.value - s[1] * hy;
    };
    let (_, s) = Dopri::new(tol).solve(rhs, t0, &y0, t1, |_| Control::Continue)?;
    Ok(FlowResult {
        point: PlanePoint::new(s[0], s[1]),
        jacobian: Mat2::new(s[2], s[3], s[4], s[5]),
        action: s[6],
    })
}

/// Time-`t1` image of `p` under the flow started at time `t0`, with its Jacobian.
pub fn flow<T: Scalar>(
    h: &Hamiltonian<T>,
    p: PlanePoint<T>,
    t0: T,
    t1: T,
    tol: T,
) -> Result<(PlanePoint<T>, Mat2<T>), DynamicsError> {
    let r = flow_full(h, p, t0, t1, tol)?;
    Ok((r.point, r.jacobian))
}

/// Samples the trajectory `t -> phi^t(p)` on `samples + 1` equally spaced times in `[t0, t1]`.
pub fn flow_path<T: Scalar>(
    h: &Hamiltonian<T>,
    p: PlanePoint<T>,
    t0: T,
    t1: T,
    samples: usize,
    tol: T,
) -> Result<Vec<PlanePoint<T>>, DynamicsError> {
    let mut out = vec![p];
    let mut cur = p;
    let den = T::from_usize(samples.max(1)).unwrap();
    for k in 0..samples.max(1) {
        let a = t0 + (t1 - t0) * T::from_usize(k).unwrap() / den;
        let b = t0 + (t1 - t0) * T::from_usize(k + 1).unwrap() / den;
        cur = flow_full(h, cur, a, b, tol)?.point;
        out.push(cur);
    }
    Ok(out)
}

/// A flow segment of a Hamiltonian between two times.
#[derive(Clone, Debug)]
pub struct FlowMap<T> {
    pub hamiltonian: Arc<Hamiltonian<T>>,
    pub t0: T,
    pub t1: T,
    pub tol: T,
}

/// An area-preserving map of the plane.
#[derive(Clone, Debug)]
pub enum PlaneMap<T> {
    Linear(Mat2<T>),
    Flow(FlowMap<T>),
    /// Applied left to right: `Compose([a, b])` is `b o a`.
    Compose(Vec<PlaneMap<T>>),
}

impl<T: Scalar> PlaneMap<T> {
    pub fn identity() -> Self {
        Self::Linear(Mat2::identity())
    }

    /// Clockwise quarter turn `R(x, y) = (y, -x)`.
    pub fn rotation() -> Self {
        Self::Linear(Mat2::new(T::zero(), T::one(), -T::one(), T::zero()))
    }

    /// `R^{-1}(x, y) = (-y, x)`.
    pub fn inverse_rotation() -> Self {
        Self::Linear(Mat2::new(T::zero(), -T::one(), T::one(), T::zero()))
    }

    /// `D(x, y) = (x + y, y)`.
    pub fn dehn_twist() -> Self {
        Self::Linear(Mat2::new(T::one(), T::one(), T::zero(), T::one()))
    }

    pub fn flow(h: Arc<Hamiltonian<T>>, t0: T, t1: T, tol: T) -> Self {
        Self::Flow(FlowMap {
            hamiltonian: h,
            t0,
            t1,
            tol,
        })
    }

    /// `second o self`.
    pub fn then(self, second: PlaneMap<T>) -> Self {
        let mut parts = match self {
            Self::Compose(v) => v,
            other => vec![other],
        };
        match second {
            Self::Compose(v) => parts.extend(v),
            other => parts.push(other),
        }
        Self::Compose(parts)
    }

    pub fn apply_full(&self, p: PlanePoint<T>) -> Result<FlowResult<T>, DynamicsError> {
        match self {
            Self::Linear(m) => Ok(FlowResult {
                point: m.apply(p),
                jacobian: *m,
                action: T::zero(),
            }),
            Self::Flow(f) => flow_full(&f.hamiltonian, p, f.t0, f.t1, f.tol),
            Self::Compose(parts) => {
                let mut acc = FlowResult {
                    point: p,
                    jacobian: Mat2::identity(),
                    action: T::zero(),
                };
                for part in parts {
                    let r = part.apply_full(acc.point)?;
                    acc = FlowResult {
                        point: r.point,
                        jacobian: r.jacobian.mul(&acc.jacobian),
                        action: acc.action + r.action,
                    };
                }
                Ok(acc)
            }
        }
    }

    pub fn apply(&self, p: PlanePoint<T>) -> Result<PlanePoint<T>, DynamicsError> {
        Ok(self.apply_full(p)?.point)
    }

    pub fn jacobian(&self, p: PlanePoint<T>) -> Result<Mat2<T>, DynamicsError> {
        Ok(self.apply_full(p)?.jacobian)
    }

    /// Radius outside of which the map agrees with its linear part, if it has compact
    /// support relative to a rotation.
    pub fn support_radius(&self) -> Option<T> {
        match self {
            Self::Linear(_) => None,
            Self::Flow(f) => Some(f.hamiltonian.support_radius()),
            Self::Compose(parts) => parts
                .iter()
                .filter_map(|p| p.support_radius())
                .fold(None, |m: Option<T>, r| Some(m.map_or(r, |v| v.max(r)))),
        }
    }

    /// Product of the linear parts (what the map equals far away).
    pub fn linear_part(&self) -> Mat2<T> {
        match self {
            Self::Linear(m) => *m,
            Self::Flow(_) => Mat2::identity(),
            Self::Compose(parts) => parts
                .iter()
                .fold(Mat2::identity(), |acc, p| p.linear_part().mul(&acc)),
        }
    }
}

/// Splits the isotopy into `n` flow maps over `[i/n, (i+1)/n]`.
pub fn slice_isotopy<T: Scalar>(h: &Arc<Hamiltonian<T>>, n: usize, tol: T) -> Vec<PlaneMap<T>> {
    let n = n.max(1);
    let den = T::from_usize(n).unwrap();
    (0..n)
        .map(|i| {
            PlaneMap::flow(
                Arc::clone(h),
                T::from_usize(i).unwrap() / den,
                T::from_usize(i + 1).unwrap() / den,
                tol,
            )
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwistDirection {
    Right,
    Left,
}

/// Sampled evidence that `dx1/dy0` keeps a constant sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistCertificate<T> {
    pub direction: TwistDirection,
    pub margin: T,
    pub samples: usize,
}

pub fn twist_certificate<T: Scalar>(
    m: &PlaneMap<T>,
    rect: &Rect<T>,
    grid: usize,
) -> Result<TwistCertificate<T>, DynamicsError> {
    let pts = rect.grid(grid);
    let mut min_pos = T::infinity();
    let mut min_neg = T::infinity();
    let (mut pos, mut neg) = (0usize, 0usize);
    for p in &pts {
        let d = m.jacobian(*p)?.0[0][1];
        if d > T::zero() {
            pos += 1;
            min_pos = min_pos.min(d);
        } else if d < T::zero() {
            neg += 1;
            min_neg = min_neg.min(-d);
        }
    }
    let samples = pts.len();
    if pos == samples {
        Ok(TwistCertificate {
            direction: TwistDirection::Right,
            margin: min_pos,
            samples,
        })
    } else if neg == samples {
        Ok(TwistCertificate {
            direction: TwistDirection::Left,
            margin: min_neg,
            samples,
        })
    } else {
        Err(DynamicsError::NotTwist {
            reason: format!("{pos} positive, {neg} negative of {samples} samples"),
        })
    }
}

/// Settings for [`alternating_decomposition`].
#[derive(Clone, Copy, Debug)]
pub struct DecompositionConfig<T> {
    pub tol: T,
    pub margin_threshold: T,
    pub cap: usize,
    pub grid: usize,
}

impl<T: Scalar> Default for DecompositionConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            margin_threshold: T::lit(0.1),
            cap: 64,
            grid: 41,
        }
    }
}

/// `Phi_0 = R, Phi_1 = phi_0 o R^{-1}, ..., Phi_{2n} = R, Phi_{2n+1} = R^{-1}`.
#[derive(Clone, Debug)]
pub struct Decomposition<T> {
    pub hamiltonian: Arc<Hamiltonian<T>>,
    pub n: usize,
    pub factors: Vec<PlaneMap<T>>,
    pub certificates: Vec<TwistCertificate<T>>,
    pub tol: T,
}

impl<T: Scalar> Decomposition<T> {
    /// Composite `Phi_{2n+1} o ... o Phi_0`.
    pub fn compose(&self, p: PlanePoint<T>) -> Result<PlanePoint<T>, DynamicsError> {
        let mut q = p;
        for f in &self.factors {
            q = f.apply(q)?;
        }
        Ok(q)
    }

    /// Max over a grid of the distance between the composite and the time-one map.
    pub fn composition_residual(&self, grid: usize) -> Result<T, DynamicsError> {
        let r = self.hamiltonian.support_radius();
        let mut worst = T::zero();
        for p in Rect::square(r).grid(grid) {
            let a = self.compose(p)?;
            let (b, _) = flow(&self.hamiltonian, p, T::zero(), T::one(), self.tol)?;
            worst = worst.max(a.dist(&b));
        }
        Ok(worst)
    }
}

/// Decomposes `phi_H^1` into `2n+2` alternating twist factors, doubling `n` until every
/// slice passes the twist certificate.
pub fn alternating_decomposition<T: Scalar>(
    h: &Arc<Hamiltonian<T>>,
    n: usize,
    cfg: &DecompositionConfig<T>,
) -> Result<Decomposition<T>, DynamicsError> {
    let mut n = n.max(1);
    let rect = Rect::square(h.support_radius());
    loop {
        if let Some(d) = try_decomposition(h, n, cfg, &rect)? {
            return Ok(d);
        }
        if n >= cfg.cap {
            return Err(DynamicsError::DecompositionFailure { cap: cfg.cap });
        }
        n = (2 * n).min(cfg.cap);
    }
}

/// Builds the decomposition with exactly `n` slices, refusing if a slice is not twist
/// enough.
pub fn decomposition_with_n<T: Scalar>(
    h: &Arc<Hamiltonian<T>>,
    n: usize,
    cfg: &DecompositionConfig<T>,
) -> Result<Decomposition<T>, DynamicsError> {
    let rect = Rect::square(h.support_radius());
    try_decomposition(h, n, cfg, &rect)?.ok_or(DynamicsError::DecompositionFailure { cap: n })
}

fn try_decomposition<T: Scalar>(
    h: &Arc<Hamiltonian<T>>,
    n: usize,
    cfg: &DecompositionConfig<T>,
    rect: &Rect<T>,
) -> Result<Option<Decomposition<T>>, DynamicsError> {
    let slices = slice_isotopy(h, n, cfg.tol);
    let rot_cert = TwistCertificate {
        direction: TwistDirection::Right,
        margin: T::one(),
        samples: 1,
    };
    let mut factors = Vec::with_capacity(2 * n + 2);
    let mut certificates = Vec::with_capacity(2 * n + 2);
    for slice in slices {
        let odd = PlaneMap::inverse_rotation().then(slice);
        let cert = match twist_certificate(&odd, rect, cfg.grid) {
            Ok(c) => c,
            Err(DynamicsError::NotTwist { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        if cert.margin <= cfg.margin_threshold {
            return Ok(None);
        }
        factors.push(PlaneMap::rotation());
        certificates.push(rot_cert);
        factors.push(odd);
        certificates.push(cert);
    }
    factors.push(PlaneMap::rotation());
    certificates.push(rot_cert);
    factors.push(PlaneMap::inverse_rotation());
    certificates.push(TwistCertificate {
        direction: TwistDirection::Left,
        margin: T::one(),
        samples: 1,
    });
    Ok(Some(Decomposition {
        hamiltonian: Arc::clone(h),
        n,
        factors,
        certificates,
        tol: cfg.tol,
    }))
}

/// A nondegenerate fixed point found by [`fixed_points`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FixedPoint<T> {
    pub point: PlanePoint<T>,
    pub residual: T,
    /// `det(D phi - I)`; its sign is `(-1)^(Morse index of -H)` for small flows.
    pub det: T,
}

/// Independent fixed-point search: 2-D Newton on `phi(p) - p` seeded on a grid over the
/// support disk, keeping nondegenerate limits (`|det(D phi - I)| > degeneracy`).
pub fn fixed_points<T: Scalar>(
    h: &Hamiltonian<T>,
    grid: usize,
    tol: T,
    degeneracy: T,
) -> Result<Vec<FixedPoint<T>>, DynamicsError> {
    fixed_points_within(h, h.support_radius(), grid, tol, degeneracy)
}

/// As [`fixed_points`], with seeds restricted to the disk of radius `seed_radius`.
pub fn fixed_points_within<T: Scalar>(
    h: &Hamiltonian<T>,
    seed_radius: T,
    grid: usize,
    tol: T,
    degeneracy: T,
) -> Result<Vec<FixedPoint<T>>, DynamicsError> {
    let r = h.support_radius();
    let seed_radius = seed_radius.min(r);
    let flow_tol = tol * T::lit(1e-3);
    let mut out: Vec<FixedPoint<T>> = Vec::new();
    for seed in Rect::square(seed_radius).grid(grid) {
        if seed.norm() >= seed_radius {
            continue;
        }
        let mut p = seed;
        let mut res = None;
        for _ in 0..50 {
            let (q, j) = flow(h, p, T::zero(), T::one(), flow_tol)?;
            let (fx, fy) = (q.x - p.x, q.y - p.y);
            let a = j.0[0][0] - T::one();
            let b = j.0[0][1];
            let c = j.0[1][0];
            let d = j.0[1][1] - T::one();
            let det = a * d - b * c;
            if (fx * fx + fy * fy).sqrt() <= tol {
                res = Some(FixedPoint {
                    point: p,
                    residual: (fx * fx + fy * fy).sqrt(),
                    det,
                });
                break;
            }
            if det.abs() <= degeneracy {
                break;
            }
            p = PlanePoint::new(p.x - (d * fx - b * fy) / det, p.y - (a * fy - c * fx) / det);
            if !(p.norm() < r) {
                break;
            }
        }
        let Some(fp) = res else { continue };
        if fp.det.abs() <= degeneracy {
            continue;
        }
        if out.iter().all(|o| o.point.dist(&fp.point) > T::lit(1e-7)) {
            out.push(fp);
        }
    }
    out.sort_by(|a, b| {
        a.point
            .x
            .partial_cmp(&b.point.x)
            .unwrap()
            .then(a.point.y.partial_cmp(&b.point.y).unwrap())
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_identity() {
        let h = Hamiltonian::<f64>::zero(2.0);
        let (q, j) = flow(&h, PlanePoint::new(0.3, -0.2), 0.1, 0.9, 1e-10).unwrap();
        assert_eq!(q, PlanePoint::new(0.3, -0.2));
        assert_eq!(j, Mat2::identity());
    }

    #[test]
    fn rotation_flow_matches_closed_form() {
        // oracle: linear ODE x' = -eps y, y' = eps x solved by exp of the generator
        let eps = 0.37;
        let h = Hamiltonian::scaled_rotation(eps, 1.0, 2.0);
        let p = PlanePoint::new(0.3, 0.4);
        let (q, j) = flow(&h, p, 0.2, 0.9, 1e-11).unwrap();
        let m = Mat2::rotation(eps * 0.7);
        assert!(q.dist(&m.apply(p)) < 1e-9);
        assert!(j.max_abs_diff(&m) < 1e-9);
        let (o, jo) = flow(&h, PlanePoint::new(0.0, 0.0), 0.0, 1.0, 1e-11).unwrap();
        assert_eq!(o, PlanePoint::new(0.0, 0.0));
        assert!(jo.max_abs_diff(&Mat2::rotation(eps)) < 1e-9);
    }

    #[test]
    fn outside_support_is_fixed() {
        let h = Hamiltonian::scaled_rotation(0.5, 1.0, 2.0);
        let (q, j) = flow(&h, PlanePoint::new(2.0, 0.5), 0.0, 1.0, 1e-10).unwrap();
        assert_eq!(q, PlanePoint::new(2.0, 0.5));
        assert_eq!(j, Mat2::identity());
    }

    #[test]
    fn slicing_rotation() {
        let eps = 0.4;
        let h = Arc::new(Hamiltonian::scaled_rotation(eps, 1.0, 2.0));
        let slices = slice_isotopy(&h, 4, 1e-11);
        assert_eq!(slices.len(), 4);
        let p = PlanePoint::new(0.5, -0.1);
        let mut q = p;
        for s in &slices {
            let j = s.jacobian(q).unwrap();
            assert!(j.max_abs_diff(&Mat2::rotation(eps / 4.0)) < 1e-9);
            q = s.apply(q).unwrap();
        }
        assert!(q.dist(&Mat2::rotation(eps).apply(p)) < 1e-9);
        let zero = Arc::new(Hamiltonian::<f64>::zero(1.0));
        for s in slice_isotopy(&zero, 5, 1e-10) {
            assert_eq!(s.apply(p).unwrap(), p);
        }
    }

    #[test]
    fn certificates_of_model_maps() {
        let r = Rect::square(1.0);
        let d = twist_certificate(&PlaneMap::<f64>::dehn_twist(), &r, 5).unwrap();
        assert_eq!(d.direction, TwistDirection::Right);
        assert_eq!(d.margin, 1.0);
        let rot = twist_certificate(&PlaneMap::<f64>::rotation(), &r, 5).unwrap();
        assert_eq!(rot.direction, TwistDirection::Right);
        assert_eq!(rot.margin, 1.0);
        assert!(matches!(
            twist_certificate(&PlaneMap::<f64>::identity(), &r, 5),
            Err(DynamicsError::NotTwist { .. })
        ));
    }

    #[test]
    fn decomposition_of_zero_and_rotation() {
        let cfg = DecompositionConfig::default();
        let zero = Arc::new(Hamiltonian::<f64>::zero(1.0));
        let d = alternating_decomposition(&zero, 1, &cfg).unwrap();
        assert_eq!(d.factors.len(), 4);
        let p = PlanePoint::new(0.2, 0.7);
        assert!(d.compose(p).unwrap().dist(&p) < 1e-15);

        let h = Arc::new(Hamiltonian::scaled_rotation(0.3, 1.0, 2.0));
        let d = alternating_decomposition(&h, 1, &cfg).unwrap();
        assert_eq!(d.factors.len(), 2 * d.n + 2);
        assert_eq!(d.certificates[1].direction, TwistDirection::Left);
        assert!(d.composition_residual(20).unwrap() < 1e-9);
    }

    #[test]
    fn decomposition_refines_large_rotation() {
        let h = Arc::new(Hamiltonian::scaled_rotation(4.0, 1.0, 2.0));
        let cfg = DecompositionConfig::default();
        let d = alternating_decomposition(&h, 1, &cfg).unwrap();
        assert!(d.n > 1);
        let capped = DecompositionConfig { cap: 2, ..cfg };
        assert!(matches!(
            alternating_decomposition(&h, 1, &capped),
            Err(DynamicsError::DecompositionFailure { cap: 2 })
        ));
    }

    #[test]
    fn f32_flow() {
        let h = Hamiltonian::<f32>::scaled_rotation(0.5, 1.0, 2.0);
        let (q, _) = flow(&h, PlanePoint::new(0.5f32, 0.0), 0.0, 1.0, 1e-6).unwrap();
        let e = Mat2::rotation(0.5f32).apply(PlanePoint::new(0.5, 0.0));
        assert!(q.dist(&e) < 1e-4);
    }
}
