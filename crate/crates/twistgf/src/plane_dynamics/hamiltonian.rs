//! Built-in compactly supported Hamiltonians with closed-form second jets.
//!
//! Every family is cut off by the plateau bump
//!
//! ```text
//! rho(r) = 1                              r <= r1
//! rho(r) = f(1-u) / (f(1-u) + f(u))       u = (r - r1)/(r2 - r1), f(s) = exp(-1/s)
//! rho(r) = 0                              r >= r2
//! ```
//!
//! which is smooth and flat at both ends.

use serde::{Deserialize, Serialize};

use super::{Mat2, PlanePoint};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    Zero,
    /// `(eps/2) rho(r) (x^2 + y^2)`; params `[eps, r1, r2]`.
    ScaledRotation,
    /// `P(x, y) rho(r)`; params `[r1, r2, c_00, c_10, c_01, c_20, c_11, c_02, ...]`,
    /// monomials `x^(k-j) y^j` grouped by total degree `k`.
    PolynomialBump,
    /// Two Gaussian wells times `rho`; params `[a1, a2, d, s, r1, r2]` with centres
    /// `(-d, 0)` and `(d, 0)`, optionally followed by `[turns, r1_frame, r2_frame]`: the
    /// wells then turn `turns` full times during `t in [0, 1]`, carried by a radial term
    /// of angular velocity `2 pi turns` on `r <= r1_frame` fading to 0 at `r2_frame`.
    DoubleBump,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum HamiltonianError {
    #[error("invalid parameters for {family:?}: {reason}")]
    InvalidParameters { family: FamilyId, reason: String },
}

/// Value, gradient and Hessian at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<T> {
    pub value: T,
    pub grad: [T; 2],
    pub hess: Mat2<T>,
}

impl<T: Scalar> Jet<T> {
    fn zero() -> Self {
        Self {
            value: T::zero(),
            grad: [T::zero(); 2],
            hess: Mat2::zero(),
        }
    }

    fn scale(self, c: T) -> Self {
        Self {
            value: self.value * c,
            grad: [self.grad[0] * c, self.grad[1] * c],
            hess: self.hess.scale(c),
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            value: self.value + o.value,
            grad: [self.grad[0] + o.grad[0], self.grad[1] + o.grad[1]],
            hess: self.hess.add(&o.hess),
        }
    }

    fn mul(self, o: Self) -> Self {
        let mut h = [[T::zero(); 2]; 2];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.hess.0[i][j] * o.value
                    + self.grad[i] * o.grad[j]
                    + o.grad[i] * self.grad[j]
                    + self.value * o.hess.0[i][j];
            }
        }
        Self {
            value: self.value * o.value,
            grad: [
                self.grad[0] * o.value + self.value * o.grad[0],
                self.grad[1] * o.value + self.value * o.grad[1],
            ],
            hess: Mat2(h),
        }
    }
}

fn flat(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let f = (-1.0 / s).exp();
    (f, f / (s * s), f * (1.0 - 2.0 * s) / (s * s * s * s))
}

/// Plateau bump `rho` and its first two radial derivatives.
pub fn plateau<T: Scalar>(r: T, r1: T, r2: T) -> (T, T, T) {
    if r <= r1 {
        return (T::one(), T::zero(), T::zero());
    }
    if r >= r2 {
        return (T::zero(), T::zero(), T::zero());
    }
    let w = (r2 - r1).to_f64().unwrap();
    let u = ((r - r1).to_f64().unwrap() / w).clamp(0.0, 1.0);
    let (a, da, dda) = flat(1.0 - u);
    let (b, db, ddb) = flat(u);
    // d/du of f(1-u) is -f'(1-u)
    let (ap, app) = (-da, dda);
    let (bp, bpp) = (db, ddb);
    let s = a + b;
    let num = ap * b - a * bp;
    let dnum = app * b - a * bpp;
    let rho = a / s;
    let d1 = num / (s * s);
    let d2 = (dnum * s - 2.0 * num * (ap + bp)) / (s * s * s);
    (T::lit(rho), T::lit(d1 / w), T::lit(d2 / (w * w)))
}

fn radial_jet<T: Scalar>(p: PlanePoint<T>, r1: T, r2: T) -> Jet<T> {
    let r = p.norm();
    let (v, d1, d2) = plateau(r, r1, r2);
    if d1 == T::zero() && d2 == T::zero() {
        return Jet {
            value: v,
            grad: [T::zero(); 2],
            hess: Mat2::zero(),
        };
    }
    let n = [p.x / r, p.y / r];
    let mut h = [[T::zero(); 2]; 2];
    for (i, row) in h.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            let id = if i == j { T::one() } else { T::zero() };
            *e = d2 * n[i] * n[j] + d1 / r * (id - n[i] * n[j]);
        }
    }
    Jet {
        value: v,
        grad: [d1 * n[0], d1 * n[1]],
        hess: Mat2(h),
    }
}

fn gaussian_jet<T: Scalar>(p: PlanePoint<T>, c: [T; 2], amp: T, width: T) -> Jet<T> {
    let dx = p.x - c[0];
    let dy = p.y - c[1];
    let s2 = width * width;
    let g = amp * (-(dx * dx + dy * dy) / s2).exp();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let d = [dx, dy];
    let mut h = [[T::zero(); 2]; 2];
    for (i, row) in h.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            let id = if i == j { T::one() } else { T::zero() };
            *e = g * (four * d[i] * d[j] / (s2 * s2) - two * id / s2);
        }
    }
    Jet {
        value: g,
        grad: [-two * dx / s2 * g, -two * dy / s2 * g],
        hess: Mat2(h),
    }
}

/// Radial term rotating the plane with angular velocity `2 pi turns chi(r)`, where
/// `chi = 1 - S((r - r1)/(r2 - r1))` and `S(u) = 10u^3 - 15u^4 + 6u^5`. Its value is
/// `-2 pi turns int_r^r2 s chi(s) ds`, which vanishes from `r2` on.
fn frame_jet<T: Scalar>(p: PlanePoint<T>, turns: T, r1: T, r2: T) -> Jet<T> {
    let omega = T::lit(2.0 * std::f64::consts::PI) * turns;
    let r = p.norm();
    let w = r2 - r1;
    // antiderivatives of 1 - S(v) and v (1 - S(v))
    let a = |v: T| v - T::lit(2.5) * v.powi(4) + T::lit(3.0) * v.powi(5) - v.powi(6);
    let b = |v: T| {
        v * v / T::lit(2.0) - T::lit(2.0) * v.powi(5) + T::lit(2.5) * v.powi(6)
            - T::lit(6.0 / 7.0) * v.powi(7)
    };
    let (a1, b1) = (T::lit(0.5), T::lit(1.0 / 7.0));
    let (value, chi, dchi) = if r <= r1 {
        let v = -omega * ((r1 * r1 - r * r) / T::lit(2.0) + w * (r1 * a1 + w * b1));
        (v, T::one(), T::zero())
    } else {
        let u = (r - r1) / w;
        let v = -omega * w * (r1 * (a1 - a(u)) + w * (b1 - b(u)));
        let chi = T::one() - u * u * u * (T::lit(10.0) - T::lit(15.0) * u + T::lit(6.0) * u * u);
        let dchi = -T::lit(30.0) * u * u * (T::one() - u) * (T::one() - u) / w;
        (v, chi, dchi)
    };
    let mut h = [[omega * chi, T::zero()], [T::zero(), omega * chi]];
    if r > T::zero() {
        let n = [p.x / r, p.y / r];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = *e + omega * dchi * r * n[i] * n[j];
            }
        }
    }
    Jet {
        value,
        grad: [omega * chi * p.x, omega * chi * p.y],
        hess: Mat2(h),
    }
}

fn square_norm_jet<T: Scalar>(p: PlanePoint<T>) -> Jet<T> {
    let two = T::lit(2.0);
    Jet {
        value: p.x * p.x + p.y * p.y,
        grad: [two * p.x, two * p.y],
        hess: Mat2([[two, T::zero()], [T::zero(), two]]),
    }
}

fn polynomial_jet<T: Scalar>(p: PlanePoint<T>, coeffs: &[T]) -> Jet<T> {
    let mut jet = Jet::zero();
    let mut idx = 0usize;
    let mut degree = 0i32;
    while idx < coeffs.len() {
        for j in 0..=degree {
            if idx >= coeffs.len() {
                break;
            }
            let c = coeffs[idx];
            idx += 1;
            if c == T::zero() {
                continue;
            }
            let i = degree - j;
            jet = jet.add(monomial_jet(p, i, j).scale(c));
        }
        degree += 1;
    }
    jet
}

fn powi<T: Scalar>(v: T, k: i32) -> T {
    if k < 0 {
        T::zero()
    } else {
        v.powi(k)
    }
}

fn monomial_jet<T: Scalar>(p: PlanePoint<T>, i: i32, j: i32) -> Jet<T> {
    let fi = T::from_i32(i).unwrap();
    let fj = T::from_i32(j).unwrap();
    let (x, y) = (p.x, p.y);
    let hxx = fi * (fi - T::one()) * powi(x, i - 2) * powi(y, j);
    let hyy = fj * (fj - T::one()) * powi(x, i) * powi(y, j - 2);
    let hxy = fi * fj * powi(x, i - 1) * powi(y, j - 1);
    Jet {
        value: powi(x, i) * powi(y, j),
        grad: [
            fi * powi(x, i - 1) * powi(y, j),
            fj * powi(x, i) * powi(y, j - 1),
        ],
        hess: Mat2([[hxx, hxy], [hxy, hyy]]),
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Term<T> {
    family: FamilyId,
    params: Vec<T>,
}

impl<T: Scalar> Term<T> {
    fn radius(&self) -> T {
        match self.family {
            FamilyId::Zero => T::zero(),
            FamilyId::ScaledRotation => self.params[2],
            FamilyId::PolynomialBump => self.params[1],
            FamilyId::DoubleBump => {
                if self.params.len() > 6 && self.params[6] != T::zero() {
                    self.params[8].max(self.params[5])
                } else {
                    self.params[5]
                }
            }
        }
    }

    fn is_autonomous(&self) -> bool {
        !(self.family == FamilyId::DoubleBump
            && self.params.len() > 6
            && self.params[6] != T::zero())
    }

    fn jet(&self, t: T, p: PlanePoint<T>) -> Jet<T> {
        let pr = &self.params;
        match self.family {
            FamilyId::Zero => Jet::zero(),
            FamilyId::ScaledRotation => {
                if p.norm() >= pr[2] {
                    return Jet::zero();
                }
                square_norm_jet(p)
                    .mul(radial_jet(p, pr[1], pr[2]))
                    .scale(pr[0] / T::lit(2.0))
            }
            FamilyId::PolynomialBump => {
                if p.norm() >= pr[1] {
                    return Jet::zero();
                }
                polynomial_jet(p, &pr[2..]).mul(radial_jet(p, pr[0], pr[1]))
            }
            FamilyId::DoubleBump => {
                let (a1, a2, d, s, r1, r2) = (pr[0], pr[1], pr[2], pr[3], pr[4], pr[5]);
                let turns = if pr.len() > 6 { pr[6] } else { T::zero() };
                let mut jet = Jet::zero();
                if p.norm() < r2 {
                    let angle = T::lit(2.0 * std::f64::consts::PI) * turns * t;
                    let (sn, cs) = angle.sin_cos();
                    let c1 = [-d * cs, -d * sn];
                    let c2 = [d * cs, d * sn];
                    let wells = gaussian_jet(p, c1, a1, s).add(gaussian_jet(p, c2, a2, s));
                    jet = wells.mul(radial_jet(p, r1, r2));
                }
                if turns != T::zero() && p.norm() < pr[8] {
                    jet = jet.add(frame_jet(p, turns, pr[7], pr[8]));
                }
                jet
            }
        }
    }
}

/// A time-dependent, compactly supported Hamiltonian on the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian<T = f64> {
    terms: Vec<Term<T>>,
    support_radius: T,
}

impl<T: Scalar> Hamiltonian<T> {
    /// Builds a Hamiltonian from a family id and its parameter list.
    pub fn from_family(
        family: FamilyId,
        params: &[T],
        support_radius: T,
    ) -> Result<Self, HamiltonianError> {
        let bad = |reason: &str| HamiltonianError::InvalidParameters {
            family,
            reason: reason.to_string(),
        };
        let check_radii = |r1: T, r2: T| -> Result<(), HamiltonianError> {
            if !(r1 >= T::zero() && r1 < r2) {
                return Err(bad("need 0 <= r1 < r2"));
            }
            if r2 > support_radius {
                return Err(bad("cutoff radius exceeds support_radius"));
            }
            Ok(())
        };
        if !(support_radius > T::zero()) || params.iter().any(|v| !v.is_finite()) {
            return Err(bad("support radius must be positive and parameters finite"));
        }
        match family {
            FamilyId::Zero => {}
            FamilyId::ScaledRotation => {
                if params.len() != 3 {
                    return Err(bad("expected [eps, r1, r2]"));
                }
                check_radii(params[1], params[2])?;
            }
            FamilyId::PolynomialBump => {
                if params.len() < 3 {
                    return Err(bad("expected [r1, r2, coefficients...]"));
                }
                check_radii(params[0], params[1])?;
            }
            FamilyId::DoubleBump => {
                if params.len() != 6 && params.len() != 9 {
                    return Err(bad("expected [a1, a2, d, s, r1, r2] or 9 entries"));
                }
                if !(params[3] > T::zero()) {
                    return Err(bad("width must be positive"));
                }
                check_radii(params[4], params[5])?;
                if params.len() == 9 && params[6] != T::zero() {
                    check_radii(params[7], params[8])?;
                    if params[7] < params[5] {
                        return Err(bad("frame plateau must contain the wells"));
                    }
                    if params[6] != params[6].round() {
                        return Err(bad("turns must be an integer"));
                    }
                }
            }
        }
        Ok(Self {
            terms: vec![Term {
                family,
                params: params.to_vec(),
            }],
            support_radius,
        })
    }

    pub fn zero(support_radius: T) -> Self {
        Self {
            terms: vec![Term {
                family: FamilyId::Zero,
                params: vec![],
            }],
            support_radius,
        }
    }

    pub fn scaled_rotation(eps: T, r1: T, r2: T) -> Self {
        Self::from_family(FamilyId::ScaledRotation, &[eps, r1, r2], r2).expect("valid radii")
    }

    /// Sum of two Hamiltonians; the support radius is the larger one.
    pub fn plus(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self {
            terms,
            support_radius: self.support_radius.max(other.support_radius),
        }
    }

    /// Multiplies the energy by a constant.
    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        for term in &mut out.terms {
            match term.family {
                FamilyId::Zero => {}
                FamilyId::ScaledRotation => term.params[0] = term.params[0] * c,
                FamilyId::PolynomialBump => {
                    for v in term.params.iter_mut().skip(2) {
                        *v = *v * c;
                    }
                }
                FamilyId::DoubleBump => {
                    assert!(term.is_autonomous(), "cannot scale a rotating frame");
                    term.params[0] = term.params[0] * c;
                    term.params[1] = term.params[1] * c;
                }
            }
        }
        out
    }

    pub fn family_id(&self) -> FamilyId {
        self.terms[0].family
    }

    pub fn params(&self) -> &[T] {
        &self.terms[0].params
    }

    pub fn support_radius(&self) -> T {
        self.support_radius
    }

    pub fn is_autonomous(&self) -> bool {
        self.terms.iter().all(Term::is_autonomous)
    }

    /// Radius outside of which every term vanishes.
    pub fn effective_radius(&self) -> T {
        self.terms
            .iter()
            .fold(T::zero(), |m, term| m.max(term.radius()))
    }

    pub fn jet(&self, t: T, p: PlanePoint<T>) -> Jet<T> {
        if p.norm() >= self.support_radius {
            return Jet::zero();
        }
        self.terms
            .iter()
            .fold(Jet::zero(), |acc, term| acc.add(term.jet(t, p)))
    }

    pub fn energy(&self, t: T, p: PlanePoint<T>) -> T {
        self.jet(t, p).value
    }

    pub fn gradient(&self, t: T, p: PlanePoint<T>) -> [T; 2] {
        self.jet(t, p).grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(h: &Hamiltonian<f64>, t: f64, p: PlanePoint<f64>) {
        let e = 1e-6;
        let jet = h.jet(t, p);
        for k in 0..2 {
            let mut pp = p;
            let mut pm = p;
            if k == 0 {
                pp.x += e;
                pm.x -= e;
            } else {
                pp.y += e;
                pm.y -= e;
            }
            let g = (h.energy(t, pp) - h.energy(t, pm)) / (2.0 * e);
            assert!(
                (g - jet.grad[k]).abs() < 1e-7,
                "grad {k}: {g} vs {}",
                jet.grad[k]
            );
            let gp = h.gradient(t, pp);
            let gm = h.gradient(t, pm);
            for i in 0..2 {
                let hh = (gp[i] - gm[i]) / (2.0 * e);
                assert!((hh - jet.hess.0[i][k]).abs() < 1e-6, "hess {i}{k}");
            }
        }
    }

    #[test]
    fn plateau_limits() {
        assert_eq!(plateau(0.5f64, 1.0, 2.0), (1.0, 0.0, 0.0));
        assert_eq!(plateau(2.5f64, 1.0, 2.0), (0.0, 0.0, 0.0));
        let (v, _, _) = plateau(1.5f64, 1.0, 2.0);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn plateau_derivative_matches_difference_quotient() {
        for &r in &[1.05, 1.3, 1.5, 1.77, 1.95] {
            let e = 1e-6;
            let (_, d1, d2) = plateau(r, 1.0f64, 2.0);
            let fd1 = (plateau(r + e, 1.0, 2.0).0 - plateau(r - e, 1.0, 2.0).0) / (2.0 * e);
            let fd2 = (plateau(r + e, 1.0, 2.0).1 - plateau(r - e, 1.0, 2.0).1) / (2.0 * e);
            assert!((d1 - fd1).abs() < 1e-7);
            assert!((d2 - fd2).abs() < 1e-5);
        }
    }

    #[test]
    fn families_have_consistent_jets() {
        let rot = Hamiltonian::scaled_rotation(0.3, 0.8, 1.6);
        let poly = Hamiltonian::from_family(
            FamilyId::PolynomialBump,
            &[0.5, 1.5, 0.1, 0.2, -0.1, 0.05, 0.3, -0.2, 0.01],
            1.5,
        )
        .unwrap();
        let db = Hamiltonian::from_family(
            FamilyId::DoubleBump,
            &[0.1, 0.12, 0.5, 0.5, 1.0, 1.8, 1.0, 2.0, 3.0],
            3.0,
        )
        .unwrap();
        for h in [rot, poly, db] {
            for &(x, y) in &[(0.1, 0.2), (0.9, -0.4), (-1.1, 0.6), (0.3, 1.3)] {
                fd_check(&h, 0.37, PlanePoint::new(x, y));
            }
        }
    }

    #[test]
    fn vanishes_outside_support() {
        let h = Hamiltonian::scaled_rotation(0.3, 0.8, 1.6);
        let j = h.jet(0.0, PlanePoint::new(1.2, 1.2));
        assert_eq!(j, Jet::zero());
    }

    #[test]
    fn rejects_bad_radii() {
        assert!(Hamiltonian::from_family(FamilyId::ScaledRotation, &[0.1, 2.0, 1.0], 3.0).is_err());
        assert!(Hamiltonian::from_family(FamilyId::ScaledRotation, &[0.1, 1.0, 4.0], 3.0).is_err());
    }
}
