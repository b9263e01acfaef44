//! Generating functions `h(x, x')` of single twist factors.
//!
//! Convention: `Phi(x, y) = (x', y')` iff `y = -d1 h(x, x')` and `y' = d2 h(x, x')`.

use serde::Serialize;

use super::GenfunError;
use crate::plane_dynamics::{
    FlowResult, Mat2, PlaneMap, PlanePoint, Rect, TwistCertificate, TwistDirection,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    /// `-x x'`, generating `R`.
    ClosedFormRotation,
    /// `x x'`, generating `R^{-1}`.
    ClosedFormInverseRotation,
    /// Any other linear twist map.
    ClosedFormQuadratic,
    Numeric,
}

/// Value, first partials and Hessian of a factor at `(x, x')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub hess: [[f64; 2]; 2],
}

impl FactorEval {
    /// `g = -d1 h`.
    pub fn g(&self) -> f64 {
        -self.d1
    }

    /// `g' = d2 h`.
    pub fn g_prime(&self) -> f64 {
        self.d2
    }
}

/// `h(x, x') = a x^2 / 2 + b x x' + c x'^2 / 2` generating a linear twist map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticFactor {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub matrix: Mat2<f64>,
}

impl QuadraticFactor {
    pub fn from_linear(m: Mat2<f64>) -> Result<Self, GenfunError> {
        let [[m00, m01], [_, m11]] = m.0;
        if m01 == 0.0 {
            return Err(GenfunError::NotTwist);
        }
        Ok(Self {
            a: m00 / m01,
            b: -1.0 / m01,
            c: m11 / m01,
            matrix: m,
        })
    }

    pub fn eval(&self, x: f64, xp: f64) -> FactorEval {
        FactorEval {
            value: 0.5 * self.a * x * x + self.b * x * xp + 0.5 * self.c * xp * xp,
            d1: self.a * x + self.b * xp,
            d2: self.b * x + self.c * xp,
            hess: [[self.a, self.b], [self.b, self.c]],
        }
    }
}

/// Generating function of `phi o R^{-1}` for a compactly supported `phi`, evaluated by a
/// monotone root solve for `y` and the action integral of the flow.
#[derive(Clone, Debug)]
pub struct NumericFactor {
    pub map: PlaneMap<f64>,
    pub radius: f64,
    pub direction: TwistDirection,
    pub margin: f64,
    pub tol: f64,
    asymptote: QuadraticFactor,
}

impl NumericFactor {
    fn solve(&self, x: f64, xp: f64) -> Result<(f64, FlowResult<f64>), GenfunError> {
        let s = match self.direction {
            TwistDirection::Right => 1.0,
            TwistDirection::Left => -1.0,
        };
        let root_tol = 1e-3 * self.tol * (1.0 + xp.abs());
        let fail = || GenfunError::RootBracketFailure { x, x_prime: xp };
        // initial guess from the asymptotic linear map
        let m = self.asymptote.matrix.0;
        let mut y = (xp - m[0][0] * x) / m[0][1];
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut jump = self.radius.max(1.0);
        for _ in 0..100 {
            let r = self.map.apply_full(PlanePoint::new(x, y))?;
            let f = r.point.x - xp;
            if f.abs() <= root_tol {
                return Ok((y, r));
            }
            if f * s > 0.0 {
                hi = hi.min(y);
            } else {
                lo = lo.max(y);
            }
            let b = r.jacobian.0[0][1];
            let newton = y - f / b;
            let next = if b * s > 0.0 && newton > lo && newton < hi {
                newton
            } else if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                jump *= 2.0;
                if f * s > 0.0 {
                    y - jump
                } else {
                    y + jump
                }
            };
            if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) {
                return Ok((y, r));
            }
            y = next;
            if !y.is_finite() {
                return Err(fail());
            }
        }
        Err(fail())
    }

    fn outside(&self, x: f64, xp: f64) -> bool {
        let m = self.asymptote.matrix.0;
        let y = (xp - m[0][0] * x) / m[0][1];
        x.hypot(y) >= self.radius
    }

    pub fn eval(&self, x: f64, xp: f64) -> Result<FactorEval, GenfunError> {
        if self.outside(x, xp) {
            return Ok(self.asymptote.eval(x, xp));
        }
        let (y, r) = self.solve(x, xp)?;
        let [[a, b], [_, d]] = r.jacobian.0;
        Ok(FactorEval {
            // (q0, p0) = R^{-1}(x, y) = (-y, x), h = q0 p0 + action
            value: -y * x + r.action,
            d1: -y,
            d2: r.point.y,
            hess: [[a / b, -1.0 / b], [-1.0 / b, d / b]],
        })
    }

    /// `y' = d2 h(x, s)` along a vertical segment, minus its asymptotic value.
    fn vertical_integrand(&self, x: f64, s: f64) -> Result<f64, GenfunError> {
        Ok(self.eval(x, s)?.d2 - self.asymptote.eval(x, s).d2)
    }

    fn horizontal_integrand(&self, s: f64, xp: f64) -> Result<f64, GenfunError> {
        Ok(self.eval(s, xp)?.d1 - self.asymptote.eval(s, xp).d1)
    }

    /// Independent evaluation of `h` by Gauss-Kronrod quadrature of `-y dx + y' dx'` from
    /// the anchor `(0, +-2 radius)`, horizontally then vertically.
    pub fn value_by_quadrature(&self, x: f64, xp: f64, tol: f64) -> Result<f64, GenfunError> {
        let anchor = if xp >= 0.0 { 2.0 } else { -2.0 } * self.radius;
        // horizontal leg stays outside the support: h(x, anchor) is the asymptote there
        let base = self.asymptote.eval(x, xp).value;
        if x.abs() >= self.radius {
            return Ok(base);
        }
        let c = (self.radius * self.radius - x * x).sqrt();
        let (lo, hi) = if anchor > xp {
            (xp, anchor)
        } else {
            (anchor, xp)
        };
        let (a, b) = (lo.max(-c), hi.min(c));
        if a >= b {
            return Ok(base);
        }
        let sign = if anchor > xp { -1.0 } else { 1.0 };
        let integral = adaptive_gk(|s| self.vertical_integrand(x, s), a, b, tol, 0)?;
        Ok(base + sign * integral)
    }

    /// Circulation of `-y dx + y' dx'` around the boundary of `rect`.
    pub fn circulation(&self, rect: &Rect<f64>, tol: f64) -> Result<f64, GenfunError> {
        // the asymptotic part is exact, so only the deviation is integrated
        let bottom = adaptive_gk(
            |s| self.horizontal_integrand(s, rect.y_min),
            rect.x_min,
            rect.x_max,
            tol,
            0,
        )?;
        let right = adaptive_gk(
            |s| self.vertical_integrand(rect.x_max, s),
            rect.y_min,
            rect.y_max,
            tol,
            0,
        )?;
        let top = adaptive_gk(
            |s| self.horizontal_integrand(s, rect.y_max),
            rect.x_min,
            rect.x_max,
            tol,
            0,
        )?;
        let left = adaptive_gk(
            |s| self.vertical_integrand(rect.x_min, s),
            rect.y_min,
            rect.y_max,
            tol,
            0,
        )?;
        Ok(bottom + right - top - left)
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Adaptive Gauss-Kronrod 7/15 quadrature with interval bisection.
pub fn adaptive_gk<F>(mut f: F, a: f64, b: f64, tol: f64, depth: usize) -> Result<f64, GenfunError>
where
    F: FnMut(f64) -> Result<f64, GenfunError>,
{
    fn rule<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), GenfunError>
    where
        F: FnMut(f64) -> Result<f64, GenfunError>,
    {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c)?;
        let mut k = WGK[7] * fc;
        let mut g = WG[3] * fc;
        for j in 0..7 {
            let dx = h * XGK[j];
            let s = f(c - dx)? + f(c + dx)?;
            k += WGK[j] * s;
            if j % 2 == 1 {
                g += WG[j / 2] * s;
            }
        }
        Ok((k * h, (k - g).abs() * h))
    }
    fn recurse<F>(f: &mut F, a: f64, b: f64, tol: f64, depth: usize) -> Result<f64, GenfunError>
    where
        F: FnMut(f64) -> Result<f64, GenfunError>,
    {
        let (k, err) = rule(f, a, b)?;
        if err <= tol || depth >= 30 {
            return Ok(k);
        }
        let m = 0.5 * (a + b);
        Ok(recurse(f, a, m, 0.5 * tol, depth + 1)? + recurse(f, m, b, 0.5 * tol, depth + 1)?)
    }
    recurse(&mut f, a, b, tol, depth)
}

/// One factor of a twist generating function.
#[derive(Clone, Debug)]
pub enum FactorGF {
    Quadratic(FactorKind, QuadraticFactor),
    Numeric(NumericFactor),
}

impl FactorGF {
    pub fn rotation() -> Self {
        Self::from_linear(PlaneMap::<f64>::rotation().linear_part()).expect("R is twist")
    }

    pub fn inverse_rotation() -> Self {
        Self::from_linear(PlaneMap::<f64>::inverse_rotation().linear_part()).expect("twist")
    }

    pub fn from_linear(m: Mat2<f64>) -> Result<Self, GenfunError> {
        let q = QuadraticFactor::from_linear(m)?;
        let kind = if m == PlaneMap::<f64>::rotation().linear_part() {
            FactorKind::ClosedFormRotation
        } else if m == PlaneMap::<f64>::inverse_rotation().linear_part() {
            FactorKind::ClosedFormInverseRotation
        } else {
            FactorKind::ClosedFormQuadratic
        };
        Ok(Self::Quadratic(kind, q))
    }

    pub fn kind(&self) -> FactorKind {
        match self {
            Self::Quadratic(k, _) => *k,
            Self::Numeric(_) => FactorKind::Numeric,
        }
    }

    pub fn eval(&self, x: f64, xp: f64) -> Result<FactorEval, GenfunError> {
        match self {
            Self::Quadratic(_, q) => Ok(q.eval(x, xp)),
            Self::Numeric(n) => n.eval(x, xp),
        }
    }

    /// The map this function generates.
    pub fn forward(&self, p: PlanePoint<f64>) -> Result<PlanePoint<f64>, GenfunError> {
        match self {
            Self::Quadratic(_, q) => Ok(q.matrix.apply(p)),
            Self::Numeric(n) => Ok(n.map.apply(p)?),
        }
    }

    /// The closed-form quadratic it equals outside `support_radius`.
    pub fn asymptote(&self) -> QuadraticFactor {
        match self {
            Self::Quadratic(_, q) => *q,
            Self::Numeric(n) => n.asymptote,
        }
    }

    pub fn support_radius(&self) -> Option<f64> {
        match self {
            Self::Quadratic(..) => None,
            Self::Numeric(n) => Some(n.radius),
        }
    }
}

/// Settings for [`factor_gf`].
#[derive(Clone, Copy, Debug)]
pub struct FactorOptions {
    pub tol: f64,
    /// Random rectangles on which closedness is verified at construction.
    pub closedness_checks: usize,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            closedness_checks: 0,
        }
    }
}

/// Builds the generating function of a certified twist map.
pub fn factor_gf(
    map: &PlaneMap<f64>,
    cert: &TwistCertificate<f64>,
    rect: &Rect<f64>,
    opts: &FactorOptions,
) -> Result<FactorGF, GenfunError> {
    if let PlaneMap::Linear(m) = map {
        return FactorGF::from_linear(*m);
    }
    let linear = map.linear_part();
    if linear != PlaneMap::<f64>::inverse_rotation().linear_part() {
        return Err(GenfunError::UnsupportedFactor);
    }
    let radius = map.support_radius().ok_or(GenfunError::UnsupportedFactor)?;
    let factor = NumericFactor {
        map: map.clone(),
        radius,
        direction: cert.direction,
        margin: cert.margin,
        tol: opts.tol,
        asymptote: QuadraticFactor::from_linear(linear)?,
    };
    for k in 0..opts.closedness_checks {
        let u = (k as f64 + 0.5) / opts.closedness_checks as f64;
        let w = rect.x_max - rect.x_min;
        let hgt = rect.y_max - rect.y_min;
        let r = Rect {
            x_min: rect.x_min + 0.1 * w * u,
            x_max: rect.x_max - 0.3 * w * (1.0 - u),
            y_min: rect.y_min + 0.25 * hgt * (1.0 - u),
            y_max: rect.y_max - 0.05 * hgt * u,
        };
        let residual = factor.circulation(&r, opts.tol)?.abs();
        if residual > 100.0 * opts.tol {
            return Err(GenfunError::ClosednessViolation { residual });
        }
    }
    Ok(FactorGF::Numeric(factor))
}
