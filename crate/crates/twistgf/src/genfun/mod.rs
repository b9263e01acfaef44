//! Twist generating functions: single factors, the assembled cyclic sum, its critical
//! points and its quadratic-at-infinity normal form.

mod factor;
mod gauge;

pub use factor::{
    adaptive_gk, factor_gf, FactorEval, FactorGF, FactorKind, FactorOptions, NumericFactor,
    QuadraticFactor,
};
pub use gauge::{
    gauge_to_gfqi, gauge_to_gfqi_dim, h_infinity_gram, GFQIForm, Gauged, GramMatrix, Shifted,
    Stabilized,
};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::plane_dynamics::{Decomposition, DynamicsError, PlanePoint, Rect};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GenfunError {
    #[error("map is not a twist map")]
    NotTwist,
    #[error("factor is neither linear nor a compactly supported flow after R^-1")]
    UnsupportedFactor,
    #[error("monotone root solve failed to bracket at x = {x}, x' = {x_prime}")]
    RootBracketFailure { x: f64, x_prime: f64 },
    #[error("closedness residual {residual} exceeds tolerance")]
    ClosednessViolation { residual: f64 },
    #[error("expected an even number of at least 4 factors, got {len}")]
    ArityMismatch { len: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gauge matrix is singular")]
    SingularGauge,
    #[error("stabilizing quadratic form has a zero coefficient")]
    DegenerateQuadratic,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Value, gradient and Hessian at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct GfEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// A smooth function on `R^dim` with second derivatives.
pub trait GeneratingFunction {
    fn dim(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> Result<GfEval, GenfunError>;

    fn value(&self, x: &DVector<f64>) -> Result<f64, GenfunError> {
        Ok(self.eval(x)?.value)
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, GenfunError> {
        Ok(self.eval(x)?.grad)
    }
}

/// `h(x) = sum_i h_i(x_i, x_{i+1})` with `x_{dim} = x_0`.
#[derive(Clone, Debug)]
pub struct TwistGF {
    factors: Vec<FactorGF>,
}

/// Builds the cyclic sum of the factors.
pub fn assemble(factors: Vec<FactorGF>) -> Result<TwistGF, GenfunError> {
    if factors.len() < 4 || !factors.len().is_multiple_of(2) {
        return Err(GenfunError::ArityMismatch { len: factors.len() });
    }
    Ok(TwistGF { factors })
}

impl TwistGF {
    /// Generating function of a twist decomposition.
    pub fn from_decomposition(
        dec: &Decomposition<f64>,
        opts: &FactorOptions,
    ) -> Result<Self, GenfunError> {
        let rect = Rect::square(dec.hamiltonian.support_radius());
        let factors = dec
            .factors
            .iter()
            .zip(&dec.certificates)
            .map(|(m, c)| factor_gf(m, c, &rect, opts))
            .collect::<Result<Vec<_>, _>>()?;
        assemble(factors)
    }

    /// The identity diffeomorphism written with `len` factors.
    pub fn h_infinity(len: usize) -> Result<Self, GenfunError> {
        assemble(
            (0..len)
                .map(|i| {
                    if i % 2 == 0 {
                        FactorGF::rotation()
                    } else {
                        FactorGF::inverse_rotation()
                    }
                })
                .collect(),
        )
    }

    pub fn factors(&self) -> &[FactorGF] {
        &self.factors
    }

    /// Largest support radius among numeric factors.
    pub fn support_radius(&self) -> f64 {
        self.factors
            .iter()
            .filter_map(|f| f.support_radius())
            .fold(0.0, f64::max)
    }

    /// Value by direct summation of the factors, without derivatives.
    pub fn value_by_summation(&self, x: &DVector<f64>) -> Result<f64, GenfunError> {
        self.check_dim(x)?;
        let d = self.dim();
        let mut v = 0.0;
        for (i, f) in self.factors.iter().enumerate() {
            v += f.eval(x[i], x[(i + 1) % d])?.value;
        }
        Ok(v)
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), GenfunError> {
        if x.len() != self.dim() {
            return Err(GenfunError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// The diffeomorphism `Phi_{last} o ... o Phi_0` generated by the factors.
    pub fn diffeomorphism(&self, p: PlanePoint<f64>) -> Result<PlanePoint<f64>, GenfunError> {
        let mut q = p;
        for f in &self.factors {
            q = f.forward(q)?;
        }
        Ok(q)
    }

    /// Critical point of `h` attached to a fixed point: first coordinates along its orbit
    /// under the successive factors.
    pub fn orbit_coords(&self, p: PlanePoint<f64>) -> Result<DVector<f64>, GenfunError> {
        let mut q = p;
        let mut out = DVector::zeros(self.dim());
        for (i, f) in self.factors.iter().enumerate() {
            out[i] = q.x;
            q = f.forward(q)?;
        }
        Ok(out)
    }

    /// Fixed point `(x_0, y_0)` read off a critical point, `y_0 = -d1 h_0(x_0, x_1)`.
    pub fn plane_point(&self, x: &DVector<f64>) -> Result<PlanePoint<f64>, GenfunError> {
        let e = self.factors[0].eval(x[0], x[1])?;
        Ok(PlanePoint::new(x[0], e.g()))
    }
}

impl GeneratingFunction for TwistGF {
    fn dim(&self) -> usize {
        self.factors.len()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<GfEval, GenfunError> {
        self.check_dim(x)?;
        let d = self.dim();
        let mut value = 0.0;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for (i, f) in self.factors.iter().enumerate() {
            let j = (i + 1) % d;
            let e = f.eval(x[i], x[j])?;
            value += e.value;
            grad[i] += e.d1;
            grad[j] += e.d2;
            hess[(i, i)] += e.hess[0][0];
            hess[(i, j)] += e.hess[0][1];
            hess[(j, i)] += e.hess[1][0];
            hess[(j, j)] += e.hess[1][1];
        }
        Ok(GfEval { value, grad, hess })
    }
}

/// A critical point of a twist generating function and the fixed point it encodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub coords: Vec<f64>,
    pub action: f64,
    pub morse_index: usize,
    pub cz_index: i64,
    pub plane_point: [f64; 2],
    /// `|phi(p) - p|` at the plane point.
    pub residual: f64,
    pub gradient_norm: f64,
    /// Smallest absolute Hessian eigenvalue.
    pub min_abs_eigenvalue: f64,
    pub degenerate: bool,
}

impl CriticalPoint {
    pub fn coords_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coords)
    }

    pub fn plane(&self) -> PlanePoint<f64> {
        PlanePoint::new(self.plane_point[0], self.plane_point[1])
    }
}

/// Settings for [`critical_points`].
#[derive(Clone, Copy, Debug)]
pub struct CriticalSearch {
    /// Seeds per side of the plane grid over the support square.
    pub grid: usize,
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Hessian eigenvalues below this are treated as zero.
    pub degeneracy_tol: f64,
    /// Restricts seeds to this plane disk instead of the support disk.
    pub seed_radius: Option<f64>,
}

impl Default for CriticalSearch {
    fn default() -> Self {
        Self {
            grid: 16,
            newton_tol: 1e-9,
            max_iter: 60,
            degeneracy_tol: 1e-6,
            seed_radius: None,
        }
    }
}

/// Critical points found by [`critical_points`], plus diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalSet {
    /// Nondegenerate points followed by at most one degenerate representative, each
    /// block sorted lexicographically by coordinates.
    pub points: Vec<CriticalPoint>,
    /// Degenerate points collapsed into the representative.
    pub degenerate_count: usize,
    pub dropped_seeds: usize,
    pub seeds: usize,
}

impl CriticalSet {
    pub fn nondegenerate(&self) -> impl Iterator<Item = &CriticalPoint> {
        self.points.iter().filter(|c| !c.degenerate)
    }
}

/// Damped Newton iteration on `grad h = 0`.
pub fn newton_critical<S: GeneratingFunction + ?Sized>(
    s: &S,
    start: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Option<(DVector<f64>, GfEval)>, GenfunError> {
    let mut x = start;
    let mut e = s.eval(&x)?;
    for _ in 0..max_iter {
        let g = e.grad.norm();
        if g <= tol {
            return Ok(Some((x, e)));
        }
        let step = match e.hess.clone().lu().solve(&e.grad) {
            Some(v) if v.iter().all(|c| c.is_finite()) => v,
            _ => return Ok(None),
        };
        let mut t = 1.0;
        loop {
            let cand = &x - &step * t;
            let ce = s.eval(&cand)?;
            if ce.grad.norm() < g || t < 1e-4 {
                x = cand;
                e = ce;
                break;
            }
            t *= 0.5;
        }
    }
    Ok((e.grad.norm() <= tol).then_some((x, e)))
}

fn lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.total_cmp(v) {
            std::cmp::Ordering::Equal => {}
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Hessian eigenvalues, ascending.
pub fn sorted_eigenvalues(hess: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hess.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Newton search for critical points seeded by the orbits of a plane grid over the
/// support disk. Degenerate points (exterior fixed points) are reported by one
/// representative, the one of smallest norm.
pub fn critical_points(h: &TwistGF, opts: &CriticalSearch) -> Result<CriticalSet, GenfunError> {
    let sigma = gauge_to_gfqi(h)?.sigma as i64;
    let r = opts
        .seed_radius
        .unwrap_or_else(|| h.support_radius().max(1.0));
    let mut found: Vec<CriticalPoint> = Vec::new();
    let mut degenerate: Vec<CriticalPoint> = Vec::new();
    let mut dropped = 0;
    let mut seeds = 0;
    let dedup = 100.0 * opts.newton_tol;
    let grid = Rect::square(r).grid(opts.grid.max(2));
    for p in std::iter::once(PlanePoint::new(0.0, 0.0)).chain(grid) {
        if p.norm() >= r {
            continue;
        }
        seeds += 1;
        let start = h.orbit_coords(p)?;
        let Some((x, e)) = newton_critical(h, start, opts.newton_tol, opts.max_iter)? else {
            dropped += 1;
            continue;
        };
        let close = |c: &CriticalPoint| {
            c.coords
                .iter()
                .zip(x.iter())
                .all(|(a, b)| (a - b).abs() <= dedup.max(1e-7))
        };
        if found.iter().any(close) || degenerate.iter().any(close) {
            continue;
        }
        let ev = sorted_eigenvalues(&e.hess);
        let min_abs = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let morse_index = ev.iter().filter(|v| **v < 0.0).count();
        let pp = h.plane_point(&x)?;
        let img = h.diffeomorphism(pp)?;
        let cp = CriticalPoint {
            coords: x.iter().copied().collect(),
            action: e.value,
            morse_index,
            cz_index: morse_index as i64 - sigma - 1,
            plane_point: [pp.x, pp.y],
            residual: img.dist(&pp),
            gradient_norm: e.grad.norm(),
            min_abs_eigenvalue: min_abs,
            degenerate: min_abs < opts.degeneracy_tol,
        };
        if cp.degenerate {
            degenerate.push(cp);
        } else {
            found.push(cp);
        }
    }
    found.sort_by(|a, b| lex(&a.coords, &b.coords));
    let degenerate_count = degenerate.len();
    let norm = |c: &CriticalPoint| c.coords.iter().map(|v| v * v).sum::<f64>();
    if let Some(rep) = degenerate.into_iter().min_by(|a, b| {
        norm(a)
            .total_cmp(&norm(b))
            .then_with(|| lex(&a.coords, &b.coords))
    }) {
        found.push(rep);
    }
    Ok(CriticalSet {
        points: found,
        degenerate_count,
        dropped_seeds: dropped,
        seeds,
    })
}
