//! The quadratic form at infinity, its explicit diagonalizing gauge and the elementary
//! operations on generating functions.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{FactorKind, GeneratingFunction, GenfunError, GfEval, TwistGF};

/// Integer Hessian of `h_inf(x) = sum_i (-1)^(i+1) x_i x_{i+1}` (cyclic) with its kernel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GramMatrix {
    pub entries: Vec<Vec<i64>>,
    /// `sum_i e_{2i}` and `sum_i e_{2i+1}`.
    pub kernel: Vec<Vec<i64>>,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn apply(&self, v: &[i64]) -> Vec<i64> {
        self.entries
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| self.entries[i][j] == self.entries[j][i]))
    }

    /// Exact rank by fraction-free Gaussian elimination.
    pub fn rank(&self) -> usize {
        let mut m: Vec<Vec<i128>> = self
            .entries
            .iter()
            .map(|r| r.iter().map(|v| *v as i128).collect())
            .collect();
        let (rows, cols) = (m.len(), m.first().map_or(0, |r| r.len()));
        let mut rank = 0;
        let mut prev = 1i128;
        for c in 0..cols {
            let Some(p) = (rank..rows).find(|&r| m[r][c] != 0) else {
                continue;
            };
            m.swap(rank, p);
            for r in rank + 1..rows {
                for k in c + 1..cols {
                    m[r][k] = (m[rank][c] * m[r][k] - m[r][c] * m[rank][k]) / prev;
                }
                m[r][c] = 0;
            }
            prev = m[rank][c];
            rank += 1;
            if rank == rows {
                break;
            }
        }
        rank
    }
}

/// Gram matrix of `h_inf` in dimension `2n + 2`.
pub fn h_infinity_gram(n: usize) -> GramMatrix {
    let d = 2 * n + 2;
    let mut entries = vec![vec![0i64; d]; d];
    for i in 0..d {
        let j = (i + 1) % d;
        let s = if i % 2 == 0 { -1 } else { 1 };
        entries[i][j] = s;
        entries[j][i] = s;
    }
    let kernel = (0..2)
        .map(|p| (0..d).map(|i| i64::from(i % 2 == p)).collect())
        .collect();
    GramMatrix { entries, kernel }
}

/// Linear gauge `psi` with `h_inf(psi u) = (1/4) sum_{i=1}^{2n} (-1)^i u_i^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct GFQIForm {
    pub dim: usize,
    /// `x = psi u`.
    pub psi: DMatrix<f64>,
    /// The substitution `u = psi^{-1} x`.
    pub psi_inv: DMatrix<f64>,
    /// Coefficients of the fiber form; zero on the base coordinates `0` and `dim - 1`.
    pub fiber_diag: Vec<f64>,
    /// Number of negative squares.
    pub sigma: usize,
}

impl GFQIForm {
    /// `(1/4) sum (-1)^i u_i^2` over the fiber coordinates.
    pub fn fiber_form(&self, u: &DVector<f64>) -> f64 {
        self.fiber_diag
            .iter()
            .zip(u.iter())
            .map(|(c, v)| c * v * v)
            .sum()
    }

    pub fn gauged<S: GeneratingFunction>(&self, s: S) -> Gauged<S> {
        Gauged::new(s, self.psi.clone()).expect("psi is invertible")
    }
}

/// Builds the gauge for a generating function of dimension `2n + 2` whose factors are
/// asymptotic to alternately `-x x'` and `x x'`.
pub fn gauge_to_gfqi(h: &TwistGF) -> Result<GFQIForm, GenfunError> {
    for (i, f) in h.factors().iter().enumerate() {
        // a global linear twist factor has no asymptote to check
        if f.kind() == FactorKind::ClosedFormQuadratic {
            continue;
        }
        let q = f.asymptote();
        let expected = if i % 2 == 0 { -1.0 } else { 1.0 };
        if q.a != 0.0 || q.c != 0.0 || q.b != expected {
            return Err(GenfunError::UnsupportedFactor);
        }
    }
    let last = h.factors().len() - 1;
    if h.factors()[last].kind() != FactorKind::ClosedFormInverseRotation
        || h.factors()[last - 1].kind() != FactorKind::ClosedFormRotation
    {
        return Err(GenfunError::UnsupportedFactor);
    }
    gauge_to_gfqi_dim(h.factors().len())
}

/// The gauge in dimension `dim = 2n + 2`.
pub fn gauge_to_gfqi_dim(dim: usize) -> Result<GFQIForm, GenfunError> {
    if dim < 4 || !dim.is_multiple_of(2) {
        return Err(GenfunError::ArityMismatch { len: dim });
    }
    let n = dim / 2 - 1;
    let top = dim - 1;
    let mut sub = DMatrix::zeros(dim, dim);
    sub[(0, 0)] = 1.0;
    sub[(top, top)] = 1.0;
    for i in 0..n {
        let (a, b) = (2 * i + 1, 2 * i + 2);
        // u_{2i+1} = x_{2i+2} - x_{2i} - x_{2i+1} + x_{2n+1}
        sub[(a, b)] += 1.0;
        sub[(a, 2 * i)] -= 1.0;
        sub[(a, a)] -= 1.0;
        sub[(a, top)] += 1.0;
        // u_{2i+2} = x_{2i+2} - x_{2i} + x_{2i+1} - x_{2n+1}
        sub[(b, b)] += 1.0;
        sub[(b, 2 * i)] -= 1.0;
        sub[(b, a)] += 1.0;
        sub[(b, top)] -= 1.0;
    }
    let psi = sub
        .clone()
        .try_inverse()
        .ok_or(GenfunError::SingularGauge)?;
    let fiber_diag: Vec<f64> = (0..dim)
        .map(|i| match i {
            0 => 0.0,
            i if i == top => 0.0,
            i if i % 2 == 0 => 0.25,
            _ => -0.25,
        })
        .collect();
    let sigma = fiber_diag.iter().filter(|c| **c < 0.0).count();
    Ok(GFQIForm {
        dim,
        psi,
        psi_inv: sub,
        fiber_diag,
        sigma,
    })
}

impl<S: GeneratingFunction + ?Sized> GeneratingFunction for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<GfEval, GenfunError> {
        (**self).eval(x)
    }
}

/// `S + c`.
#[derive(Clone, Debug)]
pub struct Shifted<S> {
    pub inner: S,
    pub shift: f64,
}

impl<S: GeneratingFunction> GeneratingFunction for Shifted<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<GfEval, GenfunError> {
        let mut e = self.inner.eval(x)?;
        e.value += self.shift;
        Ok(e)
    }
}

/// `S(x) + sum_j q_j v_j^2` on `R^dim x R^k`.
#[derive(Clone, Debug)]
pub struct Stabilized<S> {
    pub inner: S,
    pub diag: Vec<f64>,
}

impl<S: GeneratingFunction> Stabilized<S> {
    pub fn new(inner: S, diag: Vec<f64>) -> Result<Self, GenfunError> {
        if diag.contains(&0.0) {
            return Err(GenfunError::DegenerateQuadratic);
        }
        Ok(Self { inner, diag })
    }

    /// Critical point of the stabilization over a critical point of `S`.
    pub fn lift(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(0, x.len()).copy_from(x);
        out
    }

    pub fn negative_squares(&self) -> usize {
        self.diag.iter().filter(|q| **q < 0.0).count()
    }
}

impl<S: GeneratingFunction> GeneratingFunction for Stabilized<S> {
    fn dim(&self) -> usize {
        self.inner.dim() + self.diag.len()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<GfEval, GenfunError> {
        let m = self.inner.dim();
        let base = DVector::from_iterator(m, x.iter().take(m).copied());
        let e = self.inner.eval(&base)?;
        let d = self.dim();
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        grad.rows_mut(0, m).copy_from(&e.grad);
        hess.view_mut((0, 0), (m, m)).copy_from(&e.hess);
        let mut value = e.value;
        for (j, q) in self.diag.iter().enumerate() {
            let v = x[m + j];
            value += q * v * v;
            grad[m + j] = 2.0 * q * v;
            hess[(m + j, m + j)] = 2.0 * q;
        }
        Ok(GfEval { value, grad, hess })
    }
}

/// `S o psi`.
#[derive(Clone, Debug)]
pub struct Gauged<S> {
    pub inner: S,
    pub psi: DMatrix<f64>,
    pub psi_inv: DMatrix<f64>,
}

impl<S: GeneratingFunction> Gauged<S> {
    pub fn new(inner: S, psi: DMatrix<f64>) -> Result<Self, GenfunError> {
        let psi_inv = psi
            .clone()
            .try_inverse()
            .ok_or(GenfunError::SingularGauge)?;
        Ok(Self {
            inner,
            psi,
            psi_inv,
        })
    }

    /// Critical point of `S o psi` over a critical point `x` of `S`.
    pub fn pull_back(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.psi_inv * x
    }
}

impl<S: GeneratingFunction> GeneratingFunction for Gauged<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, u: &DVector<f64>) -> Result<GfEval, GenfunError> {
        let e = self.inner.eval(&(&self.psi * u))?;
        Ok(GfEval {
            value: e.value,
            grad: self.psi.transpose() * e.grad,
            hess: self.psi.transpose() * e.hess * &self.psi,
        })
    }
}
