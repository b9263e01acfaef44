//! Adaptive Dormand-Prince 5(4) integrator on flat state slices.

use crate::Scalar;

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OdeError {
    #[error("step size underflow")]
    StepUnderflow,
    #[error("step budget exhausted")]
    StepBudget,
    #[error("non-finite state")]
    NonFinite,
}

/// Whether the observer wants the integration to go on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// An accepted step, with Hermite data for dense output.
pub struct Step<'a, T> {
    pub t0: T,
    pub t1: T,
    pub y0: &'a [T],
    pub y1: &'a [T],
    pub f0: &'a [T],
    pub f1: &'a [T],
}

impl<T: Scalar> Step<'_, T> {
    /// Cubic Hermite interpolation of component `i` at time `t` inside the step.
    pub fn interpolate(&self, i: usize, t: T) -> T {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let one = T::one();
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = (one + two * s) * (one - s) * (one - s);
        let h10 = s * (one - s) * (one - s);
        let h01 = s * s * (three - two * s);
        let h11 = s * s * (s - one);
        h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i]
    }

    pub fn interpolate_all(&self, t: T, out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.interpolate(i, t);
        }
    }
}

/// Integrator settings. `tol` is used both as absolute and relative tolerance.
#[derive(Clone, Copy, Debug)]
pub struct Dopri<T> {
    pub tol: T,
    pub max_steps: usize,
    pub initial_step: Option<T>,
    pub max_step: Option<T>,
}

impl<T: Scalar> Dopri<T> {
    pub fn new(tol: T) -> Self {
        Self {
            tol,
            max_steps: 200_000,
            initial_step: None,
            max_step: None,
        }
    }

    pub fn with_max_step(mut self, h: T) -> Self {
        self.max_step = Some(h);
        self
    }

    pub fn with_max_steps(mut self, n: usize) -> Self {
        self.max_steps = n;
        self
    }

    /// Integrates from `t0` to `t1` (either direction). Returns the time reached (earlier
    /// than `t1` if the observer stopped) and the state there.
    pub fn solve<F, O>(
        &self,
        mut rhs: F,
        t0: T,
        y0: &[T],
        t1: T,
        mut observe: O,
    ) -> Result<(T, Vec<T>), OdeError>
    where
        F: FnMut(T, &[T], &mut [T]),
        O: FnMut(&Step<'_, T>) -> Control,
    {
        let n = y0.len();
        let mut y = y0.to_vec();
        if t1 == t0 {
            return Ok((t0, y));
        }
        let dir = if t1 > t0 { T::one() } else { -T::one() };
        let span = (t1 - t0).abs();
        let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
        let mut ytmp = vec![T::zero(); n];
        let mut ynew = vec![T::zero(); n];
        rhs(t0, &y, &mut k[0]);
        let mut t = t0;
        let mut h = self.initial_step.unwrap_or_else(|| {
            let fnorm = k[0].iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let guess = if fnorm > T::zero() {
                T::lit(0.01) * (T::one() + y.iter().fold(T::zero(), |m, v| m.max(v.abs()))) / fnorm
            } else {
                span
            };
            guess.min(span)
        });
        if let Some(hm) = self.max_step {
            h = h.min(hm);
        }
        let h_min = span * T::lit(1e-14);
        let fifth = T::lit(0.2);
        let mut steps = 0usize;
        loop {
            if steps >= self.max_steps {
                return Err(OdeError::StepBudget);
            }
            steps += 1;
            let remaining = (t1 - t) * dir;
            let last = h >= remaining;
            let hs = if last { remaining } else { h };
            let hd = hs * dir;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc = acc + hd * T::lit(a) * kj[i];
                        }
                    }
                    ytmp[i] = acc;
                }
                let ts = t + hd * T::lit(C[s]);
                rhs(ts, &ytmp, &mut k[s]);
            }
            // the last stage is evaluated at the 5th-order solution (FSAL)
            ynew.copy_from_slice(&ytmp);
            let mut err = T::zero();
            for i in 0..n {
                let mut e = T::zero();
                for (j, kj) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        e = e + T::lit(E[j]) * kj[i];
                    }
                }
                let e = hd * e;
                let sc = self.tol + self.tol * y[i].abs().max(ynew[i].abs());
                let r = e / sc;
                err = err + r * r;
            }
            err = (err / T::from_usize(n.max(1)).unwrap()).sqrt();
            if !err.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
                h = h * T::lit(0.25);
                if h < h_min {
                    return Err(OdeError::NonFinite);
                }
                continue;
            }
            if err <= T::one() {
                let tn = if last { t1 } else { t + hd };
                let control = {
                    let step = Step {
                        t0: t,
                        t1: tn,
                        y0: &y,
                        y1: &ynew,
                        f0: &k[0],
                        f1: &k[6],
                    };
                    observe(&step)
                };
                t = tn;
                std::mem::swap(&mut y, &mut ynew);
                let (first, rest) = k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                if last || control == Control::Stop {
                    return Ok((t, y));
                }
                let fac = if err == T::zero() {
                    T::lit(5.0)
                } else {
                    (T::lit(0.9) * err.powf(-fifth))
                        .min(T::lit(5.0))
                        .max(T::lit(0.2))
                };
                h = hs * fac;
            } else {
                let fac = (T::lit(0.9) * err.powf(-fifth)).max(T::lit(0.2));
                h = hs * fac;
            }
            if let Some(hm) = self.max_step {
                h = h.min(hm);
            }
            if h < h_min {
                return Err(OdeError::StepUnderflow);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let d = Dopri::new(1e-10);
        let (t, y) = d
            .solve(
                |_, y, f| f[0] = -y[0],
                0.0,
                &[1.0],
                2.0,
                |_| Control::Continue,
            )
            .unwrap();
        assert_eq!(t, 2.0);
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn backward_integration() {
        let d = Dopri::new(1e-11);
        let (_, y) = d
            .solve(
                |_, y, f| {
                    f[0] = y[1];
                    f[1] = -y[0];
                },
                1.0,
                &[1.0f64.cos(), -1.0f64.sin()],
                0.0,
                |_| Control::Continue,
            )
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9);
    }

    #[test]
    fn f32_harmonic_oscillator() {
        let d = Dopri::new(1e-5f32);
        let (_, y) = d
            .solve(
                |_, y, f| {
                    f[0] = y[1];
                    f[1] = -y[0];
                },
                0.0f32,
                &[1.0, 0.0],
                std::f32::consts::PI,
                |_| Control::Continue,
            )
            .unwrap();
        assert!((y[0] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn dense_output_is_accurate() {
        let d = Dopri::new(1e-10);
        let mut worst = 0.0f64;
        d.solve(
            |_, y, f| f[0] = y[0],
            0.0,
            &[1.0],
            1.0,
            |s| {
                let tm: f64 = 0.5 * (s.t0 + s.t1);
                worst = worst.max((s.interpolate(0, tm) - tm.exp()).abs());
                Control::Continue
            },
        )
        .unwrap();
        assert!(worst < 1e-6);
    }
}
