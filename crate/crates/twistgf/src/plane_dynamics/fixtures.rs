//! Built-in test systems with known fixed-point structure.

use super::{FamilyId, Hamiltonian};

/// Two Gaussian wells of heights `0.12` and `0.08` at `(-0.5, 0)` and `(0.5, 0)`, cut off
/// between radii 1.5 and 2.5. Its time-one map has two elliptic fixed points near the well
/// centres and one hyperbolic point between them.
pub fn double_bump() -> Hamiltonian<f64> {
    double_bump_scaled(1.0)
}

/// [`double_bump`] with both well heights multiplied by `c`.
pub fn double_bump_scaled(c: f64) -> Hamiltonian<f64> {
    Hamiltonian::from_family(
        FamilyId::DoubleBump,
        &[0.12 * c, 0.08 * c, 0.5, 0.5, 1.5, 2.5],
        2.5,
    )
    .expect("valid fixture")
}

/// [`double_bump`] seen in a frame making `turns` full turns, so that its fixed points
/// form a full-twist braid.
pub fn twisted_double_bump(turns: f64) -> Hamiltonian<f64> {
    Hamiltonian::from_family(
        FamilyId::DoubleBump,
        &[0.12, 0.08, 0.5, 0.5, 1.5, 2.5, turns, 2.5, 5.0],
        5.0,
    )
    .expect("valid fixture")
}

/// `(eps/2) rho(r) r^2` with plateau radius 1 and support radius 2.
pub fn small_rotation(eps: f64) -> Hamiltonian<f64> {
    Hamiltonian::scaled_rotation(eps, 1.0, 2.0)
}
