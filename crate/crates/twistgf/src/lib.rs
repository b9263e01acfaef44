//! Twist generating functions for compactly supported Hamiltonian diffeomorphisms of the
//! plane, the linking function on their Morse complexes, and braids of fixed points.
//!
//! The planar layer (`plane_dynamics`, `linking_braids`) is generic over [`Scalar`]; the
//! generating-function layers work in `f64`.

// `!(x > 0.0)` style checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod continuation;
pub mod genfun;
pub mod linking_braids;
pub mod morse;
pub mod plane_dynamics;

/// Floating-point scalar accepted by the generic planar layer.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + std::fmt::Debug + Send + Sync + 'static
{
    /// Converts an `f64` constant.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Hamiltonian = plane_dynamics::Hamiltonian<f64>;
pub type Hamiltonian32 = plane_dynamics::Hamiltonian<f32>;
pub type PlaneMap = plane_dynamics::PlaneMap<f64>;
pub type PlaneMap32 = plane_dynamics::PlaneMap<f32>;
pub type PlanePoint = plane_dynamics::PlanePoint<f64>;
pub type PlanePoint32 = plane_dynamics::PlanePoint<f32>;
pub type Mat2 = plane_dynamics::Mat2<f64>;
pub type PlLoop = linking_braids::PlLoop<f64>;
pub type PlLoop32 = linking_braids::PlLoop<f32>;
