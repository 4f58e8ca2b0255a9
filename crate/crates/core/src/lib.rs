//! Lattice points near Heisenberg gauge spheres.
//!
//! The crate is organised around four pieces:
//!
//! * [`heisenberg`]: the group law, parabolic dilations, the gauge norms
//!   `‖x‖_α = (|x̲|^α + C_α|x̄|^{α/2})^{1/α}` and the defining function
//!   `φ_α(x, y) = ‖x * y⁻¹‖_α`, generic over the scalar type.
//! * [`shell`]: exact counting of lattice points with `|φ_α(u, v) − Q| ≤ δ`,
//!   averaged over Heisenberg translations, with a brute-force oracle and a
//!   slice counter that must agree with it bit for bit.
//! * [`monge_ampere`]: exact construction of the bordered mixed Hessian of
//!   `Φ = φ_α^α`, its factorisation through the one-variable matrix `N(Ψ)`,
//!   and a sampler that checks the rank of that matrix on level sets.
//! * [`measure`]: the rescaled thickened lattice, the smoothed probability
//!   measure on it and Monte-Carlo estimates of its Riesz energies.
//!
//! Exact arithmetic uses [`Rational`] (arbitrary precision), floating
//! checks use `f64`; most geometric code is written once over [`Scalar`].

pub mod error;
pub mod experiment;
pub mod heisenberg;
pub mod linalg;
pub mod measure;
pub mod monge_ampere;
pub mod rng;
pub mod scalar;
pub mod shell;

pub use error::{Error, Result};
pub use heisenberg::{GaugeParams, HPoint};
pub use linalg::Matrix;
pub use scalar::Scalar;

/// Arbitrary precision rational numbers.
pub type Rational = num_rational::BigRational;

/// Point with exact rational coordinates.
pub type RatPoint = HPoint<Rational>;
/// Point with `f64` coordinates.
pub type FloatPoint = HPoint<f64>;
/// Point with `f32` coordinates.
pub type Float32Point = HPoint<f32>;
/// Lattice point.
pub type IntPoint = HPoint<i64>;

/// Exact rational matrix.
pub type RatMatrix = Matrix<Rational>;
/// Floating matrix.
pub type FloatMatrix = Matrix<f64>;
