//! Anisotropic p-capacity toolkit.
//!
//! The crate evaluates smooth Minkowski norms and their duals, Wulff-ball
//! geometry, boundary curvature of star-shaped domains, and solves the
//! exterior anisotropic p-Laplace capacitary problem on an annular grid.
//! On top of the solver sit capacity estimates, the level-set functional
//! `Φ_{p,q}`, a harness for Minkowski-type inequalities, and pointwise
//! checks of the algebraic identities behind the monotonicity argument.
//!
//! All numerical code is generic over the scalar type (`f32` or `f64`) and
//! over the ambient dimension through a const parameter. The aliases at the
//! crate root fix the common `f64`, three-dimensional case.

pub mod domains;
pub mod error;
pub mod functionals;
pub mod identities;
pub mod linalg;
pub mod norms;
pub mod scalar;
pub mod solver;
pub mod sphere;
pub mod wulff;

pub use error::{Error, Result};
pub use scalar::Real;

/// Three-dimensional double-precision norm evaluator.
pub type Norm3 = norms::Norm<f64, 3>;
/// Two-dimensional double-precision norm evaluator.
pub type Norm2 = norms::Norm<f64, 2>;
/// Three-dimensional double-precision norm parameters.
pub type NormSpec3 = norms::NormSpec<f64, 3>;
/// Three-dimensional double-precision star-shaped domain.
pub type StarDomain3 = domains::StarDomain<f64, 3>;
/// Two-dimensional double-precision star-shaped domain.
pub type StarDomain2 = domains::StarDomain<f64, 2>;
/// Three-dimensional double-precision annular grid.
pub type AnnularGrid3 = solver::AnnularGrid<f64, 3>;
/// Three-dimensional double-precision potential field.
pub type PotentialField3 = solver::PotentialField<f64, 3>;
/// Single-precision three-dimensional norm evaluator.
pub type Norm3f = norms::Norm<f32, 3>;
