//! Scalar types, automatic differentiation and 3-D / spatial algebra.

pub mod diff;
pub mod scalar;
pub mod spatial;
pub mod tape;

pub use diff::{finite_difference_gradient, gradient};
pub use scalar::Real;
pub use spatial::{Mat3, Mat6, Quat, SVec, SpatialInertia, Vec3, Xform};
pub use tape::{record_gradient, Graph, Recording, Var};

#[cfg(test)]
mod tests;
