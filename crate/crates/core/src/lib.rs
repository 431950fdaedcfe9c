//! Calculus of ε-subdifferentials for suprema of convex functions and δ-normal sets to
//! sublevel sets, realised over finite-dimensional instances as executable checks.

pub mod error;
pub mod extreal;
pub mod convexfn;
pub mod geometry;
pub mod harness;
pub mod normalcone;
pub mod report;
pub mod sequential;
pub mod spectral;
pub mod subdiff;
pub mod supcalc;

pub use convexfn::ConvexFn;
pub use error::{Error, Result};
pub use extreal::ExtReal;
